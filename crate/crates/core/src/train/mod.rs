//! Training, evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod model;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{LrScales, TrainingConfig};
pub use eval::{evaluate, frame_metrics, masked_psnr, masked_ssim, EvalReport, FrameMetrics};
pub use model::{Model, Motion, MotionTrace, Rigid};
pub use trainer::{format_log, frame_losses, initial_motion, initial_scene, LogRow, Optimizer, Trainer, LOG_HEADER};
