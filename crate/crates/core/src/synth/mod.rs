//! Procedural dynamic scenes with exact ground truth.

pub mod dataset;
pub mod oracle;
pub mod spec;
pub mod world;

pub use dataset::{load_dataset, save_dataset};
pub use oracle::{oracle_render, oracle_render_labeled, OracleOutput};
pub use spec::{BackgroundSpec, CameraPath, ObjectSpec, SceneSpec};
pub use world::{generate_dataset, labels_from_weights, make_codebook, Blob, Dataset, Frame, Split, World};
