//! `coda4dgs`: synthesize, train, render, evaluate, segment, edit and
//! visualize 4D Gaussian scenes.
//!
//! Exit codes: 0 success, 2 input error, 3 checkpoint error, 4 semantic error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coda4dgs_core::edit::{pca_image, read_vector, run_script, segment, EditScript, Query};
use coda4dgs_core::render::image::{write_ppm, write_raw};
use coda4dgs_core::render::{RasterSettings, RenderOutput};
use coda4dgs_core::synth::{generate_dataset, load_dataset, make_codebook, save_dataset, SceneSpec, Split, World};
use coda4dgs_core::train::{evaluate, load_checkpoint, save_checkpoint, Checkpoint, Trainer, TrainingConfig};
use coda4dgs_core::Error;

#[derive(Parser)]
#[command(name = "coda4dgs", version, about = "Dynamic Gaussian splatting with deformation compensation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Train a model on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Render rgb, feature, depth and accumulation images at time t.
    Render(RenderArgs),
    /// Print per-frame metrics on held-out frames as CSV.
    Eval(EvalArgs),
    /// Print the ids of Gaussians matching a feature query.
    Segment(SegmentArgs),
    /// Run an edit script on a checkpoint.
    Edit(EditArgs),
    /// Write a principal-component visualization of the feature image.
    Pca(PcaArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description; the bundled emergent-object scene when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Training configuration; defaults when omitted (or the checkpoint's when resuming).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to resume from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `reconstruction` (all frames) or `nvs` (every tenth frame held out).
    #[arg(long, default_value = "reconstruction")]
    split: Split,
    /// Also write the loss log (CSV) here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ViewArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Time in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Camera yaw offset in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw: f64,
    /// Camera pitch offset in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pitch: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    view: ViewArgs,
    /// Output directory for rgb.ppm, rgb.raw, feature.raw, depth.raw and accum.raw.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "nvs")]
    split: Split,
    /// Also write the CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Object label (0 is background) or a file holding a feature vector.
    #[arg(long)]
    query: String,
    /// Cosine threshold in [-1, 1].
    #[arg(long, allow_negative_numbers = true)]
    threshold: f64,
    /// Also write the ids here, one per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EditArgs {
    /// Base checkpoint the script edits.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Edit script; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Output checkpoint; a render at `--t` is written next to it as .ppm.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
}

#[derive(Args)]
struct PcaArgs {
    #[command(flatten)]
    view: ViewArgs,
    /// Output PPM.
    #[arg(long)]
    out: PathBuf,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

const INPUT: u8 = 2;
const CHECKPOINT: u8 = 3;
const SEMANTIC: u8 = 4;

type Outcome<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn code(self, code: u8) -> Outcome<T>;
    /// Semantic failures (edit, conflict, shape) exit 4; everything else
    /// is treated as an input error.
    fn classify(self) -> Outcome<T>;
}

impl<T> Classify<T> for coda4dgs_core::Result<T> {
    fn code(self, code: u8) -> Outcome<T> {
        self.map_err(|error| Failure { code, error })
    }

    fn classify(self) -> Outcome<T> {
        self.map_err(|error| {
            let code = match error {
                Error::Edit(_) | Error::ConfigConflict(_) | Error::Shape(_) | Error::Diverged { .. } => SEMANTIC,
                _ => INPUT,
            };
            Failure { code, error }
        })
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure { code: INPUT, error: Error::Usage(format!("cannot read {}: {e}", path.display())) })
}

fn write_text(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).map_err(Error::from).code(INPUT)
}

fn load_ckpt(path: &Path) -> Outcome<Checkpoint> {
    load_checkpoint(path).map_err(|error| Failure {
        code: CHECKPOINT,
        error: match error {
            Error::Io(e) => Error::Usage(format!("cannot read checkpoint {}: {e}", path.display())),
            other => other,
        },
    })
}

fn synth(a: SynthArgs) -> Outcome<()> {
    let mut spec = match &a.config {
        Some(path) => SceneSpec::parse(&read_text(path)?).code(INPUT)?,
        None => SceneSpec::emergent(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let data = generate_dataset(&spec).code(INPUT)?;
    save_dataset(&data, &a.out).code(INPUT)?;
    eprintln!("wrote {} frames to {}", data.frames.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Outcome<()> {
    let data = load_dataset(&a.data).code(INPUT)?;
    let resume = a.checkpoint.as_deref().map(load_ckpt).transpose()?;
    let mut config = match (&a.config, &resume) {
        (Some(path), _) => TrainingConfig::parse(&read_text(path)?).code(INPUT)?,
        (None, Some(ck)) => ck.config.clone(),
        (None, None) => TrainingConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let mut trainer = match resume {
        Some(ck) => {
            ck.ensure_feature_dim(config.feature_dim).classify()?;
            Trainer::resume(config, &data, a.split, ck.model, ck.optimizer, ck.step).classify()?
        }
        None => Trainer::new(config, &data, a.split).classify()?,
    };
    let result = trainer.run();
    if let Some(path) = &a.log {
        write_text(path, &trainer.log_text())?;
    }
    result.classify()?;
    save_checkpoint(&trainer.checkpoint(), &a.out).code(INPUT)?;
    eprintln!("trained to step {}; wrote {}", trainer.step, a.out.display());
    Ok(())
}

/// Renders a checkpoint at `t` from its scene camera, offset by yaw and pitch.
fn render_view(v: &ViewArgs) -> Outcome<(Checkpoint, RenderOutput<f64>)> {
    let ck = load_ckpt(&v.checkpoint)?;
    if !(0.0..=1.0).contains(&v.t) {
        return Err(Failure { code: INPUT, error: Error::Usage(format!("--t {} outside [0, 1]", v.t)) });
    }
    let world = World::new(&ck.spec).code(CHECKPOINT)?;
    let camera = world.camera_at(v.t).code(CHECKPOINT)?.with_offsets(v.yaw, v.pitch);
    let spec = &ck.spec;
    let codebook = make_codebook(spec.seed, spec.objects.len() + 1, spec.feature_dim);
    let fbg = &codebook[0];
    if fbg.len() != ck.model.feature_dim() {
        return Err(Failure {
            code: SEMANTIC,
            error: Error::ConfigConflict(format!(
                "model features have width {}, scene teacher has {}",
                ck.model.feature_dim(),
                fbg.len()
            )),
        });
    }
    let out = ck.model.render(v.t, &camera, spec.sky, fbg, &RasterSettings::default()).classify()?;
    Ok((ck, out))
}

fn render(a: RenderArgs) -> Outcome<()> {
    let (_, out) = render_view(&a.view)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from).code(INPUT)?;
    let rgb = out.rgb.map(|v| v.clamp(0.0, 1.0));
    write_ppm(&rgb, a.out.join("rgb.ppm")).code(INPUT)?;
    write_raw(&rgb, a.out.join("rgb.raw")).code(INPUT)?;
    write_raw(&out.feature, a.out.join("feature.raw")).code(INPUT)?;
    write_raw(&out.depth, a.out.join("depth.raw")).code(INPUT)?;
    write_raw(&out.accum, a.out.join("accum.raw")).code(INPUT)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome<()> {
    let ck = load_ckpt(&a.checkpoint)?;
    let data = load_dataset(&a.data).code(INPUT)?;
    if data.spec != ck.spec {
        eprintln!("warning: dataset scene differs from the checkpoint's training scene");
    }
    let report = evaluate(&ck.model, &data, a.split, &RasterSettings::default()).classify()?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(path) = &a.out {
        write_text(path, &csv)?;
    }
    Ok(())
}

fn segment_cmd(a: SegmentArgs) -> Outcome<()> {
    let ck = load_ckpt(&a.checkpoint)?;
    let query = match Query::parse(&a.query) {
        Query::File(path) => read_vector(&path).code(INPUT)?,
        q => q.resolve(&ck, Path::new(".")).classify()?,
    };
    let ids = segment(&ck.model, &query, a.threshold).classify()?;
    if ids.is_empty() {
        eprintln!("warning: no Gaussian matches the query");
    }
    let text: String = ids.iter().map(|i| format!("{i}\n")).collect();
    print!("{text}");
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    Ok(())
}

fn edit(a: EditArgs) -> Outcome<()> {
    let base = load_ckpt(&a.checkpoint)?;
    let script = EditScript::parse(&read_text(&a.config)?).code(INPUT)?;
    let dir = a.config.parent().unwrap_or(Path::new("."));
    let (edited, _) = run_script(&script, &base, dir).map_err(|error| {
        let code = match error {
            Error::Format { .. } | Error::Checksum { .. } | Error::Version { .. } => CHECKPOINT,
            Error::Edit(_) | Error::ConfigConflict(_) | Error::Shape(_) => SEMANTIC,
            _ => INPUT,
        };
        Failure { code, error }
    })?;
    save_checkpoint(&edited, &a.out).code(INPUT)?;
    let view = ViewArgs { checkpoint: a.out.clone(), t: a.t, yaw: 0.0, pitch: 0.0 };
    let (_, out) = render_view(&view)?;
    write_ppm(&out.rgb.map(|v| v.clamp(0.0, 1.0)), a.out.with_extension("ppm")).code(INPUT)?;
    eprintln!("edited scene has {} Gaussians; wrote {}", edited.model.scene.len(), a.out.display());
    Ok(())
}

fn pca(a: PcaArgs) -> Outcome<()> {
    let (_, out) = render_view(&a.view)?;
    let img = pca_image(&out.feature).classify()?;
    write_ppm(&img, &a.out).code(INPUT)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Edit(a) => edit(a),
        Command::Pca(a) => pca(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
