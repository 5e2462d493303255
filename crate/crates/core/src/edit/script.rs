//! Edit scripts: one operation per line, `op key=value ...`.
//!
//! ```text
//! segment query=1 threshold=0.8
//! extract out=object.ckpt rest=background.ckpt
//! transform translation=0.5,0,0 rotation=1,0,0,0
//! merge scene=other.ckpt
//! ```
//!
//! `segment` selects Gaussians of the working model; `extract` makes the
//! selection the working model, optionally saving it (`out`) and the
//! remainder (`rest`); `transform` places the working model rigidly;
//! `merge` appends another checkpoint's model. Blank lines and `#`
//! comments are ignored; relative paths resolve against `base_dir`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{complement, extract, merge, segment, transform};
use crate::error::{Error, Result};
use crate::synth::make_codebook;
use crate::train::{load_checkpoint, save_checkpoint, Checkpoint, Optimizer, Rigid};

/// What a segmentation compares features against.
#[derive(Clone, Debug, PartialEq)]
pub enum Query {
    /// Teacher codebook row of this label (0 is background).
    Label(usize),
    Vector(Vec<f64>),
    /// Text file of whitespace- or comma-separated reals.
    File(PathBuf),
}

impl Query {
    pub fn parse(text: &str) -> Query {
        match text.parse::<usize>() {
            Ok(label) => Query::Label(label),
            Err(_) => Query::File(PathBuf::from(text)),
        }
    }

    /// The query vector for a model trained on `ck`'s scene.
    pub fn resolve(&self, ck: &Checkpoint, base_dir: &Path) -> Result<Vec<f64>> {
        match self {
            Query::Label(label) => {
                let spec = &ck.spec;
                let labels = spec.objects.len() + 1;
                if *label >= labels {
                    return Err(Error::Edit(format!("label {label} out of range: the scene has {labels} labels")));
                }
                Ok(make_codebook(spec.seed, labels, spec.feature_dim).swap_remove(*label))
            }
            Query::Vector(v) => Ok(v.clone()),
            Query::File(path) => read_vector(&base_dir.join(path)),
        }
    }
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| Error::Usage(format!("{}: `{s}`: {e}", path.display()))))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum EditOp {
    Segment { query: Query, threshold: f64 },
    Extract { out: Option<PathBuf>, rest: Option<PathBuf> },
    Transform(Rigid),
    Merge { scene: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

fn script_error(line: usize, m: impl std::fmt::Display) -> Error {
    Error::Usage(format!("edit script line {line}: {m}"))
}

fn reals<const N: usize>(v: &str, line: usize, key: &str) -> Result<[f64; N]> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| script_error(line, format!("`{key}`: {e}")))?;
    parts.try_into().map_err(|_| script_error(line, format!("`{key}` needs {N} comma-separated numbers")))
}

impl EditScript {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ops = Vec::new();
        let mut selected = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let mut words = body.split_whitespace();
            let op = words.next().unwrap();
            let mut args = BTreeMap::new();
            for w in words {
                let (k, v) = w.split_once('=').ok_or_else(|| script_error(line, format!("expected key=value, got `{w}`")))?;
                if args.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(script_error(line, format!("duplicate key `{k}`")));
                }
            }
            let mut take = |k: &str| args.remove(k);
            let parsed = match op {
                "segment" => {
                    let query = Query::parse(&take("query").ok_or_else(|| script_error(line, "segment needs query="))?);
                    let t = take("threshold").ok_or_else(|| script_error(line, "segment needs threshold="))?;
                    let threshold: f64 = t.parse().map_err(|e| script_error(line, format!("threshold: {e}")))?;
                    if !(threshold > 0.0 && threshold < 1.0) {
                        return Err(script_error(line, "threshold must lie in (0, 1)"));
                    }
                    selected = true;
                    EditOp::Segment { query, threshold }
                }
                "extract" => {
                    if !selected {
                        return Err(script_error(line, "extract needs a preceding segment"));
                    }
                    EditOp::Extract { out: take("out").map(PathBuf::from), rest: take("rest").map(PathBuf::from) }
                }
                "transform" => {
                    let translation = match take("translation") {
                        Some(v) => reals::<3>(&v, line, "translation")?,
                        None => [0.0; 3],
                    };
                    let rotation = match take("rotation") {
                        Some(v) => reals::<4>(&v, line, "rotation")?,
                        None => [1.0, 0.0, 0.0, 0.0],
                    };
                    EditOp::Transform(Rigid::new(rotation, translation).map_err(|e| script_error(line, e))?)
                }
                "merge" => EditOp::Merge {
                    scene: take("scene").map(PathBuf::from).ok_or_else(|| script_error(line, "merge needs scene="))?,
                },
                other => return Err(script_error(line, format!("unknown operation `{other}`"))),
            };
            if let Some(k) = args.keys().next() {
                return Err(script_error(line, format!("unknown key `{k}` for {op}")));
            }
            ops.push(parsed);
        }
        Ok(Self { ops })
    }
}

/// Runs `script` on the model of `base`. Returns the edited checkpoint
/// (base config and scene spec, fresh optimizer state) and the last
/// segmentation.
pub fn run_script(script: &EditScript, base: &Checkpoint, base_dir: &Path) -> Result<(Checkpoint, Vec<usize>)> {
    let mut model = base.model.clone();
    let mut selection: Vec<usize> = Vec::new();
    let wrap = |model: &crate::train::Model| Checkpoint {
        config: base.config.clone(),
        spec: base.spec.clone(),
        step: base.step,
        model: model.clone(),
        optimizer: Optimizer::new(model),
    };
    for op in &script.ops {
        match op {
            EditOp::Segment { query, threshold } => {
                selection = segment(&model, &query.resolve(base, base_dir)?, *threshold)?;
            }
            EditOp::Extract { out, rest } => {
                let part = extract(&model, &selection)?;
                if let Some(path) = rest {
                    save_checkpoint(&wrap(&complement(&model, &selection)?), base_dir.join(path))?;
                }
                if let Some(path) = out {
                    save_checkpoint(&wrap(&part), base_dir.join(path))?;
                }
                model = part;
            }
            EditOp::Transform(rigid) => model = transform(&model, rigid),
            EditOp::Merge { scene } => {
                let other = load_checkpoint(base_dir.join(scene))?;
                model = merge(&model, &other.model)?;
            }
        }
    }
    Ok((wrap(&model), selection))
}
