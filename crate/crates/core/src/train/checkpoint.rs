//! Checkpoint file.
//!
//! Layout: magic `C4DC`, version `u32 = 1`, then the payload, then the
//! CRC32 of the payload. The payload holds the training config text, the
//! scene description text of the training data, the step counter, the
//! canonical scene (embedded scene file), per-Gaussian field ids, each
//! motion (its construction parameters as text and every parameter block
//! as a named segment) and the Adam moments.

use std::path::Path;

use super::config::TrainingConfig;
use super::model::{Model, Motion, Rigid};
use super::trainer::Optimizer;
use crate::awareness::{Awareness, DcnConfig};
use crate::binio::{ByteReader, ByteWriter};
use crate::deform::FieldConfig;
use crate::error::{Error, Result};
use crate::kvconf::{format_array, KvFile};
use crate::numeric::{AdamState, ParamBlock};
use crate::scene::io::{decode_scene_at, encode_scene};
use crate::synth::SceneSpec;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"C4DC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    /// The synthetic scene the model was trained on; supplies cameras,
    /// background and the teacher codebook.
    pub spec: SceneSpec,
    pub step: u64,
    pub model: Model,
    pub optimizer: Optimizer,
}

impl Checkpoint {
    /// Errors with a config conflict unless the model's features have width
    /// `feature_dim`.
    pub fn ensure_feature_dim(&self, feature_dim: usize) -> Result<()> {
        if self.model.feature_dim() != feature_dim {
            return Err(Error::ConfigConflict(format!(
                "checkpoint has feature width {}, expected {feature_dim}",
                self.model.feature_dim()
            )));
        }
        Ok(())
    }
}

fn motion_text(m: &Motion) -> String {
    let f = &m.field_config;
    let d = &m.dcn_config;
    let res: Vec<String> = f.resolutions.iter().map(|r| r.to_string()).collect();
    let bounds: Vec<f64> = f.bounds.iter().flatten().copied().collect();
    let lines = [
        format!("bounds = {}", format_array(&bounds)),
        format!("resolutions = {}", res.join(", ")),
        format!("channels = {}", f.channels),
        format!("latent_hidden = {}", f.latent_hidden),
        format!("latent_dim = {}", f.latent_dim),
        format!("head_hidden = {}", f.head_hidden),
        format!("grid_init = {:?}", f.grid_init),
        format!("embed_dim = {}", d.embed_dim),
        format!("dcn_hidden = {}", d.hidden),
        format!("awareness.time = {}", d.awareness.time),
        format!("awareness.deformation = {}", d.awareness.deformation),
        format!("awareness.context = {}", d.awareness.context),
        format!("dcn_enabled = {}", m.dcn_enabled),
        format!("time_scale = {:?}", m.time_scale),
        format!("feature_dim = {}", m.dcn.feature_dim),
    ];
    let mut text = lines.join("\n");
    if let Some(r) = &m.rigid {
        let v: Vec<f64> = r.rotation.iter().chain(&r.translation).copied().collect();
        text.push_str(&format!("\nrigid = {}", format_array(&v)));
    }
    text
}

struct MotionHeader {
    field: FieldConfig,
    dcn: DcnConfig,
    enabled: bool,
    time_scale: f64,
    feature_dim: usize,
    rigid: Option<Rigid>,
}

fn parse_motion_header(text: &str) -> Result<MotionHeader> {
    let mut kv = KvFile::parse(text, |m| Error::format(0, format!("motion header: {m}")))?;
    let missing = |k: &str| Error::format(0, format!("motion header lacks `{k}`"));
    let b: [f64; 6] = kv.take_array("bounds")?.ok_or_else(|| missing("bounds"))?;
    let rigid =
        kv.take_array::<7>("rigid")?.map(|v| Rigid { rotation: [v[0], v[1], v[2], v[3]], translation: [v[4], v[5], v[6]] });
    let res: String = kv.take("resolutions")?.ok_or_else(|| missing("resolutions"))?;
    let resolutions = res
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(0, format!("motion header: resolutions: {e}")))?;
    let mut need = |k: &str| -> Result<String> { kv.take::<String>(k)?.ok_or_else(|| missing(k)) };
    let num =
        |s: String, k: &str| -> Result<usize> { s.parse().map_err(|_| Error::format(0, format!("motion header: bad `{k}`"))) };
    let flag =
        |s: String, k: &str| -> Result<bool> { s.parse().map_err(|_| Error::format(0, format!("motion header: bad `{k}`"))) };
    let real =
        |s: String, k: &str| -> Result<f64> { s.parse().map_err(|_| Error::format(0, format!("motion header: bad `{k}`"))) };
    let field = FieldConfig {
        bounds: [[b[0], b[1]], [b[2], b[3]], [b[4], b[5]]],
        resolutions,
        channels: num(need("channels")?, "channels")?,
        latent_hidden: num(need("latent_hidden")?, "latent_hidden")?,
        latent_dim: num(need("latent_dim")?, "latent_dim")?,
        head_hidden: num(need("head_hidden")?, "head_hidden")?,
        grid_init: real(need("grid_init")?, "grid_init")?,
    };
    let dcn = DcnConfig {
        embed_dim: num(need("embed_dim")?, "embed_dim")?,
        hidden: num(need("dcn_hidden")?, "dcn_hidden")?,
        awareness: Awareness {
            time: flag(need("awareness.time")?, "awareness.time")?,
            deformation: flag(need("awareness.deformation")?, "awareness.deformation")?,
            context: flag(need("awareness.context")?, "awareness.context")?,
        },
    };
    let enabled = flag(need("dcn_enabled")?, "dcn_enabled")?;
    let time_scale = real(need("time_scale")?, "time_scale")?;
    let feature_dim = num(need("feature_dim")?, "feature_dim")?;
    kv.finish()?;
    Ok(MotionHeader { field, dcn, enabled, time_scale, feature_dim, rigid })
}

fn write_adam(w: &mut ByteWriter, s: &AdamState<f64>) {
    w.u64(s.step_count);
    w.f64s([s.beta1, s.beta2, s.eps]);
    w.u64(s.first_moment.len() as u64);
    w.f64s(s.first_moment.iter().copied());
    w.f64s(s.second_moment.iter().copied());
}

fn read_adam(r: &mut ByteReader<'_>) -> Result<AdamState<f64>> {
    let step_count = r.u64("adam step count")?;
    let c = r.f64s(3, "adam constants")?;
    let at = r.offset();
    let len = r.u64("adam length")? as usize;
    if len > r.remaining() / 16 {
        return Err(Error::format(at, format!("truncated optimizer state of length {len}")));
    }
    let first_moment = r.f64s(len, "adam first moment")?;
    let second_moment = r.f64s(len, "adam second moment")?;
    Ok(AdamState { first_moment, second_moment, step_count, beta1: c[0], beta2: c[1], eps: c[2] })
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let start = w.buf.len();
    w.string(&ck.config.to_text());
    w.string(&ck.spec.to_text());
    w.u64(ck.step);
    w.bytes(&encode_scene(&ck.model.scene));
    w.u64(ck.model.field_ids.len() as u64);
    for &id in &ck.model.field_ids {
        w.u32(id as u32);
    }
    w.u32(ck.model.motions.len() as u32);
    for m in &ck.model.motions {
        w.string(&motion_text(m));
        let blocks: Vec<&ParamBlock<f64>> = m.field.params().into_iter().chain(m.dcn.params()).collect();
        w.u32(blocks.len() as u32);
        for b in blocks {
            b.write_segment(&mut w);
        }
    }
    w.u32(ck.optimizer.scene.len() as u32);
    for s in &ck.optimizer.scene {
        write_adam(&mut w, s);
    }
    w.u32(ck.optimizer.blocks.len() as u32);
    for s in &ck.optimizer.blocks {
        write_adam(&mut w, s);
    }
    let crc = crc32fast::hash(&w.buf[start..]);
    w.u32(crc);
    w.buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let start = r.offset() as usize;
    if bytes.len() < start + 4 {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint"));
    }
    let end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[end..].try_into().unwrap());
    let mut r = ByteReader::with_base(&bytes[start..end], start as u64);
    let config = TrainingConfig::parse(&r.string("config")?)?;
    let spec = SceneSpec::parse(&r.string("scene spec")?)?;
    let step = r.u64("step")?;
    let at = r.offset() as usize;
    let (scene, used) = decode_scene_at::<f64>(&bytes[at..end], at as u64)?;
    r.take(used, "scene")?;
    let at = r.offset();
    let n = r.u64("field id count")? as usize;
    if n != scene.len() {
        return Err(Error::format(at, format!("{n} field ids for {} Gaussians", scene.len())));
    }
    let field_ids = (0..n).map(|_| r.u32("field id").map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let count = r.u32("motion count")? as usize;
    let mut motions = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let at = r.offset();
        let h = parse_motion_header(&r.string("motion header")?).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(at, message),
            other => other,
        })?;
        let mut m = Motion::new(h.field, h.dcn, h.enabled, h.time_scale, h.feature_dim, 0)?;
        m.rigid = h.rigid;
        let at = r.offset();
        let nblocks = r.u32("block count")? as usize;
        let mut targets: Vec<&mut ParamBlock<f64>> = m.field.params_mut().into_iter().chain(m.dcn.params_mut()).collect();
        if nblocks != targets.len() {
            return Err(Error::format(at, format!("{nblocks} parameter blocks, motion has {}", targets.len())));
        }
        for t in targets.iter_mut() {
            let at = r.offset();
            let b = ParamBlock::<f64>::read_segment(&mut r)?;
            if b.name != t.name || b.shape != t.shape {
                return Err(Error::format(
                    at,
                    format!("block `{}` {:?} where `{}` {:?} was expected", b.name, b.shape, t.name, t.shape),
                ));
            }
            t.values = b.values;
        }
        motions.push(m);
    }
    let ns = r.u32("scene optimizer count")? as usize;
    let scene_states = (0..ns).map(|_| read_adam(&mut r)).collect::<Result<Vec<_>>>()?;
    let nb = r.u32("block optimizer count")? as usize;
    let block_states = (0..nb).map(|_| read_adam(&mut r)).collect::<Result<Vec<_>>>()?;
    if r.remaining() != 0 {
        return Err(Error::format(r.offset(), format!("{} unexpected bytes before the checksum", r.remaining())));
    }
    let computed = crc32fast::hash(&bytes[start..end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let model = Model { scene, field_ids, motions };
    model.validate()?;
    Ok(Checkpoint { config, spec, step, model, optimizer: Optimizer { scene: scene_states, blocks: block_states } })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ck.model.validate()?;
    std::fs::write(path, encode_checkpoint(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
