//! Binary scene file.
//!
//! Layout: magic `C4DG`, version `u32 = 1`, `N: u64`, `F: u64`, then the
//! little-endian `f64` arrays positions (N×3), log_scales (N×3),
//! rotations (N×4), opacity_logits (N), sh_coeffs (N×48) and
//! context_features (N×F), followed by the CRC32 of those arrays.

use std::path::Path;

use super::{GaussianScene, SH_COEFFS};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::real::Real;

pub const SCENE_MAGIC: &[u8; 4] = b"C4DG";
pub const SCENE_VERSION: u32 = 1;

pub fn encode_scene<T: Real>(scene: &GaussianScene<T>) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(SCENE_MAGIC);
    w.u32(SCENE_VERSION);
    w.u64(scene.len() as u64);
    w.u64(scene.feature_dim as u64);
    let start = w.buf.len();
    let f = |v: &T| v.as_f64();
    w.f64s(scene.positions.iter().flatten().map(f));
    w.f64s(scene.log_scales.iter().flatten().map(f));
    w.f64s(scene.rotations.iter().flatten().map(f));
    w.f64s(scene.opacity_logits.iter().map(f));
    w.f64s(scene.sh.iter().flatten().map(f));
    w.f64s(scene.features.iter().map(f));
    let crc = crc32fast::hash(&w.buf[start..]);
    w.u32(crc);
    w.buf
}

fn rows<T: Real, const K: usize>(flat: Vec<f64>) -> Vec<[T; K]> {
    flat.chunks_exact(K).map(|c| std::array::from_fn(|k| T::lit(c[k]))).collect()
}

/// Decodes a scene; `base` is the offset of `bytes[0]` in the enclosing file.
pub(crate) fn decode_scene_at<T: Real>(bytes: &[u8], base: u64) -> Result<(GaussianScene<T>, usize)> {
    let mut r = ByteReader::with_base(bytes, base);
    r.magic(SCENE_MAGIC)?;
    let version = r.u32("version")?;
    if version != SCENE_VERSION {
        return Err(Error::Version { found: version, expected: SCENE_VERSION });
    }
    let n = r.u64("gaussian count")? as usize;
    let feature_dim = r.u64("feature width")? as usize;
    let payload_start = (r.offset() - base) as usize;
    let per = 3 + 3 + 4 + 1 + SH_COEFFS + feature_dim;
    let need = n.checked_mul(per).and_then(|v| v.checked_mul(8));
    match need {
        Some(bytes_needed) if bytes_needed + 4 <= r.remaining() => {}
        _ => {
            return Err(Error::format(
                r.offset(),
                format!("truncated scene: header declares {n} Gaussians of width {feature_dim}"),
            ))
        }
    }
    let positions = rows::<T, 3>(r.f64s(n * 3, "positions")?);
    let log_scales = rows::<T, 3>(r.f64s(n * 3, "log_scales")?);
    let rotations = rows::<T, 4>(r.f64s(n * 4, "rotations")?);
    let opacity_logits = r.f64s(n, "opacity_logits")?.into_iter().map(T::lit).collect();
    let sh = rows::<T, SH_COEFFS>(r.f64s(n * SH_COEFFS, "sh_coeffs")?);
    let features = r.f64s(n * feature_dim, "context_features")?.into_iter().map(T::lit).collect();
    let payload_end = (r.offset() - base) as usize;
    let stored = r.u32("checksum")?;
    let computed = crc32fast::hash(&bytes[payload_start..payload_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let used = (r.offset() - base) as usize;
    Ok((GaussianScene { feature_dim, positions, log_scales, rotations, opacity_logits, sh, features }, used))
}

pub fn decode_scene<T: Real>(bytes: &[u8]) -> Result<GaussianScene<T>> {
    let (scene, used) = decode_scene_at(bytes, 0)?;
    if used != bytes.len() {
        return Err(Error::format(used as u64, format!("{} trailing bytes after scene", bytes.len() - used)));
    }
    Ok(scene)
}

pub fn save_scene<T: Real>(scene: &GaussianScene<T>, path: impl AsRef<Path>) -> Result<()> {
    scene.validate()?;
    std::fs::write(path, encode_scene(scene))?;
    Ok(())
}

pub fn load_scene<T: Real>(path: impl AsRef<Path>) -> Result<GaussianScene<T>> {
    decode_scene(&std::fs::read(path)?)
}
