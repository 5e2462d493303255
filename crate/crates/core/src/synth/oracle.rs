//! Brute-force reference renderer.
//!
//! Evaluates every Gaussian in front of the near plane at every pixel in
//! exact depth order, with no culling, no skip threshold and no early
//! termination. Sums use compensated accumulation. Shares only the
//! spherical-harmonics evaluation with the production rasterizer.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;

use crate::render::{Image, RenderOutput};
use crate::scene::{evaluate_sh, Camera, GaussianScene};

const FLOOR: f64 = 0.3;
const ALPHA_CLAMP: f64 = 0.99;

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

struct Prepared {
    mean: Vector2<f64>,
    conic: Matrix2<f64>,
    depth: f64,
    color: [f64; 3],
    opacity: f64,
    feature: Vec<f64>,
    label: usize,
}

fn prepare(scene: &GaussianScene<f64>, camera: &Camera<f64>, labels: &[usize]) -> Vec<Prepared> {
    let w = Matrix3::from_fn(|r, c| camera.rotation[r][c]);
    let t = Vector3::from(camera.translation);
    let mut out: Vec<(usize, Prepared)> = Vec::new();
    for i in 0..scene.len() {
        let m = w * Vector3::from(scene.positions[i]) + t;
        if m.z <= camera.near {
            continue;
        }
        let [qw, qx, qy, qz] = scene.rotations[i];
        let q = UnitQuaternion::from_quaternion(Quaternion::new(qw, qx, qy, qz));
        let r = q.to_rotation_matrix().into_inner();
        let s = Matrix3::from_diagonal(&Vector3::from(scene.log_scales[i]).map(|v| (2.0 * v).exp()));
        let sigma = r * s * r.transpose();
        let j = Matrix2x3::new(
            camera.fx / m.z,
            0.0,
            -camera.fx * m.x / (m.z * m.z),
            0.0,
            camera.fy / m.z,
            -camera.fy * m.y / (m.z * m.z),
        );
        let cov = j * w * sigma * w.transpose() * j.transpose() + Matrix2::identity() * FLOOR;
        let Some(conic) = cov.try_inverse() else { continue };
        let dir = m.normalize();
        let raw = evaluate_sh(&scene.sh[i], &[dir.x, dir.y, dir.z]);
        let feat = nalgebra::DVector::from_column_slice(scene.feature(i));
        let n = feat.norm();
        let feature = if n > 0.0 { (feat / n).as_slice().to_vec() } else { feat.as_slice().to_vec() };
        out.push((
            i,
            Prepared {
                mean: Vector2::new(camera.fx * m.x / m.z + camera.cx, camera.fy * m.y / m.z + camera.cy),
                conic,
                depth: m.z,
                color: raw.map(|c| c.clamp(0.0, 1.0)),
                opacity: 1.0 / (1.0 + (-scene.opacity_logits[i]).exp()),
                feature,
                label: labels.get(i).copied().unwrap_or(0),
            },
        ));
    }
    out.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(_, p)| p).collect()
}

/// Oracle output plus per-label compositing weight at each pixel.
#[derive(Clone, Debug)]
pub struct OracleOutput {
    pub render: RenderOutput<f64>,
    /// `labels` channels; channel `k` is the summed compositing weight of
    /// Gaussians carrying label `k`.
    pub label_weights: Image<f64>,
}

/// Reference render of `scene`; `labels[i]` tags Gaussian `i` for the
/// per-label weight planes.
pub fn oracle_render_labeled(
    scene: &GaussianScene<f64>,
    camera: &Camera<f64>,
    background: [f64; 3],
    feature_background: &[f64],
    labels: &[usize],
    label_count: usize,
) -> OracleOutput {
    let prepared = prepare(scene, camera, labels);
    let (w, h, fd) = (camera.width, camera.height, feature_background.len());
    let lc = label_count.max(1);
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|row| {
            let stride = 3 + fd + 2 + lc;
            let mut line = vec![0.0; w * stride];
            for col in 0..w {
                let p = Vector2::new(col as f64 + 0.5, row as f64 + 0.5);
                let mut trans = 1.0;
                let mut rgb = [Acc::default(); 3];
                let mut feat = vec![Acc::default(); fd];
                let mut depth = Acc::default();
                let mut weight = Acc::default();
                let mut per_label = vec![Acc::default(); lc];
                for g in &prepared {
                    let d = p - g.mean;
                    let gauss = (-0.5 * (d.transpose() * g.conic * d)[(0, 0)]).exp();
                    let alpha = (g.opacity * gauss).min(ALPHA_CLAMP);
                    let wgt = alpha * trans;
                    for c in 0..3 {
                        rgb[c].add(wgt * g.color[c]);
                    }
                    for k in 0..fd.min(g.feature.len()) {
                        feat[k].add(wgt * g.feature[k]);
                    }
                    depth.add(wgt * g.depth);
                    weight.add(wgt);
                    if g.label < lc {
                        per_label[g.label].add(wgt);
                    }
                    trans *= 1.0 - alpha;
                }
                let out = &mut line[col * stride..(col + 1) * stride];
                for c in 0..3 {
                    out[c] = rgb[c].value() + trans * background[c];
                }
                for k in 0..fd {
                    out[3 + k] = feat[k].value() + trans * feature_background[k];
                }
                let a = weight.value();
                out[3 + fd] = if a > 0.5 { depth.value() / a } else { 0.0 };
                out[4 + fd] = a;
                for k in 0..lc {
                    out[5 + fd + k] = per_label[k].value();
                }
            }
            line
        })
        .collect();
    let mut rgb = Image::new(w, h, 3);
    let mut feature = Image::new(w, h, fd);
    let mut depth = Image::new(w, h, 1);
    let mut accum = Image::new(w, h, 1);
    let mut label_weights = Image::new(w, h, lc);
    let stride = 3 + fd + 2 + lc;
    for (r, line) in rows.iter().enumerate() {
        for c in 0..w {
            let px = &line[c * stride..(c + 1) * stride];
            rgb.pixel_mut(r, c).copy_from_slice(&px[..3]);
            feature.pixel_mut(r, c).copy_from_slice(&px[3..3 + fd]);
            depth.pixel_mut(r, c)[0] = px[3 + fd];
            accum.pixel_mut(r, c)[0] = px[4 + fd];
            label_weights.pixel_mut(r, c).copy_from_slice(&px[5 + fd..]);
        }
    }
    OracleOutput { render: RenderOutput { rgb, depth, feature, accum }, label_weights }
}

/// Reference render of `scene` over the given backgrounds.
pub fn oracle_render(
    scene: &GaussianScene<f64>,
    camera: &Camera<f64>,
    background: [f64; 3],
    feature_background: &[f64],
) -> RenderOutput<f64> {
    oracle_render_labeled(scene, camera, background, feature_background, &[], 1).render
}
