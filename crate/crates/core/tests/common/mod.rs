#![allow(dead_code)]

use coda4dgs_core::scene::{Camera, GaussianScene, SH_COEFFS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn camera(width: usize, height: usize) -> Camera<f64> {
    Camera::look_at([0.3, -0.2, -6.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 2.5 * width as f64, width, height).unwrap()
}

/// Random Gaussians in a ball of radius `extent` around the origin. Colors
/// stay inside (0, 1) and opacities below the α clamp so the composite is
/// smooth in every attribute.
pub fn random_scene(rng: &mut impl Rng, n: usize, feature_dim: usize, extent: f64) -> GaussianScene<f64> {
    let mut s = GaussianScene::zeros(n, feature_dim);
    for i in 0..n {
        s.positions[i] = [0; 3].map(|_| rng.gen_range(-extent..extent));
        s.log_scales[i] = [0; 3].map(|_| rng.gen_range(-2.6..-1.2));
        let q: [f64; 4] = [0; 4].map(|_| rng.gen_range(-1.0..1.0));
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(0.1);
        s.rotations[i] = q.map(|v| v / qn);
        s.opacity_logits[i] = rng.gen_range(-1.5..1.5);
        let mut sh = [0.0; SH_COEFFS];
        for c in 0..3 {
            sh[c * 16] = rng.gen_range(-0.8..0.8);
            for k in 1..16 {
                sh[c * 16 + k] = rng.gen_range(-0.04..0.04);
            }
        }
        s.sh[i] = sh;
        for v in s.feature_mut(i) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    s
}

pub fn flatten(s: &GaussianScene<f64>) -> Vec<f64> {
    let mut v = Vec::new();
    for i in 0..s.len() {
        v.extend_from_slice(&s.positions[i]);
        v.extend_from_slice(&s.log_scales[i]);
        v.extend_from_slice(&s.rotations[i]);
        v.push(s.opacity_logits[i]);
        v.extend_from_slice(&s.sh[i]);
        v.extend_from_slice(s.feature(i));
    }
    v
}

pub fn unflatten(template: &GaussianScene<f64>, v: &[f64]) -> GaussianScene<f64> {
    let mut s = template.clone();
    let mut k = 0;
    let mut take = |n: usize| {
        let out = &v[k..k + n];
        k += n;
        out
    };
    for i in 0..s.len() {
        s.positions[i].copy_from_slice(take(3));
        s.log_scales[i].copy_from_slice(take(3));
        s.rotations[i].copy_from_slice(take(4));
        s.opacity_logits[i] = take(1)[0];
        s.sh[i].copy_from_slice(take(SH_COEFFS));
        let f = s.feature_dim;
        s.feature_mut(i).copy_from_slice(take(f));
    }
    s
}
