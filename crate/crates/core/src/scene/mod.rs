//! Gaussian scene representation.

pub mod camera;
pub mod covariance;
pub mod io;
pub mod sh;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use camera::Camera;
pub use covariance::{build_covariance, build_covariance_backward, project_covariance, Mat2, Mat3};
pub use io::{load_scene, save_scene};
pub use sh::{evaluate_sh, SH_BASIS, SH_COEFFS};

use crate::error::{Error, Result};
use crate::real::{norm, sigmoid, Real};

/// Initial opacity of Gaussians created from points.
pub const INIT_OPACITY: f64 = 0.1;
/// Scale assigned to a lone point that has no neighbors (meters).
pub const LONE_POINT_SCALE: f64 = 0.01;

/// `N` Gaussians with unconstrained raw attributes: log scales, raw
/// quaternions `(w, x, y, z)`, opacity logits, degree-3 SH coefficients and a
/// context feature of width `feature_dim` per Gaussian.
///
/// The same layout doubles as the gradient container for a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianScene<T> {
    pub feature_dim: usize,
    pub positions: Vec<[T; 3]>,
    pub log_scales: Vec<[T; 3]>,
    pub rotations: Vec<[T; 4]>,
    pub opacity_logits: Vec<T>,
    pub sh: Vec<[T; SH_COEFFS]>,
    pub features: Vec<T>,
}

impl<T: Real> GaussianScene<T> {
    pub fn empty(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            positions: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            features: Vec::new(),
        }
    }

    /// Scene of `n` Gaussians with every attribute zero (a gradient buffer).
    pub fn zeros(n: usize, feature_dim: usize) -> Self {
        let z = T::zero();
        Self {
            feature_dim,
            positions: vec![[z; 3]; n],
            log_scales: vec![[z; 3]; n],
            rotations: vec![[z; 4]; n],
            opacity_logits: vec![z; n],
            sh: vec![[z; SH_COEFFS]; n],
            features: vec![z; n * feature_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.len(), self.feature_dim)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn scale(&self, i: usize) -> [T; 3] {
        self.log_scales[i].map(|l| l.exp())
    }

    pub fn opacity(&self, i: usize) -> T {
        sigmoid(self.opacity_logits[i])
    }

    pub fn feature(&self, i: usize) -> &[T] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn feature_mut(&mut self, i: usize) -> &mut [T] {
        let f = self.feature_dim;
        &mut self.features[i * f..(i + 1) * f]
    }

    /// Unit-normalized context feature; zero stays zero.
    pub fn normalized_feature(&self, i: usize) -> Vec<T> {
        let f = self.feature(i);
        let n = norm(f);
        if n > T::zero() {
            f.iter().map(|&v| v / n).collect()
        } else {
            f.to_vec()
        }
    }

    /// Checks array lengths against `N` and `F`.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.log_scales.len() == n
            && self.rotations.len() == n
            && self.opacity_logits.len() == n
            && self.sh.len() == n
            && self.features.len() == n * self.feature_dim;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("scene arrays disagree on Gaussian count {n}")))
        }
    }

    /// Appends Gaussian `i` of `other`.
    pub fn push_from(&mut self, other: &Self, i: usize) {
        self.positions.push(other.positions[i]);
        self.log_scales.push(other.log_scales[i]);
        self.rotations.push(other.rotations[i]);
        self.opacity_logits.push(other.opacity_logits[i]);
        self.sh.push(other.sh[i]);
        self.features.extend_from_slice(other.feature(i));
    }

    /// Sub-scene with the listed Gaussians, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.feature_dim);
        for &i in indices {
            out.push_from(self, i);
        }
        out
    }

    pub fn retain(&mut self, keep: &[bool]) {
        let idx: Vec<usize> = keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect();
        *self = self.select(&idx);
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.feature_dim != other.feature_dim {
            return Err(Error::Shape(format!(
                "cannot merge scenes with feature widths {} and {}",
                self.feature_dim, other.feature_dim
            )));
        }
        let mut out = self.clone();
        for i in 0..other.len() {
            out.push_from(other, i);
        }
        Ok(out)
    }

    /// Elementwise `self += other` (gradient accumulation).
    pub fn add_assign(&mut self, other: &Self) {
        fn add<T: Real, const K: usize>(a: &mut [[T; K]], b: &[[T; K]]) {
            for (x, y) in a.iter_mut().zip(b) {
                for k in 0..K {
                    x[k] += y[k];
                }
            }
        }
        add(&mut self.positions, &other.positions);
        add(&mut self.log_scales, &other.log_scales);
        add(&mut self.rotations, &other.rotations);
        add(&mut self.sh, &other.sh);
        for (x, y) in self.opacity_logits.iter_mut().zip(&other.opacity_logits) {
            *x += *y;
        }
        for (x, y) in self.features.iter_mut().zip(&other.features) {
            *x += *y;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh.iter().flatten().all(|v| v.is_finite())
            && self.features.iter().all(|v| v.is_finite())
    }
}

/// One Gaussian per point: isotropic scale from the mean distance to the
/// three nearest neighbors, identity rotation, opacity 0.1, SH DC matching
/// the point color, and a context feature drawn uniformly from the unit
/// sphere.
pub fn init_from_points<T: Real>(
    points: &[[T; 3]],
    colors: &[[T; 3]],
    feature_dim: usize,
    seed: u64,
) -> Result<GaussianScene<T>> {
    if points.is_empty() {
        return Err(Error::EmptyScene);
    }
    if colors.len() != points.len() {
        return Err(Error::Shape(format!("{} colors for {} points", colors.len(), points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = GaussianScene::empty(feature_dim);
    let logit = T::lit((INIT_OPACITY / (1.0 - INIT_OPACITY)).ln());
    for (i, p) in points.iter().enumerate() {
        let mut nearest = [T::infinity(); 3];
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            if d < nearest[2] {
                nearest[2] = d;
                nearest.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
        }
        let found: Vec<T> = nearest.iter().copied().filter(|d| d.is_finite()).collect();
        let mean = if found.is_empty() {
            T::lit(LONE_POINT_SCALE)
        } else {
            let m = found.iter().copied().sum::<T>() / T::lit(found.len() as f64);
            m.max(T::lit(1e-7))
        };
        let ls = mean.ln();
        scene.positions.push(*p);
        scene.log_scales.push([ls; 3]);
        scene.rotations.push([T::one(), T::zero(), T::zero(), T::zero()]);
        scene.opacity_logits.push(logit);
        let mut coeffs = [T::zero(); SH_COEFFS];
        for ch in 0..3 {
            coeffs[ch * SH_BASIS] = sh::dc_from_color(colors[i][ch]);
        }
        scene.sh.push(coeffs);
        let mut f: Vec<f64> = (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            f.iter_mut().for_each(|v| *v /= n);
        }
        scene.features.extend(f.into_iter().map(T::lit));
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lone_point_uses_fallback_scale() {
        let s = init_from_points::<f64>(&[[1.0, 2.0, 3.0]], &[[0.5, 0.5, 0.5]], 4, 0).unwrap();
        assert!((s.log_scales[0][0] - 0.01f64.ln()).abs() < 1e-15);
        assert_eq!(s.rotations[0], [1.0, 0.0, 0.0, 0.0]);
        assert!((s.opacity(0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn two_points_one_meter_apart() {
        let s = init_from_points::<f64>(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], &[[0.0; 3]; 2], 4, 0).unwrap();
        assert!(s.log_scales[0][0].abs() < 1e-15);
        assert!(s.log_scales[1][2].abs() < 1e-15);
    }

    #[test]
    fn nearest_three_neighbors_are_averaged() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [10.0, 0.0, 0.0]];
        let s = init_from_points::<f64>(&pts, &[[0.0; 3]; 5], 2, 0).unwrap();
        assert!((s.log_scales[0][0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn red_point_renders_red() {
        let s = init_from_points::<f64>(&[[0.0; 3]], &[[1.0, 0.0, 0.0]], 2, 0).unwrap();
        let rgb = evaluate_sh(&s.sh[0], &[0.0, 0.0, 1.0]);
        assert!((rgb[0] - 1.0).abs() < 1e-15 && rgb[1].abs() < 1e-15 && rgb[2].abs() < 1e-15);
        assert!((s.sh[0][0] - 0.5 / sh::SH_C0).abs() < 1e-12);
        assert!(s.sh[0][1..16].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn features_are_unit_and_seeded() {
        let pts = [[0.0; 3], [1.0, 1.0, 1.0]];
        let a = init_from_points::<f64>(&pts, &[[0.0; 3]; 2], 16, 7).unwrap();
        let b = init_from_points::<f64>(&pts, &[[0.0; 3]; 2], 16, 7).unwrap();
        assert_eq!(a, b);
        for i in 0..2 {
            assert!((norm(a.feature(i)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_point_set_is_rejected() {
        assert!(matches!(init_from_points::<f64>(&[], &[], 4, 0), Err(Error::EmptyScene)));
    }
}
