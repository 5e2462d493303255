//! Projection of 3D Gaussians to screen-space splats, and the chain rule
//! from splat gradients back to scene attributes.

use super::RasterSettings;
use crate::real::{norm, sigmoid, Real};
use crate::scene::covariance::{
    build_covariance, build_covariance_backward, invert2, matmul3, matvec3, project_camera_covariance, projection_jacobian,
    transpose3, Mat2, Mat3,
};
use crate::scene::sh::{sh_basis, sh_basis_gradient, SH_BASIS};
use crate::scene::{Camera, GaussianScene};

/// A Gaussian after projection into the image.
#[derive(Clone, Debug, PartialEq)]
pub struct ScreenSplat<T> {
    /// Index of the source Gaussian in the scene.
    pub index: usize,
    pub mean2d: [T; 2],
    pub cov2d: Mat2<T>,
    pub inv_cov2d: Mat2<T>,
    /// Camera-space z (meters).
    pub depth: T,
    /// Clamped to `[0, 1]`.
    pub color: [T; 3],
    pub opacity: T,
    /// Unit-normalized context feature.
    pub feature: Vec<T>,
    /// Pixel distance beyond which the splat's weight falls under the skip
    /// threshold; infinite when the threshold is zero.
    pub radius: T,
}

/// Gradients with respect to every field of a [`ScreenSplat`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGrad<T> {
    pub mean2d: [T; 2],
    pub inv_cov2d: Mat2<T>,
    pub depth: T,
    pub color: [T; 3],
    pub opacity: T,
    pub feature: Vec<T>,
}

impl<T: Real> SplatGrad<T> {
    pub fn zeros(feature_dim: usize) -> Self {
        let z = T::zero();
        Self { mean2d: [z; 2], inv_cov2d: [[z; 2]; 2], depth: z, color: [z; 3], opacity: z, feature: vec![z; feature_dim] }
    }

    pub fn add_assign(&mut self, o: &Self) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
            for j in 0..2 {
                self.inv_cov2d[k][j] += o.inv_cov2d[k][j];
            }
        }
        for k in 0..3 {
            self.color[k] += o.color[k];
        }
        self.depth += o.depth;
        self.opacity += o.opacity;
        for (a, b) in self.feature.iter_mut().zip(&o.feature) {
            *a += *b;
        }
    }
}

fn major_std<T: Real>(cov: &Mat2<T>) -> T {
    let half = T::lit(0.5);
    let mid = half * (cov[0][0] + cov[1][1]);
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    (mid + (mid * mid - det).max(T::zero()).sqrt()).sqrt()
}

fn view_direction<T: Real>(mean_cam: &[T; 3]) -> [T; 3] {
    let n = norm(mean_cam);
    [mean_cam[0] / n, mean_cam[1] / n, mean_cam[2] / n]
}

/// Projects every Gaussian in front of the near plane whose footprint
/// reaches the image, sorted by depth (ties by index).
///
/// View-dependent color is evaluated with the camera-space view direction.
pub fn project_gaussians<T: Real>(
    scene: &GaussianScene<T>,
    camera: &Camera<T>,
    settings: &RasterSettings,
) -> Vec<ScreenSplat<T>> {
    let skip = T::lit(settings.skip_threshold);
    let (w, h) = (T::lit(camera.width as f64), T::lit(camera.height as f64));
    let half = T::lit(0.5);
    let mut out: Vec<ScreenSplat<T>> = (0..scene.len())
        .filter_map(|i| {
            let m = camera.world_to_camera(&scene.positions[i]);
            if !(m[2] > camera.near) {
                return None;
            }
            let opacity = sigmoid(scene.opacity_logits[i]);
            if opacity < skip {
                return None;
            }
            let sigma = build_covariance(&scene.log_scales[i], &scene.rotations[i]).ok()?;
            let a = matmul3(&matmul3(&camera.rotation, &sigma), &transpose3(&camera.rotation));
            let jac = projection_jacobian(camera.fx, camera.fy, &m);
            let cov2d = project_camera_covariance(&jac, &a);
            let inv_cov2d = invert2(&cov2d)?;
            let mean2d = [camera.fx * m[0] / m[2] + camera.cx, camera.fy * m[1] / m[2] + camera.cy];
            let radius = if skip > T::zero() {
                let k = (T::lit(2.0) * (opacity / skip).ln()).max(T::zero()).sqrt();
                (major_std(&cov2d) * k).max(T::lit(1e-6))
            } else {
                T::infinity()
            };
            if mean2d[0] + radius < half
                || mean2d[0] - radius > w - half
                || mean2d[1] + radius < half
                || mean2d[1] - radius > h - half
            {
                return None;
            }
            let raw = crate::scene::evaluate_sh(&scene.sh[i], &view_direction(&m));
            let color = raw.map(|c| c.max(T::zero()).min(T::one()));
            Some(ScreenSplat {
                index: i,
                mean2d,
                cov2d,
                inv_cov2d,
                depth: m[2],
                color,
                opacity,
                feature: scene.normalized_feature(i),
                radius,
            })
        })
        .collect();
    out.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.index.cmp(&b.index)));
    out
}

/// Chains splat gradients back to the raw attributes of `scene`,
/// accumulating into `grad`.
pub fn project_backward<T: Real>(
    scene: &GaussianScene<T>,
    camera: &Camera<T>,
    splats: &[ScreenSplat<T>],
    splat_grads: &[SplatGrad<T>],
    grad: &mut GaussianScene<T>,
) {
    let two = T::lit(2.0);
    for (s, g) in splats.iter().zip(splat_grads) {
        let i = s.index;
        let m = camera.world_to_camera(&scene.positions[i]);
        let mut dm = [T::zero(); 3];

        // opacity
        grad.opacity_logits[i] += g.opacity * s.opacity * (T::one() - s.opacity);

        // feature normalization
        let f = scene.feature(i);
        let fnorm = norm(f);
        if fnorm > T::zero() {
            let proj: T = s.feature.iter().zip(&g.feature).map(|(a, b)| *a * *b).sum();
            for (k, df) in grad.feature_mut(i).iter_mut().enumerate() {
                *df += (g.feature[k] - s.feature[k] * proj) / fnorm;
            }
        }

        // color through SH and the view direction
        let dir = view_direction(&m);
        let basis = sh_basis(&dir);
        let raw = crate::scene::evaluate_sh(&scene.sh[i], &dir);
        let mut ddir = [T::zero(); 3];
        let dbasis = sh_basis_gradient(&dir);
        for ch in 0..3 {
            if raw[ch] < T::zero() || raw[ch] > T::one() {
                continue;
            }
            let gc = g.color[ch];
            if gc == T::zero() {
                continue;
            }
            for k in 0..SH_BASIS {
                grad.sh[i][ch * SH_BASIS + k] += gc * basis[k];
                let c = scene.sh[i][ch * SH_BASIS + k];
                for j in 0..3 {
                    ddir[j] += gc * c * dbasis[k][j];
                }
            }
        }
        let mn = norm(&m);
        let dd = ddir[0] * dir[0] + ddir[1] * dir[1] + ddir[2] * dir[2];
        for j in 0..3 {
            dm[j] += (ddir[j] - dir[j] * dd) / mn;
        }

        // depth and mean
        dm[2] += g.depth;
        let iz = T::one() / m[2];
        dm[0] += g.mean2d[0] * camera.fx * iz;
        dm[1] += g.mean2d[1] * camera.fy * iz;
        dm[2] -= (g.mean2d[0] * camera.fx * m[0] + g.mean2d[1] * camera.fy * m[1]) * iz * iz;

        // conic = cov2d⁻¹  →  dcov = -K dK K
        let k = &s.inv_cov2d;
        let dk = &g.inv_cov2d;
        let mut kdk = [[T::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                kdk[r][c] = k[r][0] * dk[0][c] + k[r][1] * dk[1][c];
            }
        }
        let mut dcov = [[T::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                dcov[r][c] = -(kdk[r][0] * k[0][c] + kdk[r][1] * k[1][c]);
            }
        }

        // cov2d = J A Jᵀ + floor
        let sigma = build_covariance(&scene.log_scales[i], &scene.rotations[i]).expect("validated in projection");
        let a = matmul3(&matmul3(&camera.rotation, &sigma), &transpose3(&camera.rotation));
        let jac = projection_jacobian(camera.fx, camera.fy, &m);
        let mut sym = [[T::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                sym[r][c] = dcov[r][c] + dcov[c][r];
            }
        }
        // dJ = sym · J · A
        let mut ja = [[T::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                ja[r][c] = jac[r][0] * a[0][c] + jac[r][1] * a[1][c] + jac[r][2] * a[2][c];
            }
        }
        let mut djac = [[T::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                djac[r][c] = sym[r][0] * ja[0][c] + sym[r][1] * ja[1][c];
            }
        }
        // dA = Jᵀ dcov J
        let mut da: Mat3<T> = [[T::zero(); 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = T::zero();
                for p in 0..2 {
                    for q in 0..2 {
                        acc += jac[p][r] * dcov[p][q] * jac[q][c];
                    }
                }
                da[r][c] = acc;
            }
        }
        let dsigma = matmul3(&matmul3(&transpose3(&camera.rotation), &da), &camera.rotation);
        let (dls, dq) = build_covariance_backward(&scene.log_scales[i], &scene.rotations[i], &dsigma);
        for j in 0..3 {
            grad.log_scales[i][j] += dls[j];
        }
        for j in 0..4 {
            grad.rotations[i][j] += dq[j];
        }

        // J(m)
        let (fx, fy) = (camera.fx, camera.fy);
        let iz2 = iz * iz;
        let iz3 = iz2 * iz;
        dm[0] += djac[0][2] * (-fx * iz2);
        dm[1] += djac[1][2] * (-fy * iz2);
        dm[2] += djac[0][0] * (-fx * iz2)
            + djac[1][1] * (-fy * iz2)
            + djac[0][2] * (two * fx * m[0] * iz3)
            + djac[1][2] * (two * fy * m[1] * iz3);

        let dp = matvec3(&transpose3(&camera.rotation), &dm);
        for j in 0..3 {
            grad.positions[i][j] += dp[j];
        }
    }
}
