//! 3D covariance from scale and rotation, and its perspective projection.

use crate::error::{Error, Result};
use crate::real::Real;

pub type Mat3<T> = [[T; 3]; 3];
pub type Mat2<T> = [[T; 2]; 2];

/// Added to both diagonal entries of every projected covariance (pixel²).
pub const LOW_PASS_FLOOR: f64 = 0.3;

pub(crate) fn matmul3<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn transpose3<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub(crate) fn matvec3<T: Real>(a: &Mat3<T>, v: &[T; 3]) -> [T; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Unit quaternion `(w, x, y, z)` from a raw one.
pub fn normalize_quaternion<T: Real>(q: &[T; 4]) -> Result<[T; 4]> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > T::zero()) {
        return Err(Error::InvalidRotation);
    }
    Ok([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quaternion_to_matrix<T: Real>(q: &[T; 4]) -> Mat3<T> {
    let [w, x, y, z] = *q;
    let one = T::one();
    let two = T::lit(2.0);
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Pulls a rotation-matrix gradient back to the raw (unnormalized) quaternion.
pub(crate) fn quaternion_backward<T: Real>(q_raw: &[T; 4], d_r: &Mat3<T>) -> [T; 4] {
    let n = (q_raw[0] * q_raw[0] + q_raw[1] * q_raw[1] + q_raw[2] * q_raw[2] + q_raw[3] * q_raw[3]).sqrt();
    let [w, x, y, z] = [q_raw[0] / n, q_raw[1] / n, q_raw[2] / n, q_raw[3] / n];
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let g = d_r;
    let dw = two * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = two * (y * g[0][1] + z * g[0][2] + y * g[1][0] - w * g[1][2] + z * g[2][0] + w * g[2][1])
        - four * x * (g[1][1] + g[2][2]);
    let dy = two * (x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0] + z * g[2][1])
        - four * y * (g[0][0] + g[2][2]);
    let dz = two * (-w * g[0][1] + x * g[0][2] + w * g[1][0] + y * g[1][2] + x * g[2][0] + y * g[2][1])
        - four * z * (g[0][0] + g[1][1]);
    let dn = [dw, dx, dy, dz];
    let qn = [w, x, y, z];
    let proj = dn.iter().zip(&qn).fold(T::zero(), |a, (d, q)| a + *d * *q);
    [(dn[0] - qn[0] * proj) / n, (dn[1] - qn[1] * proj) / n, (dn[2] - qn[2] * proj) / n, (dn[3] - qn[3] * proj) / n]
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))` and `R` from the
/// normalized quaternion.
pub fn build_covariance<T: Real>(log_scale: &[T; 3], q: &[T; 4]) -> Result<Mat3<T>> {
    let r = quaternion_to_matrix(&normalize_quaternion(q)?);
    let s = [log_scale[0].exp(), log_scale[1].exp(), log_scale[2].exp()];
    let mut sigma = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = (0..3).fold(T::zero(), |acc, k| acc + r[i][k] * s[k] * s[k] * r[j][k]);
            sigma[i][j] = v;
            sigma[j][i] = v;
        }
    }
    Ok(sigma)
}

/// Gradients of `build_covariance` with respect to `log_scale` and raw `q`,
/// given the (full, not necessarily symmetric) gradient `d_sigma`.
pub fn build_covariance_backward<T: Real>(log_scale: &[T; 3], q: &[T; 4], d_sigma: &Mat3<T>) -> ([T; 3], [T; 4]) {
    let qn = normalize_quaternion(q).expect("quaternion validated in forward pass");
    let r = quaternion_to_matrix(&qn);
    let s = [log_scale[0].exp(), log_scale[1].exp(), log_scale[2].exp()];
    // Σ = M Mᵀ with M = R S  →  dM = (dΣ + dΣᵀ) M
    let mut m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            m[i][k] = r[i][k] * s[k];
        }
    }
    let mut sym = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sym[i][j] = d_sigma[i][j] + d_sigma[j][i];
        }
    }
    let dm = matmul3(&sym, &m);
    let mut d_ls = [T::zero(); 3];
    let mut d_r = [[T::zero(); 3]; 3];
    for k in 0..3 {
        let mut ds = T::zero();
        for i in 0..3 {
            ds += dm[i][k] * r[i][k];
            d_r[i][k] = dm[i][k] * s[k];
        }
        d_ls[k] = ds * s[k];
    }
    (d_ls, quaternion_backward(q, &d_r))
}

/// Jacobian of the pinhole projection at a camera-space point.
pub(crate) fn projection_jacobian<T: Real>(fx: T, fy: T, mean_cam: &[T; 3]) -> [[T; 3]; 2] {
    let [x, y, z] = *mean_cam;
    let iz = T::one() / z;
    [[fx * iz, T::zero(), -fx * x * iz * iz], [T::zero(), fy * iz, -fy * y * iz * iz]]
}

/// `J A Jᵀ + floor·I` for a camera-space covariance `A`.
pub(crate) fn project_camera_covariance<T: Real>(jac: &[[T; 3]; 2], a: &Mat3<T>) -> Mat2<T> {
    let mut ja = [[T::zero(); 3]; 2];
    for i in 0..2 {
        for k in 0..3 {
            ja[i][k] = jac[i][0] * a[0][k] + jac[i][1] * a[1][k] + jac[i][2] * a[2][k];
        }
    }
    let floor = T::lit(LOW_PASS_FLOOR);
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = ja[i][0] * jac[j][0] + ja[i][1] * jac[j][1] + ja[i][2] * jac[j][2];
        }
        out[i][i] += floor;
    }
    out
}

/// `Σ′ = J W Σ Wᵀ Jᵀ` plus the low-pass floor, where `world_rotation` is the
/// rotation part of the world-to-camera transform.
pub fn project_covariance<T: Real>(sigma: &Mat3<T>, world_rotation: &Mat3<T>, fx: T, fy: T, mean_cam: &[T; 3]) -> Mat2<T> {
    let a = matmul3(&matmul3(world_rotation, sigma), &transpose3(world_rotation));
    project_camera_covariance(&projection_jacobian(fx, fy, mean_cam), &a)
}

/// Inverse of a 2×2 matrix, or `None` when singular.
pub fn invert2<T: Real>(m: &Mat2<T>) -> Option<Mat2<T>> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    Some([[m[1][1] * inv, -m[0][1] * inv], [-m[1][0] * inv, m[0][0] * inv]])
}
