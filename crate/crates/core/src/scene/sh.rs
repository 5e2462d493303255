//! Real spherical harmonics up to degree 3 (16 basis functions per channel).
//!
//! Coefficients are stored channel-major: `coeffs[c * 16 + k]` multiplies
//! basis function `k` for color channel `c`. The basis and sign convention is
//! the one used by the reference Gaussian splatting rasterizer.

use crate::real::Real;

pub const SH_BASIS: usize = 16;
pub const SH_COEFFS: usize = 3 * SH_BASIS;
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
/// Added to every channel after the basis sum.
pub const COLOR_OFFSET: f64 = 0.5;

const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub fn sh_basis<T: Real>(dir: &[T; 3]) -> [T; SH_BASIS] {
    let [x, y, z] = *dir;
    let c = T::lit;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    [
        c(SH_C0),
        -c(C1) * y,
        c(C1) * z,
        -c(C1) * x,
        c(C2[0]) * xy,
        c(C2[1]) * yz,
        c(C2[2]) * (c(2.0) * zz - xx - yy),
        c(C2[3]) * xz,
        c(C2[4]) * (xx - yy),
        c(C3[0]) * y * (c(3.0) * xx - yy),
        c(C3[1]) * xy * z,
        c(C3[2]) * y * (c(4.0) * zz - xx - yy),
        c(C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy),
        c(C3[4]) * x * (c(4.0) * zz - xx - yy),
        c(C3[5]) * z * (xx - yy),
        c(C3[6]) * x * (xx - c(3.0) * yy),
    ]
}

/// Partial derivatives of each basis function with respect to the raw
/// direction components (no normalization constraint).
pub fn sh_basis_gradient<T: Real>(dir: &[T; 3]) -> [[T; 3]; SH_BASIS] {
    let [x, y, z] = *dir;
    let c = T::lit;
    let o = T::zero();
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        [o, o, o],
        [o, -c(C1), o],
        [o, o, c(C1)],
        [-c(C1), o, o],
        [c(C2[0]) * y, c(C2[0]) * x, o],
        [o, c(C2[1]) * z, c(C2[1]) * y],
        [c(-2.0 * C2[2]) * x, c(-2.0 * C2[2]) * y, c(4.0 * C2[2]) * z],
        [c(C2[3]) * z, o, c(C2[3]) * x],
        [c(2.0 * C2[4]) * x, c(-2.0 * C2[4]) * y, o],
        [c(6.0 * C3[0]) * x * y, c(3.0 * C3[0]) * (xx - yy), o],
        [c(C3[1]) * y * z, c(C3[1]) * x * z, c(C3[1]) * x * y],
        [c(-2.0 * C3[2]) * x * y, c(C3[2]) * (c(4.0) * zz - xx - c(3.0) * yy), c(8.0 * C3[2]) * y * z],
        [c(-6.0 * C3[3]) * x * z, c(-6.0 * C3[3]) * y * z, c(C3[3]) * (c(6.0) * zz - c(3.0) * xx - c(3.0) * yy)],
        [c(C3[4]) * (c(4.0) * zz - c(3.0) * xx - yy), c(-2.0 * C3[4]) * x * y, c(8.0 * C3[4]) * x * z],
        [c(2.0 * C3[5]) * x * z, c(-2.0 * C3[5]) * y * z, c(C3[5]) * (xx - yy)],
        [c(3.0 * C3[6]) * (xx - yy), c(-6.0 * C3[6]) * x * y, o],
    ]
}

/// Unclamped color: basis sum plus the 0.5 offset per channel.
pub fn evaluate_sh<T: Real>(coeffs: &[T], view_dir: &[T; 3]) -> [T; 3] {
    debug_assert_eq!(coeffs.len(), SH_COEFFS);
    let basis = sh_basis(view_dir);
    let mut rgb = [T::lit(COLOR_OFFSET); 3];
    for (ch, out) in rgb.iter_mut().enumerate() {
        let row = &coeffs[ch * SH_BASIS..(ch + 1) * SH_BASIS];
        for k in 0..SH_BASIS {
            *out += row[k] * basis[k];
        }
    }
    rgb
}

/// DC coefficient that reproduces `value` for a channel with no higher orders.
pub fn dc_from_color<T: Real>(value: T) -> T {
    (value - T::lit(COLOR_OFFSET)) / T::lit(SH_C0)
}
