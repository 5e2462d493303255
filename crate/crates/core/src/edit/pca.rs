//! Three-channel visualization of a feature image by principal components.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::render::Image;

/// Components whose variance is below this fraction of the largest are
/// treated as degenerate.
const DEGENERATE: f64 = 1e-12;

/// Projects every pixel onto the top three principal components of the
/// image's feature vectors and min-max normalizes each channel to `[0, 1]`.
///
/// Each component's largest-magnitude loading is made positive. A
/// degenerate component (for instance of a constant image) yields 0.5.
pub fn pca_image(feature: &Image<f64>) -> Result<Image<f64>> {
    let f = feature.channels;
    if f < 3 {
        return Err(Error::Edit(format!("PCA needs at least 3 feature channels, image has {f}")));
    }
    let n = feature.pixels();
    let mut mean = vec![0.0; f];
    for p in 0..n {
        for k in 0..f {
            mean[k] += feature.data[p * f + k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut cov = DMatrix::<f64>::zeros(f, f);
    for p in 0..n {
        let x: Vec<f64> = (0..f).map(|k| feature.data[p * f + k] - mean[k]).collect();
        for a in 0..f {
            for b in 0..f {
                cov[(a, b)] += x[a] * x[b];
            }
        }
    }
    cov /= n.max(1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut out = Image::new(feature.width, feature.height, 3);
    for (ch, &c) in order.iter().take(3).enumerate() {
        let lambda = eig.eigenvalues[c];
        if !(top > 0.0) || lambda <= DEGENERATE * top {
            for p in 0..n {
                out.data[p * 3 + ch] = 0.5;
            }
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = (0..f).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap();
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let proj: Vec<f64> = (0..n).map(|p| (0..f).map(|k| (feature.data[p * f + k] - mean[k]) * v[k]).sum::<f64>()).collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for p in 0..n {
            out.data[p * 3 + ch] = if hi > lo { (proj[p] - lo) / (hi - lo) } else { 0.5 };
        }
    }
    Ok(out)
}
