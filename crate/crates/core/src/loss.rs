//! Training losses and image quality metrics.
//!
//! Each loss has a `_backward` companion returning the gradient of the loss
//! with respect to its first argument.

use crate::error::{Error, Result};
use crate::numeric::ParamBlock;
use crate::real::Real;
use crate::render::Image;

/// PSNR reported for identical images.
pub const PSNR_SENTINEL: f64 = 99.0;
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const COSINE_FLOOR: f64 = 1e-8;

fn check_shapes<T: Real>(a: &Image<T>, b: &Image<T>, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: {}x{}x{} vs {}x{}x{}", a.height, a.width, a.channels, b.height, b.width, b.channels)))
    }
}

/// Mean absolute difference over all entries.
pub fn l1_loss<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<T> {
    check_shapes(pred, target, "l1 loss")?;
    let n = T::lit(pred.data.len() as f64);
    Ok(pred.data.iter().zip(&target.data).map(|(a, b)| (*a - *b).abs()).sum::<T>() / n)
}

pub fn l1_backward<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<Image<T>> {
    check_shapes(pred, target, "l1 loss")?;
    let n = T::lit(pred.data.len() as f64);
    let sign = |d: T| {
        if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    };
    let data = pred.data.iter().zip(&target.data).map(|(a, b)| sign(*a - *b) / n).collect();
    Image::from_vec(pred.width, pred.height, pred.channels, data)
}

fn gaussian_window<T: Real>() -> [T; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..WINDOW).map(|k| (-((k as f64 - half).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    std::array::from_fn(|k| T::lit(raw[k] / sum))
}

/// Valid-region separable filtering of one `h × w` plane.
fn filter_valid<T: Real>(plane: &[T], w: usize, h: usize, g: &[T; WINDOW]) -> Vec<T> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut rows = vec![T::zero(); h * ow];
    for r in 0..h {
        for c in 0..ow {
            let mut acc = T::zero();
            for k in 0..WINDOW {
                acc += g[k] * plane[r * w + c + k];
            }
            rows[r * ow + c] = acc;
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = T::zero();
            for k in 0..WINDOW {
                acc += g[k] * rows[(r + k) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-region map back to the
/// full plane.
fn filter_valid_adjoint<T: Real>(grad: &[T], w: usize, h: usize, g: &[T; WINDOW]) -> Vec<T> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut rows = vec![T::zero(); h * ow];
    for r in 0..oh {
        for c in 0..ow {
            let v = grad[r * ow + c];
            for k in 0..WINDOW {
                rows[(r + k) * ow + c] += g[k] * v;
            }
        }
    }
    let mut out = vec![T::zero(); h * w];
    for r in 0..h {
        for c in 0..ow {
            let v = rows[r * ow + c];
            for k in 0..WINDOW {
                out[r * w + c + k] += g[k] * v;
            }
        }
    }
    out
}

struct SsimMaps<T> {
    mu_x: Vec<T>,
    mu_y: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
    b1: Vec<T>,
    b2: Vec<T>,
}

fn channel_plane<T: Real>(img: &Image<T>, ch: usize) -> Vec<T> {
    img.data.iter().skip(ch).step_by(img.channels).copied().collect()
}

fn ssim_maps<T: Real>(x: &[T], y: &[T], w: usize, h: usize, g: &[T; WINDOW]) -> SsimMaps<T> {
    let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
    let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
    let xy: Vec<T> = x.iter().zip(y).map(|(a, b)| *a * *b).collect();
    let mu_x = filter_valid(x, w, h, g);
    let mu_y = filter_valid(y, w, h, g);
    let sxx = filter_valid(&xx, w, h, g);
    let syy = filter_valid(&yy, w, h, g);
    let sxy = filter_valid(&xy, w, h, g);
    let (c1, c2, two) = (T::lit(C1), T::lit(C2), T::lit(2.0));
    let n = mu_x.len();
    let mut m = SsimMaps {
        a1: Vec::with_capacity(n),
        a2: Vec::with_capacity(n),
        b1: Vec::with_capacity(n),
        b2: Vec::with_capacity(n),
        mu_x,
        mu_y,
    };
    for i in 0..n {
        let (mx, my) = (m.mu_x[i], m.mu_y[i]);
        let (mxx, myy, mxy) = (mx * mx, my * my, mx * my);
        let var_x = sxx[i] - mxx;
        let var_y = syy[i] - myy;
        let cov = sxy[i] - mxy;
        m.a1.push(two * mxy + c1);
        m.a2.push(two * cov + c2);
        m.b1.push(mxx + myy + c1);
        m.b2.push(var_x + var_y + c2);
    }
    m
}

fn check_ssim_size<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    check_shapes(a, b, "ssim")?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::Shape(format!("ssim needs at least {WINDOW}x{WINDOW} pixels, got {}x{}", a.height, a.width)));
    }
    Ok(())
}

/// Mean SSIM over the valid region of every channel (11×11 Gaussian
/// window, σ = 1.5).
pub fn ssim<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<T> {
    check_ssim_size(pred, target)?;
    let g = gaussian_window::<T>();
    let (w, h) = (pred.width, pred.height);
    let mut sum = T::zero();
    let mut count = 0usize;
    for ch in 0..pred.channels {
        let m = ssim_maps(&channel_plane(pred, ch), &channel_plane(target, ch), w, h, &g);
        for i in 0..m.a1.len() {
            sum += (m.a1[i] * m.a2[i]) / (m.b1[i] * m.b2[i]);
        }
        count += m.a1.len();
    }
    Ok(sum / T::lit(count as f64))
}

/// Channel-averaged SSIM of every valid 11×11 window. Entry `(r, c)`
/// belongs to the window centered on pixel `(r + 5, c + 5)`.
pub fn ssim_map<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<Image<T>> {
    check_ssim_size(pred, target)?;
    let g = gaussian_window::<T>();
    let (w, h) = (pred.width, pred.height);
    let mut out = Image::new(w - WINDOW + 1, h - WINDOW + 1, 1);
    let k = T::lit(pred.channels as f64);
    for ch in 0..pred.channels {
        let m = ssim_maps(&channel_plane(pred, ch), &channel_plane(target, ch), w, h, &g);
        for i in 0..m.a1.len() {
            out.data[i] += (m.a1[i] * m.a2[i]) / (m.b1[i] * m.b2[i]) / k;
        }
    }
    Ok(out)
}

/// Gradient of [`ssim`] with respect to `pred`.
pub fn ssim_backward<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<Image<T>> {
    check_ssim_size(pred, target)?;
    let g = gaussian_window::<T>();
    let (w, h) = (pred.width, pred.height);
    let count = (w - WINDOW + 1) * (h - WINDOW + 1) * pred.channels;
    let inv = T::one() / T::lit(count as f64);
    let two = T::lit(2.0);
    let mut out = Image::new(w, h, pred.channels);
    for ch in 0..pred.channels {
        let x = channel_plane(pred, ch);
        let y = channel_plane(target, ch);
        let m = ssim_maps(&x, &y, w, h, &g);
        let n = m.a1.len();
        let mut d_mu = vec![T::zero(); n];
        let mut d_sxx = vec![T::zero(); n];
        let mut d_sxy = vec![T::zero(); n];
        for i in 0..n {
            let s = (m.a1[i] * m.a2[i]) / (m.b1[i] * m.b2[i]) * inv;
            let (mx, my) = (m.mu_x[i], m.mu_y[i]);
            d_mu[i] = s * (two * my / m.a1[i] - two * my / m.a2[i] - two * mx / m.b1[i] + two * mx / m.b2[i]);
            d_sxx[i] = -s / m.b2[i];
            d_sxy[i] = two * s / m.a2[i];
        }
        let gm = filter_valid_adjoint(&d_mu, w, h, &g);
        let gxx = filter_valid_adjoint(&d_sxx, w, h, &g);
        let gxy = filter_valid_adjoint(&d_sxy, w, h, &g);
        for p in 0..w * h {
            out.data[p * pred.channels + ch] = gm[p] + two * x[p] * gxx[p] + y[p] * gxy[p];
        }
    }
    Ok(out)
}

/// Structural dissimilarity `(1 - SSIM) / 2`.
pub fn dssim_loss<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<T> {
    Ok((T::one() - ssim(pred, target)?) / T::lit(2.0))
}

pub fn dssim_backward<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<Image<T>> {
    Ok(ssim_backward(pred, target)?.map(|v| -v / T::lit(2.0)))
}

fn tv_pairs<T>(planes: &[ParamBlock<T>]) -> Result<usize> {
    let mut pairs = 0;
    for p in planes {
        let [a, b, h] = p.shape[..] else {
            return Err(Error::Shape(format!("{}: total variation needs a [rows, cols, channels] block", p.name)));
        };
        pairs += ((a - 1) * b + a * (b - 1)) * h;
    }
    Ok(pairs)
}

fn for_each_pair(shape: &[usize], mut f: impl FnMut(usize, usize)) {
    let (a, b, h) = (shape[0], shape[1], shape[2]);
    for i in 0..a {
        for j in 0..b {
            let here = (i * b + j) * h;
            for c in 0..h {
                if i + 1 < a {
                    f(here + c, ((i + 1) * b + j) * h + c);
                }
                if j + 1 < b {
                    f(here + c, (i * b + j + 1) * h + c);
                }
            }
        }
    }
}

/// Mean squared difference between vertically and horizontally adjacent
/// cells, over every pair in every `[rows, cols, channels]` plane.
pub fn tv_loss<T: Real>(planes: &[ParamBlock<T>]) -> Result<T> {
    let pairs = tv_pairs(planes)?;
    if pairs == 0 {
        return Ok(T::zero());
    }
    let mut sum = T::zero();
    for p in planes {
        for_each_pair(&p.shape, |a, b| {
            let d = p.values[b] - p.values[a];
            sum += d * d;
        });
    }
    Ok(sum / T::lit(pairs as f64))
}

/// Adds `scale * d(tv_loss)/d(values)` to each plane's gradient.
pub fn tv_backward<T: Real>(planes: &mut [ParamBlock<T>], scale: T) -> Result<()> {
    let pairs = tv_pairs(planes)?;
    if pairs == 0 {
        return Ok(());
    }
    let k = T::lit(2.0) * scale / T::lit(pairs as f64);
    for p in planes.iter_mut() {
        let ParamBlock { shape, values, grad, .. } = p;
        for_each_pair(shape, |a, b| {
            let d = k * (values[b] - values[a]);
            grad[b] += d;
            grad[a] -= d;
        });
    }
    Ok(())
}

/// Mean absolute depth error over masked pixels; 0 for an empty mask.
pub fn depth_loss<T: Real>(pred: &Image<T>, target: &Image<T>, mask: &[bool]) -> Result<T> {
    check_shapes(pred, target, "depth loss")?;
    if pred.channels != 1 || mask.len() != pred.data.len() {
        return Err(Error::Shape("depth loss needs single-channel images and one mask entry per pixel".into()));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok(T::zero());
    }
    let sum: T = (0..mask.len()).filter(|&i| mask[i]).map(|i| (pred.data[i] - target.data[i]).abs()).sum();
    Ok(sum / T::lit(count as f64))
}

pub fn depth_backward<T: Real>(pred: &Image<T>, target: &Image<T>, mask: &[bool]) -> Result<Image<T>> {
    depth_loss(pred, target, mask)?;
    let count = mask.iter().filter(|&&m| m).count().max(1);
    let n = T::lit(count as f64);
    let mut out = Image::new(pred.width, pred.height, 1);
    for i in 0..mask.len() {
        if mask[i] {
            let d = pred.data[i] - target.data[i];
            out.data[i] = if d > T::zero() {
                T::one() / n
            } else if d < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            };
        }
    }
    Ok(out)
}

/// Pixels where the rendered accumulation exceeds 0.5 and the target depth
/// is positive.
pub fn depth_mask<T: Real>(accum: &Image<T>, target: &Image<T>) -> Vec<bool> {
    let half = T::lit(0.5);
    accum.data.iter().zip(&target.data).map(|(a, t)| *a > half && *t > T::zero()).collect()
}

/// Mean over pixels of `1 - cos(pred, teacher)`; pixels whose predicted
/// feature has norm below 1e-8 contribute 1.
pub fn feature_cosine_loss<T: Real>(pred: &Image<T>, teacher: &Image<T>) -> Result<T> {
    check_shapes(pred, teacher, "feature loss")?;
    let f = pred.channels;
    let floor = T::lit(COSINE_FLOOR);
    let mut sum = T::zero();
    for (p, t) in pred.data.chunks(f).zip(teacher.data.chunks(f)) {
        let pn = crate::real::norm(p);
        let tn = crate::real::norm(t);
        if pn < floor || tn == T::zero() {
            sum += T::one();
        } else {
            let dot: T = p.iter().zip(t).map(|(a, b)| *a * *b).sum();
            sum += T::one() - dot / (pn * tn);
        }
    }
    Ok(sum / T::lit(pred.pixels() as f64))
}

pub fn feature_cosine_backward<T: Real>(pred: &Image<T>, teacher: &Image<T>) -> Result<Image<T>> {
    check_shapes(pred, teacher, "feature loss")?;
    let f = pred.channels;
    let floor = T::lit(COSINE_FLOOR);
    let inv = T::one() / T::lit(pred.pixels() as f64);
    let mut out = Image::new(pred.width, pred.height, f);
    for ((p, t), o) in pred.data.chunks(f).zip(teacher.data.chunks(f)).zip(out.data.chunks_mut(f)) {
        let pn = crate::real::norm(p);
        let tn = crate::real::norm(t);
        if pn < floor || tn == T::zero() {
            continue;
        }
        let dot: T = p.iter().zip(t).map(|(a, b)| *a * *b).sum();
        let cos = dot / (pn * tn);
        for k in 0..f {
            o[k] = -(t[k] / tn - cos * p[k] / pn) / pn * inv;
        }
    }
    Ok(out)
}

/// Weights of the five training terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub rgb: f64,
    pub dssim: f64,
    pub tv: f64,
    pub depth: f64,
    pub feature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rgb: 1.0, dssim: 0.2, tv: 1.0, depth: 0.5, feature: 1.0 }
    }
}

/// Unweighted loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub rgb: f64,
    pub dssim: f64,
    pub tv: f64,
    pub depth: f64,
    pub feature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub terms: LossTerms,
    pub total: f64,
}

impl LossTerms {
    /// Term names paired with values, in log order.
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [("rgb", self.rgb), ("dssim", self.dssim), ("tv", self.tv), ("depth", self.depth), ("feature", self.feature)]
    }
}

pub fn total_loss(terms: LossTerms, w: &LossWeights) -> LossReport {
    let total = w.rgb * terms.rgb + w.dssim * terms.dssim + w.tv * terms.tv + w.depth * terms.depth + w.feature * terms.feature;
    LossReport { terms, total }
}

pub fn mse<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<f64> {
    check_shapes(pred, target, "mse")?;
    let sum: f64 = pred.data.iter().zip(&target.data).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    Ok(sum / pred.data.len() as f64)
}

/// `10 log10(1 / mse)`, or the sentinel 99 when `mse` is zero.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_SENTINEL
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, target)?))
}
