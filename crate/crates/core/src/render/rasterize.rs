//! Front-to-back alpha compositing of depth-sorted splats.
//!
//! Splats are binned into 16×16 pixel tiles using their exact skip radius,
//! so binning never changes which splats a pixel composites.

use rayon::prelude::*;

use super::image::Image;
use super::project::{ScreenSplat, SplatGrad};
use super::RasterSettings;
use crate::error::{Error, Result};
use crate::real::Real;

const TILE: usize = 16;
/// Row bands in the backward pass; fixed so gradient sums are reproducible.
const BANDS: usize = 8;

/// Rendered planes sharing one compositing pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput<T> {
    pub rgb: Image<T>,
    /// Expected depth where `accum > 0.5`, else 0.
    pub depth: Image<T>,
    pub feature: Image<T>,
    pub accum: Image<T>,
}

/// Per-output gradients fed to [`rasterize_backward`]. `None` means zero.
#[derive(Clone, Debug, Default)]
pub struct OutputGrads<T> {
    pub rgb: Option<Image<T>>,
    pub depth: Option<Image<T>>,
    pub feature: Option<Image<T>>,
    pub accum: Option<Image<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Contribution<T> {
    splat: u32,
    alpha: T,
    gauss: T,
    /// Transmittance in front of this splat.
    transmittance: T,
    clamped: bool,
}

#[derive(Clone, Debug)]
struct RowState<T> {
    transmittance: Vec<T>,
    rgb: Vec<T>,
    feature: Vec<T>,
    depth: Vec<T>,
    done: Vec<bool>,
    contribs: Vec<Vec<Contribution<T>>>,
}

/// Compositing state carried across batches of splats. Adding the sorted
/// splat list in any number of consecutive pieces gives the same result as
/// adding it in one piece.
#[derive(Clone, Debug)]
pub struct Compositor<T> {
    width: usize,
    height: usize,
    feature_dim: usize,
    settings: RasterSettings,
    rows: Vec<RowState<T>>,
    splats: Vec<ScreenSplat<T>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardState<T> {
    pub splats: Vec<ScreenSplat<T>>,
    width: usize,
    height: usize,
    feature_dim: usize,
    background: [T; 3],
    feature_background: Vec<T>,
    rows: Vec<RowState<T>>,
}

impl<T: Real> Compositor<T> {
    pub fn new(width: usize, height: usize, feature_dim: usize, settings: RasterSettings) -> Self {
        let row = RowState {
            transmittance: vec![T::one(); width],
            rgb: vec![T::zero(); width * 3],
            feature: vec![T::zero(); width * feature_dim],
            depth: vec![T::zero(); width],
            done: vec![false; width],
            contribs: vec![Vec::new(); width],
        };
        Self { width, height, feature_dim, settings, rows: vec![row; height], splats: Vec::new() }
    }

    /// Composites `splats` (depth-sorted, all behind previously added ones).
    pub fn add(&mut self, splats: &[ScreenSplat<T>]) -> Result<()> {
        if let Some(s) = splats.iter().find(|s| s.feature.len() != self.feature_dim) {
            return Err(Error::Shape(format!("splat {} has feature width {}", s.index, s.feature.len())));
        }
        let base = self.splats.len();
        self.splats.extend_from_slice(splats);
        let splats = &self.splats[base..];
        let tiles_x = self.width.div_ceil(TILE);
        let tiles_y = self.height.div_ceil(TILE);
        let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
        let (w, h) = (self.width as f64, self.height as f64);
        for (k, s) in splats.iter().enumerate() {
            let r = s.radius.as_f64();
            let (u, v) = (s.mean2d[0].as_f64(), s.mean2d[1].as_f64());
            let c0 = (u - r - 0.5).ceil().max(0.0);
            let c1 = (u + r - 0.5).floor().min(w - 1.0);
            let r0 = (v - r - 0.5).ceil().max(0.0);
            let r1 = (v + r - 0.5).floor().min(h - 1.0);
            if !(c0 <= c1 && r0 <= r1) {
                continue;
            }
            for ty in (r0 as usize / TILE)..=(r1 as usize / TILE) {
                for tx in (c0 as usize / TILE)..=(c1 as usize / TILE) {
                    bins[ty * tiles_x + tx].push((base + k) as u32);
                }
            }
        }
        let settings = self.settings;
        let feature_dim = self.feature_dim;
        let all = &self.splats;
        let width = self.width;
        self.rows.par_iter_mut().enumerate().for_each(|(row, state)| {
            composite_row(row, width, tiles_x, &bins, all, feature_dim, &settings, state);
        });
        Ok(())
    }

    pub fn finish(self, background: [T; 3], feature_background: &[T]) -> Result<(RenderOutput<T>, ForwardState<T>)> {
        if feature_background.len() != self.feature_dim {
            return Err(Error::Shape(format!(
                "feature background has width {}, splats have {}",
                feature_background.len(),
                self.feature_dim
            )));
        }
        let (w, h, f) = (self.width, self.height, self.feature_dim);
        let mut rgb = Image::new(w, h, 3);
        let mut feature = Image::new(w, h, f);
        let mut depth = Image::new(w, h, 1);
        let mut accum = Image::new(w, h, 1);
        let half = T::lit(0.5);
        for (r, row) in self.rows.iter().enumerate() {
            for c in 0..w {
                let t = row.transmittance[c];
                let px = rgb.pixel_mut(r, c);
                for ch in 0..3 {
                    px[ch] = row.rgb[c * 3 + ch] + t * background[ch];
                }
                let fx = feature.pixel_mut(r, c);
                for k in 0..f {
                    fx[k] = row.feature[c * f + k] + t * feature_background[k];
                }
                let a = T::one() - t;
                accum.pixel_mut(r, c)[0] = a;
                depth.pixel_mut(r, c)[0] = if a > half { row.depth[c] / a } else { T::zero() };
            }
        }
        let state = ForwardState {
            splats: self.splats,
            width: w,
            height: h,
            feature_dim: f,
            background,
            feature_background: feature_background.to_vec(),
            rows: self.rows,
        };
        Ok((RenderOutput { rgb, depth, feature, accum }, state))
    }
}

#[allow(clippy::too_many_arguments)]
fn composite_row<T: Real>(
    row: usize,
    width: usize,
    tiles_x: usize,
    bins: &[Vec<u32>],
    splats: &[ScreenSplat<T>],
    f: usize,
    settings: &RasterSettings,
    state: &mut RowState<T>,
) {
    let skip = T::lit(settings.skip_threshold);
    let clamp = T::lit(settings.alpha_clamp);
    let stop = T::lit(settings.termination);
    let half = T::lit(0.5);
    let py = T::lit(row as f64) + half;
    for col in 0..width {
        if state.done[col] {
            continue;
        }
        let bin = &bins[(row / TILE) * tiles_x + col / TILE];
        if bin.is_empty() {
            continue;
        }
        let px = T::lit(col as f64) + half;
        let mut t = state.transmittance[col];
        for &s in bin {
            let sp = &splats[s as usize];
            let dx = px - sp.mean2d[0];
            let dy = py - sp.mean2d[1];
            let k = &sp.inv_cov2d;
            let power = -half * (k[0][0] * dx * dx + (k[0][1] + k[1][0]) * dx * dy + k[1][1] * dy * dy);
            let gauss = power.exp();
            let raw = sp.opacity * gauss;
            let clamped = raw > clamp;
            let alpha = if clamped { clamp } else { raw };
            if alpha < skip {
                continue;
            }
            let w = alpha * t;
            for ch in 0..3 {
                state.rgb[col * 3 + ch] += w * sp.color[ch];
            }
            let fo = &mut state.feature[col * f..(col + 1) * f];
            for (o, v) in fo.iter_mut().zip(&sp.feature) {
                *o += w * *v;
            }
            state.depth[col] += w * sp.depth;
            state.contribs[col].push(Contribution { splat: s, alpha, gauss, transmittance: t, clamped });
            t *= T::one() - alpha;
            if t < stop {
                state.done[col] = true;
                break;
            }
        }
        state.transmittance[col] = t;
    }
}

/// Composites depth-sorted splats over `background` / `feature_background`.
pub fn rasterize<T: Real>(
    splats: &[ScreenSplat<T>],
    width: usize,
    height: usize,
    background: [T; 3],
    feature_background: &[T],
    settings: &RasterSettings,
) -> Result<(RenderOutput<T>, ForwardState<T>)> {
    let mut comp = Compositor::new(width, height, feature_background.len(), *settings);
    comp.add(splats)?;
    comp.finish(background, feature_background)
}

fn check_grad_image<T: Real>(img: &Option<Image<T>>, w: usize, h: usize, c: usize, what: &str) -> Result<()> {
    match img {
        Some(i) if i.width != w || i.height != h || i.channels != c => {
            Err(Error::Shape(format!("{what} gradient is {}x{}x{}, expected {h}x{w}x{c}", i.height, i.width, i.channels)))
        }
        _ => Ok(()),
    }
}

/// Gradients with respect to every splat in `state.splats`, in that order.
pub fn rasterize_backward<T: Real>(state: &ForwardState<T>, grads: &OutputGrads<T>) -> Result<Vec<SplatGrad<T>>> {
    let (w, h, f) = (state.width, state.height, state.feature_dim);
    check_grad_image(&grads.rgb, w, h, 3, "rgb")?;
    check_grad_image(&grads.depth, w, h, 1, "depth")?;
    check_grad_image(&grads.feature, w, h, f, "feature")?;
    check_grad_image(&grads.accum, w, h, 1, "accum")?;
    let n = state.splats.len();
    let band_rows = h.div_ceil(BANDS).max(1);
    let bands: Vec<(usize, usize)> = (0..h).step_by(band_rows).map(|r| (r, (r + band_rows).min(h))).collect();
    let partial: Vec<Vec<SplatGrad<T>>> = bands
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out = vec![SplatGrad::zeros(f); n];
            for r in lo..hi {
                backward_row(state, grads, r, &mut out);
            }
            out
        })
        .collect();
    let mut total = vec![SplatGrad::zeros(f); n];
    for band in &partial {
        for (t, g) in total.iter_mut().zip(band) {
            t.add_assign(g);
        }
    }
    Ok(total)
}

fn backward_row<T: Real>(state: &ForwardState<T>, grads: &OutputGrads<T>, r: usize, out: &mut [SplatGrad<T>]) {
    let f = state.feature_dim;
    let half = T::lit(0.5);
    let zero3 = [T::zero(); 3];
    let zero_f = vec![T::zero(); f];
    let row = &state.rows[r];
    let mut b_f = vec![T::zero(); f];
    for c in 0..state.width {
        let contribs = &row.contribs[c];
        if contribs.is_empty() {
            continue;
        }
        let g_rgb: [T; 3] = grads.rgb.as_ref().map_or(zero3, |i| {
            let p = i.pixel(r, c);
            [p[0], p[1], p[2]]
        });
        let g_f: &[T] = grads.feature.as_ref().map_or(&zero_f[..], |i| i.pixel(r, c));
        let g_depth = grads.depth.as_ref().map_or(T::zero(), |i| i.pixel(r, c)[0]);
        let mut g_acc = grads.accum.as_ref().map_or(T::zero(), |i| i.pixel(r, c)[0]);
        let a = T::one() - row.transmittance[c];
        let mut g_num = T::zero();
        if a > half && g_depth != T::zero() {
            g_num = g_depth / a;
            g_acc -= g_depth * row.depth[c] / (a * a);
        }
        let mut b_rgb = state.background;
        b_f.copy_from_slice(&state.feature_background);
        let mut b_z = T::zero();
        let mut b_a = T::zero();
        let px = T::lit(c as f64) + half;
        let py = T::lit(r as f64) + half;
        for con in contribs.iter().rev() {
            let sp = &state.splats[con.splat as usize];
            let sg = &mut out[con.splat as usize];
            let alpha = con.alpha;
            let wgt = alpha * con.transmittance;
            let mut d_alpha = T::zero();
            for ch in 0..3 {
                d_alpha += g_rgb[ch] * (sp.color[ch] - b_rgb[ch]);
                sg.color[ch] += wgt * g_rgb[ch];
                b_rgb[ch] = alpha * sp.color[ch] + (T::one() - alpha) * b_rgb[ch];
            }
            for k in 0..f {
                d_alpha += g_f[k] * (sp.feature[k] - b_f[k]);
                sg.feature[k] += wgt * g_f[k];
                b_f[k] = alpha * sp.feature[k] + (T::one() - alpha) * b_f[k];
            }
            d_alpha += g_num * (sp.depth - b_z) + g_acc * (T::one() - b_a);
            sg.depth += wgt * g_num;
            b_z = alpha * sp.depth + (T::one() - alpha) * b_z;
            b_a = alpha + (T::one() - alpha) * b_a;
            d_alpha *= con.transmittance;
            if con.clamped {
                continue;
            }
            sg.opacity += d_alpha * con.gauss;
            let d_power = d_alpha * sp.opacity * con.gauss;
            let dx = px - sp.mean2d[0];
            let dy = py - sp.mean2d[1];
            let k = &sp.inv_cov2d;
            let kx = half * (k[0][1] + k[1][0]);
            sg.mean2d[0] += d_power * (k[0][0] * dx + kx * dy);
            sg.mean2d[1] += d_power * (k[1][1] * dy + kx * dx);
            sg.inv_cov2d[0][0] -= half * dx * dx * d_power;
            sg.inv_cov2d[0][1] -= half * dx * dy * d_power;
            sg.inv_cov2d[1][0] -= half * dx * dy * d_power;
            sg.inv_cov2d[1][1] -= half * dy * dy * d_power;
        }
    }
}
