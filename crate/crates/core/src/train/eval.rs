//! Image-quality evaluation over a dataset split.

use rayon::prelude::*;

use super::model::Model;
use crate::error::Result;
use crate::loss::{mse, psnr_from_mse, ssim, ssim_map};
use crate::render::{Image, RasterSettings};
use crate::synth::{Dataset, Frame, Split};

/// Metrics of one evaluated frame. The starred metrics cover pixels that
/// belong to dynamic objects and are absent when the frame has none.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub t: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_dynamic: Option<f64>,
    pub ssim_dynamic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    pub fn mean_psnr(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.psnr)).unwrap_or(f64::NAN)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.ssim)).unwrap_or(f64::NAN)
    }

    pub fn mean_psnr_dynamic(&self) -> Option<f64> {
        mean(self.frames.iter().filter_map(|f| f.psnr_dynamic))
    }

    pub fn mean_ssim_dynamic(&self) -> Option<f64> {
        mean(self.frames.iter().filter_map(|f| f.ssim_dynamic))
    }

    /// One CSV row per frame: `frame,t,psnr,ssim,psnr_dyn,ssim_dyn`, empty
    /// cells for missing starred metrics.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let mut out = String::from("frame,t,psnr,ssim,psnr_dyn,ssim_dyn\n");
        for f in &self.frames {
            out.push_str(&format!(
                "{},{:.6},{:.4},{:.6},{},{}\n",
                f.frame,
                f.t,
                f.psnr,
                f.ssim,
                opt(f.psnr_dynamic),
                opt(f.ssim_dynamic)
            ));
        }
        out
    }
}

/// PSNR over the pixels flagged in `mask`; `None` when none are.
pub fn masked_psnr(pred: &Image<f64>, target: &Image<f64>, mask: &[bool]) -> Option<f64> {
    let c = pred.channels;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for k in 0..c {
            sum += (pred.data[p * c + k] - target.data[p * c + k]).powi(2);
        }
        n += c;
    }
    (n > 0).then(|| psnr_from_mse(sum / n as f64))
}

/// Mean SSIM of the windows centered on flagged pixels; `None` when no
/// window qualifies.
pub fn masked_ssim(pred: &Image<f64>, target: &Image<f64>, mask: &[bool]) -> Result<Option<f64>> {
    let map = ssim_map(pred, target)?;
    let half = (pred.width - map.width) / 2;
    let vals = (0..map.height)
        .flat_map(|r| (0..map.width).map(move |c| (r, c)))
        .filter(|&(r, c)| mask[(r + half) * pred.width + c + half])
        .map(|(r, c)| map.data[r * map.width + c]);
    Ok(mean(vals))
}

/// Scores a rendered color image against frame `frame` of the dataset.
pub fn frame_metrics(rgb: &Image<f64>, frame: &Frame) -> Result<FrameMetrics> {
    let rgb = rgb.map(|v| v.clamp(0.0, 1.0));
    let dynamic: Vec<bool> = frame.mask.iter().map(|&m| m > 0).collect();
    Ok(FrameMetrics {
        frame: frame.index,
        t: frame.t,
        psnr: psnr_from_mse(mse(&rgb, &frame.rgb)?),
        ssim: ssim(&rgb, &frame.rgb)?,
        psnr_dynamic: masked_psnr(&rgb, &frame.rgb, &dynamic),
        ssim_dynamic: masked_ssim(&rgb, &frame.rgb, &dynamic)?,
    })
}

/// Renders every frame of `split`'s evaluation set and scores it.
pub fn evaluate(model: &Model, data: &Dataset, split: Split, settings: &RasterSettings) -> Result<EvalReport> {
    let (_, test) = data.split(split);
    let frames = test
        .par_iter()
        .map(|&i| {
            let f = &data.frames[i];
            let out = model.render(f.t, &f.camera, data.spec.sky, data.feature_background(), settings)?;
            frame_metrics(&out.rgb, f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { frames })
}
