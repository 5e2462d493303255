//! Training configuration as a flat `key = value` file.

use crate::awareness::Awareness;
use crate::error::{Error, Result};
use crate::kvconf::KvFile;
use crate::loss::LossWeights;

/// Learning-rate multipliers per parameter group, applied on top of the
/// shared exponential schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrScales {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub feature: f64,
    pub grid: f64,
    pub network: f64,
}

impl Default for LrScales {
    fn default() -> Self {
        Self { position: 1.0, scale: 1.0, rotation: 1.0, opacity: 1.0, color: 1.0, feature: 1.0, grid: 1.0, network: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub total_steps: u64,
    /// Steps of static fitting before the deformation is switched on.
    pub static_phase_steps: u64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lr_scales: LrScales,
    pub weights: LossWeights,
    pub feature_dim: usize,
    /// Width of the sinusoidal time embedding.
    pub embed_dim: usize,
    pub hexplane_resolutions: Vec<usize>,
    pub hexplane_channels: usize,
    pub hexplane_init: f64,
    pub latent_hidden: usize,
    pub latent_dim: usize,
    pub head_hidden: usize,
    pub dcn_hidden: usize,
    pub dcn_enabled: bool,
    pub awareness: Awareness,
    pub prune_interval: u64,
    pub prune_threshold: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            total_steps: 3000,
            static_phase_steps: 1200,
            lr_start: 1.6e-3,
            lr_end: 1.6e-4,
            lr_scales: LrScales::default(),
            weights: LossWeights::default(),
            feature_dim: 8,
            embed_dim: 64,
            hexplane_resolutions: vec![16, 32],
            hexplane_channels: 8,
            hexplane_init: 0.1,
            latent_hidden: 64,
            latent_dim: 64,
            head_hidden: 32,
            dcn_hidden: 64,
            dcn_enabled: true,
            awareness: Awareness::default(),
            prune_interval: 500,
            prune_threshold: 0.005,
            seed: 0,
        }
    }
}

fn config_error(m: String) -> Error {
    Error::Config(m)
}

impl TrainingConfig {
    /// Parses a config file; absent keys keep their defaults, except that
    /// `static_phase_steps` defaults to 40% of `total_steps`.
    pub fn parse(text: &str) -> Result<Self> {
        let d = Self::default();
        let mut kv = KvFile::parse(text, config_error)?;
        let total_steps = kv.take_or("total_steps", d.total_steps)?;
        let static_phase_steps = kv.take_or("static_phase_steps", total_steps * 2 / 5)?;
        let resolutions = match kv.take::<String>("hexplane_resolutions")? {
            None => d.hexplane_resolutions.clone(),
            Some(s) => s
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("`hexplane_resolutions`: {e}")))?,
        };
        let s = d.lr_scales;
        let w = d.weights;
        let a = d.awareness;
        let cfg = Self {
            total_steps,
            static_phase_steps,
            lr_start: kv.take_or("lr_start", d.lr_start)?,
            lr_end: kv.take_or("lr_end", d.lr_end)?,
            lr_scales: LrScales {
                position: kv.take_or("lr_scale.position", s.position)?,
                scale: kv.take_or("lr_scale.scale", s.scale)?,
                rotation: kv.take_or("lr_scale.rotation", s.rotation)?,
                opacity: kv.take_or("lr_scale.opacity", s.opacity)?,
                color: kv.take_or("lr_scale.color", s.color)?,
                feature: kv.take_or("lr_scale.feature", s.feature)?,
                grid: kv.take_or("lr_scale.grid", s.grid)?,
                network: kv.take_or("lr_scale.network", s.network)?,
            },
            weights: LossWeights {
                rgb: kv.take_or("weight.rgb", w.rgb)?,
                dssim: kv.take_or("weight.dssim", w.dssim)?,
                tv: kv.take_or("weight.tv", w.tv)?,
                depth: kv.take_or("weight.depth", w.depth)?,
                feature: kv.take_or("weight.feature", w.feature)?,
            },
            feature_dim: kv.take_or("feature_dim", d.feature_dim)?,
            embed_dim: kv.take_or("embed_dim", d.embed_dim)?,
            hexplane_resolutions: resolutions,
            hexplane_channels: kv.take_or("hexplane_channels", d.hexplane_channels)?,
            hexplane_init: kv.take_or("hexplane_init", d.hexplane_init)?,
            latent_hidden: kv.take_or("latent_hidden", d.latent_hidden)?,
            latent_dim: kv.take_or("latent_dim", d.latent_dim)?,
            head_hidden: kv.take_or("head_hidden", d.head_hidden)?,
            dcn_hidden: kv.take_or("dcn_hidden", d.dcn_hidden)?,
            dcn_enabled: kv.take_or("dcn_enabled", d.dcn_enabled)?,
            awareness: Awareness {
                time: kv.take_or("awareness.time", a.time)?,
                deformation: kv.take_or("awareness.deformation", a.deformation)?,
                context: kv.take_or("awareness.context", a.context)?,
            },
            prune_interval: kv.take_or("prune_interval", d.prune_interval)?,
            prune_threshold: kv.take_or("prune_threshold", d.prune_threshold)?,
            seed: kv.take_or("seed", d.seed)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let s = &self.lr_scales;
        let w = &self.weights;
        let res: Vec<String> = self.hexplane_resolutions.iter().map(|r| r.to_string()).collect();
        let lines = [
            format!("total_steps = {}", self.total_steps),
            format!("static_phase_steps = {}", self.static_phase_steps),
            format!("lr_start = {:?}", self.lr_start),
            format!("lr_end = {:?}", self.lr_end),
            format!("lr_scale.position = {:?}", s.position),
            format!("lr_scale.scale = {:?}", s.scale),
            format!("lr_scale.rotation = {:?}", s.rotation),
            format!("lr_scale.opacity = {:?}", s.opacity),
            format!("lr_scale.color = {:?}", s.color),
            format!("lr_scale.feature = {:?}", s.feature),
            format!("lr_scale.grid = {:?}", s.grid),
            format!("lr_scale.network = {:?}", s.network),
            format!("weight.rgb = {:?}", w.rgb),
            format!("weight.dssim = {:?}", w.dssim),
            format!("weight.tv = {:?}", w.tv),
            format!("weight.depth = {:?}", w.depth),
            format!("weight.feature = {:?}", w.feature),
            format!("feature_dim = {}", self.feature_dim),
            format!("embed_dim = {}", self.embed_dim),
            format!("hexplane_resolutions = {}", res.join(", ")),
            format!("hexplane_channels = {}", self.hexplane_channels),
            format!("hexplane_init = {:?}", self.hexplane_init),
            format!("latent_hidden = {}", self.latent_hidden),
            format!("latent_dim = {}", self.latent_dim),
            format!("head_hidden = {}", self.head_hidden),
            format!("dcn_hidden = {}", self.dcn_hidden),
            format!("dcn_enabled = {}", self.dcn_enabled),
            format!("awareness.time = {}", self.awareness.time),
            format!("awareness.deformation = {}", self.awareness.deformation),
            format!("awareness.context = {}", self.awareness.context),
            format!("prune_interval = {}", self.prune_interval),
            format!("prune_threshold = {:?}", self.prune_threshold),
            format!("seed = {}", self.seed),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return fail("learning rates must satisfy 0 < lr_end <= lr_start");
        }
        if self.static_phase_steps > self.total_steps {
            return fail("static_phase_steps cannot exceed total_steps");
        }
        let s = &self.lr_scales;
        let scales = [s.position, s.scale, s.rotation, s.opacity, s.color, s.feature, s.grid, s.network];
        if scales.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return fail("learning-rate scales must be finite and non-negative");
        }
        let w = &self.weights;
        if [w.rgb, w.dssim, w.tv, w.depth, w.feature].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return fail("loss weights must be finite and non-negative");
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive");
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return fail("embed_dim must be even and at least 2");
        }
        if self.hexplane_resolutions.is_empty() || self.hexplane_resolutions.iter().any(|&r| r < 2) {
            return fail("hexplane_resolutions needs at least one entry, each >= 2");
        }
        let widths = [self.hexplane_channels, self.latent_hidden, self.latent_dim, self.head_hidden, self.dcn_hidden];
        if widths.contains(&0) {
            return fail("network and grid widths must be positive");
        }
        if self.prune_interval == 0 {
            return fail("prune_interval must be positive");
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return fail("prune_threshold must lie in [0, 1)");
        }
        Ok(())
    }
}
