//! Two-phase optimization loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::TrainingConfig;
use super::model::{Model, Motion};
use crate::awareness::DcnConfig;
use crate::deform::FieldConfig;
use crate::error::{Error, Result};
use crate::loss::{
    depth_backward, depth_loss, depth_mask, dssim_backward, dssim_loss, feature_cosine_backward, feature_cosine_loss,
    l1_backward, l1_loss, total_loss, tv_backward, tv_loss, LossReport, LossTerms, LossWeights,
};
use crate::numeric::{adam_update, exponential_lr, AdamConfig, AdamState};
use crate::render::{render_backward, OutputGrads, RasterSettings, RenderOutput};
use crate::scene::{init_from_points, GaussianScene, SH_COEFFS};
use crate::synth::{Dataset, Frame, Split};

/// Header of the loss log.
pub const LOG_HEADER: &str = "step,lr,rgb,dssim,tv,depth,feature,total";

/// Scalars per Gaussian in each optimized scene attribute.
fn scene_row_widths(feature_dim: usize) -> [usize; 6] {
    [3, 3, 4, 1, SH_COEFFS, feature_dim]
}

/// Adam moments for every optimized quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    /// Positions, log scales, rotations, opacity logits, SH, features.
    pub scene: Vec<AdamState<f64>>,
    /// Motion-0 blocks: deformation field, then DCN.
    pub blocks: Vec<AdamState<f64>>,
}

impl Optimizer {
    pub fn new(model: &Model) -> Self {
        let n = model.scene.len();
        let c = AdamConfig::default();
        let scene = scene_row_widths(model.feature_dim()).iter().map(|w| AdamState::new(n * w, c)).collect();
        let m = &model.motions[0];
        let blocks = m.field.params().into_iter().chain(m.dcn.params()).map(|b| AdamState::new(b.len(), c)).collect();
        Self { scene, blocks }
    }
}

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub report: LossReport,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let t = &self.report.terms;
        format!("{},{},{},{},{},{},{},{}", self.step, self.lr, t.rgb, t.dssim, t.tv, t.depth, t.feature, self.report.total)
    }
}

pub fn format_log(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Loss terms of one rendered frame and the gradients of their weighted
/// sum with respect to the rendered planes.
pub fn frame_losses(out: &RenderOutput<f64>, frame: &Frame, w: &LossWeights) -> Result<(LossTerms, OutputGrads<f64>)> {
    let mask = depth_mask(&out.accum, &frame.depth);
    let terms = LossTerms {
        rgb: l1_loss(&out.rgb, &frame.rgb)?,
        dssim: dssim_loss(&out.rgb, &frame.rgb)?,
        tv: 0.0,
        depth: depth_loss(&out.depth, &frame.depth, &mask)?,
        feature: feature_cosine_loss(&out.feature, &frame.feature)?,
    };
    let g1 = l1_backward(&out.rgb, &frame.rgb)?;
    let g2 = dssim_backward(&out.rgb, &frame.rgb)?;
    let rgb = g1.data.iter().zip(&g2.data).map(|(a, b)| w.rgb * a + w.dssim * b).collect();
    let rgb = crate::render::Image::from_vec(out.rgb.width, out.rgb.height, 3, rgb)?;
    let depth = depth_backward(&out.depth, &frame.depth, &mask)?.map(|v| w.depth * v);
    let feature = feature_cosine_backward(&out.feature, &frame.feature)?.map(|v| w.feature * v);
    Ok((terms, OutputGrads { rgb: Some(rgb), depth: Some(depth), feature: Some(feature), accum: None }))
}

fn check_finite(step: u64, report: &LossReport) -> Result<()> {
    for (name, v) in report.terms.named().into_iter().chain([("total", report.total)]) {
        if !v.is_finite() {
            return Err(Error::Diverged { step, term: name.to_string() });
        }
    }
    Ok(())
}

/// The motion a fresh run starts from, sized for `data`.
pub fn initial_motion(config: &TrainingConfig, data: &Dataset) -> Result<Motion> {
    let field_config = FieldConfig {
        bounds: data.spec.bounds,
        resolutions: config.hexplane_resolutions.clone(),
        channels: config.hexplane_channels,
        latent_hidden: config.latent_hidden,
        latent_dim: config.latent_dim,
        head_hidden: config.head_hidden,
        grid_init: config.hexplane_init,
    };
    let dcn_config = DcnConfig { embed_dim: config.embed_dim, hidden: config.dcn_hidden, awareness: config.awareness };
    let time_scale = (data.frames.len().max(2) - 1) as f64;
    Motion::new(field_config, dcn_config, config.dcn_enabled, time_scale, config.feature_dim, config.seed)
}

/// Gaussians seeded from the dataset's initialization points.
pub fn initial_scene(config: &TrainingConfig, data: &Dataset) -> Result<GaussianScene<f64>> {
    init_from_points(&data.points, &data.point_colors, config.feature_dim, config.seed)
}

pub struct Trainer<'a> {
    pub config: TrainingConfig,
    pub model: Model,
    pub optimizer: Optimizer,
    /// Steps completed so far.
    pub step: u64,
    pub log: Vec<LogRow>,
    pub settings: RasterSettings,
    data: &'a Dataset,
    train_frames: Vec<usize>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainingConfig, data: &'a Dataset, split: Split) -> Result<Self> {
        config.validate()?;
        check_feature_dim(&config, data)?;
        let model = Model::new(initial_scene(&config, data)?, initial_motion(&config, data)?);
        let optimizer = Optimizer::new(&model);
        Self::resume(config, data, split, model, optimizer, 0)
    }

    /// Continues from a saved state.
    pub fn resume(
        config: TrainingConfig,
        data: &'a Dataset,
        split: Split,
        model: Model,
        optimizer: Optimizer,
        step: u64,
    ) -> Result<Self> {
        config.validate()?;
        check_feature_dim(&config, data)?;
        model.validate()?;
        if model.motions.len() != 1 || model.motions[0].rigid.is_some() {
            return Err(Error::Config("training needs a single motion without rigid placement".into()));
        }
        if model.feature_dim() != config.feature_dim {
            return Err(Error::ConfigConflict(format!(
                "model has feature width {}, config asks for {}",
                model.feature_dim(),
                config.feature_dim
            )));
        }
        let (train_frames, _) = data.split(split);
        if train_frames.is_empty() {
            return Err(Error::Config("dataset has no training frames".into()));
        }
        Ok(Self { config, model, optimizer, step, log: Vec::new(), settings: RasterSettings::default(), data, train_frames })
    }

    pub fn in_static_phase(&self) -> bool {
        self.step < self.config.static_phase_steps
    }

    pub fn learning_rate(&self) -> f64 {
        exponential_lr(self.config.lr_start, self.config.lr_end, self.step, self.config.total_steps)
    }

    /// Frame used by step `step`; each step draws from its own stream of
    /// the seeded generator so resumed runs pick the same frames.
    pub fn frame_for_step(&self, step: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step);
        self.train_frames[rng.gen_range(0..self.train_frames.len())]
    }

    /// Runs one optimization step and returns its losses.
    pub fn step(&mut self) -> Result<LossReport> {
        let step = self.step;
        let deform = !self.in_static_phase();
        let frame = &self.data.frames[self.frame_for_step(step)];
        let fbg = self.data.feature_background();
        let (out, tape, rendered, trace) =
            self.model.render_for_training(frame.t, &frame.camera, self.data.spec.sky, fbg, &self.settings, deform)?;
        let w = self.config.weights;
        let (mut terms, grads) = frame_losses(&out, frame, &w)?;
        if deform {
            terms.tv = tv_loss(&self.model.motions[0].field.hexplane.planes)?;
        }
        let report = total_loss(terms, &w);
        check_finite(step, &report)?;

        let d_rendered = render_backward(&rendered, &frame.camera, &tape, &grads)?;
        let mut grad = self.model.scene.zeros_like();
        if let Some(trace) = &trace {
            let motion = &mut self.model.motions[0];
            motion.backward(trace, &d_rendered, &mut grad)?;
            tv_backward(&mut motion.field.hexplane.planes, w.tv)?;
        } else {
            grad = d_rendered;
        }

        let lr = self.learning_rate();
        self.apply_updates(&mut grad, lr, deform)?;
        self.log.push(LogRow { step, lr, report });
        self.step += 1;
        if self.step % self.config.prune_interval == 0 {
            self.prune();
        }
        Ok(report)
    }

    fn apply_updates(&mut self, grad: &mut GaussianScene<f64>, lr: f64, deform: bool) -> Result<()> {
        let s = self.config.lr_scales;
        let scene = &mut self.model.scene;
        let opt = &mut self.optimizer.scene;
        adam_update(
            "positions",
            scene.positions.as_flattened_mut(),
            grad.positions.as_flattened_mut(),
            &mut opt[0],
            lr * s.position,
        )?;
        adam_update(
            "log_scales",
            scene.log_scales.as_flattened_mut(),
            grad.log_scales.as_flattened_mut(),
            &mut opt[1],
            lr * s.scale,
        )?;
        adam_update(
            "rotations",
            scene.rotations.as_flattened_mut(),
            grad.rotations.as_flattened_mut(),
            &mut opt[2],
            lr * s.rotation,
        )?;
        adam_update("opacity_logits", &mut scene.opacity_logits, &mut grad.opacity_logits, &mut opt[3], lr * s.opacity)?;
        adam_update("sh_coeffs", scene.sh.as_flattened_mut(), grad.sh.as_flattened_mut(), &mut opt[4], lr * s.color)?;
        adam_update("context_features", &mut scene.features, &mut grad.features, &mut opt[5], lr * s.feature)?;
        if !deform {
            return Ok(());
        }
        let motion = &mut self.model.motions[0];
        let grids = motion.field.hexplane.planes.len();
        let dcn_on = motion.dcn_enabled;
        let field_blocks = motion.field.params_mut().len();
        let blocks = motion.field.params_mut().into_iter().chain(motion.dcn.params_mut());
        for (k, (block, state)) in blocks.zip(self.optimizer.blocks.iter_mut()).enumerate() {
            if k >= field_blocks && !dcn_on {
                block.zero_grad();
                continue;
            }
            let scale = if k < grids { s.grid } else { s.network };
            let crate::numeric::ParamBlock { name, values, grad, .. } = block;
            adam_update(name, values, grad, state, lr * scale)?;
        }
        Ok(())
    }

    /// Drops Gaussians whose opacity fell below the threshold, together with
    /// their optimizer moments. A prune that would empty the scene is skipped.
    pub fn prune(&mut self) {
        let scene = &self.model.scene;
        let keep: Vec<bool> = (0..scene.len()).map(|i| scene.opacity(i) >= self.config.prune_threshold).collect();
        if keep.iter().all(|&k| k) || !keep.iter().any(|&k| k) {
            return;
        }
        for (state, w) in self.optimizer.scene.iter_mut().zip(scene_row_widths(scene.feature_dim)) {
            state.retain_rows(&keep, w);
        }
        self.model.scene.retain(&keep);
        let mut i = 0;
        self.model.field_ids.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }

    /// Steps until `total_steps` is reached.
    pub fn run(&mut self) -> Result<()> {
        while self.step < self.config.total_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Snapshot of the run for saving.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            spec: self.data.spec.clone(),
            step: self.step,
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn log_text(&self) -> String {
        format_log(&self.log)
    }
}

fn check_feature_dim(config: &TrainingConfig, data: &Dataset) -> Result<()> {
    if config.feature_dim != data.spec.feature_dim {
        return Err(Error::ConfigConflict(format!(
            "config feature_dim {} but the dataset's teacher features have width {}",
            config.feature_dim, data.spec.feature_dim
        )));
    }
    Ok(())
}
