//! Canonical Gaussians plus the motion models that deform them over time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::awareness::{time_embedding, Dcn, DcnConfig, DcnTrace};
use crate::deform::{DeformTrace, DeformationField, FieldConfig};
use crate::error::{Error, Result};
use crate::render::{render, RasterSettings, RenderOutput, RenderTape};
use crate::scene::covariance::{matvec3, normalize_quaternion, quaternion_to_matrix};
use crate::scene::{Camera, GaussianScene};

/// Rigid motion `p ↦ R p + t` with `R` given as a quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rigid {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Rigid {
    pub fn identity() -> Self {
        Self { rotation: [1.0, 0.0, 0.0, 0.0], translation: [0.0; 3] }
    }

    pub fn new(rotation: [f64; 4], translation: [f64; 3]) -> Result<Self> {
        Ok(Self { rotation: normalize_quaternion(&rotation)?, translation })
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &Rigid) -> Rigid {
        let r = quaternion_to_matrix(&self.rotation);
        let t = matvec3(&r, &first.translation);
        Rigid {
            rotation: quat_mul(&self.rotation, &first.rotation),
            translation: std::array::from_fn(|k| t[k] + self.translation[k]),
        }
    }

    /// Moves positions and left-multiplies rotations.
    pub fn apply(&self, scene: &mut GaussianScene<f64>) {
        let r = quaternion_to_matrix(&self.rotation);
        for i in 0..scene.len() {
            let p = matvec3(&r, &scene.positions[i]);
            scene.positions[i] = std::array::from_fn(|k| p[k] + self.translation[k]);
            scene.rotations[i] = quat_mul(&self.rotation, &scene.rotations[i]);
        }
    }
}

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// A deformation field with its compensation network.
#[derive(Clone, Debug, PartialEq)]
pub struct Motion {
    pub field_config: FieldConfig,
    pub dcn_config: DcnConfig,
    pub dcn_enabled: bool,
    /// Frame time `t ∈ [0, 1]` maps to the embedding input `τ = t · time_scale`.
    pub time_scale: f64,
    pub field: DeformationField<f64>,
    pub dcn: Dcn<f64>,
    /// Placement applied after deformation and compensation, at every time.
    pub rigid: Option<Rigid>,
}

/// Forward products of [`Motion::apply`].
pub struct MotionTrace {
    pub deform: DeformTrace<f64>,
    pub dcn: Option<DcnTrace<f64>>,
}

impl Motion {
    pub fn new(
        field_config: FieldConfig,
        dcn_config: DcnConfig,
        dcn_enabled: bool,
        time_scale: f64,
        feature_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = DeformationField::new(&field_config, &mut rng)?;
        let dcn = Dcn::new(&dcn_config, feature_dim, &mut rng)?;
        Ok(Self { field_config, dcn_config, dcn_enabled, time_scale, field, dcn, rigid: None })
    }

    pub fn time_features(&self, t: f64) -> Vec<f64> {
        time_embedding(t * self.time_scale, self.dcn_config.embed_dim)
    }

    /// Deforms `scene` to time `t`, compensates when the DCN is on, then
    /// applies the rigid placement if any.
    pub fn apply(&self, scene: &GaussianScene<f64>, t: f64) -> Result<(GaussianScene<f64>, MotionTrace)> {
        let deformed = self.field.deform(scene, t)?;
        let (mut out, trace) = if self.dcn_enabled {
            let f_time = self.time_features(t);
            let (out, dtrace) = self.dcn.compensate(&deformed.scene, &f_time, &deformed.f_def)?;
            (out, MotionTrace { deform: deformed.trace, dcn: Some(dtrace) })
        } else {
            (deformed.scene, MotionTrace { deform: deformed.trace, dcn: None })
        };
        if let Some(rigid) = &self.rigid {
            rigid.apply(&mut out);
        }
        Ok((out, trace))
    }

    /// Back-propagates the gradient of the moved scene; parameter gradients
    /// accumulate into the blocks, canonical gradients into `grad`. Motions
    /// with a rigid placement are not differentiable.
    pub fn backward(&mut self, trace: &MotionTrace, d_out: &GaussianScene<f64>, grad: &mut GaussianScene<f64>) -> Result<()> {
        if self.rigid.is_some() {
            return Err(Error::Config("cannot back-propagate through a rigidly placed motion".into()));
        }
        match &trace.dcn {
            None => self.field.backward(&trace.deform, d_out, None, grad),
            Some(dtrace) => {
                let mut d_def = d_out.zeros_like();
                let mut d_fdef = vec![0.0; d_out.len() * crate::deform::DEFORM_DIM];
                self.dcn.backward(dtrace, d_out, &mut d_def, &mut d_fdef);
                self.field.backward(&trace.deform, &d_def, Some(&d_fdef), grad)
            }
        }
    }
}

/// Canonical Gaussians, each tagged with the motion that moves it.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub scene: GaussianScene<f64>,
    pub field_ids: Vec<usize>,
    pub motions: Vec<Motion>,
}

impl Model {
    pub fn new(scene: GaussianScene<f64>, motion: Motion) -> Self {
        let field_ids = vec![0; scene.len()];
        Self { scene, field_ids, motions: vec![motion] }
    }

    pub fn feature_dim(&self) -> usize {
        self.scene.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.field_ids.len() != self.scene.len() {
            return Err(Error::Shape(format!("{} field ids for {} Gaussians", self.field_ids.len(), self.scene.len())));
        }
        if let Some(&id) = self.field_ids.iter().find(|&&id| id >= self.motions.len()) {
            return Err(Error::Shape(format!("field id {id} but only {} motions", self.motions.len())));
        }
        if let Some(m) = self.motions.iter().find(|m| m.dcn.feature_dim != self.scene.feature_dim) {
            return Err(Error::ConfigConflict(format!(
                "motion expects feature width {}, scene has {}",
                m.dcn.feature_dim, self.scene.feature_dim
            )));
        }
        Ok(())
    }

    /// The scene at time `t`: every Gaussian moved by its own motion, in
    /// canonical order.
    pub fn scene_at(&self, t: f64) -> Result<GaussianScene<f64>> {
        let mut out = self.scene.clone();
        for (id, motion) in self.motions.iter().enumerate() {
            let idx: Vec<usize> = (0..self.scene.len()).filter(|&i| self.field_ids[i] == id).collect();
            if idx.is_empty() {
                continue;
            }
            let (moved, _) = motion.apply(&self.scene.select(&idx), t)?;
            for (k, &i) in idx.iter().enumerate() {
                out.positions[i] = moved.positions[k];
                out.log_scales[i] = moved.log_scales[k];
                out.rotations[i] = moved.rotations[k];
            }
        }
        Ok(out)
    }

    pub fn render(
        &self,
        t: f64,
        camera: &Camera<f64>,
        background: [f64; 3],
        feature_background: &[f64],
        settings: &RasterSettings,
    ) -> Result<RenderOutput<f64>> {
        let scene = self.scene_at(t)?;
        Ok(render(&scene, camera, background, feature_background, settings)?.0)
    }

    /// Renders with the single motion 0 applied to every Gaussian, keeping
    /// what the backward pass needs.
    pub(crate) fn render_for_training(
        &self,
        t: f64,
        camera: &Camera<f64>,
        background: [f64; 3],
        feature_background: &[f64],
        settings: &RasterSettings,
        deform: bool,
    ) -> Result<(RenderOutput<f64>, RenderTape<f64>, GaussianScene<f64>, Option<MotionTrace>)> {
        let (scene, trace) = if deform {
            let (s, tr) = self.motions[0].apply(&self.scene, t)?;
            (s, Some(tr))
        } else {
            (self.scene.clone(), None)
        };
        let (out, tape) = render(&scene, camera, background, feature_background, settings)?;
        Ok((out, tape, scene, trace))
    }
}
