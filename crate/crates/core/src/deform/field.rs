//! HexPlane encoder, latent MLP and three-head deformation decoder.

use rand::Rng;

use super::hexplane::HexPlane;
use crate::error::{Error, Result};
use crate::numeric::{Activation, Mlp, MlpTrace, ParamBlock};
use crate::real::Real;
use crate::scene::GaussianScene;

/// Width of a per-Gaussian deformation: dx (3), ds (3), dr (4).
pub const DEFORM_DIM: usize = 10;
pub const HEAD_NAMES: [&str; 3] = ["dx", "ds", "dr"];
const HEAD_WIDTHS: [usize; 3] = [3, 3, 4];

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    /// Spatial box per axis; queries outside are clamped.
    pub bounds: [[f64; 2]; 3],
    pub resolutions: Vec<usize>,
    pub channels: usize,
    pub latent_hidden: usize,
    pub latent_dim: usize,
    pub head_hidden: usize,
    pub grid_init: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            bounds: [[-2.0, 2.0]; 3],
            resolutions: vec![16, 32],
            channels: 8,
            latent_hidden: 64,
            latent_dim: 64,
            head_hidden: 32,
            grid_init: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField<T> {
    pub hexplane: HexPlane<T>,
    pub latent: Mlp<T>,
    /// Decoder heads for dx, ds and dr.
    pub heads: [Mlp<T>; 3],
}

/// Forward products kept for [`DeformationField::backward`].
#[derive(Clone, Debug)]
pub struct DeformTrace<T> {
    pub positions: Vec<[T; 3]>,
    pub t: T,
    pub latent: MlpTrace<T>,
    pub heads: [MlpTrace<T>; 3],
}

/// A deformed scene and the deltas that produced it.
#[derive(Clone, Debug)]
pub struct Deformed<T> {
    pub scene: GaussianScene<T>,
    /// `n * 10`: (dx, ds, dr) per Gaussian, exactly as applied.
    pub f_def: Vec<T>,
    pub trace: DeformTrace<T>,
}

impl<T: Real> DeformationField<T> {
    /// Fresh field whose decoder heads output exactly zero.
    pub fn new<R: Rng>(config: &FieldConfig, rng: &mut R) -> Result<Self> {
        let bounds = config.bounds.map(|b| b.map(T::lit));
        let hexplane = HexPlane::new(bounds, &config.resolutions, config.channels, config.grid_init, rng)?;
        let fh = hexplane.out_dim();
        let latent =
            Mlp::new("phi_d", &[fh, config.latent_hidden, config.latent_dim], Activation::Relu, Activation::Identity, false, rng);
        let heads = std::array::from_fn(|k| {
            Mlp::new(
                &format!("decoder/{}", HEAD_NAMES[k]),
                &[config.latent_dim, config.head_hidden, HEAD_WIDTHS[k]],
                Activation::Relu,
                Activation::Identity,
                true,
                rng,
            )
        });
        Ok(Self { hexplane, latent, heads })
    }

    pub fn params(&self) -> Vec<&ParamBlock<T>> {
        let mut v: Vec<&ParamBlock<T>> = self.hexplane.planes.iter().collect();
        v.extend(self.latent.layers.iter());
        for h in &self.heads {
            v.extend(h.layers.iter());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamBlock<T>> {
        let mut v: Vec<&mut ParamBlock<T>> = self.hexplane.planes.iter_mut().collect();
        v.extend(self.latent.layers.iter_mut());
        for h in &mut self.heads {
            v.extend(h.layers.iter_mut());
        }
        v
    }

    /// Latent code `f_d` for a batch of HexPlane features.
    pub fn latent_encode(&self, f_h: &[T], n: usize) -> Result<MlpTrace<T>> {
        self.latent.forward_batch(f_h, n)
    }

    /// Per-Gaussian (dx, ds, dr) from latent codes, `n * 10`.
    pub fn decode(&self, f_d: &[T], n: usize) -> Result<([MlpTrace<T>; 3], Vec<T>)> {
        let traces =
            [self.heads[0].forward_batch(f_d, n)?, self.heads[1].forward_batch(f_d, n)?, self.heads[2].forward_batch(f_d, n)?];
        let mut delta = Vec::with_capacity(n * DEFORM_DIM);
        for i in 0..n {
            for (k, tr) in traces.iter().enumerate() {
                let w = HEAD_WIDTHS[k];
                delta.extend_from_slice(&tr.output()[i * w..(i + 1) * w]);
            }
        }
        Ok((traces, delta))
    }

    /// Deforms `scene` to time `t ∈ [0, 1]`.
    pub fn deform(&self, scene: &GaussianScene<T>, t: T) -> Result<Deformed<T>> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::Config(format!("deformation time {t} outside [0, 1]")));
        }
        let n = scene.len();
        let f_h = self.hexplane.encode_batch(&scene.positions, t);
        let latent = self.latent_encode(&f_h, n)?;
        let (heads, f_def) = self.decode(latent.output(), n)?;
        let mut out = scene.clone();
        for i in 0..n {
            let d = &f_def[i * DEFORM_DIM..(i + 1) * DEFORM_DIM];
            for k in 0..3 {
                out.positions[i][k] += d[k];
                out.log_scales[i][k] += d[3 + k];
            }
            for k in 0..4 {
                out.rotations[i][k] += d[6 + k];
            }
        }
        let trace = DeformTrace { positions: scene.positions.clone(), t, latent, heads };
        Ok(Deformed { scene: out, f_def, trace })
    }

    /// Back-propagates gradients of the deformed scene and of `f_def`.
    /// Field parameter gradients accumulate into the parameter blocks;
    /// canonical-scene gradients accumulate into `grad`.
    pub fn backward(
        &mut self,
        trace: &DeformTrace<T>,
        d_deformed: &GaussianScene<T>,
        d_fdef: Option<&[T]>,
        grad: &mut GaussianScene<T>,
    ) -> Result<()> {
        let n = trace.positions.len();
        if d_deformed.len() != n || grad.len() != n {
            return Err(Error::Shape(format!("deformation trace has {n} Gaussians, gradients have {}", d_deformed.len())));
        }
        if let Some(d) = d_fdef {
            if d.len() != n * DEFORM_DIM {
                return Err(Error::Shape(format!("f_def gradient has {} values, expected {}", d.len(), n * DEFORM_DIM)));
            }
        }
        grad.add_assign(d_deformed);
        let mut d_heads: [Vec<T>; 3] = std::array::from_fn(|k| vec![T::zero(); n * HEAD_WIDTHS[k]]);
        for i in 0..n {
            for k in 0..3 {
                d_heads[0][i * 3 + k] = d_deformed.positions[i][k];
                d_heads[1][i * 3 + k] = d_deformed.log_scales[i][k];
            }
            for k in 0..4 {
                d_heads[2][i * 4 + k] = d_deformed.rotations[i][k];
            }
            if let Some(d) = d_fdef {
                let d = &d[i * DEFORM_DIM..(i + 1) * DEFORM_DIM];
                for k in 0..3 {
                    d_heads[0][i * 3 + k] += d[k];
                    d_heads[1][i * 3 + k] += d[3 + k];
                }
                for k in 0..4 {
                    d_heads[2][i * 4 + k] += d[6 + k];
                }
            }
        }
        let latent_dim = self.latent.out_dim();
        let mut d_fd = vec![T::zero(); n * latent_dim];
        for k in 0..3 {
            let (dx, g) = self.heads[k].backward_batch(&trace.heads[k], &d_heads[k]);
            self.heads[k].accumulate(&g);
            for (a, b) in d_fd.iter_mut().zip(&dx) {
                *a += *b;
            }
        }
        let (d_fh, g) = self.latent.backward_batch(&trace.latent, &d_fd);
        self.latent.accumulate(&g);
        let width = self.hexplane.out_dim();
        let mut grid = self.hexplane.zero_grads();
        for i in 0..n {
            let dq = self.hexplane.backward_one(&trace.positions[i], trace.t, &d_fh[i * width..(i + 1) * width], &mut grid);
            for k in 0..3 {
                grad.positions[i][k] += dq[k];
            }
        }
        for (p, g) in self.hexplane.planes.iter_mut().zip(&grid) {
            p.accumulate(g);
        }
        Ok(())
    }
}
