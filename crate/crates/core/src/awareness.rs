//! Time embedding, awareness aggregation and the deformation compensation
//! network (DCN).

use rand::Rng;

use crate::deform::DEFORM_DIM;
use crate::error::{Error, Result};
use crate::numeric::{Activation, Mlp, MlpTrace, ParamBlock};
use crate::real::{norm, Real};
use crate::scene::GaussianScene;

/// Sinusoidal embedding: entry `i` is `sin(τ / 10000^(2i/d))`, `i < d`.
pub fn time_embedding<T: Real>(tau: T, d: usize) -> Vec<T> {
    let base = T::lit(10000.0);
    (0..d).map(|i| (tau / base.powf(T::lit(2.0 * i as f64 / d as f64))).sin()).collect()
}

/// Concatenation `f_time ‖ f_def ‖ f_con`.
pub fn aggregate_awareness<T: Real>(f_time: &[T], f_def: &[T], f_con: &[T], expected: (usize, usize)) -> Result<Vec<T>> {
    if f_time.len() != expected.0 || f_def.len() != DEFORM_DIM || f_con.len() != expected.1 {
        return Err(Error::Shape(format!(
            "awareness parts have widths ({}, {}, {}), expected ({}, {DEFORM_DIM}, {})",
            f_time.len(),
            f_def.len(),
            f_con.len(),
            expected.0,
            expected.1
        )));
    }
    let mut v = Vec::with_capacity(f_time.len() + f_def.len() + f_con.len());
    v.extend_from_slice(f_time);
    v.extend_from_slice(f_def);
    v.extend_from_slice(f_con);
    Ok(v)
}

/// Which awareness parts reach the DCN; a disabled part is fed as zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Awareness {
    pub time: bool,
    pub deformation: bool,
    pub context: bool,
}

impl Default for Awareness {
    fn default() -> Self {
        Self { time: true, deformation: true, context: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcnConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub awareness: Awareness,
}

impl Default for DcnConfig {
    fn default() -> Self {
        Self { embed_dim: 64, hidden: 64, awareness: Awareness::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dcn<T> {
    /// Residual channel, final layer zero-initialized.
    pub phi_p: Mlp<T>,
    /// Mask channel: one linear layer and a sigmoid.
    pub phi_s: Mlp<T>,
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub awareness: Awareness,
}

/// Forward products kept for [`Dcn::backward`].
#[derive(Clone, Debug)]
pub struct DcnTrace<T> {
    pub n: usize,
    pub phi_p: MlpTrace<T>,
    pub phi_s: MlpTrace<T>,
    /// Unnormalized features and their norms, for the context path.
    features: Vec<T>,
    norms: Vec<T>,
}

impl<T: Real> Dcn<T> {
    pub fn new<R: Rng>(config: &DcnConfig, feature_dim: usize, rng: &mut R) -> Result<Self> {
        if config.embed_dim < 2 || config.embed_dim % 2 != 0 {
            return Err(Error::Config(format!("time embedding width must be even and >= 2, got {}", config.embed_dim)));
        }
        let input = config.embed_dim + DEFORM_DIM + feature_dim;
        let phi_p = Mlp::new(
            "dcn/phi_p",
            &[input, config.hidden, config.hidden, DEFORM_DIM],
            Activation::Relu,
            Activation::Identity,
            true,
            rng,
        );
        let mut phi_s = Mlp::new("dcn/phi_s", &[input, DEFORM_DIM], Activation::Identity, Activation::Sigmoid, false, rng);
        phi_s.layers[0].name = "dcn/phi_s/linear".into();
        Ok(Self { phi_p, phi_s, embed_dim: config.embed_dim, feature_dim, awareness: config.awareness })
    }

    pub fn input_dim(&self) -> usize {
        self.embed_dim + DEFORM_DIM + self.feature_dim
    }

    pub fn params(&self) -> Vec<&ParamBlock<T>> {
        self.phi_p.layers.iter().chain(self.phi_s.layers.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamBlock<T>> {
        self.phi_p.layers.iter_mut().chain(self.phi_s.layers.iter_mut()).collect()
    }

    /// Aggregates for every Gaussian, `n * input_dim`, with disabled parts
    /// zeroed. `f_con` is the unit-normalized feature.
    pub fn aggregates(&self, deformed: &GaussianScene<T>, f_time: &[T], f_def: &[T]) -> Result<Vec<T>> {
        let n = deformed.len();
        if f_def.len() != n * DEFORM_DIM {
            return Err(Error::Shape(format!("f_def has {} values for {n} Gaussians", f_def.len())));
        }
        if deformed.feature_dim != self.feature_dim {
            return Err(Error::Shape(format!(
                "scene features have width {}, DCN expects {}",
                deformed.feature_dim, self.feature_dim
            )));
        }
        let zeros_t = vec![T::zero(); self.embed_dim];
        let zeros_d = [T::zero(); DEFORM_DIM];
        let zeros_f = vec![T::zero(); self.feature_dim];
        let ft = if self.awareness.time { f_time } else { &zeros_t[..] };
        let mut out = Vec::with_capacity(n * self.input_dim());
        for i in 0..n {
            let fd = if self.awareness.deformation { &f_def[i * DEFORM_DIM..(i + 1) * DEFORM_DIM] } else { &zeros_d[..] };
            let fc = if self.awareness.context { deformed.normalized_feature(i) } else { zeros_f.clone() };
            out.extend(aggregate_awareness(ft, fd, &fc, (self.embed_dim, self.feature_dim))?);
        }
        Ok(out)
    }

    /// Adds `φ_p(a) ⊙ φ_s(a)` to position, log-scale and raw rotation.
    pub fn compensate(&self, deformed: &GaussianScene<T>, f_time: &[T], f_def: &[T]) -> Result<(GaussianScene<T>, DcnTrace<T>)> {
        let n = deformed.len();
        let agg = self.aggregates(deformed, f_time, f_def)?;
        let tp = self.phi_p.forward_batch(&agg, n)?;
        let ts = self.phi_s.forward_batch(&agg, n)?;
        let mut out = deformed.clone();
        for i in 0..n {
            let p = &tp.output()[i * DEFORM_DIM..(i + 1) * DEFORM_DIM];
            let s = &ts.output()[i * DEFORM_DIM..(i + 1) * DEFORM_DIM];
            for k in 0..3 {
                out.positions[i][k] += p[k] * s[k];
                out.log_scales[i][k] += p[3 + k] * s[3 + k];
            }
            for k in 0..4 {
                out.rotations[i][k] += p[6 + k] * s[6 + k];
            }
        }
        let norms = (0..n).map(|i| norm(deformed.feature(i))).collect();
        Ok((out, DcnTrace { n, phi_p: tp, phi_s: ts, features: deformed.features.clone(), norms }))
    }

    /// Per-Gaussian compensation vectors `φ_p ⊙ φ_s` from a trace.
    pub fn compensation(trace: &DcnTrace<T>) -> Vec<T> {
        trace.phi_p.output().iter().zip(trace.phi_s.output()).map(|(p, s)| *p * *s).collect()
    }

    /// Back-propagates gradients of the compensated scene. Parameter
    /// gradients accumulate into the blocks; gradients of the deformed
    /// scene (including the context path into features) accumulate into
    /// `d_deformed`, and those of `f_def` into `d_fdef`.
    pub fn backward(
        &mut self,
        trace: &DcnTrace<T>,
        d_out: &GaussianScene<T>,
        d_deformed: &mut GaussianScene<T>,
        d_fdef: &mut [T],
    ) {
        let n = trace.n;
        d_deformed.add_assign(d_out);
        let mut dp = vec![T::zero(); n * DEFORM_DIM];
        let mut ds = vec![T::zero(); n * DEFORM_DIM];
        for i in 0..n {
            let mut dc = [T::zero(); DEFORM_DIM];
            dc[..3].copy_from_slice(&d_out.positions[i]);
            dc[3..6].copy_from_slice(&d_out.log_scales[i]);
            dc[6..].copy_from_slice(&d_out.rotations[i]);
            for k in 0..DEFORM_DIM {
                let j = i * DEFORM_DIM + k;
                dp[j] = dc[k] * trace.phi_s.output()[j];
                ds[j] = dc[k] * trace.phi_p.output()[j];
            }
        }
        let (da_p, gp) = self.phi_p.backward_batch(&trace.phi_p, &dp);
        let (da_s, gs) = self.phi_s.backward_batch(&trace.phi_s, &ds);
        self.phi_p.accumulate(&gp);
        self.phi_s.accumulate(&gs);
        let width = self.input_dim();
        let f = self.feature_dim;
        for i in 0..n {
            let base = i * width + self.embed_dim;
            if self.awareness.deformation {
                for k in 0..DEFORM_DIM {
                    d_fdef[i * DEFORM_DIM + k] += da_p[base + k] + da_s[base + k];
                }
            }
            if self.awareness.context && trace.norms[i] > T::zero() {
                let raw = &trace.features[i * f..(i + 1) * f];
                let nrm = trace.norms[i];
                let dn: Vec<T> = (0..f).map(|k| da_p[base + DEFORM_DIM + k] + da_s[base + DEFORM_DIM + k]).collect();
                let proj: T = (0..f).map(|k| raw[k] / nrm * dn[k]).sum();
                for (k, g) in d_deformed.feature_mut(i).iter_mut().enumerate() {
                    *g += (dn[k] - raw[k] / nrm * proj) / nrm;
                }
            }
        }
    }
}
