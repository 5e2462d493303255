use super::param::ParamBlock;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

/// First and second moment estimates for one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step_count: 0,
            beta1: T::lit(config.beta1),
            beta2: T::lit(config.beta2),
            eps: T::lit(config.eps),
        }
    }

    /// Keeps the moments of the rows flagged in `keep`; `row` is the number
    /// of scalars per row.
    pub fn retain_rows(&mut self, keep: &[bool], row: usize) {
        for m in [&mut self.first_moment, &mut self.second_moment] {
            let mut out = Vec::with_capacity(m.len());
            for (r, &k) in keep.iter().enumerate() {
                if k {
                    out.extend_from_slice(&m[r * row..(r + 1) * row]);
                }
            }
            *m = out;
        }
    }
}

/// Bias-corrected Adam update on raw slices. The gradient is zeroed.
pub fn adam_update<T: Real>(name: &str, values: &mut [T], grad: &mut [T], state: &mut AdamState<T>, lr: T) -> Result<()> {
    if values.len() != grad.len() || values.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "{name}: {} values, {} gradients, {} moments",
            values.len(),
            grad.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of `{name}` at index {i}")));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for i in 0..values.len() {
        let g = grad[i];
        let m = b1 * state.first_moment[i] + (T::one() - b1) * g;
        let v = b2 * state.second_moment[i] + (T::one() - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        values[i] -= lr * (m / c1) / ((v / c2).sqrt() + state.eps);
        grad[i] = T::zero();
    }
    Ok(())
}

pub fn adam_step<T: Real>(param: &mut ParamBlock<T>, state: &mut AdamState<T>, lr: T) -> Result<()> {
    let ParamBlock { name, values, grad, .. } = param;
    adam_update(name, values, grad, state, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = ParamBlock::from_values("w", vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut s = AdamState::new(3, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &mut s, 0.1).unwrap();
        }
        assert_eq!(p.values, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step_count, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ParamBlock::<f64>::from_values("w", vec![1], vec![0.0]).unwrap();
        let mut s = AdamState::new(1, AdamConfig::default());
        p.grad[0] = 1.0;
        adam_step(&mut p, &mut s, 0.1).unwrap();
        assert!((p.values[0] + 0.1).abs() < 1e-12);
        assert_eq!(p.grad[0], 0.0);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = ParamBlock::<f64>::from_values("w", vec![1], vec![1.0]).unwrap();
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut last = p.values[0];
        for _ in 0..2 {
            p.grad[0] = 0.7;
            adam_step(&mut p, &mut s, 0.01).unwrap();
            assert!(p.values[0] < last);
            last = p.values[0];
        }
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        let mut p = ParamBlock::from_values("decoder/dx/layer1", vec![2], vec![0.0, 0.0]).unwrap();
        let mut s = AdamState::new(2, AdamConfig::default());
        p.grad[1] = f64::NAN;
        let err = adam_step(&mut p, &mut s, 0.1).unwrap_err();
        assert!(err.to_string().contains("decoder/dx/layer1"));
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn retain_rows_drops_pruned_moments() {
        let mut s = AdamState::<f64>::new(6, AdamConfig::default());
        s.first_moment = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        s.second_moment = s.first_moment.clone();
        s.retain_rows(&[true, false, true], 2);
        assert_eq!(s.first_moment, vec![1.0, 1.0, 3.0, 3.0]);
    }
}
