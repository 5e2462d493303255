//! Central-difference gradient verification.

use crate::error::{Error, Result};

/// An operation with a forward map and a vector-Jacobian product.
pub trait DifferentiableOp {
    fn forward(&self, input: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of `<output_grad, forward(input)>` with respect to `input`.
    fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>>;
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over all inputs of the
/// scalar `f`, where `numeric` is the central difference with step `eps`.
pub fn grad_check_fn<F>(f: F, analytic: &[f64], point: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!("{} analytic gradients for {} inputs", analytic.len(), point.len())));
    }
    if !(eps > 0.0) {
        return Err(Error::Usage(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let up = f(&probe);
        probe[i] = point[i] - eps;
        let down = f(&probe);
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * eps);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite(format!("gradient check at input {i}")));
        }
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}

/// Checks `op` by contracting its output with `output_weights`.
pub fn grad_check(op: &dyn DifferentiableOp, input: &[f64], output_weights: &[f64], eps: f64) -> Result<f64> {
    let analytic = op.backward(input, output_weights)?;
    let f = |x: &[f64]| -> f64 {
        match op.forward(x) {
            Ok(y) => y.iter().zip(output_weights).map(|(a, b)| a * b).sum(),
            Err(_) => f64::NAN,
        }
    };
    grad_check_fn(f, &analytic, input, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ops::{activation, activation_backward, affine_backward, affine_forward, Activation, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Affine {
        rows: usize,
        cols: usize,
    }

    impl DifferentiableOp for Affine {
        // input = W (row-major) ++ b ++ x
        fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
            let nw = self.rows * self.cols;
            let w = Matrix::new(self.rows, self.cols, input[..nw].to_vec())?;
            affine_forward(&w, &input[nw..nw + self.rows], &input[nw + self.rows..])
        }

        fn backward(&self, input: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
            let nw = self.rows * self.cols;
            let w = Matrix::new(self.rows, self.cols, input[..nw].to_vec())?;
            let (dw, db, dx) = affine_backward(&w, &input[nw + self.rows..], dy);
            Ok([dw.data, db, dx].concat())
        }
    }

    struct SigmoidChain(usize);

    impl DifferentiableOp for SigmoidChain {
        fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
            let mut x = input.to_vec();
            for _ in 0..self.0 {
                x = activation(Activation::Sigmoid, &x)?;
            }
            Ok(x)
        }

        fn backward(&self, input: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
            let mut xs = vec![input.to_vec()];
            for _ in 0..self.0 {
                let next = activation(Activation::Sigmoid, xs.last().unwrap())?;
                xs.push(next);
            }
            let mut g = dy.to_vec();
            for d in (0..self.0).rev() {
                g = activation_backward(Activation::Sigmoid, &xs[d], &g);
            }
            Ok(g)
        }
    }

    struct Constant;

    impl DifferentiableOp for Constant {
        fn forward(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![3.0])
        }

        fn backward(&self, input: &[f64], _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; input.len()])
        }
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn affine_4x4_passes() {
        let op = Affine { rows: 4, cols: 4 };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = random(&mut rng, 16 + 4 + 4);
            let weights = random(&mut rng, 4);
            assert!(grad_check(&op, &input, &weights, 1e-5).unwrap() < 1e-7);
        }
    }

    #[test]
    fn sigmoid_chain_depth_three_passes() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = random(&mut rng, 5);
            let weights = random(&mut rng, 5);
            assert!(grad_check(&SigmoidChain(3), &input, &weights, 1e-5).unwrap() < 1e-6);
        }
    }

    #[test]
    fn every_activation_passes() {
        for kind in [Activation::Relu, Activation::Sigmoid, Activation::Exp, Activation::Sin, Activation::Identity] {
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // keep relu inputs away from the kink
                let x: Vec<f64> = random(&mut rng, 6).into_iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }).collect();
                let w = random(&mut rng, 6);
                let f = |p: &[f64]| activation(kind, p).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                let analytic = activation_backward(kind, &x, &w);
                assert!(grad_check_fn(f, &analytic, &x, 1e-5).unwrap() < 1e-4, "{kind:?}");
            }
        }
    }

    #[test]
    fn constant_function_has_zero_error() {
        assert_eq!(grad_check(&Constant, &[0.5, -2.0], &[1.0], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        assert!(grad_check(&Constant, &[0.5], &[1.0], 0.0).is_err());
        let f = |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 };
        assert!(matches!(grad_check_fn(f, &[0.0], &[0.0], 1e-5), Err(Error::NonFinite(_))));
    }
}
