use crate::error::{Error, Result};
use crate::real::{sigmoid, Real};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `W x + b`.
pub fn affine_forward<T: Real>(w: &Matrix<T>, b: &[T], x: &[T]) -> Result<Vec<T>> {
    if w.cols != x.len() {
        return Err(Error::Shape(format!("affine: W has {} columns but x has length {}", w.cols, x.len())));
    }
    if w.rows != b.len() {
        return Err(Error::Shape(format!("affine: W has {} rows but b has length {}", w.rows, b.len())));
    }
    Ok((0..w.rows).map(|r| w.row(r).iter().zip(x).fold(b[r], |acc, (&wi, &xi)| acc + wi * xi)).collect())
}

/// Gradients of `W x + b` given the output gradient: `(dW, db, dx)`.
pub fn affine_backward<T: Real>(w: &Matrix<T>, x: &[T], dy: &[T]) -> (Matrix<T>, Vec<T>, Vec<T>) {
    let mut dw = Matrix::zeros(w.rows, w.cols);
    let mut dx = vec![T::zero(); w.cols];
    for r in 0..w.rows {
        let g = dy[r];
        let row = w.row(r);
        for c in 0..w.cols {
            dw.data[r * w.cols + c] = g * x[c];
            dx[c] += row[c] * g;
        }
    }
    (dw, dy.to_vec(), dx)
}

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Exp,
    Sin,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Exp => x.exp(),
            Activation::Sin => x.sin(),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Exp => y,
            Activation::Sin => x.cos(),
        }
    }
}

pub fn activation<T: Real>(kind: Activation, x: &[T]) -> Result<Vec<T>> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{kind:?} activation input at index {i}")));
    }
    Ok(x.iter().map(|&v| kind.apply(v)).collect())
}

pub fn activation_backward<T: Real>(kind: Activation, x: &[T], dy: &[T]) -> Vec<T> {
    x.iter().zip(dy).map(|(&xi, &g)| g * kind.derivative(xi, kind.apply(xi))).collect()
}

pub fn sum_reduce<T: Real>(x: &[T]) -> T {
    x.iter().copied().sum()
}

pub fn sum_backward<T: Real>(len: usize, dy: T) -> Vec<T> {
    vec![dy; len]
}

pub fn mean_reduce<T: Real>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    sum_reduce(x) / T::lit(x.len() as f64)
}

pub fn mean_backward<T: Real>(len: usize, dy: T) -> Vec<T> {
    if len == 0 {
        return Vec::new();
    }
    vec![dy / T::lit(len as f64); len]
}
