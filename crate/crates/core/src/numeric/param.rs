use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::real::Real;

/// A named, shaped block of learnable values with a same-shape gradient
/// accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> ParamBlock<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { name: name.into(), shape, values: vec![T::zero(); len], grad: vec![T::zero(); len] }
    }

    pub fn from_values(name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let name = name.into();
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::Shape(format!("{name}: {} values for shape {:?}", values.len(), shape)));
        }
        Ok(Self { name, shape, grad: vec![T::zero(); len], values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    /// Adds `delta` into the gradient accumulator.
    pub fn accumulate(&mut self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.grad.len());
        for (g, d) in self.grad.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    pub(crate) fn write_segment(&self, w: &mut ByteWriter) {
        w.string(&self.name);
        w.u32(self.shape.len() as u32);
        for &d in &self.shape {
            w.u64(d as u64);
        }
        w.f64s(self.values.iter().map(|v| v.as_f64()));
    }

    pub(crate) fn read_segment(r: &mut ByteReader<'_>) -> Result<Self> {
        let name = r.string("parameter block name")?;
        let at = r.offset();
        let ndim = r.u32("parameter block rank")? as usize;
        if ndim > 8 {
            return Err(Error::format(at, format!("{name}: implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("parameter block dimension")? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(at, format!("{name}: shape overflows")))?;
        let values = r.f64s(len, &name)?.into_iter().map(T::lit).collect();
        Self::from_values(name, shape, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_round_trip_is_bit_exact() {
        let block = ParamBlock::from_values("phi_d/layer0", vec![2, 3], vec![0.1, -2.5, 1e-300, f64::MAX, -0.0, 7.0]).unwrap();
        let mut w = ByteWriter::new();
        block.write_segment(&mut w);
        let back = ParamBlock::<f64>::read_segment(&mut ByteReader::new(&w.buf)).unwrap();
        assert_eq!(back.name, block.name);
        assert_eq!(back.shape, block.shape);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.values), bits(&block.values));
    }

    #[test]
    fn truncated_segment_is_a_format_error() {
        let block = ParamBlock::<f64>::zeros("x", vec![4]);
        let mut w = ByteWriter::new();
        block.write_segment(&mut w);
        let cut = &w.buf[..w.buf.len() - 3];
        assert!(matches!(ParamBlock::<f64>::read_segment(&mut ByteReader::new(cut)), Err(Error::Format { .. })));
    }

    #[test]
    fn accumulation_is_additive() {
        let mut block = ParamBlock::<f64>::zeros("x", vec![3]);
        block.accumulate(&[1.0, 2.0, 3.0]);
        block.accumulate(&[1.0, 2.0, 3.0]);
        assert_eq!(block.grad, vec![2.0, 4.0, 6.0]);
    }
}
