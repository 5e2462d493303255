//! Six-plane factorization of a 4D (x, y, z, t) feature volume.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::ParamBlock;
use crate::real::Real;

/// Axis pairs of the six planes; axis 3 is time.
pub const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
pub const PLANE_NAMES: [&str; 6] = ["xy", "xz", "yz", "xt", "yt", "zt"];

/// Multi-resolution HexPlane. Plane `p` of level `r` is stored in
/// `planes[r * 6 + p]` with shape `[res, res, channels]`; the value of node
/// `(ia, ib)` starts at `(ia * res + ib) * channels`, where `ia` indexes the
/// first axis of the pair.
#[derive(Debug)]
pub struct HexPlane<T> {
    /// Spatial box per axis; time always spans `[0, 1]`.
    pub bounds: [[T; 2]; 3],
    pub resolutions: Vec<usize>,
    pub channels: usize,
    pub planes: Vec<ParamBlock<T>>,
    clamped: AtomicU64,
}

impl<T: Clone> Clone for HexPlane<T> {
    fn clone(&self) -> Self {
        Self {
            bounds: self.bounds.clone(),
            resolutions: self.resolutions.clone(),
            channels: self.channels,
            planes: self.planes.clone(),
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl<T: PartialEq> PartialEq for HexPlane<T> {
    fn eq(&self, o: &Self) -> bool {
        self.bounds == o.bounds && self.resolutions == o.resolutions && self.channels == o.channels && self.planes == o.planes
    }
}

/// Grid coordinate along one axis: base node index and blend fraction.
#[derive(Clone, Copy, Debug)]
struct AxisSample<T> {
    node: usize,
    frac: T,
    /// d(grid coordinate)/d(input); zero where the query was clamped.
    scale: T,
}

impl<T: Real> HexPlane<T> {
    /// Grid values drawn uniformly from `[-init_range, init_range]`.
    pub fn new<R: Rng>(
        bounds: [[T; 2]; 3],
        resolutions: &[usize],
        channels: usize,
        init_range: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if let Some(b) = bounds.iter().find(|b| !(b[1] > b[0])) {
            return Err(Error::Config(format!("spatial bounds need positive extent, got [{}, {}]", b[0], b[1])));
        }
        if resolutions.is_empty() || resolutions.iter().any(|&r| r < 2) || channels == 0 {
            return Err(Error::Config("hexplane needs at least one level of resolution >= 2 and channels > 0".into()));
        }
        let mut planes = Vec::with_capacity(resolutions.len() * 6);
        for (level, &res) in resolutions.iter().enumerate() {
            for name in PLANE_NAMES {
                let mut p = ParamBlock::zeros(format!("hexplane/level{level}/plane{name}"), vec![res, res, channels]);
                for v in p.values.iter_mut() {
                    *v = T::lit(rng.gen_range(-init_range..=init_range));
                }
                planes.push(p);
            }
        }
        Ok(Self { bounds, resolutions: resolutions.to_vec(), channels, planes, clamped: AtomicU64::new(0) })
    }

    /// Width of an encoded feature, `levels * channels`.
    pub fn out_dim(&self) -> usize {
        self.resolutions.len() * self.channels
    }

    /// Number of queries clamped into the bounds since construction.
    pub fn clamped_queries(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    fn axis(&self, value: T, axis: usize, res: usize) -> (AxisSample<T>, bool) {
        let (lo, hi) = if axis == 3 { (T::zero(), T::one()) } else { (self.bounds[axis][0], self.bounds[axis][1]) };
        let span = T::lit((res - 1) as f64);
        let mut u = (value - lo) / (hi - lo);
        let mut scale = span / (hi - lo);
        let mut clamped = false;
        if !(u >= T::zero()) {
            u = T::zero();
            scale = T::zero();
            clamped = true;
        } else if u > T::one() {
            u = T::one();
            scale = T::zero();
            clamped = true;
        }
        let g = u * span;
        let node = (g.floor().to_usize().unwrap_or(0)).min(res - 2);
        (AxisSample { node, frac: g - T::lit(node as f64), scale }, clamped)
    }

    fn bilinear(&self, plane: &ParamBlock<T>, res: usize, a: &AxisSample<T>, b: &AxisSample<T>, out: &mut [T]) {
        let h = self.channels;
        let at = |ia: usize, ib: usize| (ia * res + ib) * h;
        let (fa, fb) = (a.frac, b.frac);
        let one = T::one();
        let w = [(one - fa) * (one - fb), (one - fa) * fb, fa * (one - fb), fa * fb];
        let idx = [at(a.node, b.node), at(a.node, b.node + 1), at(a.node + 1, b.node), at(a.node + 1, b.node + 1)];
        for c in 0..h {
            out[c] = w[0] * plane.values[idx[0] + c]
                + w[1] * plane.values[idx[1] + c]
                + w[2] * plane.values[idx[2] + c]
                + w[3] * plane.values[idx[3] + c];
        }
    }

    fn samples(&self, q: &[T; 4], res: usize) -> ([AxisSample<T>; 4], bool) {
        let mut any = false;
        let s = std::array::from_fn(|k| {
            let (s, c) = self.axis(q[k], k, res);
            any |= c;
            s
        });
        (s, any)
    }

    /// Encodes one spacetime query into `out` (`out_dim` values).
    pub fn encode_into(&self, position: &[T; 3], t: T, out: &mut [T]) {
        let q = [position[0], position[1], position[2], t];
        let h = self.channels;
        let mut clamped = false;
        let mut sample = vec![T::zero(); h];
        for (level, &res) in self.resolutions.iter().enumerate() {
            let (ax, c) = self.samples(&q, res);
            clamped |= c;
            let o = &mut out[level * h..(level + 1) * h];
            o.iter_mut().for_each(|v| *v = T::one());
            for (p, &(a, b)) in PLANE_AXES.iter().enumerate() {
                self.bilinear(&self.planes[level * 6 + p], res, &ax[a], &ax[b], &mut sample);
                for c in 0..h {
                    o[c] *= sample[c];
                }
            }
        }
        if clamped {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn encode(&self, position: &[T; 3], t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.out_dim()];
        self.encode_into(position, t, &mut out);
        out
    }

    /// Encodes every position at a shared time, row-major `n * out_dim`.
    pub fn encode_batch(&self, positions: &[[T; 3]], t: T) -> Vec<T> {
        let d = self.out_dim();
        let mut out = vec![T::zero(); positions.len() * d];
        for (p, o) in positions.iter().zip(out.chunks_mut(d)) {
            self.encode_into(p, t, o);
        }
        out
    }

    /// Back-propagates `d_out` for one query. Grid gradients accumulate
    /// into `grid_grad` (one buffer per plane); returns d/d(x, y, z, t).
    pub fn backward_one(&self, position: &[T; 3], t: T, d_out: &[T], grid_grad: &mut [Vec<T>]) -> [T; 4] {
        let q = [position[0], position[1], position[2], t];
        let h = self.channels;
        let one = T::one();
        let mut d_q = [T::zero(); 4];
        let mut samples = vec![vec![T::zero(); h]; 6];
        let mut prefix = vec![T::zero(); h];
        let mut suffix = vec![vec![T::zero(); h]; 7];
        for (level, &res) in self.resolutions.iter().enumerate() {
            let (ax, _) = self.samples(&q, res);
            for (p, &(a, b)) in PLANE_AXES.iter().enumerate() {
                self.bilinear(&self.planes[level * 6 + p], res, &ax[a], &ax[b], &mut samples[p]);
            }
            suffix[6].iter_mut().for_each(|v| *v = one);
            for p in (0..6).rev() {
                for c in 0..h {
                    suffix[p][c] = suffix[p + 1][c] * samples[p][c];
                }
            }
            prefix.iter_mut().for_each(|v| *v = one);
            let g = &d_out[level * h..(level + 1) * h];
            for (p, &(a, b)) in PLANE_AXES.iter().enumerate() {
                let plane = &self.planes[level * 6 + p];
                let (sa, sb) = (&ax[a], &ax[b]);
                let (fa, fb) = (sa.frac, sb.frac);
                let at = |ia: usize, ib: usize| (ia * res + ib) * h;
                let idx =
                    [at(sa.node, sb.node), at(sa.node, sb.node + 1), at(sa.node + 1, sb.node), at(sa.node + 1, sb.node + 1)];
                let w = [(one - fa) * (one - fb), (one - fa) * fb, fa * (one - fb), fa * fb];
                let gg = &mut grid_grad[level * 6 + p];
                let mut d_fa = T::zero();
                let mut d_fb = T::zero();
                for c in 0..h {
                    let ds = g[c] * prefix[c] * suffix[p + 1][c];
                    for k in 0..4 {
                        gg[idx[k] + c] += w[k] * ds;
                    }
                    let v =
                        [plane.values[idx[0] + c], plane.values[idx[1] + c], plane.values[idx[2] + c], plane.values[idx[3] + c]];
                    d_fa += ds * ((one - fb) * (v[2] - v[0]) + fb * (v[3] - v[1]));
                    d_fb += ds * ((one - fa) * (v[1] - v[0]) + fa * (v[3] - v[2]));
                    prefix[c] *= samples[p][c];
                }
                d_q[a] += d_fa * sa.scale;
                d_q[b] += d_fb * sb.scale;
            }
        }
        d_q
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.planes.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }
}
