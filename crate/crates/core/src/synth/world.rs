//! Blob synthesis, per-frame ground truth and the teacher codebook.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::oracle::oracle_render_labeled;
use super::spec::SceneSpec;
use crate::error::Result;
use crate::render::Image;
use crate::scene::sh::dc_from_color;
use crate::scene::{Camera, GaussianScene};

/// One ground-truth Gaussian relative to its owner's center.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub offset: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

/// Blobs of the background (label 0) and of each object (label `k + 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub spec: SceneSpec,
    pub background: Vec<Blob>,
    pub objects: Vec<Vec<Blob>>,
    /// Row `label` is the teacher feature of that label.
    pub codebook: Vec<Vec<f64>>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn random_rotation(r: &mut impl Rng) -> [f64; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(r));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

fn jitter_color(base: &[f64; 3], spread: f64, r: &mut impl Rng) -> [f64; 3] {
    let shade = r.gen_range(-spread..=spread);
    base.map(|c| (c + shade + r.gen_range(-0.3 * spread..=0.3 * spread)).clamp(0.02, 0.98))
}

/// Rounds to the nearest `f32`, the precision of the on-disk planes.
pub(crate) fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

fn unit_vector(r: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| to_f32_precision(x / n)).collect();
        }
    }
}

/// One random unit vector per label. For `dim >= 8` rows are redrawn until
/// every pair has cosine below 0.5.
pub fn make_codebook(seed: u64, labels: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut r = stream(seed, 1);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(labels);
    while rows.len() < labels {
        let cand = unit_vector(&mut r, dim);
        let ok = dim < 8 || rows.iter().all(|row| row.iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>() < 0.5);
        if ok {
            rows.push(cand);
        }
    }
    rows
}

impl World {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut r = stream(spec.seed, 2);
        let b = &spec.background;
        let background = (0..b.blobs)
            .map(|_| {
                let offset = std::array::from_fn(|k| r.gen_range(-1.0..=1.0) * b.half_size[k]);
                let base = b.scale.ln();
                Blob {
                    offset,
                    log_scale: std::array::from_fn(|_| base + r.gen_range(-0.35..0.35)),
                    rotation: random_rotation(&mut r),
                    opacity_logit: r.gen_range(1.5..3.5),
                    color: jitter_color(&b.color, 0.25, &mut r),
                }
            })
            .collect();
        let objects = spec
            .objects
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let mut r = stream(spec.seed, 16 + k as u64);
                (0..o.blobs)
                    .map(|_| {
                        let offset = loop {
                            let p: [f64; 3] = std::array::from_fn(|_| r.gen_range(-1.0..=1.0));
                            if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                                break p.map(|v| v * o.extent);
                            }
                        };
                        let base = (0.3 * o.extent).ln();
                        Blob {
                            offset,
                            log_scale: std::array::from_fn(|_| base + r.gen_range(-0.25..0.25)),
                            rotation: random_rotation(&mut r),
                            opacity_logit: r.gen_range(2.0..4.0),
                            color: jitter_color(&o.color, 0.08, &mut r),
                        }
                    })
                    .collect()
            })
            .collect();
        let codebook = make_codebook(spec.seed, spec.objects.len() + 1, spec.feature_dim);
        Ok(Self { spec: spec.clone(), background, objects, codebook })
    }

    fn push_blob(&self, scene: &mut GaussianScene<f64>, blob: &Blob, center: &[f64; 3], label: usize) {
        let mut one = GaussianScene::zeros(1, self.spec.feature_dim);
        one.positions[0] = std::array::from_fn(|k| center[k] + blob.offset[k]);
        one.log_scales[0] = blob.log_scale;
        one.rotations[0] = blob.rotation;
        one.opacity_logits[0] = blob.opacity_logit;
        for c in 0..3 {
            one.sh[0][c * 16] = dc_from_color(blob.color[c]);
        }
        one.features.copy_from_slice(&self.codebook[label]);
        scene.push_from(&one, 0);
    }

    /// Ground-truth Gaussians at time `t` with their labels.
    pub fn snapshot(&self, t: f64) -> (GaussianScene<f64>, Vec<usize>) {
        let mut scene = GaussianScene::empty(self.spec.feature_dim);
        let mut labels = Vec::new();
        let origin = self.spec.background.center;
        for b in &self.background {
            self.push_blob(&mut scene, b, &origin, 0);
            labels.push(0);
        }
        for (k, o) in self.spec.objects.iter().enumerate() {
            if o.present_at(t) {
                let c = o.center_at(t);
                for b in &self.objects[k] {
                    self.push_blob(&mut scene, b, &c, k + 1);
                    labels.push(k + 1);
                }
            }
        }
        (scene, labels)
    }

    pub fn camera_at(&self, t: f64) -> Result<Camera<f64>> {
        let c = &self.spec.camera;
        Camera::look_at(c.eye_at(t), c.target_at(t), c.up, c.focal, self.spec.width, self.spec.height)
    }

    /// Points that seed training: the `t = 0` snapshot, plus every object
    /// absent at `t = 0` taken at its first appearance. Returns positions,
    /// colors and labels.
    pub fn init_points(&self) -> (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut cols = Vec::new();
        let mut labels = Vec::new();
        let origin = self.spec.background.center;
        let mut add = |blobs: &[Blob], c: &[f64; 3], label: usize| {
            for b in blobs {
                pts.push(std::array::from_fn(|k| c[k] + b.offset[k]));
                cols.push(b.color);
                labels.push(label);
            }
        };
        add(&self.background, &origin, 0);
        for (k, o) in self.spec.objects.iter().enumerate() {
            let t = if o.present_at(0.0) { 0.0 } else { o.t_in };
            add(&self.objects[k], &o.center_at(t), k + 1);
        }
        (pts, cols, labels)
    }
}

/// Ground truth for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub t: f64,
    pub camera: Camera<f64>,
    /// 8-bit quantized color.
    pub rgb: Image<f64>,
    pub depth: Image<f64>,
    /// Teacher feature map.
    pub feature: Image<f64>,
    /// Instance label per pixel: 0 background, `k + 1` object `k`.
    pub mask: Vec<u32>,
}

/// Per-pixel label: the object whose summed compositing weight exceeds 0.5,
/// else background.
pub fn labels_from_weights(weights: &Image<f64>) -> Vec<u32> {
    (0..weights.pixels())
        .map(|p| {
            let w = &weights.data[p * weights.channels..(p + 1) * weights.channels];
            (1..w.len()).find(|&k| w[k] > 0.5).map_or(0, |k| k as u32)
        })
        .collect()
}

impl World {
    /// Renders, labels and quantizes frame `index`.
    pub fn frame(&self, index: usize) -> Result<Frame> {
        let spec = &self.spec;
        let t = spec.frame_time(index);
        let camera = self.camera_at(t)?;
        let (scene, labels) = self.snapshot(t);
        let fbg = &self.codebook[0];
        let out = oracle_render_labeled(&scene, &camera, spec.sky, fbg, &labels, spec.objects.len() + 1);
        let mask = labels_from_weights(&out.label_weights);
        let f = spec.feature_dim;
        let mut feature = Image::new(spec.width, spec.height, f);
        let mut noise = stream(spec.seed, 1000 + index as u64);
        for (p, &label) in mask.iter().enumerate() {
            let row = &self.codebook[label as usize];
            let dst = &mut feature.data[p * f..(p + 1) * f];
            if spec.teacher_noise > 0.0 {
                let v: Vec<f64> = row
                    .iter()
                    .map(|x| {
                        x + spec.teacher_noise * {
                            let z: f64 = StandardNormal.sample(&mut noise);
                            z
                        }
                    })
                    .collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                for (d, x) in dst.iter_mut().zip(&v) {
                    *d = to_f32_precision(x / n);
                }
            } else {
                dst.copy_from_slice(row);
            }
        }
        let rgb = out.render.rgb.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
        let depth = out.render.depth.map(to_f32_precision);
        Ok(Frame { index, t, camera, rgb, depth, feature, mask })
    }
}

/// A generated sequence with everything needed for training.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: SceneSpec,
    pub frames: Vec<Frame>,
    pub codebook: Vec<Vec<f64>>,
    pub points: Vec<[f64; 3]>,
    pub point_colors: Vec<[f64; 3]>,
    pub point_labels: Vec<usize>,
}

/// Which frames a run trains and evaluates on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    /// Train and evaluate on every frame.
    Reconstruction,
    /// Every 10th frame (0, 10, 20, ...) is held out for evaluation.
    Nvs,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reconstruction" => Ok(Split::Reconstruction),
            "nvs" => Ok(Split::Nvs),
            _ => Err(format!("unknown split `{s}` (expected reconstruction or nvs)")),
        }
    }
}

impl Dataset {
    /// `(train, test)` frame indices.
    pub fn split(&self, split: Split) -> (Vec<usize>, Vec<usize>) {
        let all: Vec<usize> = (0..self.frames.len()).collect();
        match split {
            Split::Reconstruction => (all.clone(), all),
            Split::Nvs => all.into_iter().partition(|i| i % 10 != 0),
        }
    }

    /// Background color for the feature image: the background codebook row.
    pub fn feature_background(&self) -> &[f64] {
        &self.codebook[0]
    }
}

/// Synthesizes every frame of `spec` (parallel over frames).
pub fn generate_dataset(spec: &SceneSpec) -> Result<Dataset> {
    let world = World::new(spec)?;
    let frames = (0..spec.frames).into_par_iter().map(|i| world.frame(i)).collect::<Result<Vec<_>>>()?;
    let (points, point_colors, point_labels) = world.init_points();
    Ok(Dataset { spec: spec.clone(), frames, codebook: world.codebook, points, point_colors, point_labels })
}
