//! Scene descriptions for the synthetic world.

use crate::error::{Error, Result};
use crate::kvconf::{format_array, KvFile};

/// A rigid cluster of Gaussian blobs moving along a quadratic path
/// `center + velocity·t + acceleration·t²`, present for `t ∈ [t_in, t_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub blobs: usize,
    pub center: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
    pub color: [f64; 3],
    /// Radius of the ball the blobs are scattered in.
    pub extent: f64,
    pub t_in: f64,
    pub t_out: f64,
}

impl ObjectSpec {
    pub fn center_at(&self, t: f64) -> [f64; 3] {
        std::array::from_fn(|k| self.center[k] + self.velocity[k] * t + self.acceleration[k] * t * t)
    }

    pub fn present_at(&self, t: f64) -> bool {
        t >= self.t_in && t <= self.t_out
    }
}

/// Static blobs scattered uniformly in a box.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSpec {
    pub blobs: usize,
    pub center: [f64; 3],
    pub half_size: [f64; 3],
    pub color: [f64; 3],
    /// Typical blob standard deviation in meters.
    pub scale: f64,
}

/// Camera eye and target move linearly from their start to end values
/// over `t ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPath {
    pub eye_start: [f64; 3],
    pub eye_end: [f64; 3],
    pub target_start: [f64; 3],
    pub target_end: [f64; 3],
    pub up: [f64; 3],
    /// Focal length in pixels.
    pub focal: f64,
}

impl CameraPath {
    fn lerp(a: &[f64; 3], b: &[f64; 3], t: f64) -> [f64; 3] {
        std::array::from_fn(|k| a[k] + (b[k] - a[k]) * t)
    }

    pub fn eye_at(&self, t: f64) -> [f64; 3] {
        Self::lerp(&self.eye_start, &self.eye_end, t)
    }

    pub fn target_at(&self, t: f64) -> [f64; 3] {
        Self::lerp(&self.target_start, &self.target_end, t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub feature_dim: usize,
    /// Spatial box every blob center must stay inside.
    pub bounds: [[f64; 2]; 3],
    /// Image background color.
    pub sky: [f64; 3],
    /// Standard deviation of Gaussian noise added to teacher features
    /// before renormalization; 0 gives exact codebook vectors.
    pub teacher_noise: f64,
    pub background: BackgroundSpec,
    pub objects: Vec<ObjectSpec>,
    pub camera: CameraPath,
}

fn spec_error(message: String) -> Error {
    Error::Spec(message)
}

impl SceneSpec {
    /// Time of frame `i`: frames are evenly spaced over `[0, 1]`.
    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / (self.frames - 1) as f64
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvFile::parse(text, spec_error)?;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Spec(format!("missing key `{key}`")));
        let frames = kv.take("frames")?.ok_or_else(|| Error::Spec("missing key `frames`".into()))?;
        let width = kv.take_or("width", 48)?;
        let height = kv.take_or("height", 48)?;
        let seed = kv.take_or("seed", 0)?;
        let feature_dim = kv.take_or("feature_dim", 8)?;
        let lo = kv.take_array_or("bounds_min", [-3.0; 3])?;
        let hi = kv.take_array_or("bounds_max", [3.0; 3])?;
        let sky = kv.take_array_or("sky", [0.0; 3])?;
        let teacher_noise = kv.take_or("teacher_noise", 0.0)?;
        let background = BackgroundSpec {
            blobs: kv.take_or("background.blobs", 0)?,
            center: kv.take_array_or("background.center", [0.0; 3])?,
            half_size: kv.take_array_or("background.half_size", [1.0; 3])?,
            color: kv.take_array_or("background.color", [0.5; 3])?,
            scale: kv.take_or("background.scale", 0.1)?,
        };
        let count: usize = kv.take_or("objects", 0)?;
        let mut objects = Vec::with_capacity(count);
        for k in 0..count {
            let key = |f: &str| format!("object.{k}.{f}");
            objects.push(ObjectSpec {
                blobs: kv.take_or(&key("blobs"), 20)?,
                center: kv.take_array(&key("center"))?.ok_or_else(|| Error::Spec(format!("missing key `{}`", key("center"))))?,
                velocity: kv.take_array_or(&key("velocity"), [0.0; 3])?,
                acceleration: kv.take_array_or(&key("acceleration"), [0.0; 3])?,
                color: kv.take_array_or(&key("color"), [0.5; 3])?,
                extent: kv.take_or(&key("extent"), 0.3)?,
                t_in: kv.take_or(&key("t_in"), 0.0)?,
                t_out: kv.take_or(&key("t_out"), 1.0)?,
            });
        }
        let eye_start = kv.take_array("camera.eye_start")?.ok_or_else(|| Error::Spec("missing key `camera.eye_start`".into()))?;
        let target_start = kv.take_array_or("camera.target_start", [0.0; 3])?;
        let camera = CameraPath {
            eye_end: kv.take_array_or("camera.eye_end", eye_start)?,
            target_end: kv.take_array_or("camera.target_end", target_start)?,
            eye_start,
            target_start,
            up: kv.take_array_or("camera.up", [0.0, 1.0, 0.0])?,
            focal: need(kv.take("camera.focal")?, "camera.focal")?,
        };
        kv.finish()?;
        let spec = Self {
            frames,
            width,
            height,
            seed,
            feature_dim,
            bounds: std::array::from_fn(|k| [lo[k], hi[k]]),
            sky,
            teacher_noise,
            background,
            objects,
            camera,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Text form accepted by [`SceneSpec::parse`]; round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("frames", self.frames.to_string());
        line("width", self.width.to_string());
        line("height", self.height.to_string());
        line("seed", self.seed.to_string());
        line("feature_dim", self.feature_dim.to_string());
        line("bounds_min", format_array(&self.bounds.map(|b| b[0])));
        line("bounds_max", format_array(&self.bounds.map(|b| b[1])));
        line("sky", format_array(&self.sky));
        line("teacher_noise", format!("{:?}", self.teacher_noise));
        let b = &self.background;
        line("background.blobs", b.blobs.to_string());
        line("background.center", format_array(&b.center));
        line("background.half_size", format_array(&b.half_size));
        line("background.color", format_array(&b.color));
        line("background.scale", format!("{:?}", b.scale));
        line("objects", self.objects.len().to_string());
        for (k, o) in self.objects.iter().enumerate() {
            line(&format!("object.{k}.blobs"), o.blobs.to_string());
            line(&format!("object.{k}.center"), format_array(&o.center));
            line(&format!("object.{k}.velocity"), format_array(&o.velocity));
            line(&format!("object.{k}.acceleration"), format_array(&o.acceleration));
            line(&format!("object.{k}.color"), format_array(&o.color));
            line(&format!("object.{k}.extent"), format!("{:?}", o.extent));
            line(&format!("object.{k}.t_in"), format!("{:?}", o.t_in));
            line(&format!("object.{k}.t_out"), format!("{:?}", o.t_out));
        }
        let c = &self.camera;
        line("camera.eye_start", format_array(&c.eye_start));
        line("camera.eye_end", format_array(&c.eye_end));
        line("camera.target_start", format_array(&c.target_start));
        line("camera.target_end", format_array(&c.target_end));
        line("camera.up", format_array(&c.up));
        line("camera.focal", format!("{:?}", c.focal));
        s
    }

    fn inside(&self, p: &[f64; 3], margin: f64) -> bool {
        (0..3).all(|k| p[k] - margin >= self.bounds[k][0] && p[k] + margin <= self.bounds[k][1])
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.frames < 2 {
            return fail(format!("frame count must be at least 2, got {}", self.frames));
        }
        if self.width == 0 || self.height == 0 {
            return fail("image size must be positive".into());
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive".into());
        }
        if let Some(k) = (0..3).find(|&k| !(self.bounds[k][1] > self.bounds[k][0])) {
            return fail(format!("bounds on axis {k} have no extent"));
        }
        if !(self.teacher_noise >= 0.0) {
            return fail("teacher_noise must be non-negative".into());
        }
        let unit = |c: &[f64; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !unit(&self.sky) {
            return fail("sky color must lie in [0, 1]".into());
        }
        let b = &self.background;
        if !unit(&b.color) || !(b.scale > 0.0) || b.half_size.iter().any(|h| !(*h >= 0.0)) {
            return fail("background needs colors in [0, 1], positive scale and non-negative half size".into());
        }
        let corner_lo = std::array::from_fn(|k| b.center[k] - b.half_size[k]);
        let corner_hi = std::array::from_fn(|k| b.center[k] + b.half_size[k]);
        if b.blobs > 0 && !(self.inside(&corner_lo, 0.0) && self.inside(&corner_hi, 0.0)) {
            return fail("background box leaves the scene bounds".into());
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !(0.0..=1.0).contains(&o.t_in) || !(0.0..=1.0).contains(&o.t_out) || !(o.t_in < o.t_out) {
                return fail(format!("object {k}: appearance window must satisfy 0 <= t_in < t_out <= 1"));
            }
            if !unit(&o.color) || !(o.extent > 0.0) || o.blobs == 0 {
                return fail(format!("object {k}: needs blobs, positive extent and colors in [0, 1]"));
            }
            // the path is quadratic per axis, so its extremes over the window
            // are at the window ends or the axis vertex
            let mut times = vec![o.t_in, o.t_out];
            for a in 0..3 {
                if o.acceleration[a] != 0.0 {
                    let tv = -o.velocity[a] / (2.0 * o.acceleration[a]);
                    if tv > o.t_in && tv < o.t_out {
                        times.push(tv);
                    }
                }
            }
            if let Some(t) = times.iter().find(|&&t| !self.inside(&o.center_at(t), o.extent)) {
                return fail(format!("object {k} leaves the scene bounds at t = {t}"));
            }
        }
        let c = &self.camera;
        if !(c.focal > 0.0) {
            return fail("camera focal length must be positive".into());
        }
        Ok(())
    }

    /// The bundled emergent-object scene: a textured backdrop, one object
    /// crossing the view for the whole sequence and one that appears at
    /// t = 0.4 and moves toward the center.
    pub fn emergent() -> Self {
        Self {
            frames: 24,
            width: 48,
            height: 48,
            seed: 7,
            feature_dim: 8,
            bounds: [[-3.0, 3.0], [-3.0, 3.0], [-2.0, 4.0]],
            sky: [0.05, 0.05, 0.1],
            teacher_noise: 0.0,
            background: BackgroundSpec {
                blobs: 260,
                center: [0.0, 0.0, 2.0],
                half_size: [2.6, 2.2, 0.6],
                color: [0.45, 0.5, 0.4],
                scale: 0.16,
            },
            objects: vec![
                ObjectSpec {
                    blobs: 60,
                    center: [-1.2, 0.3, 0.2],
                    velocity: [2.0, 0.0, 0.0],
                    acceleration: [0.0, -0.4, 0.0],
                    color: [0.85, 0.2, 0.15],
                    extent: 0.45,
                    t_in: 0.0,
                    t_out: 1.0,
                },
                ObjectSpec {
                    blobs: 50,
                    center: [1.3, -0.8, 0.6],
                    velocity: [-1.5, 0.8, -0.5],
                    acceleration: [0.0; 3],
                    color: [0.15, 0.35, 0.9],
                    extent: 0.35,
                    t_in: 0.4,
                    t_out: 1.0,
                },
            ],
            camera: CameraPath {
                eye_start: [-0.4, -0.3, -5.0],
                eye_end: [0.4, -0.2, -5.0],
                target_start: [0.0, 0.0, 1.0],
                target_end: [0.0, 0.0, 1.0],
                up: [0.0, 1.0, 0.0],
                focal: 60.0,
            },
        }
    }

    /// A motionless scene of `blobs` background blobs seen by a camera
    /// sweeping sideways.
    pub fn static_scene(blobs: usize) -> Self {
        let mut s = Self::emergent();
        s.objects.clear();
        s.background.blobs = blobs;
        s.frames = 12;
        s
    }
}
