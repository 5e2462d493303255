use super::covariance::{matmul3, matvec3, transpose3, Mat3};
use crate::error::{Error, Result};
use crate::real::{dot3, Real};

/// Pinhole camera. Camera space is x right, y down, z forward; pixel centers
/// sit at half-integer coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T> {
    /// Rotation part of the world-to-camera transform.
    pub rotation: Mat3<T>,
    pub translation: [T; 3],
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    pub near: T,
    pub far: T,
}

fn cross<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized<T: Real>(v: [T; 3]) -> Option<[T; 3]> {
    let n = dot3(&v, &v).sqrt();
    (n > T::zero()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

impl<T: Real> Camera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Mat3<T>,
        translation: [T; 3],
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
        near: T,
        far: T,
    ) -> Result<Self> {
        let cam = Self { rotation, translation, fx, fy, cx, cy, width, height, near, far };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with principal point at the image
    /// center and square pixels.
    pub fn look_at(eye: [T; 3], target: [T; 3], up: [T; 3], focal: T, width: usize, height: usize) -> Result<Self> {
        let forward = normalized([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]])
            .ok_or_else(|| Error::InvalidCamera("eye and target coincide".into()))?;
        let right = normalized(cross(&forward, &up))
            .ok_or_else(|| Error::InvalidCamera("up vector is parallel to the view direction".into()))?;
        let down = cross(&forward, &right);
        let rotation = [right, down, forward];
        let t = matvec3(&rotation, &eye);
        let half = T::lit(0.5);
        Self::new(
            rotation,
            [-t[0], -t[1], -t[2]],
            focal,
            focal,
            T::lit(width as f64) * half,
            T::lit(height as f64) * half,
            width,
            height,
            T::lit(0.01),
            T::lit(1000.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let rrt = matmul3(r, &transpose3(r));
        let tol = T::lit(1e-9);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                if (rrt[i][j] - target).abs() > tol {
                    return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
                }
            }
        }
        let det = dot3(&r[0], &cross(&r[1], &r[2]));
        if (det - T::one()).abs() > tol {
            return Err(Error::InvalidCamera("rotation has determinant -1".into()));
        }
        if !(self.near > T::zero() && self.near < self.far) {
            return Err(Error::InvalidCamera("require 0 < near < far".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image has zero size".into()));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: &[T; 3]) -> [T; 3] {
        let r = matvec3(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [T; 3] {
        let t = matvec3(&transpose3(&self.rotation), &self.translation);
        [-t[0], -t[1], -t[2]]
    }

    /// Homogeneous 4×4 world-to-camera matrix.
    pub fn view_matrix(&self) -> [[T; 4]; 4] {
        let mut m = [[T::zero(); 4]; 4];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&self.rotation[i]);
            m[i][3] = self.translation[i];
        }
        m[3][3] = T::one();
        m
    }

    /// Same camera rotated in place: yaw about its own vertical axis, then
    /// pitch about its horizontal axis. Angles in degrees.
    pub fn with_offsets(&self, yaw_deg: T, pitch_deg: T) -> Self {
        let (sy, cy) = yaw_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let o = T::zero();
        let l = T::one();
        let yaw = [[cy, o, sy], [o, l, o], [-sy, o, cy]];
        let pitch = [[l, o, o], [o, cp, -sp], [o, sp, cp]];
        let center = self.center();
        let rotation = matmul3(&matmul3(&pitch, &yaw), &self.rotation);
        let t = matvec3(&rotation, &center);
        Self { rotation, translation: [-t[0], -t[1], -t[2]], ..self.clone() }
    }

    /// The camera that sees a world moved by `p ↦ R p + t` exactly as this
    /// camera sees the original world.
    pub fn compensate_rigid(&self, rotation: &Mat3<T>, translation: &[T; 3]) -> Self {
        let new_rot = matmul3(&self.rotation, &transpose3(rotation));
        let shift = matvec3(&new_rot, translation);
        Self {
            rotation: new_rot,
            translation: [self.translation[0] - shift[0], self.translation[1] - shift[1], self.translation[2] - shift[2]],
            ..self.clone()
        }
    }
}
