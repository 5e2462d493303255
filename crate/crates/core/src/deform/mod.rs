//! Time-conditioned deformation of canonical Gaussians.

pub mod field;
pub mod hexplane;

pub use field::{DeformTrace, DeformationField, Deformed, FieldConfig, DEFORM_DIM};
pub use hexplane::{HexPlane, PLANE_AXES, PLANE_NAMES};
