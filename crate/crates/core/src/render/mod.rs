//! Tile-based differentiable rasterizer.

pub mod image;
pub mod project;
pub mod rasterize;

pub use image::Image;
pub use project::{project_backward, project_gaussians, ScreenSplat, SplatGrad};
pub use rasterize::{rasterize, rasterize_backward, Compositor, ForwardState, OutputGrads, RenderOutput};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::scene::{Camera, GaussianScene};

/// Rasterizer constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterSettings {
    /// Contributions with α′ below this are skipped.
    pub skip_threshold: f64,
    /// Upper bound on per-splat α′.
    pub alpha_clamp: f64,
    /// A pixel stops compositing once its transmittance drops below this.
    pub termination: f64,
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self { skip_threshold: 1.0 / 255.0, alpha_clamp: 0.99, termination: 1e-4 }
    }
}

impl RasterSettings {
    /// No skipping and no early termination; every splat in front of the
    /// near plane reaches every pixel.
    pub fn exact() -> Self {
        Self { skip_threshold: 0.0, alpha_clamp: 0.99, termination: 0.0 }
    }
}

/// Forward products kept for [`render_backward`].
#[derive(Clone, Debug)]
pub struct RenderTape<T> {
    pub forward: ForwardState<T>,
}

/// Renders `scene` from `camera`.
pub fn render<T: Real>(
    scene: &GaussianScene<T>,
    camera: &Camera<T>,
    background: [T; 3],
    feature_background: &[T],
    settings: &RasterSettings,
) -> Result<(RenderOutput<T>, RenderTape<T>)> {
    camera.validate()?;
    if feature_background.len() != scene.feature_dim {
        return Err(Error::Shape(format!(
            "feature background has width {}, scene features have {}",
            feature_background.len(),
            scene.feature_dim
        )));
    }
    let splats = project_gaussians(scene, camera, settings);
    let (out, forward) = rasterize(&splats, camera.width, camera.height, background, feature_background, settings)?;
    Ok((out, RenderTape { forward }))
}

/// Gradients of the rendered planes with respect to the raw scene attributes.
pub fn render_backward<T: Real>(
    scene: &GaussianScene<T>,
    camera: &Camera<T>,
    tape: &RenderTape<T>,
    grads: &OutputGrads<T>,
) -> Result<GaussianScene<T>> {
    let splat_grads = rasterize_backward(&tape.forward, grads)?;
    let mut grad = GaussianScene::zeros_like(scene);
    project_backward(scene, camera, &tape.forward.splats, &splat_grads, &mut grad);
    Ok(grad)
}
