//! Image-space guidance: turns a rendered view into the residual that drives
//! the score-distillation update, and chains it back to network parameters.

mod bridge;
mod sds;
mod targets;

pub use bridge::{decode_f32_image, encode_f32_image, BridgeClient, EmbedReply, ResidualReply, ResidualRequest};
pub use sds::{ForwardRecord, RecordedView, Scene};
pub use targets::{SyntheticGuidance, TargetSet, TargetView};

use crate::error::Result;
use crate::render::{CameraPose, RenderedImage};

/// Per-pixel residual plus its timestep weight.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceResidual {
    pub residual: Vec<[f64; 3]>,
    pub weight: f64,
    pub timestep: f64,
}

impl GuidanceResidual {
    /// Mean absolute residual entry.
    pub fn mean_abs(&self) -> f64 {
        let n = (3 * self.residual.len()).max(1) as f64;
        self.residual.iter().flatten().map(|v| v.abs()).sum::<f64>() / n
    }

    /// Euclidean norm of the residual.
    pub fn norm(&self) -> f64 {
        self.residual.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One guidance query.
#[derive(Clone, Copy, Debug)]
pub struct GuidanceRequest<'a> {
    pub image: &'a RenderedImage,
    pub camera: &'a CameraPose,
    pub prompt: &'a str,
    pub timestep: f64,
    pub seed: u64,
}

/// Stands in for `ε_φ(x_t, t, e) − ε`: a diffusion model behind the bridge or
/// a synthetic multi-view target.
pub trait GuidanceProvider {
    fn residual(&self, request: GuidanceRequest<'_>) -> Result<GuidanceResidual>;

    /// Cameras the provider can supervise, if it is restricted to fixed views.
    fn fixed_views(&self) -> Option<Vec<CameraPose>> {
        None
    }
}
