//! Text-conditioned initialization of 3D Gaussian splatting scenes.
//!
//! A fixed lattice of isotropic Gaussians ([`field`]) gets its opacity and
//! color from an attention network ([`net`]) fed with coordinate features and
//! a prompt embedding ([`encode`]). The field is rendered by a differentiable
//! splatter ([`render`]), scored by a guidance provider ([`guidance`]) and
//! optimized ([`train`]). Voxels that end up opaque enough are exported as a
//! point cloud for a downstream splatting trainer.

pub mod encode;
pub mod error;
pub mod field;
pub mod guidance;
pub mod net;
pub mod render;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
