use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Extent;
use crate::net::NetShape;
use crate::render::OrbitConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Synthetic,
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSize {
    pub width: usize,
    pub height: usize,
}

impl Default for RenderSize {
    fn default() -> Self {
        RenderSize {
            width: 64,
            height: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub url: Option<String>,
    pub timeout_secs: f64,
    pub guidance_scale: f64,
    /// Attempts per step after a transport or protocol failure.
    pub retries: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            url: None,
            timeout_secs: 60.0,
            guidance_scale: 20.0,
            retries: 3,
        }
    }
}

/// Every knob of a run. Together with the prompt this fully determines the
/// result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Voxels per axis, `N`.
    pub resolution: usize,
    pub extent: Extent,
    /// Grids per axis in the GIP blocks, `G`.
    pub grids: usize,
    pub net: NetShape,
    /// Opacity threshold for the exported point cloud.
    pub tau: f64,
    /// Opacity every voxel starts from; sets the shape decoder's output bias.
    pub initial_opacity: f64,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub provider: ProviderKind,
    pub render: RenderSize,
    pub orbit: OrbitConfig,
    pub views_per_step: usize,
    pub timestep_min: f64,
    pub timestep_max: f64,
    /// Abort once the mean absolute residual exceeds this.
    pub divergence_limit: f64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Steps between snapshot renders; 0 disables them.
    pub snapshot_every: usize,
    pub bridge: BridgeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            resolution: 32,
            extent: Extent::default(),
            grids: 16,
            net: NetShape::default(),
            tau: 0.1,
            initial_opacity: 0.5,
            seed: 0,
            optimizer: AdamConfig::default(),
            provider: ProviderKind::Synthetic,
            render: RenderSize::default(),
            orbit: OrbitConfig::default(),
            views_per_step: 1,
            timestep_min: 0.02,
            timestep_max: 0.98,
            divergence_limit: 1e3,
            checkpoint_every: 0,
            snapshot_every: 100,
            bridge: BridgeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.resolution == 0 {
            return bad("resolution must be at least 1".into());
        }
        if self.grids == 0 || self.grids > self.resolution {
            return bad(format!(
                "grids ({}) must lie in 1..={} (the resolution)",
                self.grids, self.resolution
            ));
        }
        let n = &self.net;
        if n.d_model == 0 || n.d_text == 0 || n.hidden == 0 || n.frequencies == 0 {
            return bad("network widths and frequency count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1]", self.tau));
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return bad(format!("initial_opacity {} outside (0, 1)", self.initial_opacity));
        }
        if self.views_per_step == 0 {
            return bad("views_per_step must be at least 1".into());
        }
        if !(0.0 < self.timestep_min && self.timestep_min <= self.timestep_max && self.timestep_max < 1.0) {
            return bad("timestep range must satisfy 0 < min <= max < 1".into());
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return bad("invalid Adam hyperparameters".into());
        }
        if !(self.orbit.radius > 0.0) {
            return bad("orbit radius must be positive".into());
        }
        if self.render.width < 8 || self.render.height < 8 {
            return bad("render size must be at least 8×8".into());
        }
        Extent::new(self.extent.min, self.extent.max)?;
        if self.provider == ProviderKind::Bridge && self.bridge.url.is_none() {
            return bad("bridge provider requires a bridge url".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = TrainConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: TrainConfig = serde_json::from_str(r#"{"resolution": 8, "grids": 4}"#).unwrap();
        assert_eq!(partial.resolution, 8);
        assert_eq!(partial.iterations, 1000);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"resolutoin": 8}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let zero = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(zero.validate(), Err(Error::InvalidArgument(_))));
        let too_many_grids = TrainConfig {
            resolution: 8,
            grids: 16,
            ..TrainConfig::default()
        };
        assert!(too_many_grids.validate().is_err());
        let bridge = TrainConfig {
            provider: ProviderKind::Bridge,
            ..TrainConfig::default()
        };
        assert!(bridge.validate().is_err());
    }
}
