use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of training viewpoints on a sphere around the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub radius: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub fov_deg: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            radius: 2.2,
            elevation_min_deg: -10.0,
            elevation_max_deg: 45.0,
            fov_deg: 49.1,
        }
    }
}

/// Pinhole camera looking at `target`.
///
/// World space is y-up. An orbit camera at azimuth `φ` and elevation `θ`
/// sits at `r (cos θ cos φ, sin θ, cos θ sin φ)`, so azimuth 0 and elevation
/// 0 is on the +x axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

/// Camera-space coordinates of a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewPoint {
    /// Pixel coordinates; pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
    pub pixel: [f64; 2],
    /// Distance along the viewing direction.
    pub depth: f64,
}

impl CameraPose {
    pub fn new(
        position: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = CameraPose {
            position,
            target,
            up,
            fov_y,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera on an orbit around the origin, angles in degrees.
    pub fn orbit(
        azimuth_deg: f64,
        elevation_deg: f64,
        radius: f64,
        fov_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("orbit radius {radius} must be positive")));
        }
        // Wrap before converting so that 0° and 360° give identical poses.
        let az = azimuth_deg.rem_euclid(360.0).to_radians();
        let el = elevation_deg.to_radians();
        let position = [
            radius * el.cos() * az.cos(),
            radius * el.sin(),
            radius * el.cos() * az.sin(),
        ];
        CameraPose::new(
            position,
            [0.0; 3],
            [0.0, 1.0, 0.0],
            fov_deg.to_radians(),
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::invalid(format!(
                "image {}×{} is smaller than 8×8",
                self.width, self.height
            )));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::invalid(format!("field of view {} outside (0, π)", self.fov_y)));
        }
        let forward = Vector3::from(self.target) - Vector3::from(self.position);
        if forward.norm() <= 0.0 || !forward.norm().is_finite() {
            return Err(Error::invalid("camera position coincides with its target"));
        }
        if forward.normalize().cross(&Vector3::from(self.up)).norm() < 1e-9 {
            return Err(Error::invalid("camera up vector is parallel to the view direction"));
        }
        Ok(())
    }

    /// Focal length in pixels; pixels are square.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    /// Orthonormal `(right, up, forward)` basis.
    pub fn basis(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let forward = (Vector3::from(self.target) - Vector3::from(self.position)).normalize();
        let right = forward.cross(&Vector3::from(self.up)).normalize();
        let up = right.cross(&forward);
        (right, up, forward)
    }

    pub fn project(&self, p: [f64; 3]) -> ViewPoint {
        let (right, up, forward) = self.basis();
        let rel = Vector3::from(p) - Vector3::from(self.position);
        let depth = rel.dot(&forward);
        let f = self.focal();
        ViewPoint {
            pixel: [
                0.5 * self.width as f64 + f * rel.dot(&right) / depth,
                0.5 * self.height as f64 - f * rel.dot(&up) / depth,
            ],
            depth,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Draws a pose with uniform azimuth in `[0°, 360°)` and uniform elevation
/// within the orbit's range, looking at the origin.
pub fn sample_camera<R: Rng + ?Sized>(
    rng: &mut R,
    orbit: &OrbitConfig,
    width: usize,
    height: usize,
) -> Result<CameraPose> {
    if !(orbit.elevation_min_deg <= orbit.elevation_max_deg) {
        return Err(Error::invalid("orbit elevation range is inverted"));
    }
    let azimuth = rng.random_range(0.0..360.0);
    let elevation = if orbit.elevation_min_deg == orbit.elevation_max_deg {
        orbit.elevation_min_deg
    } else {
        rng.random_range(orbit.elevation_min_deg..=orbit.elevation_max_deg)
    };
    CameraPose::orbit(azimuth, elevation, orbit.radius, orbit.fov_deg, width, height)
}
