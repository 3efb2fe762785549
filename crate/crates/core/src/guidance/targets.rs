use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GuidanceProvider, GuidanceRequest, GuidanceResidual};
use crate::error::{Error, Result};
use crate::render::{read_raw_planes_file, write_png, write_raw_planes_file, CameraPose, RenderedImage};

#[derive(Clone, Debug, PartialEq)]
pub struct TargetView {
    pub camera: CameraPose,
    pub image: RenderedImage,
}

/// Ground-truth views for the synthetic provider.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    views: Vec<TargetView>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    camera: CameraPose,
    image: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    views: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "targets.json";

impl TargetSet {
    pub fn new(views: Vec<TargetView>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::invalid("target set needs at least one view"));
        }
        for v in &views {
            v.camera.validate()?;
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(Error::invalid("target image size differs from its camera"));
            }
            // Compositing sums may overshoot 1 by a rounding error.
            if !v.image.color.iter().flatten().all(|c| (-1e-9..=1.0 + 1e-9).contains(c)) {
                return Err(Error::invalid("target image values outside [0, 1]"));
            }
        }
        Ok(TargetSet { views })
    }

    pub fn views(&self) -> &[TargetView] {
        &self.views
    }

    pub fn find(&self, camera: &CameraPose) -> Option<&TargetView> {
        self.views.iter().find(|v| v.camera == *camera)
    }

    /// Writes `targets.json`, one raw `f32` plane file per view and a PNG
    /// preview of each.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut views = Vec::new();
        for (i, v) in self.views.iter().enumerate() {
            let name = format!("view_{i:02}.f32");
            write_raw_planes_file(&v.image, &dir.join(&name))?;
            write_png(&v.image, &dir.join(format!("view_{i:02}.png")))?;
            views.push(ManifestEntry {
                camera: v.camera,
                image: name,
            });
        }
        let json = serde_json::to_string_pretty(&Manifest { views })
            .map_err(|e| Error::Data(e.to_string()))?;
        fs::write(dir.join(MANIFEST_NAME), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("bad {MANIFEST_NAME}: {e}")))?;
        let views = manifest
            .views
            .into_iter()
            .map(|e| {
                let image = read_raw_planes_file(&dir.join(&e.image), e.camera.width, e.camera.height)?;
                Ok(TargetView {
                    camera: e.camera,
                    image,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TargetSet::new(views).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Residual `rendered − target` with unit weight, so one update equals the
/// exact gradient of `½‖rendered − target‖²`.
#[derive(Clone, Debug)]
pub struct SyntheticGuidance {
    pub targets: TargetSet,
}

impl SyntheticGuidance {
    pub fn new(targets: TargetSet) -> Self {
        SyntheticGuidance { targets }
    }

    pub fn synthetic_residual(
        &self,
        rendered: &RenderedImage,
        camera: &CameraPose,
        timestep: f64,
    ) -> Result<GuidanceResidual> {
        let view = self
            .targets
            .find(camera)
            .ok_or_else(|| Error::invalid("camera is not one of the target views"))?;
        if rendered.color.len() != view.image.color.len() {
            return Err(Error::invalid("rendered image size differs from target"));
        }
        let residual = rendered
            .color
            .iter()
            .zip(&view.image.color)
            .map(|(r, t)| [r[0] - t[0], r[1] - t[1], r[2] - t[2]])
            .collect();
        Ok(GuidanceResidual {
            residual,
            weight: 1.0,
            timestep,
        })
    }
}

impl GuidanceProvider for SyntheticGuidance {
    fn residual(&self, request: GuidanceRequest<'_>) -> Result<GuidanceResidual> {
        self.synthetic_residual(request.image, request.camera, request.timestep)
    }

    fn fixed_views(&self) -> Option<Vec<CameraPose>> {
        Some(self.targets.views().iter().map(|v| v.camera).collect())
    }
}
