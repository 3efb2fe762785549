//! Voxelized Gaussian field: a fixed lattice of isotropic Gaussians whose only
//! free attributes are opacity and degree-0 color.

mod grid;
mod ply;

pub use grid::GridIndexMap;
pub use ply::{export_ply, read_ply, write_ply_file, PlyVertex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// World-space scale shared by every Gaussian in the field.
pub const GAUSSIAN_SCALE: [f64; 3] = [0.05, 0.05, 0.05];
/// Identity rotation quaternion, (w, x, y, z).
pub const GAUSSIAN_ROTATION: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

/// Axis-aligned cube `[min, max]³`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: f64,
    pub max: f64,
}

impl Extent {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::invalid(format!(
                "extent [{min}, {max}] is empty or inverted"
            )));
        }
        Ok(Extent { min, max })
    }

    pub fn side(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        p.iter().all(|&c| c >= self.min && c <= self.max)
    }
}

impl Default for Extent {
    fn default() -> Self {
        Extent { min: -1.0, max: 1.0 }
    }
}

/// `N³` Gaussians on the centers of a uniform voxel lattice.
///
/// Voxels are stored row-major with x varying fastest:
/// `id = i + N * (j + N * k)`. Geometry (centers, scale, rotation) is set at
/// construction and cannot be changed afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGaussianField {
    resolution: usize,
    extent: Extent,
    centers: Vec<[f64; 3]>,
    opacity: Vec<f64>,
    color: Vec<[f64; 3]>,
}

impl VoxelGaussianField {
    /// Lattice of `resolution³` voxels with placeholder opacity and color 0.5.
    pub fn new(resolution: usize, extent: Extent) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("field resolution must be at least 1"));
        }
        // Re-validate in case the extent was built by struct literal.
        let extent = Extent::new(extent.min, extent.max)?;
        let m = resolution
            .checked_pow(3)
            .ok_or_else(|| Error::invalid("field resolution overflows voxel count"))?;
        let step = extent.side() / resolution as f64;
        let coord = |i: usize| extent.min + (i as f64 + 0.5) * step;
        let mut centers = Vec::with_capacity(m);
        for k in 0..resolution {
            for j in 0..resolution {
                for i in 0..resolution {
                    centers.push([coord(i), coord(j), coord(k)]);
                }
            }
        }
        Ok(VoxelGaussianField {
            resolution,
            extent,
            centers,
            opacity: vec![0.5; m],
            color: vec![[0.5; 3]; m],
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Distance between neighbouring voxel centers.
    pub fn spacing(&self) -> f64 {
        self.extent.side() / self.resolution as f64
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn scale(&self) -> [f64; 3] {
        GAUSSIAN_SCALE
    }

    pub fn rotation(&self) -> [f64; 4] {
        GAUSSIAN_ROTATION
    }

    pub fn opacity(&self) -> &[f64] {
        &self.opacity
    }

    pub fn color(&self) -> &[[f64; 3]] {
        &self.color
    }

    /// Lattice coordinate `(i, j, k)` of voxel `id`.
    pub fn voxel_coords(&self, id: usize) -> [usize; 3] {
        let n = self.resolution;
        [id % n, (id / n) % n, id / (n * n)]
    }

    /// Replaces the learned attributes. Values must lie in `[0, 1]`.
    pub fn set_appearance(&mut self, opacity: Vec<f64>, color: Vec<[f64; 3]>) -> Result<()> {
        if opacity.len() != self.len() || color.len() != self.len() {
            return Err(Error::invalid(format!(
                "appearance has {} opacities and {} colors for {} voxels",
                opacity.len(),
                color.len(),
                self.len()
            )));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !opacity.iter().copied().all(in_unit) {
            return Err(Error::invalid("opacity outside [0, 1]"));
        }
        if !color.iter().flatten().copied().all(in_unit) {
            return Err(Error::invalid("color outside [0, 1]"));
        }
        self.opacity = opacity;
        self.color = color;
        Ok(())
    }

    /// Groups voxels into `grids³` equal cells; voxel `i` along an axis lands
    /// in cell `floor(i * grids / N)`.
    pub fn partition_grid(&self, grids: usize) -> Result<GridIndexMap> {
        GridIndexMap::new(self.resolution, grids)
    }

    /// Keeps every voxel whose opacity is at least `tau`.
    pub fn filter_occupied(&self, tau: f64) -> Result<InitPointCloud> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("threshold {tau} outside [0, 1]")));
        }
        let points = self
            .centers
            .iter()
            .zip(&self.opacity)
            .zip(&self.color)
            .filter(|((_, &a), _)| a >= tau)
            .map(|((&position, _), &color)| CloudPoint { position, color })
            .collect();
        Ok(InitPointCloud { points })
    }

    /// Ids of voxels with opacity at least `tau`.
    pub fn occupied_ids(&self, tau: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.opacity[i] >= tau).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudPoint {
    pub position: [f64; 3],
    pub color: [f64; 3],
}

/// Surviving voxel centers with their colors, ready for a downstream
/// Gaussian-splatting trainer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InitPointCloud {
    pub points: Vec<CloudPoint>,
}

impl InitPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
