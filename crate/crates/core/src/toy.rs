//! Two-sphere reference scene used to exercise the synthetic provider end to
//! end: a red sphere at `(-0.45, 0, 0)` and a blue one at `(0.45, 0, 0)`,
//! both of radius 0.35.

use crate::error::Result;
use crate::field::{Extent, VoxelGaussianField};
use crate::guidance::{TargetSet, TargetView};
use crate::render::{splat_render, CameraPose, OrbitConfig};

pub const SPHERE_RADIUS: f64 = 0.35;
pub const SPHERES: [([f64; 3], [f64; 3]); 2] = [
    ([-0.45, 0.0, 0.0], [1.0, 0.0, 0.0]),
    ([0.45, 0.0, 0.0], [0.0, 0.0, 1.0]),
];

/// Color of the sphere containing `p`, if any.
pub fn sphere_color(p: [f64; 3]) -> Option<[f64; 3]> {
    SPHERES.iter().find_map(|(c, rgb)| {
        let d2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
        (d2 <= SPHERE_RADIUS * SPHERE_RADIUS).then_some(*rgb)
    })
}

/// Analytic voxelization: a voxel is occupied when its center lies inside a
/// sphere.
pub fn ground_truth_occupancy(field: &VoxelGaussianField) -> Vec<Option<[f64; 3]>> {
    field.centers().iter().map(|&c| sphere_color(c)).collect()
}

/// Field with opacity 1 and the sphere color inside, opacity 0 elsewhere.
pub fn ground_truth_field(resolution: usize, extent: Extent) -> Result<VoxelGaussianField> {
    let mut field = VoxelGaussianField::new(resolution, extent)?;
    let truth = ground_truth_occupancy(&field);
    let opacity = truth.iter().map(|t| if t.is_some() { 1.0 } else { 0.0 }).collect();
    let color = truth.iter().map(|t| t.unwrap_or([0.0; 3])).collect();
    field.set_appearance(opacity, color)?;
    Ok(field)
}

/// Eight fixed orbit views: azimuths every 45°, elevations alternating
/// between 0° and 30°.
pub fn target_cameras(orbit: &OrbitConfig, width: usize, height: usize) -> Result<Vec<CameraPose>> {
    (0..8)
        .map(|i| {
            let elevation = if i % 2 == 0 { 0.0 } else { 30.0 };
            CameraPose::orbit(45.0 * i as f64, elevation, orbit.radius, orbit.fov_deg, width, height)
        })
        .collect()
}

pub fn two_sphere_targets(
    resolution: usize,
    extent: Extent,
    orbit: &OrbitConfig,
    width: usize,
    height: usize,
) -> Result<TargetSet> {
    let field = ground_truth_field(resolution, extent)?;
    let views = target_cameras(orbit, width, height)?
        .into_iter()
        .map(|camera| {
            let (image, _) = splat_render(&field, &camera)?;
            Ok(TargetView { camera, image })
        })
        .collect::<Result<Vec<_>>>()?;
    TargetSet::new(views)
}

/// Intersection over union of predicted and true occupied voxel sets.
pub fn occupancy_iou(predicted: &[bool], truth: &[bool]) -> f64 {
    let inter = predicted.iter().zip(truth).filter(|(p, t)| **p && **t).count();
    let union = predicted.iter().zip(truth).filter(|(p, t)| **p || **t).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean absolute per-channel color difference over voxels that are both
/// predicted and truly occupied. `None` when there are none.
pub fn true_positive_color_error(
    field: &VoxelGaussianField,
    predicted: &[bool],
    truth: &[Option<[f64; 3]>],
) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ((c, &p), t) in field.color().iter().zip(predicted).zip(truth) {
        if let (true, Some(t)) = (p, t) {
            total += (0..3).map(|ch| (c[ch] - t[ch]).abs()).sum::<f64>() / 3.0;
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}
