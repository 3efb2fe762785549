//! Front-to-back alpha compositing of isotropic screen-space Gaussians.
//!
//! For a pixel covered by Gaussians sorted by view depth,
//! `C = Σ c_i α'_i T_i`, `T_i = Π_{j<i} (1 − α'_j)` and
//! `α'_i = min(α_i · exp(−½ d² / σ_i²), 0.999)`, where `d` is the distance
//! from the pixel center to the projected center and `σ_i` is the world
//! scale divided by depth, in pixels. Contributions beyond `3σ` are dropped
//! and the background is black.

use std::cmp::Ordering;

use super::camera::CameraPose;
use crate::error::{Error, Result};
use crate::field::VoxelGaussianField;

pub const ALPHA_CLAMP: f64 = 0.999;
pub const CUTOFF_SIGMAS: f64 = 3.0;
/// Gaussians closer than this to the camera plane are culled.
pub const NEAR_PLANE: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub color: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

impl RenderedImage {
    pub fn black(width: usize, height: usize) -> Self {
        RenderedImage {
            width,
            height,
            color: vec![[0.0; 3]; width * height],
            alpha: vec![0.0; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.color[y * self.width + x]
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat {
    pub index: usize,
    pub center: [f64; 2],
    pub sigma: f64,
    pub depth: f64,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    gaussian: u32,
    falloff: f64,
    alpha: f64,
    clamped: bool,
}

/// Per-pixel contribution lists recorded by [`splat_render`].
#[derive(Clone, Debug)]
pub struct RenderTape {
    width: usize,
    height: usize,
    gaussians: usize,
    /// `entries[offsets[p]..offsets[p + 1]]` are pixel `p`'s contributors,
    /// front to back.
    offsets: Vec<usize>,
    entries: Vec<Entry>,
}

impl RenderTape {
    /// Total number of (pixel, Gaussian) contributions.
    pub fn contributions(&self) -> usize {
        self.entries.len()
    }
}

/// Projects every Gaussian in front of the near plane.
pub fn project_splats(field: &VoxelGaussianField, cam: &CameraPose) -> Vec<Splat> {
    let f = cam.focal();
    let scale = field.scale()[0];
    field
        .centers()
        .iter()
        .enumerate()
        .filter_map(|(index, &c)| {
            let v = cam.project(c);
            (v.depth > NEAR_PLANE).then(|| Splat {
                index,
                center: v.pixel,
                sigma: f * scale / v.depth,
                depth: v.depth,
            })
        })
        .collect()
}

/// Total order on splats: by depth, then by world position. Independent of
/// the order Gaussians are stored in.
pub fn depth_order(centers: &[[f64; 3]], a: &Splat, b: &Splat) -> Ordering {
    let (ca, cb) = (centers[a.index], centers[b.index]);
    a.depth
        .total_cmp(&b.depth)
        .then(ca[0].total_cmp(&cb[0]))
        .then(ca[1].total_cmp(&cb[1]))
        .then(ca[2].total_cmp(&cb[2]))
        .then(a.index.cmp(&b.index))
}

pub fn splat_render(
    field: &VoxelGaussianField,
    cam: &CameraPose,
) -> Result<(RenderedImage, RenderTape)> {
    cam.validate()?;
    Ok(composite(
        project_splats(field, cam),
        field.centers(),
        field.opacity(),
        field.color(),
        cam.width,
        cam.height,
    ))
}

/// Composites an arbitrary list of splats. `Splat::index` addresses
/// `centers`, `opacity` and `color`; the list order does not matter.
pub fn composite(
    mut splats: Vec<Splat>,
    centers: &[[f64; 3]],
    opacity: &[f64],
    colors: &[[f64; 3]],
    w: usize,
    h: usize,
) -> (RenderedImage, RenderTape) {
    splats.sort_by(|a, b| depth_order(centers, a, b));

    let mut lists: Vec<Vec<Entry>> = vec![Vec::new(); w * h];
    for s in &splats {
        let reach = CUTOFF_SIGMAS * s.sigma;
        let cutoff2 = reach * reach;
        let x0 = ((s.center[0] - reach - 0.5).ceil().max(0.0)) as usize;
        let y0 = ((s.center[1] - reach - 0.5).ceil().max(0.0)) as usize;
        let x1 = (s.center[0] + reach - 0.5).floor();
        let y1 = (s.center[1] + reach - 0.5).floor();
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let x1 = (x1 as usize).min(w.saturating_sub(1));
        let y1 = (y1 as usize).min(h.saturating_sub(1));
        let inv_var = 1.0 / (s.sigma * s.sigma);
        let a = opacity[s.index];
        for y in y0..=y1 {
            let dy = y as f64 + 0.5 - s.center[1];
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - s.center[0];
                let d2 = dx * dx + dy * dy;
                if d2 > cutoff2 {
                    continue;
                }
                let falloff = (-0.5 * d2 * inv_var).exp();
                let raw = a * falloff;
                let clamped = raw > ALPHA_CLAMP;
                lists[y * w + x].push(Entry {
                    gaussian: s.index as u32,
                    falloff,
                    alpha: if clamped { ALPHA_CLAMP } else { raw },
                    clamped,
                });
            }
        }
    }

    let mut image = RenderedImage::black(w, h);
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut entries = Vec::with_capacity(lists.iter().map(Vec::len).sum());
    offsets.push(0);
    for (p, list) in lists.into_iter().enumerate() {
        let mut t = 1.0;
        let mut rgb = [0.0; 3];
        for e in &list {
            let weight = e.alpha * t;
            let c = colors[e.gaussian as usize];
            for ch in 0..3 {
                rgb[ch] += weight * c[ch];
            }
            t *= 1.0 - e.alpha;
        }
        image.color[p] = rgb;
        image.alpha[p] = 1.0 - t;
        entries.extend(list);
        offsets.push(entries.len());
    }
    (
        image,
        RenderTape {
            width: w,
            height: h,
            gaussians: opacity.len(),
            offsets,
            entries,
        },
    )
}

/// Adjoint of [`splat_render`] with respect to opacity and color, given
/// `d loss / d color` per pixel. Geometry receives no gradient.
pub fn render_backward(
    tape: &RenderTape,
    field: &VoxelGaussianField,
    d_image: &[[f64; 3]],
) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    composite_backward(tape, field.color(), d_image)
}

/// Adjoint of [`composite`]; `colors` must be the slice used in the forward pass.
pub fn composite_backward(
    tape: &RenderTape,
    colors: &[[f64; 3]],
    d_image: &[[f64; 3]],
) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    if d_image.len() != tape.width * tape.height {
        return Err(Error::state(format!(
            "image gradient has {} pixels, the recorded render has {}×{}",
            d_image.len(),
            tape.width,
            tape.height
        )));
    }
    if colors.len() != tape.gaussians {
        return Err(Error::state("field size differs from the recorded render"));
    }
    let mut d_opacity = vec![0.0; tape.gaussians];
    let mut d_color = vec![[0.0; 3]; tape.gaussians];
    let mut trans = Vec::new();
    for (p, g) in d_image.iter().enumerate() {
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let list = &tape.entries[tape.offsets[p]..tape.offsets[p + 1]];
        trans.clear();
        let mut t = 1.0;
        for e in list {
            trans.push(t);
            t *= 1.0 - e.alpha;
        }
        // d loss / d T_{i+1}, swept from the back.
        let mut d_next = 0.0;
        for (e, &t_i) in list.iter().zip(&trans).rev() {
            let i = e.gaussian as usize;
            let c = colors[i];
            let g_dot_c = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
            let w = e.alpha * t_i;
            for ch in 0..3 {
                d_color[i][ch] += g[ch] * w;
            }
            if !e.clamped {
                let d_alpha = t_i * g_dot_c - d_next * t_i;
                d_opacity[i] += d_alpha * e.falloff;
            }
            d_next = g_dot_c * e.alpha + d_next * (1.0 - e.alpha);
        }
    }
    Ok((d_opacity, d_color))
}
