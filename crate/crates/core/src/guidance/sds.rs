use ndarray::Array2;

use super::GuidanceResidual;
use crate::encode::{sinusoidal_features, TextEmbedding};
use crate::error::{Error, Result};
use crate::field::{Extent, GridIndexMap, VoxelGaussianField};
use crate::net::{network_backward, network_forward, NetInputs, NetTape, NetworkParams};
use crate::render::{render_backward, splat_render, CameraPose, RenderTape, RenderedImage};

/// One rendered view of a recorded pass.
#[derive(Debug)]
pub struct RecordedView {
    render: RenderTape,
    pub image: RenderedImage,
    pub camera: CameraPose,
}

/// Intermediates of one network pass and the views rendered from it.
#[derive(Debug)]
pub struct ForwardRecord {
    net: NetTape,
    pub views: Vec<RecordedView>,
}

/// Everything that stays fixed over a run: the voxel lattice, its grid
/// partition, the coordinate encoding and the prompt embedding. The field's
/// appearance is rewritten by every forward pass.
#[derive(Debug)]
pub struct Scene {
    field: VoxelGaussianField,
    grid: GridIndexMap,
    encoding: Array2<f64>,
    text: TextEmbedding,
    recorded: Option<ForwardRecord>,
}

impl Scene {
    pub fn new(
        resolution: usize,
        extent: Extent,
        grids: usize,
        frequencies: usize,
        text: TextEmbedding,
    ) -> Result<Self> {
        let field = VoxelGaussianField::new(resolution, extent)?;
        let grid = field.partition_grid(grids)?;
        let encoding = sinusoidal_features(field.centers(), frequencies)?;
        Ok(Scene {
            field,
            grid,
            encoding,
            text,
            recorded: None,
        })
    }

    pub fn field(&self) -> &VoxelGaussianField {
        &self.field
    }

    pub fn grid(&self) -> &GridIndexMap {
        &self.grid
    }

    pub fn text(&self) -> &TextEmbedding {
        &self.text
    }

    pub fn inputs(&self) -> NetInputs<'_> {
        NetInputs {
            encoding: &self.encoding,
            text: &self.text,
            grid: &self.grid,
        }
    }

    /// Runs the network and writes opacity and color into the field.
    pub fn decode(&mut self, params: &NetworkParams) -> Result<NetTape> {
        let (out, tape) = network_forward(params, self.inputs())?;
        self.field.set_appearance(out.opacity, out.color)?;
        Ok(tape)
    }

    /// Decodes the field and renders `camera`, recording the pass for
    /// [`sds_apply`](Self::sds_apply).
    pub fn forward(&mut self, params: &NetworkParams, camera: &CameraPose) -> Result<&RenderedImage> {
        let views = self.forward_views(params, std::slice::from_ref(camera))?;
        Ok(&views[0].image)
    }

    /// Decodes the field once and renders every camera from it.
    pub fn forward_views(
        &mut self,
        params: &NetworkParams,
        cameras: &[CameraPose],
    ) -> Result<&[RecordedView]> {
        self.recorded = None;
        if cameras.is_empty() {
            return Err(Error::invalid("at least one camera is required"));
        }
        let net = self.decode(params)?;
        let views = cameras
            .iter()
            .map(|camera| {
                let (image, render) = splat_render(&self.field, camera)?;
                Ok(RecordedView {
                    render,
                    image,
                    camera: *camera,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(&self.recorded.insert(ForwardRecord { net, views }).views)
    }

    pub fn recorded(&self) -> Option<&ForwardRecord> {
        self.recorded.as_ref()
    }

    /// Score-distillation update: seeds the renderer's adjoint with
    /// `w · residual` and chains it through the network. The diffusion
    /// model's own Jacobian is not part of the chain.
    ///
    /// Consumes the recorded forward pass.
    pub fn sds_apply(
        &mut self,
        params: &NetworkParams,
        residual: &GuidanceResidual,
    ) -> Result<NetworkParams> {
        self.sds_apply_views(params, std::slice::from_ref(residual))
    }

    /// [`sds_apply`](Self::sds_apply) over every recorded view, one residual
    /// per view in recording order. Returns the summed gradient.
    pub fn sds_apply_views(
        &mut self,
        params: &NetworkParams,
        residuals: &[GuidanceResidual],
    ) -> Result<NetworkParams> {
        let rec = self
            .recorded
            .take()
            .ok_or_else(|| Error::state("sds_apply called without a recorded forward pass"))?;
        if residuals.len() != rec.views.len() {
            return Err(Error::invalid(format!(
                "{} residuals for {} recorded views",
                residuals.len(),
                rec.views.len()
            )));
        }
        let n = self.field.len();
        let mut d_opacity = vec![0.0; n];
        let mut d_color = vec![[0.0; 3]; n];
        for (view, residual) in rec.views.iter().zip(residuals) {
            if residual.residual.len() != view.image.color.len() {
                return Err(Error::invalid(format!(
                    "residual has {} pixels, rendered image has {}",
                    residual.residual.len(),
                    view.image.color.len()
                )));
            }
            if !(residual.weight.is_finite() && residual.weight >= 0.0) {
                return Err(Error::invalid(format!("guidance weight {} is invalid", residual.weight)));
            }
            let w = residual.weight;
            let seed: Vec<[f64; 3]> = residual.residual.iter().map(|r| r.map(|v| w * v)).collect();
            let (da, dc) = render_backward(&view.render, &self.field, &seed)?;
            for i in 0..n {
                d_opacity[i] += da[i];
                for c in 0..3 {
                    d_color[i][c] += dc[i][c];
                }
            }
        }
        network_backward(params, self.inputs(), &rec.net, &d_opacity, &d_color)
    }
}
