//! The initialization network: a coordinate encoding followed by stacked
//! grid self-attention (GIP) and text cross-attention (GTF) blocks, then
//! separate opacity and color decoders. Backward passes are hand-written and
//! exact.

mod attention;
mod decoder;
mod ops;
mod params;

pub use attention::{gip_backward, gip_forward, gtf_backward, gtf_forward, GipCache, GtfCache};
pub use decoder::{decoder_backward, decoder_forward, DecoderCache};
pub use ops::{sigmoid, softplus};
pub use params::{AttentionParams, Decoder, LayerNorm, Linear, NetShape, NetworkParams, Stack};

use ndarray::{Array2, ArrayView2, Axis};

use crate::encode::{FeatureGrid, TextEmbedding};
use crate::error::{Error, Result};
use crate::field::GridIndexMap;

/// Fixed inputs of a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct NetInputs<'a> {
    /// Raw sinusoidal encoding of the voxel centers, `M × 6L`.
    pub encoding: &'a Array2<f64>,
    pub text: &'a TextEmbedding,
    pub grid: &'a GridIndexMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput {
    pub opacity: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug)]
pub struct NetTape {
    stacks: Vec<(GipCache, GtfCache)>,
    features: Array2<f64>,
    shape: DecoderCache,
    color: DecoderCache,
}

impl NetTape {
    /// Voxel count of the recorded pass.
    pub fn voxels(&self) -> usize {
        self.features.nrows()
    }

    /// Output of the final stack.
    pub fn final_features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn gip_cache(&self, stack: usize) -> &GipCache {
        &self.stacks[stack].0
    }

    pub fn gtf_cache(&self, stack: usize) -> &GtfCache {
        &self.stacks[stack].1
    }
}

fn check_inputs(params: &NetworkParams, inputs: &NetInputs) -> Result<()> {
    let m = inputs.encoding.nrows();
    if inputs.grid.num_voxels() != m {
        return Err(Error::invalid(format!(
            "grid map covers {} voxels, encoding has {m}",
            inputs.grid.num_voxels()
        )));
    }
    if inputs.encoding.ncols() != params.input.inputs() {
        return Err(Error::invalid(format!(
            "encoding width {} does not match input projection {}",
            inputs.encoding.ncols(),
            params.input.inputs()
        )));
    }
    if inputs.text.dims() != params.shape.d_text {
        return Err(Error::invalid(format!(
            "text embedding width {} does not match network text width {}",
            inputs.text.dims(),
            params.shape.d_text
        )));
    }
    Ok(())
}

/// encode → [GIP → GTF] × stacks → decoders.
pub fn network_forward(params: &NetworkParams, inputs: NetInputs) -> Result<(NetOutput, NetTape)> {
    check_inputs(params, &inputs)?;
    let mut f = FeatureGrid(params.input.forward(inputs.encoding.view()));
    let mut stacks = Vec::with_capacity(params.stacks.len());
    for s in &params.stacks {
        let (g, gip) = gip_forward(&f, inputs.grid, &s.gip)?;
        let (c, gtf) = gtf_forward(&g, inputs.text, &s.gtf)?;
        stacks.push((gip, gtf));
        f = c;
    }
    let shape = decoder_forward(f.view(), &params.shape_decoder)?;
    let color = decoder_forward(f.view(), &params.color_decoder)?;
    let opacity = shape.output().column(0).to_vec();
    let rgb = color
        .output()
        .rows()
        .into_iter()
        .map(|r| [r[0], r[1], r[2]])
        .collect();
    Ok((
        NetOutput {
            opacity,
            color: rgb,
        },
        NetTape {
            stacks,
            features: f.0,
            shape,
            color,
        },
    ))
}

/// Reverse-mode gradient of every parameter for seeds `d loss / d opacity`
/// and `d loss / d color`.
pub fn network_backward(
    params: &NetworkParams,
    inputs: NetInputs,
    tape: &NetTape,
    d_opacity: &[f64],
    d_color: &[[f64; 3]],
) -> Result<NetworkParams> {
    let m = tape.voxels();
    if d_opacity.len() != m || d_color.len() != m || inputs.encoding.nrows() != m {
        return Err(Error::state(format!(
            "backward seeds ({}, {}) do not match the recorded pass over {m} voxels",
            d_opacity.len(),
            d_color.len()
        )));
    }
    if tape.stacks.len() != params.stacks.len() {
        return Err(Error::state("tape depth does not match network depth"));
    }
    check_inputs(params, &inputs)?;
    let d_alpha = Array2::from_shape_vec((m, 1), d_opacity.to_vec()).expect("m × 1");
    let d_rgb = Array2::from_shape_vec((m, 3), d_color.iter().flatten().copied().collect())
        .expect("m × 3");
    let feats: ArrayView2<f64> = tape.features.view();
    let (d_f_shape, shape_decoder) =
        decoder_backward(feats, d_alpha.view(), &tape.shape, &params.shape_decoder)?;
    let (d_f_color, color_decoder) =
        decoder_backward(feats, d_rgb.view(), &tape.color, &params.color_decoder)?;
    let mut d_f = d_f_shape + d_f_color;

    let mut stacks = Vec::with_capacity(params.stacks.len());
    for (s, (gip_cache, gtf_cache)) in params.stacks.iter().zip(&tape.stacks).rev() {
        let (d_g, gtf) = gtf_backward(d_f.view(), gtf_cache, inputs.text, &s.gtf)?;
        let (d_in, gip) = gip_backward(d_g.view(), gip_cache, inputs.grid, &s.gip)?;
        stacks.push(Stack { gip, gtf });
        d_f = d_in;
    }
    stacks.reverse();
    let input = Linear {
        weight: inputs.encoding.t().dot(&d_f),
        bias: d_f.sum_axis(Axis(0)),
    };
    let mut grads = NetworkParams {
        shape: params.shape,
        input,
        stacks,
        shape_decoder,
        color_decoder,
    };
    grads.standardize();
    Ok(grads)
}

/// Adds `other` into `acc`, tensor by tensor.
pub fn accumulate(acc: &mut NetworkParams, other: &NetworkParams) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

