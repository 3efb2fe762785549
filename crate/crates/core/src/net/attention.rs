//! Grid-pooled self-attention (GIP) and Gaussian-to-text cross-attention
//! (GTF), both pre-normalized with a residual connection.

use ndarray::{Array2, ArrayView2};

use super::ops::{layer_norm, layer_norm_backward, softmax_rows, softmax_rows_backward, NormCache};
use super::params::AttentionParams;
use crate::encode::{FeatureGrid, TextEmbedding};
use crate::error::{Error, Result};
use crate::field::GridIndexMap;

fn check_width(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!("{what} has width {got}, expected {want}")));
    }
    Ok(())
}

/// Intermediates of one GIP block needed by its backward pass.
#[derive(Clone, Debug)]
pub struct GipCache {
    norm: NormCache,
    pooled: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    weights: Array2<f64>,
    attended: Array2<f64>,
}

impl GipCache {
    /// Softmax weights over grid tokens, `G³ × G³`.
    pub fn attention(&self) -> &Array2<f64> {
        &self.weights
    }
}

/// Gradients of one attention block's parameters, shaped like [`AttentionParams`].
pub type AttentionGrads = AttentionParams;

/// `F + scatter(softmax(q_g k_gᵀ/√D) v_g W_O)` where `q_g, k_g, v_g` are
/// per-grid means of the projected, normalized features.
///
/// Mean pooling is linear, so the projections are applied after pooling;
/// the result is identical to projecting every voxel first.
pub fn gip_forward(
    features: &FeatureGrid,
    grid: &GridIndexMap,
    p: &AttentionParams,
) -> Result<(FeatureGrid, GipCache)> {
    let d = p.w_q.nrows();
    check_width("GIP input", features.dims(), d)?;
    let (x, norm) = layer_norm(features.view(), &p.norm.gain, &p.norm.bias);
    let pooled = grid.pool_mean(x.view())?;
    let q = pooled.dot(&p.w_q);
    let k = pooled.dot(&p.w_k);
    let v = pooled.dot(&p.w_v);
    let mut weights = q.dot(&k.t());
    weights /= (d as f64).sqrt();
    softmax_rows(&mut weights);
    let attended = weights.dot(&v);
    let out_grid = attended.dot(&p.w_o);
    let out = grid.scatter(out_grid.view())? + &features.0;
    Ok((
        FeatureGrid(out),
        GipCache {
            norm,
            pooled,
            q,
            k,
            v,
            weights,
            attended,
        },
    ))
}

/// Returns `(d features, parameter gradients)` for upstream `d_out`.
pub fn gip_backward(
    d_out: ArrayView2<f64>,
    cache: &GipCache,
    grid: &GridIndexMap,
    p: &AttentionParams,
) -> Result<(Array2<f64>, AttentionGrads)> {
    let d = p.w_q.nrows();
    if d_out.dim() != cache.norm.normalized.dim() {
        return Err(Error::state("GIP gradient does not match the recorded forward pass"));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let d_out_grid = grid.scatter_backward(d_out)?;
    let w_o = cache.attended.t().dot(&d_out_grid);
    let d_attended = d_out_grid.dot(&p.w_o.t());
    let mut d_logits = d_attended.dot(&cache.v.t());
    let d_v = cache.weights.t().dot(&d_attended);
    softmax_rows_backward(cache.weights.view(), &mut d_logits);
    d_logits *= scale;
    let d_q = d_logits.dot(&cache.k);
    let d_k = d_logits.t().dot(&cache.q);
    let pooled_t = cache.pooled.t();
    let w_q = pooled_t.dot(&d_q);
    let w_k = pooled_t.dot(&d_k);
    let w_v = pooled_t.dot(&d_v);
    let d_pooled = d_q.dot(&p.w_q.t()) + d_k.dot(&p.w_k.t()) + d_v.dot(&p.w_v.t());
    let d_x = grid.pool_mean_backward(d_pooled.view())?;
    let (d_in, gain, bias) = layer_norm_backward(d_x.view(), &cache.norm, &p.norm.gain);
    let grads = AttentionParams {
        norm: super::params::LayerNorm { gain, bias },
        w_q,
        w_k,
        w_v,
        w_o,
    };
    Ok((d_in + &d_out, grads))
}

/// Intermediates of one GTF block.
#[derive(Clone, Debug)]
pub struct GtfCache {
    norm: NormCache,
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    weights: Array2<f64>,
}

impl GtfCache {
    /// Softmax weights of every Gaussian over the text tokens, `M × L_t`.
    pub fn attention(&self) -> &Array2<f64> {
        &self.weights
    }
}

/// `F + softmax(W_Q(F) W_K(y)ᵀ/√D) W_V(y) W_O`, per Gaussian, with `F`
/// normalized before the query projection.
pub fn gtf_forward(
    features: &FeatureGrid,
    text: &TextEmbedding,
    p: &AttentionParams,
) -> Result<(FeatureGrid, GtfCache)> {
    let d = p.w_q.nrows();
    check_width("GTF input", features.dims(), d)?;
    check_width("text embedding", text.dims(), p.w_k.nrows())?;
    let (x, norm) = layer_norm(features.view(), &p.norm.gain, &p.norm.bias);
    let q = x.dot(&p.w_q);
    let k = text.rows.dot(&p.w_k);
    let v = text.rows.dot(&p.w_v);
    let mut weights = q.dot(&k.t());
    weights /= (d as f64).sqrt();
    softmax_rows(&mut weights);
    let out = weights.dot(&v).dot(&p.w_o) + &features.0;
    Ok((
        FeatureGrid(out),
        GtfCache {
            norm,
            x,
            q,
            k,
            v,
            weights,
        },
    ))
}

pub fn gtf_backward(
    d_out: ArrayView2<f64>,
    cache: &GtfCache,
    text: &TextEmbedding,
    p: &AttentionParams,
) -> Result<(Array2<f64>, AttentionGrads)> {
    let d = p.w_q.nrows();
    if d_out.dim() != cache.x.dim() {
        return Err(Error::state("GTF gradient does not match the recorded forward pass"));
    }
    let scale = 1.0 / (d as f64).sqrt();
    // Recomputed rather than stored: M × L_t × D is cheap.
    let attended = cache.weights.dot(&cache.v);
    let w_o = attended.t().dot(&d_out);
    let d_attended = d_out.dot(&p.w_o.t());
    let mut d_logits = d_attended.dot(&cache.v.t());
    let d_v = cache.weights.t().dot(&d_attended);
    softmax_rows_backward(cache.weights.view(), &mut d_logits);
    d_logits *= scale;
    let d_q = d_logits.dot(&cache.k);
    let d_k = d_logits.t().dot(&cache.q);
    let w_q = cache.x.t().dot(&d_q);
    let w_k = text.rows.t().dot(&d_k);
    let w_v = text.rows.t().dot(&d_v);
    let d_x = d_q.dot(&p.w_q.t());
    let (d_in, gain, bias) = layer_norm_backward(d_x.view(), &cache.norm, &p.norm.gain);
    let grads = AttentionParams {
        norm: super::params::LayerNorm { gain, bias },
        w_q,
        w_k,
        w_v,
        w_o,
    };
    Ok((d_in + &d_out, grads))
}
