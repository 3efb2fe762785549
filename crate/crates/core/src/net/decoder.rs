use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::ops::{sigmoid, softplus};
use super::params::{Decoder, Linear};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct DecoderCache {
    pre_hidden: Array2<f64>,
    hidden: Array2<f64>,
    output: Array2<f64>,
}

impl DecoderCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// `σ(l2(softplus(l1(x))))`, row-wise.
pub fn decoder_forward(x: ArrayView2<f64>, p: &Decoder) -> Result<DecoderCache> {
    if x.ncols() != p.hidden.inputs() {
        return Err(Error::invalid(format!(
            "decoder expects width {}, got {}",
            p.hidden.inputs(),
            x.ncols()
        )));
    }
    let pre_hidden = p.hidden.forward(x);
    let hidden = pre_hidden.mapv(softplus);
    let output = p.out.forward(hidden.view()).mapv(sigmoid);
    Ok(DecoderCache {
        pre_hidden,
        hidden,
        output,
    })
}

/// Returns `(d x, parameter gradients)` given `d_output` of shape `M × outputs`.
pub fn decoder_backward(
    x: ArrayView2<f64>,
    d_output: ArrayView2<f64>,
    cache: &DecoderCache,
    p: &Decoder,
) -> Result<(Array2<f64>, Decoder)> {
    if d_output.dim() != cache.output.dim() {
        return Err(Error::state("decoder gradient does not match the recorded forward pass"));
    }
    let mut d_logit = d_output.to_owned();
    Zip::from(&mut d_logit)
        .and(&cache.output)
        .for_each(|g, &y| *g *= y * (1.0 - y));
    let out = Linear {
        weight: cache.hidden.t().dot(&d_logit),
        bias: d_logit.sum_axis(Axis(0)),
    };
    let mut d_pre = d_logit.dot(&p.out.weight.t());
    // softplus' = sigmoid
    Zip::from(&mut d_pre)
        .and(&cache.pre_hidden)
        .for_each(|g, &z| *g *= sigmoid(z));
    let hidden = Linear {
        weight: x.t().dot(&d_pre),
        bias: d_pre.sum_axis(Axis(0)),
    };
    let d_x = d_pre.dot(&p.hidden.weight.t());
    Ok((d_x, Decoder { hidden, out }))
}
