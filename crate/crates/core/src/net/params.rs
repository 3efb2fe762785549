use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::encoding_width;

/// Dimensions that fix every parameter shape of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    /// Feature width `D`.
    pub d_model: usize,
    /// Text embedding width `D_txt`.
    pub d_text: usize,
    /// Decoder hidden width `H`.
    pub hidden: usize,
    /// Octaves of the sinusoidal coordinate encoding.
    pub frequencies: usize,
    /// Number of (GIP, GTF) pairs.
    pub stacks: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        NetShape {
            d_model: 64,
            d_text: 64,
            hidden: 64,
            frequencies: 6,
            stacks: 4,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

/// Affine map `x W + b` applied to row vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `inputs × outputs`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn init(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: uniform(rng, inputs, outputs),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    fn new(dims: usize, gain: f64) -> Self {
        LayerNorm {
            gain: Array1::from_elem(dims, gain),
            bias: Array1::zeros(dims),
        }
    }
}

/// Projections of one attention block. For the cross-attention (GTF) block
/// `w_k` and `w_v` map from the text width instead of the feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub norm: LayerNorm,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
}

impl AttentionParams {
    pub fn zeros(d_model: usize, d_kv: usize) -> Self {
        AttentionParams {
            norm: LayerNorm::new(d_model, 0.0),
            w_q: Array2::zeros((d_model, d_model)),
            w_k: Array2::zeros((d_kv, d_model)),
            w_v: Array2::zeros((d_kv, d_model)),
            w_o: Array2::zeros((d_model, d_model)),
        }
    }

    pub fn init(rng: &mut ChaCha8Rng, d_model: usize, d_kv: usize) -> Self {
        AttentionParams {
            norm: LayerNorm::new(d_model, 1.0),
            w_q: uniform(rng, d_model, d_model),
            w_k: uniform(rng, d_kv, d_model),
            w_v: uniform(rng, d_kv, d_model),
            w_o: uniform(rng, d_model, d_model),
        }
    }
}

/// Two-layer head `l2(softplus(l1(x)))`, squashed by a sigmoid at the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stack {
    pub gip: AttentionParams,
    pub gtf: AttentionParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub shape: NetShape,
    pub input: Linear,
    pub stacks: Vec<Stack>,
    pub shape_decoder: Decoder,
    pub color_decoder: Decoder,
}

impl NetworkParams {
    /// Uniform `±1/√fan_in` weights, zero biases, unit normalization gains.
    pub fn init(shape: NetShape, rng: &mut ChaCha8Rng) -> Self {
        let d = shape.d_model;
        let input = Linear::init(rng, encoding_width(shape.frequencies), d);
        let stacks = (0..shape.stacks)
            .map(|_| Stack {
                gip: AttentionParams::init(rng, d, d),
                gtf: AttentionParams::init(rng, d, shape.d_text),
            })
            .collect();
        let shape_decoder = Decoder {
            hidden: Linear::init(rng, d, shape.hidden),
            out: Linear::init(rng, shape.hidden, 1),
        };
        let color_decoder = Decoder {
            hidden: Linear::init(rng, d, shape.hidden),
            out: Linear::init(rng, shape.hidden, 3),
        };
        NetworkParams {
            shape,
            input,
            stacks,
            shape_decoder,
            color_decoder,
        }
    }

    /// All-zero parameters (also the gradient accumulator layout).
    pub fn zeros(shape: NetShape) -> Self {
        let d = shape.d_model;
        NetworkParams {
            shape,
            input: Linear::zeros(encoding_width(shape.frequencies), d),
            stacks: (0..shape.stacks)
                .map(|_| Stack {
                    gip: AttentionParams::zeros(d, d),
                    gtf: AttentionParams::zeros(d, shape.d_text),
                })
                .collect(),
            shape_decoder: Decoder {
                hidden: Linear::zeros(d, shape.hidden),
                out: Linear::zeros(shape.hidden, 1),
            },
            color_decoder: Decoder {
                hidden: Linear::zeros(d, shape.hidden),
                out: Linear::zeros(shape.hidden, 3),
            },
        }
    }

    /// Forces row-major storage on every tensor (matrix products of
    /// transposed views may come back column-major).
    pub(crate) fn standardize(&mut self) {
        fn fix2(a: &mut Array2<f64>) {
            if !a.is_standard_layout() {
                *a = a.as_standard_layout().into_owned();
            }
        }
        fn fix_linear(l: &mut Linear) {
            fix2(&mut l.weight);
            l.bias = l.bias.as_standard_layout().into_owned();
        }
        fn fix_attention(a: &mut AttentionParams) {
            for w in [&mut a.w_q, &mut a.w_k, &mut a.w_v, &mut a.w_o] {
                fix2(w);
            }
        }
        fix_linear(&mut self.input);
        for s in &mut self.stacks {
            fix_attention(&mut s.gip);
            fix_attention(&mut s.gtf);
        }
        for d in [&mut self.shape_decoder, &mut self.color_decoder] {
            fix_linear(&mut d.hidden);
            fix_linear(&mut d.out);
        }
    }

    /// Every parameter tensor, flattened, in declaration order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        fn push_linear<'a>(l: &'a Linear, out: &mut Vec<&'a [f64]>) {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        fn push_attention<'a>(a: &'a AttentionParams, out: &mut Vec<&'a [f64]>) {
            out.push(a.norm.gain.as_slice().expect("standard layout"));
            out.push(a.norm.bias.as_slice().expect("standard layout"));
            for w in [&a.w_q, &a.w_k, &a.w_v, &a.w_o] {
                out.push(w.as_slice().expect("standard layout"));
            }
        }
        push_linear(&self.input, &mut out);
        for s in &self.stacks {
            push_attention(&s.gip, &mut out);
            push_attention(&s.gtf, &mut out);
        }
        for dec in [&self.shape_decoder, &self.color_decoder] {
            push_linear(&dec.hidden, &mut out);
            push_linear(&dec.out, &mut out);
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn push_linear<'a>(l: &'a mut Linear, out: &mut Vec<&'a mut [f64]>) {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        fn push_attention<'a>(a: &'a mut AttentionParams, out: &mut Vec<&'a mut [f64]>) {
            out.push(a.norm.gain.as_slice_mut().expect("standard layout"));
            out.push(a.norm.bias.as_slice_mut().expect("standard layout"));
            for w in [&mut a.w_q, &mut a.w_k, &mut a.w_v, &mut a.w_o] {
                out.push(w.as_slice_mut().expect("standard layout"));
            }
        }
        let mut out = Vec::new();
        push_linear(&mut self.input, &mut out);
        for s in &mut self.stacks {
            push_attention(&mut s.gip, &mut out);
            push_attention(&mut s.gtf, &mut out);
        }
        for dec in [&mut self.shape_decoder, &mut self.color_decoder] {
            push_linear(&mut dec.hidden, &mut out);
            push_linear(&mut dec.out, &mut out);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flattened copy of every parameter.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites parameters from a flat vector produced by [`to_flat`](Self::to_flat).
    pub fn copy_from_flat(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.count() {
            return false;
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        true
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
