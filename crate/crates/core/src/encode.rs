//! Coordinate features and text conditioning.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::Linear;

/// Per-voxel feature rows, in the field's voxel order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid(pub Array2<f64>);

impl FeatureGrid {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dims(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }
}

/// Width of the raw sinusoidal encoding for `frequencies` octaves.
pub fn encoding_width(frequencies: usize) -> usize {
    6 * frequencies
}

/// Raw sinusoidal features, `M × 6L`.
///
/// Columns are grouped by axis, then octave: for axis `a` and octave `l` the
/// pair `(sin(2^l π x_a), cos(2^l π x_a))` sits at columns `a·2L + 2l` and
/// `a·2L + 2l + 1`.
pub fn sinusoidal_features(centers: &[[f64; 3]], frequencies: usize) -> Result<Array2<f64>> {
    if frequencies == 0 {
        return Err(Error::invalid("positional encoding needs at least one frequency"));
    }
    let width = encoding_width(frequencies);
    let mut out = Array2::zeros((centers.len(), width));
    for (mut row, c) in out.rows_mut().into_iter().zip(centers) {
        for (axis, &x) in c.iter().enumerate() {
            for l in 0..frequencies {
                let arg = f64::from(1u32 << l) * PI * x;
                let col = axis * 2 * frequencies + 2 * l;
                row[col] = arg.sin();
                row[col + 1] = arg.cos();
            }
        }
    }
    Ok(out)
}

/// Sinusoidal encoding followed by the learned input projection.
pub fn positional_encode(
    centers: &[[f64; 3]],
    frequencies: usize,
    projection: &Linear,
) -> Result<FeatureGrid> {
    let raw = sinusoidal_features(centers, frequencies)?;
    if projection.inputs() != raw.ncols() {
        return Err(Error::invalid(format!(
            "input projection expects {} features, encoding has {}",
            projection.inputs(),
            raw.ncols()
        )));
    }
    Ok(FeatureGrid(projection.forward(raw.view())))
}

/// Token-wise text embedding, `L_t × D_txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEmbedding {
    pub tokens: Vec<String>,
    pub rows: Array2<f64>,
}

impl TextEmbedding {
    pub fn new(tokens: Vec<String>, rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::invalid("text embedding has no tokens"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("text embedding has non-finite entries"));
        }
        Ok(TextEmbedding { tokens, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.rows.ncols()
    }
}

/// Source of text embeddings for the cross-attention blocks.
pub trait TextEncoder {
    fn embed(&self, prompt: &str) -> Result<TextEmbedding>;
}

/// Lowercases, splits on whitespace and drops non-alphanumeric characters.
pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Dependency-free encoder: every token maps to a fixed pseudo-random unit
/// vector derived from a hash of its text.
#[derive(Clone, Debug)]
pub struct DeskTextEncoder {
    pub dims: usize,
    pub seed: u64,
}

impl DeskTextEncoder {
    pub fn new(dims: usize, seed: u64) -> Self {
        DeskTextEncoder { dims, seed }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, token.as_bytes()));
        loop {
            let v: Vec<f64> = (0..self.dims).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl TextEncoder for DeskTextEncoder {
    fn embed(&self, prompt: &str) -> Result<TextEmbedding> {
        if self.dims == 0 {
            return Err(Error::invalid("text embedding width must be positive"));
        }
        let tokens = tokenize(prompt);
        if tokens.is_empty() {
            return Err(Error::invalid("prompt contains no tokens"));
        }
        let mut rows = Array2::zeros((tokens.len(), self.dims));
        for (mut row, t) in rows.rows_mut().into_iter().zip(&tokens) {
            row.assign(&ndarray::Array1::from(self.token_vector(t)));
        }
        TextEmbedding::new(tokens, rows)
    }
}
