//! Checkpoint file layout:
//!
//! ```text
//! magic    8 bytes  "VOXINITC"
//! version  u32 LE
//! hlen     u32 LE   length of the JSON header
//! header   hlen bytes of UTF-8 JSON (config echo, full config, run state)
//! blocks   little-endian f64: parameters in declaration order,
//!          text embedding rows, Adam first moments, Adam second moments
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::encode::TextEmbedding;
use crate::error::{Error, Result};
use crate::field::Extent;
use crate::net::{NetShape, NetworkParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VOXINITC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// The subset of the configuration that fixes parameter shapes and the
/// random streams. A checkpoint only resumes a run with the same echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub resolution: usize,
    pub extent: Extent,
    pub grids: usize,
    pub net: NetShape,
    pub seed: u64,
}

impl ConfigEcho {
    pub fn of(cfg: &TrainConfig) -> Self {
        ConfigEcho {
            resolution: cfg.resolution,
            extent: cfg.extent,
            grids: cfg.grids,
            net: cfg.net,
            seed: cfg.seed,
        }
    }

    /// Describes the first differing field, if any.
    pub fn mismatch(&self, other: &ConfigEcho) -> Option<String> {
        let diff = |name: &str, a: &dyn std::fmt::Debug, b: &dyn std::fmt::Debug| {
            Some(format!("{name}: checkpoint has {a:?}, config has {b:?}"))
        };
        if self.resolution != other.resolution {
            return diff("resolution", &self.resolution, &other.resolution);
        }
        if self.extent != other.extent {
            return diff("extent", &self.extent, &other.extent);
        }
        if self.grids != other.grids {
            return diff("grids", &self.grids, &other.grids);
        }
        if self.net != other.net {
            return diff("net", &self.net, &other.net);
        }
        if self.seed != other.seed {
            return diff("seed", &self.seed, &other.seed);
        }
        None
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    echo: ConfigEcho,
    config: TrainConfig,
    step: usize,
    prompt: String,
    tokens: Vec<String>,
    text_dims: usize,
    param_count: usize,
    /// ChaCha word position, decimal (u128 does not fit JSON numbers).
    rng_word_pos: String,
    adam_steps: u64,
}

/// Complete resumable state of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: usize,
    pub prompt: String,
    pub text: TextEmbedding,
    pub params: NetworkParams,
    pub rng_word_pos: u128,
    pub adam_steps: u64,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho::of(&self.config)
    }

    /// Refuses to resume under a configuration with a different echo.
    pub fn ensure_compatible(&self, cfg: &TrainConfig) -> Result<()> {
        match self.echo().mismatch(&ConfigEcho::of(cfg)) {
            Some(m) => Err(corrupt(format!("config echo mismatch, {m}"))),
            None => Ok(()),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = self.params.count();
        if self.adam_m.len() != count || self.adam_v.len() != count {
            return Err(Error::state("optimizer state does not match parameter count"));
        }
        let header = Header {
            echo: self.echo(),
            config: self.config.clone(),
            step: self.step,
            prompt: self.prompt.clone(),
            tokens: self.text.tokens.clone(),
            text_dims: self.text.dims(),
            param_count: count,
            rng_word_pos: self.rng_word_pos.to_string(),
            adam_steps: self.adam_steps,
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * (3 * count + self.text.rows.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |vals: &[f64]| {
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for t in self.params.tensors() {
            put(t);
        }
        put(self.text.rows.as_slice().expect("standard layout"));
        put(&self.adam_m);
        put(&self.adam_v);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a voxinit checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| corrupt("truncated checkpoint header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| corrupt(format!("corrupt header: {e}")))?;
        if header.echo != ConfigEcho::of(&header.config) {
            return Err(corrupt("header echo disagrees with stored config"));
        }
        header
            .config
            .validate()
            .map_err(|e| corrupt(format!("stored config is invalid: {e}")))?;
        let mut params = NetworkParams::zeros(header.config.net);
        if params.count() != header.param_count {
            return Err(corrupt(format!(
                "header declares {} parameters, shape implies {}",
                header.param_count,
                params.count()
            )));
        }
        if header.text_dims != header.config.net.d_text {
            return Err(corrupt(format!(
                "text embedding width {} differs from configured {}",
                header.text_dims, header.config.net.d_text
            )));
        }
        let rows = header.tokens.len();
        let text_len = rows * header.text_dims;
        let expected = 16 + hlen + 8 * (3 * header.param_count + text_len);
        if bytes.len() != expected {
            return Err(corrupt(format!(
                "checkpoint has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut floats = bytes[16 + hlen..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| floats.by_ref().take(n).collect::<Vec<f64>>();
        let flat = take(header.param_count);
        params.copy_from_flat(&flat);
        let text_rows = Array2::from_shape_vec((rows, header.text_dims), take(text_len))
            .map_err(|e| corrupt(e.to_string()))?;
        let text = TextEmbedding::new(header.tokens, text_rows).map_err(|e| corrupt(e.to_string()))?;
        let adam_m = take(header.param_count);
        let adam_v = take(header.param_count);
        let rng_word_pos = header
            .rng_word_pos
            .parse()
            .map_err(|_| corrupt("bad rng position"))?;
        Ok(Checkpoint {
            config: header.config,
            step: header.step,
            prompt: header.prompt,
            text,
            params,
            rng_word_pos,
            adam_steps: header.adam_steps,
            adam_m,
            adam_v,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
