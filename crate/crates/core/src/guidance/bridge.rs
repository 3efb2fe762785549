//! Client side of the diffusion bridge: JSON over HTTP/1.1 with images as
//! base64-encoded little-endian `f32` arrays in `[H, W, 3]` order.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GuidanceProvider, GuidanceRequest, GuidanceResidual};
use crate::encode::{tokenize, TextEmbedding, TextEncoder};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRequest {
    pub prompt: String,
    pub image: String,
    pub shape: [usize; 3],
    pub t: f64,
    pub seed: u64,
    pub guidance_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReply {
    pub residual: String,
    pub shape: [usize; 3],
    pub weight: f64,
    pub model_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedReply {
    pub tokens: Vec<Vec<f64>>,
    pub dims: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    prompt: &'a str,
}

pub fn encode_f32_image(pixels: &[[f64; 3]]) -> String {
    let mut bytes = Vec::with_capacity(pixels.len() * 12);
    for v in pixels.iter().flatten() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    BASE64.encode(bytes)
}

pub fn decode_f32_image(data: &str, pixels: usize) -> Result<Vec<[f64; 3]>> {
    let bytes = BASE64
        .decode(data)
        .map_err(|e| Error::Protocol(format!("bad base64 payload: {e}")))?;
    if bytes.len() != pixels * 12 {
        return Err(Error::Protocol(format!(
            "payload has {} bytes, expected {} for {pixels} RGB pixels",
            bytes.len(),
            pixels * 12
        )));
    }
    let out: Vec<[f64; 3]> = bytes
        .chunks_exact(12)
        .map(|px| {
            let f = |o: usize| f64::from(f32::from_le_bytes(px[o..o + 4].try_into().unwrap()));
            [f(0), f(4), f(8)]
        })
        .collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Protocol("payload contains non-finite values".into()));
    }
    Ok(out)
}

/// HTTP client for the bridge service. Requests are issued one at a time.
#[derive(Debug)]
pub struct BridgeClient {
    base_url: String,
    agent: ureq::Agent,
    pub guidance_scale: f64,
}

impl BridgeClient {
    pub fn new(base_url: &str, timeout: Duration, guidance_scale: f64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        BridgeClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            guidance_scale,
        }
    }

    fn post<T: Serialize>(&self, path: &str, body: &T) -> Result<String> {
        let payload = serde_json::to_string(body).map_err(|e| Error::Data(e.to_string()))?;
        let url = format!("{}{path}", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json")
            .send(payload.as_str())
            .map_err(|e| Error::Transport(format!("POST {url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("reading reply from {url}: {e}")))?;
        match status {
            200..=299 => Ok(text),
            400..=499 => Err(Error::Protocol(format!("{url} answered {status}: {text}"))),
            _ => Err(Error::Transport(format!("{url} answered {status}: {text}"))),
        }
    }

    /// `GET /v1/health`, returning the reported model id.
    pub fn health(&self) -> Result<String> {
        let url = format!("{}/v1/health", self.base_url);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| Error::Transport(format!("GET {url}: {e}")))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if resp.status().as_u16() != 200 {
            return Err(Error::Transport(format!("{url} answered {}", resp.status())));
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(e.to_string()))?;
        Ok(v.get("model_id")
            .and_then(|m| m.as_str())
            .unwrap_or_default()
            .to_string())
    }

    pub fn remote_residual(
        &self,
        image: &[[f64; 3]],
        height: usize,
        width: usize,
        prompt: &str,
        t: f64,
        seed: u64,
    ) -> Result<GuidanceResidual> {
        if image.len() != height * width {
            return Err(Error::invalid("image buffer does not match its shape"));
        }
        let request = ResidualRequest {
            prompt: prompt.to_string(),
            image: encode_f32_image(image),
            shape: [height, width, 3],
            t,
            seed,
            guidance_scale: self.guidance_scale,
        };
        let text = self.post("/v1/residual", &request)?;
        let reply: ResidualReply = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("bad residual reply: {e}")))?;
        if reply.shape != request.shape {
            return Err(Error::Protocol(format!(
                "residual shape {:?} differs from request {:?}",
                reply.shape, request.shape
            )));
        }
        if !(reply.weight.is_finite() && reply.weight >= 0.0) {
            return Err(Error::Protocol(format!("invalid weight {}", reply.weight)));
        }
        let residual = decode_f32_image(&reply.residual, height * width)?;
        Ok(GuidanceResidual {
            residual,
            weight: reply.weight,
            timestep: t,
        })
    }
}

impl GuidanceProvider for BridgeClient {
    fn residual(&self, r: GuidanceRequest<'_>) -> Result<GuidanceResidual> {
        self.remote_residual(
            &r.image.color,
            r.image.height,
            r.image.width,
            r.prompt,
            r.timestep,
            r.seed,
        )
    }
}

impl TextEncoder for BridgeClient {
    fn embed(&self, prompt: &str) -> Result<TextEmbedding> {
        if prompt.trim().is_empty() {
            return Err(Error::invalid("prompt contains no tokens"));
        }
        let text = self.post("/v1/embed", &EmbedRequest { prompt })?;
        let reply: EmbedReply = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("bad embed reply: {e}")))?;
        if reply.tokens.is_empty() || reply.tokens.iter().any(|r| r.len() != reply.dims) {
            return Err(Error::Protocol("embedding rows disagree with dims".into()));
        }
        let rows = Array2::from_shape_vec(
            (reply.tokens.len(), reply.dims),
            reply.tokens.into_iter().flatten().collect(),
        )
        .map_err(|e| Error::Protocol(e.to_string()))?;
        // The bridge tokenizer is the model's own; keep ours for diagnostics.
        let mut tokens = tokenize(prompt);
        tokens.resize(rows.nrows(), String::new());
        TextEmbedding::new(tokens, rows).map_err(|e| Error::Protocol(e.to_string()))
    }
}
