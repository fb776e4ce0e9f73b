//! `RSDUMP01`: residual streams of every token at every layer.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "RSDUMP01"
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON
//!              {model_name, n_layers, hidden_dim, prompts: [...]}
//! values       f32 × total_tokens × (n_layers + 1) × hidden_dim,
//!              ordered [token][layer][dim]
//! ```
//!
//! Layer 0 holds the embeddings; layer `l` the residual after block `l`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{RoleToken, TokenRole};

pub const MAGIC: &[u8; 8] = b"RSDUMP01";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not an RSDUMP01 file")]
    BadMagic,
    #[error("header length {len} exceeds the {available} bytes available")]
    BadHeaderLength { len: usize, available: usize },
    #[error("header parse error: {0}")]
    HeaderParseError(String),
    #[error("payload has {found} bytes, expected {expected}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("payload has {found} bytes, expected {expected}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, DumpError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpPrompt {
    pub prompt_id: u64,
    pub task_name: String,
    pub correct: Option<bool>,
    /// Seed of the prompt set this prompt was drawn from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer: Option<String>,
    pub tokens: Vec<RoleToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model_name: String,
    n_layers: usize,
    hidden_dim: usize,
    prompts: Vec<DumpPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStreamDump {
    pub model_name: String,
    /// Number of blocks `L`; each token stores `L + 1` vectors.
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub prompts: Vec<DumpPrompt>,
    /// `[total_tokens][n_layers + 1][hidden_dim]`, flattened.
    pub values: Vec<f32>,
    /// Configuration of the run that produced the dump, if recorded.
    pub run_config: Option<serde_json::Value>,
}

impl ResidualStreamDump {
    pub fn total_tokens(&self) -> usize {
        self.prompts.iter().map(|p| p.tokens.len()).sum()
    }

    pub fn layers_stored(&self) -> usize {
        self.n_layers + 1
    }

    fn token_stride(&self) -> usize {
        self.layers_stored() * self.hidden_dim
    }

    /// Residual vector of global token `token` at `layer`.
    pub fn vector(&self, token: usize, layer: usize) -> &[f32] {
        let start = token * self.token_stride() + layer * self.hidden_dim;
        &self.values[start..start + self.hidden_dim]
    }

    pub fn vector_f64(&self, token: usize, layer: usize) -> Vec<f64> {
        self.vector(token, layer).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn vector_mut(&mut self, token: usize, layer: usize) -> &mut [f32] {
        let start = token * self.token_stride() + layer * self.hidden_dim;
        let d = self.hidden_dim;
        &mut self.values[start..start + d]
    }

    /// Global index of the first token of every prompt.
    pub fn token_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.prompts
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.tokens.len();
                o
            })
            .collect()
    }

    /// Global index of prompt `p`'s final separator.
    pub fn final_separator(&self, prompt: usize) -> Option<usize> {
        let offset = self.token_offsets()[prompt];
        self.prompts[prompt]
            .tokens
            .iter()
            .position(|t| t.role == TokenRole::FinalSeparator)
            .map(|i| offset + i)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.total_tokens() * self.token_stride();
        if self.values.len() != expected {
            return Err(DumpError::InvariantViolation(format!(
                "values has {} entries, expected {expected}",
                self.values.len()
            )));
        }
        for p in &self.prompts {
            let finals = p.tokens.iter().filter(|t| t.role == TokenRole::FinalSeparator).count();
            if finals != 1 {
                return Err(DumpError::InvariantViolation(format!(
                    "prompt {} has {finals} final separators",
                    p.prompt_id
                )));
            }
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(DumpError::InvariantViolation(format!("non-finite value at index {i}")));
        }
        Ok(())
    }
}

/// Serializes a dump to bytes.
pub fn encode_dump(dump: &ResidualStreamDump) -> Result<Vec<u8>> {
    dump.validate()?;
    let header = Header {
        model_name: dump.model_name.clone(),
        n_layers: dump.n_layers,
        hidden_dim: dump.hidden_dim,
        prompts: dump.prompts.clone(),
        run_config: dump.run_config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| DumpError::HeaderParseError(e.to_string()))?;
    let header_len =
        u32::try_from(json.len()).map_err(|_| DumpError::InvariantViolation("header exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + dump.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in &dump.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a dump from bytes.
pub fn decode_dump(bytes: &[u8]) -> Result<ResidualStreamDump> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(DumpError::BadMagic);
    }
    let len_bytes: [u8; 4] = bytes
        .get(8..12)
        .and_then(|b| b.try_into().ok())
        .ok_or(DumpError::BadHeaderLength { len: 4, available: bytes.len() - 8 })?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let available = bytes.len() - 12;
    if header_len > available {
        return Err(DumpError::BadHeaderLength { len: header_len, available });
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| DumpError::HeaderParseError(e.to_string()))?;
    let total_tokens: usize = header.prompts.iter().map(|p| p.tokens.len()).sum();
    let expected = total_tokens * (header.n_layers + 1) * header.hidden_dim * 4;
    let payload = &bytes[12 + header_len..];
    if payload.len() < expected {
        return Err(DumpError::TruncatedPayload { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(DumpError::TrailingBytes { expected, found: payload.len() });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let dump = ResidualStreamDump {
        model_name: header.model_name,
        n_layers: header.n_layers,
        hidden_dim: header.hidden_dim,
        prompts: header.prompts,
        values,
        run_config: header.run_config,
    };
    dump.validate()?;
    Ok(dump)
}

pub fn write_dump(dump: &ResidualStreamDump, path: &Path) -> Result<()> {
    let bytes = encode_dump(dump)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<ResidualStreamDump> {
    decode_dump(&std::fs::read(path)?)
}
