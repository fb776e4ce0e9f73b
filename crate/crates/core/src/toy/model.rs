use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attention::{attention_constant_causal, attention_forward_exact, RoleScores};
use super::ffn::{ffn_forward, FFNSpec};
use super::{Result, ToyError};
use crate::dumpio::{DumpPrompt, ResidualStreamDump};
use crate::linalg::{dot, norm, DenseMatrix};
use crate::prompts::{render_prompt, PromptSpec, RoleToken, TokenRole};

const UNIT_TOL: f64 = 1e-9;
const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLayer {
    pub k: DenseMatrix,
    pub q: DenseMatrix,
    pub v: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Exact { layers: Vec<ExactLayer> },
    /// Role-constant scores per layer and one value matrix shared by all layers.
    Constant { scores: Vec<RoleScores>, value: DenseMatrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTag {
    pub context_id: String,
    pub value_word: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub d: usize,
    pub n_layers: usize,
    pub vocab: Vec<(String, Vec<f64>)>,
    pub ffn_per_layer: Vec<FFNSpec>,
    pub attention_mode: AttentionMode,
    pub context_tags: BTreeMap<String, Vec<ContextTag>>,
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(ToyError::InvalidConfig("d must be positive".into()));
        }
        if self.vocab.is_empty() {
            return Err(ToyError::EmptyVocab);
        }
        let mut seen = HashMap::new();
        for (i, (word, emb)) in self.vocab.iter().enumerate() {
            if emb.len() != d {
                return Err(ToyError::DimensionMismatch { expected: d, found: emb.len() });
            }
            if (norm(emb) - 1.0).abs() > UNIT_TOL {
                return Err(ToyError::InvalidConfig(format!("embedding of {word:?} is not unit-norm")));
            }
            if seen.insert(word.as_str(), i).is_some() {
                return Err(ToyError::InvalidConfig(format!("duplicate vocabulary word {word:?}")));
            }
        }
        if self.ffn_per_layer.len() != self.n_layers {
            return Err(ToyError::InvalidConfig(format!(
                "{} FFNs for {} layers",
                self.ffn_per_layer.len(),
                self.n_layers
            )));
        }
        for ffn in &self.ffn_per_layer {
            ffn.validate(d)?;
        }
        let square = |m: &DenseMatrix| -> Result<()> {
            if m.shape() != (d, d) {
                return Err(ToyError::DimensionMismatch { expected: d, found: m.rows().max(m.cols()) });
            }
            Ok(())
        };
        match &self.attention_mode {
            AttentionMode::Exact { layers } => {
                if layers.len() != self.n_layers {
                    return Err(ToyError::InvalidConfig(format!(
                        "{} attention layers for {} layers",
                        layers.len(),
                        self.n_layers
                    )));
                }
                for l in layers {
                    square(&l.k)?;
                    square(&l.q)?;
                    square(&l.v)?;
                }
            }
            AttentionMode::Constant { scores, value } => {
                if scores.len() != self.n_layers {
                    return Err(ToyError::InvalidConfig(format!(
                        "{} score triples for {} layers",
                        scores.len(),
                        self.n_layers
                    )));
                }
                if scores.iter().any(|s| !(s.alpha.is_finite() && s.beta.is_finite() && s.gamma.is_finite())) {
                    return Err(ToyError::InvalidConfig("attention constants must be finite".into()));
                }
                square(value)?;
            }
        }
        for (word, tags) in &self.context_tags {
            if !seen.contains_key(word.as_str()) {
                return Err(ToyError::UnknownWord(word.clone()));
            }
            if let Some(t) = tags.iter().find(|t| !seen.contains_key(t.value_word.as_str())) {
                return Err(ToyError::UnknownWord(t.value_word.clone()));
            }
        }
        Ok(())
    }

    pub fn embedding(&self, word: &str) -> Option<&[f64]> {
        self.vocab.iter().find(|(w, _)| w == word).map(|(_, e)| e.as_slice())
    }
}

/// Residual streams of one prompt: `h[0]` holds the embeddings and
/// `h[l] = h[l-1] + a[l-1] + m[l-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub tokens: Vec<RoleToken>,
    pub h: Vec<DenseMatrix>,
    pub a: Vec<DenseMatrix>,
    pub m: Vec<DenseMatrix>,
}

impl LayerTrace {
    pub fn n_layers(&self) -> usize {
        self.a.len()
    }

    pub fn final_separator(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.role == TokenRole::FinalSeparator)
    }

    /// `[token][layer][dim]` as stored in a dump.
    pub fn dump_values(&self) -> Vec<f32> {
        let t = self.tokens.len();
        let d = self.h.first().map_or(0, DenseMatrix::cols);
        let mut out = Vec::with_capacity(t * self.h.len() * d);
        for i in 0..t {
            for h in &self.h {
                out.extend(h.row(i).iter().map(|&v| v as f32));
            }
        }
        out
    }
}

/// A validated config with its word index.
#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ToyModelConfig,
    index: HashMap<String, usize>,
    candidates: Vec<(String, Vec<f64>)>,
}

impl ToyModel {
    pub fn new(config: ToyModelConfig) -> Result<Self> {
        config.validate()?;
        let index = config.vocab.iter().enumerate().map(|(i, (w, _))| (w.clone(), i)).collect();
        let values: std::collections::HashSet<&str> =
            config.context_tags.values().flatten().map(|t| t.value_word.as_str()).collect();
        let candidates: Vec<(String, Vec<f64>)> = if values.is_empty() {
            config.vocab.clone()
        } else {
            config.vocab.iter().filter(|(w, _)| values.contains(w.as_str())).cloned().collect()
        };
        Ok(Self { config, index, candidates })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    /// Words the readout chooses from: every value word named in the
    /// context tags, or the whole vocabulary when there are none.
    pub fn candidates(&self) -> &[(String, Vec<f64>)] {
        &self.candidates
    }

    pub fn run(&self, prompt: &PromptSpec) -> Result<LayerTrace> {
        let (_, tokens) = render_prompt(prompt);
        self.run_tokens(tokens)
    }

    pub fn run_tokens(&self, tokens: Vec<RoleToken>) -> Result<LayerTrace> {
        let cfg = &self.config;
        let d = cfg.d;
        let mut h0 = DenseMatrix::zeros(tokens.len(), d);
        for (i, tok) in tokens.iter().enumerate() {
            let idx = *self.index.get(&tok.text).ok_or_else(|| ToyError::UnknownWord(tok.text.clone()))?;
            h0.row_mut(i).copy_from_slice(&cfg.vocab[idx].1);
        }
        let roles: Vec<TokenRole> = tokens.iter().map(|t| t.role).collect();
        let mut h = vec![h0];
        let mut a_all = Vec::with_capacity(cfg.n_layers);
        let mut m_all = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let prev = &h[l];
            let a = match &cfg.attention_mode {
                AttentionMode::Exact { layers } => {
                    let ly = &layers[l];
                    attention_forward_exact(prev, &ly.k, &ly.q, &ly.v)?
                }
                AttentionMode::Constant { scores, value } => attention_constant_causal(prev, &roles, scores[l], value)?,
            };
            let mut m = DenseMatrix::zeros(tokens.len(), d);
            let mut next = DenseMatrix::zeros(tokens.len(), d);
            let mut input = vec![0.0; d];
            for i in 0..tokens.len() {
                input.iter_mut().zip(a.row(i).iter().zip(prev.row(i))).for_each(|(x, (ai, hi))| *x = ai + hi);
                let out = ffn_forward(&cfg.ffn_per_layer[l], &input)?;
                m.row_mut(i).copy_from_slice(&out);
                for (c, o) in next.row_mut(i).iter_mut().enumerate() {
                    *o = prev.get(i, c) + a.get(i, c) + out[c];
                }
            }
            h.push(next);
            a_all.push(a);
            m_all.push(m);
        }
        Ok(LayerTrace { tokens, h, a: a_all, m: m_all })
    }

    /// Readout of the final separator's last-layer residual.
    pub fn predict(&self, trace: &LayerTrace) -> Result<&str> {
        let fs = trace
            .final_separator()
            .ok_or_else(|| ToyError::RoleMismatch("prompt has no final separator".into()))?;
        let last = trace.h.last().expect("trace holds h0");
        decode_answer(last.row(fs), &self.candidates)
    }
}

pub fn run_model(config: &ToyModelConfig, prompt: &PromptSpec) -> Result<LayerTrace> {
    ToyModel::new(config.clone())?.run(prompt)
}

/// Vocabulary word with the largest cosine similarity to `h`; the first
/// one wins ties.
pub fn decode_answer<'a>(h: &[f64], vocab: &'a [(String, Vec<f64>)]) -> Result<&'a str> {
    if vocab.is_empty() {
        return Err(ToyError::EmptyVocab);
    }
    let hn = norm(h);
    let mut best = 0;
    let mut best_cos = f64::NEG_INFINITY;
    for (i, (_, e)) in vocab.iter().enumerate() {
        let en = norm(e);
        let cos = if hn == 0.0 || en == 0.0 { 0.0 } else { dot(h, e) / (hn * en) };
        if cos > best_cos {
            best = i;
            best_cos = cos;
        }
    }
    Ok(&vocab[best].0)
}

/// Case-insensitive comparison after trimming punctuation and whitespace.
pub fn answer_matches(generated: &str, expected: &str) -> bool {
    let trim = |s: &str| s.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation()).to_lowercase();
    trim(generated) == trim(expected)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub max_abs_error: f64,
    /// Entry `l - 1` is the mean over tokens of
    /// `‖Σ_{k≤l} m^k‖ / (‖Σ_{k≤l} m^k‖ + ‖h⁰ + Σ_{k≤l} a^k‖)`.
    pub ffn_share: Vec<f64>,
}

/// Checks `h^l == h⁰ + Σ_{k≤l} (a^k + m^k)` at every layer and token.
pub fn residual_audit(trace: &LayerTrace) -> Result<AuditReport> {
    let n_tok = trace.tokens.len();
    let d = trace.h[0].cols();
    let mut max_err: f64 = 0.0;
    let mut shares = Vec::with_capacity(trace.n_layers());
    let mut attn_acc = trace.h[0].clone();
    let mut ffn_acc = DenseMatrix::zeros(n_tok, d);
    for l in 0..trace.n_layers() {
        let mut share_sum = 0.0;
        for i in 0..n_tok {
            for c in 0..d {
                attn_acc.set(i, c, attn_acc.get(i, c) + trace.a[l].get(i, c));
                ffn_acc.set(i, c, ffn_acc.get(i, c) + trace.m[l].get(i, c));
                let err = (trace.h[l + 1].get(i, c) - attn_acc.get(i, c) - ffn_acc.get(i, c)).abs();
                if !(err <= AUDIT_TOL) {
                    return Err(ToyError::AuditFailure { layer: l + 1, token: i, error: err });
                }
                max_err = max_err.max(err);
            }
            let fm = norm(ffn_acc.row(i));
            let fa = norm(attn_acc.row(i));
            share_sum += if fm + fa > 0.0 { fm / (fm + fa) } else { 0.0 };
        }
        shares.push(if n_tok == 0 { 0.0 } else { share_sum / n_tok as f64 });
    }
    Ok(AuditReport { max_abs_error: max_err, ffn_share: shares })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOptions {
    pub model_name: String,
    /// Standard deviation of Gaussian noise added to the last-layer
    /// residuals of prompts the model answers incorrectly.
    pub noise_incorrect: f64,
    pub noise_seed: u64,
    /// First `prompt_id`.
    pub id_offset: u64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { model_name: "toy".into(), noise_incorrect: 0.0, noise_seed: 0, id_offset: 0 }
    }
}

/// Runs every prompt and packs the residual streams into a dump, labelling
/// each prompt by whether the readout matches its expected answer.
pub fn simulate(model: &ToyModel, prompts: &[PromptSpec], opts: &SimulateOptions) -> Result<ResidualStreamDump> {
    let cfg = model.config();
    let runs: Vec<(DumpPrompt, Vec<f32>)> = prompts
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let trace = model.run(spec)?;
            let correct = answer_matches(model.predict(&trace)?, &spec.expected_answer);
            let mut values = trace.dump_values();
            if !correct && opts.noise_incorrect > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let noise = Normal::new(0.0, opts.noise_incorrect)
                    .map_err(|e| ToyError::InvalidConfig(format!("noise: {e}")))?;
                let stride = (cfg.n_layers + 1) * cfg.d;
                let last = cfg.n_layers * cfg.d;
                for t in 0..trace.tokens.len() {
                    for v in &mut values[t * stride + last..t * stride + last + cfg.d] {
                        *v += noise.sample(&mut rng) as f32;
                    }
                }
            }
            let prompt = DumpPrompt {
                prompt_id: opts.id_offset + i as u64,
                task_name: spec.task_name.to_string(),
                correct: Some(correct),
                seed: Some(spec.seed),
                expected_answer: Some(spec.expected_answer.clone()),
                tokens: trace.tokens,
            };
            Ok((prompt, values))
        })
        .collect::<Result<_>>()?;
    let mut dump = ResidualStreamDump {
        model_name: opts.model_name.clone(),
        n_layers: cfg.n_layers,
        hidden_dim: cfg.d,
        prompts: Vec::with_capacity(runs.len()),
        values: Vec::new(),
        run_config: None,
    };
    for (p, v) in runs {
        dump.prompts.push(p);
        dump.values.extend(v);
    }
    Ok(dump)
}
