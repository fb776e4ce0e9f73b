//! Builds a [`ToyModelConfig`] from a task's pair pool.
//!
//! Layout of the residual space: the first basis vectors of a seeded random
//! rotation are context directions, every word gets its own direction
//! after that (or a random unit vector in the remaining subspace when the
//! vocabulary does not fit). Value words lean towards their context:
//! `e = (r + η·u_ctx) / √(1 + η²)`.
//!
//! Layer 1's FFN recalls, for each query word, `Σ coefficient · e_value`
//! over its context tags, and maps each answer word to `κ·u_task − ρ·r`,
//! pushing the shared context forward while cancelling the answer itself.
//! Layers 2.. amplify every context direction by `λ`.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::attention::RoleScores;
use super::ffn::{build_associative_ffn, Activation, FFNSpec};
use super::model::{AttentionMode, ContextTag, ToyModelConfig};
use super::{Result, ToyError};
use crate::linalg::{norm, DenseMatrix};
use crate::prompts::{PromptTemplate, TaskPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    /// Queries recall the answers' context, so separators and answers share it.
    #[default]
    Shared,
    /// Queries recall only distractor contexts and attention cannot read the
    /// answer subspace, so separators never see the answers' context.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyBuilder {
    pub d: usize,
    pub n_layers: usize,
    pub seed: u64,
    pub activation: Activation,
    /// Context shared by every answer of the task.
    pub task_context: String,
    /// One extra context per entry; each query word recalls one value word
    /// from each of them.
    pub distractor_contexts: Vec<String>,
    pub words_per_distractor: usize,
    /// `η`, how far value words lean towards their context direction.
    pub context_mix: f64,
    /// Range of the task-context coefficient drawn per query word.
    pub task_coef: (f64, f64),
    /// Range of each distractor coefficient drawn per query word.
    pub distractor_coef: (f64, f64),
    /// `κ`
    pub answer_push: f64,
    /// `ρ`
    pub answer_suppress: f64,
    /// `λ`
    pub amplify: f64,
    pub scores: RoleScores,
    /// The value matrix is `value_scale · √d · I`, so attention outputs a
    /// weighted average of the prefix scaled by `value_scale`.
    pub value_scale: f64,
    pub mode: ControlMode,
    pub max_pairs: usize,
}

impl Default for ToyBuilder {
    fn default() -> Self {
        Self {
            d: 64,
            n_layers: 8,
            seed: 0,
            activation: Activation::ReLU,
            task_context: "task".into(),
            distractor_contexts: vec!["alt".into()],
            words_per_distractor: 4,
            context_mix: 0.5,
            task_coef: (0.6, 1.0),
            distractor_coef: (1.0, 3.0),
            answer_push: 0.7,
            answer_suppress: 3.0,
            amplify: 0.4,
            scores: RoleScores { alpha: 0.0, beta: 0.0, gamma: 0.5 },
            value_scale: 0.2,
            mode: ControlMode::Shared,
            max_pairs: 24,
        }
    }
}

/// Known directions of a built model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGroundTruth {
    pub task_context: String,
    pub contexts: Vec<(String, Vec<f64>)>,
}

impl ToyGroundTruth {
    pub fn context(&self, id: &str) -> Option<&[f64]> {
        self.contexts.iter().find(|(c, _)| c == id).map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub config: ToyModelConfig,
    pub truth: ToyGroundTruth,
    /// The pairs the model knows; prompts must be drawn from this pool.
    pub pool: TaskPool,
}

fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

fn lerp(range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn scaled_sum(terms: &[(f64, &[f64])], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (c, v) in terms {
        out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o += c * x);
    }
    out
}

impl ToyBuilder {
    /// Keeps pairs whose query and answer are single words and never play
    /// both roles, up to `max_pairs`.
    fn usable_pairs(&self, pool: &TaskPool) -> Vec<(String, String)> {
        let marks = PromptTemplate::default();
        let reserved = [marks.query_mark.as_str(), marks.answer_mark.as_str()];
        let mut queries = HashSet::new();
        let mut answers = HashSet::new();
        let mut out = Vec::new();
        for (q, a) in &pool.pairs {
            if out.len() == self.max_pairs {
                break;
            }
            let single = |w: &str| !w.contains(char::is_whitespace) && !reserved.contains(&w);
            if !single(q) || !single(a) || q == a || answers.contains(q) || queries.contains(a) || queries.contains(q) || answers.contains(a) {
                continue;
            }
            queries.insert(q.clone());
            answers.insert(a.clone());
            out.push((q.clone(), a.clone()));
        }
        out
    }

    pub fn build(&self, pool: &TaskPool) -> Result<ToyModel> {
        let d = self.d;
        if self.context_mix < 0.0 || !self.context_mix.is_finite() {
            return Err(ToyError::InvalidConfig("context_mix must be finite and non-negative".into()));
        }
        let pairs = self.usable_pairs(pool);
        if pairs.len() < 2 {
            return Err(ToyError::InvalidConfig(format!("only {} usable pairs", pairs.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let rot = random_rotation(d, &mut rng);

        let mut context_ids = vec![self.task_context.clone()];
        context_ids.extend(self.distractor_contexts.iter().cloned());
        let n_ctx = context_ids.len();
        let template = PromptTemplate::default();
        let mut words: Vec<String> = vec![template.query_mark.clone(), template.answer_mark.clone()];
        words.extend(pairs.iter().map(|(q, _)| q.clone()));
        words.extend(pairs.iter().map(|(_, a)| a.clone()));
        let mut distractor_words: Vec<Vec<String>> = Vec::new();
        for c in &self.distractor_contexts {
            let ws: Vec<String> = (0..self.words_per_distractor).map(|j| format!("{c}:{j}")).collect();
            words.extend(ws.iter().cloned());
            distractor_words.push(ws);
        }
        if n_ctx >= d {
            return Err(ToyError::InvalidConfig(format!("{n_ctx} contexts do not fit in d = {d}")));
        }

        let basis = |j: usize| -> Vec<f64> { rot.column(j).iter().copied().collect() };
        let contexts: Vec<Vec<f64>> = (0..n_ctx).map(basis).collect();
        let free = d - n_ctx;
        let word_dirs: Vec<Vec<f64>> = if words.len() <= free {
            (0..words.len()).map(|i| basis(n_ctx + i)).collect()
        } else {
            (0..words.len())
                .map(|_| {
                    let coeffs: Vec<f64> = (0..free).map(|_| rng.sample(StandardNormal)).collect();
                    let n = norm(&coeffs);
                    let mut v = vec![0.0; d];
                    for (j, c) in coeffs.iter().enumerate() {
                        let col = rot.column(n_ctx + j);
                        v.iter_mut().zip(col.iter()).for_each(|(o, x)| *o += c / n * x);
                    }
                    v
                })
                .collect()
        };
        let dir = |w: &str| -> &[f64] { &word_dirs[words.iter().position(|x| x == w).expect("word listed")] };

        let eta = self.context_mix;
        let lean = |r: &[f64], u: &[f64]| -> Vec<f64> {
            let v = scaled_sum(&[(1.0, r), (eta, u)], d);
            let n = norm(&v);
            v.into_iter().map(|x| x / n).collect()
        };
        let mut vocab: Vec<(String, Vec<f64>)> = Vec::with_capacity(words.len());
        vocab.push((words[0].clone(), dir(&words[0]).to_vec()));
        vocab.push((words[1].clone(), dir(&words[1]).to_vec()));
        for (q, _) in &pairs {
            vocab.push((q.clone(), dir(q).to_vec()));
        }
        for (_, a) in &pairs {
            vocab.push((a.clone(), lean(dir(a), &contexts[0])));
        }
        for (c, ws) in distractor_words.iter().enumerate() {
            for w in ws {
                vocab.push((w.clone(), lean(dir(w), &contexts[c + 1])));
            }
        }
        let emb = |w: &str| -> Vec<f64> { vocab.iter().find(|(x, _)| x == w).expect("in vocab").1.clone() };

        let mut context_tags: BTreeMap<String, Vec<ContextTag>> = BTreeMap::new();
        for (q, a) in &pairs {
            let mut tags = Vec::new();
            let g = lerp(self.task_coef, &mut rng);
            if self.mode == ControlMode::Shared {
                tags.push(ContextTag { context_id: self.task_context.clone(), value_word: a.clone(), coefficient: g });
            }
            for (c, ws) in distractor_words.iter().enumerate() {
                let b = lerp(self.distractor_coef, &mut rng);
                let w = ws[rng.random_range(0..ws.len())].clone();
                tags.push(ContextTag { context_id: self.distractor_contexts[c].clone(), value_word: w, coefficient: b });
            }
            context_tags.insert(q.clone(), tags);
        }

        let mut features = Vec::new();
        let mut values = Vec::new();
        for (q, tags) in &context_tags {
            features.push(dir(q).to_vec());
            let terms: Vec<(f64, Vec<f64>)> = tags.iter().map(|t| (t.coefficient, emb(&t.value_word))).collect();
            let refs: Vec<(f64, &[f64])> = terms.iter().map(|(c, v)| (*c, v.as_slice())).collect();
            values.push(scaled_sum(&refs, d));
        }
        for (_, a) in &pairs {
            features.push(dir(a).to_vec());
            values.push(scaled_sum(&[(-self.answer_suppress, dir(a)), (self.answer_push, &contexts[0])], d));
        }
        let first = build_associative_ffn(&features, &values, self.activation)?;
        // The control amplifies only the answers' context, so nothing that
        // reaches separators grows on its own.
        let amplified = match self.mode {
            ControlMode::Shared => &contexts[..],
            ControlMode::Disjoint => &contexts[..1],
        };
        let amp_values: Vec<Vec<f64>> =
            amplified.iter().map(|u| u.iter().map(|x| self.amplify * x).collect()).collect();
        let amplifier = build_associative_ffn(amplified, &amp_values, self.activation)?;
        let mut ffn_per_layer: Vec<FFNSpec> = Vec::with_capacity(self.n_layers);
        for l in 0..self.n_layers {
            ffn_per_layer.push(if l == 0 { first.clone() } else { amplifier.clone() });
        }

        let scale = self.value_scale * (d as f64).sqrt();
        let mut value = DenseMatrix::identity(d);
        value.scale(scale);
        if self.mode == ControlMode::Disjoint {
            let mut hidden: Vec<Vec<f64>> = Vec::new();
            let raw = pairs.iter().map(|(_, a)| dir(a)).chain(std::iter::once(contexts[0].as_slice()));
            for v in raw {
                let mut w = v.to_vec();
                for u in &hidden {
                    let p = crate::linalg::dot(&w, u);
                    w.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
                }
                let n = norm(&w);
                if n > 1e-9 {
                    hidden.push(w.into_iter().map(|x| x / n).collect());
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let p: f64 = hidden.iter().map(|v| v[i] * v[j]).sum();
                    value.set(i, j, value.get(i, j) - scale * p);
                }
            }
        }

        let config = ToyModelConfig {
            d,
            n_layers: self.n_layers,
            vocab,
            ffn_per_layer,
            attention_mode: AttentionMode::Constant { scores: vec![self.scores; self.n_layers], value },
            context_tags,
        };
        config.validate()?;
        let truth = ToyGroundTruth {
            task_context: self.task_context.clone(),
            contexts: context_ids.into_iter().zip(contexts).collect(),
        };
        let pool = TaskPool::new(pool.task_name, pairs)
            .map_err(|e| ToyError::InvalidConfig(format!("pool: {e}")))?;
        Ok(ToyModel { config, truth, pool })
    }
}
