//! In-context-learning prompts: word-pair pools, seeded prompt sampling, and
//! rendering with per-token role labels.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("pool is empty")]
    EmptyPool,
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("pool has {have} pairs but {need} are needed per prompt")]
    PoolTooSmall { need: usize, have: usize },
    #[error("n_examples must be at least 1")]
    NoExamples,
    #[error("invalid template: {0}")]
    BadTemplate(String),
}

pub type Result<T> = std::result::Result<T, PromptError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Antonym,
    Synonym,
    CountryCapital,
    EnglishFrench,
    ProductCompany,
    PersonSport,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Antonym,
        Task::Synonym,
        Task::CountryCapital,
        Task::EnglishFrench,
        Task::ProductCompany,
        Task::PersonSport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Antonym => "antonym",
            Task::Synonym => "synonym",
            Task::CountryCapital => "country-capital",
            Task::EnglishFrench => "english-french",
            Task::ProductCompany => "product-company",
            Task::PersonSport => "person-sport",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTask(s.to_string()))
    }
}

/// Collapses internal whitespace so rendered prompts split back into the
/// same words.
fn clean(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPool {
    pub task_name: Task,
    pub pairs: Vec<(String, String)>,
}

impl TaskPool {
    /// Drops later pairs whose query repeats an earlier one.
    pub fn new(task_name: Task, pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let pairs: Vec<_> = pairs
            .into_iter()
            .map(|(q, a)| (clean(&q), clean(&a)))
            .filter(|(q, a)| !q.is_empty() && !a.is_empty())
            .filter(|(q, _)| seen.insert(q.clone()))
            .collect();
        if pairs.is_empty() {
            return Err(PromptError::EmptyPool);
        }
        Ok(Self { task_name, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Deserialize)]
struct PairJson {
    input: String,
    output: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolJson {
    Bare(Vec<PairJson>),
    Wrapped { pairs: Vec<PairJson> },
}

/// Parses a pool from JSON text: either an array of `{input, output}`
/// objects or `{"pairs": [...]}`.
pub fn parse_pair_pool(task: Task, json: &str) -> Result<TaskPool> {
    let parsed: PoolJson = serde_json::from_str(json).map_err(|e| PromptError::ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let pairs = match parsed {
        PoolJson::Bare(p) | PoolJson::Wrapped { pairs: p } => p,
    };
    TaskPool::new(task, pairs.into_iter().map(|p| (p.input, p.output)))
}

/// Loads a pool file. The task is the file stem (`country-capital.json`).
pub fn load_pair_pool(path: &Path) -> Result<TaskPool> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let task: Task = stem.parse()?;
    let text = std::fs::read_to_string(path)
        .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
    parse_pair_pool(task, &text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task_name: Task,
    pub examples: Vec<(String, String)>,
    pub test_query: String,
    pub expected_answer: String,
    pub seed: u64,
}

/// Samples `n_prompts` prompts of `n_examples` demonstrations plus one test
/// pair each, drawing distinct pairs uniformly without replacement.
pub fn generate_prompts(pool: &TaskPool, n_prompts: usize, n_examples: usize, seed: u64) -> Result<Vec<PromptSpec>> {
    if n_examples == 0 {
        return Err(PromptError::NoExamples);
    }
    let need = n_examples + 1;
    if pool.len() < need {
        return Err(PromptError::PoolTooSmall { need, have: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_prompts)
        .map(|_| {
            let picks = sample(&mut rng, pool.len(), need).into_vec();
            let (test_idx, example_idx) = picks.split_last().expect("need >= 2");
            let (test_query, expected_answer) = pool.pairs[*test_idx].clone();
            PromptSpec {
                task_name: pool.task_name,
                examples: example_idx.iter().map(|&i| pool.pairs[i].clone()).collect(),
                test_query,
                expected_answer,
                seed,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenRole {
    Query,
    Separator,
    Answer,
    TestQuery,
    FinalSeparator,
    /// First generated token, appended by extraction tools.
    GeneratedFirst,
}

impl TokenRole {
    pub fn is_separator(self) -> bool {
        matches!(self, TokenRole::Separator | TokenRole::FinalSeparator)
    }

    pub fn is_query(self) -> bool {
        matches!(self, TokenRole::Query | TokenRole::TestQuery)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleToken {
    pub text: String,
    pub role: TokenRole,
    pub prompt_position: usize,
}

/// Rendering layout: `<query_mark> q<line_sep><answer_mark> a`, blocks joined
/// by `block_sep`, ending with the test query and a bare answer mark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub query_mark: String,
    pub answer_mark: String,
    pub line_sep: String,
    pub block_sep: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { query_mark: "Q:".into(), answer_mark: "A:".into(), line_sep: "\n".into(), block_sep: "\n\n".into() }
    }
}

impl PromptTemplate {
    /// Parses a block pattern such as `"Q: {query}\nA: {answer}"`; the
    /// separator between blocks is passed separately.
    pub fn parse(pattern: &str, block_sep: &str) -> Result<Self> {
        let bad = || PromptError::BadTemplate(pattern.to_string());
        let (head, rest) = pattern.split_once("{query}").ok_or_else(bad)?;
        let (middle, tail) = rest.split_once("{answer}").ok_or_else(bad)?;
        let query_mark = head.trim().to_string();
        let answer_mark = middle.trim().to_string();
        let line_sep: String = middle.chars().take_while(|c| c.is_whitespace()).collect();
        let well_formed = !query_mark.is_empty()
            && !answer_mark.is_empty()
            && !query_mark.contains(char::is_whitespace)
            && !answer_mark.contains(char::is_whitespace)
            && head.ends_with(' ')
            && middle.ends_with(' ')
            && !line_sep.is_empty()
            && tail.is_empty()
            && !block_sep.is_empty()
            && block_sep.chars().all(char::is_whitespace);
        if !well_formed {
            return Err(bad());
        }
        Ok(Self { query_mark, answer_mark, line_sep, block_sep: block_sep.to_string() })
    }
}

/// Renders with the default template.
pub fn render_prompt(spec: &PromptSpec) -> (String, Vec<RoleToken>) {
    render_prompt_with(spec, &PromptTemplate::default())
}

pub fn render_prompt_with(spec: &PromptSpec, template: &PromptTemplate) -> (String, Vec<RoleToken>) {
    let mut text = String::new();
    let mut tokens: Vec<RoleToken> = Vec::new();
    let mut push = |t: &str, role: TokenRole| {
        let pos = tokens.len();
        tokens.push(RoleToken { text: t.to_string(), role, prompt_position: pos });
    };

    for (q, a) in &spec.examples {
        text.push_str(&format!("{} {}{}{} {}", template.query_mark, q, template.line_sep, template.answer_mark, a));
        text.push_str(&template.block_sep);
        push(&template.query_mark, TokenRole::Query);
        q.split_whitespace().for_each(|w| push(w, TokenRole::Query));
        push(&template.answer_mark, TokenRole::Separator);
        a.split_whitespace().for_each(|w| push(w, TokenRole::Answer));
    }
    text.push_str(&format!("{} {}{}{}", template.query_mark, spec.test_query, template.line_sep, template.answer_mark));
    push(&template.query_mark, TokenRole::TestQuery);
    spec.test_query.split_whitespace().for_each(|w| push(w, TokenRole::TestQuery));
    push(&template.answer_mark, TokenRole::FinalSeparator);
    (text, tokens)
}

/// Inverse of tokenization: joins token texts with the template's
/// whitespace.
pub fn join_tokens(tokens: &[RoleToken], template: &PromptTemplate) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        out.push_str(&t.text);
        let Some(next) = tokens.get(i + 1) else { break };
        let sep = if next.role.is_separator() {
            &template.line_sep
        } else if t.role == TokenRole::Answer && next.role.is_query() {
            &template.block_sep
        } else {
            " "
        };
        out.push_str(sep);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pool(n: usize) -> TaskPool {
        TaskPool::new(Task::Antonym, (0..n).map(|i| (format!("q{i}"), format!("a{i}")))).unwrap()
    }

    #[test]
    fn parse_bare_and_wrapped() {
        let p = parse_pair_pool(Task::Antonym, r#"[{"input":"hot","output":"cold"}]"#).unwrap();
        assert_eq!(p.pairs, vec![("hot".to_string(), "cold".to_string())]);
        let p = parse_pair_pool(Task::Antonym, r#"{"pairs":[{"input":"hot","output":"cold"}]}"#).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn duplicates_dropped_keeping_first() {
        let json = r#"[{"input":"hot","output":"cold"},{"input":"up","output":"down"},{"input":"hot","output":"icy"}]"#;
        let p = parse_pair_pool(Task::Antonym, json).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.pairs[0].1, "cold");
        assert_eq!(p.pairs[1].0, "up");
    }

    #[test]
    fn malformed_and_empty() {
        let err = parse_pair_pool(Task::Antonym, "[{\"input\": \"hot\",\n  \"output\": }]").unwrap_err();
        assert!(matches!(err, PromptError::ParseError { line: 2, .. }), "{err:?}");
        assert!(matches!(parse_pair_pool(Task::Antonym, "[]"), Err(PromptError::EmptyPool)));
    }

    #[test]
    fn load_from_file_uses_stem_as_task() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("country-capital.json");
        std::fs::write(&path, r#"[{"input":"France","output":"Paris"}]"#).unwrap();
        let p = load_pair_pool(&path).unwrap();
        assert_eq!(p.task_name, Task::CountryCapital);
        let bad = dir.path().join("weather.json");
        std::fs::write(&bad, "[]").unwrap();
        assert!(matches!(load_pair_pool(&bad), Err(PromptError::UnknownTask(_))));
    }

    #[test]
    fn generate_counts_and_determinism() {
        let p = pool(30);
        let specs = generate_prompts(&p, 200, 5, 7).unwrap();
        assert_eq!(specs.len(), 200);
        for s in &specs {
            assert_eq!(s.examples.len(), 5);
            assert!(s.examples.iter().all(|(q, _)| q != &s.test_query));
            let distinct: HashSet<_> = s.examples.iter().map(|(q, _)| q).collect();
            assert_eq!(distinct.len(), 5);
            assert_eq!(s.seed, 7);
        }
        assert_eq!(specs, generate_prompts(&p, 200, 5, 7).unwrap());
    }

    #[test]
    fn generate_boundaries() {
        let p = pool(6);
        let specs = generate_prompts(&p, 3, 5, 1).unwrap();
        for s in specs {
            let mut all: Vec<_> = s.examples.iter().map(|(q, _)| q.clone()).collect();
            all.push(s.test_query.clone());
            all.sort();
            let mut expected: Vec<_> = p.pairs.iter().map(|(q, _)| q.clone()).collect();
            expected.sort();
            assert_eq!(all, expected);
        }
        assert!(matches!(generate_prompts(&p, 1, 6, 1), Err(PromptError::PoolTooSmall { need: 7, have: 6 })));
        assert!(matches!(generate_prompts(&p, 1, 0, 1), Err(PromptError::NoExamples)));
    }

    #[test]
    fn distinct_seeds_give_distinct_specs() {
        let p = pool(40);
        let mut seen = HashSet::new();
        for seed in 0..100 {
            let spec = generate_prompts(&p, 1, 5, seed).unwrap().remove(0);
            assert!(seen.insert((spec.examples.clone(), spec.test_query.clone())), "seed {seed} repeated");
        }
    }

    #[test]
    fn render_single_example() {
        let spec = PromptSpec {
            task_name: Task::Antonym,
            examples: vec![("hot".into(), "cold".into())],
            test_query: "big".into(),
            expected_answer: "small".into(),
            seed: 0,
        };
        let (text, tokens) = render_prompt(&spec);
        assert_eq!(text, "Q: hot\nA: cold\n\nQ: big\nA:");
        let roles: Vec<_> = tokens.iter().map(|t| t.role).collect();
        use TokenRole::*;
        assert_eq!(roles, vec![Query, Query, Separator, Answer, TestQuery, TestQuery, FinalSeparator]);
        assert_eq!(join_tokens(&tokens, &PromptTemplate::default()), text);
        assert!(tokens.iter().enumerate().all(|(i, t)| t.prompt_position == i));
    }

    #[test]
    fn multi_word_answer() {
        let spec = PromptSpec {
            task_name: Task::CountryCapital,
            examples: vec![("Washington".into(), "United States".into())],
            test_query: "Paris".into(),
            expected_answer: "France".into(),
            seed: 0,
        };
        let (text, tokens) = render_prompt(&spec);
        assert_eq!(tokens[3].text, "United");
        assert_eq!(tokens[4].text, "States");
        assert_eq!(tokens[3].role, TokenRole::Answer);
        assert_eq!(tokens[4].role, TokenRole::Answer);
        assert_eq!(join_tokens(&tokens, &PromptTemplate::default()), text);
    }

    #[test]
    fn five_examples_role_counts() {
        let p = pool(20);
        for spec in generate_prompts(&p, 10, 5, 3).unwrap() {
            let (text, tokens) = render_prompt(&spec);
            let count = |r| tokens.iter().filter(|t| t.role == r).count();
            assert_eq!(count(TokenRole::Separator), 5);
            assert_eq!(count(TokenRole::FinalSeparator), 1);
            assert_eq!(tokens.last().unwrap().role, TokenRole::FinalSeparator);
            assert!(tokens.iter().filter(|t| t.role.is_separator()).all(|t| t.text == "A:"));
            assert_eq!(join_tokens(&tokens, &PromptTemplate::default()), text);
        }
    }

    #[test]
    fn custom_template() {
        let t = PromptTemplate::parse("Input: {query}\nOutput: {answer}", "\n").unwrap();
        assert_eq!(t.query_mark, "Input:");
        assert_eq!(t.answer_mark, "Output:");
        let spec = PromptSpec {
            task_name: Task::Antonym,
            examples: vec![("hot".into(), "cold".into())],
            test_query: "big".into(),
            expected_answer: "small".into(),
            seed: 0,
        };
        let (text, tokens) = render_prompt_with(&spec, &t);
        assert_eq!(text, "Input: hot\nOutput: cold\nInput: big\nOutput:");
        assert_eq!(join_tokens(&tokens, &t), text);
        assert!(PromptTemplate::parse("no placeholders", "\n").is_err());
    }
}
