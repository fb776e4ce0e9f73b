use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use subspace_probe::analysis::{
    alignment_trace, collect_role_matrix, component_distance_report, diagnose as run_diagnosis, distance_vs_score,
    AlignmentTrace, DiagnosisResult, DiagnosisTarget, DistanceReport, LayerRange, ScorePairs,
};
use subspace_probe::decomposition::{ComponentSet, DecomposerRegistry, FitParams, Method, DEFAULT_ENCODE_LAMBDA};
use subspace_probe::dumpio::{read_dump, write_dump, ResidualStreamDump};
use subspace_probe::prompts::{generate_prompts, load_pair_pool, PromptSpec, Task, TaskPool, TokenRole};
use subspace_probe::report;
use subspace_probe::toy::{simulate as run_simulation, ControlMode, SimulateOptions, ToyBuilder, ToyModel};

use crate::output::{provenance, provenance_line, read_json, write_json_with, write_text};

const DATA_ENV: &str = "SUBSPACE_PROBE_DATA";

fn pool_path(task: Task, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
            dir.join(format!("{task}.json"))
        }
    }
}

fn load_pool(task: Task, explicit: Option<&Path>) -> Result<TaskPool> {
    let path = pool_path(task, explicit);
    let pool = load_pair_pool(&path).with_context(|| format!("loading pool {}", path.display()))?;
    if pool.task_name != task {
        bail!("pool {} is for task {}, not {task}", path.display(), pool.task_name);
    }
    Ok(pool)
}

fn load_dump(path: &Path) -> Result<ResidualStreamDump> {
    read_dump(path).with_context(|| format!("reading dump {}", path.display()))
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse::<Task>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleArg {
    Query,
    Separator,
    Answer,
    TestQuery,
    FinalSeparator,
    GeneratedFirst,
}

impl From<RoleArg> for TokenRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Query => TokenRole::Query,
            RoleArg::Separator => TokenRole::Separator,
            RoleArg::Answer => TokenRole::Answer,
            RoleArg::TestQuery => TokenRole::TestQuery,
            RoleArg::FinalSeparator => TokenRole::FinalSeparator,
            RoleArg::GeneratedFirst => TokenRole::GeneratedFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Ica,
    Dictionary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlArg {
    Shared,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetArg {
    FinalSeparator,
    GeneratedFirst,
}

#[derive(Debug, Args, Serialize)]
pub struct GenPromptsArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub examples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pair pool; defaults to `$SUBSPACE_PROBE_DATA/<task>.json`, then `data/<task>.json`.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Draw only pairs the default toy model knows.
    #[arg(long)]
    pub toy: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Writes the prompts array to `--out` and the provenance next to it, since
/// the prompt file itself is a bare array.
pub fn gen_prompts(a: &GenPromptsArgs) -> Result<()> {
    let mut pool = load_pool(a.task, a.pool.as_deref())?;
    if a.toy {
        pool = ToyBuilder::default().build(&pool)?.pool;
    }
    let prompts = generate_prompts(&pool, a.n, a.examples, a.seed)?;
    write_text(&a.out, &(serde_json::to_string_pretty(&prompts)? + "\n"))?;
    let side = sidecar(&a.out);
    write_text(&side, &(serde_json::to_string_pretty(&provenance("gen-prompts", a))? + "\n"))?;
    eprintln!("gen-prompts: {} prompts -> {}", prompts.len(), a.out.display());
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Prompt file from gen-prompts; otherwise prompts are sampled here.
    #[arg(long, conflicts_with_all = ["n", "examples", "seed"])]
    pub prompts: Option<PathBuf>,
    #[arg(long, value_parser = parse_task, default_value = "country-capital")]
    pub task: Task,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub examples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Toy model config JSON; the default model is built from the pool otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    #[arg(long, value_enum, default_value_t = ControlArg::Shared)]
    pub control: ControlArg,
    /// Std. dev. of noise added to the last layer of incorrectly answered prompts.
    #[arg(long, default_value_t = 0.0)]
    pub noise_incorrect: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub id_offset: u64,
    /// Also write the model config used.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let (config, pool) = match &a.config {
        Some(path) => (read_json(path)?, None),
        None => {
            let pool = load_pool(a.task, a.pool.as_deref())?;
            let mode = match a.control {
                ControlArg::Shared => ControlMode::Shared,
                ControlArg::Disjoint => ControlMode::Disjoint,
            };
            let toy = ToyBuilder { seed: a.model_seed, mode, ..ToyBuilder::default() }.build(&pool)?;
            (toy.config, Some(toy.pool))
        }
    };
    let model = ToyModel::new(config)?;
    let prompts: Vec<PromptSpec> = match (&a.prompts, &pool) {
        (Some(path), _) => read_json(path)?,
        (None, Some(pool)) => generate_prompts(pool, a.n.unwrap_or(200), a.examples.unwrap_or(5), a.seed.unwrap_or(0))?,
        (None, None) => bail!("--config needs --prompts"),
    };
    if let Some(pool) = &pool {
        if let Some(p) = prompts.iter().find(|p| p.task_name != pool.task_name) {
            bail!("prompts are for {} but the model was built for {}; pass --task {}", p.task_name, pool.task_name, p.task_name);
        }
    }
    let opts = SimulateOptions {
        model_name: "toy".into(),
        noise_incorrect: a.noise_incorrect,
        noise_seed: a.noise_seed,
        id_offset: a.id_offset,
    };
    let mut dump = run_simulation(&model, &prompts, &opts)?;
    dump.run_config = Some(provenance("simulate", a));
    write_dump(&dump, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.save_config {
        write_json_with(path, model.config(), &provenance("simulate", a))?;
    }
    let correct = dump.prompts.iter().filter(|p| p.correct == Some(true)).count();
    eprintln!("simulate: {} prompts, {} answered correctly -> {}", dump.prompts.len(), correct, a.out.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[arg(long, value_enum)]
    pub role: RoleArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Ica)]
    pub method: MethodArg,
    /// Defaults to 20 for ICA and 300 for dictionary learning.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sparsity penalty for dictionary learning.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Inclusive layer range such as `0..8`; all layers by default.
    #[arg(long)]
    pub layers: Option<LayerRange>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn decompose(a: &DecomposeArgs) -> Result<()> {
    let dump = load_dump(&a.dump)?;
    let x = collect_role_matrix(&dump, a.role.into(), a.layers)?;
    let registry = DecomposerRegistry::with_builtin();
    let name = match a.method {
        MethodArg::Ica => "ica",
        MethodArg::Dictionary => "dictionary",
    };
    let decomposer = registry.get(name)?;
    let defaults = decomposer.default_params();
    let params = FitParams {
        k: a.k.unwrap_or(defaults.k),
        lambda: a.lambda.unwrap_or(defaults.lambda),
        seed: a.seed,
        max_iter: a.max_iter.unwrap_or(defaults.max_iter),
        tol: a.tol.unwrap_or(defaults.tol),
    };
    eprintln!("decompose: {} rows x {} dims, {name} k={}", x.rows(), x.cols(), params.k);
    let fit = decomposer.fit(&x, &params)?;
    if !fit.components.meta().converged {
        log::warn!("{name} stopped after {} iterations without converging", fit.components.meta().iterations_run);
    }
    write_json_with(&a.out, &fit.components, &provenance("decompose", a))
}

#[derive(Debug, Args, Serialize)]
pub struct DistancesArgs {
    /// Separator components.
    #[arg(long)]
    pub sep: PathBuf,
    /// Answer components.
    #[arg(long)]
    pub ans: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn distances(a: &DistancesArgs) -> Result<()> {
    let comp_s: ComponentSet = read_json(&a.sep)?;
    let comp_a: ComponentSet = read_json(&a.ans)?;
    let rep = component_distance_report(&comp_s, &comp_a)?;
    let prov = provenance("distances", a);
    if let Some(csv) = &a.csv {
        write_text(csv, &report::distance_csv(&rep, &[provenance_line(&prov)]))?;
    }
    let best = rep.minima.iter().copied().fold(f64::INFINITY, f64::min);
    eprintln!("distances: smallest per-component minimum {best:.4}");
    write_json_with(&a.out, &rep, &prov)
}

fn encode_lambda(explicit: Option<f64>, comp: &ComponentSet) -> f64 {
    explicit.unwrap_or(match comp.method() {
        Method::Ica => 0.0,
        Method::Dictionary => DEFAULT_ENCODE_LAMBDA,
    })
}

#[derive(Debug, Args, Serialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[arg(long)]
    pub components: PathBuf,
    /// Coding penalty; 0 for ICA components and 0.1 otherwise by default.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn align(a: &AlignArgs) -> Result<()> {
    let dump = load_dump(&a.dump)?;
    let comp: ComponentSet = read_json(&a.components)?;
    let trace = alignment_trace(&dump, &comp, encode_lambda(a.lambda, &comp))?;
    let prov = provenance("align", a);
    if let Some(csv) = &a.csv {
        write_text(csv, &report::alignment_csv(&trace, &[provenance_line(&prov)]))?;
    }
    eprintln!("align: {} layers x {} components", trace.layers, trace.k);
    write_json_with(&a.out, &trace, &prov)
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub sep: PathBuf,
    #[arg(long)]
    pub ans: PathBuf,
    /// Trace from `align`; computed from `--dump` when absent.
    #[arg(long, required_unless_present = "dump")]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Layer whose coefficients are used; the last by default.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn correlate(a: &CorrelateArgs) -> Result<()> {
    let comp_s: ComponentSet = read_json(&a.sep)?;
    let comp_a: ComponentSet = read_json(&a.ans)?;
    let trace: AlignmentTrace = match (&a.trace, &a.dump) {
        (Some(path), _) => read_json(path)?,
        (None, Some(dump)) => alignment_trace(&load_dump(dump)?, &comp_a, encode_lambda(a.lambda, &comp_a))?,
        (None, None) => bail!("need --trace or --dump"),
    };
    let pairs = distance_vs_score(&comp_s, &comp_a, &trace, a.layer)?;
    let prov = provenance("correlate", a);
    if let Some(csv) = &a.csv {
        write_text(csv, &report::score_pairs_csv(&pairs, &[provenance_line(&prov)]))?;
    }
    match pairs.rank_correlation {
        Some(r) => eprintln!("correlate: spearman {r:.4} at layer {}", pairs.layer),
        None => eprintln!("correlate: rank correlation undefined"),
    }
    write_json_with(&a.out, &pairs, &prov)
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[arg(long)]
    pub components: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub top: usize,
    /// Coding penalty; 0 for ICA components and 0.1 otherwise by default.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = TargetArg::FinalSeparator)]
    pub target: TargetArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let dump = load_dump(&a.dump)?;
    let comp: ComponentSet = read_json(&a.components)?;
    let target = match a.target {
        TargetArg::FinalSeparator => DiagnosisTarget::FinalSeparator,
        TargetArg::GeneratedFirst => DiagnosisTarget::GeneratedFirst,
    };
    let result = run_diagnosis(&dump, &comp, encode_lambda(a.lambda, &comp), a.top, target)?;
    let prov = provenance("diagnose", a);
    if let Some(csv) = &a.csv {
        write_text(csv, &report::diagnosis_csv(&result, &[provenance_line(&prov)]))?;
    }
    match (result.t_statistic, result.p_value) {
        (Some(t), Some(p)) => eprintln!(
            "diagnose: {} correct, {} incorrect, t = {t:.4}, p = {p:.4e}",
            result.n_correct, result.n_incorrect
        ),
        _ => eprintln!("diagnose: no test ({})", result.note.as_deref().unwrap_or("unknown")),
    }
    write_json_with(&a.out, &result, &prov)
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// JSON results from distances, align, correlate or diagnose.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let own = provenance_line(&provenance("report", a));
    for input in &a.inputs {
        let value: Value = read_json(input)?;
        let mut comments = vec![own.clone()];
        if let Some(p) = value.get("provenance") {
            comments.push(provenance_line(p));
        }
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let csv_path = a.out_dir.join(format!("{stem}.csv"));
        let svg_path = a.out_dir.join(format!("{stem}.svg"));
        if value.get("distances").is_some() {
            let rep: DistanceReport = serde_json::from_value(value)?;
            write_text(&csv_path, &report::distance_csv(&rep, &comments))?;
            let svg = report::heatmap_svg(&rep.distances.values, "component distances", "S", "A", &comments);
            write_text(&svg_path, &svg)?;
        } else if value.get("coefficients").is_some() {
            let trace: AlignmentTrace = serde_json::from_value(value)?;
            write_text(&csv_path, &report::alignment_csv(&trace, &comments))?;
            let svg = report::heatmap_svg(&trace.coefficients, "final-separator coefficients", "L", "c", &comments);
            write_text(&svg_path, &svg)?;
        } else if value.get("pairs").is_some() {
            let pairs: ScorePairs = serde_json::from_value(value)?;
            write_text(&csv_path, &report::score_pairs_csv(&pairs, &comments))?;
        } else if value.get("top_k").is_some() {
            let result: DiagnosisResult = serde_json::from_value(value)?;
            write_text(&csv_path, &report::diagnosis_csv(&result, &comments))?;
        } else {
            bail!("{}: not a distances, align, correlate or diagnose result", input.display());
        }
        eprintln!("report: {}", input.display());
    }
    Ok(())
}
