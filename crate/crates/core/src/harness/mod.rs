//! Benchmark construction and execution: complexity-stratified sampling,
//! a resumable batch runner over a bounded worker pool, metric aggregation
//! (overall and per level), and report emission.

pub mod oracles;
mod report;
mod trace;

pub use report::{emit_report, MetricTable, ReportFormat};
pub use trace::{load_trace, persist_trace, validate_trace, TraceHeader, TRACE_SCHEMA_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, EpisodeOutcome, RunOptions};
use crate::env::{Catalog, Corpus, Environment, ShoppingEnv, WikiEnv};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::llm::{
    Backend, GenerationParams, RemoteBackend, RemoteConfig, ScriptedBackend, ScriptedPolicy,
    ScriptedRule,
};
use crate::orchestrator::{load_pool, run_bolaa_episode, BolaaPool};
use crate::prompting::Prompter;
use crate::types::{
    Architecture, EnvKind, EpisodeResult, LaaConfig, Task, Termination, Trajectory,
};

pub const SPEC_SCHEMA_VERSION: u32 = 1;
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    #[serde(default = "default_context_limit")]
    pub context_limit: u32,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_parse_failure_cap")]
    pub parse_failure_cap: u32,
}

fn default_max_steps() -> u32 {
    15
}
fn default_context_limit() -> u32 {
    2048
}
fn default_max_new_tokens() -> u32 {
    256
}
fn default_parse_failure_cap() -> u32 {
    3
}

impl Default for Limits {
    fn default() -> Limits {
        Limits {
            max_steps: default_max_steps(),
            context_limit: default_context_limit(),
            max_new_tokens: default_max_new_tokens(),
            parse_failure_cap: default_parse_failure_cap(),
        }
    }
}

/// An architecture under test: a canonical solo name, or a labor pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchRef {
    Named(String),
    Pool { pool: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    /// Per-task scripted policy that buys the ground-truth product.
    PurchaseOracle,
    /// Per-task scripted policy that finishes with the gold answer.
    AnswerOracle,
    /// Per-task scripted policy that buys a 2-of-3 attribute distractor.
    DistractorOracle,
    /// A fixed rule table shared by every episode.
    Scripted { rules: Vec<ScriptedRule>, default_response: String },
    Remote {
        #[serde(flatten)]
        config: RemoteConfig,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub schema_version: u32,
    pub env_kind: EnvKind,
    pub per_level_count: usize,
    pub levels: Vec<u32>,
    pub seed: u64,
    pub architectures: Vec<ArchRef>,
    pub backend: BackendSpec,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub universe: Option<PathBuf>,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
}

impl BenchmarkSpec {
    /// Loads and validates a spec file; relative fixture paths resolve
    /// against the spec file's directory.
    pub fn load(path: &Path) -> Result<BenchmarkSpec> {
        let raw = std::fs::read_to_string(path)?;
        let mut spec: BenchmarkSpec = serde_json::from_str(&raw)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&inner);
                }
            }
        };
        resolve(&mut spec.universe);
        resolve(&mut spec.catalog);
        resolve(&mut spec.corpus);
        for arch in &mut spec.architectures {
            if let ArchRef::Pool { pool } = arch {
                if pool.is_relative() {
                    *pool = base.join(&pool);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec schema_version {} (expected {SPEC_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.per_level_count == 0 {
            return Err(Error::Config("per_level_count must be at least 1".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("levels must be non-empty".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("levels must be strictly ascending".into()));
        }
        if self.architectures.is_empty() {
            return Err(Error::Config("at least one architecture is required".into()));
        }
        match (&self.backend, self.env_kind) {
            (BackendSpec::PurchaseOracle | BackendSpec::DistractorOracle, EnvKind::WikiQa) => {
                return Err(Error::Config("shopping oracles cannot drive wikiqa tasks".into()));
            }
            (BackendSpec::AnswerOracle, EnvKind::Shopping) => {
                return Err(Error::Config("the answer oracle cannot drive shopping tasks".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Draws exactly `per_level_count` tasks per requested level, without
/// replacement, by a seeded shuffle. Output order is level-ascending with
/// the shuffled order within each level; the same seed yields the same list.
pub fn sample_tasks(universe: &[Task], spec: &BenchmarkSpec) -> Result<Vec<Task>> {
    sample_stratified(universe, &spec.levels, spec.per_level_count, spec.seed)
}

pub fn sample_stratified(
    universe: &[Task],
    levels: &[u32],
    per_level_count: usize,
    seed: u64,
) -> Result<Vec<Task>> {
    let mut sampled = Vec::with_capacity(levels.len() * per_level_count);
    for &level in levels {
        let pool: Vec<&Task> = universe.iter().filter(|t| t.complexity == level).collect();
        if pool.len() < per_level_count {
            return Err(Error::Shortage { level, needed: per_level_count, available: pool.len() });
        }
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(crate::fnv1a(format!("{seed}:{level}").as_bytes()));
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(per_level_count) {
            sampled.push(pool[i].clone());
        }
    }
    Ok(sampled)
}

/// One finished episode, flattened for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub backend: String,
    pub arch: String,
    pub task_id: String,
    pub level: u32,
    pub reward: f64,
    pub recall: Option<u8>,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSeries {
    pub backend: String,
    pub arch: String,
    pub level: u32,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub reward: MetricTable,
    /// Absent when the metric is undefined for the environment.
    pub recall: Option<MetricTable>,
    pub per_level_reward: Vec<LevelSeries>,
    pub per_level_recall: Vec<LevelSeries>,
    pub aborts: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Cell mean = arithmetic mean of episode rewards; per-level series group by
/// task complexity. Every cell must aggregate the same task set.
pub fn aggregate(rows: &[EpisodeRow]) -> Result<ResultsTable> {
    if rows.is_empty() {
        return Err(Error::Validation("no episodes to aggregate".into()));
    }
    let mut rows: Vec<&EpisodeRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        (&a.backend, &a.arch, &a.task_id).cmp(&(&b.backend, &b.arch, &b.task_id))
    });

    let mut cell_tasks: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for row in &rows {
        cell_tasks
            .entry((row.backend.clone(), row.arch.clone()))
            .or_default()
            .insert(row.task_id.clone());
    }
    let first_set = cell_tasks.values().next().expect("non-empty");
    if cell_tasks.values().any(|s| s != first_set) {
        return Err(Error::Validation(
            "cells aggregate different task sets; the table would not be comparable".into(),
        ));
    }

    let mut reward = MetricTable::new("reward");
    let mut recall = MetricTable::new("recall");
    let mut per_level_reward = Vec::new();
    let mut per_level_recall = Vec::new();
    let mut aborts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();

    let mut cells: BTreeMap<(String, String), Vec<&EpisodeRow>> = BTreeMap::new();
    for row in &rows {
        cells.entry((row.backend.clone(), row.arch.clone())).or_default().push(row);
    }

    for ((backend, arch), cell_rows) in &cells {
        let n = cell_rows.len() as f64;
        let reward_mean = cell_rows.iter().map(|r| r.reward).sum::<f64>() / n;
        reward.insert(backend, arch, reward_mean);

        let recalls: Vec<f64> =
            cell_rows.iter().filter_map(|r| r.recall.map(f64::from)).collect();
        if !recalls.is_empty() {
            recall.insert(backend, arch, recalls.iter().sum::<f64>() / recalls.len() as f64);
        }

        let abort_count = cell_rows.iter().filter(|r| r.aborted).count();
        aborts.entry(backend.clone()).or_default().insert(arch.clone(), abort_count);

        let mut levels: BTreeMap<u32, Vec<&&EpisodeRow>> = BTreeMap::new();
        for r in cell_rows {
            levels.entry(r.level).or_default().push(r);
        }
        for (level, level_rows) in levels {
            let ln = level_rows.len();
            per_level_reward.push(LevelSeries {
                backend: backend.clone(),
                arch: arch.clone(),
                level,
                mean: level_rows.iter().map(|r| r.reward).sum::<f64>() / ln as f64,
                count: ln,
            });
            let level_recalls: Vec<f64> =
                level_rows.iter().filter_map(|r| r.recall.map(f64::from)).collect();
            if !level_recalls.is_empty() {
                per_level_recall.push(LevelSeries {
                    backend: backend.clone(),
                    arch: arch.clone(),
                    level,
                    mean: level_recalls.iter().sum::<f64>() / level_recalls.len() as f64,
                    count: level_recalls.len(),
                });
            }
        }
    }

    Ok(ResultsTable {
        reward,
        recall: if recall.is_empty() { None } else { Some(recall) },
        per_level_reward,
        per_level_recall,
        aborts,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub executed: usize,
    pub resumed: usize,
    pub aborted_episodes: usize,
    /// Aborts caused by the generation backend rather than the agent.
    pub backend_failures: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Reuse already-present trace files instead of re-running their episodes.
    pub resume: bool,
    /// Write each episode's rendered prompts to a sidecar file.
    pub debug_prompts: bool,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig { out_dir: out_dir.into(), workers: 4, resume: true, debug_prompts: false }
    }
}

#[derive(Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub table: ResultsTable,
    pub stats: RunStats,
}

enum ArchCell {
    Solo(Architecture),
    Pool(BolaaPool),
}

impl ArchCell {
    fn label(&self) -> String {
        match self {
            ArchCell::Solo(arch) => arch.name().to_string(),
            ArchCell::Pool(pool) => pool.name.clone(),
        }
    }
}

enum BackendHandle {
    Shared(Arc<dyn Backend>),
    PerTaskOracle,
}

struct RunContext {
    spec: BenchmarkSpec,
    catalog: Option<Arc<Catalog>>,
    corpus: Option<Arc<Corpus>>,
    prompter: Prompter,
    backend: BackendHandle,
    backend_label: String,
    traces_dir: PathBuf,
    debug_prompts: bool,
}

impl RunContext {
    fn make_env(&self) -> Box<dyn Environment> {
        match self.spec.env_kind {
            EnvKind::Shopping => {
                Box::new(ShoppingEnv::new(self.catalog.clone().expect("catalog loaded")))
            }
            EnvKind::WikiQa => Box::new(WikiEnv::new(self.corpus.clone().expect("corpus loaded"))),
        }
    }

    fn make_backend(&self, task: &Task) -> Result<Arc<dyn Backend>> {
        match &self.backend {
            BackendHandle::Shared(backend) => Ok(backend.clone()),
            BackendHandle::PerTaskOracle => {
                let policy = match self.spec.backend {
                    BackendSpec::PurchaseOracle => oracles::purchase_oracle(
                        task,
                        self.catalog.as_ref().expect("catalog loaded"),
                    )?,
                    BackendSpec::DistractorOracle => oracles::distractor_oracle(
                        task,
                        self.catalog.as_ref().expect("catalog loaded"),
                    )?,
                    BackendSpec::AnswerOracle => oracles::answer_oracle(
                        task,
                        self.corpus.as_ref().expect("corpus loaded"),
                    )?,
                    _ => unreachable!("shared backends are constructed once"),
                };
                Ok(Arc::new(ScriptedBackend::new(policy)))
            }
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            parse_failure_cap: self.spec.limits.parse_failure_cap,
            generation: GenerationParams {
                max_new_tokens: self.spec.limits.max_new_tokens,
                ..GenerationParams::default()
            },
            capture_prompts: self.debug_prompts,
            seed: self.spec.seed,
        }
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    env_kind: EnvKind,
    label: &'a str,
    limits: &'a Limits,
    backend: &'a BackendSpec,
    seed: u64,
    /// Pool identity: selection policy plus (id, specialty, flags) per agent.
    pool: Option<(String, Vec<(String, String, bool, bool, bool)>)>,
}

fn cell_fingerprint(spec: &BenchmarkSpec, cell: &ArchCell) -> u64 {
    let pool = match cell {
        ArchCell::Solo(_) => None,
        ArchCell::Pool(p) => Some((
            format!("{:?}", p.selection),
            p.agents
                .iter()
                .map(|a| {
                    (
                        a.agent_id.clone(),
                        a.specialty.keyword().to_string(),
                        a.config.fewshot,
                        a.config.think,
                        a.config.plan,
                    )
                })
                .collect(),
        )),
    };
    let input = FingerprintInput {
        env_kind: spec.env_kind,
        label: &cell.label(),
        limits: &spec.limits,
        backend: &spec.backend,
        seed: spec.seed,
        pool,
    };
    crate::fnv1a(serde_json::to_string(&input).expect("fingerprint serializes").as_bytes())
}

fn trace_filename(label: &str, fingerprint: u64, task_id: &str) -> String {
    format!("{}-{fingerprint:016x}--{}.jsonl", sanitize(label), sanitize(task_id))
}

fn backend_display_name(spec: &BackendSpec) -> String {
    match spec {
        BackendSpec::PurchaseOracle => "purchase-oracle".to_string(),
        BackendSpec::AnswerOracle => "answer-oracle".to_string(),
        BackendSpec::DistractorOracle => "distractor-oracle".to_string(),
        BackendSpec::Scripted { .. } => "scripted".to_string(),
        BackendSpec::Remote { config } => format!("remote:{}", config.model),
    }
}

fn build_cells(spec: &BenchmarkSpec) -> Result<Vec<ArchCell>> {
    let mut cells = Vec::new();
    let mut labels = BTreeSet::new();
    for arch in &spec.architectures {
        let cell = match arch {
            ArchRef::Named(name) => {
                let arch = Architecture::from_name(name).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown architecture '{name}' (expected one of ZS, ZST, ReAct, PlanAct, PlanReAct, or a pool reference)"
                    ))
                })?;
                ArchCell::Solo(arch)
            }
            ArchRef::Pool { pool } => {
                let loaded = load_pool(
                    pool,
                    pool.file_stem().and_then(|s| s.to_str()).unwrap_or("BOLAA"),
                    spec.limits.max_steps,
                    spec.limits.context_limit,
                )?;
                ArchCell::Pool(loaded)
            }
        };
        if !labels.insert(cell.label()) {
            return Err(Error::Config(format!("duplicate architecture label {}", cell.label())));
        }
        cells.push(cell);
    }
    Ok(cells)
}

fn abort_result(task: &Task) -> EpisodeResult {
    EpisodeResult {
        task_id: task.id.clone(),
        reward: 0.0,
        recall: matches!(task.env_kind, EnvKind::Shopping).then_some(0),
        steps_used: 0,
        terminated: Termination::Aborted,
        trajectory_ref: None,
    }
}

struct JobOutcome {
    row: EpisodeRow,
    executed: bool,
    backend_failure: Option<String>,
}

fn execute_cell_task(
    ctx: &RunContext,
    cell: &ArchCell,
    task: &Task,
    resume: bool,
) -> Result<JobOutcome> {
    let label = cell.label();
    let fingerprint = cell_fingerprint(&ctx.spec, cell);
    let filename = trace_filename(&label, fingerprint, &task.id);
    let path = ctx.traces_dir.join(&filename);

    if resume && path.exists() {
        match load_trace(&path) {
            Ok((header, _trajectory, result)) if header.config_name == label => {
                let row = EpisodeRow {
                    backend: ctx.backend_label.clone(),
                    arch: label,
                    task_id: task.id.clone(),
                    level: task.complexity,
                    reward: result.reward,
                    recall: result.recall,
                    aborted: result.terminated == Termination::Aborted,
                };
                return Ok(JobOutcome { row, executed: false, backend_failure: None });
            }
            Ok(_) | Err(_) => {
                log::warn!("re-running {filename}: existing trace is stale or corrupt");
            }
        }
    }

    let backend = ctx.make_backend(task)?;
    let mut env = ctx.make_env();
    let options = ctx.run_options();
    let outcome: Result<EpisodeOutcome> = match cell {
        ArchCell::Solo(arch) => {
            let config = LaaConfig::canonical(
                *arch,
                ctx.spec.env_kind,
                ctx.spec.limits.max_steps,
                ctx.spec.limits.context_limit,
            );
            run_episode(&config, task, env.as_mut(), backend.as_ref(), &ctx.prompter, &options)
        }
        ArchCell::Pool(pool) => {
            run_bolaa_episode(pool, task, env.as_mut(), backend.as_ref(), &ctx.prompter, &options)
        }
    };

    let (trajectory, mut result, prompts, backend_failure) = match outcome {
        Ok(outcome) => (outcome.trajectory, outcome.result, outcome.prompts, outcome.backend_failure),
        Err(err) => {
            // an episode failure is recorded as a zero-reward abort, never a
            // crashed batch
            log::error!("episode {label}/{} failed: {err}", task.id);
            let mut trajectory = Trajectory::new(&task.id);
            trajectory.finalize(Termination::Aborted);
            (trajectory, abort_result(task), Vec::new(), None)
        }
    };
    result.trajectory_ref = Some(filename.clone());
    persist_trace(&path, &label, ctx.spec.seed, &trajectory, &result)?;

    if ctx.debug_prompts && !prompts.is_empty() {
        let sidecar = path.with_extension("prompts.jsonl");
        let mut buffer = String::new();
        for p in &prompts {
            buffer.push_str(&serde_json::to_string(&serde_json::json!({
                "step_index": p.step_index,
                "purpose": format!("{:?}", p.purpose),
                "text": p.text,
            }))?);
            buffer.push('\n');
        }
        std::fs::write(sidecar, buffer)?;
    }

    Ok(JobOutcome {
        row: EpisodeRow {
            backend: ctx.backend_label.clone(),
            arch: label,
            task_id: task.id.clone(),
            level: task.complexity,
            reward: result.reward,
            recall: result.recall,
            aborted: result.terminated == Termination::Aborted,
        },
        executed: true,
        backend_failure,
    })
}

/// Runs every (architecture x task) episode, persisting one trace file per
/// episode. With `resume` on, valid existing traces are loaded instead of
/// re-run, so interrupted batches can finish cheaply.
pub fn run_benchmark(spec: &BenchmarkSpec, run: &RunConfig) -> Result<(ResultsTable, RunStats)> {
    spec.validate()?;

    let universe = match &spec.universe {
        Some(path) => fixtures::load_tasks(path)?,
        None => fixtures::builtin_tasks(spec.env_kind),
    };
    let tasks = sample_tasks(&universe, spec)?;

    let catalog = match spec.env_kind {
        EnvKind::Shopping => Some(Arc::new(match &spec.catalog {
            Some(path) => Catalog::load(path)?,
            None => fixtures::builtin_catalog(),
        })),
        EnvKind::WikiQa => None,
    };
    let corpus = match spec.env_kind {
        EnvKind::WikiQa => Some(Arc::new(match &spec.corpus {
            Some(path) => Corpus::load(path)?,
            None => fixtures::builtin_corpus(),
        })),
        EnvKind::Shopping => None,
    };

    let backend = match &spec.backend {
        BackendSpec::Scripted { rules, default_response } => BackendHandle::Shared(Arc::new(
            ScriptedBackend::new(ScriptedPolicy::new(rules.clone(), default_response.clone())),
        )),
        BackendSpec::Remote { config } => {
            let config = config.clone().with_env_overrides()?;
            BackendHandle::Shared(Arc::new(RemoteBackend::new(config)?))
        }
        _ => BackendHandle::PerTaskOracle,
    };

    let traces_dir = run.out_dir.join("traces");
    std::fs::create_dir_all(&traces_dir)?;

    let ctx = RunContext {
        spec: spec.clone(),
        catalog,
        corpus,
        prompter: Prompter::builtin(spec.env_kind),
        backend,
        backend_label: backend_display_name(&spec.backend),
        traces_dir,
        debug_prompts: run.debug_prompts,
    };
    let cells = build_cells(spec)?;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..tasks.len()).map(move |t| (c, t)))
        .collect();
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<Result<JobOutcome>>> = Mutex::new(Vec::with_capacity(jobs.len()));

    std::thread::scope(|scope| {
        for _ in 0..run.workers.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (c, t) = jobs[i];
                let row = execute_cell_task(&ctx, &cells[c], &tasks[t], run.resume);
                collected.lock().unwrap().push(row);
            });
        }
    });

    let mut rows = Vec::with_capacity(jobs.len());
    let mut stats = RunStats::default();
    let mut last_backend_failure = None;
    for item in collected.into_inner().unwrap() {
        let outcome = item?;
        if outcome.executed {
            stats.executed += 1;
        } else {
            stats.resumed += 1;
        }
        if outcome.row.aborted {
            stats.aborted_episodes += 1;
        }
        if let Some(cause) = outcome.backend_failure {
            stats.backend_failures += 1;
            last_backend_failure = Some(cause);
        }
        rows.push(outcome.row);
    }

    // individual aborts are data; a backend that failed every executed
    // episode means the run itself could not happen
    if stats.executed > 0 && stats.backend_failures == stats.executed {
        return Err(Error::Backend(format!(
            "every executed episode failed against the backend; last cause: {}",
            last_backend_failure.unwrap_or_default()
        )));
    }

    let mut table = aggregate(&rows)?;
    let declared_order: Vec<String> = cells.iter().map(|c| c.label()).collect();
    table.reward.reorder_cols(&declared_order);
    if let Some(recall) = &mut table.recall {
        recall.reorder_cols(&declared_order);
    }
    write_outputs(&run.out_dir, &table, &stats)?;
    Ok((table, stats))
}

fn write_outputs(out_dir: &Path, table: &ResultsTable, stats: &RunStats) -> Result<()> {
    let file = ResultsFile {
        schema_version: RESULTS_SCHEMA_VERSION,
        table: table.clone(),
        stats: stats.clone(),
    };
    std::fs::write(out_dir.join("results.json"), serde_json::to_string_pretty(&file)?)?;
    std::fs::write(
        out_dir.join("per_level_reward.csv"),
        level_series_csv(&table.per_level_reward),
    )?;
    if !table.per_level_recall.is_empty() {
        std::fs::write(
            out_dir.join("per_level_recall.csv"),
            level_series_csv(&table.per_level_recall),
        )?;
    }
    Ok(())
}

fn level_series_csv(series: &[LevelSeries]) -> String {
    let mut out = String::from("backend,arch,level,mean,count\n");
    let mut sorted: Vec<&LevelSeries> = series.iter().collect();
    sorted.sort_by(|a, b| (&a.backend, &a.arch, a.level).cmp(&(&b.backend, &b.arch, b.level)));
    for s in sorted {
        out.push_str(&format!("{},{},{},{:.6},{}\n", s.backend, s.arch, s.level, s.mean, s.count));
    }
    out
}

pub fn load_results(out_dir: &Path) -> Result<ResultsFile> {
    let raw = std::fs::read_to_string(out_dir.join("results.json"))?;
    let file: ResultsFile = serde_json::from_str(&raw)?;
    if file.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "unsupported results schema_version {}",
            file.schema_version
        )));
    }
    Ok(file)
}
