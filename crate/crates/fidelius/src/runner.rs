//! End-to-end experiment orchestration: configuration, method execution
//! with bounded fan-out, metric computation, sweeps, and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::backend::{
    BackendError, CachedBackend, DecodeParams, HttpBackend, HttpBackendConfig,
    LanguageModelBackend, MockBackend, MockModelSpec,
};
use crate::baselines::{
    run_ling, run_token, run_verb, sampled_record_from_distribution, BaselineError,
};
use crate::confidence::{
    ours_record_from_parts, ConfidenceError, ConfidenceRecord, Method, OursVariant,
};
use crate::dataset::{load_question_set, DatasetError, McqaItem, QuestionSet};
use crate::fidelity::{fidelity_scores, score_chains, FidelityError, FidelityScores};
use crate::metrics::{compute_report, MetricReport, MetricsError};
use crate::report::{
    compare_table, group_by_method, read_run, render_diagram, write_run, CompareTable,
    ReportError, RunHeader, SCHEMA_VERSION,
};
use crate::sampler::{sample_answers, AnswerDistribution, SamplerError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config field '{field}': {message}")]
    Config { field: &'static str, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("run aborted: {message}{}", partial_run_file.as_ref().map(|p| format!(" (partial records in {})", p.display())).unwrap_or_default())]
    Aborted {
        message: String,
        partial_run_file: Option<PathBuf>,
    },
}

impl From<SamplerError> for RunError {
    fn from(e: SamplerError) -> Self {
        RunError::Confidence(e.into())
    }
}

/// Which model to talk to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// Offline deterministic mock. Without a spec path the bundled
    /// synthetic mock is used.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<PathBuf>,
    },
    Http { base_url: String, model: String },
}

impl BackendConfig {
    pub fn is_mock(&self) -> bool {
        matches!(self, BackendConfig::Mock { .. })
    }
}

fn default_k() -> u32 {
    10
}
fn default_tau() -> f64 {
    2.0
}
fn default_temperature() -> f64 {
    1.0
}
fn default_top_p() -> f64 {
    1.0
}
fn default_bins() -> usize {
    10
}
fn default_concurrency() -> usize {
    4
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Full experiment configuration. A JSON document with the same shape can be
/// loaded from disk; command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub backend: BackendConfig,
    pub methods: Vec<Method>,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let err = |field, message: String| Err(RunError::Config { field, message });
        if self.methods.is_empty() {
            return err("methods", "at least one method is required".into());
        }
        if self.k == 0 {
            return err("k", "must be >= 1".into());
        }
        if self.tau.is_nan() || self.tau <= 1.0 {
            return err("tau", format!("must be > 1, got {}", self.tau));
        }
        if self.bins < 2 {
            return err("bins", format!("must be >= 2, got {}", self.bins));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return err("top_p", format!("must be in (0, 1], got {}", self.top_p));
        }
        if self.methods.iter().any(Method::needs_sampling)
            && (self.temperature.is_nan() || self.temperature <= 0.0)
        {
            return err(
                "temperature",
                format!("must be > 0 for sampling methods, got {}", self.temperature),
            );
        }
        if self.concurrency == 0 {
            return err("concurrency", "must be >= 1".into());
        }
        Ok(())
    }

    /// Requested methods in canonical order, deduplicated.
    pub fn ordered_methods(&self) -> Vec<Method> {
        Method::ALL
            .iter()
            .filter(|m| self.methods.contains(m))
            .copied()
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config {
            field: "config",
            message: format!("reading {}: {e}", path.display()),
        })?;
        serde_json::from_str(&text).map_err(|e| RunError::Config {
            field: "config",
            message: format!("parsing {}: {e}", path.display()),
        })
    }
}

/// Build the configured backend, wrapping it in the response cache when a
/// cache directory is set.
pub fn build_backend(config: &RunConfig) -> Result<Arc<dyn LanguageModelBackend>, RunError> {
    let inner: Arc<dyn LanguageModelBackend> = match &config.backend {
        BackendConfig::Mock { spec } => {
            let spec = match spec {
                Some(path) => MockModelSpec::load(path)?,
                None => crate::synthetic::synthetic_small().1,
            };
            Arc::new(MockBackend::new(spec)?)
        }
        BackendConfig::Http { base_url, model } => {
            Arc::new(HttpBackend::new(HttpBackendConfig::new(base_url, model))?)
        }
    };
    match &config.cache_dir {
        Some(dir) => Ok(Arc::new(CachedBackend::new(inner, dir)?)),
        None => Ok(inner),
    }
}

fn run_timestamp(config: &RunConfig) -> u64 {
    if let Ok(value) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(parsed) = value.trim().parse() {
            return parsed;
        }
    }
    if config.backend.is_mock() {
        // mock runs are reproducible end to end; pin the header timestamp
        0
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutcome {
    pub header: RunHeader,
    pub records: Vec<ConfidenceRecord>,
    pub reports: Vec<MetricReport>,
    pub table: CompareTable,
    /// Items that yielded at least one unusable record.
    pub unusable_items: usize,
    pub run_file: PathBuf,
    pub output_dir: PathBuf,
}

type ItemResult = Result<Vec<ConfidenceRecord>, RunError>;

/// Per-item intermediate shared by the combined method and its variants.
struct ItemComputation {
    dist: Option<AnswerDistribution>,
    scores: Option<FidelityScores>,
}

/// Everything one worker needs to process an item.
struct RunPlan<'a> {
    methods: &'a [Method],
    k: u32,
    tau: f64,
    temperature: f64,
    sample_params: DecodeParams,
}

fn compute_item_parts(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    plan: &RunPlan<'_>,
) -> Result<ItemComputation, RunError> {
    let needs_dist = plan.methods.iter().any(Method::needs_sampling);
    let needs_chains = plan
        .methods
        .iter()
        .any(|m| matches!(m, Method::Ours | Method::OursNoU | Method::OursNoF));
    let dist = if needs_dist {
        match sample_answers(item, backend, plan.k, &plan.sample_params) {
            Ok(dist) => Some(dist),
            Err(SamplerError::Unusable { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let scores = match (&dist, needs_chains) {
        (Some(dist), true) => match fidelity_scores(item, dist, backend, plan.tau) {
            Ok(scores) => Some(scores),
            Err(FidelityError::Unusable { .. }) => None,
            Err(e) => return Err(e.into()),
        },
        _ => None,
    };
    Ok(ItemComputation { dist, scores })
}

fn process_item(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    plan: &RunPlan<'_>,
) -> ItemResult {
    let parts = compute_item_parts(item, backend, plan)?;
    let mut records = Vec::with_capacity(plan.methods.len());
    for method in plan.methods {
        let record = match method {
            Method::Ours | Method::OursNoU | Method::OursNoF => {
                let variant = match method {
                    Method::Ours => OursVariant::Full,
                    Method::OursNoU => OursVariant::NoUncertainty,
                    _ => OursVariant::NoFidelity,
                };
                match (&parts.dist, &parts.scores) {
                    (Some(dist), Some(scores)) => {
                        ours_record_from_parts(item, dist, scores, variant)?
                    }
                    _ => ConfidenceRecord::unusable(&item.id, *method),
                }
            }
            Method::Sampled => match &parts.dist {
                Some(dist) => sampled_record_from_distribution(item, dist),
                None => ConfidenceRecord::unusable(&item.id, Method::Sampled),
            },
            Method::Verb => run_verb(item, backend, &plan.sample_params)?,
            Method::Ling => run_ling(item, backend, &plan.sample_params)?,
            Method::Token => run_token(item, backend, plan.temperature)?,
        };
        records.push(record);
    }
    Ok(records)
}

/// Fan items out over a bounded worker pool. Per-item work is internally
/// sequential, so results are deterministic regardless of scheduling; they
/// are collected back in item order.
fn run_items(
    items: &[McqaItem],
    backend: &dyn LanguageModelBackend,
    plan: &RunPlan<'_>,
    concurrency: usize,
) -> Vec<ItemResult> {
    let next = AtomicUsize::new(0);
    let aborted = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<ItemResult>>> =
        (0..items.len()).map(|_| Mutex::new(None)).collect();
    let workers = concurrency.min(items.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if aborted.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= items.len() {
                    break;
                }
                let outcome = process_item(&items[index], backend, plan);
                if outcome.is_err() {
                    aborted.store(true, Ordering::SeqCst);
                }
                *slots[index].lock().expect("result slot") = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner().expect("result slot").unwrap_or_else(|| {
                Err(RunError::Aborted {
                    message: "item skipped after an earlier failure".into(),
                    partial_run_file: None,
                })
            })
        })
        .collect()
}

fn make_header(config: &RunConfig, set: &QuestionSet, backend: &dyn LanguageModelBackend) -> RunHeader {
    RunHeader {
        schema_version: SCHEMA_VERSION,
        backend_id: backend.id().to_string(),
        model: backend.model_name().to_string(),
        dataset: set.name.clone(),
        methods: config.ordered_methods(),
        k: config.k,
        tau: config.tau,
        temperature: config.temperature,
        top_p: config.top_p,
        bins: config.bins,
        seed: config.seed,
        timestamp_unix: run_timestamp(config),
    }
}

/// Execute a full run against an already-built backend and dataset.
pub fn execute_run_with(
    config: &RunConfig,
    set: &QuestionSet,
    backend: &dyn LanguageModelBackend,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let methods = config.ordered_methods();
    if methods.contains(&Method::Token) && !backend.supports_label_logprobs() {
        return Err(BackendError::Capability(
            "token method requires label logprobs".into(),
        )
        .into());
    }
    std::fs::create_dir_all(&config.output_dir).map_err(|e| RunError::Config {
        field: "output_dir",
        message: format!("{}: {e}", config.output_dir.display()),
    })?;
    let plan = RunPlan {
        methods: &methods,
        k: config.k,
        tau: config.tau,
        temperature: config.temperature,
        sample_params: DecodeParams::sample(config.temperature, config.top_p, Some(config.seed)),
    };
    let outcomes = run_items(&set.items, backend, &plan, config.concurrency);

    // regroup records method-major so the run file reads in method blocks;
    // on failure keep the contiguous prefix of completed items
    let mut per_method: BTreeMap<Method, Vec<ConfidenceRecord>> = BTreeMap::new();
    let mut failure: Option<RunError> = None;
    let mut completed_items = 0usize;
    let mut unusable_items = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(records) => {
                if failure.is_none() {
                    completed_items += 1;
                    if records.iter().any(|r| !r.usable()) {
                        unusable_items += 1;
                    }
                    for record in records {
                        per_method.entry(record.method).or_default().push(record);
                    }
                }
            }
            Err(e) => {
                let placeholder = matches!(&e, RunError::Aborted { .. });
                match &failure {
                    None => failure = Some(e),
                    // prefer the real cause over a skipped-item placeholder
                    Some(RunError::Aborted { .. }) if !placeholder => failure = Some(e),
                    Some(_) => {}
                }
            }
        }
    }
    let records: Vec<ConfidenceRecord> = methods
        .iter()
        .filter_map(|m| per_method.get(m))
        .flatten()
        .cloned()
        .collect();

    let header = make_header(config, set, backend);
    let run_file = config.output_dir.join("run_records.jsonl");
    write_run(&records, &header, &run_file)?;

    if let Some(error) = failure {
        log::error!(
            "aborting after {completed_items}/{} items: {error}",
            set.items.len()
        );
        return Err(RunError::Aborted {
            message: error.to_string(),
            partial_run_file: Some(run_file),
        });
    }

    // metrics always come from the persisted file, so offline recomputation
    // is bitwise identical to the run-time reports
    let (_, reports, table) = metrics_from_file(&run_file, None, Some(&config.output_dir))?;
    Ok(RunOutcome {
        header,
        records,
        reports,
        table,
        unusable_items,
        run_file,
        output_dir: config.output_dir.clone(),
    })
}

/// Load the dataset, build the backend, and execute a full run.
pub fn execute_run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let set = load_question_set(&config.dataset)?;
    let backend = build_backend(config)?;
    execute_run_with(config, &set, backend.as_ref())
}

/// Recompute reports and diagrams from a persisted run-record file. With an
/// output directory, writes `metrics_<method>.json`, per-method diagrams,
/// and the comparison tables.
pub fn metrics_from_file(
    run_file: &Path,
    bins: Option<usize>,
    output_dir: Option<&Path>,
) -> Result<(RunHeader, Vec<MetricReport>, CompareTable), RunError> {
    let (header, records) = read_run(run_file)?;
    let bins = bins.unwrap_or(header.bins);
    let groups = group_by_method(&records);
    let mut reports = Vec::new();
    for method in &header.methods {
        let Some(group) = groups.get(method) else {
            continue;
        };
        let (report, diagram) = compute_report(*method, group, bins)?;
        if let Some(dir) = output_dir {
            let metrics_path = dir.join(format!("metrics_{}.json", method.as_str()));
            let body = serde_json::to_string(&report).expect("serialize report");
            std::fs::write(&metrics_path, format!("{body}\n")).map_err(|source| {
                ReportError::Io {
                    path: metrics_path.display().to_string(),
                    source,
                }
            })?;
            render_diagram(&diagram, &dir.join(format!("diagram_{}", method.as_str())))?;
        }
        reports.push(report);
    }
    let table = compare_table(&reports)?;
    if let Some(dir) = output_dir {
        for (name, body) in [("comparison.txt", &table.text), ("comparison.csv", &table.csv)] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| ReportError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    Ok((header, reports, table))
}

/// One row of a tau sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TauSweepRow {
    pub tau: f64,
    pub report: MetricReport,
}

/// Re-score cached chains under each tau. Chains are elicited exactly once;
/// tau only changes the position weights, so no new model calls are made.
pub fn sweep_tau(
    config: &RunConfig,
    set: &QuestionSet,
    backend: &dyn LanguageModelBackend,
    taus: &[f64],
) -> Result<Vec<TauSweepRow>, RunError> {
    config.validate()?;
    if taus.is_empty() {
        return Err(RunError::Config {
            field: "taus",
            message: "at least one tau is required".into(),
        });
    }
    for tau in taus {
        if tau.is_nan() || *tau <= 1.0 {
            return Err(RunError::Config {
                field: "taus",
                message: format!("every tau must be > 1, got {tau}"),
            });
        }
    }
    let plan = RunPlan {
        methods: &[Method::Ours],
        k: config.k,
        tau: taus[0],
        temperature: config.temperature,
        sample_params: DecodeParams::sample(config.temperature, config.top_p, Some(config.seed)),
    };
    let mut parts = Vec::with_capacity(set.items.len());
    for item in &set.items {
        parts.push(compute_item_parts(item, backend, &plan)?);
    }
    let mut rows = Vec::with_capacity(taus.len());
    for tau in taus {
        let mut records = Vec::with_capacity(set.items.len());
        for (item, part) in set.items.iter().zip(&parts) {
            let record = match (&part.dist, &part.scores) {
                (Some(dist), Some(scores)) => {
                    let rescored = FidelityScores {
                        item_id: scores.item_id.clone(),
                        per_answer: score_chains(&scores.chains, *tau)?,
                        chains: scores.chains.clone(),
                    };
                    ours_record_from_parts(item, dist, &rescored, OursVariant::Full)?
                }
                _ => ConfidenceRecord::unusable(&item.id, Method::Ours),
            };
            records.push(record);
        }
        let (report, _) = compute_report(Method::Ours, &records, config.bins)?;
        rows.push(TauSweepRow { tau: *tau, report });
    }
    Ok(rows)
}

/// One temperature's worth of a temperature sweep.
#[derive(Debug)]
pub struct TempSweepRow {
    pub temperature: f64,
    pub reports: Vec<MetricReport>,
    pub records: Vec<ConfidenceRecord>,
}

/// Re-run temperature-dependent methods at each temperature. Chain
/// elicitation stays greedy, so chains are identical across temperatures;
/// with a cache configured they are also replayed rather than re-queried.
pub fn sweep_temperature(
    config: &RunConfig,
    set: &QuestionSet,
    backend: &dyn LanguageModelBackend,
    temps: &[f64],
) -> Result<Vec<TempSweepRow>, RunError> {
    config.validate()?;
    if temps.is_empty() {
        return Err(RunError::Config {
            field: "temps",
            message: "at least one temperature is required".into(),
        });
    }
    for temp in temps {
        if temp.is_nan() || *temp <= 0.0 {
            return Err(RunError::Config {
                field: "temps",
                message: format!("every temperature must be > 0, got {temp}"),
            });
        }
    }
    let methods = config.ordered_methods();
    let mut rows = Vec::with_capacity(temps.len());
    for temp in temps {
        let plan = RunPlan {
            methods: &methods,
            k: config.k,
            tau: config.tau,
            temperature: *temp,
            sample_params: DecodeParams::sample(*temp, config.top_p, Some(config.seed)),
        };
        let outcomes = run_items(&set.items, backend, &plan, config.concurrency);
        let mut records = Vec::new();
        for outcome in outcomes {
            records.extend(outcome.map_err(|e| RunError::Aborted {
                message: e.to_string(),
                partial_run_file: None,
            })?);
        }
        let groups = group_by_method(&records);
        let mut reports = Vec::new();
        for method in &methods {
            if let Some(group) = groups.get(method) {
                let (report, _) = compute_report(*method, group, config.bins)?;
                reports.push(report);
            }
        }
        rows.push(TempSweepRow {
            temperature: *temp,
            reports,
            records,
        });
    }
    Ok(rows)
}

/// Worst-case model-call preview for a run, printed by `--dry-run` before
/// anything goes over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallEstimate {
    pub items: usize,
    /// K draws per item, shared by the sampled and combined methods.
    pub sampling_calls: u64,
    /// Upper bound on chain queries: M chains of at most M steps per item.
    pub chain_call_upper_bound: u64,
    /// One greedy call per item per single-shot method (verb/ling/token).
    pub single_calls: u64,
    pub total_upper_bound: u64,
}

pub fn estimate_calls(config: &RunConfig, set: &QuestionSet) -> CallEstimate {
    let items = set.items.len();
    let methods = config.ordered_methods();
    let needs_sampling = methods.iter().any(Method::needs_sampling);
    let needs_chains = methods
        .iter()
        .any(|m| matches!(m, Method::Ours | Method::OursNoU | Method::OursNoF));
    let sampling_calls = if needs_sampling {
        items as u64 * u64::from(config.k)
    } else {
        0
    };
    let chain_call_upper_bound = if needs_chains {
        set.items
            .iter()
            .map(|i| (i.option_count() * i.option_count()) as u64)
            .sum()
    } else {
        0
    };
    let single_methods = methods
        .iter()
        .filter(|m| matches!(m, Method::Verb | Method::Ling | Method::Token))
        .count() as u64;
    let single_calls = single_methods * items as u64;
    CallEstimate {
        items,
        sampling_calls,
        chain_call_upper_bound,
        single_calls,
        total_upper_bound: sampling_calls + chain_call_upper_bound + single_calls,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock_config(dir: &Path) -> RunConfig {
        RunConfig {
            dataset: PathBuf::from("unused.jsonl"),
            backend: BackendConfig::Mock { spec: None },
            methods: vec![Method::Ours, Method::Sampled],
            k: 10,
            tau: 2.0,
            temperature: 1.0,
            top_p: 1.0,
            bins: 10,
            seed: 7,
            cache_dir: None,
            output_dir: dir.to_path_buf(),
            concurrency: 4,
        }
    }

    #[test]
    fn validation_names_the_offending_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = mock_config(dir.path());
        config.methods.clear();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("methods"), "{err}");

        let mut config = mock_config(dir.path());
        config.tau = 1.0;
        assert!(config.validate().unwrap_err().to_string().contains("tau"));

        let mut config = mock_config(dir.path());
        config.temperature = 0.0;
        assert!(
            config.validate().unwrap_err().to_string().contains("temperature")
        );

        let mut config = mock_config(dir.path());
        config.bins = 1;
        assert!(config.validate().unwrap_err().to_string().contains("bins"));
    }

    #[test]
    fn config_round_trips_through_json_with_defaults() {
        let text = r#"{
            "dataset": "fixtures/synthetic_small.jsonl",
            "backend": {"kind": "mock"},
            "methods": ["ours", "sampled"]
        }"#;
        let config: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.k, 10);
        assert!((config.tau - 2.0).abs() < 1e-12);
        assert_eq!(config.bins, 10);
        assert_eq!(config.concurrency, 4);
        assert!(config.backend.is_mock());
    }

    #[test]
    fn ordered_methods_are_canonical_and_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = mock_config(dir.path());
        config.methods = vec![Method::Sampled, Method::Ours, Method::Sampled];
        assert_eq!(config.ordered_methods(), vec![Method::Ours, Method::Sampled]);
    }

    #[test]
    fn estimate_counts_sampling_chains_and_singles() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = mock_config(dir.path());
        config.methods = vec![Method::Ours, Method::Sampled, Method::Verb, Method::Token];
        let (set, _) = crate::synthetic::synthetic_small();
        let estimate = estimate_calls(&config, &set);
        assert_eq!(estimate.items, 24);
        assert_eq!(estimate.sampling_calls, 240);
        assert_eq!(estimate.chain_call_upper_bound, 24 * 16);
        assert_eq!(estimate.single_calls, 48);
        assert_eq!(
            estimate.total_upper_bound,
            estimate.sampling_calls + estimate.chain_call_upper_bound + estimate.single_calls
        );
    }

    #[test]
    fn token_without_logprob_support_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = mock_config(dir.path());
        config.methods = vec![Method::Token];
        let (set, _) = crate::synthetic::synthetic_small();
        let backend = crate::backend::ScriptedBackend::new(Vec::<String>::new());
        let err = execute_run_with(&config, &set, &backend).unwrap_err();
        assert!(matches!(
            err,
            RunError::Backend(BackendError::Capability(_))
        ));
    }
}
