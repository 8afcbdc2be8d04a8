//! Sweeps over (optimizer, activation, learning rate, p) cells, aggregation
//! into table cells, best-learning-rate reductions and report rendering.
//!
//! A cell's value is the rounded mean epoch count over its successful trials,
//! or 0 when fewer than `min_successes` trials succeeded.
//!
//! Completed trials are recorded in a JSON-lines manifest so an interrupted
//! sweep can be resumed; trials whose exact configuration already appears in
//! the manifest are not rerun.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::dataset::{is_prime, NoiseMode, DEFAULT_NOISE_SIGMA};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::InitBias;
use crate::optimizers::OptimizerKind;
use crate::seed::derive_seed;
use crate::trainer::{run_trial, BatchSize, FailureKind, TrainConfig, TrialOutcome, TrialStatus};

pub const DEFAULT_LRS: [f64; 4] = [0.01, 0.1, 1.0, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub primes: Vec<usize>,
    pub optimizers: Vec<OptimizerKind>,
    pub activations: Vec<ActivationKind>,
    pub lrs: Vec<f64>,
    pub trials_per_cell: usize,
    pub min_successes: usize,
    pub base_seed: u64,
    /// Worker threads; `None` means all cores.
    pub jobs: Option<usize>,
    pub max_epochs: u32,
    pub batch_size: BatchSize,
    pub noise_sigma: f64,
    pub noise_mode: NoiseMode,
    pub hidden_width: Option<usize>,
    pub init_sigma: f64,
    pub init_bias: InitBias,
    pub allow_composite: bool,
    /// Stride for the accuracy history kept in trial records; 0 drops it.
    pub history_stride: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            primes: Vec::new(),
            optimizers: Vec::new(),
            activations: Vec::new(),
            lrs: DEFAULT_LRS.to_vec(),
            trials_per_cell: 10,
            min_successes: 5,
            base_seed: 0,
            jobs: None,
            max_epochs: crate::trainer::DEFAULT_MAX_EPOCHS,
            batch_size: BatchSize::default(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            noise_mode: NoiseMode::default(),
            hidden_width: None,
            init_sigma: 1.0,
            init_bias: InitBias::Gaussian,
            allow_composite: false,
            history_stride: 0,
        }
    }
}

/// On-disk sweep configuration (TOML). Every key is optional except the three
/// axis lists; see `configs/full.toml` at the repository root.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    primes: Vec<usize>,
    optimizers: Vec<String>,
    activations: Vec<String>,
    lrs: Option<Vec<f64>>,
    trials: Option<usize>,
    min_successes: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    max_epochs: Option<u32>,
    batch_size: Option<BatchSize>,
    noise_sigma: Option<f64>,
    noise_mode: Option<String>,
    hidden_width: Option<usize>,
    init_sigma: Option<f64>,
    init_bias: Option<String>,
    allow_composite: Option<bool>,
    history_stride: Option<usize>,
    /// Per-optimizer hyperparameter overrides, e.g. `[opt_params.adam] beta1 = 0.8`.
    #[serde(default)]
    opt_params: BTreeMap<String, BTreeMap<String, f64>>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SweepFile = toml::from_str(text)?;
        let d = SweepSpec::default();
        let mut optimizers = file
            .optimizers
            .iter()
            .map(|n| OptimizerKind::from_name(n))
            .collect::<Result<Vec<_>>>()?;
        for (name, params) in &file.opt_params {
            let mut matched = false;
            for opt in optimizers.iter_mut().filter(|o| o.name() == name) {
                matched = true;
                for (k, v) in params {
                    opt.set_param(k, *v)?;
                }
            }
            if !matched {
                return Err(Error::Config(format!(
                    "opt_params given for `{name}`, which is not in the optimizer list"
                )));
            }
        }
        let spec = SweepSpec {
            primes: file.primes,
            optimizers,
            activations: file
                .activations
                .iter()
                .map(|a| a.parse())
                .collect::<Result<Vec<_>>>()?,
            lrs: file.lrs.unwrap_or(d.lrs),
            trials_per_cell: file.trials.unwrap_or(d.trials_per_cell),
            min_successes: file.min_successes.unwrap_or(d.min_successes),
            base_seed: file.seed.unwrap_or(d.base_seed),
            jobs: file.jobs,
            max_epochs: file.max_epochs.unwrap_or(d.max_epochs),
            batch_size: file.batch_size.unwrap_or(d.batch_size),
            noise_sigma: file.noise_sigma.unwrap_or(d.noise_sigma),
            noise_mode: file
                .noise_mode
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default(),
            hidden_width: file.hidden_width,
            init_sigma: file.init_sigma.unwrap_or(d.init_sigma),
            init_bias: file
                .init_bias
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default(),
            allow_composite: file.allow_composite.unwrap_or(false),
            history_stride: file.history_stride.unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell < self.min_successes {
            return Err(Error::Config(format!(
                "trials per cell ({}) must be >= min successes ({})",
                self.trials_per_cell, self.min_successes
            )));
        }
        if self.lrs.is_empty() || self.lrs.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config(
                "learning rates must be a non-empty list of positive numbers".into(),
            ));
        }
        for &p in &self.primes {
            if p < 2 {
                return Err(Error::Config(format!("p must be >= 2, got {p}")));
            }
            if !self.allow_composite && !is_prime(p) {
                return Err(Error::Config(format!(
                    "p = {p} is composite; set allow_composite to run it anyway"
                )));
            }
        }
        for opt in &self.optimizers {
            opt.validate()?;
        }
        Ok(())
    }

    /// Cells in report order: optimizer, activation, learning rate, p.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for opt in &self.optimizers {
            for &act in &self.activations {
                for &lr in &self.lrs {
                    for &p in &self.primes {
                        out.push(CellKey {
                            optimizer: *opt,
                            activation: act,
                            lr,
                            p,
                        });
                    }
                }
            }
        }
        out
    }

    /// The configuration of trial `index` in `cell`.
    pub fn trial_config(&self, cell: &CellKey, index: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(
            cell.p,
            cell.optimizer,
            cell.activation,
            cell.lr,
            derive_seed(self.base_seed, index as u64),
        );
        cfg.batch_size = self.batch_size;
        cfg.noise_sigma = self.noise_sigma;
        cfg.noise_mode = self.noise_mode;
        cfg.hidden_width = self.hidden_width;
        cfg.max_epochs = self.max_epochs;
        cfg.init_sigma = self.init_sigma;
        cfg.init_bias = self.init_bias;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub optimizer: OptimizerKind,
    pub activation: ActivationKind,
    pub lr: f64,
    pub p: usize,
}

/// One finished trial as stored in the manifest and emitted as jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: String,
    pub activation: ActivationKind,
    pub lr: f64,
    pub p: usize,
    pub trial: usize,
    pub config: TrainConfig,
    pub outcome: TrialOutcome,
}

impl TrialRecord {
    fn config_key(&self) -> String {
        config_key(&self.config)
    }
}

fn config_key(cfg: &TrainConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    pub trials: Vec<TrialRecord>,
    pub success_count: usize,
    pub failures: BTreeMap<FailureKindKey, usize>,
    /// Mean epochs over successful trials, full precision.
    pub mean_epochs: Option<f64>,
    /// Table value: rounded mean, or 0 when too few trials succeeded.
    pub reported: u64,
}

/// Ordered wrapper so failure counts render in a fixed column order.
pub type FailureKindKey = usize;

fn failure_index(kind: FailureKind) -> FailureKindKey {
    FailureKind::ALL
        .iter()
        .position(|k| *k == kind)
        .expect("listed")
}

impl CellResult {
    pub fn aggregate(key: CellKey, trials: Vec<TrialRecord>, min_successes: usize) -> Self {
        let successes: Vec<u64> = trials
            .iter()
            .filter(|t| t.outcome.status.is_success())
            .map(|t| t.outcome.epochs_used)
            .collect();
        let mut failures: BTreeMap<FailureKindKey, usize> =
            (0..FailureKind::ALL.len()).map(|i| (i, 0)).collect();
        for t in &trials {
            if let TrialStatus::Failure(kind) = t.outcome.status {
                *failures.entry(failure_index(kind)).or_default() += 1;
            }
        }
        let mean_epochs = if successes.is_empty() {
            None
        } else {
            Some(successes.iter().sum::<u64>() as f64 / successes.len() as f64)
        };
        let reported = match mean_epochs {
            Some(mean) if successes.len() >= min_successes && min_successes > 0 => {
                mean.round() as u64
            }
            Some(mean) if min_successes == 0 => mean.round() as u64,
            _ => 0,
        };
        Self {
            key,
            trials,
            success_count: successes.len(),
            failures,
            mean_epochs,
            reported,
        }
    }

    pub fn failure_count(&self, kind: FailureKind) -> usize {
        self.failures
            .get(&failure_index(kind))
            .copied()
            .unwrap_or(0)
    }

    pub fn qualifies(&self) -> bool {
        self.reported > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub min_successes: usize,
    /// Trials actually executed in this run (excludes ones loaded from the manifest).
    pub trials_run: usize,
}

impl SweepResult {
    pub fn cell(
        &self,
        optimizer: &str,
        activation: ActivationKind,
        lr: f64,
        p: usize,
    ) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.key.optimizer.name() == optimizer
                && c.key.activation == activation
                && c.key.lr == lr
                && c.key.p == p
        })
    }
}

/// Writes the manifest atomically (temp file + rename), at most once per
/// `interval` except for the final flush.
struct ManifestWriter {
    path: PathBuf,
    records: Vec<TrialRecord>,
    last_write: Instant,
    interval: Duration,
}

impl ManifestWriter {
    fn push(&mut self, record: TrialRecord) -> Result<()> {
        self.records.push(record);
        if self.last_write.elapsed() >= self.interval {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        let tmp = self.path.with_extension("tmp");
        let mut text = String::new();
        for r in &self.records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        self.last_write = Instant::now();
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub manifest: Option<PathBuf>,
    /// Stop after this many new trials (for tests of resumption).
    pub max_new_trials: Option<usize>,
    pub execution: Option<Execution>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, &SweepOptions::default())
}

pub fn run_sweep_with(spec: &SweepSpec, opts: &SweepOptions) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec.cells();
    let existing = match &opts.manifest {
        Some(path) => load_manifest(path)?,
        None => Vec::new(),
    };
    let mut done: HashMap<String, TrialRecord> = existing
        .iter()
        .map(|r| (r.config_key(), r.clone()))
        .collect();

    let mut pending = Vec::new();
    for cell in &cells {
        for trial in 0..spec.trials_per_cell {
            let cfg = spec.trial_config(cell, trial);
            if !done.contains_key(&config_key(&cfg)) {
                pending.push((*cell, trial, cfg));
            }
        }
    }
    if let Some(limit) = opts.max_new_trials {
        pending.truncate(limit);
    }
    let trials_run = pending.len();

    let writer = opts.manifest.as_ref().map(|path| {
        Mutex::new(ManifestWriter {
            path: path.clone(),
            records: existing,
            last_write: Instant::now(),
            interval: Duration::from_secs(2),
        })
    });

    let execution = opts.execution.unwrap_or(Execution::from_jobs(spec.jobs));
    let stride = spec.history_stride;
    let results: Vec<Result<TrialRecord>> = execution.map(pending, |(cell, trial, cfg)| {
        let mut outcome = run_trial(&cfg)?;
        outcome.downsample_history(stride);
        let record = TrialRecord {
            method: cell.optimizer.name().to_string(),
            activation: cell.activation,
            lr: cell.lr,
            p: cell.p,
            trial,
            config: cfg,
            outcome,
        };
        if let Some(w) = &writer {
            w.lock().expect("manifest lock").push(record.clone())?;
        }
        Ok(record)
    });
    if let Some(w) = &writer {
        w.lock().expect("manifest lock").flush()?;
    }
    for r in results {
        let r = r?;
        done.insert(r.config_key(), r);
    }

    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let trials: Vec<TrialRecord> = (0..spec.trials_per_cell)
            .filter_map(|i| done.get(&config_key(&spec.trial_config(&cell, i))).cloned())
            .collect();
        out.push(CellResult::aggregate(cell, trials, spec.min_successes));
    }
    Ok(SweepResult {
        cells: out,
        min_successes: spec.min_successes,
        trials_run,
    })
}

/// Which axis a best-learning-rate table keeps fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum BestLrAxis {
    /// One row per optimizer at a fixed activation.
    Optimizers { activation: ActivationKind },
    /// One row per activation at a fixed optimizer.
    Activations { optimizer: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestCell {
    /// `None` when no learning rate met the success threshold (value 0).
    pub lr: Option<f64>,
    pub value: u64,
    pub success_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestLrTable {
    pub primes: Vec<usize>,
    /// `(row label, one entry per prime)`; `None` marks cells missing from the sweep.
    pub rows: Vec<(String, Vec<Option<BestCell>>)>,
}

/// For each row and p, picks the learning rate with the lowest reported mean
/// among qualifying cells; lower learning rates win ties.
pub fn best_lr_view(result: &SweepResult, axis: &BestLrAxis) -> BestLrTable {
    let mut primes: Vec<usize> = result.cells.iter().map(|c| c.key.p).collect();
    primes.sort_unstable();
    primes.dedup();

    let mut labels: Vec<String> = Vec::new();
    let relevant: Vec<&CellResult> = result
        .cells
        .iter()
        .filter(|c| match axis {
            BestLrAxis::Optimizers { activation } => c.key.activation == *activation,
            BestLrAxis::Activations { optimizer } => c.key.optimizer.name() == optimizer,
        })
        .collect();
    for c in &relevant {
        let label = row_label(c, axis);
        if !labels.contains(&label) {
            labels.push(label);
        }
    }

    let rows = labels
        .into_iter()
        .map(|label| {
            let entries = primes
                .iter()
                .map(|&p| {
                    let candidates: Vec<&&CellResult> = relevant
                        .iter()
                        .filter(|c| c.key.p == p && row_label(c, axis) == label)
                        .collect();
                    if candidates.is_empty() {
                        return None;
                    }
                    let best = candidates.iter().filter(|c| c.qualifies()).min_by(|a, b| {
                        a.reported
                            .cmp(&b.reported)
                            .then(a.key.lr.total_cmp(&b.key.lr))
                    });
                    Some(match best {
                        Some(c) => BestCell {
                            lr: Some(c.key.lr),
                            value: c.reported,
                            success_count: c.success_count,
                        },
                        None => BestCell {
                            lr: None,
                            value: 0,
                            success_count: candidates
                                .iter()
                                .map(|c| c.success_count)
                                .max()
                                .unwrap_or(0),
                        },
                    })
                })
                .collect();
            (label, entries)
        })
        .collect();
    BestLrTable { primes, rows }
}

fn row_label(c: &CellResult, axis: &BestLrAxis) -> String {
    match axis {
        BestLrAxis::Optimizers { .. } => c.key.optimizer.name().to_string(),
        BestLrAxis::Activations { .. } => c.key.activation.name().to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "jsonl" => Ok(ReportFormat::Jsonl),
            _ => Err(Error::UnknownName {
                what: "format",
                name: s.into(),
                valid: "csv, markdown, jsonl".into(),
            }),
        }
    }
}

pub const CSV_HEADER: &str = "method,activation,lr,p,mean_epochs,successes,failures_never,failures_trapped,failures_gap,failures_diverged,failures_cap";

pub fn render_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.key.optimizer.name(),
            c.key.activation.name(),
            c.key.lr,
            c.key.p,
            c.reported,
            c.success_count,
            c.failure_count(FailureKind::NeverLearned),
            c.failure_count(FailureKind::TrappedFalseMinimum),
            c.failure_count(FailureKind::GeneralizationGap),
            c.failure_count(FailureKind::Diverged),
            c.failure_count(FailureKind::EpochCap),
        );
    }
    out
}

/// Full table: one row per (method, activation, rate), one column per p.
pub fn render_markdown(result: &SweepResult) -> String {
    let mut primes: Vec<usize> = result.cells.iter().map(|c| c.key.p).collect();
    primes.sort_unstable();
    primes.dedup();
    let mut out = String::from("| Method | Activation | Rate |");
    for p in &primes {
        let _ = write!(out, " {p} |");
    }
    out.push_str("\n|---|---|---|");
    out.push_str(&"---|".repeat(primes.len()));
    out.push('\n');

    let mut rows: Vec<(String, ActivationKind, f64)> = Vec::new();
    for c in &result.cells {
        let key = (
            c.key.optimizer.name().to_string(),
            c.key.activation,
            c.key.lr,
        );
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    for (method, act, lr) in rows {
        let _ = write!(out, "| {method} | {act} | {lr} |");
        for &p in &primes {
            match result.cells.iter().find(|c| {
                c.key.optimizer.name() == method
                    && c.key.activation == act
                    && c.key.lr == lr
                    && c.key.p == p
            }) {
                Some(c) => {
                    let _ = write!(out, " {} |", c.reported);
                }
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Best-learning-rate table: one row per method, one column per p.
pub fn render_best_lr_markdown(table: &BestLrTable) -> String {
    let mut out = String::from("| Classes |");
    for p in &table.primes {
        let _ = write!(out, " {p} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(table.primes.len()));
    out.push('\n');
    for (label, entries) in &table.rows {
        let _ = write!(out, "| {label} |");
        for e in entries {
            match e {
                Some(cell) => {
                    let _ = write!(out, " {} |", cell.value);
                }
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_jsonl(result: &SweepResult) -> Result<String> {
    let mut out = String::new();
    for c in &result.cells {
        for t in &c.trials {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn render(result: &SweepResult, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Csv => render_csv(result),
        ReportFormat::Markdown => render_markdown(result),
        ReportFormat::Jsonl => render_jsonl(result)?,
    })
}

/// Renders `result` and writes it to `path`.
pub fn emit(result: &SweepResult, format: ReportFormat, path: &Path) -> Result<()> {
    let text = render(result, format)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(cell: &CellKey, trial: usize, status: TrialStatus, epochs: u64) -> TrialRecord {
        let spec = SweepSpec::default();
        TrialRecord {
            method: cell.optimizer.name().into(),
            activation: cell.activation,
            lr: cell.lr,
            p: cell.p,
            trial,
            config: spec.trial_config(cell, trial),
            outcome: TrialOutcome {
                status,
                epochs_used: epochs,
                weight_updates: epochs,
                best_train_acc: 1.0,
                final_test_acc: Some(1.0),
                final_loss: 0.0,
                train_acc_history: vec![],
            },
        }
    }

    fn key(opt: &str, act: ActivationKind, lr: f64, p: usize) -> CellKey {
        CellKey {
            optimizer: OptimizerKind::from_name(opt).unwrap(),
            activation: act,
            lr,
            p,
        }
    }

    fn cell_with(k: CellKey, epochs: &[u64], failures: usize) -> CellResult {
        let mut trials: Vec<TrialRecord> = epochs
            .iter()
            .enumerate()
            .map(|(i, &e)| record(&k, i, TrialStatus::Success, e))
            .collect();
        for j in 0..failures {
            trials.push(record(
                &k,
                epochs.len() + j,
                TrialStatus::Failure(FailureKind::TrappedFalseMinimum),
                10_000,
            ));
        }
        CellResult::aggregate(k, trials, 5)
    }

    #[test]
    fn aggregation_rule() {
        let k = key("adam", ActivationKind::Elu, 0.1, 5);
        let four = cell_with(k, &[100, 200, 300, 400], 6);
        assert_eq!(four.success_count, 4);
        assert_eq!(four.reported, 0);
        assert_eq!(four.failure_count(FailureKind::TrappedFalseMinimum), 6);
        let five = cell_with(k, &[100, 200, 300, 400, 501], 5);
        assert_eq!(five.mean_epochs, Some(300.2));
        assert_eq!(five.reported, 300);
        let half = cell_with(k, &[100, 101, 100, 101, 100, 101], 0);
        assert_eq!(half.reported, 101); // 100.5 rounds away from zero
    }

    #[test]
    fn best_lr_picks_minimum_with_low_lr_tie_break() {
        let cells = vec![
            cell_with(key("adam", ActivationKind::Elu, 0.01, 2), &[1207; 10], 0),
            cell_with(key("adam", ActivationKind::Elu, 0.1, 2), &[119; 10], 0),
            cell_with(key("adam", ActivationKind::Elu, 1.0, 2), &[119; 6], 4),
            cell_with(key("adam", ActivationKind::Elu, 5.0, 2), &[50; 2], 8),
            cell_with(key("vanilla", ActivationKind::Elu, 1.0, 2), &[], 10),
        ];
        let result = SweepResult {
            cells,
            min_successes: 5,
            trials_run: 0,
        };
        let table = best_lr_view(
            &result,
            &BestLrAxis::Optimizers {
                activation: ActivationKind::Elu,
            },
        );
        assert_eq!(table.primes, vec![2]);
        let adam = table.rows[0].1[0].unwrap();
        assert_eq!(adam.value, 119);
        assert_eq!(adam.lr, Some(0.1));
        let vanilla = table.rows[1].1[0].unwrap();
        assert_eq!(vanilla.value, 0);
        assert_eq!(vanilla.lr, None);

        let md = render_best_lr_markdown(&table);
        assert!(md.contains("| adam | 119 |"));
        assert!(md.contains("| vanilla | 0 |"));
    }

    #[test]
    fn missing_cells_are_absent_not_zero() {
        let cells = vec![
            cell_with(key("adam", ActivationKind::Elu, 0.1, 2), &[119; 10], 0),
            cell_with(key("rmsprop", ActivationKind::Elu, 0.1, 3), &[80; 10], 0),
        ];
        let result = SweepResult {
            cells,
            min_successes: 5,
            trials_run: 0,
        };
        let table = best_lr_view(
            &result,
            &BestLrAxis::Optimizers {
                activation: ActivationKind::Elu,
            },
        );
        assert_eq!(table.primes, vec![2, 3]);
        assert!(table.rows[0].1[1].is_none());
        assert!(table.rows[1].1[0].is_none());
    }

    #[test]
    fn toml_config() {
        let spec = SweepSpec::from_toml_str(
            r#"
            primes = [2, 3]
            optimizers = ["adam", "momentum"]
            activations = ["elu", "relu"]
            lrs = [0.1]
            trials = 4
            min_successes = 2
            seed = 9
            batch_size = "p2/10"
            max_epochs = 500

            [opt_params.momentum]
            mu = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(spec.cells().len(), 8);
        assert_eq!(spec.optimizers[1], OptimizerKind::Momentum { mu: 0.5 });
        assert_eq!(spec.batch_size, BatchSize::Tenth);
        assert!(
            SweepSpec::from_toml_str("primes = [6]\noptimizers = []\nactivations = []").is_err()
        );
        assert!(SweepSpec::from_toml_str(
            "primes = [6]\noptimizers = []\nactivations = []\nallow_composite = true"
        )
        .is_ok());
        assert!(SweepSpec::from_toml_str(
            "primes = [5]\noptimizers = []\nactivations = []\ntrials = 3"
        )
        .is_err());
        assert!(SweepSpec::from_toml_str(
            "primes = [5]\noptimizers = []\nactivations = []\nbogus = 1"
        )
        .is_err());
    }

    #[test]
    fn empty_sweep() {
        let spec = SweepSpec::default();
        let result = run_sweep(&spec).unwrap();
        assert!(result.cells.is_empty());
        assert_eq!(render_csv(&result), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_and_jsonl_shapes() {
        let spec = SweepSpec {
            primes: vec![2],
            optimizers: vec![OptimizerKind::from_name("adam").unwrap()],
            activations: vec![ActivationKind::Elu, ActivationKind::Tanh],
            lrs: vec![0.1],
            trials_per_cell: 3,
            min_successes: 2,
            max_epochs: 50,
            ..SweepSpec::default()
        };
        let result = run_sweep(&spec).unwrap();
        let csv = render_csv(&result);
        assert_eq!(csv.lines().count(), 1 + 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("adam,elu,0.1,2,"));
        let jsonl = render_jsonl(&result).unwrap();
        assert_eq!(jsonl.lines().count(), 2 * 3);
        let md = render_markdown(&result);
        assert!(md.starts_with("| Method | Activation | Rate | 2 |"));
        assert_eq!(md.lines().count(), 2 + 2);
    }
}
