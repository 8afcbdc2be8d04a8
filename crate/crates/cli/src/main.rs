use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use xorp_core::dataset::{is_prime, write_batch_csv, NoiseMode};
use xorp_core::network::{write_checkpoint, CheckpointHeader};
use xorp_core::seed::{derive_seed, trial_rng};
use xorp_core::sweep::{
    best_lr_view, render, render_best_lr_markdown, run_sweep_with, BestLrAxis, ReportFormat,
    SweepOptions, SweepResult, SweepSpec,
};
use xorp_core::{
    run_trial_with_params, sample_batch, ActivationKind, BatchSize, Error, Execution,
    OptimizerKind, TrainConfig, TrialStatus,
};

const EXIT_USAGE: u8 = 1;
const EXIT_TRIAL_FAILURE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Jsonl,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
            Format::Jsonl => ReportFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Table {
    /// Every (method, activation, rate) row.
    Full,
    /// Best rate per method at a fixed activation.
    ByMethod,
    /// Best rate per activation at a fixed method.
    ByActivation,
}

/// Train small MLPs on noisy modular subtraction and compare optimizers and
/// activations by epochs to convergence.
#[derive(Debug, Parser)]
#[command(name = "xorp", version)]
struct Cli {
    /// Number of classes (must be prime unless --allow-composite).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long, default_value = "elu")]
    activation: String,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    /// 10p2, p2, p2/10, p2/100 or an explicit count.
    #[arg(long, default_value = "10p2")]
    batch_size: String,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Base seed; trial i uses a seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = xorp_core::trainer::DEFAULT_MAX_EPOCHS)]
    max_epochs: u32,
    /// Hidden layer width (default p).
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long, default_value_t = xorp_core::dataset::DEFAULT_NOISE_SIGMA)]
    noise_sigma: f64,
    /// per-example (one offset shared by all inputs of an example) or per-component.
    #[arg(long, default_value = "per-example")]
    noise_mode: String,
    /// Optimizer hyperparameter override, e.g. beta1=0.8 (repeatable).
    #[arg(long = "opt-param", value_name = "K=V")]
    opt_params: Vec<String>,
    /// Run a sweep described by a TOML file instead of a single configuration.
    #[arg(long, value_name = "CONFIG")]
    sweep: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Markdown layout for sweeps.
    #[arg(long, value_enum, default_value = "full")]
    table: Table,
    /// Activation held fixed by --table by-method.
    #[arg(long, default_value = "elu")]
    fixed_activation: String,
    /// Method held fixed by --table by-activation.
    #[arg(long, default_value = "adam")]
    fixed_optimizer: String,
    /// Worker threads (default: all cores; 1 runs sequentially).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    allow_composite: bool,
    /// Sweep manifest of completed trials; rerunning with the same file resumes.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Successes needed for exit 0 in single-run mode (default: all trials).
    #[arg(long)]
    min_successes: Option<usize>,
    /// Write the parameters of trial 0 after training.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write one training batch drawn from --seed as CSV, then exit.
    #[arg(long)]
    export_batch: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
    Trials(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Trials(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_TRIAL_FAILURE)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(path) = &cli.sweep {
        return run_sweep_mode(&cli, path);
    }
    let cfg = single_config(&cli)?;
    if let Some(path) = &cli.export_batch {
        let batch = sample_batch(&cfg.problem()?, &mut trial_rng(cli.seed));
        let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
        let mut w = BufWriter::new(file);
        write_batch_csv(&batch, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_failure(path, e))?;
        return Ok(());
    }
    run_single_mode(&cli, cfg)
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn single_config(cli: &Cli) -> Result<TrainConfig, Failure> {
    let p = cli
        .p
        .ok_or_else(|| Failure::Usage("--p is required unless --sweep is given".into()))?;
    if p < 2 {
        return Err(Failure::Usage(format!("--p must be >= 2, got {p}")));
    }
    if !cli.allow_composite && !is_prime(p) {
        return Err(Failure::Usage(format!(
            "--p {p} is not prime; pass --allow-composite to run it anyway"
        )));
    }
    if cli.trials == 0 {
        return Err(Failure::Usage("--trials must be >= 1".into()));
    }
    let mut optimizer = OptimizerKind::from_name(&cli.optimizer)?;
    for kv in &cli.opt_params {
        optimizer.apply_override(kv)?;
    }
    let activation: ActivationKind = cli.activation.parse()?;
    let batch_size: BatchSize = cli.batch_size.parse()?;
    let noise_mode: NoiseMode = cli.noise_mode.parse()?;
    let mut cfg = TrainConfig::new(p, optimizer, activation, cli.learning_rate, cli.seed);
    cfg.batch_size = batch_size;
    cfg.max_epochs = cli.max_epochs;
    cfg.hidden_width = cli.hidden_width;
    cfg.noise_sigma = cli.noise_sigma;
    cfg.noise_mode = noise_mode;
    cfg.validate()?;
    Ok(cfg)
}

fn run_single_mode(cli: &Cli, base: TrainConfig) -> Result<(), Failure> {
    let required = cli.min_successes.unwrap_or(cli.trials);
    if required > cli.trials {
        return Err(Failure::Usage(format!(
            "--min-successes ({required}) exceeds --trials ({})",
            cli.trials
        )));
    }
    let configs: Vec<TrainConfig> = (0..cli.trials)
        .map(|i| {
            let mut cfg = base.clone();
            cfg.seed = if cli.trials == 1 {
                cli.seed
            } else {
                derive_seed(cli.seed, i as u64)
            };
            cfg
        })
        .collect();
    let results =
        Execution::from_jobs(cli.jobs).map(configs.clone(), |cfg| run_trial_with_params(&cfg));

    let mut report = String::new();
    let mut successes = 0;
    for (i, (cfg, res)) in configs.iter().zip(results).enumerate() {
        let (outcome, params) = res?;
        if outcome.status.is_success() {
            successes += 1;
        }
        if i == 0 {
            if let Some(path) = &cli.checkpoint {
                let header = CheckpointHeader {
                    p: cfg.p,
                    hidden: cfg.hidden(),
                    activation: cfg.activation,
                    seed: cfg.seed,
                };
                let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
                let mut w = BufWriter::new(file);
                write_checkpoint(&params, &header, &mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| io_failure(path, e))?;
            }
        }
        match cli.format {
            Some(Format::Jsonl) => {
                let line = serde_json::json!({ "trial": i, "config": cfg, "outcome": outcome });
                report.push_str(&line.to_string());
                report.push('\n');
            }
            _ => {
                let status = match outcome.status {
                    TrialStatus::Success => "success".to_string(),
                    TrialStatus::Failure(kind) => format!("failure ({kind})"),
                };
                let test_acc = outcome
                    .final_test_acc
                    .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
                report.push_str(&format!(
                    "trial {i} seed {}: {status}, epochs {}, examples {}, best train acc {:.4}, test acc {test_acc}, loss {:.6}\n",
                    cfg.seed,
                    outcome.epochs_used,
                    outcome.examples_consumed(cfg.batch_len()),
                    outcome.best_train_acc,
                    outcome.final_loss,
                ));
            }
        }
    }
    if !matches!(cli.format, Some(Format::Jsonl)) && cli.trials > 1 {
        report.push_str(&format!("{successes}/{} trials succeeded\n", cli.trials));
    }
    write_report(cli.out.as_deref(), &report)?;
    if successes < required {
        return Err(Failure::Trials(format!(
            "{successes} of {} trials succeeded (needed {required})",
            cli.trials
        )));
    }
    Ok(())
}

fn run_sweep_mode(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut spec = SweepSpec::from_toml_file(path)?;
    if cli.jobs.is_some() {
        spec.jobs = cli.jobs;
    }
    if cli.allow_composite {
        spec.allow_composite = true;
        spec.validate()?;
    }
    let opts = SweepOptions {
        manifest: cli.manifest.clone(),
        ..SweepOptions::default()
    };
    let result = run_sweep_with(&spec, &opts)?;
    let format = cli.format.unwrap_or(Format::Csv);
    let text = render_sweep(cli, &result, format)?;
    write_report(cli.out.as_deref(), &text)
}

fn render_sweep(cli: &Cli, result: &SweepResult, format: Format) -> Result<String, Failure> {
    let axis = match (format, cli.table) {
        (Format::Markdown, Table::ByMethod) => BestLrAxis::Optimizers {
            activation: cli.fixed_activation.parse()?,
        },
        (Format::Markdown, Table::ByActivation) => BestLrAxis::Activations {
            optimizer: OptimizerKind::from_name(&cli.fixed_optimizer)?
                .name()
                .to_string(),
        },
        _ => return Ok(render(result, format.into())?),
    };
    Ok(render_best_lr_markdown(&best_lr_view(result, &axis)))
}

fn write_report(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
    }
}
