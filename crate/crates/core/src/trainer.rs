//! One training trial under the benchmark protocol.
//!
//! Each epoch draws one noisy batch and performs exactly one weight update.
//! Training accuracy is read off the forward pass used for the gradient, so
//! it describes the parameters *before* that epoch's update. A counter of
//! consecutive correctly classified examples grows by the batch size on every
//! perfect batch and resets on any miss; once it reaches `stop_examples` the
//! run stops and the network is scored on the clean `p^2` grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::activations::ActivationKind;
use crate::dataset::{full_test_grid, sample_batch, NoiseMode, ProblemSpec, DEFAULT_NOISE_SIGMA};
use crate::error::{Error, Result};
use crate::network::{self, init_params, InitBias, MlpParams};
use crate::optimizers::{self, OptimizerKind, OptimizerState};
use crate::seed::trial_rng;

/// Best training accuracy at or below which a failed run never learned.
pub const NEVER_LEARNED_MAX_ACC: f64 = 0.40;
/// Plateau level typical of a run trapped in a false minimum. Reporting only.
pub const TRAPPED_PLATEAU_ACC: f64 = 0.85;

pub const DEFAULT_MAX_EPOCHS: u32 = 10_000;

/// Examples per batch, as a preset relative to `p^2` or a fixed count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchSize {
    /// `10 p^2`
    #[default]
    TenSquare,
    /// `p^2`
    Square,
    /// `max(1, p^2 / 10)`
    Tenth,
    /// `max(1, p^2 / 100)`
    Hundredth,
    Fixed(usize),
}

impl BatchSize {
    pub fn resolve(self, p: usize) -> usize {
        let sq = p * p;
        match self {
            BatchSize::TenSquare => 10 * sq,
            BatchSize::Square => sq,
            BatchSize::Tenth => (sq / 10).max(1),
            BatchSize::Hundredth => (sq / 100).max(1),
            BatchSize::Fixed(n) => n,
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::TenSquare => f.write_str("10p2"),
            BatchSize::Square => f.write_str("p2"),
            BatchSize::Tenth => f.write_str("p2/10"),
            BatchSize::Hundredth => f.write_str("p2/100"),
            BatchSize::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "10p2" | "default" => Ok(BatchSize::TenSquare),
            "p2" => Ok(BatchSize::Square),
            "p2/10" => Ok(BatchSize::Tenth),
            "p2/100" => Ok(BatchSize::Hundredth),
            other => match other.parse::<usize>() {
                Ok(n) if n > 0 => Ok(BatchSize::Fixed(n)),
                _ => Err(Error::Config(format!(
                    "batch size `{s}`: expected 10p2, p2, p2/10, p2/100 or a positive integer"
                ))),
            },
        }
    }
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("batch size must be >= 1")),
            Raw::Int(n) => Ok(BatchSize::Fixed(n)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub p: usize,
    pub optimizer: OptimizerKind,
    pub activation: ActivationKind,
    pub lr: f64,
    pub batch_size: BatchSize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    /// Defaults to `p`.
    pub hidden_width: Option<usize>,
    pub max_epochs: u32,
    /// Defaults to `20 p^2`.
    pub stop_examples: Option<usize>,
    pub seed: u64,
    pub init_sigma: f64,
    pub init_bias: InitBias,
}

impl TrainConfig {
    pub fn new(
        p: usize,
        optimizer: OptimizerKind,
        activation: ActivationKind,
        lr: f64,
        seed: u64,
    ) -> Self {
        Self {
            p,
            optimizer,
            activation,
            lr,
            batch_size: BatchSize::default(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            noise_mode: NoiseMode::default(),
            hidden_width: None,
            max_epochs: DEFAULT_MAX_EPOCHS,
            stop_examples: None,
            seed,
            init_sigma: 1.0,
            init_bias: InitBias::Gaussian,
        }
    }

    pub fn batch_len(&self) -> usize {
        self.batch_size.resolve(self.p)
    }

    pub fn hidden(&self) -> usize {
        self.hidden_width.unwrap_or(self.p)
    }

    pub fn stop_len(&self) -> usize {
        self.stop_examples.unwrap_or(20 * self.p * self.p)
    }

    /// Consecutive perfect batches needed before the stop rule can fire.
    pub fn batches_to_certify(&self) -> u64 {
        self.stop_len().div_ceil(self.batch_len()).max(1) as u64
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        Ok(
            ProblemSpec::with(self.p, self.noise_sigma, self.batch_len())?
                .with_noise_mode(self.noise_mode),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.problem()?;
        self.optimizer.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.hidden() == 0 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        if self.stop_len() == 0 {
            return Err(Error::Config("stop_examples must be >= 1".into()));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::Config("init sigma must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NeverLearned,
    TrappedFalseMinimum,
    GeneralizationGap,
    Diverged,
    EpochCap,
}

impl FailureKind {
    pub const ALL: [FailureKind; 5] = [
        FailureKind::NeverLearned,
        FailureKind::TrappedFalseMinimum,
        FailureKind::GeneralizationGap,
        FailureKind::Diverged,
        FailureKind::EpochCap,
    ];
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::NeverLearned => "never learned",
            FailureKind::TrappedFalseMinimum => "trapped in a false minimum",
            FailureKind::GeneralizationGap => "certified on training data but failed the test grid",
            FailureKind::Diverged => "diverged",
            FailureKind::EpochCap => "epoch cap too small to certify",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Success,
    Failure(FailureKind),
}

impl TrialStatus {
    pub fn is_success(self) -> bool {
        self == TrialStatus::Success
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub status: TrialStatus,
    pub epochs_used: u64,
    pub weight_updates: u64,
    pub best_train_acc: f64,
    /// Accuracy on the clean grid; only measured once the stop rule fired.
    pub final_test_acc: Option<f64>,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_acc_history: Vec<f64>,
}

impl TrialOutcome {
    pub fn examples_consumed(&self, batch_len: usize) -> u64 {
        self.epochs_used * batch_len as u64
    }

    /// Keeps every `stride`-th history entry plus the last one; `0` drops it.
    pub fn downsample_history(&mut self, stride: usize) {
        if stride == 0 {
            self.train_acc_history.clear();
            return;
        }
        let n = self.train_acc_history.len();
        let kept: Vec<f64> = self
            .train_acc_history
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i + 1 == n)
            .map(|(_, &v)| v)
            .collect();
        self.train_acc_history = kept;
    }
}

/// How the training loop ended, as seen by [`classify_failure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainEnd {
    pub diverged: bool,
    pub certified: bool,
    /// `max_epochs` was smaller than the number of perfect batches the stop
    /// rule needs, so certification was impossible.
    pub cap_unreachable: bool,
}

/// Sorts a failed run into one failure kind.
///
/// Divergence wins over everything. A certified run that missed the clean grid
/// is a generalization gap. Otherwise the best training accuracy decides
/// between never learned (at most 0.40) and trapped.
pub fn classify_failure(
    history: &[f64],
    end: TrainEnd,
    test_acc: Option<f64>,
) -> Result<FailureKind> {
    if end.diverged {
        return Ok(FailureKind::Diverged);
    }
    if end.certified {
        return match test_acc {
            Some(1.0) => Err(Error::Contract(
                "classify_failure called on a successful trial".into(),
            )),
            _ => Ok(FailureKind::GeneralizationGap),
        };
    }
    if end.cap_unreachable {
        return Ok(FailureKind::EpochCap);
    }
    let best = history.iter().copied().fold(0.0, f64::max);
    if best <= NEVER_LEARNED_MAX_ACC {
        Ok(FailureKind::NeverLearned)
    } else {
        Ok(FailureKind::TrappedFalseMinimum)
    }
}

pub fn run_trial(config: &TrainConfig) -> Result<TrialOutcome> {
    run_trial_with_params(config).map(|(outcome, _)| outcome)
}

/// Runs one trial and also returns the final parameters.
pub fn run_trial_with_params(config: &TrainConfig) -> Result<(TrialOutcome, MlpParams)> {
    config.validate()?;
    let problem = config.problem()?;
    let batch_len = problem.batch_size;
    let stop_len = config.stop_len();
    let mut rng = trial_rng(config.seed);
    let mut params = init_params(
        config.p,
        config.hidden(),
        &mut rng,
        config.init_sigma,
        config.init_bias,
    )?;
    let mut state = OptimizerState::new(&config.optimizer, &params.shapes());

    let mut history = Vec::with_capacity(config.max_epochs.min(100_000) as usize);
    let mut streak = 0usize;
    let mut certified = false;
    let mut diverged = false;
    let mut final_loss = f64::NAN;

    for _ in 0..config.max_epochs {
        let batch = sample_batch(&problem, &mut rng);
        let cache = network::forward(&params, config.activation, batch.inputs.view())?;
        let acc = cache.accuracy(&batch.labels);
        let loss = network::loss(&cache, &batch.labels);
        let grads = network::backward(&params, config.activation, &cache, &batch.labels);
        let grads = grads.tensors();
        let mut tensors = params.tensors_mut();
        if optimizers::step(
            &config.optimizer,
            &mut state,
            &mut tensors,
            &grads,
            config.lr,
            loss,
        )
        .is_err()
        {
            diverged = true;
            break;
        }
        final_loss = loss;
        history.push(acc);
        if acc == 1.0 {
            streak += batch_len;
        } else {
            streak = 0;
        }
        if streak >= stop_len {
            certified = true;
            break;
        }
    }

    let epochs_used = state.t;
    let final_test_acc = if certified {
        Some(network::accuracy(
            &params,
            config.activation,
            &full_test_grid(config.p),
        )?)
    } else {
        None
    };
    let status = if certified && final_test_acc == Some(1.0) {
        TrialStatus::Success
    } else {
        let end = TrainEnd {
            diverged,
            certified,
            cap_unreachable: u64::from(config.max_epochs) < config.batches_to_certify(),
        };
        TrialStatus::Failure(classify_failure(&history, end, final_test_acc)?)
    };
    let best_train_acc = history.iter().copied().fold(0.0, f64::max);
    Ok((
        TrialOutcome {
            status,
            epochs_used,
            weight_updates: state.t,
            best_train_acc,
            final_test_acc,
            final_loss,
            train_acc_history: history,
        },
        params,
    ))
}
