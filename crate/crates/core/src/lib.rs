//! XOR_p benchmark: classify pairs of residues modulo `p` by their difference
//! with a one-hidden-layer perceptron, and measure how many epochs each
//! optimizer/activation pair needs to reach a perfect classifier.

pub mod activations;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod network;
pub mod optimizers;
pub mod seed;
pub mod sweep;
pub mod trainer;

pub use activations::ActivationKind;
pub use dataset::{class_label, full_test_grid, sample_batch, ProblemSpec};
pub use error::{Error, Result};
pub use exec::Execution;
pub use network::{InitBias, MlpParams};
pub use optimizers::{OptimizerKind, OptimizerState};
pub use sweep::{SweepResult, SweepSpec};
pub use trainer::{
    run_trial, run_trial_with_params, BatchSize, FailureKind, TrainConfig, TrialOutcome,
    TrialStatus,
};
