//! Single-hidden-layer perceptron: `2p -> h -> p` with softmax output and
//! mean cross-entropy loss. Gradients are computed analytically.

use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::dataset::Batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitBias {
    #[default]
    Gaussian,
    Zero,
}

impl FromStr for InitBias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(InitBias::Gaussian),
            "zero" => Ok(InitBias::Zero),
            _ => Err(Error::UnknownName {
                what: "bias init",
                name: s.into(),
                valid: "gaussian, zero".into(),
            }),
        }
    }
}

/// Weights and biases. `w1` is `2p x h`, `w2` is `h x p`; inputs are rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

impl MlpParams {
    pub fn zeros(p: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((2 * p, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, p)),
            b2: Array1::zeros(p),
        }
    }

    pub fn p(&self) -> usize {
        self.b2.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.b1.len()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Tensor lengths in `w1, b1, w2, b2` order.
    pub fn shapes(&self) -> Vec<usize> {
        vec![self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()]
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum()
    }
}

/// Parameter count for the default architecture, `3p^2 + 2p`.
pub fn param_count_formula(p: usize) -> usize {
    3 * p * p + 2 * p
}

/// Draws every weight (and, unless `init_bias` is `Zero`, every bias) from
/// `N(0, init_sigma^2)` in `w1, b1, w2, b2` order.
pub fn init_params<R: Rng + ?Sized>(
    p: usize,
    hidden: usize,
    rng: &mut R,
    init_sigma: f64,
    init_bias: InitBias,
) -> Result<MlpParams> {
    if p < 2 {
        return Err(Error::Config(format!("modulus p must be >= 2, got {p}")));
    }
    if hidden == 0 {
        return Err(Error::Config("hidden width must be >= 1".into()));
    }
    if !(init_sigma > 0.0 && init_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "init sigma must be positive, got {init_sigma}"
        )));
    }
    let mut params = MlpParams::zeros(p, hidden);
    let [w1, b1, w2, b2] = params.tensors_mut();
    for (tensor, is_bias) in [(w1, false), (b1, true), (w2, false), (b2, true)] {
        if is_bias && init_bias == InitBias::Zero {
            continue;
        }
        for x in tensor.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = init_sigma * z;
        }
    }
    Ok(params)
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Array2<f64>,
    pub z1: Array2<f64>,
    pub a1: Array2<f64>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    /// Per-row `log(sum(exp(logits)))`, used for a loss that stays finite
    /// even when a probability underflows.
    pub log_norm: Array1<f64>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.inputs.nrows()
    }

    /// Index of the largest probability per row; ties go to the lowest index.
    pub fn predictions(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter()))
            .collect()
    }

    /// Fraction of rows whose prediction equals the label.
    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        let correct = self
            .predictions()
            .iter()
            .zip(labels)
            .filter(|(a, b)| a == b)
            .count();
        correct as f64 / labels.len() as f64
    }
}

fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn forward(
    params: &MlpParams,
    kind: ActivationKind,
    inputs: ArrayView2<'_, f64>,
) -> Result<ForwardCache> {
    if inputs.ncols() != params.w1.nrows() {
        return Err(Error::Shape(format!(
            "input width {} does not match w1 rows {}",
            inputs.ncols(),
            params.w1.nrows()
        )));
    }
    let z1 = inputs.dot(&params.w1) + &params.b1;
    let a1 = z1.mapv(|x| kind.activate(x));
    let logits = a1.dot(&params.w2) + &params.b2;

    let mut probs = logits.clone();
    let mut log_norm = Array1::zeros(logits.nrows());
    Zip::from(probs.rows_mut())
        .and(&mut log_norm)
        .for_each(|mut row, norm| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
            *norm = max + sum.ln();
        });
    Ok(ForwardCache {
        inputs: inputs.to_owned(),
        z1,
        a1,
        logits,
        probs,
        log_norm,
    })
}

/// Mean over the batch of `-log prob[label]`.
pub fn loss(cache: &ForwardCache, labels: &[usize]) -> f64 {
    let n = labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| cache.log_norm[i] - cache.logits[[i, y]])
        .sum();
    total / n as f64
}

pub fn backward(
    params: &MlpParams,
    kind: ActivationKind,
    cache: &ForwardCache,
    labels: &[usize],
) -> Gradients {
    let n = cache.batch_len() as f64;
    let mut delta2 = cache.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        delta2[[i, y]] -= 1.0;
    }
    delta2 /= n;

    let gw2 = cache.a1.t().dot(&delta2);
    let gb2 = delta2.sum_axis(Axis(0));
    let mut delta1 = delta2.dot(&params.w2.t());
    Zip::from(&mut delta1)
        .and(&cache.z1)
        .for_each(|d, &z| *d *= kind.grad(z));
    let gw1 = cache.inputs.t().dot(&delta1);
    let gb1 = delta1.sum_axis(Axis(0));
    MlpParams {
        w1: gw1,
        b1: gb1,
        w2: gw2,
        b2: gb2,
    }
}

/// Classification accuracy over a set of examples.
pub fn accuracy(params: &MlpParams, kind: ActivationKind, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty);
    }
    let cache = forward(params, kind, batch.inputs.view())?;
    Ok(cache.accuracy(&batch.labels))
}

/// Checkpoint header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub p: usize,
    pub hidden: usize,
    pub activation: ActivationKind,
    pub seed: u64,
}

/// Text checkpoint: a `p,h,activation,seed` header, then one line per tensor
/// (`w1`, `b1`, `w2`, `b2`), row-major, shortest round-trip float formatting.
pub fn write_checkpoint<W: Write>(
    params: &MlpParams,
    header: &CheckpointHeader,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "p,h,activation,seed")?;
    writeln!(
        out,
        "{},{},{},{}",
        header.p, header.hidden, header.activation, header.seed
    )?;
    for (name, tensor) in ["w1", "b1", "w2", "b2"].iter().zip(params.tensors()) {
        write!(out, "{name}")?;
        for v in tensor {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<(CheckpointHeader, MlpParams)> {
    let bad = |msg: &str| Error::Config(format!("malformed checkpoint: {msg}"));
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io("<checkpoint>", e))?;
    if lines.len() != 6 || lines[0] != "p,h,activation,seed" {
        return Err(bad("expected header plus four tensor lines"));
    }
    let fields: Vec<&str> = lines[1].split(',').collect();
    if fields.len() != 4 {
        return Err(bad("header needs 4 fields"));
    }
    let header = CheckpointHeader {
        p: fields[0].parse().map_err(|_| bad("p"))?,
        hidden: fields[1].parse().map_err(|_| bad("h"))?,
        activation: fields[2].parse()?,
        seed: fields[3].parse().map_err(|_| bad("seed"))?,
    };
    let mut params = MlpParams::zeros(header.p, header.hidden);
    for (line, (name, tensor)) in lines[2..]
        .iter()
        .zip(["w1", "b1", "w2", "b2"].iter().zip(params.tensors_mut()))
    {
        let mut parts = line.split(',');
        if parts.next() != Some(*name) {
            return Err(bad(&format!("expected tensor {name}")));
        }
        let values: Vec<f64> = parts
            .map(|v| v.parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<_>>()?;
        if values.len() != tensor.len() {
            return Err(bad(&format!("{name} has {} values", values.len())));
        }
        tensor.copy_from_slice(&values);
    }
    Ok((header, params))
}
