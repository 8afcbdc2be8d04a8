//! The XOR_p problem family: pairs `(a, b)` of residues modulo `p` labelled by
//! `(a - b) mod p`, encoded as two concatenated 1-hot blocks.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

/// How input noise is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// One `N(0, sigma^2)` draw per example, added to all `2p` components.
    #[default]
    PerExample,
    /// An independent draw for every component.
    PerComponent,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::PerExample => "per-example",
            NoiseMode::PerComponent => "per-component",
        }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-example" => Ok(NoiseMode::PerExample),
            "per-component" => Ok(NoiseMode::PerComponent),
            _ => Err(Error::UnknownName {
                what: "noise mode",
                name: s.into(),
                valid: "per-example, per-component".into(),
            }),
        }
    }
}

/// One instance of the benchmark: modulus, input noise and batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub p: usize,
    pub noise_sigma: f64,
    pub batch_size: usize,
    pub noise_mode: NoiseMode,
    /// Set when `p` is not prime. Composite moduli are well-defined but
    /// decomposable, so the benchmark front-ends refuse them by default.
    pub composite: bool,
}

impl ProblemSpec {
    /// Default instance: noise 0.1 and batches of `10 p^2` examples.
    pub fn new(p: usize) -> Result<Self> {
        Self::with(p, DEFAULT_NOISE_SIGMA, 10 * p * p)
    }

    pub fn with(p: usize, noise_sigma: f64, batch_size: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::Config(format!("modulus p must be >= 2, got {p}")));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(Self {
            p,
            noise_sigma,
            batch_size,
            noise_mode: NoiseMode::default(),
            composite: !is_prime(p),
        })
    }

    pub fn with_noise_mode(mut self, mode: NoiseMode) -> Self {
        self.noise_mode = mode;
        self
    }

    pub fn input_width(&self) -> usize {
        2 * self.p
    }
}

/// A single labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub label: usize,
}

/// A batch in matrix form. `pairs` keeps the clean `(a, b)` each row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn examples(&self) -> Vec<Example> {
        self.inputs
            .rows()
            .into_iter()
            .zip(&self.labels)
            .map(|(row, &label)| Example {
                input: row.to_vec(),
                label,
            })
            .collect()
    }

    pub fn from_examples(examples: &[Example]) -> Result<Self> {
        let first = examples.first().ok_or(Error::Empty)?;
        let width = first.input.len();
        let mut inputs = Array2::zeros((examples.len(), width));
        for (mut row, ex) in inputs.rows_mut().into_iter().zip(examples) {
            if ex.input.len() != width {
                return Err(Error::Shape(format!(
                    "example width {} differs from {width}",
                    ex.input.len()
                )));
            }
            row.assign(&Array1::from(ex.input.clone()));
        }
        Ok(Self {
            inputs,
            labels: examples.iter().map(|e| e.label).collect(),
            pairs: Vec::new(),
        })
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `(a - b) mod p`, always in `[0, p)`.
pub fn class_label(a: usize, b: usize, p: usize) -> Result<usize> {
    if a >= p {
        return Err(Error::domain(a, p));
    }
    if b >= p {
        return Err(Error::domain(b, p));
    }
    Ok((a + p - b) % p)
}

pub fn one_hot(v: usize, p: usize) -> Result<Vec<f64>> {
    if v >= p {
        return Err(Error::domain(v, p));
    }
    let mut out = vec![0.0; p];
    out[v] = 1.0;
    Ok(out)
}

/// `[one_hot(a) | one_hot(b)]`, a-block first.
pub fn encode_pair(a: usize, b: usize, p: usize) -> Result<Vec<f64>> {
    let mut out = one_hot(a, p)?;
    out.extend(one_hot(b, p)?);
    Ok(out)
}

/// Draws `spec.batch_size` uniform pairs and adds Gaussian noise to every
/// input component, either one shared offset per example or independent
/// draws per component (see [`NoiseMode`]). Labels come from the clean pair.
///
/// Draw order per row is `a`, `b`, then the noise samples, so a given seeded
/// stream always yields the same batch sequence.
pub fn sample_batch<R: Rng + ?Sized>(spec: &ProblemSpec, rng: &mut R) -> Batch {
    let p = spec.p;
    let n = spec.batch_size;
    let mut inputs = Array2::zeros((n, 2 * p));
    let mut labels = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for mut row in inputs.rows_mut() {
        let a = rng.random_range(0..p);
        let b = rng.random_range(0..p);
        row[a] = 1.0;
        row[p + b] = 1.0;
        if spec.noise_sigma > 0.0 {
            match spec.noise_mode {
                NoiseMode::PerExample => {
                    let z: f64 = rng.sample(StandardNormal);
                    row += spec.noise_sigma * z;
                }
                NoiseMode::PerComponent => {
                    for x in row.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x += spec.noise_sigma * z;
                    }
                }
            }
        }
        labels.push((a + p - b) % p);
        pairs.push((a, b));
    }
    Batch {
        inputs,
        labels,
        pairs,
    }
}

/// All `p^2` clean pairs in row-major `(a, b)` order.
pub fn full_test_grid(p: usize) -> Batch {
    let mut inputs = Array2::zeros((p * p, 2 * p));
    let mut labels = Vec::with_capacity(p * p);
    let mut pairs = Vec::with_capacity(p * p);
    for a in 0..p {
        for b in 0..p {
            let row = a * p + b;
            inputs[[row, a]] = 1.0;
            inputs[[row, p + b]] = 1.0;
            labels.push((a + p - b) % p);
            pairs.push((a, b));
        }
    }
    Batch {
        inputs,
        labels,
        pairs,
    }
}

/// Continuous variant on the unit square: `floor(p (a - b) + 0.5) mod p`.
pub fn continuous_class(a: f64, b: f64, p: usize) -> Result<usize> {
    for v in [a, b] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(v, p));
        }
    }
    if p == 0 {
        return Err(Error::Config("modulus p must be >= 1".into()));
    }
    let raw = (p as f64 * (a - b) + 0.5).floor() as i64;
    Ok(raw.rem_euclid(p as i64) as usize)
}

/// `%.9g`-style rendering.
pub(crate) fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{x:.8e}");
    // rounding can bump the exponent (9.999999999 -> 1.00000000e1)
    let exp = sci
        .split('e')
        .nth(1)
        .and_then(|e| e.parse::<i32>().ok())
        .unwrap_or(exp);
    if !(-5..9).contains(&exp) {
        let (mantissa, _) = sci.split_once('e').unwrap();
        let mantissa = trim_zeros(mantissa);
        return format!(
            "{mantissa}e{}{:02}",
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        );
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV with header `a,b,label,x0..x{2p-1}`.
pub fn write_batch_csv<W: Write>(batch: &Batch, mut out: W) -> std::io::Result<()> {
    let width = batch.inputs.ncols();
    let mut header = String::from("a,b,label");
    for i in 0..width {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(out, "{header}")?;
    for (i, row) in batch.inputs.rows().into_iter().enumerate() {
        let (a, b) = batch
            .pairs
            .get(i)
            .copied()
            .unwrap_or((usize::MAX, usize::MAX));
        let mut line = if a == usize::MAX {
            format!(",,{}", batch.labels[i])
        } else {
            format!("{a},{b},{}", batch.labels[i])
        };
        for x in row {
            line.push(',');
            line.push_str(&fmt_sig9(*x));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_examples() {
        assert_eq!(class_label(0, 0, 2).unwrap(), 0);
        assert_eq!(class_label(1, 1, 2).unwrap(), 0);
        assert_eq!(class_label(1, 0, 2).unwrap(), 1);
        assert_eq!(class_label(0, 1, 2).unwrap(), 1);
        assert_eq!(class_label(3, 4, 5).unwrap(), 4);
        for a in 0..7 {
            assert_eq!(class_label(a, a, 7).unwrap(), 0);
        }
        assert!(class_label(5, 0, 5).is_err());
        assert!(class_label(0, 9, 5).is_err());
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(3, 5).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(one_hot(4, 5).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(one_hot(0, 2).unwrap(), vec![1.0, 0.0]);
        assert!(one_hot(2, 2).is_err());
    }

    #[test]
    fn encode_pair_examples() {
        assert_eq!(
            encode_pair(3, 4, 5).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(encode_pair(0, 0, 2).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(encode_pair(2, 6, 11).unwrap().len(), 22);
    }

    #[test]
    fn continuous_examples() {
        for p in [2, 5, 13] {
            for a in [0.0, 0.25, 0.7, 1.0] {
                assert_eq!(continuous_class(a, a, p).unwrap(), 0);
            }
        }
        assert_eq!(continuous_class(1.0, 0.0, 5).unwrap(), 0);
        // 5 * (-0.3) + 0.5 = -1.0 exactly in f64; floor -> -1 -> 4
        assert_eq!(continuous_class(0.0, 0.3, 5).unwrap(), 4);
        assert!(continuous_class(-0.1, 0.3, 5).is_err());
        assert!(continuous_class(0.1, 1.3, 5).is_err());
    }

    #[test]
    fn grid_p2_labels() {
        let g = full_test_grid(2);
        assert_eq!(g.labels, vec![0, 1, 1, 0]);
        assert_eq!(g.inputs.nrows(), 4);
    }

    #[test]
    fn grid_class_counts_and_distinct_rows() {
        let g = full_test_grid(5);
        let mut counts = [0usize; 5];
        for &l in &g.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [5; 5]);

        let g3 = full_test_grid(3);
        let rows: Vec<Vec<f64>> = g3.inputs.rows().into_iter().map(|r| r.to_vec()).collect();
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                assert_ne!(rows[i], rows[j]);
            }
        }
    }

    #[test]
    fn zero_noise_batch_is_clean() {
        for mode in [NoiseMode::PerExample, NoiseMode::PerComponent] {
            let spec = ProblemSpec::with(2, 0.0, 4).unwrap().with_noise_mode(mode);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let batch = sample_batch(&spec, &mut rng);
            for (i, &(a, b)) in batch.pairs.iter().enumerate() {
                assert_eq!(batch.inputs.row(i).to_vec(), encode_pair(a, b, 2).unwrap());
                assert_eq!(batch.labels[i], class_label(a, b, 2).unwrap());
            }
        }
    }

    fn noise_residuals(mode: NoiseMode, seed: u64) -> Vec<Vec<f64>> {
        let spec = ProblemSpec::with(5, 0.1, 250)
            .unwrap()
            .with_noise_mode(mode);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sample_batch(&spec, &mut rng);
        batch
            .pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let clean = encode_pair(a, b, 5).unwrap();
                batch
                    .inputs
                    .row(i)
                    .iter()
                    .zip(clean)
                    .map(|(x, c)| x - c)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn per_component_noise_is_centered() {
        let res = noise_residuals(NoiseMode::PerComponent, 7);
        let mean = res.iter().flatten().sum::<f64>() / 2500.0;
        assert!(mean.abs() < 3.0 * 0.1 / (2500f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn per_example_noise_is_a_shared_centered_offset() {
        let res = noise_residuals(NoiseMode::PerExample, 7);
        for row in &res {
            assert!(row.iter().all(|&r| (r - row[0]).abs() < 1e-15));
        }
        // 250 independent offsets
        let mean = res.iter().map(|r| r[0]).sum::<f64>() / 250.0;
        assert!(mean.abs() < 3.0 * 0.1 / (250f64).sqrt(), "mean {mean}");
        let var = res.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / 249.0;
        assert!((var.sqrt() - 0.1).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn same_seed_same_batch() {
        let spec = ProblemSpec::new(3).unwrap();
        let a = sample_batch(&spec, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample_batch(&spec, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        assert!(ProblemSpec::new(1).is_err());
        assert!(ProblemSpec::with(5, -0.1, 10).is_err());
        assert!(ProblemSpec::with(5, 0.1, 0).is_err());
        assert!(ProblemSpec::new(6).unwrap().composite);
        assert!(!ProblemSpec::new(7).unwrap().composite);
        assert_eq!(ProblemSpec::new(5).unwrap().batch_size, 250);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-0.123456789123), "-0.123456789");
        assert_eq!(fmt_sig9(1.05), "1.05");
        assert_eq!(fmt_sig9(1.23456789e-7), "1.23456789e-07");
        assert_eq!(fmt_sig9(9.9999999999), "10");
    }

    #[test]
    fn csv_export_layout() {
        let g = full_test_grid(2);
        let mut buf = Vec::new();
        write_batch_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a,b,label,x0,x1,x2,x3");
        assert_eq!(lines[1], "0,0,0,1,0,1,0");
        assert_eq!(lines[3], "1,0,1,0,1,1,0");
        assert_eq!(lines.len(), 5);
    }
}
