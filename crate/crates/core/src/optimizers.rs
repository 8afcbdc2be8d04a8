//! Per-parameter update rules.
//!
//! Every optimizer works on a list of flat tensors (the network's `w1, b1, w2,
//! b2`) and keeps its slot buffers in [`OptimizerState`] with matching shapes.
//! The loss is passed to every step; only the L4 wrappers read it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Loss-based step size: `eta = alpha (L - gamma L_min) / (g . v + eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L4Params {
    pub alpha: f64,
    pub gamma: f64,
    pub gamma0: f64,
    /// `L_min` is inflated by `1 + 1/tau` after each step so old minima fade.
    pub tau: f64,
    pub eps: f64,
}

impl Default for L4Params {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            gamma: 0.9,
            gamma0: 0.75,
            tau: 1000.0,
            eps: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OptimizerKind {
    Vanilla,
    Momentum { mu: f64 },
    Nesterov { mu: f64 },
    Adagrad { eps: f64, init_acc: f64 },
    Adadelta { rho: f64, eps: f64 },
    RmsProp { decay: f64, eps: f64 },
    Adam(AdamParams),
    L4Adam { l4: L4Params, adam: AdamParams },
    L4Mom { l4: L4Params, mu: f64 },
}

pub const DEFAULT_MOMENTUM: f64 = 0.9;

impl OptimizerKind {
    pub const NAMES: [&'static str; 9] = [
        "vanilla", "momentum", "nesterov", "adagrad", "adadelta", "rmsprop", "adam", "l4adam",
        "l4mom",
    ];

    pub fn all_defaults() -> Vec<OptimizerKind> {
        Self::NAMES
            .iter()
            .map(|n| Self::from_name(n).expect("known name"))
            .collect()
    }

    /// The named optimizer with default hyperparameters.
    pub fn from_name(name: &str) -> Result<Self, Error> {
        let kind = match name.to_ascii_lowercase().as_str() {
            "vanilla" => OptimizerKind::Vanilla,
            "momentum" => OptimizerKind::Momentum {
                mu: DEFAULT_MOMENTUM,
            },
            "nesterov" => OptimizerKind::Nesterov {
                mu: DEFAULT_MOMENTUM,
            },
            "adagrad" => OptimizerKind::Adagrad {
                eps: 1e-8,
                init_acc: 0.1,
            },
            "adadelta" => OptimizerKind::Adadelta {
                rho: 0.95,
                eps: 1e-8,
            },
            "rmsprop" => OptimizerKind::RmsProp {
                decay: 0.9,
                eps: 1e-10,
            },
            "adam" => OptimizerKind::Adam(AdamParams::default()),
            "l4adam" => OptimizerKind::L4Adam {
                l4: L4Params::default(),
                adam: AdamParams::default(),
            },
            "l4mom" => OptimizerKind::L4Mom {
                l4: L4Params::default(),
                mu: DEFAULT_MOMENTUM,
            },
            _ => {
                return Err(Error::UnknownName {
                    what: "optimizer",
                    name: name.to_string(),
                    valid: Self::NAMES.join(", "),
                })
            }
        };
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Vanilla => "vanilla",
            OptimizerKind::Momentum { .. } => "momentum",
            OptimizerKind::Nesterov { .. } => "nesterov",
            OptimizerKind::Adagrad { .. } => "adagrad",
            OptimizerKind::Adadelta { .. } => "adadelta",
            OptimizerKind::RmsProp { .. } => "rmsprop",
            OptimizerKind::Adam(_) => "adam",
            OptimizerKind::L4Adam { .. } => "l4adam",
            OptimizerKind::L4Mom { .. } => "l4mom",
        }
    }

    /// Overrides one hyperparameter by key. Unknown keys for this optimizer
    /// are rejected.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<(), Error> {
        let name = self.name();
        let mut next = *self;
        let slot: Option<&mut f64> = match &mut next {
            OptimizerKind::Vanilla => None,
            OptimizerKind::Momentum { mu } | OptimizerKind::Nesterov { mu } => match key {
                "mu" | "momentum" => Some(mu),
                _ => None,
            },
            OptimizerKind::Adagrad { eps, init_acc } => match key {
                "eps" => Some(eps),
                "init_acc" => Some(init_acc),
                _ => None,
            },
            OptimizerKind::Adadelta { rho, eps } => match key {
                "rho" => Some(rho),
                "eps" => Some(eps),
                _ => None,
            },
            OptimizerKind::RmsProp { decay, eps } => match key {
                "decay" => Some(decay),
                "eps" => Some(eps),
                _ => None,
            },
            OptimizerKind::Adam(adam) => adam_slot(adam, key),
            OptimizerKind::L4Adam { l4, adam } => l4_slot(l4, key).or_else(|| adam_slot(adam, key)),
            OptimizerKind::L4Mom { l4, mu } => match key {
                "mu" | "momentum" => Some(mu),
                _ => l4_slot(l4, key),
            },
        };
        match slot {
            Some(s) => {
                *s = value;
                next.validate()?;
                *self = next;
                Ok(())
            }
            None => Err(Error::Config(format!(
                "optimizer {name} has no hyperparameter `{key}`"
            ))),
        }
    }

    /// Parses and applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), Error> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("`{value}` is not a number")))?;
        self.set_param(key.trim(), value)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        let adam = |a: &AdamParams| {
            unit("beta1", a.beta1)?;
            unit("beta2", a.beta2)?;
            positive("eps", a.eps)
        };
        let l4 = |l: &L4Params| {
            if !(l.alpha > 0.0 && l.alpha <= 1.0) {
                return Err(Error::Config(format!(
                    "alpha must lie in (0, 1], got {}",
                    l.alpha
                )));
            }
            unit("gamma", l.gamma)?;
            unit("gamma0", l.gamma0)?;
            positive("tau", l.tau)?;
            positive("l4 eps", l.eps)
        };
        match self {
            OptimizerKind::Vanilla => Ok(()),
            OptimizerKind::Momentum { mu } | OptimizerKind::Nesterov { mu } => unit("mu", *mu),
            OptimizerKind::Adagrad { eps, init_acc } => {
                positive("eps", *eps)?;
                if *init_acc >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config("init_acc must be >= 0".into()))
                }
            }
            OptimizerKind::Adadelta { rho, eps } => {
                unit("rho", *rho)?;
                positive("eps", *eps)
            }
            OptimizerKind::RmsProp { decay, eps } => {
                unit("decay", *decay)?;
                positive("eps", *eps)
            }
            OptimizerKind::Adam(a) => adam(a),
            OptimizerKind::L4Adam { l4: l, adam: a } => {
                l4(l)?;
                adam(a)
            }
            OptimizerKind::L4Mom { l4: l, mu } => {
                l4(l)?;
                unit("mu", *mu)
            }
        }
    }
}

fn adam_slot<'a>(adam: &'a mut AdamParams, key: &str) -> Option<&'a mut f64> {
    match key {
        "beta1" => Some(&mut adam.beta1),
        "beta2" => Some(&mut adam.beta2),
        "eps" => Some(&mut adam.eps),
        _ => None,
    }
}

fn l4_slot<'a>(l4: &'a mut L4Params, key: &str) -> Option<&'a mut f64> {
    match key {
        "alpha" => Some(&mut l4.alpha),
        "gamma" => Some(&mut l4.gamma),
        "gamma0" => Some(&mut l4.gamma0),
        "tau" => Some(&mut l4.tau),
        "l4_eps" => Some(&mut l4.eps),
        _ => None,
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s)
    }
}

/// Slot buffers, one vector per parameter tensor.
///
/// | optimizer          | `first`   | `second`  |
/// |--------------------|-----------|-----------|
/// | momentum, nesterov, l4mom | accumulator | - |
/// | adagrad            | -         | sum of g^2 |
/// | adadelta           | E[dx^2]   | E[g^2]    |
/// | rmsprop            | -         | E[g^2]    |
/// | adam, l4adam       | m         | v         |
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub t: u64,
    /// Running minimum loss for the L4 wrappers; `None` before the first step.
    pub min_loss: Option<f64>,
}

impl OptimizerState {
    pub fn new(kind: &OptimizerKind, shapes: &[usize]) -> Self {
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let second = match kind {
            OptimizerKind::Adagrad { init_acc, .. } => {
                shapes.iter().map(|&n| vec![*init_acc; n]).collect()
            }
            _ => zeros(),
        };
        Self {
            first: zeros(),
            second,
            t: 0,
            min_loss: None,
        }
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ThisError)]
#[error("non-finite {what} at step {step}")]
pub struct Diverged {
    pub what: &'static str,
    pub step: u64,
}

/// What a step did, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// The learning rate actually applied (the L4 step size for L4 variants).
    pub step_size: f64,
}

/// L4 step size; zero when the loss is at or below the target floor or the
/// direction is not a descent direction.
pub fn l4_step_size(alpha: f64, loss: f64, floor: f64, g_dot_v: f64, eps: f64) -> f64 {
    if g_dot_v <= 0.0 || loss <= floor {
        return 0.0;
    }
    alpha * (loss - floor) / (g_dot_v + eps)
}

/// Applies exactly one update in place.
///
/// Fails with [`Diverged`] (leaving params and state untouched) when the loss
/// or any gradient is not finite.
pub fn step(
    kind: &OptimizerKind,
    state: &mut OptimizerState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    lr: f64,
    loss: f64,
) -> Result<StepInfo, Diverged> {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.first.len());
    if !loss.is_finite() {
        return Err(Diverged {
            what: "loss",
            step: state.t,
        });
    }
    if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(Diverged {
            what: "gradient",
            step: state.t,
        });
    }
    state.t += 1;
    let t = state.t;
    let mut step_size = lr;

    let tensors = params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()));

    match *kind {
        OptimizerKind::Vanilla => {
            for ((theta, g), _) in tensors {
                for (x, g) in theta.iter_mut().zip(g.iter()) {
                    *x -= lr * g;
                }
            }
        }
        OptimizerKind::Momentum { mu } => {
            for ((theta, g), (acc, _)) in tensors {
                for ((x, g), a) in theta.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                    *a = mu * *a + g;
                    *x -= lr * *a;
                }
            }
        }
        OptimizerKind::Nesterov { mu } => {
            for ((theta, g), (acc, _)) in tensors {
                for ((x, g), a) in theta.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                    *a = mu * *a + g;
                    *x -= lr * (g + mu * *a);
                }
            }
        }
        OptimizerKind::Adagrad { eps, .. } => {
            for ((theta, g), (_, sum_sq)) in tensors {
                for ((x, g), s) in theta.iter_mut().zip(g.iter()).zip(sum_sq.iter_mut()) {
                    *s += g * g;
                    *x -= lr * g / (s.sqrt() + eps);
                }
            }
        }
        OptimizerKind::Adadelta { rho, eps } => {
            for ((theta, g), (acc_dx, acc_g)) in tensors {
                for (((x, g), edx), eg) in theta
                    .iter_mut()
                    .zip(g.iter())
                    .zip(acc_dx.iter_mut())
                    .zip(acc_g.iter_mut())
                {
                    *eg = rho * *eg + (1.0 - rho) * g * g;
                    let dx = (*edx + eps).sqrt() / (*eg + eps).sqrt() * g;
                    *edx = rho * *edx + (1.0 - rho) * dx * dx;
                    *x -= lr * dx;
                }
            }
        }
        OptimizerKind::RmsProp { decay, eps } => {
            for ((theta, g), (_, ms)) in tensors {
                for ((x, g), m) in theta.iter_mut().zip(g.iter()).zip(ms.iter_mut()) {
                    *m = decay * *m + (1.0 - decay) * g * g;
                    *x -= lr * g / (*m + eps).sqrt();
                }
            }
        }
        OptimizerKind::Adam(adam) => {
            let c1 = 1.0 - adam.beta1.powi(t as i32);
            let c2 = 1.0 - adam.beta2.powi(t as i32);
            for ((theta, g), (m, v)) in tensors {
                for (((x, g), m), v) in theta
                    .iter_mut()
                    .zip(g.iter())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    let (mh, vh) = adam_moments(&adam, g, m, v, c1, c2);
                    *x -= lr * mh / (vh.sqrt() + adam.eps);
                }
            }
        }
        OptimizerKind::L4Adam { l4, adam } => {
            let c1 = 1.0 - adam.beta1.powi(t as i32);
            let c2 = 1.0 - adam.beta2.powi(t as i32);
            let mut directions = Vec::with_capacity(grads.len());
            for ((_, g), (m, v)) in tensors {
                let dir: Vec<f64> = g
                    .iter()
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                    .map(|((g, m), v)| {
                        let (mh, vh) = adam_moments(&adam, g, m, v, c1, c2);
                        mh / (vh.sqrt() + adam.eps)
                    })
                    .collect();
                directions.push(dir);
            }
            step_size = l4_apply(&l4, &mut state.min_loss, params, grads, &directions, loss);
        }
        OptimizerKind::L4Mom { l4, mu } => {
            let mut directions = Vec::with_capacity(grads.len());
            for ((_, g), (acc, _)) in tensors {
                for (a, g) in acc.iter_mut().zip(g.iter()) {
                    *a = mu * *a + g;
                }
                directions.push(acc.clone());
            }
            step_size = l4_apply(&l4, &mut state.min_loss, params, grads, &directions, loss);
        }
    }
    Ok(StepInfo { step_size })
}

#[inline]
fn adam_moments(
    adam: &AdamParams,
    g: &f64,
    m: &mut f64,
    v: &mut f64,
    c1: f64,
    c2: f64,
) -> (f64, f64) {
    *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
    *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
    (*m / c1, *v / c2)
}

/// Shared L4 bookkeeping: update `L_min`, size the step along `directions`,
/// apply it, then let `L_min` drift upwards by `1 + 1/tau`.
fn l4_apply(
    l4: &L4Params,
    min_loss: &mut Option<f64>,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    directions: &[Vec<f64>],
    loss: f64,
) -> f64 {
    let current_min = match *min_loss {
        None => l4.gamma0 * loss,
        Some(m) => m.min(loss),
    };
    let g_dot_v: f64 = grads
        .iter()
        .zip(directions)
        .map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let eta = l4_step_size(l4.alpha, loss, l4.gamma * current_min, g_dot_v, l4.eps);
    for (theta, d) in params.iter_mut().zip(directions) {
        for (x, d) in theta.iter_mut().zip(d) {
            *x -= eta * d;
        }
    }
    *min_loss = Some(current_min * (1.0 + 1.0 / l4.tau));
    eta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_step(
        kind: &OptimizerKind,
        state: &mut OptimizerState,
        theta: &mut f64,
        g: f64,
        lr: f64,
        loss: f64,
    ) -> StepInfo {
        let mut buf = [*theta];
        let info = step(kind, state, &mut [&mut buf[..]], &[&[g][..]], lr, loss).unwrap();
        *theta = buf[0];
        info
    }

    #[test]
    fn vanilla_step() {
        let kind = OptimizerKind::Vanilla;
        let mut st = OptimizerState::new(&kind, &[1]);
        let mut theta = 1.0;
        scalar_step(&kind, &mut st, &mut theta, 0.5, 0.1, 0.0);
        assert_abs_diff_eq!(theta, 0.95, epsilon = 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn init_state_slots() {
        let shapes = [6, 3, 9, 3];
        let adam = OptimizerKind::from_name("adam").unwrap();
        let st = OptimizerState::new(&adam, &shapes);
        assert_eq!(st.shapes(), shapes.to_vec());
        assert!(st
            .first
            .iter()
            .chain(&st.second)
            .all(|v| v.iter().all(|&x| x == 0.0)));
        assert_eq!(st.t, 0);
        assert_eq!(st.min_loss, None);
        let ada = OptimizerKind::from_name("adagrad").unwrap();
        let st = OptimizerState::new(&ada, &shapes);
        assert!(st.second.iter().all(|v| v.iter().all(|&x| x == 0.1)));
    }

    #[test]
    fn adagrad_first_step() {
        let kind = OptimizerKind::from_name("adagrad").unwrap();
        let mut st = OptimizerState::new(&kind, &[1]);
        let mut theta = 0.0;
        scalar_step(&kind, &mut st, &mut theta, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(theta, -1.0 / (1.1f64.sqrt() + 1e-8), epsilon = 1e-12);
        assert_abs_diff_eq!(-theta, 0.95346, epsilon = 1e-5);
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let kind = OptimizerKind::from_name("adam").unwrap();
        for g in [1e-3, 0.5, -7.0, 300.0] {
            let mut st = OptimizerState::new(&kind, &[1]);
            let mut theta = 0.0;
            scalar_step(&kind, &mut st, &mut theta, g, 0.1, 0.0);
            let exact = -0.1 * g / (g.abs() + 1e-8);
            assert_abs_diff_eq!(theta, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn adam_scale_covariance() {
        let kind = OptimizerKind::from_name("adam").unwrap();
        let lr = 0.1;
        let update = |g: f64| {
            let mut st = OptimizerState::new(&kind, &[1]);
            let mut theta = 0.0;
            scalar_step(&kind, &mut st, &mut theta, g, lr, 0.0);
            theta.abs()
        };
        for g in [0.01f64, 0.3, 2.0] {
            for c in [1e-2, 3.0, 1e4] {
                // |g| / (|g| + eps) differs from 1 by about eps / |g|
                let slack = 2.0 * lr * 1e-8 / (c * g).min(g) + 1e-15;
                assert!((update(c * g) - update(g)).abs() <= slack);
            }
        }
    }

    #[test]
    fn divergence_leaves_state_untouched() {
        let kind = OptimizerKind::from_name("adam").unwrap();
        let mut st = OptimizerState::new(&kind, &[2]);
        let mut p = [1.0, 2.0];
        let err = step(
            &kind,
            &mut st,
            &mut [&mut p[..]],
            &[&[f64::NAN, 0.0][..]],
            0.1,
            1.0,
        )
        .unwrap_err();
        assert_eq!(err.what, "gradient");
        assert_eq!(st.t, 0);
        assert_eq!(p, [1.0, 2.0]);
        let err = step(
            &kind,
            &mut st,
            &mut [&mut p[..]],
            &[&[0.0, 0.0][..]],
            0.1,
            f64::INFINITY,
        )
        .unwrap_err();
        assert_eq!(err.what, "loss");
    }

    #[test]
    fn l4_step_size_properties() {
        assert_eq!(l4_step_size(0.15, 0.5, 0.5, 1.0, 1e-12), 0.0);
        assert_eq!(l4_step_size(0.15, 0.4, 0.5, 1.0, 1e-12), 0.0);
        assert_eq!(l4_step_size(0.15, 0.6, 0.5, -1.0, 1e-12), 0.0);
        assert!(l4_step_size(0.15, 0.6, 0.5, 1.0, 1e-12) > 0.0);
    }

    #[test]
    fn l4_first_step_uses_gamma0() {
        let kind = OptimizerKind::from_name("l4mom").unwrap();
        let mut st = OptimizerState::new(&kind, &[1]);
        let mut theta = 0.0;
        let (g, loss) = (2.0, 1.0);
        let info = scalar_step(&kind, &mut st, &mut theta, g, 123.0, loss);
        // v = g on the first momentum step, floor = 0.9 * 0.75 * loss
        let eta = 0.15 * (loss - 0.9 * 0.75 * loss) / (g * g + 1e-12);
        assert_abs_diff_eq!(info.step_size, eta, epsilon = 1e-15);
        assert_abs_diff_eq!(theta, -eta * g, epsilon = 1e-15);
        assert_abs_diff_eq!(st.min_loss.unwrap(), 0.75 * 1.001, epsilon = 1e-15);
    }

    #[test]
    fn overrides() {
        let mut k = OptimizerKind::from_name("momentum").unwrap();
        k.apply_override("mu=0.5").unwrap();
        assert_eq!(k, OptimizerKind::Momentum { mu: 0.5 });
        assert!(k.apply_override("mu=1.5").is_err());
        assert!(k.apply_override("beta1=0.5").is_err());
        assert!(k.apply_override("mu").is_err());
        let mut l4 = OptimizerKind::from_name("l4adam").unwrap();
        l4.apply_override("alpha=0.2").unwrap();
        l4.apply_override("beta2=0.99").unwrap();
        match l4 {
            OptimizerKind::L4Adam { l4, adam } => {
                assert_eq!(l4.alpha, 0.2);
                assert_eq!(adam.beta2, 0.99);
            }
            _ => unreachable!(),
        }
        assert!("sgd".parse::<OptimizerKind>().is_err());
        for name in OptimizerKind::NAMES {
            assert_eq!(name.parse::<OptimizerKind>().unwrap().name(), name);
        }
    }

    #[test]
    fn serde_round_trip() {
        for kind in OptimizerKind::all_defaults() {
            let json = serde_json::to_string(&kind).unwrap();
            let back: OptimizerKind = serde_json::from_str(&json).unwrap();
            assert_eq!(back, kind);
        }
    }
}
