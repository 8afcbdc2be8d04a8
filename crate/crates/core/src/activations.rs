use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Middle segment of the three-piece ELU approximation.
pub const L3ELU_SLOPE: f64 = 0.231;
pub const L3ELU_INTERCEPT: f64 = -0.387;

pub const LEAKY_RELU_SLOPE: f64 = 0.2;
pub const BOUNDED_RELU_CAP: f64 = 2.0;
pub const LLELU_LEFT_SLOPE: f64 = 0.2;

/// Left edge of the L3ELU middle segment: `-1 = 0.231 x - 0.387`.
pub const L3ELU_LEFT_KINK: f64 = (-1.0 - L3ELU_INTERCEPT) / L3ELU_SLOPE;
/// Right edge: `0.231 x - 0.387 = x`.
pub const L3ELU_RIGHT_KINK: f64 = L3ELU_INTERCEPT / (1.0 - L3ELU_SLOPE);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Elu,
    Relu,
    LeakyRelu,
    BoundedRelu,
    Lelu,
    L3Elu,
    LlElu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 9] = [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Elu,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::BoundedRelu,
        ActivationKind::Lelu,
        ActivationKind::L3Elu,
        ActivationKind::LlElu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Elu => "elu",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky-relu",
            ActivationKind::BoundedRelu => "bounded-relu",
            ActivationKind::Lelu => "lelu",
            ActivationKind::L3Elu => "l3elu",
            ActivationKind::LlElu => "llelu",
        }
    }

    pub fn is_differentiable(self) -> bool {
        matches!(
            self,
            ActivationKind::Sigmoid | ActivationKind::Tanh | ActivationKind::Elu
        )
    }

    /// Points where the derivative jumps.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            ActivationKind::Sigmoid | ActivationKind::Tanh | ActivationKind::Elu => &[],
            ActivationKind::Relu | ActivationKind::LeakyRelu => &[0.0],
            ActivationKind::BoundedRelu => &[0.0, BOUNDED_RELU_CAP],
            ActivationKind::Lelu | ActivationKind::LlElu => &[-1.0],
            ActivationKind::L3Elu => &[L3ELU_LEFT_KINK, L3ELU_RIGHT_KINK],
        }
    }

    /// Distance from `x` to the nearest kink, `inf` for smooth kinds.
    pub fn kink_distance(self, x: f64) -> f64 {
        self.kinks()
            .iter()
            .map(|k| (x - k).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn activate(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            ActivationKind::BoundedRelu => x.clamp(0.0, BOUNDED_RELU_CAP),
            _ => max_of_segments(self, x).0,
        }
    }

    /// Derivative, taking the right-hand side at kinks.
    pub fn grad(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = self.activate(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            ActivationKind::BoundedRelu => {
                if (0.0..BOUNDED_RELU_CAP).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => max_of_segments(self, x).1,
        }
    }
}

/// Evaluates a convex piecewise-linear activation as the max of its affine
/// pieces. Returns `(value, slope of the active piece)`; on a tie the steeper
/// piece wins, which is the right-hand derivative.
fn max_of_segments(kind: ActivationKind, x: f64) -> (f64, f64) {
    let pieces: &[(f64, f64)] = match kind {
        ActivationKind::Relu => &[(0.0, 0.0), (1.0, 0.0)],
        ActivationKind::LeakyRelu => &[(LEAKY_RELU_SLOPE, 0.0), (1.0, 0.0)],
        ActivationKind::Lelu => &[(0.0, -1.0), (1.0, 0.0)],
        ActivationKind::L3Elu => &[(0.0, -1.0), (L3ELU_SLOPE, L3ELU_INTERCEPT), (1.0, 0.0)],
        // -1 + (x + 1) / 5
        ActivationKind::LlElu => &[(LLELU_LEFT_SLOPE, LLELU_LEFT_SLOPE - 1.0), (1.0, 0.0)],
        _ => unreachable!("{kind} is not a max-of-segments activation"),
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &(slope, intercept) in pieces {
        let y = slope * x + intercept;
        if y > best.0 || (y == best.0 && slope > best.1) {
            best = (y, slope);
        }
    }
    best
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::UnknownName {
                what: "activation",
                name: s.to_string(),
                valid: ActivationKind::ALL.map(|k| k.name()).join(", "),
            })
    }
}
