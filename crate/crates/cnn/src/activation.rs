use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    ReLU,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::ReLU, Activation::Sigmoid, Activation::Tanh];

    pub fn label(self) -> &'static str {
        match self {
            Activation::ReLU => "ReLU",
            Activation::Sigmoid => "Sigmoid",
            Activation::Tanh => "Tanh",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the output `a = apply(z)`; for ReLU,
    /// `a > 0` exactly when `z > 0`.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

pub fn activate(a: Activation, x: f64) -> f64 {
    a.apply(x)
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::ReLU),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(crate::Error::InvalidParameter {
                name: "activation",
                reason: format!("unknown activation {s:?} (ReLU, Sigmoid, Tanh)"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        assert_eq!(activate(Activation::ReLU, -2.0), 0.0);
        assert_eq!(activate(Activation::ReLU, 3.0), 3.0);
        assert_eq!(activate(Activation::Sigmoid, 0.0), 0.5);
        assert_eq!(activate(Activation::Tanh, 0.0), 0.0);
    }

    #[test]
    fn parse_roundtrip() {
        for a in Activation::ALL {
            assert_eq!(a.label().parse::<Activation>().unwrap(), a);
        }
        assert!("softplus".parse::<Activation>().is_err());
    }
}
