use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::hat;

/// Hidden-layer nonlinearity. Derivatives at kinks take the right-hand
/// piece for Hat; ReLU uses 0 at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Hat,
    /// `x ↦ Hat(alpha·x)`.
    ScaledHat { alpha: f64 },
    Sin,
}

#[inline]
fn hat_deriv(p: f64) -> f64 {
    if (0.0..1.0).contains(&p) {
        1.0
    } else if (1.0..2.0).contains(&p) {
        -1.0
    } else {
        0.0
    }
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Activation::ScaledHat { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::arg(format!("scaled hat needs alpha > 0, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, p: f64) -> f64 {
        match *self {
            Activation::Tanh => p.tanh(),
            Activation::Relu => p.max(0.0),
            Activation::Hat => hat(p),
            Activation::ScaledHat { alpha } => hat(alpha * p),
            Activation::Sin => p.sin(),
        }
    }

    #[inline]
    pub fn deriv(&self, p: f64) -> f64 {
        match *self {
            Activation::Tanh => {
                let t = p.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Hat => hat_deriv(p),
            Activation::ScaledHat { alpha } => alpha * hat_deriv(alpha * p),
            Activation::Sin => p.cos(),
        }
    }

    /// Derivative given both the pre-activation `p` and `a = eval(p)`.
    #[inline]
    pub(crate) fn deriv_with_value(&self, p: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            _ => self.deriv(p),
        }
    }

    /// Points where the activation is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Activation::Relu => vec![0.0],
            Activation::Hat => vec![0.0, 1.0, 2.0],
            Activation::ScaledHat { alpha } => vec![0.0, 1.0 / alpha, 2.0 / alpha],
            Activation::Tanh | Activation::Sin => Vec::new(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => f.write_str("tanh"),
            Activation::Relu => f.write_str("relu"),
            Activation::Hat => f.write_str("hat"),
            Activation::ScaledHat { alpha } => write!(f, "scaled_hat:{alpha}"),
            Activation::Sin => f.write_str("sin"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// `tanh`, `relu`, `hat`, `sin` or `scaled_hat:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let a = match lower.as_str() {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "hat" => Activation::Hat,
            "sin" => Activation::Sin,
            other => match other.strip_prefix("scaled_hat:") {
                Some(v) => Activation::ScaledHat {
                    alpha: v
                        .parse()
                        .map_err(|_| Error::arg(format!("bad scaled_hat alpha {v:?}")))?,
                },
                None => return Err(Error::arg(format!("unknown activation {s:?}"))),
            },
        };
        a.validate()?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_examples() {
        let h = Activation::Hat;
        assert_eq!(h.eval(0.5), 0.5);
        assert_eq!(h.eval(1.5), 0.5);
        assert_eq!(h.eval(2.5), 0.0);
        assert_eq!(Activation::ScaledHat { alpha: 100.0 }.eval(0.005), 0.5);
        assert_eq!(Activation::Relu.eval(-3.0), 0.0);
        assert_eq!(Activation::Relu.deriv(-3.0), 0.0);
    }

    #[test]
    fn kink_derivatives() {
        let h = Activation::Hat;
        assert_eq!((h.deriv(0.0), h.deriv(1.0), h.deriv(2.0)), (1.0, -1.0, 0.0));
        assert_eq!(Activation::Relu.deriv(0.0), 0.0);
        let s = Activation::ScaledHat { alpha: 4.0 };
        assert_eq!(s.deriv(0.1), 4.0);
        assert_eq!(s.deriv(0.3), -4.0);
    }

    #[test]
    fn smooth_derivatives_match_finite_differences() {
        for a in [Activation::Tanh, Activation::Sin] {
            for p in [-2.0, -0.3, 0.0, 0.7, 3.1] {
                let fd = (a.eval(p + 1e-6) - a.eval(p - 1e-6)) / 2e-6;
                assert!((fd - a.deriv(p)).abs() < 1e-9);
                assert!((a.deriv(p) - a.deriv_with_value(p, a.eval(p))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        for a in [
            Activation::Tanh,
            Activation::Relu,
            Activation::Hat,
            Activation::Sin,
            Activation::ScaledHat { alpha: 12.5 },
        ] {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
        assert!("scaled_hat:-1".parse::<Activation>().is_err());
        assert!("gelu".parse::<Activation>().is_err());
    }
}
