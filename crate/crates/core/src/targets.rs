//! Target functions for the training experiments.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_pgm, GrayImage};

/// Serializable description of a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// `sin x + sin 3x + sin 5x` on `[−π, π]`.
    Sum135,
    /// `Σ_{k=1}^{10} sin(10πkx + c_k)` on `[0, 1]`, phases `c_k ~ U(0, 2π)`.
    TenFreq { seed: u64 },
    /// `sin(2πx₁)sin(2πx₂) + sin(10πx₁)sin(10πx₂)` on `[0, 1]²`.
    TwoD,
    /// `u₀ + 0.2 sin(2kπx₁) sin(2kπx₂)` on `[0, 1]²`.
    NoisyProduct2D { k: u32 },
    /// `u₀ + 0.5 Π sin(2kπx_i)` on `[0, 1]³`.
    NoisyProduct3D { k: u32 },
    /// `u₀ + 0.5 sin(2πk‖x‖)`, optionally divided by `‖x‖`, on `[0, 1]³`.
    RadialNoise3D { k: u32, variant: RadialVariant },
    /// `10(sin x + sin 3x)` on `[−π, 0)`, `10(sin 23x + sin 137x + sin 203x)` on `[0, π]`.
    PiecewiseHighFreq,
    /// Grayscale PGM image on `[0, 1]²`.
    Image2D { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialVariant {
    Plain,
    Divided,
}

/// A target ready for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Sum135,
    TenFreq { phases: [f64; 10] },
    TwoD,
    NoisyProduct2D { k: u32 },
    NoisyProduct3D { k: u32 },
    RadialNoise3D { k: u32, variant: RadialVariant },
    PiecewiseHighFreq,
    Image2D(GrayImage),
}

/// `c_k`, `k = 1..=10`, drawn from `U(0, 2π)`.
pub fn ten_freq_phases(seed: u64) -> [f64; 10] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = [0.0; 10];
    for v in &mut p {
        *v = rng.gen_range(0.0..TAU);
    }
    p
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target> {
        let check_k = |k: u32| {
            if k == 0 {
                Err(Error::arg("noise frequency k must be at least 1"))
            } else {
                Ok(k)
            }
        };
        Ok(match self {
            TargetSpec::Sum135 => Target::Sum135,
            TargetSpec::TenFreq { seed } => Target::TenFreq {
                phases: ten_freq_phases(*seed),
            },
            TargetSpec::TwoD => Target::TwoD,
            TargetSpec::NoisyProduct2D { k } => Target::NoisyProduct2D { k: check_k(*k)? },
            TargetSpec::NoisyProduct3D { k } => Target::NoisyProduct3D { k: check_k(*k)? },
            TargetSpec::RadialNoise3D { k, variant } => Target::RadialNoise3D {
                k: check_k(*k)?,
                variant: *variant,
            },
            TargetSpec::PiecewiseHighFreq => Target::PiecewiseHighFreq,
            TargetSpec::Image2D { path } => Target::Image2D(load_pgm(path)?),
        })
    }
}

fn s2pi(a: f64) -> f64 {
    (TAU * a).sin()
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Sum135 | Target::TenFreq { .. } | Target::PiecewiseHighFreq => 1,
            Target::TwoD | Target::NoisyProduct2D { .. } | Target::Image2D(_) => 2,
            Target::NoisyProduct3D { .. } | Target::RadialNoise3D { .. } => 3,
        }
    }

    /// Per-coordinate interval of the domain.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Target::Sum135 | Target::PiecewiseHighFreq => (-PI, PI),
            _ => (0.0, 1.0),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let (lo, hi) = self.domain();
        if x.iter().any(|v| !(lo..=hi).contains(v)) {
            return Err(Error::arg(format!("point {x:?} outside [{lo}, {hi}]^{}", self.dim())));
        }
        Ok(match self {
            Target::Sum135 => x[0].sin() + (3.0 * x[0]).sin() + (5.0 * x[0]).sin(),
            Target::TenFreq { phases } => phases
                .iter()
                .enumerate()
                .map(|(i, c)| (10.0 * PI * (i + 1) as f64 * x[0] + c).sin())
                .sum(),
            Target::TwoD => s2pi(x[0]) * s2pi(x[1]) + s2pi(5.0 * x[0]) * s2pi(5.0 * x[1]),
            Target::NoisyProduct2D { k } => {
                let k = *k as f64;
                s2pi(x[0]) * s2pi(x[1]) + 0.2 * s2pi(k * x[0]) * s2pi(k * x[1])
            }
            Target::NoisyProduct3D { k } => {
                let k = *k as f64;
                s2pi(x[0]) * s2pi(x[1]) * s2pi(x[2])
                    + 0.5 * s2pi(k * x[0]) * s2pi(k * x[1]) * s2pi(k * x[2])
            }
            Target::RadialNoise3D { k, variant } => {
                let k = *k as f64;
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let noise = match variant {
                    RadialVariant::Plain => 0.5 * s2pi(k * r),
                    RadialVariant::Divided if r == 0.0 => 0.5 * TAU * k,
                    RadialVariant::Divided => 0.5 * s2pi(k * r) / r,
                };
                s2pi(x[0]) * s2pi(x[1]) * s2pi(x[2]) + noise
            }
            Target::PiecewiseHighFreq => {
                let t = x[0];
                if t < 0.0 {
                    10.0 * (t.sin() + (3.0 * t).sin())
                } else {
                    10.0 * ((23.0 * t).sin() + (137.0 * t).sin() + (203.0 * t).sin())
                }
            }
            Target::Image2D(img) => img.eval(x[0], x[1]),
        })
    }

    /// The noise-free part `u₀` for the noisy variants; `None` otherwise.
    pub fn clean_part(&self, x: &[f64]) -> Option<f64> {
        match self {
            Target::NoisyProduct2D { .. } => Some(s2pi(x[0]) * s2pi(x[1])),
            Target::NoisyProduct3D { .. } | Target::RadialNoise3D { .. } => {
                Some(s2pi(x[0]) * s2pi(x[1]) * s2pi(x[2]))
            }
            _ => None,
        }
    }
}

pub fn eval_target(target: &Target, x: &[f64]) -> Result<f64> {
    target.eval(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Tensor grid with endpoints included; a count of 1 gives the midpoint.
    Grid { counts: Vec<usize> },
    /// Independent uniform points in the domain box.
    Random { count: usize, seed: u64 },
}

/// Sample points (last coordinate varying fastest on grids) and target values.
pub fn sample_grid(target: &Target, sampling: &Sampling) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let d = target.dim();
    let (lo, hi) = target.domain();
    let points: Vec<Vec<f64>> = match sampling {
        Sampling::Grid { counts } => {
            if counts.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: counts.len(),
                });
            }
            if counts.iter().any(|&c| c == 0) {
                return Err(Error::arg("grid counts must be at least 1"));
            }
            let axes: Vec<Vec<f64>> = counts.iter().map(|&c| axis(lo, hi, c)).collect();
            let total: usize = counts.iter().product();
            (0..total)
                .map(|mut idx| {
                    let mut p = vec![0.0; d];
                    for dim in (0..d).rev() {
                        p[dim] = axes[dim][idx % counts[dim]];
                        idx /= counts[dim];
                    }
                    p
                })
                .collect()
        }
        Sampling::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*count)
                .map(|_| (0..d).map(|_| rng.gen_range(lo..=hi)).collect())
                .collect()
        }
    };
    let values = points
        .iter()
        .map(|p| target.eval(p))
        .collect::<Result<Vec<f64>>>()?;
    Ok((points, values))
}

/// `count` points from `lo` to `hi` inclusive; the midpoint when `count == 1`.
pub fn axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let last = (count - 1) as f64;
    (0..count)
        .map(|j| {
            if j == count - 1 {
                hi
            } else {
                lo + (hi - lo) * j as f64 / last
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(spec: TargetSpec) -> Target {
        spec.build().unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(t(TargetSpec::Sum135).eval(&[0.0]).unwrap(), 0.0);
        assert!((t(TargetSpec::TwoD).eval(&[0.25, 0.25]).unwrap() - 2.0).abs() < 1e-14);
        let v = t(TargetSpec::NoisyProduct2D { k: 3 }).eval(&[0.5, 0.5]).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn domain_and_shape_errors() {
        let s = t(TargetSpec::Sum135);
        assert!(s.eval(&[4.0]).is_err());
        assert!(s.eval(&[0.0, 0.0]).is_err());
        assert!(t(TargetSpec::TwoD).eval(&[0.5, -0.1]).is_err());
        assert!(TargetSpec::NoisyProduct2D { k: 0 }.build().is_err());
    }

    #[test]
    fn radial_divided_limit_at_origin() {
        let r = t(TargetSpec::RadialNoise3D {
            k: 3,
            variant: RadialVariant::Divided,
        });
        let at0 = r.eval(&[0.0, 0.0, 0.0]).unwrap();
        assert!((at0 - 0.5 * TAU * 3.0).abs() < 1e-15);
        let near = r.eval(&[1e-9, 0.0, 0.0]).unwrap();
        assert!((near - at0).abs() < 1e-6);
    }

    #[test]
    fn piecewise_pieces() {
        let p = t(TargetSpec::PiecewiseHighFreq);
        let x = -1.0f64;
        assert!((p.eval(&[x]).unwrap() - 10.0 * (x.sin() + (3.0 * x).sin())).abs() < 1e-13);
        let x = 2.0f64;
        let expect = 10.0 * ((23.0 * x).sin() + (137.0 * x).sin() + (203.0 * x).sin());
        assert!((p.eval(&[x]).unwrap() - expect).abs() < 1e-12);
        assert_eq!(p.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn ten_freq_is_seeded() {
        assert_eq!(ten_freq_phases(4), ten_freq_phases(4));
        assert_ne!(ten_freq_phases(4), ten_freq_phases(5));
        assert!(ten_freq_phases(4).iter().all(|c| (0.0..TAU).contains(c)));
    }

    #[test]
    fn grid_sampling() {
        let s = t(TargetSpec::Sum135);
        let (pts, vals) = sample_grid(&s, &Sampling::Grid { counts: vec![201] }).unwrap();
        assert_eq!(pts.len(), 201);
        assert_eq!(pts[0][0], -PI);
        assert_eq!(pts[200][0], PI);
        assert!((pts[1][0] - pts[0][0] - TAU / 200.0).abs() < 1e-14);
        assert_eq!(vals.len(), 201);
        let (one, _) = sample_grid(&s, &Sampling::Grid { counts: vec![1] }).unwrap();
        assert_eq!(one, vec![vec![0.0]]);
        let (two, _) = sample_grid(&t(TargetSpec::TwoD), &Sampling::Grid { counts: vec![2, 3] }).unwrap();
        assert_eq!(two[0], vec![0.0, 0.0]);
        assert_eq!(two[1], vec![0.0, 0.5]);
        assert_eq!(two[3], vec![1.0, 0.0]);
        assert!(sample_grid(&s, &Sampling::Grid { counts: vec![2, 2] }).is_err());
    }

    #[test]
    fn random_sampling_is_reproducible() {
        let s = t(TargetSpec::TwoD);
        let r = Sampling::Random { count: 4000, seed: 8 };
        let (a, va) = sample_grid(&s, &r).unwrap();
        let (b, vb) = sample_grid(&s, &r).unwrap();
        assert_eq!(a, b);
        assert_eq!(va, vb);
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in [
            TargetSpec::Sum135,
            TargetSpec::TenFreq { seed: 3 },
            TargetSpec::RadialNoise3D {
                k: 2,
                variant: RadialVariant::Divided,
            },
            TargetSpec::Image2D {
                path: "img.pgm".into(),
            },
        ] {
            let j = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<TargetSpec>(&j).unwrap(), spec);
        }
    }
}
