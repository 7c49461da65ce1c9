//! Discrete Fourier diagnostics for training traces.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Control, Mlp, Observer};

/// Bins with smaller target magnitude are rejected as untracked.
pub const MIN_TARGET_MAGNITUDE: f64 = 1e-12;
/// Records that must stay below `2τ` after the first crossing.
pub const DEBOUNCE_WINDOW: usize = 10;

fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|m| Complex64::from_polar(1.0, sign * TAU * m as f64 / n as f64))
        .collect()
}

/// `X_k = Σ_j x_j exp(−2πi jk/N)`, unnormalized, by direct summation.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let w = twiddles(n, -1.0);
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| w[(j * k) % n] * v)
                .sum()
        })
        .collect()
}

/// `x_j = (1/N) Σ_k X_k exp(2πi jk/N)`.
pub fn inverse_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let w = twiddles(n, 1.0);
    (0..n)
        .map(|j| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| w[(j * k) % n] * v)
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// A single DFT bin.
pub fn dft_bin(x: &[f64], k: usize) -> Complex64 {
    let n = x.len();
    x.iter()
        .enumerate()
        .map(|(j, &v)| Complex64::from_polar(v, -TAU * ((j * k) % n) as f64 / n as f64))
        .sum()
}

/// `|f̂_k − û_k| / |û_k|`.
pub fn delta_fu(f: &[f64], u: &[f64], k: usize) -> Result<f64> {
    if f.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: f.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::arg("empty sample arrays"));
    }
    let uk = dft_bin(u, k);
    if uk.norm() < MIN_TARGET_MAGNITUDE {
        return Err(Error::UndefinedFrequency {
            k,
            magnitude: uk.norm(),
        });
    }
    Ok((dft_bin(f, k) - uk).norm() / uk.norm())
}

/// `f(x₁, fixed_x2)` at `x₁ = j/samples`, `j = 0..samples`.
pub fn slice_2d(f: impl Fn(f64, f64) -> f64, fixed_x2: f64, samples: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&fixed_x2) {
        return Err(Error::arg(format!("slice coordinate {fixed_x2} outside [0, 1]")));
    }
    Ok((0..samples)
        .map(|j| f(j as f64 / samples as f64, fixed_x2))
        .collect())
}

/// `Δ(k)` per recorded epoch for a fixed set of frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub tracked_k: Vec<usize>,
    pub epochs: Vec<usize>,
    /// `deltas[r][c]` is `Δ(tracked_k[c])` at `epochs[r]`.
    pub deltas: Vec<Vec<f64>>,
}

impl FrequencyTrace {
    pub fn new(tracked_k: Vec<usize>) -> Self {
        FrequencyTrace {
            tracked_k,
            epochs: Vec::new(),
            deltas: Vec::new(),
        }
    }

    pub fn push(&mut self, epoch: usize, row: Vec<f64>) -> Result<()> {
        if row.len() != self.tracked_k.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tracked_k.len(),
                got: row.len(),
            });
        }
        if row.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Numeric(format!("invalid delta at epoch {epoch}")));
        }
        self.epochs.push(epoch);
        self.deltas.push(row);
        Ok(())
    }

    pub fn column(&self, k: usize) -> Option<Vec<f64>> {
        let c = self.tracked_k.iter().position(|&t| t == k)?;
        Some(self.deltas.iter().map(|r| r[c]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch");
        for k in &self.tracked_k {
            let _ = write!(out, ",delta_k{k}");
        }
        out.push('\n');
        for (e, row) in self.epochs.iter().zip(&self.deltas) {
            let _ = write!(out, "{e}");
            for d in row {
                let _ = write!(out, ",{d:e}");
            }
            out.push('\n');
        }
        out
    }
}

/// First recorded epoch where `Δ(k) < τ` and the next [`DEBOUNCE_WINDOW`]
/// records stay below `2τ`. `None` if that never happens within the trace.
pub fn epochs_to_threshold(trace: &FrequencyTrace, k: usize, tau: f64) -> Option<usize> {
    let col = trace.column(k)?;
    first_debounced(&col, tau).map(|r| trace.epochs[r])
}

fn first_debounced(col: &[f64], tau: f64) -> Option<usize> {
    (0..col.len()).find(|&r| {
        col[r] < tau
            && r + DEBOUNCE_WINDOW < col.len()
            && col[r + 1..=r + DEBOUNCE_WINDOW].iter().all(|d| *d < 2.0 * tau)
    })
}

/// Observer that records `Δ(k)` of the predictions on the first `dft_len`
/// training inputs, and optionally stops once every tracked frequency has a
/// confirmed threshold epoch.
#[derive(Clone, Debug)]
pub struct FrequencyTracker {
    target: Vec<f64>,
    target_bins: Vec<Complex64>,
    trace: FrequencyTrace,
    stop_at: Option<f64>,
    confirmed: Vec<bool>,
}

impl FrequencyTracker {
    pub fn new(target: &[f64], tracked_k: Vec<usize>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::arg("empty target samples"));
        }
        let target_bins = tracked_k
            .iter()
            .map(|&k| {
                let b = dft_bin(target, k);
                if b.norm() < MIN_TARGET_MAGNITUDE {
                    Err(Error::UndefinedFrequency {
                        k,
                        magnitude: b.norm(),
                    })
                } else {
                    Ok(b)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrequencyTracker {
            target: target.to_vec(),
            target_bins,
            confirmed: vec![false; tracked_k.len()],
            trace: FrequencyTrace::new(tracked_k),
            stop_at: None,
        })
    }

    /// Stop training once every tracked `k` has a debounced crossing of `tau`.
    pub fn stop_when_confirmed(mut self, tau: f64) -> Self {
        self.stop_at = Some(tau);
        self
    }

    pub fn trace(&self) -> &FrequencyTrace {
        &self.trace
    }

    pub fn into_trace(self) -> FrequencyTrace {
        self.trace
    }

    /// A crossing at record `r` becomes checkable once record
    /// `r + DEBOUNCE_WINDOW` exists, so only that one candidate is new.
    fn all_confirmed(&mut self, tau: f64) -> bool {
        let len = self.trace.deltas.len();
        if len > DEBOUNCE_WINDOW {
            let r = len - 1 - DEBOUNCE_WINDOW;
            for c in 0..self.confirmed.len() {
                if !self.confirmed[c] {
                    let rows = &self.trace.deltas[r..];
                    self.confirmed[c] = rows[0][c] < tau
                        && rows[1..].iter().all(|row| row[c] < 2.0 * tau);
                }
            }
        }
        self.confirmed.iter().all(|c| *c)
    }
}

impl Observer for FrequencyTracker {
    fn observe(&mut self, epoch: usize, _model: &Mlp, predictions: &[f64]) -> Control {
        let n = self.target.len();
        let f = &predictions[..n.min(predictions.len())];
        let row = self
            .trace
            .tracked_k
            .iter()
            .zip(&self.target_bins)
            .map(|(&k, uk)| (dft_bin(f, k) - uk).norm() / uk.norm())
            .collect();
        if self.trace.push(epoch, row).is_err() {
            return Control::Stop;
        }
        let stop = self.stop_at;
        match stop {
            Some(tau) if self.all_confirmed(tau) => Control::Stop,
            _ => Control::Continue,
        }
    }
}
