//! Training runs that measure per-frequency convergence.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::freq::{epochs_to_threshold, FrequencyTrace, FrequencyTracker};
use crate::kernel::{
    median_heuristic_bandwidth, noisy_target, residual_spectrum, two_cluster_proxy, Dataset, KernelSpectrum,
    TwoClusterConfig, DEFAULT_NOISE_SCALE,
};
use crate::nn::{train, Activation, Control, InitScheme, Mlp, Observer, OptimizerConfig, Samples, TrainingTrace};
use crate::stats::{median, median_with_never};

/// A frequency-tracked fit of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyRun {
    pub training: TrainingTrace,
    pub frequencies: FrequencyTrace,
    /// Debounced threshold epoch per tracked `k`.
    pub threshold_epochs: Vec<Option<usize>>,
}

/// Where the DFT diagnostics are sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    /// The first `n` training inputs, taken as one period.
    Leading(usize),
    /// Separate points, e.g. a 1D slice of a 2D fit, with target values.
    Points(Samples),
}

/// Runs the wrapped tracker on predictions at its own probe points.
struct ProbeTracker<'a> {
    probe: &'a Samples,
    inner: FrequencyTracker,
}

impl Observer for ProbeTracker<'_> {
    fn observe(&mut self, epoch: usize, model: &Mlp, _: &[f64]) -> Control {
        match model.predict(self.probe) {
            Ok(p) => self.inner.observe(epoch, model, &p),
            Err(_) => Control::Stop,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyRunSpec<'a> {
    pub data: &'a Samples,
    pub probe: Probe,
    pub tracked: Vec<usize>,
    pub tau: f64,
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    /// Stop as soon as every tracked frequency has a confirmed crossing.
    pub early_stop: bool,
}

pub fn frequency_run(spec: &FrequencyRunSpec<'_>, seed: u64) -> Result<FrequencyRun> {
    let probe_targets = match &spec.probe {
        Probe::Leading(n) if *n == 0 || *n > spec.data.len() => {
            return Err(Error::arg(format!(
                "probe length {n} must lie in 1..={}",
                spec.data.len()
            )))
        }
        Probe::Leading(n) => &spec.data.targets()[..*n],
        Probe::Points(p) if p.dim() != spec.data.dim() => {
            return Err(Error::DimensionMismatch {
                expected: spec.data.dim(),
                got: p.dim(),
            })
        }
        Probe::Points(p) => p.targets(),
    };
    let mut model = Mlp::initialized(&spec.sizes, spec.activation, spec.init, seed)?;
    let mut tracker = FrequencyTracker::new(probe_targets, spec.tracked.clone())?;
    if spec.early_stop {
        tracker = tracker.stop_when_confirmed(spec.tau);
    }
    let (mut training, frequencies) = match &spec.probe {
        Probe::Leading(_) => {
            let t = train(&mut model, spec.data, &spec.optimizer, spec.epochs, &mut tracker)?;
            (t, tracker.into_trace())
        }
        Probe::Points(p) => {
            let mut obs = ProbeTracker { probe: p, inner: tracker };
            let t = train(&mut model, spec.data, &spec.optimizer, spec.epochs, &mut obs)?;
            (t, obs.inner.into_trace())
        }
    };
    training.seed = Some(seed);
    let threshold_epochs = spec
        .tracked
        .iter()
        .map(|&k| epochs_to_threshold(&frequencies, k, spec.tau))
        .collect();
    Ok(FrequencyRun {
        training,
        frequencies,
        threshold_epochs,
    })
}

/// Median threshold epoch per tracked frequency across runs; `None` when
/// the median run never crossed.
pub fn median_threshold_epochs(runs: &[FrequencyRun]) -> Vec<Option<f64>> {
    let tracked = runs.first().map_or(0, |r| r.threshold_epochs.len());
    (0..tracked)
        .map(|c| {
            let col: Vec<Option<usize>> = runs.iter().map(|r| r.threshold_epochs[c]).collect();
            median_with_never(&col)
        })
        .collect()
}

/// Noisy two-cluster regression problem and its kernel eigenbasis.
#[derive(Clone, Debug)]
pub struct KernelProblem {
    pub dataset: Dataset,
    pub spectrum: KernelSpectrum,
    pub target: Vec<f64>,
    pub band: RangeInclusive<usize>,
}

impl KernelProblem {
    /// Median-heuristic bandwidth, bottom-quartile band, default noise scale.
    pub fn new(dataset: Dataset, noise_seed: u64) -> Result<Self> {
        Self::with_options(dataset, None, DEFAULT_NOISE_SCALE, noise_seed)
    }

    /// `bandwidth` falls back to the median heuristic.
    pub fn with_options(dataset: Dataset, bandwidth: Option<f64>, noise_scale: f64, noise_seed: u64) -> Result<Self> {
        let s = match bandwidth {
            Some(s) => s,
            None => median_heuristic_bandwidth(&dataset)?,
        };
        let spectrum = KernelSpectrum::from_dataset(&dataset, s)?;
        let band = spectrum.default_noise_band();
        let target = noisy_target(dataset.labels(), &spectrum, noise_scale, band.clone(), noise_seed)?;
        Ok(KernelProblem {
            dataset,
            spectrum,
            target,
            band,
        })
    }

    /// Same dataset and eigenbasis with freshly drawn noise.
    pub fn reseeded(&self, noise_scale: f64, noise_seed: u64) -> Result<Self> {
        let target = noisy_target(
            self.dataset.labels(),
            &self.spectrum,
            noise_scale,
            self.band.clone(),
            noise_seed,
        )?;
        Ok(KernelProblem {
            target,
            ..self.clone()
        })
    }

    pub fn proxy(cfg: &TwoClusterConfig, data_seed: u64, noise_seed: u64) -> Result<Self> {
        Self::new(two_cluster_proxy(cfg, data_seed)?, noise_seed)
    }

    pub fn samples(&self) -> Result<Samples> {
        Samples::from_points(self.dataset.points(), self.target.clone())
    }

    /// `α` of `predictions − target`, descending eigen-order.
    pub fn residual_coefficients(&self, predictions: &[f64]) -> Result<Vec<f64>> {
        let r: Vec<f64> = predictions.iter().zip(&self.target).map(|(f, u)| f - u).collect();
        residual_spectrum(&r, &self.spectrum)
    }
}

/// Residual coefficients recorded during a kernel-problem fit.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelRun {
    pub training: TrainingTrace,
    /// `(epoch, α)` every `snapshot_every` epochs, plus the last epoch.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl KernelRun {
    pub fn initial(&self) -> &[f64] {
        &self.snapshots[0].1
    }

    pub fn last(&self) -> &[f64] {
        &self.snapshots[self.snapshots.len() - 1].1
    }

    /// `|α_i(final)| / |α_i(initial)|` for 1-based `i` in `indices`.
    pub fn decay_ratios(&self, indices: RangeInclusive<usize>) -> Vec<f64> {
        indices
            .map(|i| self.last()[i - 1].abs() / self.initial()[i - 1].abs())
            .collect()
    }
}

struct Snapshotter<'a> {
    problem: &'a KernelProblem,
    every: usize,
    last_epoch: usize,
    snapshots: Vec<(usize, Vec<f64>)>,
    error: Option<Error>,
}

impl Observer for Snapshotter<'_> {
    fn observe(&mut self, epoch: usize, _: &Mlp, predictions: &[f64]) -> Control {
        if epoch % self.every == 0 || epoch == self.last_epoch {
            match self.problem.residual_coefficients(predictions) {
                Ok(a) => self.snapshots.push((epoch, a)),
                Err(e) => {
                    self.error = Some(e);
                    return Control::Stop;
                }
            }
        }
        Control::Continue
    }
}

#[allow(clippy::too_many_arguments)]
pub fn kernel_run(
    problem: &KernelProblem,
    hidden: &[usize],
    activation: Activation,
    init: InitScheme,
    optimizer: &OptimizerConfig,
    iterations: usize,
    snapshot_every: usize,
    seed: u64,
) -> Result<KernelRun> {
    let data = problem.samples()?;
    let mut sizes = vec![data.dim()];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let mut model = Mlp::initialized(&sizes, activation, init, seed)?;
    let mut obs = Snapshotter {
        problem,
        every: snapshot_every.max(1),
        last_epoch: iterations,
        snapshots: Vec::new(),
        error: None,
    };
    let mut training = train(&mut model, &data, optimizer, iterations, &mut obs)?;
    if let Some(e) = obs.error {
        return Err(e);
    }
    training.seed = Some(seed);
    Ok(KernelRun {
        training,
        snapshots: obs.snapshots,
    })
}

/// Per-index medians of [`KernelRun::decay_ratios`] across runs.
pub fn median_decay_ratios(runs: &[KernelRun], indices: RangeInclusive<usize>) -> Vec<f64> {
    let per_run: Vec<Vec<f64>> = runs.iter().map(|r| r.decay_ratios(indices.clone())).collect();
    (0..indices.count())
        .map(|c| {
            let col: Vec<f64> = per_run.iter().map(|r| r[c]).collect();
            median(&col).unwrap_or(f64::NAN)
        })
        .collect()
}
