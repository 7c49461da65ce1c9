//! Config-driven experiment runs and their on-disk artifacts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{conditioning_scaling_fit, symmetric_eigen, symmetric_eigenvalues, DEFAULT_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::experiments::{
    frequency_run, kernel_run, median_decay_ratios, FrequencyRun, FrequencyRunSpec, KernelProblem, KernelRun, Probe,
};
use crate::fem::{assemble_mass_matrix, BasisKind, UniformMesh};
use crate::gd::{eigenfunction_profile_from, run_gd, QuadraticProblem, StepSize};
use crate::kernel::{
    load_csv_dataset, load_idx_dataset, median_heuristic_bandwidth, two_cluster_proxy, Dataset, KernelSpectrum,
    TwoClusterConfig, DEFAULT_NOISE_SCALE,
};
use crate::nn::{Activation, GaussianStream, InitScheme, Optimizer, OptimizerConfig, Samples, TrainingTrace};
use crate::plot::{emit_csv, emit_svg, write_text, Plot, Series};
use crate::stats::median_with_never;
use crate::targets::{axis, sample_grid, Sampling, Target, TargetSpec};

/// Bumped whenever a summary field changes meaning or shape.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "exp1-sum135")]
    Exp1Sum135,
    #[serde(rename = "exp2-2d")]
    Exp2TwoD,
    #[serde(rename = "exp3-tenfreq")]
    Exp3TenFreq,
    #[serde(rename = "exp4-image")]
    Exp4Image,
    #[serde(rename = "kernel-proxy")]
    KernelProxy,
    #[serde(rename = "appendix-2d-noise")]
    Appendix2dNoise,
    #[serde(rename = "width-sweep")]
    WidthSweep,
    #[serde(rename = "sgd-variant")]
    SgdVariant,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::Exp1Sum135,
        ExperimentId::Exp2TwoD,
        ExperimentId::Exp3TenFreq,
        ExperimentId::Exp4Image,
        ExperimentId::KernelProxy,
        ExperimentId::Appendix2dNoise,
        ExperimentId::WidthSweep,
        ExperimentId::SgdVariant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1Sum135 => "exp1-sum135",
            ExperimentId::Exp2TwoD => "exp2-2d",
            ExperimentId::Exp3TenFreq => "exp3-tenfreq",
            ExperimentId::Exp4Image => "exp4-image",
            ExperimentId::KernelProxy => "kernel-proxy",
            ExperimentId::Appendix2dNoise => "appendix-2d-noise",
            ExperimentId::WidthSweep => "width-sweep",
            ExperimentId::SgdVariant => "sgd-variant",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(vec![format!("unknown experiment id {s:?}")]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    TwoCluster {
        points: usize,
        dim: usize,
        latent_dim: usize,
        separation: f64,
        ambient_noise: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        digits: [u8; 2],
        limit: usize,
    },
}

impl DatasetSpec {
    pub fn default_proxy() -> Self {
        let c = TwoClusterConfig::default();
        DatasetSpec::TwoCluster {
            points: c.points,
            dim: c.dim,
            latent_dim: c.latent_dim,
            separation: c.separation,
            ambient_noise: c.ambient_noise,
            seed: 0,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::TwoCluster {
                points,
                dim,
                latent_dim,
                separation,
                ambient_noise,
                seed,
            } => two_cluster_proxy(
                &TwoClusterConfig {
                    points: *points,
                    dim: *dim,
                    latent_dim: *latent_dim,
                    separation: *separation,
                    ambient_noise: *ambient_noise,
                },
                *seed,
            ),
            DatasetSpec::Csv { path } => load_csv_dataset(path),
            DatasetSpec::Idx {
                images,
                labels,
                digits,
                limit,
            } => load_idx_dataset(images, labels, digits[0], digits[1], *limit),
        }
    }
}

fn default_tau() -> f64 {
    0.2
}

fn default_slice() -> f64 {
    31.0 / 128.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDiagnostics {
    #[serde(default)]
    pub bandwidth: Option<f64>,
    pub noise_scale: f64,
    pub snapshot_every: usize,
    /// A band index counts as fitted once `|α_i|` falls below this fraction
    /// of its initial value.
    pub decay_threshold: f64,
}

impl Default for KernelDiagnostics {
    fn default() -> Self {
        KernelDiagnostics {
            bandwidth: None,
            noise_scale: DEFAULT_NOISE_SCALE,
            snapshot_every: 10,
            decay_threshold: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default)]
    pub tracked: Vec<usize>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub early_stop: bool,
    /// DFT length. 1D targets default to the grid size minus the duplicated
    /// endpoint; higher dimensions to 128 slice points.
    #[serde(default)]
    pub probe_points: Option<usize>,
    /// Fixed value of every coordinate but the first on slices, as a
    /// fraction of the domain.
    #[serde(default = "default_slice")]
    pub slice_at: f64,
    #[serde(default)]
    pub kernel: Option<KernelDiagnostics>,
}

impl Diagnostics {
    fn frequencies(tracked: &[usize]) -> Self {
        Diagnostics {
            tracked: tracked.to_vec(),
            tau: default_tau(),
            early_stop: false,
            probe_points: None,
            slice_at: default_slice(),
            kernel: None,
        }
    }
}

/// Replaces the single hidden width, optionally scaling the learning rate
/// by `reference / width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthSweep {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub lr_reference_width: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    pub model: ModelSpec,
    pub init: InitScheme,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub diagnostics: Diagnostics,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub width_sweep: Option<WidthSweep>,
    /// Deviations from the reference setup, copied into the summary.
    #[serde(default)]
    pub notes: Vec<String>,
}

fn gaussian(std: f64) -> InitScheme {
    InitScheme::Gaussian { mean: 0.0, std }
}

impl ExperimentConfig {
    /// Desk-scale defaults for each registered experiment.
    pub fn recipe(id: ExperimentId) -> Self {
        let seeds: Vec<u64> = (1..=5).collect();
        let grid = |c: Vec<usize>| Some(Sampling::Grid { counts: c });
        let base = ExperimentConfig {
            id,
            target: Some(TargetSpec::Sum135),
            sampling: grid(vec![201]),
            dataset: None,
            model: ModelSpec {
                hidden: vec![512],
                activation: Activation::Hat,
            },
            init: gaussian(0.8),
            optimizer: OptimizerConfig::new(Optimizer::adam(3.125e-3)),
            epochs: 20000,
            diagnostics: Diagnostics {
                early_stop: true,
                ..Diagnostics::frequencies(&[1, 3, 5])
            },
            seeds,
            out_dir: PathBuf::from("runs"),
            width_sweep: None,
            notes: vec!["width 512 instead of 8000; learning rate 2e-4 scaled by 8000/512".into()],
        };
        match id {
            ExperimentId::Exp1Sum135 => base,
            ExperimentId::Exp2TwoD => ExperimentConfig {
                target: Some(TargetSpec::TwoD),
                sampling: grid(vec![64, 64]),
                model: ModelSpec {
                    hidden: vec![512],
                    activation: Activation::Relu,
                },
                init: InitScheme::FanInUniform,
                optimizer: OptimizerConfig::new(Optimizer::adam(9.765625e-4)).with_decay(1000, 0.5),
                epochs: 5000,
                diagnostics: Diagnostics::frequencies(&[1, 5]),
                notes: vec![
                    "width 512 instead of 10000; learning rate 5e-5 scaled by 10000/512".into(),
                    "64x64 training grid; slice at x2 = 31/128 with 128 periodic points".into(),
                ],
                ..base
            },
            ExperimentId::Exp3TenFreq => ExperimentConfig {
                target: Some(TargetSpec::TenFreq { seed: 0 }),
                sampling: grid(vec![201]),
                model: ModelSpec {
                    hidden: vec![256; 5],
                    activation: Activation::Relu,
                },
                init: gaussian(0.2),
                optimizer: OptimizerConfig::new(Optimizer::adam(1e-3)).with_decay(10000, 0.5),
                epochs: 5000,
                diagnostics: Diagnostics::frequencies(&[5, 15, 25, 35, 45]),
                notes: vec![
                    "5000 epochs instead of 80000".into(),
                    "tracked bins 5k for k in {1,3,5,7,9}: sin(10 pi k x) has 5k cycles on [0,1]".into(),
                ],
                ..base
            },
            ExperimentId::Exp4Image => ExperimentConfig {
                target: Some(TargetSpec::Image2D {
                    path: PathBuf::from("image.pgm"),
                }),
                sampling: grid(vec![64, 64]),
                epochs: 2000,
                diagnostics: Diagnostics::frequencies(&[1, 2, 4]),
                notes: vec!["image resampled on a 64x64 grid by bilinear interpolation".into()],
                ..base
            },
            ExperimentId::KernelProxy => ExperimentConfig {
                target: None,
                sampling: None,
                dataset: Some(DatasetSpec::default_proxy()),
                optimizer: OptimizerConfig::new(Optimizer::adam(2e-3)),
                epochs: 500,
                diagnostics: Diagnostics {
                    kernel: Some(KernelDiagnostics::default()),
                    ..Diagnostics::frequencies(&[])
                },
                notes: vec![
                    "synthetic two-cluster proxy in d = 16 replaces the 2000-image subset".into(),
                    "Hat nets use learning rate 2e-3, ReLU nets 1e-3".into(),
                ],
                ..base
            },
            ExperimentId::Appendix2dNoise => ExperimentConfig {
                target: Some(TargetSpec::NoisyProduct2D { k: 5 }),
                sampling: Some(Sampling::Random { count: 4000, seed: 0 }),
                epochs: 5000,
                diagnostics: Diagnostics::frequencies(&[1, 5]),
                notes: vec!["width 512; 5000 epochs".into()],
                ..base
            },
            ExperimentId::WidthSweep => ExperimentConfig {
                model: ModelSpec {
                    hidden: vec![512],
                    activation: Activation::Relu,
                },
                init: gaussian(0.1),
                width_sweep: Some(WidthSweep {
                    widths: vec![128, 512, 2048],
                    lr_reference_width: None,
                }),
                notes: vec!["widths 128/512/2048 instead of 500/2000/8000; learning rate fixed at the exp1 value".into()],
                ..base
            },
            ExperimentId::SgdVariant => ExperimentConfig {
                optimizer: OptimizerConfig::new(Optimizer::Sgd { lr: 0.05 }),
                notes: vec!["plain full-batch gradient descent, learning rate 0.05".into()],
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("line {}: {e}", e.line())]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    /// Lists every offending field.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.seeds.is_empty() {
            p.push("seeds: must not be empty".to_string());
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            p.push("model.hidden: needs at least one layer, all widths positive".into());
        }
        if let Err(e) = self.model.activation.validate() {
            p.push(format!("model.activation: {e}"));
        }
        if let Err(e) = self.init.validate() {
            p.push(format!("init: {e}"));
        }
        if let Err(Error::Config(list)) = self.optimizer.validate() {
            p.extend(list.into_iter().map(|m| format!("optimizer: {m}")));
        }
        let kernel_id = self.id == ExperimentId::KernelProxy;
        match (&self.target, &self.dataset) {
            (Some(_), Some(_)) | (None, None) => p.push("target/dataset: exactly one must be given".into()),
            (None, Some(_)) if !kernel_id => p.push(format!("dataset: only valid for {}", ExperimentId::KernelProxy)),
            (Some(_), None) if kernel_id => p.push(format!("target: {} needs a dataset", self.id)),
            _ => {}
        }
        let d = &self.diagnostics;
        if self.dataset.is_some() {
            match &d.kernel {
                None => p.push("diagnostics.kernel: required with a dataset".into()),
                Some(k) => {
                    if k.snapshot_every == 0 {
                        p.push("diagnostics.kernel.snapshot_every: must be positive".into());
                    }
                    if !(k.noise_scale >= 0.0) {
                        p.push("diagnostics.kernel.noise_scale: must be non-negative".into());
                    }
                    if k.bandwidth.is_some_and(|s| !(s > 0.0)) {
                        p.push("diagnostics.kernel.bandwidth: must be positive".into());
                    }
                    if !(k.decay_threshold > 0.0) {
                        p.push("diagnostics.kernel.decay_threshold: must be positive".into());
                    }
                }
            }
        }
        if self.target.is_some() {
            if self.sampling.is_none() {
                p.push("sampling: required with a target".into());
            }
            if d.tracked.is_empty() || d.tracked.contains(&0) {
                p.push("diagnostics.tracked: needs positive frequencies".into());
            }
            if !(d.tau > 0.0) {
                p.push("diagnostics.tau: must be positive".into());
            }
            if d.probe_points.is_some_and(|n| n < 2) {
                p.push("diagnostics.probe_points: need at least 2".into());
            }
            if !(0.0..=1.0).contains(&d.slice_at) {
                p.push("diagnostics.slice_at: must lie in [0, 1]".into());
            }
        }
        if let Some(w) = &self.width_sweep {
            if w.widths.is_empty() || w.widths.contains(&0) {
                p.push("width_sweep.widths: need positive widths".into());
            }
            if self.model.hidden.len() != 1 {
                p.push("width_sweep: only for one hidden layer".into());
            }
            if w.lr_reference_width == Some(0) {
                p.push("width_sweep.lr_reference_width: must be positive".into());
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// `(width override, optimizer)` per sweep entry; one entry without a sweep.
    fn variants(&self) -> Vec<(Option<usize>, OptimizerConfig)> {
        match &self.width_sweep {
            None => vec![(None, self.optimizer)],
            Some(w) => w
                .widths
                .iter()
                .map(|&width| {
                    let mut opt = self.optimizer;
                    if let Some(r) = w.lr_reference_width {
                        let f = r as f64 / width as f64;
                        opt.optimizer = match opt.optimizer {
                            Optimizer::Sgd { lr } => Optimizer::Sgd { lr: lr * f },
                            Optimizer::Adam { lr, beta1, beta2, eps } => Optimizer::Adam {
                                lr: lr * f,
                                beta1,
                                beta2,
                                eps,
                            },
                        };
                    }
                    (Some(width), opt)
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub width: Option<usize>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub updates: usize,
    pub diverged: bool,
    pub stopped_early: bool,
    /// Per tracked frequency; `None` if never confirmed.
    #[serde(default)]
    pub threshold_epochs: Vec<Option<usize>>,
    /// Per band index, `|α_i(final)| / |α_i(initial)|`.
    #[serde(default)]
    pub decay_ratios: Vec<f64>,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub width: Option<usize>,
    pub lr: f64,
    pub median_threshold_epochs: Vec<Option<f64>>,
    /// Band indices, 1-based, when the run is a kernel fit.
    #[serde(default)]
    pub band: Option<(usize, usize)>,
    #[serde(default)]
    pub median_decay_ratios: Vec<f64>,
    pub diverged_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub id: ExperimentId,
    pub activation: Activation,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub tracked: Vec<usize>,
    pub tau: f64,
    pub notes: Vec<String>,
    pub groups: Vec<GroupSummary>,
    pub runs: Vec<SeedResult>,
}

impl RunSummary {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.diverged)
    }
}

enum Problem {
    Function {
        data: Samples,
        probe: Probe,
    },
    Kernel {
        problem: KernelProblem,
        diag: KernelDiagnostics,
    },
}

/// Probe points for DFT diagnostics: the first `n` training inputs when they
/// already form one period, else a slice through the first coordinate.
fn function_probe(target: &Target, data: &Samples, d: &Diagnostics, sampling: &Sampling) -> Result<Probe> {
    let (lo, hi) = target.domain();
    let dim = target.dim();
    let n = match (d.probe_points, sampling) {
        (Some(n), _) => n,
        (None, Sampling::Grid { counts }) if dim == 1 => counts[0].saturating_sub(1).max(2),
        _ => 128,
    };
    let xs: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
    let fixed = lo + (hi - lo) * d.slice_at;
    let points: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let mut p = vec![fixed; dim];
            p[0] = x;
            p
        })
        .collect();
    if n <= data.len() && (0..n).all(|i| data.input(i) == points[i].as_slice()) {
        return Ok(Probe::Leading(n));
    }
    let values = points.iter().map(|p| target.eval(p)).collect::<Result<Vec<f64>>>()?;
    Ok(Probe::Points(Samples::from_points(&points, values)?))
}

fn seed_dir(root: &Path, width: Option<usize>, seed: u64) -> PathBuf {
    match width {
        Some(w) => root.join(format!("w{w}")).join(format!("seed-{seed}")),
        None => root.join(format!("seed-{seed}")),
    }
}

fn write_loss(dir: &Path, t: &TrainingTrace) -> Result<()> {
    let rows: Vec<Vec<f64>> = t.loss.iter().enumerate().map(|(e, &l)| vec![e as f64, l]).collect();
    if rows.is_empty() {
        return Ok(());
    }
    emit_csv(&["epoch", "loss"], &rows, &dir.join("loss.csv"))?;
    emit_svg(
        &Plot::new("training loss", "epoch", "mse").log_y().with(Series::from_values("loss", &t.loss)),
        &dir.join("loss.svg"),
    )
}

fn write_frequency(dir: &Path, r: &FrequencyRun) -> Result<()> {
    write_text(&dir.join("freq.csv"), &r.frequencies.to_csv())?;
    let mut plot = Plot::new("relative DFT error per frequency", "epoch", "delta").log_y();
    for &k in &r.frequencies.tracked_k {
        let col = r.frequencies.column(k).unwrap_or_default();
        let pts = r.frequencies.epochs.iter().zip(&col).map(|(&e, &d)| (e as f64, d)).collect();
        plot = plot.with(Series::new(format!("k={k}"), pts));
    }
    emit_svg(&plot, &dir.join("freq.svg"))
}

fn write_kernel(dir: &Path, r: &KernelRun) -> Result<()> {
    let n = r.initial().len();
    let names: Vec<String> = std::iter::once("epoch".to_string())
        .chain((1..=n).map(|i| format!("alpha_{i}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = r
        .snapshots
        .iter()
        .map(|(e, a)| std::iter::once(*e as f64).chain(a.iter().copied()).collect())
        .collect();
    emit_csv(&header, &rows, &dir.join("kernel.csv"))?;
    let series = |name: &str, a: &[f64]| {
        Series::new(name, a.iter().enumerate().map(|(i, v)| ((i + 1) as f64, v.abs())).collect())
    };
    emit_svg(
        &Plot::new("residual in kernel eigenbasis", "eigen-index i", "|alpha_i|")
            .log_y()
            .with(series("initial", r.initial()))
            .with(series("final", r.last())),
        &dir.join("kernel.svg"),
    )
}

/// Trains every `(width, seed)` pair on up to `jobs` threads, writes per-seed
/// artifacts under `out/<id>/` and a `summary.json` there.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunSummary> {
    cfg.validate()?;
    let root = cfg.out_dir.join(cfg.id.as_str());
    let problem = if let Some(spec) = &cfg.target {
        let target = spec.build()?;
        let sampling = cfg.sampling.clone().ok_or_else(|| Error::Config(vec!["sampling: missing".into()]))?;
        let (points, values) = sample_grid(&target, &sampling)?;
        let data = Samples::from_points(&points, values)?;
        let probe = function_probe(&target, &data, &cfg.diagnostics, &sampling)?;
        Problem::Function { data, probe }
    } else {
        let diag = cfg.diagnostics.kernel.clone().unwrap_or_default();
        let dataset = cfg
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config(vec!["dataset: missing".into()]))?
            .load()?;
        let problem = KernelProblem::with_options(dataset, diag.bandwidth, diag.noise_scale, 0)?;
        Problem::Kernel { problem, diag }
    };
    let variants = cfg.variants();
    let tasks: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    let results: Vec<SeedResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(v, seed)| run_one(cfg, &problem, &root, variants[v], seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let groups = variants
        .iter()
        .map(|&(width, opt)| {
            let runs: Vec<&SeedResult> = results.iter().filter(|r| r.width == width).collect();
            let tracked = runs.first().map_or(0, |r| r.threshold_epochs.len());
            let median_threshold_epochs = (0..tracked)
                .map(|c| median_with_never(&runs.iter().map(|r| r.threshold_epochs[c]).collect::<Vec<_>>()))
                .collect();
            let (band, median_decay_ratios) = match &problem {
                Problem::Kernel { problem, .. } => {
                    let n = runs.first().map_or(0, |r| r.decay_ratios.len());
                    let meds = (0..n)
                        .map(|c| {
                            let col: Vec<f64> = runs.iter().map(|r| r.decay_ratios[c]).collect();
                            crate::stats::median(&col).unwrap_or(f64::NAN)
                        })
                        .collect();
                    (Some((*problem.band.start(), *problem.band.end())), meds)
                }
                Problem::Function { .. } => (None, Vec::new()),
            };
            GroupSummary {
                width,
                lr: opt.optimizer.lr(),
                median_threshold_epochs,
                band,
                median_decay_ratios,
                diverged_seeds: runs.iter().filter(|r| r.diverged).map(|r| r.seed).collect(),
            }
        })
        .collect();
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        id: cfg.id,
        activation: cfg.model.activation,
        hidden: cfg.model.hidden.clone(),
        epochs: cfg.epochs,
        seeds: cfg.seeds.clone(),
        tracked: cfg.diagnostics.tracked.clone(),
        tau: cfg.diagnostics.tau,
        notes: cfg.notes.clone(),
        groups,
        runs: results,
    };
    write_json(&root.join("summary.json"), &summary)?;
    Ok(summary)
}

fn run_one(
    cfg: &ExperimentConfig,
    problem: &Problem,
    root: &Path,
    (width, opt): (Option<usize>, OptimizerConfig),
    seed: u64,
) -> Result<SeedResult> {
    let dir = seed_dir(root, width, seed);
    let hidden = match width {
        Some(w) => vec![w],
        None => cfg.model.hidden.clone(),
    };
    let (training, threshold_epochs, decay_ratios) = match problem {
        Problem::Function { data, probe } => {
            let mut sizes = vec![data.dim()];
            sizes.extend(&hidden);
            sizes.push(1);
            let spec = FrequencyRunSpec {
                data,
                probe: probe.clone(),
                tracked: cfg.diagnostics.tracked.clone(),
                tau: cfg.diagnostics.tau,
                sizes,
                activation: cfg.model.activation,
                init: cfg.init,
                optimizer: opt,
                epochs: cfg.epochs,
                early_stop: cfg.diagnostics.early_stop,
            };
            let run = frequency_run(&spec, seed)?;
            write_frequency(&dir, &run)?;
            (run.training, run.threshold_epochs, Vec::new())
        }
        Problem::Kernel { problem, diag } => {
            let p = problem.reseeded(diag.noise_scale, seed)?;
            let run = kernel_run(
                &p,
                &hidden,
                cfg.model.activation,
                cfg.init,
                &opt,
                cfg.epochs,
                diag.snapshot_every,
                seed,
            )?;
            write_kernel(&dir, &run)?;
            let ratios = median_decay_ratios(std::slice::from_ref(&run), p.band.clone());
            (run.training, Vec::new(), ratios)
        }
    };
    write_loss(&dir, &training)?;
    Ok(SeedResult {
        seed,
        width,
        initial_loss: training.loss.first().copied(),
        final_loss: training.final_loss(),
        updates: training.updates,
        diverged: training.diverged,
        stopped_early: training.stopped_early,
        threshold_epochs,
        decay_ratios,
        dir,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("serialize: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemSpectrumEntry {
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemSummary {
    pub schema_version: u32,
    pub basis: BasisKind,
    pub sizes: Vec<usize>,
    pub spectra: Vec<FemSpectrumEntry>,
    /// Log–log slope of the condition number against `n`, with three or more sizes.
    pub slope: Option<f64>,
}

/// Mass-matrix spectra per size, the conditioning fit, and eigenfunction
/// plots for the smallest size.
pub fn fem_spectrum(kind: BasisKind, sizes: &[usize], out: &Path) -> Result<FemSummary> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config(vec!["sizes: need positive mesh sizes".into()]));
    }
    let spectra: Vec<Vec<f64>> = sizes
        .par_iter()
        .map(|&n| symmetric_eigenvalues(&assemble_mass_matrix(kind, &UniformMesh::new(n)?)?))
        .collect::<Result<_>>()?;
    let mut plot = Plot::new(format!("{kind} mass matrix spectrum"), "k / n", "eigenvalue").log_y();
    let mut entries = Vec::new();
    for (&n, ev) in sizes.iter().zip(&spectra) {
        let rows: Vec<Vec<f64>> = ev.iter().enumerate().map(|(k, &l)| vec![(k + 1) as f64, l]).collect();
        emit_csv(&["k", "lambda"], &rows, &out.join(format!("spectrum_n{n}.csv")))?;
        plot = plot.with(Series::new(
            format!("n={n}"),
            ev.iter().enumerate().map(|(k, &l)| ((k + 1) as f64 / n as f64, l)).collect(),
        ));
        entries.push(FemSpectrumEntry {
            n,
            lambda_min: ev[0],
            lambda_max: ev[n - 1],
            condition: ev[n - 1] / ev[0],
        });
    }
    emit_svg(&plot, &out.join("spectrum.svg"))?;
    let slope = if sizes.len() >= 3 && sizes.windows(2).all(|w| w[0] < w[1]) {
        Some(conditioning_scaling_fit(kind, sizes)?.slope)
    } else {
        None
    };
    let n = sizes[0];
    let p = QuadraticProblem::new(kind, UniformMesh::new(n)?, |_| 0.0)?;
    let eig = symmetric_eigen(&p.mass, DEFAULT_RESIDUAL_TOL)?;
    let mut ks = vec![1, 2, n.saturating_sub(1), n];
    ks.retain(|&k| k >= 1 && k <= n);
    ks.dedup();
    let mut ef = Plot::new(format!("{kind} mass matrix eigenfunctions, n={n}"), "x", "value");
    for k in ks {
        let prof = eigenfunction_profile_from(&p, &eig, k, 401)?;
        ef = ef.with(Series::new(
            format!("k={k}"),
            prof.x.iter().copied().zip(prof.y.iter().copied()).collect(),
        ));
    }
    emit_svg(&ef, &out.join("eigenfunctions.svg"))?;
    let summary = FemSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        basis: kind,
        sizes: sizes.to_vec(),
        spectra: entries,
        slope,
    };
    write_json(&out.join("fem_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdSummary {
    pub schema_version: u32,
    pub basis: BasisKind,
    pub n: usize,
    pub steps: usize,
    pub seed: u64,
    pub step_size: f64,
    pub max_decay_deviation: f64,
    pub max_energy_defect: f64,
    pub final_loss: f64,
}

/// Target of the gradient-descent simulation.
pub fn gd_target(x: f64) -> f64 {
    use std::f64::consts::PI;
    (2.0 * PI * x).sin() + 0.5 * (10.0 * PI * x).sin()
}

/// Plain gradient descent from `a₀ ~ N(0, I)` with `η = 1/λ_max`.
pub fn gd_simulation(kind: BasisKind, n: usize, steps: usize, seed: u64, out: &Path) -> Result<GdSummary> {
    let p = QuadraticProblem::new(kind, UniformMesh::new(n)?, gd_target)?;
    let mut g = GaussianStream::new(seed);
    let a0: Vec<f64> = (0..n).map(|_| g.next_standard()).collect();
    let trace = run_gd(&p, &a0, steps, StepSize::Auto)?;
    write_text(&out.join("gd.csv"), &trace.to_csv())?;
    let mut plot = Plot::new(format!("{kind} gradient descent, n={n}"), "step", "|alpha_k|").log_y();
    for c in trace.csv_columns() {
        let pts = trace.alpha.iter().enumerate().map(|(l, a)| (l as f64, a[c].abs())).collect();
        plot = plot.with(Series::new(format!("k={}", c + 1), pts));
    }
    emit_svg(&plot, &out.join("gd.svg"))?;
    let summary = GdSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        basis: kind,
        n,
        steps,
        seed,
        step_size: trace.step_size,
        max_decay_deviation: trace.max_decay_deviation(),
        max_energy_defect: trace.max_energy_defect(&p)?,
        final_loss: trace.loss[trace.loss.len() - 1],
    };
    write_json(&out.join("gd_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpectrumSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub points: usize,
    pub dim: usize,
    pub bandwidth: f64,
    pub mu_max: f64,
    pub mu_min: f64,
    pub band: (usize, usize),
}

/// Gram spectrum of a dataset plus the label and noisy-target coefficients.
pub fn kernel_spectrum_report(
    spec: &DatasetSpec,
    bandwidth: Option<f64>,
    seed: u64,
    out: &Path,
) -> Result<KernelSpectrumSummary> {
    let data = spec.load()?;
    let s = match bandwidth {
        Some(s) => s,
        None => median_heuristic_bandwidth(&data)?,
    };
    let problem = KernelProblem::with_options(data, Some(s), DEFAULT_NOISE_SCALE, seed)?;
    let sp: &KernelSpectrum = &problem.spectrum;
    let mus = sp.mus();
    let labels = crate::kernel::residual_spectrum(problem.dataset.labels(), sp)?;
    let noisy = crate::kernel::residual_spectrum(&problem.target, sp)?;
    let rows: Vec<Vec<f64>> = (0..mus.len())
        .map(|i| vec![(i + 1) as f64, mus[i], labels[i], noisy[i]])
        .collect();
    emit_csv(&["i", "mu", "alpha_labels", "alpha_noisy"], &rows, &out.join("kernel_spectrum.csv"))?;
    let abs = |name: &str, v: &[f64]| {
        Series::new(name, v.iter().enumerate().map(|(i, x)| ((i + 1) as f64, x.abs())).collect())
    };
    emit_svg(
        &Plot::new("Gaussian kernel spectrum", "eigen-index i", "value")
            .log_y()
            .with(abs("mu_i", &mus))
            .with(abs("|labels_i|", &labels))
            .with(abs("|noisy target_i|", &noisy)),
        &out.join("kernel_spectrum.svg"),
    )?;
    let summary = KernelSpectrumSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        dataset: problem.dataset.name().to_string(),
        points: problem.dataset.len(),
        dim: problem.dataset.dim(),
        bandwidth: s,
        mu_max: mus[0],
        mu_min: mus[mus.len() - 1],
        band: (*problem.band.start(), *problem.band.end()),
    };
    write_json(&out.join("kernel_summary.json"), &summary)?;
    Ok(summary)
}

/// Markdown digest of every `summary.json` below `dir`.
pub fn report(dir: &Path) -> Result<String> {
    let mut found = Vec::new();
    collect_summaries(dir, &mut found)?;
    found.sort();
    if found.is_empty() {
        return Err(Error::Config(vec![format!("no summary.json under {}", dir.display())]));
    }
    let mut out = String::from("| experiment | activation | width | lr | median threshold epochs | diverged |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for path in found {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let s: RunSummary = serde_json::from_str(&text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        if s.schema_version != SUMMARY_SCHEMA_VERSION {
            return Err(Error::Config(vec![format!(
                "{}: schema version {} (expected {SUMMARY_SCHEMA_VERSION})",
                path.display(),
                s.schema_version
            )]));
        }
        for g in &s.groups {
            let width = g.width.map_or_else(
                || s.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x"),
                |w| w.to_string(),
            );
            let cells: Vec<String> = if g.band.is_some() {
                let worst = g.median_decay_ratios.iter().copied().fold(0.0, f64::max);
                vec![format!("max band decay ratio {worst:.3}")]
            } else {
                s.tracked
                    .iter()
                    .zip(&g.median_threshold_epochs)
                    .map(|(k, m)| match m {
                        Some(v) => format!("k={k}: {v}"),
                        None => format!("k={k}: never"),
                    })
                    .collect()
            };
            out.push_str(&format!(
                "| {} | {} | {} | {:e} | {} | {:?} |\n",
                s.id,
                s.activation,
                width,
                g.lr,
                cells.join(", "),
                g.diverged_seeds
            ));
        }
    }
    Ok(out)
}

fn collect_summaries(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_summaries(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "summary.json") {
            found.push(path);
        }
    }
    Ok(())
}

/// Grid axis of a 1D target without its duplicated right endpoint.
pub fn periodic_axis(target: &Target, n: usize) -> Vec<f64> {
    let (lo, hi) = target.domain();
    let mut a = axis(lo, hi, n + 1);
    a.pop();
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_round_trips_and_validates() {
        for id in ExperimentId::ALL {
            let cfg = ExperimentConfig::recipe(id);
            cfg.validate().unwrap_or_else(|e| panic!("{id}: {e}"));
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(id.to_string().parse::<ExperimentId>().unwrap(), id);
        }
        assert!("exp9".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let mut cfg = ExperimentConfig::recipe(ExperimentId::Exp1Sum135);
        cfg.seeds.clear();
        cfg.model.hidden = vec![0];
        cfg.diagnostics.tau = -1.0;
        cfg.optimizer = OptimizerConfig::new(Optimizer::adam(-1.0));
        match cfg.validate().unwrap_err() {
            Error::Config(p) => {
                assert_eq!(p.len(), 4, "{p:?}");
                assert!(p.iter().any(|m| m.starts_with("seeds")));
                assert!(p.iter().any(|m| m.starts_with("optimizer")));
            }
            e => panic!("{e}"),
        }
        let mut k = ExperimentConfig::recipe(ExperimentId::KernelProxy);
        k.target = Some(TargetSpec::Sum135);
        assert!(k.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::recipe(ExperimentId::Exp1Sum135).to_json()).unwrap();
        v["epochz"] = 3.into();
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn probe_reuses_leading_grid_points() {
        let t = TargetSpec::Sum135.build().unwrap();
        let s = Sampling::Grid { counts: vec![201] };
        let (p, v) = sample_grid(&t, &s).unwrap();
        let data = Samples::from_points(&p, v).unwrap();
        let d = Diagnostics::frequencies(&[1]);
        assert_eq!(function_probe(&t, &data, &d, &s).unwrap(), Probe::Leading(200));
        assert_eq!(periodic_axis(&t, 200).len(), 200);

        let t2 = TargetSpec::TwoD.build().unwrap();
        let s2 = Sampling::Grid { counts: vec![8, 8] };
        let (p, v) = sample_grid(&t2, &s2).unwrap();
        let data = Samples::from_points(&p, v).unwrap();
        match function_probe(&t2, &data, &d, &s2).unwrap() {
            Probe::Points(pr) => {
                assert_eq!(pr.len(), 128);
                assert_eq!(pr.input(1), &[1.0 / 128.0, 31.0 / 128.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_epoch_run_writes_initial_diagnostics_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::recipe(ExperimentId::Exp1Sum135);
        cfg.epochs = 0;
        cfg.seeds = vec![1, 2];
        cfg.model.hidden = vec![16];
        cfg.out_dir = dir.path().to_path_buf();
        let s = run_experiment(&cfg, 2).unwrap();
        assert_eq!(s.runs.len(), 2);
        assert!(s.runs.iter().all(|r| r.updates == 0 && r.threshold_epochs == vec![None; 3]));
        let freq = std::fs::read_to_string(dir.path().join("exp1-sum135/seed-1/freq.csv")).unwrap();
        assert_eq!(freq.lines().count(), 2);
        assert!(dir.path().join("exp1-sum135/summary.json").exists());
        let table = report(dir.path()).unwrap();
        assert!(table.contains("exp1-sum135") && table.contains("never"));
    }

    #[test]
    fn runs_are_reproducible_across_job_counts() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::recipe(ExperimentId::WidthSweep);
        cfg.epochs = 30;
        cfg.seeds = vec![3, 4];
        cfg.sampling = Some(Sampling::Grid { counts: vec![41] });
        cfg.width_sweep = Some(WidthSweep {
            widths: vec![8, 16],
            lr_reference_width: Some(16),
        });
        cfg.out_dir = a.path().to_path_buf();
        let sa = run_experiment(&cfg, 1).unwrap();
        cfg.out_dir = b.path().to_path_buf();
        let sb = run_experiment(&cfg, 3).unwrap();
        assert_eq!(sa.groups, sb.groups);
        assert_eq!(sa.groups[0].lr, 2.0 * sa.groups[1].lr);
        let f = |d: &Path| std::fs::read(d.join("width-sweep/w8/seed-3/loss.svg")).unwrap();
        assert_eq!(f(a.path()), f(b.path()));
    }

    #[test]
    fn small_kernel_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::recipe(ExperimentId::KernelProxy);
        cfg.dataset = Some(DatasetSpec::TwoCluster {
            points: 20,
            dim: 4,
            latent_dim: 2,
            separation: 3.0,
            ambient_noise: 0.1,
            seed: 0,
        });
        cfg.model.hidden = vec![8];
        cfg.epochs = 5;
        cfg.seeds = vec![1];
        cfg.out_dir = dir.path().to_path_buf();
        let s = run_experiment(&cfg, 1).unwrap();
        assert_eq!(s.groups[0].band, Some((16, 20)));
        assert_eq!(s.groups[0].median_decay_ratios.len(), 5);
        let csv = std::fs::read_to_string(dir.path().join("kernel-proxy/seed-1/kernel.csv")).unwrap();
        assert!(csv.starts_with("epoch,alpha_1,"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn fem_and_gd_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let a = fem_spectrum(BasisKind::Hat, &[4, 8, 16], dir.path()).unwrap();
        let b = fem_spectrum(BasisKind::Hat, &[4, 8, 16], dir.path()).unwrap();
        assert_eq!(a, b);
        assert!(a.spectra.iter().all(|e| e.condition <= 6.0));
        assert!(dir.path().join("eigenfunctions.svg").exists());
        let g = gd_simulation(BasisKind::Relu, 16, 50, 1, dir.path()).unwrap();
        assert!(g.max_decay_deviation < 1e-10);
        let k = kernel_spectrum_report(
            &DatasetSpec::TwoCluster {
                points: 12,
                dim: 3,
                latent_dim: 1,
                separation: 2.0,
                ambient_noise: 0.1,
                seed: 1,
            },
            None,
            1,
            dir.path(),
        )
        .unwrap();
        assert!(k.mu_max >= k.mu_min && k.band == (10, 12));
    }
}
