//! Gaussian RBF kernel maps on point clouds and their eigenbases.

use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eigen::{symmetric_eigen, EigenDecomposition, DEFAULT_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::nn::GaussianStream;
use crate::stats::median;

/// Default noise amplitude added along the high-frequency band.
pub const DEFAULT_NOISE_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
    name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("dataset has no points"));
        }
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
            });
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::arg("points must have at least one coordinate"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        if points.iter().flatten().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::arg("dataset contains non-finite values"));
        }
        Ok(Dataset {
            points,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `K_ij = exp(−s‖d_i − d_j‖²)`.
pub fn rbf_gram(data: &Dataset, s: f64) -> Result<SymMatrix> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::arg(format!("bandwidth must be positive, got {s}")));
    }
    let n = data.len();
    let pts = data.points();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { (-s * sq_dist(&pts[i], &pts[j])).exp() })
                .collect()
        })
        .collect();
    Ok(SymMatrix::from_fn(n, |i, j| rows[i][j]))
}

pub fn median_pairwise_distance(data: &Dataset) -> Option<f64> {
    let pts = data.points();
    let mut d = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(sq_dist(&pts[i], &pts[j]).sqrt());
        }
    }
    median(&d)
}

/// `s = 1/(2·median²)` over pairwise distances.
pub fn median_heuristic_bandwidth(data: &Dataset) -> Result<f64> {
    match median_pairwise_distance(data) {
        Some(m) if m > 0.0 => Ok(1.0 / (2.0 * m * m)),
        _ => Err(Error::arg("median heuristic needs two distinct points")),
    }
}

/// Eigenpairs of a kernel Gram matrix, indexed so that 1 is the largest
/// eigenvalue (lowest generalized frequency).
#[derive(Clone, Debug)]
pub struct KernelSpectrum {
    s: f64,
    gram: SymMatrix,
    eigen: EigenDecomposition,
}

impl KernelSpectrum {
    pub fn from_dataset(data: &Dataset, s: f64) -> Result<Self> {
        kernel_eigenbasis(rbf_gram(data, s)?, s)
    }

    pub fn bandwidth(&self) -> f64 {
        self.s
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn order(&self) -> usize {
        self.gram.order()
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    /// `μ_i`, 1-based descending.
    pub fn mu(&self, i: usize) -> f64 {
        self.eigen.values()[self.order() - i]
    }

    pub fn mus(&self) -> Vec<f64> {
        self.eigen.values().iter().rev().copied().collect()
    }

    /// Eigenvector paired with `μ_i`.
    pub fn vector(&self, i: usize) -> &[f64] {
        self.eigen.vector(self.order() - i)
    }

    /// Indices of the bottom quartile of eigenvalues.
    pub fn default_noise_band(&self) -> RangeInclusive<usize> {
        let n = self.order();
        let q = (n / 4).max(1);
        n + 1 - q..=n
    }
}

pub fn kernel_eigenbasis(gram: SymMatrix, s: f64) -> Result<KernelSpectrum> {
    let eigen = symmetric_eigen(&gram, DEFAULT_RESIDUAL_TOL)?;
    Ok(KernelSpectrum { s, gram, eigen })
}

/// `α_i = ⟨r, v_i⟩` in the descending order of the spectrum.
pub fn residual_spectrum(residual: &[f64], spectrum: &KernelSpectrum) -> Result<Vec<f64>> {
    let n = spectrum.order();
    if residual.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: residual.len(),
        });
    }
    Ok((1..=n)
        .map(|i| spectrum.vector(i).iter().zip(residual).map(|(v, r)| v * r).sum())
        .collect())
}

/// `(4πs)^{−d/2} exp(−|ω|²/(2s))`.
pub fn heat_kernel_eigenvalue(omega: &[i64], s: f64, d: usize) -> f64 {
    let w2: f64 = omega.iter().map(|&w| (w * w) as f64).sum();
    (4.0 * PI * s).powf(-(d as f64) / 2.0) * (-w2 / (2.0 * s)).exp()
}

/// Gram of `k(x, y) = 2^{−1/2} Σ_m exp(−2π²s(x − y − m)²)` on `N` equispaced
/// points of the periodic unit interval. Its eigenvalues divided by `N`
/// approximate the continuous eigenvalues at integer frequencies.
pub fn periodized_gaussian_gram(points: usize, s: f64) -> Result<SymMatrix> {
    if points == 0 || !(s > 0.0) {
        return Err(Error::arg("need at least one point and positive s"));
    }
    let c = 2.0 * PI * PI * s;
    let reach = (40.0 / c).sqrt().ceil() as i64 + 1;
    let k = |t: f64| -> f64 {
        (-reach..=reach)
            .map(|m| {
                let u = t - m as f64;
                (-c * u * u).exp()
            })
            .sum::<f64>()
            / 2f64.sqrt()
    };
    let row: Vec<f64> = (0..points).map(|j| k(j as f64 / points as f64)).collect();
    Ok(SymMatrix::from_fn(points, |i, j| row[i.abs_diff(j)]))
}

/// Descending position of frequency `ω` in a real periodic spectrum: `0` for
/// `ω = 0`, then `{2ω − 1, 2ω}` for the cosine/sine pair.
pub fn periodic_frequency_slots(omega: usize) -> Vec<usize> {
    if omega == 0 {
        vec![0]
    } else {
        vec![2 * omega - 1, 2 * omega]
    }
}

/// `labels + scale·Σ_{i∈band} g_i v_i` with seeded standard normal `g_i`.
pub fn noisy_target(
    labels: &[f64],
    spectrum: &KernelSpectrum,
    noise_scale: f64,
    band: RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = spectrum.order();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if *band.start() == 0 || *band.end() > n {
        return Err(Error::arg(format!("band {band:?} outside 1..={n}")));
    }
    let mut out = labels.to_vec();
    let mut g = GaussianStream::new(seed);
    for i in band {
        let c = noise_scale * g.next_standard();
        for (o, v) in out.iter_mut().zip(spectrum.vector(i)) {
            *o += c * v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoClusterConfig {
    pub points: usize,
    pub dim: usize,
    pub latent_dim: usize,
    pub separation: f64,
    pub ambient_noise: f64,
}

impl Default for TwoClusterConfig {
    fn default() -> Self {
        TwoClusterConfig {
            points: 200,
            dim: 16,
            latent_dim: 2,
            separation: 3.0,
            ambient_noise: 0.1,
        }
    }
}

/// Two Gaussian clusters on a random low-dimensional subspace of `R^dim`,
/// labelled 0 and 1 (alternating), centred `±separation/2` along the first
/// latent axis, with isotropic ambient noise.
pub fn two_cluster_proxy(cfg: &TwoClusterConfig, seed: u64) -> Result<Dataset> {
    if cfg.points < 2 || cfg.latent_dim == 0 || cfg.latent_dim > cfg.dim {
        return Err(Error::arg("need 2+ points and 1 <= latent_dim <= dim"));
    }
    let mut g = GaussianStream::new(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cfg.latent_dim);
    while basis.len() < cfg.latent_dim {
        let mut v: Vec<f64> = (0..cfg.dim).map(|_| g.next_standard()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut points = Vec::with_capacity(cfg.points);
    let mut labels = Vec::with_capacity(cfg.points);
    for i in 0..cfg.points {
        let label = (i % 2) as f64;
        let mut p: Vec<f64> = (0..cfg.dim).map(|_| cfg.ambient_noise * g.next_standard()).collect();
        for (l, b) in basis.iter().enumerate() {
            let mut z = g.next_standard();
            if l == 0 {
                z += (label - 0.5) * cfg.separation;
            }
            p.iter_mut().zip(b).for_each(|(x, y)| *x += z * y);
        }
        points.push(p);
        labels.push(label);
    }
    Dataset::new("two-cluster", points, labels)
}

/// Parsed IDX array: big-endian dimensions and unsigned-byte payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Parse {
                offset: at,
                message: "header truncated".into(),
            })
    };
    let magic = word(0)?;
    if magic != IDX_IMAGES_MAGIC && magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("unsupported IDX magic {magic:#010x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|k| word(4 + 4 * k).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let need: usize = dims.iter().product();
    if bytes.len() < start + need {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("payload truncated: need {need} bytes after offset {start}"),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[start..start + need].to_vec(),
    })
}

/// Up to `limit` images of digits `a` (label 0) and `b` (label 1), pixels
/// scaled to `[0, 1]`.
pub fn two_digit_dataset(images: &IdxArray, labels: &IdxArray, a: u8, b: u8, limit: usize) -> Result<Dataset> {
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(Error::arg("expected a 3-d image array and a 1-d label array"));
    }
    if images.dims[0] != labels.dims[0] {
        return Err(Error::DimensionMismatch {
            expected: images.dims[0],
            got: labels.dims[0],
        });
    }
    let size = images.dims[1] * images.dims[2];
    let mut points = Vec::new();
    let mut ys = Vec::new();
    for (i, &l) in labels.data.iter().enumerate() {
        if points.len() == limit {
            break;
        }
        if l != a && l != b {
            continue;
        }
        points.push(images.data[i * size..(i + 1) * size].iter().map(|&p| p as f64 / 255.0).collect());
        ys.push(if l == a { 0.0 } else { 1.0 });
    }
    Dataset::new(format!("idx-{a}-{b}"), points, ys)
}

pub fn load_idx_dataset(images: &Path, labels: &Path, a: u8, b: u8, limit: usize) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    two_digit_dataset(&parse_idx(&read(images)?)?, &parse_idx(&read(labels)?)?, a, b, limit)
}

/// Rows of `d` feature columns followed by one label; a non-numeric first
/// row is taken as a header.
pub fn parse_csv_dataset(name: &str, text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            offset: e.position().map_or(0, |p| p.byte() as usize),
            message: e.to_string(),
        })?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let mut vals = match vals {
            Ok(v) => v,
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    offset,
                    message: format!("row {}: {e}", row + 1),
                })
            }
        };
        if vals.len() < 2 {
            return Err(Error::Parse {
                offset,
                message: format!("row {} needs features and a label", row + 1),
            });
        }
        labels.push(vals.pop().unwrap_or_default());
        points.push(vals);
    }
    Dataset::new(name, points, labels)
}

pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv");
    parse_csv_dataset(name, &text)
}

/// Uniform points in `[0, 1]^d` with zero labels.
pub fn uniform_cloud(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    Dataset::new("uniform", points, vec![0.0; n])
}
