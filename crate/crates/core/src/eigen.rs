//! Dense symmetric eigensolver and the eigenvalue statements about the mass,
//! change-of-basis and second-difference matrices.
//!
//! Index conventions: [`EigenDecomposition`] is sorted ascending. The
//! interlacing statements order both `ν` (spectrum of `CCᵀ`) and the analytic
//! `λ_{k,A}` descending, the way the closed formula produces them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass_matrix, change_of_basis, BasisKind, UniformMesh};
use crate::matrix::SymMatrix;
use crate::stats::{log_log_fit, LineFit};

pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius mass, relative to `‖S‖_F`, accepted at the sweep cap.
pub const OFF_DIAGONAL_TOL: f64 = 1e-14;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
/// Absolute slack on the interlacing and `m_k` range checks.
pub const CHECK_SLACK: f64 = 1e-9;

/// Eigenpairs sorted by ascending eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    /// Row `k` holds the unit eigenvector paired with `values[k]`.
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    fn from_unsorted(values: Vec<f64>, vectors: Vec<f64>) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut sv = Vec::with_capacity(n);
        let mut vv = Vec::with_capacity(n * n);
        for &k in &order {
            sv.push(values[k]);
            let mut v = vectors[k * n..(k + 1) * n].to_vec();
            orient(&mut v);
            vv.extend_from_slice(&v);
        }
        EigenDecomposition {
            values: sv,
            vectors: vv,
        }
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.order();
        &self.vectors[k * n..(k + 1) * n]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.order() - 1]
    }

    /// `max_k ‖S v_k − λ_k v_k‖₂`.
    pub fn max_residual(&self, s: &SymMatrix) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..self.order() {
            let v = self.vector(k);
            let sv = s.matvec(v)?;
            let r = sv
                .iter()
                .zip(v)
                .map(|(a, b)| (a - self.values[k] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        Ok(worst)
    }

    /// `‖VᵀV − I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.order();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d: f64 = self.vector(i).iter().zip(self.vector(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

/// Flips `v` so that its first non-negligible component is positive.
fn orient(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// A rotation is skipped when `|s_pq| <= ε·sqrt(|s_pp s_qq|)`; the iteration
/// stops after a sweep with no rotation. `tol` bounds every residual
/// `‖S v − λ v‖₂` relative to `‖S‖_F`.
pub fn symmetric_eigen(s: &SymMatrix, tol: f64) -> Result<EigenDecomposition> {
    let n = s.order();
    if n == 0 {
        return Err(Error::arg("eigendecomposition of an empty matrix"));
    }
    let norm = s.frobenius_norm();
    if !norm.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let mut a = s.as_slice().to_vec();
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotations = 0;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq == 0.0 || apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() {
                    continue;
                }
                rotations += 1;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate_rows(&mut a, n, p, q, c, sn);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k];
                        a[k * n + q] = a[q * n + k];
                    }
                }
                rotate_rows(&mut vt, n, p, q, c, sn);
            }
        }
        if rotations == 0 {
            converged = true;
            break;
        }
    }
    if !converged && off_diagonal_norm(&a, n) > OFF_DIAGONAL_TOL * norm {
        return Err(Error::NoConvergence {
            sweeps,
            residual: off_diagonal_norm(&a, n) / norm,
        });
    }
    let values: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let eig = EigenDecomposition::from_unsorted(values, vt);
    let residual = eig.max_residual(s)?;
    if residual > tol * norm {
        return Err(Error::NoConvergence {
            sweeps,
            residual: residual / norm,
        });
    }
    Ok(eig)
}

/// Applies the rotation to rows `p` and `q`, leaving the `(p, q)` block to
/// the caller for the matrix case.
fn rotate_rows(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = a.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (u, v) = (*x, *y);
        *x = c * u - s * v;
        *y = s * u + c * v;
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i * n + j] * a[i * n + j];
            }
        }
    }
    sum.sqrt()
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (length `n − 1`), ascending, by implicit QL.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 {
        return Err(Error::arg("eigenvalues of an empty matrix"));
    }
    if e.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            got: e.len(),
        });
    }
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence {
                    sweeps: iter,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Ascending eigenvalues; tridiagonal input takes the QL path, anything else
/// the Jacobi solver.
pub fn symmetric_eigenvalues(s: &SymMatrix) -> Result<Vec<f64>> {
    let n = s.order();
    if n > 1 && s.is_tridiagonal() {
        let d = s.diagonal();
        let e: Vec<f64> = (0..n - 1).map(|i| s.get(i, i + 1)).collect();
        return tridiagonal_eigenvalues(&d, &e);
    }
    Ok(symmetric_eigen(s, DEFAULT_RESIDUAL_TOL)?.values)
}

/// `λ_{k,A} = 4cos²(kπ/(2n+1))` with eigenvector entries
/// `−sin((n + ½ − k) t_j π)`, `t_j = 2j/(2n+1)`.
pub fn analytic_eigs_a(n: usize) -> Result<EigenDecomposition> {
    if n == 0 {
        return Err(Error::arg("analytic eigenpairs need n >= 1"));
    }
    let denom = (2 * n + 1) as f64;
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for k in 1..=n {
        values.push(4.0 * (k as f64 * PI / denom).cos().powi(2));
        let shift = n as f64 + 0.5 - k as f64;
        let v: Vec<f64> = (1..=n)
            .map(|j| -(shift * (2 * j) as f64 / denom * PI).sin())
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        vectors.extend(v.iter().map(|x| x / norm));
    }
    Ok(EigenDecomposition::from_unsorted(values, vectors))
}

/// Analytic `λ_{k,A}` for `k = 1..=n`, descending.
pub fn analytic_a_values_descending(n: usize) -> Vec<f64> {
    let denom = (2 * n + 1) as f64;
    (1..=n)
        .map(|k| 4.0 * (k as f64 * PI / denom).cos().powi(2))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: f64,
    pub radius: f64,
}

/// One Gershgorin disc per row.
pub fn gershgorin_intervals(s: &SymMatrix) -> Vec<Disc> {
    (0..s.order())
        .map(|i| {
            let row = s.row(i);
            let radius = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v.abs())
                .sum();
            Disc {
                center: row[i],
                radius,
            }
        })
        .collect()
}

/// Smallest interval containing every disc.
pub fn gershgorin_hull(discs: &[Disc]) -> (f64, f64) {
    discs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d.center - d.radius), hi.max(d.center + d.radius))
    })
}

/// `CCᵀ` as a floating-point matrix.
pub fn cct_matrix(n: usize) -> Result<SymMatrix> {
    let (c, _) = change_of_basis(n)?;
    let cct = c.matmul(&c.transpose())?;
    cct.to_sym()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuBounds {
    pub nu1: f64,
    pub nu_n: f64,
    pub lower_bound: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

/// `ν₁ <= 16` and `ν_n >= 4/(n²(n+1)²)` for the spectrum of `CCᵀ`.
pub fn nu_bounds_check(n: usize) -> Result<NuBounds> {
    let nu = symmetric_eigenvalues(&cct_matrix(n)?)?;
    let nf = n as f64;
    let lower_bound = 4.0 / (nf * nf * (nf + 1.0) * (nf + 1.0));
    let nu1 = nu[n - 1];
    let nu_n = nu[0];
    Ok(NuBounds {
        nu1,
        nu_n,
        lower_bound,
        upper_ok: nu1 <= 16.0,
        lower_ok: nu_n >= lower_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interlacing {
    pub holds: bool,
    /// 1-based indices `i` of `ν_i` (descending) that break their bracket.
    pub violations: Vec<usize>,
}

/// Brackets of `ν_i` (descending) by squared `λ_{k,A}` (descending):
/// `λ₂² <= ν₁ <= λ₁² + 1`, `λ_{i+1}² <= ν_i <= λ_{i−1}²`, `0 < ν_n <= λ_{n−1}²`.
pub fn interlacing_check(n: usize) -> Result<Interlacing> {
    if n < 3 {
        return Err(Error::arg("interlacing needs n >= 3"));
    }
    let mut nu = symmetric_eigenvalues(&cct_matrix(n)?)?;
    nu.reverse();
    let lam2: Vec<f64> = analytic_a_values_descending(n)
        .iter()
        .map(|l| l * l)
        .collect();
    Ok(interlacing_against(&nu, &lam2))
}

fn interlacing_against(nu: &[f64], lam2: &[f64]) -> Interlacing {
    let n = nu.len();
    let mut violations = Vec::new();
    for i in 0..n {
        let (lo, hi) = if i == 0 {
            (lam2[1], lam2[0] + 1.0)
        } else if i == n - 1 {
            (0.0, lam2[n - 2])
        } else {
            (lam2[i + 1], lam2[i - 1])
        };
        let ok = if i == n - 1 {
            nu[i] > 0.0 && nu[i] <= hi + CHECK_SLACK
        } else {
            nu[i] >= lo - CHECK_SLACK && nu[i] <= hi + CHECK_SLACK
        };
        if !ok {
            violations.push(i + 1);
        }
    }
    Interlacing {
        holds: violations.is_empty(),
        violations,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassLaw {
    /// `m_k` listed by ascending `λ_{k,M_Ψ}`.
    pub m: Vec<f64>,
    pub all_in_range: bool,
}

/// `m_k = λ_{k,M_Ψ} ν / h`, pairing the largest mass eigenvalue with the
/// smallest `ν` and so on down.
pub fn mass_spectrum_law_check(n: usize) -> Result<MassLaw> {
    let mesh = UniformMesh::new(n)?;
    let lam = symmetric_eigenvalues(&assemble_mass_matrix(BasisKind::Relu, &mesh)?)?;
    let nu = symmetric_eigenvalues(&cct_matrix(n)?)?;
    let h = mesh.h();
    let m: Vec<f64> = (0..n).map(|i| lam[i] * nu[n - 1 - i] / h).collect();
    let all_in_range = m
        .iter()
        .all(|v| *v >= 1.0 / 6.0 - CHECK_SLACK && *v <= 1.0 + CHECK_SLACK);
    Ok(MassLaw { m, all_in_range })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub sizes: Vec<usize>,
    pub ratios: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// `λ_max/λ_min` of the mass matrix per size and the log–log slope.
pub fn conditioning_scaling_fit(kind: BasisKind, sizes: &[usize]) -> Result<ScalingFit> {
    if sizes.len() < 3 {
        return Err(Error::arg("conditioning fit needs at least three sizes"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::arg("sizes must be positive and strictly increasing"));
    }
    let ratios = sizes
        .par_iter()
        .map(|&n| {
            let m = assemble_mass_matrix(kind, &UniformMesh::new(n)?)?;
            let ev = symmetric_eigenvalues(&m)?;
            Ok(ev[n - 1] / ev[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let x: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let fit = log_log_fit(&x, &ratios)?;
    Ok(ScalingFit {
        sizes: sizes.to_vec(),
        ratios,
        slope: fit.slope,
        intercept: fit.intercept,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioDecay {
    pub js: Vec<usize>,
    /// `λ_(j)/λ_min` with `λ_(j)` the j-th largest eigenvalue.
    pub descending: LineFit,
    /// `λ_max/λ_j` with `λ_j` the j-th smallest eigenvalue.
    pub ascending: LineFit,
}

/// Log–log fits of eigenvalue ratios against the index `j` under both
/// orderings of the spectrum.
pub fn ratio_decay_fit(kind: BasisKind, n: usize, js: &[usize]) -> Result<RatioDecay> {
    if js.iter().any(|&j| j == 0 || j > n) {
        return Err(Error::arg(format!("ratio indices must lie in 1..={n}")));
    }
    let ev = symmetric_eigenvalues(&assemble_mass_matrix(kind, &UniformMesh::new(n)?)?)?;
    let x: Vec<f64> = js.iter().map(|&j| j as f64).collect();
    let desc: Vec<f64> = js.iter().map(|&j| ev[n - j] / ev[0]).collect();
    let asc: Vec<f64> = js.iter().map(|&j| ev[n - 1] / ev[j - 1]).collect();
    Ok(RatioDecay {
        js: js.to_vec(),
        descending: log_log_fit(&x, &desc)?,
        ascending: log_log_fit(&x, &asc)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayleighCheck {
    pub k: usize,
    /// `(Cᵀv)·(Cᵀv) / (vᵀ M_Φ v)` with `v = C⁻ᵀ ξ_k`.
    pub rayleigh: f64,
    /// `1/λ_{k,M_Ψ}`.
    pub predicted: f64,
    /// `n³·rayleigh`, the continuous second-difference quotient.
    pub scaled: f64,
}

impl RayleighCheck {
    pub fn relative_error(&self) -> f64 {
        (self.rayleigh - self.predicted).abs() / self.predicted.abs()
    }
}

/// Second-difference quotient of the k-th (ascending, 1-based) eigenvector
/// of `M_Ψ`.
pub fn rayleigh_second_difference(k: usize, n: usize) -> Result<RayleighCheck> {
    if k == 0 || k > n {
        return Err(Error::arg(format!("eigen index {k} outside 1..={n}")));
    }
    let eig = relu_mass_eigen(n)?;
    rayleigh_from_eigen(&eig, k, n)
}

/// The quotient for every `k = 1..=n` from a single decomposition.
pub fn rayleigh_all(n: usize) -> Result<Vec<RayleighCheck>> {
    let eig = relu_mass_eigen(n)?;
    (1..=n).map(|k| rayleigh_from_eigen(&eig, k, n)).collect()
}

pub fn relu_mass_eigen(n: usize) -> Result<EigenDecomposition> {
    let m = assemble_mass_matrix(BasisKind::Relu, &UniformMesh::new(n)?)?;
    symmetric_eigen(&m, DEFAULT_RESIDUAL_TOL)
}

fn rayleigh_from_eigen(eig: &EigenDecomposition, k: usize, n: usize) -> Result<RayleighCheck> {
    let xi = eig.vector(k - 1);
    // v = C⁻ᵀ ξ: forward substitution with the unit lower-triangular Cᵀ.
    let mut v = vec![0.0; n];
    for i in 0..n {
        let mut x = xi[i];
        if i >= 1 {
            x += 2.0 * v[i - 1];
        }
        if i >= 2 {
            x -= v[i - 2];
        }
        v[i] = x;
    }
    let at = |i: isize| if i < 0 { 0.0 } else { v[i as usize] };
    let mut num = 0.0;
    for i in 0..n as isize {
        let d = at(i) - 2.0 * at(i - 1) + at(i - 2);
        num += d * d;
    }
    // vᵀ M_Φ v as a sum of element integrals h(a² + ab + b²)/3, all nonnegative.
    let h = 1.0 / n as f64;
    let mut den = 0.0;
    for i in 0..n as isize {
        let (a, b) = (at(i - 1), at(i));
        den += a * a + a * b + b * b;
    }
    den *= h / 3.0;
    let rayleigh = num / den;
    Ok(RayleighCheck {
        k,
        rayleigh,
        predicted: 1.0 / eig.values()[k - 1],
        scaled: rayleigh * (n as f64).powi(3),
    })
}

/// `k,lambda` CSV with 1-based `k`.
pub fn spectrum_csv(values: &[f64]) -> String {
    let mut out = String::from("k,lambda\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{:e}", k + 1, v);
    }
    out
}

pub fn is_positive_definite(s: &SymMatrix) -> Result<bool> {
    Ok(symmetric_eigenvalues(s)?[0] > 0.0)
}
