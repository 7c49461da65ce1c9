//! Gradient descent on the finite-element least-squares loss
//! `L(a) = ½aᵀMa − bᵀa + ½∫u²`, tracked in the eigenbasis of `M`.

use std::fmt::Write as _;

use crate::eigen::{symmetric_eigen, EigenDecomposition, DEFAULT_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_load_vector, assemble_mass_matrix, combine_basis, half_l2_norm_sq, BasisKind,
    UniformMesh, DEFAULT_QUAD_POINTS,
};
use crate::matrix::{Cholesky, SymMatrix};

/// Largest number of eigencomponents written as separate CSV columns.
pub const CSV_ALPHA_COLUMNS: usize = 64;

#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    pub kind: BasisKind,
    pub mesh: UniformMesh,
    pub mass: SymMatrix,
    pub load: Vec<f64>,
    /// `½∫₀¹ u²`.
    pub target_l2sq: f64,
}

impl QuadraticProblem {
    /// Assembles mass matrix, load vector and `½∫u²` for target `u`.
    pub fn new(kind: BasisKind, mesh: UniformMesh, u: impl Fn(f64) -> f64) -> Result<Self> {
        let mass = assemble_mass_matrix(kind, &mesh)?;
        let load = assemble_load_vector(&u, kind, &mesh, DEFAULT_QUAD_POINTS)?;
        let target_l2sq = half_l2_norm_sq(&u, &mesh, DEFAULT_QUAD_POINTS);
        Ok(QuadraticProblem {
            kind,
            mesh,
            mass,
            load,
            target_l2sq,
        })
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    fn check_len(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: a.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, a: &[f64]) -> Result<f64> {
        self.check_len(a)?;
        let quad = self.mass.bilinear(a, a)?;
        let lin: f64 = self.load.iter().zip(a).map(|(b, x)| b * x).sum();
        Ok(0.5 * quad - lin + self.target_l2sq)
    }

    /// `Ma − b`.
    pub fn gradient(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.check_len(a)?;
        let mut g = self.mass.matvec(a)?;
        g.iter_mut().zip(&self.load).for_each(|(g, b)| *g -= b);
        Ok(g)
    }

    /// `a* = M⁻¹b` by Cholesky.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        Cholesky::factor(&self.mass)?.solve(&self.load)
    }
}

pub fn quadratic_loss(p: &QuadraticProblem, a: &[f64]) -> Result<f64> {
    p.loss(a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `1/λ_max(M)`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct GdTrace {
    pub step_size: f64,
    pub minimizer: Vec<f64>,
    /// `a_0, …, a_steps`.
    pub iterates: Vec<Vec<f64>>,
    /// `alpha[ℓ][i] = ψ^i·(a* − a_ℓ)` with `i` over ascending eigenvalues.
    pub alpha: Vec<Vec<f64>>,
    pub loss: Vec<f64>,
    pub eigen: EigenDecomposition,
}

impl GdTrace {
    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }

    /// `max_{i,ℓ} |α_i^ℓ − α_i^0 (1 − ηλ_i)^ℓ|`.
    pub fn max_decay_deviation(&self) -> f64 {
        let lam = self.eigen.values();
        let a0 = &self.alpha[0];
        let mut worst: f64 = 0.0;
        for (l, row) in self.alpha.iter().enumerate() {
            for i in 0..row.len() {
                let predicted = a0[i] * (1.0 - self.step_size * lam[i]).powi(l as i32);
                worst = worst.max((row[i] - predicted).abs());
            }
        }
        worst
    }

    /// `max_ℓ |(L(a_ℓ) − L(a*)) − ½Σλ_i(α_i^ℓ)²|`.
    pub fn max_energy_defect(&self, p: &QuadraticProblem) -> Result<f64> {
        let lstar = p.loss(&self.minimizer)?;
        let lam = self.eigen.values();
        let mut worst: f64 = 0.0;
        for (l, row) in self.alpha.iter().enumerate() {
            let energy: f64 = 0.5 * row.iter().zip(lam).map(|(a, l)| l * a * a).sum::<f64>();
            worst = worst.max((self.loss[l] - lstar - energy).abs());
        }
        Ok(worst)
    }

    /// Indices (0-based) of the eigencomponents exported as CSV columns.
    pub fn csv_columns(&self) -> Vec<usize> {
        let n = self.eigen.order();
        if n <= CSV_ALPHA_COLUMNS {
            (0..n).collect()
        } else {
            let mut idx: Vec<usize> = [1, n / 4, n / 2, 3 * n / 4, n]
                .iter()
                .map(|&k| k.max(1) - 1)
                .collect();
            idx.dedup();
            idx
        }
    }

    /// `iter,loss,alpha_<k>,…` with 1-based `k`.
    pub fn to_csv(&self) -> String {
        let cols = self.csv_columns();
        let mut out = String::from("iter,loss");
        for c in &cols {
            let _ = write!(out, ",alpha_{}", c + 1);
        }
        out.push('\n');
        for (l, row) in self.alpha.iter().enumerate() {
            let _ = write!(out, "{l},{:e}", self.loss[l]);
            for &c in &cols {
                let _ = write!(out, ",{:e}", row[c]);
            }
            out.push('\n');
        }
        out
    }
}

fn project(eig: &EigenDecomposition, e: &[f64]) -> Vec<f64> {
    (0..eig.order())
        .map(|i| eig.vector(i).iter().zip(e).map(|(v, x)| v * x).sum())
        .collect()
}

/// Plain gradient descent `a_{ℓ+1} = a_ℓ − η(Ma_ℓ − b)`.
pub fn run_gd(p: &QuadraticProblem, a0: &[f64], steps: usize, step: StepSize) -> Result<GdTrace> {
    p.check_len(a0)?;
    let eigen = symmetric_eigen(&p.mass, DEFAULT_RESIDUAL_TOL)?;
    let eta = match step {
        StepSize::Auto => 1.0 / eigen.max(),
        StepSize::Fixed(s) if s > 0.0 && s.is_finite() => s,
        StepSize::Fixed(s) => return Err(Error::arg(format!("step size {s} must be positive"))),
    };
    let a_star = p.minimizer()?;
    let mut iterates = Vec::with_capacity(steps + 1);
    let mut alpha = Vec::with_capacity(steps + 1);
    let mut loss = Vec::with_capacity(steps + 1);
    let mut a = a0.to_vec();
    for l in 0..=steps {
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "iterate {l} is not finite (step size {eta:e} exceeds 2/λ_max = {:e}?)",
                2.0 / eigen.max()
            )));
        }
        let err: Vec<f64> = a_star.iter().zip(&a).map(|(s, x)| s - x).collect();
        alpha.push(project(&eigen, &err));
        loss.push(p.loss(&a)?);
        iterates.push(a.clone());
        if l == steps {
            break;
        }
        let g = p.gradient(&a)?;
        a.iter_mut().zip(&g).for_each(|(x, g)| *x -= eta * g);
    }
    Ok(GdTrace {
        step_size: eta,
        minimizer: a_star,
        iterates,
        alpha,
        loss,
        eigen,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Profile {
    /// `Σ |Δy_{j+1} − Δy_j|` over first differences `Δy`.
    pub fn total_variation_of_differences(&self) -> f64 {
        let d: Vec<f64> = self.y.windows(2).map(|w| w[1] - w[0]).collect();
        d.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// The function `Σ_i ψ_i^k σ_i(x)` built from the k-th (ascending, 1-based)
/// eigenvector of the mass matrix, sampled at `samples` uniform points.
pub fn eigenfunction_profile(p: &QuadraticProblem, k: usize, samples: usize) -> Result<Profile> {
    let eig = symmetric_eigen(&p.mass, DEFAULT_RESIDUAL_TOL)?;
    eigenfunction_profile_from(p, &eig, k, samples)
}

pub fn eigenfunction_profile_from(
    p: &QuadraticProblem,
    eig: &EigenDecomposition,
    k: usize,
    samples: usize,
) -> Result<Profile> {
    if k == 0 || k > p.n() {
        return Err(Error::arg(format!("eigen index {k} outside 1..={}", p.n())));
    }
    if samples < 2 {
        return Err(Error::arg("need at least two samples"));
    }
    let v = eig.vector(k - 1);
    let x: Vec<f64> = (0..samples)
        .map(|j| j as f64 / (samples - 1) as f64)
        .collect();
    let y = x
        .iter()
        .map(|&t| combine_basis(p.kind, &p.mesh, v, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Profile { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn problem(kind: BasisKind, n: usize) -> QuadraticProblem {
        QuadraticProblem::new(kind, UniformMesh::new(n).unwrap(), |x| (PI * x).sin() + x * x).unwrap()
    }

    #[test]
    fn loss_examples() {
        let p = QuadraticProblem::new(BasisKind::Hat, UniformMesh::new(1).unwrap(), |x| x).unwrap();
        assert!(p.loss(&[1.0]).unwrap().abs() < 1e-15);
        assert!((p.loss(&[0.0]).unwrap() - p.target_l2sq).abs() == 0.0);
        assert!((p.target_l2sq - 1.0 / 6.0).abs() < 1e-15);
        assert!(p.loss(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn minimizer_of_in_span_target_has_zero_loss() {
        // u(x) = 3x - |x - 0.5| is piecewise linear on the n = 4 mesh.
        let u = |x: f64| 3.0 * x - (x - 0.5).abs() + 0.5;
        for kind in [BasisKind::Hat, BasisKind::Relu] {
            let p = QuadraticProblem::new(kind, UniformMesh::new(4).unwrap(), u).unwrap();
            let a = p.minimizer().unwrap();
            assert!(p.loss(&a).unwrap().abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn start_at_minimizer_stays_there() {
        let p = problem(BasisKind::Relu, 8);
        let a0 = p.minimizer().unwrap();
        let t = run_gd(&p, &a0, 10, StepSize::Auto).unwrap();
        assert!(t.alpha.iter().flatten().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn top_component_vanishes_after_one_step() {
        let p = problem(BasisKind::Hat, 6);
        let eig = symmetric_eigen(&p.mass, 1e-10).unwrap();
        let a_star = p.minimizer().unwrap();
        let top = eig.vector(5);
        let a0: Vec<f64> = a_star.iter().zip(top).map(|(s, v)| s - 0.7 * v).collect();
        let t = run_gd(&p, &a0, 3, StepSize::Auto).unwrap();
        assert!((t.alpha[0][5] - 0.7).abs() < 1e-12);
        assert!(t.alpha[1].iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn decay_law_and_energy_identity() {
        let p = problem(BasisKind::Relu, 16);
        let a0: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let t = run_gd(&p, &a0, 200, StepSize::Auto).unwrap();
        assert!(t.max_decay_deviation() < 1e-10);
        assert!(t.max_energy_defect(&p).unwrap() < 1e-10);
        assert!(t.loss.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn divergent_step_is_reported() {
        let p = problem(BasisKind::Hat, 8);
        let err = run_gd(&p, &vec![1.0; 8], 5000, StepSize::Fixed(1e3)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(run_gd(&p, &vec![1.0; 8], 1, StepSize::Fixed(-1.0)).is_err());
    }

    #[test]
    fn csv_columns_are_capped() {
        let p = problem(BasisKind::Hat, 80);
        let t = run_gd(&p, &vec![0.0; 80], 2, StepSize::Auto).unwrap();
        assert_eq!(t.csv_columns(), vec![0, 19, 39, 59, 79]);
        let csv = t.to_csv();
        assert!(csv.starts_with("iter,loss,alpha_1,alpha_20,alpha_40,alpha_60,alpha_80\n"));
        assert_eq!(csv.lines().count(), 4);
        let small = run_gd(&problem(BasisKind::Hat, 3), &[0.0; 3], 1, StepSize::Auto).unwrap();
        assert!(small.to_csv().starts_with("iter,loss,alpha_1,alpha_2,alpha_3\n"));
    }

    #[test]
    fn profile_of_single_element() {
        let p = problem(BasisKind::Relu, 1);
        let prof = eigenfunction_profile(&p, 1, 5).unwrap();
        for (x, y) in prof.x.iter().zip(&prof.y) {
            assert!((y - x).abs() < 1e-15);
        }
        assert!(eigenfunction_profile(&p, 2, 5).is_err());
    }
}
