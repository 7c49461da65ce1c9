//! Linear finite elements on a uniform mesh of `[0, 1]`.
//!
//! Two bases span the same space of continuous piecewise-linear functions
//! vanishing at the origin:
//!
//! * the ReLU basis `ψ_i(x) = ReLU((x - x_{i-1}) / h)`, and
//! * the Hat basis `φ_i(x) = Hat(n x - i + 1)`,
//!
//! for `i = 1..=n`. They are related by `Φ = C Ψ` with the integer
//! upper-triangular matrix `C` built by [`change_of_basis`]. Basis indices in
//! this module are 1-based to match the node numbering `x_0 = 0, ..., x_n = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BandMatrix, SymMatrix};
use crate::quadrature::GaussLegendre;

/// Default number of Gauss–Legendre points per element.
pub const DEFAULT_QUAD_POINTS: usize = 5;

/// `n` elements of width `h = 1/n` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformMesh {
    n: usize,
}

impl UniformMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("mesh needs at least one element"));
        }
        Ok(UniformMesh { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `x_i = i / n`; computed by division so that `x_n == 1` exactly.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Relu,
    Hat,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Relu => "relu",
            BasisKind::Hat => "hat",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(BasisKind::Relu),
            "hat" => Ok(BasisKind::Hat),
            other => Err(Error::arg(format!("unknown basis {other:?} (expected relu|hat)"))),
        }
    }
}

/// The piecewise-linear bump: `p` on `[0,1)`, `2 - p` on `[1,2)`, zero elsewhere.
#[inline]
pub fn hat(p: f64) -> f64 {
    if (0.0..1.0).contains(&p) {
        p
    } else if (1.0..2.0).contains(&p) {
        2.0 - p
    } else {
        0.0
    }
}

#[inline]
fn basis_unchecked(kind: BasisKind, i: usize, x: f64, n: f64) -> f64 {
    let p = n * x - (i as f64 - 1.0);
    match kind {
        BasisKind::Relu => p.max(0.0),
        BasisKind::Hat => hat(p),
    }
}

/// Evaluates `ψ_i(x)` or `φ_i(x)` for `1 <= i <= n`, `0 <= x <= 1`.
pub fn basis_eval(kind: BasisKind, i: usize, x: f64, mesh: &UniformMesh) -> Result<f64> {
    if i == 0 || i > mesh.n() {
        return Err(Error::arg(format!("basis index {i} outside 1..={}", mesh.n())));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::arg(format!("x = {x} outside [0, 1]")));
    }
    Ok(basis_unchecked(kind, i, x, mesh.n() as f64))
}

/// Basis functions that can be nonzero on element `e` (the interval
/// `[x_e, x_{e+1}]`), as a 1-based inclusive range.
fn active_on_element(kind: BasisKind, e: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    match kind {
        BasisKind::Relu => 1..=(e + 1),
        BasisKind::Hat => e.max(1)..=(e + 1).min(n),
    }
}

/// `C` (with `Φ = CΨ`) and its inverse `(C⁻¹)_{ij} = j - i + 1` for `j >= i`.
pub fn change_of_basis(n: usize) -> Result<(BandMatrix, BandMatrix)> {
    if n == 0 {
        return Err(Error::arg("change of basis needs n >= 1"));
    }
    let c = BandMatrix::from_fn(n, 0, 2, |i, j| match j - i {
        0 => 1,
        1 => -2,
        _ => 1,
    });
    let cinv = BandMatrix::from_fn(n, 0, n - 1, |i, j| (j - i + 1) as i64);
    Ok((c, cinv))
}

/// Tridiagonal `A` with diagonal 2 (last entry 1) and off-diagonals -1.
pub fn second_difference_matrix(n: usize) -> Result<BandMatrix> {
    if n == 0 {
        return Err(Error::arg("second difference matrix needs n >= 1"));
    }
    Ok(BandMatrix::from_fn(n, 1, 1, |i, j| {
        if i == j {
            if i == n - 1 {
                1
            } else {
                2
            }
        } else {
            -1
        }
    }))
}

/// `B = a₀a₀ᵀ - a₁a₁ᵀ` with `a₀ = e₁` and `a₁ = (0, …, 0, -1, 1)`.
pub fn corner_perturbation(n: usize) -> Result<BandMatrix> {
    if n < 2 {
        return Err(Error::arg("corner perturbation needs n >= 2"));
    }
    let mut a0 = vec![0_i64; n];
    let mut a1 = vec![0_i64; n];
    a0[0] = 1;
    a1[n - 2] = -1;
    a1[n - 1] = 1;
    Ok(BandMatrix::from_fn(n, 1, 1, |i, j| a0[i] * a0[j] - a1[i] * a1[j]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CctIdentity {
    pub equal: bool,
    pub max_abs_defect: i64,
}

/// Checks `CCᵀ = A² + B` in exact integer arithmetic.
pub fn verify_cct_identity(n: usize) -> Result<CctIdentity> {
    let (c, _) = change_of_basis(n)?;
    let a = second_difference_matrix(n)?;
    let b = corner_perturbation(n)?;
    let cct = c.matmul(&c.transpose())?;
    let rhs = a.matmul(&a)?.add(&b)?;
    let defect = cct.max_abs_diff(&rhs)?;
    Ok(CctIdentity {
        equal: defect == 0,
        max_abs_defect: defect,
    })
}

/// Integer matrix `6 M_Φ / h`: tridiagonal (1, 4, 1) with last diagonal 2.
pub fn hat_mass_stencil(n: usize) -> Result<BandMatrix> {
    if n == 0 {
        return Err(Error::arg("mass stencil needs n >= 1"));
    }
    Ok(BandMatrix::from_fn(n, 1, 1, |i, j| {
        if i != j {
            1
        } else if i == n - 1 {
            2
        } else {
            4
        }
    }))
}

/// Solves `C y = r` in place for the unit upper-triangular `C`.
fn solve_c_in_place(r: &mut [i64]) {
    let n = r.len();
    for i in (0..n).rev() {
        let mut v = r[i];
        if i + 1 < n {
            v += 2 * r[i + 1];
        }
        if i + 2 < n {
            v -= r[i + 2];
        }
        r[i] = v;
    }
}

/// `6 M_Ψ / h = C⁻¹ (6 M_Φ / h) C⁻ᵀ`, by two sweeps of triangular solves in
/// integer arithmetic. Row-major dense result.
fn relu_mass_integer(n: usize) -> Result<Vec<i64>> {
    let m = hat_mass_stencil(n)?;
    // X = C⁻¹ M, column by column.
    let mut x = vec![0_i64; n * n];
    let mut col = vec![0_i64; n];
    for j in 0..n {
        for (i, c) in col.iter_mut().enumerate() {
            *c = m.get(i, j);
        }
        solve_c_in_place(&mut col);
        for i in 0..n {
            x[i * n + j] = col[i];
        }
    }
    // Y = C⁻¹ Xᵀ; M_Ψ = Yᵀ, and Y is symmetric.
    let mut y = vec![0_i64; n * n];
    for j in 0..n {
        col.copy_from_slice(&x[j * n..(j + 1) * n]);
        solve_c_in_place(&mut col);
        for i in 0..n {
            y[i * n + j] = col[i];
        }
    }
    Ok(y)
}

/// Closed-form mass matrix of the chosen basis.
///
/// Hat: `M_Φ = (h/6) M`. ReLU: `M_Ψ = C⁻¹ M_Φ C⁻ᵀ`, evaluated with exact
/// integer solves followed by a single scaling by `h/6`.
pub fn assemble_mass_matrix(kind: BasisKind, mesh: &UniformMesh) -> Result<SymMatrix> {
    let n = mesh.n();
    let scale = mesh.h() / 6.0;
    match kind {
        BasisKind::Hat => {
            let m = hat_mass_stencil(n)?;
            Ok(SymMatrix::from_fn(n, |i, j| m.get(i, j) as f64 * scale))
        }
        BasisKind::Relu => {
            let y = relu_mass_integer(n)?;
            Ok(SymMatrix::from_fn(n, |i, j| y[j * n + i] as f64 * scale))
        }
    }
}

/// Mass matrix by composite Gauss–Legendre quadrature of basis products.
pub fn assemble_mass_matrix_by_quadrature(
    kind: BasisKind,
    mesh: &UniformMesh,
    quad_points: usize,
) -> Result<SymMatrix> {
    if quad_points < 2 {
        return Err(Error::arg("need at least 2 quadrature points per element"));
    }
    let n = mesh.n();
    let nf = n as f64;
    let rule = GaussLegendre::new(quad_points);
    let mut acc = vec![0.0; n * n];
    let mut vals = vec![0.0; n + 1];
    for e in 0..n {
        let active = active_on_element(kind, e, n);
        for (x, w) in rule.on_interval(mesh.node(e), mesh.node(e + 1)) {
            for i in active.clone() {
                vals[i] = basis_unchecked(kind, i, x, nf);
            }
            for i in active.clone() {
                let wi = w * vals[i];
                for j in i..=*active.end() {
                    acc[(i - 1) * n + (j - 1)] += wi * vals[j];
                }
            }
        }
    }
    SymMatrix::from_upper(n, &acc)
}

/// Load vector `b_i = ∫₀¹ u(x) σ_i(x) dx` by composite Gauss–Legendre
/// quadrature on each element.
pub fn assemble_load_vector(
    u: impl Fn(f64) -> f64,
    kind: BasisKind,
    mesh: &UniformMesh,
    quad_points: usize,
) -> Result<Vec<f64>> {
    if quad_points < 2 {
        return Err(Error::arg("need at least 2 quadrature points per element"));
    }
    let n = mesh.n();
    let nf = n as f64;
    let rule = GaussLegendre::new(quad_points);
    let mut b = vec![0.0; n];
    for e in 0..n {
        for (x, w) in rule.on_interval(mesh.node(e), mesh.node(e + 1)) {
            let ux = u(x);
            if !ux.is_finite() {
                return Err(Error::Numeric(format!(
                    "target is not finite on element {e} ([{}, {}]) at x = {x}",
                    mesh.node(e),
                    mesh.node(e + 1)
                )));
            }
            for i in active_on_element(kind, e, n) {
                b[i - 1] += w * ux * basis_unchecked(kind, i, x, nf);
            }
        }
    }
    Ok(b)
}

/// `½∫₀¹ u²` by the same composite rule, the constant term of the loss.
pub fn half_l2_norm_sq(u: impl Fn(f64) -> f64, mesh: &UniformMesh, quad_points: usize) -> f64 {
    let rule = GaussLegendre::new(quad_points.max(1));
    let mut total = 0.0;
    for e in 0..mesh.n() {
        total += rule.integrate(mesh.node(e), mesh.node(e + 1), |x| {
            let v = u(x);
            v * v
        });
    }
    0.5 * total
}

/// Evaluates `Σ_i c_i σ_i(x)` for a coefficient vector in the chosen basis.
pub fn combine_basis(kind: BasisKind, mesh: &UniformMesh, coeffs: &[f64], x: f64) -> Result<f64> {
    if coeffs.len() != mesh.n() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n(),
            got: coeffs.len(),
        });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::arg(format!("x = {x} outside [0, 1]")));
    }
    let nf = mesh.n() as f64;
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * basis_unchecked(kind, k + 1, x, nf))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize) -> UniformMesh {
        UniformMesh::new(n).unwrap()
    }

    #[test]
    fn mesh_nodes_hit_both_endpoints() {
        for n in [1, 3, 7, 49, 100, 255] {
            let m = mesh(n);
            let nodes = m.nodes();
            assert_eq!(nodes[0], 0.0);
            assert_eq!(nodes[n], 1.0);
            assert!(nodes.windows(2).all(|w| w[0] < w[1]));
            assert!((m.h() * n as f64 - 1.0).abs() <= f64::EPSILON);
        }
        assert!(UniformMesh::new(0).is_err());
    }

    #[test]
    fn basis_examples() {
        assert_eq!(basis_eval(BasisKind::Hat, 1, 0.5, &mesh(2)).unwrap(), 1.0);
        assert_eq!(basis_eval(BasisKind::Relu, 1, 1.0, &mesh(2)).unwrap(), 2.0);
        assert_eq!(basis_eval(BasisKind::Hat, 2, 0.9, &mesh(4)).unwrap(), 0.0);
    }

    #[test]
    fn basis_argument_errors() {
        let m = mesh(4);
        assert!(basis_eval(BasisKind::Hat, 0, 0.5, &m).is_err());
        assert!(basis_eval(BasisKind::Hat, 5, 0.5, &m).is_err());
        assert!(basis_eval(BasisKind::Relu, 1, -0.1, &m).is_err());
        assert!(basis_eval(BasisKind::Relu, 1, 1.5, &m).is_err());
    }

    #[test]
    fn relu_basis_is_zero_before_its_node_then_slope_n() {
        let m = mesh(8);
        for i in 1..=8 {
            let left = m.node(i - 1);
            assert_eq!(basis_eval(BasisKind::Relu, i, left * 0.5, &m).unwrap(), 0.0);
            let a = basis_eval(BasisKind::Relu, i, (left + 0.05).min(1.0), &m).unwrap();
            let b = basis_eval(BasisKind::Relu, i, (left + 0.06).min(1.0), &m).unwrap();
            if left + 0.06 <= 1.0 {
                assert!((b - a - 0.01 * 8.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn change_of_basis_examples() {
        let (c, ci) = change_of_basis(3).unwrap();
        assert_eq!(c.to_dense(), vec![vec![1, -2, 1], vec![0, 1, -2], vec![0, 0, 1]]);
        assert_eq!(ci.to_dense(), vec![vec![1, 2, 3], vec![0, 1, 2], vec![0, 0, 1]]);
        let (c1, ci1) = change_of_basis(1).unwrap();
        assert_eq!(c1.to_dense(), vec![vec![1]]);
        assert_eq!(ci1.to_dense(), vec![vec![1]]);
        assert!(change_of_basis(0).is_err());
    }

    #[test]
    fn second_difference_examples() {
        assert_eq!(
            second_difference_matrix(3).unwrap().to_dense(),
            vec![vec![2, -1, 0], vec![-1, 2, -1], vec![0, -1, 1]]
        );
        assert_eq!(second_difference_matrix(1).unwrap().to_dense(), vec![vec![1]]);
        assert_eq!(
            second_difference_matrix(2).unwrap().to_dense(),
            vec![vec![2, -1], vec![-1, 1]]
        );
    }

    #[test]
    fn cct_identity_small_cases() {
        let (c, _) = change_of_basis(2).unwrap();
        assert_eq!(c.matmul(&c.transpose()).unwrap().to_dense(), vec![vec![5, -2], vec![-2, 1]]);
        let a = second_difference_matrix(2).unwrap();
        assert_eq!(a.matmul(&a).unwrap().to_dense(), vec![vec![5, -3], vec![-3, 2]]);
        assert_eq!(corner_perturbation(2).unwrap().to_dense(), vec![vec![0, 1], vec![1, -1]]);
        for n in [2, 8, 128] {
            let r = verify_cct_identity(n).unwrap();
            assert!(r.equal, "n={n}");
            assert_eq!(r.max_abs_defect, 0);
        }
        assert!(verify_cct_identity(1).is_err());
    }

    #[test]
    fn mass_matrix_examples() {
        let hat2 = assemble_mass_matrix(BasisKind::Hat, &mesh(2)).unwrap();
        let expect = [[4.0 / 12.0, 1.0 / 12.0], [1.0 / 12.0, 2.0 / 12.0]];
        let relu2 = assemble_mass_matrix(BasisKind::Relu, &mesh(2)).unwrap();
        let expect_relu = [[4.0 / 3.0, 5.0 / 12.0], [5.0 / 12.0, 1.0 / 6.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((hat2.get(i, j) - expect[i][j]).abs() < 1e-15);
                assert!((relu2.get(i, j) - expect_relu[i][j]).abs() < 1e-15);
            }
        }
        for kind in [BasisKind::Hat, BasisKind::Relu] {
            let m = assemble_mass_matrix(kind, &mesh(1)).unwrap();
            assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-15, "{kind}");
        }
    }

    /// `∫ψ_iψ_j` for `i <= j` from the antiderivative of `(t + d) t / h²`.
    fn relu_mass_entry_exact(i: usize, j: usize, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let l = 1.0 - (j - 1) as f64 * h;
        let d = (j - i) as f64 * h;
        (l.powi(3) / 3.0 + d * l * l / 2.0) / (h * h)
    }

    #[test]
    fn relu_mass_matches_antiderivative() {
        for n in [1, 2, 5, 16, 33] {
            let m = assemble_mass_matrix(BasisKind::Relu, &mesh(n)).unwrap();
            for i in 1..=n {
                for j in i..=n {
                    let exact = relu_mass_entry_exact(i, j, n);
                    let got = m.get(i - 1, j - 1);
                    assert!(
                        (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                        "n={n} ({i},{j}): {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn quadrature_assembly_agrees_with_closed_form() {
        for n in [1, 2, 3, 10, 31] {
            for kind in [BasisKind::Hat, BasisKind::Relu] {
                let a = assemble_mass_matrix(kind, &mesh(n)).unwrap();
                let b = assemble_mass_matrix_by_quadrature(kind, &mesh(n), 5).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        let (x, y) = (a.get(i, j), b.get(i, j));
                        assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()), "{kind} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn load_vector_examples() {
        for kind in [BasisKind::Hat, BasisKind::Relu] {
            let b = assemble_load_vector(|_| 0.0, kind, &mesh(6), 5).unwrap();
            assert!(b.iter().all(|v| *v == 0.0));
        }
        let b = assemble_load_vector(|_| 1.0, BasisKind::Hat, &mesh(2), 5).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15 && (b[1] - 0.25).abs() < 1e-15);
        let b = assemble_load_vector(|x| x, BasisKind::Relu, &mesh(1), 5).unwrap();
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn load_vector_reports_offending_element() {
        let err = assemble_load_vector(
            |x| if x > 0.6 { f64::NAN } else { x },
            BasisKind::Hat,
            &mesh(4),
            5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("element 2"), "{err}");
        assert!(assemble_load_vector(|x| x, BasisKind::Hat, &mesh(4), 1).is_err());
    }

    #[test]
    fn combine_basis_reconstructs_hat_interpolant() {
        let m = mesh(5);
        let coeffs: Vec<f64> = (1..=5).map(|i| (i as f64).sqrt()).collect();
        for i in 1..=5 {
            let v = combine_basis(BasisKind::Hat, &m, &coeffs, m.node(i)).unwrap();
            assert!((v - coeffs[i - 1]).abs() < 1e-14);
        }
    }
}
