//! Dense symmetric and integer band matrices.
//!
//! `SymMatrix` carries the floating-point mass, Gram and structural matrices
//! that feed the eigensolver. `BandMatrix` holds the integer structural
//! matrices so identities between them can be checked exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Dense symmetric matrix in row-major storage.
///
/// Constructors only ever compute the upper triangle and mirror it, so the
/// stored entries are bitwise symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        SymMatrix {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_fn(order, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds a matrix by evaluating `f(i, j)` for `i <= j` and mirroring.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; order * order];
        for i in 0..order {
            for j in i..order {
                let v = f(i, j);
                data[i * order + j] = v;
                data[j * order + i] = v;
            }
        }
        SymMatrix { order, data }
    }

    /// Takes the upper triangle of a square row-major buffer.
    pub fn from_upper(order: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != order * order {
            return Err(Error::DimensionMismatch {
                expected: order * order,
                got: dense.len(),
            });
        }
        Ok(Self::from_fn(order, |i, j| dense[i * order + j]))
    }

    /// Accepts rows only if they are exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::arg("matrix must have at least one row"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::arg(format!("row {i} has {} entries, expected {n}", r.len())));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::arg(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|`; zero for everything built by this module.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.order;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymMatrix {
            order: self.order,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: x.len(),
            });
        }
        Ok((0..self.order)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `xᵀ S y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let sy = self.matvec(y)?;
        if x.len() != self.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&sy).map(|(a, b)| a * b).sum())
    }

    /// True when every entry more than one place off the diagonal is zero.
    pub fn is_tridiagonal(&self) -> bool {
        let n = self.order;
        (0..n).all(|i| ((i + 2)..n).all(|j| self.get(i, j) == 0.0))
    }

    /// Plain-text dump: `n <order>` followed by one space-separated row per
    /// line, 17 significant digits per entry.
    pub fn to_dump(&self) -> String {
        let mut out = format!("n {}\n", self.order);
        for i in 0..self.order {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse {
            offset: 0,
            message: "empty matrix dump".into(),
        })?;
        let order: usize = header
            .strip_prefix("n ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: 0,
                message: format!("bad header {header:?}"),
            })?;
        let mut rows = Vec::with_capacity(order);
        let mut offset = header.len() + 1;
        for line in lines.take(order) {
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|e| Error::Parse {
                offset,
                message: e.to_string(),
            })?;
            offset += line.len() + 1;
            rows.push(row);
        }
        if rows.len() != order {
            return Err(Error::Parse {
                offset,
                message: format!("expected {order} rows, found {}", rows.len()),
            });
        }
        Self::from_rows(&rows)
    }
}

/// Cholesky factor `S = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    order: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(s: &SymMatrix) -> Result<Self> {
        let n = s.order();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = s.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {j} = {d:.3e})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut v = s.get(i, j);
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / d;
            }
        }
        Ok(Cholesky { order: n, lower: l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.order;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= l[i * n + k] * y[k];
            }
            y[i] = v / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= l[k * n + i] * y[k];
            }
            y[i] = v / l[i * n + i];
        }
        Ok(y)
    }
}

/// Square integer matrix stored by diagonals, with `lower` sub- and `upper`
/// super-diagonals. Entries outside the band are zero by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BandMatrix {
    order: usize,
    lower: usize,
    upper: usize,
    data: Vec<i64>,
}

impl BandMatrix {
    pub fn zeros(order: usize, lower: usize, upper: usize) -> Self {
        let lower = lower.min(order.saturating_sub(1));
        let upper = upper.min(order.saturating_sub(1));
        BandMatrix {
            order,
            lower,
            upper,
            data: vec![0; order * (lower + upper + 1)],
        }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_fn(order, 0, 0, |_, _| 1)
    }

    /// `f` is only called for positions inside the band.
    pub fn from_fn(
        order: usize,
        lower: usize,
        upper: usize,
        mut f: impl FnMut(usize, usize) -> i64,
    ) -> Self {
        let mut m = Self::zeros(order, lower, upper);
        for i in 0..order {
            let lo = i.saturating_sub(m.lower);
            let hi = (i + m.upper).min(order - 1);
            for j in lo..=hi {
                let v = f(i, j);
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.lower
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.upper
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.lower + self.upper + 1) + (j + self.lower - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        if i >= self.order || j >= self.order || !self.in_band(i, j) {
            0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.order, self.upper, self.lower, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &BandMatrix) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: other.order,
            });
        }
        let n = self.order;
        let mut out = Self::zeros(n, self.lower + other.lower, self.upper + other.upper);
        for i in 0..n {
            let klo = i.saturating_sub(self.lower);
            let khi = (i + self.upper).min(n - 1);
            for k in klo..=khi {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                let jlo = k.saturating_sub(other.lower);
                let jhi = (k + other.upper).min(n - 1);
                for j in jlo..=jhi {
                    let s = out.slot(i, j);
                    out.data[s] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    fn combine(&self, other: &BandMatrix, sign: i64) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: other.order,
            });
        }
        Ok(Self::from_fn(
            self.order,
            self.lower.max(other.lower),
            self.upper.max(other.upper),
            |i, j| self.get(i, j) + sign * other.get(i, j),
        ))
    }

    pub fn add(&self, other: &BandMatrix) -> Result<Self> {
        self.combine(other, 1)
    }

    pub fn sub(&self, other: &BandMatrix) -> Result<Self> {
        self.combine(other, -1)
    }

    /// Largest `|a_ij - b_ij|` over the full square.
    pub fn max_abs_diff(&self, other: &BandMatrix) -> Result<i64> {
        Ok(self
            .sub(other)?
            .data
            .iter()
            .fold(0_i64, |m, v| m.max(v.abs())))
    }

    pub fn is_identity(&self) -> bool {
        (0..self.order).all(|i| {
            let lo = i.saturating_sub(self.lower);
            let hi = (i + self.upper).min(self.order - 1);
            (lo..=hi).all(|j| self.get(i, j) == i64::from(i == j))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Converts to floating point when the integer matrix is symmetric.
    pub fn to_sym(&self) -> Result<SymMatrix> {
        for i in 0..self.order {
            for j in (i + 1)..self.order {
                if self.get(i, j) != self.get(j, i) {
                    return Err(Error::arg(format!("band matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(SymMatrix::from_fn(self.order, |i, j| self.get(i, j) as f64))
    }
}
