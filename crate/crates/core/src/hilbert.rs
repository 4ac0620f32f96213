// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Finite-dimensional linear algebra for the quantum sector.
//!
//! Operators are dense `d × d` complex matrices. Everything here is a pure
//! function of its inputs; operators have value semantics and are `Send + Sync`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type C64 = Complex64;

/// Relative tolerance used for every Hermiticity test in the crate.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HilbertError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator has zero dimension")]
    Empty,
    #[error("operator contains non-finite entries")]
    NonFinite,
    #[error("{what} is not Hermitian (relative defect {defect:.3e})")]
    NotHermitian { what: &'static str, defect: f64 },
}

/// Dense operator on the quantum Hilbert space.
#[derive(Clone, PartialEq)]
pub struct QuantumOperator {
    m: DMatrix<C64>,
}

impl fmt::Debug for QuantumOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuantumOperator{}", self.m)
    }
}

impl QuantumOperator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self, HilbertError> {
        if m.nrows() != m.ncols() {
            return Err(HilbertError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(HilbertError::Empty);
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HilbertError::NonFinite);
        }
        Ok(Self { m })
    }

    /// Builds an operator from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self, HilbertError> {
        if entries.len() != dim * dim {
            return Err(HilbertError::DimensionMismatch {
                left: dim * dim,
                right: entries.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, HilbertError> {
        let d = rows.len();
        let mut entries = Vec::with_capacity(d * d);
        for r in rows {
            if r.len() != d {
                return Err(HilbertError::NotSquare { rows: d, cols: r.len() });
            }
            entries.extend(r.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self::from_row_slice(d, &entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { m }
    }

    /// Projector `|ψ⟩⟨ψ|` onto the normalized `psi`.
    pub fn projector(psi: &[C64]) -> Self {
        let v = DVector::from_column_slice(psi);
        let v = &v / C64::new(v.norm(), 0.0);
        Self { m: &v * v.adjoint() }
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    pub fn pauli_y() -> Self {
        let i = C64::i();
        Self::from_row_slice(2, &[C64::new(0.0, 0.0), -i, i, C64::new(0.0, 0.0)]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.m[(r, c)]
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                out.push(self.m[(r, c)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: &self.m * C64::new(s, 0.0),
        }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// `max|A − A†| / max|A|`, zero for the zero operator.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.m[(r, c)] - self.m[(c, r)].conj()).norm());
            }
        }
        worst / scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL
    }

    pub fn ensure_hermitian(&self, what: &'static str) -> Result<(), HilbertError> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian { what, defect });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, HilbertError> {
        same_dim(self, other)?;
        Ok(Self { m: &self.m * &other.m })
    }

    /// `Tr[self · other]`.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..d {
            for c in 0..d {
                acc += self.m[(r, c)] * other.m[(c, r)];
            }
        }
        acc
    }

    /// Largest entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).norm()))
    }
}

impl Add for &QuantumOperator {
    type Output = QuantumOperator;
    fn add(self, rhs: Self) -> QuantumOperator {
        QuantumOperator { m: &self.m + &rhs.m }
    }
}

impl Sub for &QuantumOperator {
    type Output = QuantumOperator;
    fn sub(self, rhs: Self) -> QuantumOperator {
        QuantumOperator { m: &self.m - &rhs.m }
    }
}

impl Mul for &QuantumOperator {
    type Output = QuantumOperator;
    fn mul(self, rhs: Self) -> QuantumOperator {
        QuantumOperator { m: &self.m * &rhs.m }
    }
}

impl Neg for &QuantumOperator {
    type Output = QuantumOperator;
    fn neg(self) -> QuantumOperator {
        QuantumOperator { m: -&self.m }
    }
}

impl Serialize for QuantumOperator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let d = self.dim();
        let rows: Vec<Vec<[f64; 2]>> = (0..d)
            .map(|r| (0..d).map(|c| [self.m[(r, c)].re, self.m[(r, c)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuantumOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(D::Error::custom(format!(
                    "operator rows must have length {dim}, got {}",
                    row.len()
                )));
            }
            entries.extend(row.iter().map(|p| C64::new(p[0], p[1])));
        }
        QuantumOperator::from_row_slice(dim, &entries).map_err(D::Error::custom)
    }
}

fn same_dim(a: &QuantumOperator, b: &QuantumOperator) -> Result<(), HilbertError> {
    if a.dim() != b.dim() {
        return Err(HilbertError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// `AB − BA`.
pub fn commutator(a: &QuantumOperator, b: &QuantumOperator) -> Result<QuantumOperator, HilbertError> {
    same_dim(a, b)?;
    Ok(QuantumOperator {
        m: &a.m * &b.m - &b.m * &a.m,
    })
}

/// `AB + BA`.
pub fn anticommutator(a: &QuantumOperator, b: &QuantumOperator) -> Result<QuantumOperator, HilbertError> {
    same_dim(a, b)?;
    Ok(QuantumOperator {
        m: &a.m * &b.m + &b.m * &a.m,
    })
}

/// Heisenberg time derivative `(i/ħ)[H, F]` of `F` under `H`.
pub fn heisenberg_rate(h: &QuantumOperator, f: &QuantumOperator, hbar: f64) -> Result<QuantumOperator, HilbertError> {
    h.ensure_hermitian("Hamiltonian")?;
    f.ensure_hermitian("coupling operator")?;
    let c = commutator(h, f)?;
    Ok(c.scale_c(C64::new(0.0, 1.0 / hbar)))
}

/// Hermitian 2×2 coefficient matrix of the dissipator in the `(F₂, R₂)` basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[[f64; 2]; 2]; 2]", into = "[[[f64; 2]; 2]; 2]")]
pub struct GKSLMatrix {
    entries: Matrix2<C64>,
}

impl GKSLMatrix {
    pub fn new(entries: Matrix2<C64>) -> Result<Self, HilbertError> {
        let scale = entries.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let defect = (entries - entries.adjoint())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        if scale > 0.0 && defect > HERMITIAN_TOL * scale {
            return Err(HilbertError::NotHermitian {
                what: "GKSL matrix",
                defect: defect / scale,
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HilbertError::NonFinite);
        }
        Ok(Self { entries })
    }

    pub fn zeros() -> Self {
        Self {
            entries: Matrix2::zeros(),
        }
    }

    pub fn entries(&self) -> &Matrix2<C64> {
        &self.entries
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.entries[(a, b)]
    }
}

impl TryFrom<[[[f64; 2]; 2]; 2]> for GKSLMatrix {
    type Error = HilbertError;
    fn try_from(v: [[[f64; 2]; 2]; 2]) -> Result<Self, Self::Error> {
        let c = |p: [f64; 2]| C64::new(p[0], p[1]);
        GKSLMatrix::new(Matrix2::new(c(v[0][0]), c(v[0][1]), c(v[1][0]), c(v[1][1])))
    }
}

impl From<GKSLMatrix> for [[[f64; 2]; 2]; 2] {
    fn from(g: GKSLMatrix) -> Self {
        let p = |z: C64| [z.re, z.im];
        let e = g.entries;
        [[p(e[(0, 0)]), p(e[(0, 1)])], [p(e[(1, 0)]), p(e[(1, 1)])]]
    }
}

/// `Σ_ab D0_ab (L_a W L_b† − ½{L_b† L_a, W})`.
pub fn gksl_apply(
    d0: &GKSLMatrix,
    l: (&QuantumOperator, &QuantumOperator),
    w: &QuantumOperator,
) -> Result<QuantumOperator, HilbertError> {
    same_dim(l.0, w)?;
    same_dim(l.1, w)?;
    let ls = [&l.0.m, &l.1.m];
    let d = w.dim();
    let mut out = DMatrix::<C64>::zeros(d, d);
    let half = C64::new(0.5, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            let coeff = d0.entries[(a, b)];
            if coeff == C64::new(0.0, 0.0) {
                continue;
            }
            let lb_dag = ls[b].adjoint();
            let sandwich = ls[a] * &w.m * &lb_dag;
            let prod = &lb_dag * ls[a];
            let anti = &prod * &w.m + &w.m * &prod;
            out += (sandwich - anti * half) * coeff;
        }
    }
    Ok(QuantumOperator { m: out })
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
pub fn eigh(a: &QuantumOperator) -> Result<(Vec<f64>, DMatrix<C64>), HilbertError> {
    a.ensure_hermitian("operator")?;
    Ok(eigh_matrix(&a.m))
}

/// Eigen-decomposition of a matrix assumed Hermitian; only the Hermitian part
/// is used. Eigenvalues are returned ascending with matching columns.
pub fn eigh_matrix(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian operator.
pub fn min_eigenvalue(a: &QuantumOperator) -> Result<f64, HilbertError> {
    a.ensure_hermitian("operator")?;
    Ok(min_eigenvalue_unchecked(&a.m))
}

pub(crate) fn min_eigenvalue_unchecked(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    match n {
        1 => m[(0, 0)].re,
        2 => {
            let a = m[(0, 0)].re;
            let d = m[(1, 1)].re;
            let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
            let mean = 0.5 * (a + d);
            let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            mean - half_gap
        }
        _ => eigh_matrix(m).0[0],
    }
}
