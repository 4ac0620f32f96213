// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Operator-valued phase-space state `Ŵ(h, π)` on a uniform grid.
//!
//! Storage is one flat row-major array: point `(i, j)` (`h` index `i`,
//! `π` index `j`) owns the `d×d` block starting at `(i·n_π + j)·d²`, itself
//! row-major.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{min_eigenvalue_unchecked, QuantumOperator};

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs at least {MIN_POINTS} points per axis (got {n_h}×{n_pi})")]
    TooFewPoints { n_h: usize, n_pi: usize },
    #[error("grid bounds must be finite with max > min")]
    BadBounds,
    #[error("initial quantum state is not a density operator: {0}")]
    BadDensity(String),
    #[error("Gaussian widths must be positive")]
    BadWidth,
    #[error("state size does not match the grid")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpaceGrid {
    pub h_min: f64,
    pub h_max: f64,
    pub n_h: usize,
    pub pi_min: f64,
    pub pi_max: f64,
    pub n_pi: usize,
}

impl PhaseSpaceGrid {
    pub fn new(h_min: f64, h_max: f64, n_h: usize, pi_min: f64, pi_max: f64, n_pi: usize) -> Result<Self, GridError> {
        let g = Self {
            h_min,
            h_max,
            n_h,
            pi_min,
            pi_max,
            n_pi,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `[-half, half]²` with `n` points per axis.
    pub fn symmetric(half_h: f64, half_pi: f64, n: usize) -> Result<Self, GridError> {
        Self::new(-half_h, half_h, n, -half_pi, half_pi, n)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_h < MIN_POINTS || self.n_pi < MIN_POINTS {
            return Err(GridError::TooFewPoints {
                n_h: self.n_h,
                n_pi: self.n_pi,
            });
        }
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && b > a;
        if !ok(self.h_min, self.h_max) || !ok(self.pi_min, self.pi_max) {
            return Err(GridError::BadBounds);
        }
        Ok(())
    }

    pub fn dh(&self) -> f64 {
        (self.h_max - self.h_min) / (self.n_h - 1) as f64
    }

    pub fn dpi(&self) -> f64 {
        (self.pi_max - self.pi_min) / (self.n_pi - 1) as f64
    }

    pub fn h(&self, i: usize) -> f64 {
        self.h_min + i as f64 * self.dh()
    }

    pub fn pi(&self, j: usize) -> f64 {
        self.pi_min + j as f64 * self.dpi()
    }

    pub fn cell_area(&self) -> f64 {
        self.dh() * self.dpi()
    }

    pub fn points(&self) -> usize {
        self.n_h * self.n_pi
    }

    /// Nearest grid indices of a phase-space point, if inside the grid.
    pub fn nearest(&self, h: f64, pi: f64) -> Option<(usize, usize)> {
        let fi = ((h - self.h_min) / self.dh()).round();
        let fj = ((pi - self.pi_min) / self.dpi()).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.n_h as f64 || fj >= self.n_pi as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn max_abs_pi(&self) -> f64 {
        self.pi_min.abs().max(self.pi_max.abs())
    }

    pub fn max_abs_h(&self) -> f64 {
        self.h_min.abs().max(self.h_max.abs())
    }
}

/// Grid of `d×d` operators. Also used for rates and derivative fields, which
/// share the layout but not the normalization invariant.
#[derive(Clone, PartialEq)]
pub struct SemiWignerState {
    pub grid: PhaseSpaceGrid,
    dim: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for SemiWignerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemiWignerState")
            .field("grid", &self.grid)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// Phase-space moments and marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// `p(h_i, π_j)` row-major over `(i, j)`.
    #[serde(skip)]
    pub p: Vec<f64>,
    pub rho_psi: QuantumOperator,
    pub total: f64,
    pub mean_h: f64,
    pub mean_pi: f64,
    pub var_h: f64,
    pub var_pi: f64,
    pub cov_h_pi: f64,
}

impl SemiWignerState {
    pub fn zeros(grid: PhaseSpaceGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            data: vec![C64::new(0.0, 0.0); grid.points() * dim * dim],
        }
    }

    pub fn from_raw(grid: PhaseSpaceGrid, dim: usize, data: Vec<C64>) -> Result<Self, GridError> {
        if data.len() != grid.points() * dim * dim {
            return Err(GridError::Shape);
        }
        Ok(Self { grid, dim, data })
    }

    /// `W(h, π) = G(h, π)·ρ̂ψ` with a product Gaussian normalized on the grid.
    pub fn init_gaussian_product(
        grid: PhaseSpaceGrid,
        h0: f64,
        pi0: f64,
        sigma_h: f64,
        sigma_pi: f64,
        rho_psi: &QuantumOperator,
    ) -> Result<Self, GridError> {
        grid.validate()?;
        if !(sigma_h > 0.0 && sigma_pi > 0.0) {
            return Err(GridError::BadWidth);
        }
        check_density(rho_psi)?;
        let g: Vec<f64> = (0..grid.points())
            .map(|k| {
                let (i, j) = (k / grid.n_pi, k % grid.n_pi);
                let zh = (grid.h(i) - h0) / sigma_h;
                let zp = (grid.pi(j) - pi0) / sigma_pi;
                (-0.5 * (zh * zh + zp * zp)).exp()
            })
            .collect();
        let norm: f64 = g.iter().sum::<f64>() * grid.cell_area();
        Ok(Self::from_density_weights(grid, &g, 1.0 / norm, rho_psi))
    }

    /// All probability in one cell: `W = ρ̂ψ/(ΔhΔπ)` at the grid point nearest `(h0, π0)`.
    pub fn point_mass(grid: PhaseSpaceGrid, h0: f64, pi0: f64, rho_psi: &QuantumOperator) -> Result<Self, GridError> {
        grid.validate()?;
        check_density(rho_psi)?;
        let (i, j) = grid.nearest(h0, pi0).ok_or(GridError::BadBounds)?;
        let mut weights = vec![0.0; grid.points()];
        weights[i * grid.n_pi + j] = 1.0;
        Ok(Self::from_density_weights(
            grid,
            &weights,
            1.0 / grid.cell_area(),
            rho_psi,
        ))
    }

    fn from_density_weights(grid: PhaseSpaceGrid, weights: &[f64], scale: f64, rho: &QuantumOperator) -> Self {
        let d = rho.dim();
        let rho = rho.to_row_major();
        let mut data = Vec::with_capacity(grid.points() * d * d);
        for &w in weights {
            data.extend(rho.iter().map(|z| z * (w * scale)));
        }
        Self { grid, dim: d, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn row_len(&self) -> usize {
        self.grid.n_pi * self.block_len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn block(&self, i: usize, j: usize) -> &[C64] {
        let b = self.block_len();
        let start = (i * self.grid.n_pi + j) * b;
        &self.data[start..start + b]
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut [C64] {
        let b = self.block_len();
        let start = (i * self.grid.n_pi + j) * b;
        &mut self.data[start..start + b]
    }

    pub fn op(&self, i: usize, j: usize) -> QuantumOperator {
        let d = self.dim;
        QuantumOperator::from_matrix(DMatrix::from_row_slice(d, d, self.block(i, j))).expect("finite block")
    }

    pub fn set_op(&mut self, i: usize, j: usize, a: &QuantumOperator) {
        let v = a.to_row_major();
        self.block_mut(i, j).copy_from_slice(&v);
    }

    fn trace_of(block: &[C64], d: usize) -> C64 {
        (0..d).map(|a| block[a * d + a]).sum()
    }

    /// `p(h_i, π_j) = Re Tr Ŵ` row-major over `(i, j)`.
    pub fn density(&self) -> Vec<f64> {
        let b = self.block_len();
        self.data
            .chunks(b)
            .map(|blk| Self::trace_of(blk, self.dim).re)
            .collect()
    }

    /// `Σ Tr Ŵ ΔhΔπ`.
    pub fn total_trace(&self) -> f64 {
        self.density().iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Largest imaginary part of the pointwise trace.
    pub fn max_trace_imag(&self) -> f64 {
        let b = self.block_len();
        self.data
            .chunks(b)
            .map(|blk| Self::trace_of(blk, self.dim).im.abs())
            .fold(0.0, f64::max)
    }

    pub fn marginals(&self) -> Marginals {
        let p = self.density();
        let g = &self.grid;
        let area = g.cell_area();
        let d = self.dim;
        let total: f64 = p.iter().sum::<f64>() * area;
        let mut rho = vec![C64::new(0.0, 0.0); d * d];
        for blk in self.data.chunks(d * d) {
            for (r, z) in rho.iter_mut().zip(blk) {
                *r += z;
            }
        }
        rho.iter_mut().for_each(|z| *z *= area);
        let (mut mh, mut mp) = (0.0, 0.0);
        for (k, &v) in p.iter().enumerate() {
            mh += g.h(k / g.n_pi) * v;
            mp += g.pi(k % g.n_pi) * v;
        }
        let norm = total / area;
        let (mh, mp) = if norm != 0.0 {
            (mh / norm, mp / norm)
        } else {
            (0.0, 0.0)
        };
        let (mut vh, mut vp, mut c) = (0.0, 0.0, 0.0);
        for (k, &v) in p.iter().enumerate() {
            let dh = g.h(k / g.n_pi) - mh;
            let dp = g.pi(k % g.n_pi) - mp;
            vh += dh * dh * v;
            vp += dp * dp * v;
            c += dh * dp * v;
        }
        let (vh, vp, c) = if norm != 0.0 {
            (vh / norm, vp / norm, c / norm)
        } else {
            (0.0, 0.0, 0.0)
        };
        Marginals {
            p,
            rho_psi: QuantumOperator::from_matrix(DMatrix::from_row_slice(d, d, &rho)).expect("finite"),
            total,
            mean_h: mh,
            mean_pi: mp,
            var_h: vh,
            var_pi: vp,
            cov_h_pi: c,
        }
    }

    /// `max_{i,j} max|Ŵ − Ŵ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        self.data
            .par_chunks(d * d)
            .map(|blk| {
                let mut m = 0.0f64;
                for a in 0..d {
                    for b in a..d {
                        m = m.max((blk[a * d + b] - blk[b * d + a].conj()).norm());
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Replaces every block by its Hermitian part.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        self.data.par_chunks_mut(d * d).for_each(|blk| {
            for a in 0..d {
                blk[a * d + a].im = 0.0;
                for b in a + 1..d {
                    let avg = (blk[a * d + b] + blk[b * d + a].conj()) * 0.5;
                    blk[a * d + b] = avg;
                    blk[b * d + a] = avg.conj();
                }
            }
        });
    }

    /// Smallest eigenvalue of `Ŵ(h, π)` over the grid with its location.
    pub fn min_eigenvalue(&self) -> (f64, usize, usize) {
        let d = self.dim;
        let n_pi = self.grid.n_pi;
        let (v, k) = self
            .data
            .par_chunks(d * d)
            .enumerate()
            .map(|(k, blk)| (min_eigenvalue_unchecked(&DMatrix::from_row_slice(d, d, blk)), k))
            .reduce(
                || (f64::INFINITY, 0),
                |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            );
        (v, k / n_pi, k % n_pi)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, z| a.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest block entry within `cells` points of the boundary relative to
    /// the largest entry anywhere.
    pub fn boundary_ratio(&self, cells: usize) -> f64 {
        let g = &self.grid;
        let b = self.block_len();
        let peak = self.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge = 0.0f64;
        for i in 0..g.n_h {
            for j in 0..g.n_pi {
                let near = i < cells || j < cells || i + cells >= g.n_h || j + cells >= g.n_pi;
                if near {
                    let blk = &self.data[(i * g.n_pi + j) * b..(i * g.n_pi + j + 1) * b];
                    edge = blk.iter().fold(edge, |a, z| a.max(z.norm()));
                }
            }
        }
        edge / peak
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: f64, other: &SemiWignerState) {
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(a, b)| *a += b * s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    pub fn max_abs_diff(&self, other: &SemiWignerState) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).norm()))
    }

    /// `∂Ŵ/∂h`, central differences inside and one-sided second-order
    /// stencils at the two edges.
    pub fn partial_h(&self) -> Self {
        self.derivative(Axis::H, Order::First)
    }

    pub fn partial_pi(&self) -> Self {
        self.derivative(Axis::Pi, Order::First)
    }

    pub fn partial2_h(&self) -> Self {
        self.derivative(Axis::H, Order::Second)
    }

    pub fn partial2_pi(&self) -> Self {
        self.derivative(Axis::Pi, Order::Second)
    }

    pub(crate) fn derivative(&self, axis: Axis, order: Order) -> Self {
        let mut out = Self::zeros(self.grid, self.dim);
        derivative_into(self, axis, order, Closure::OneSided, &mut out);
        out
    }

    /// CSV rows `h,pi,p`.
    pub fn write_density_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "h,pi,p")?;
        let p = self.density();
        for i in 0..self.grid.n_h {
            for j in 0..self.grid.n_pi {
                writeln!(
                    w,
                    "{:.12e},{:.12e},{:.12e}",
                    self.grid.h(i),
                    self.grid.pi(j),
                    p[i * self.grid.n_pi + j]
                )?;
            }
        }
        Ok(())
    }
}

fn check_density(rho: &QuantumOperator) -> Result<(), GridError> {
    rho.ensure_hermitian("rho_psi")
        .map_err(|e| GridError::BadDensity(e.to_string()))?;
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(GridError::BadDensity(format!("trace {tr}")));
    }
    let lmin = min_eigenvalue_unchecked(rho.matrix());
    if lmin < -1e-12 {
        return Err(GridError::BadDensity(format!("negative eigenvalue {lmin:.3e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Axis {
    H,
    Pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Order {
    First,
    Second,
}

/// Treatment of the two edge points of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Closure {
    /// One-sided second-order stencils; exact on quadratics everywhere.
    OneSided,
    /// Central stencils with zero beyond the grid. The first derivative stays
    /// skew-symmetric and the second negative definite, which keeps the
    /// semi-discrete generator free of growing boundary modes.
    ZeroExterior,
}

/// Stencil weights `(offsets, weights)` at index `k` of an axis of length `n`,
/// before division by `Δ` or `Δ²`.
fn stencil(k: usize, n: usize, order: Order, closure: Closure) -> ([isize; 4], [f64; 4], usize) {
    if closure == Closure::ZeroExterior && (k == 0 || k == n - 1) {
        let inward: isize = if k == 0 { 1 } else { -1 };
        return match order {
            Order::First => ([inward, 0, 0, 0], [0.5 * inward as f64, 0.0, 0.0, 0.0], 1),
            Order::Second => ([0, inward, 0, 0], [-2.0, 1.0, 0.0, 0.0], 2),
        };
    }
    match order {
        Order::First => {
            if k == 0 {
                ([0, 1, 2, 0], [-1.5, 2.0, -0.5, 0.0], 3)
            } else if k == n - 1 {
                ([0, -1, -2, 0], [1.5, -2.0, 0.5, 0.0], 3)
            } else {
                ([-1, 1, 0, 0], [-0.5, 0.5, 0.0, 0.0], 2)
            }
        }
        Order::Second => {
            if k == 0 {
                ([0, 1, 2, 3], [2.0, -5.0, 4.0, -1.0], 4)
            } else if k == n - 1 {
                ([0, -1, -2, -3], [2.0, -5.0, 4.0, -1.0], 4)
            } else {
                ([-1, 0, 1, 0], [1.0, -2.0, 1.0, 0.0], 3)
            }
        }
    }
}

/// Writes a derivative of `src` along `axis` into `out` (same shape).
pub(crate) fn derivative_into(
    src: &SemiWignerState,
    axis: Axis,
    order: Order,
    closure: Closure,
    out: &mut SemiWignerState,
) {
    let g = src.grid;
    let b = src.block_len();
    let row = src.row_len();
    let (n, spacing) = match axis {
        Axis::H => (g.n_h, g.dh()),
        Axis::Pi => (g.n_pi, g.dpi()),
    };
    let inv = match order {
        Order::First => 1.0 / spacing,
        Order::Second => 1.0 / (spacing * spacing),
    };
    let data = &src.data;
    out.data.par_chunks_mut(row).enumerate().for_each(|(i, out_row)| {
        for j in 0..g.n_pi {
            let k = match axis {
                Axis::H => i,
                Axis::Pi => j,
            };
            let (offs, ws, len) = stencil(k, n, order, closure);
            let dst = &mut out_row[j * b..(j + 1) * b];
            dst.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for s in 0..len {
                let (ii, jj) = match axis {
                    Axis::H => ((i as isize + offs[s]) as usize, j),
                    Axis::Pi => (i, (j as isize + offs[s]) as usize),
                };
                let w = ws[s] * inv;
                let start = (ii * g.n_pi + jj) * b;
                for (z, x) in dst.iter_mut().zip(&data[start..start + b]) {
                    *z += x * w;
                }
            }
        }
    });
}
