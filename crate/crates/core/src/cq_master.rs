// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Markovian classical–quantum generator on the phase-space grid and its
//! explicit time integration.
//!
//! The generator is evaluated as
//!
//! ```text
//! ∂ₜŴ = −π ∂ₕŴ − ∂_π(ÃŴ) + N33_2 ∂ₕ²Ŵ + N33 ∂_π²Ŵ
//!       + KŴ + ŴK† + Σₖ λₖ MₖŴMₖ†
//!       + B_π ∂_πŴ + ∂_πŴ B_π† + Bₕ ∂ₕŴ + ∂ₕŴ Bₕ†
//! ```
//!
//! where `K = −(i/ħ)Ĥ_eff − ½Σ D0_ab L_b L_a` and `D0 = Σₖ λₖ vₖvₖ†` with
//! `Mₖ = Σₐ vₖ[a] Lₐ`, which is the dissipator rewritten in its eigenbasis.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq_coeffs::CQCoefficients;
use crate::hilbert::{eigh_matrix, QuantumOperator};
use crate::semi_wigner::{derivative_into, Axis, Closure, Order, SemiWignerState};

/// Safety factor applied to every explicit stability limit of the stencils.
pub const CFL_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4,
    Euler,
}

/// Discretization of the hybrid flux terms `∂(BŴ + ŴB†)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridStencil {
    /// Plain central differences with the whole `BŴB†/2N` part of the
    /// dissipator applied on site.
    #[default]
    Central,
    /// Central differences with the `BŴB†` sandwich moved onto the
    /// neighbouring cells with Kraus-consistent weights. Every cell-to-cell
    /// transfer is then a completely positive map, so the semi-discrete
    /// generator is itself a lattice Lindbladian whenever the local condition
    /// holds and the cell Péclet number stays below 2. Differs from
    /// `Central` by `O(Δ²)` where the Péclet number is small; the weights
    /// grow without bound as it approaches 2, so accuracy degrades there.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub output_stride: usize,
    pub integrator: Integrator,
    pub monitor_positivity: bool,
    /// Width of the boundary band watched by the mass monitor, in cells.
    pub boundary_cells: usize,
    /// Abort when the band holds more than this fraction of the peak.
    pub boundary_threshold: f64,
    /// Abort when `|Σ Tr Ŵ ΔhΔπ − initial|` exceeds this.
    pub trace_tolerance: f64,
    pub keep_snapshots: bool,
    pub hybrid_stencil: HybridStencil,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            output_stride: 100,
            integrator: Integrator::Rk4,
            monitor_positivity: true,
            boundary_cells: 5,
            boundary_threshold: 1e-8,
            trace_tolerance: 1e-6,
            keep_snapshots: false,
            hybrid_stencil: HybridStencil::Central,
        }
    }
}

impl EvolutionConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be >= 0");
        }
        if self.output_stride == 0 {
            return bad("output_stride must be >= 1");
        }
        if !(self.boundary_threshold > 0.0) || !(self.trace_tolerance > 0.0) {
            return bad("monitor thresholds must be positive");
        }
        let n = self.t_final / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return bad("t_final must be an integer multiple of dt");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityLimits {
    pub diffusion_h: f64,
    pub diffusion_pi: f64,
    pub streaming: f64,
    pub drift: f64,
    pub hybrid: f64,
    pub quantum: f64,
}

impl StabilityLimits {
    pub fn max_dt(&self) -> f64 {
        [
            self.diffusion_h,
            self.diffusion_pi,
            self.streaming,
            self.drift,
            self.hybrid,
            self.quantum,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    TraceDrift,
    BoundaryMass,
    NonFinite,
}

#[derive(Debug, Clone, Error)]
pub enum EvolveError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("dt = {dt} exceeds the stability bound {max_dt:.4e} ({limits:?})")]
    Cfl {
        dt: f64,
        max_dt: f64,
        limits: StabilityLimits,
    },
    #[error("state and coefficients disagree on the quantum dimension ({state} vs {coeffs})")]
    Dimension { state: usize, coeffs: usize },
    #[error("run aborted at t = {t}: {reason:?} ({detail})")]
    Aborted {
        reason: AbortReason,
        t: f64,
        detail: String,
        partial: Box<EvolutionResult>,
    },
}

/// Quantum observable reported as `Tr[ρ̂ψ Ô]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    pub op: QuantumOperator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub step: usize,
    pub t: f64,
    pub trace: f64,
    pub min_p: f64,
    pub min_eig: Option<f64>,
    pub mean_h: f64,
    pub mean_pi: f64,
    pub var_h: f64,
    pub var_pi: f64,
    pub hermiticity: f64,
    pub boundary_ratio: f64,
    pub observables: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub observable_names: Vec<String>,
    pub records: Vec<Diagnostics>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, SemiWignerState)>,
    #[serde(skip)]
    pub final_state: Option<SemiWignerState>,
    /// Largest pointwise `max|Ŵ − Ŵ†|` produced by a step, before the
    /// integrator's Hermitian projection.
    pub max_hermiticity_defect: f64,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

/// Precomputed dense blocks of the generator.
#[derive(Debug, Clone)]
pub struct Generator {
    pub coeffs: CQCoefficients,
    d: usize,
    k_base: Vec<C64>,
    k_h: Vec<C64>,
    k_pi: Vec<C64>,
    jumps: Vec<(f64, Vec<C64>, Vec<C64>)>,
    b_pi: Vec<C64>,
    b_pi_dag: Vec<C64>,
    b_h: Vec<C64>,
    b_h_dag: Vec<C64>,
    has_b_pi: bool,
    has_b_h: bool,
    stencil: HybridStencil,
}

/// Whether the semi-discrete generator is a lattice Lindbladian on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeCpReport {
    /// Largest cell Péclet number `|v|Δ/N` over both axes (infinite when an
    /// axis has transport but no diffusion).
    pub max_peclet: f64,
    /// Smallest eigenvalue over the grid of the on-site dissipator matrix
    /// left after the sandwich redistribution.
    pub min_onsite_eigenvalue: f64,
    pub certified: bool,
}

/// Weight of the sandwich `BXB†` carried by a transfer with identity weight
/// `a` and flux weight `±1/2Δ`; `b²/a` makes the transfer a single Kraus map.
fn kraus_weight(a: f64, n: f64, spacing: f64) -> f64 {
    if a > 0.0 {
        1.0 / (4.0 * spacing * spacing * a)
    } else {
        1.0 / (4.0 * n)
    }
}

fn flat(m: &DMatrix<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            v.push(m[(r, c)]);
        }
    }
    v
}

/// `out += s·a·b` for row-major `d×d` blocks.
#[inline]
fn mul_acc(out: &mut [C64], a: &[C64], b: &[C64], d: usize, s: C64) {
    if d == 2 {
        let (a0, a1, a2, a3) = (a[0] * s, a[1] * s, a[2] * s, a[3] * s);
        out[0] += a0 * b[0] + a1 * b[2];
        out[1] += a0 * b[1] + a1 * b[3];
        out[2] += a2 * b[0] + a3 * b[2];
        out[3] += a2 * b[1] + a3 * b[3];
        return;
    }
    for r in 0..d {
        for k in 0..d {
            let x = a[r * d + k] * s;
            for c in 0..d {
                out[r * d + c] += x * b[k * d + c];
            }
        }
    }
}

impl Generator {
    pub fn new(coeffs: &CQCoefficients) -> Self {
        let d = coeffs.dim;
        let ih = C64::new(0.0, -1.0 / coeffs.hbar);
        let (f, r) = (coeffs.f2.matrix(), coeffs.r2.matrix());
        let ls = [f, r];
        let d0 = coeffs.d0.entries();
        let mut g = DMatrix::<C64>::zeros(d, d);
        for a in 0..2 {
            for b in 0..2 {
                if d0[(a, b)] != C64::new(0.0, 0.0) {
                    g += ls[b] * ls[a] * d0[(a, b)];
                }
            }
        }
        let half = C64::new(0.5, 0.0);
        let k_base = coeffs.h_base.matrix() * ih - &g * half;
        let k_h = coeffs.h_h.matrix() * ih;
        let k_pi = coeffs.h_pi.matrix() * ih;

        let d0_dyn = DMatrix::from_fn(2, 2, |a, b| d0[(a, b)]);
        let (vals, vecs) = eigh_matrix(&d0_dyn);
        let jumps = vals
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0.0)
            .map(|(k, &l)| {
                let m = f * vecs[(0, k)] + r * vecs[(1, k)];
                (l, flat(&m), flat(&m.adjoint()))
            })
            .collect();

        let b_pi = coeffs.b_pi();
        let b_h = coeffs.b_h();
        Self {
            coeffs: coeffs.clone(),
            d,
            k_base: flat(&k_base),
            k_h: flat(&k_h),
            k_pi: flat(&k_pi),
            jumps,
            has_b_pi: b_pi.max_abs() > 0.0,
            has_b_h: b_h.max_abs() > 0.0,
            b_pi_dag: flat(b_pi.adjoint().matrix()),
            b_pi: flat(b_pi.matrix()),
            b_h_dag: flat(b_h.adjoint().matrix()),
            b_h: flat(b_h.matrix()),
            stencil: HybridStencil::Positive,
        }
    }

    pub fn with_stencil(mut self, stencil: HybridStencil) -> Self {
        self.stencil = stencil;
        self
    }

    /// Transport velocity, diffusion constant and spacing along an axis.
    fn axis_params(&self, axis: Axis, grid: &crate::semi_wigner::PhaseSpaceGrid) -> (f64, f64) {
        match axis {
            Axis::H => (self.coeffs.diffusion.n33_2, grid.dh()),
            Axis::Pi => (self.coeffs.diffusion.n33, grid.dpi()),
        }
    }

    fn velocity(&self, axis: Axis, h: f64, pi: f64) -> f64 {
        match axis {
            Axis::H => pi,
            Axis::Pi => self.coeffs.drift.eval(h, pi),
        }
    }

    fn redistributes(&self, axis: Axis) -> bool {
        let (has_b, n) = match axis {
            Axis::H => (self.has_b_h, self.coeffs.diffusion.n33_2),
            Axis::Pi => (self.has_b_pi, self.coeffs.diffusion.n33),
        };
        self.stencil == HybridStencil::Positive && has_b && n > 0.0
    }

    /// Sandwich weights `(to k−1, to k+1)` of the source cell `(i, j)` along an axis.
    fn transfer_weights(
        &self,
        axis: Axis,
        grid: &crate::semi_wigner::PhaseSpaceGrid,
        i: usize,
        j: usize,
    ) -> (f64, f64) {
        let (n, spacing) = self.axis_params(axis, grid);
        let v = self.velocity(axis, grid.h(i), grid.pi(j));
        let base = n / (spacing * spacing);
        let lower = kraus_weight(base - v / (2.0 * spacing), n, spacing);
        let upper = kraus_weight(base + v / (2.0 * spacing), n, spacing);
        let (k, len) = match axis {
            Axis::H => (i, grid.n_h),
            Axis::Pi => (j, grid.n_pi),
        };
        (if k > 0 { lower } else { 0.0 }, if k + 1 < len { upper } else { 0.0 })
    }

    /// Checks the lattice conditions under which the `Positive` stencil is an
    /// exact lattice Lindbladian.
    pub fn lattice_cp_report(&self, grid: &crate::semi_wigner::PhaseSpaceGrid) -> LatticeCpReport {
        let c = &self.coeffs;
        let mut max_peclet = 0.0f64;
        let mut min_eig = f64::INFINITY;
        let d0 = *c.d0.entries();
        let outer = |v: [C64; 2]| {
            nalgebra::Matrix2::new(
                v[0] * v[0].conj(),
                v[0] * v[1].conj(),
                v[1] * v[0].conj(),
                v[1] * v[1].conj(),
            )
        };
        let scale = d0.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
        let mut unsupported = false;
        for i in 0..grid.n_h {
            for j in 0..grid.n_pi {
                let mut m = d0;
                for (axis, has_b, d) in [(Axis::H, self.has_b_h, c.d_h), (Axis::Pi, self.has_b_pi, c.d_pi)] {
                    let (n, spacing) = self.axis_params(axis, grid);
                    let v = self.velocity(axis, grid.h(i), grid.pi(j));
                    if n > 0.0 {
                        max_peclet = max_peclet.max(v.abs() * spacing / n);
                    } else if v != 0.0 {
                        max_peclet = f64::INFINITY;
                    }
                    if has_b {
                        if self.redistributes(axis) {
                            let (lo, up) = self.transfer_weights(axis, grid, i, j);
                            m -= outer(d) * C64::new(lo + up, 0.0);
                        } else {
                            unsupported = true;
                        }
                    }
                }
                let m_dyn = DMatrix::from_fn(2, 2, |a, b| m[(a, b)]);
                min_eig = min_eig.min(eigh_matrix(&m_dyn).0[0]);
            }
        }
        LatticeCpReport {
            max_peclet,
            min_onsite_eigenvalue: min_eig,
            certified: !unsupported && max_peclet <= 2.0 && min_eig >= -1e-12 * scale,
        }
    }

    /// Adds `Σ_s c(s→t) BŴ_sB† − c_tot(t) BŴ_tB†` along an axis.
    fn add_redistribution(&self, axis: Axis, w: &SemiWignerState, out: &mut SemiWignerState) {
        let g = w.grid;
        let d = self.d;
        let b = d * d;
        let (bm, bm_dag) = match axis {
            Axis::H => (&self.b_h, &self.b_h_dag),
            Axis::Pi => (&self.b_pi, &self.b_pi_dag),
        };
        let one = C64::new(1.0, 0.0);
        let mut sandwich = SemiWignerState::zeros(g, d);
        sandwich.data_mut().par_chunks_mut(b).enumerate().for_each(|(k, blk)| {
            let (i, j) = (k / g.n_pi, k % g.n_pi);
            let mut tmp = vec![C64::new(0.0, 0.0); b];
            mul_acc(&mut tmp, bm, w.block(i, j), d, one);
            mul_acc(blk, &tmp, bm_dag, d, one);
        });
        let weights: Vec<(f64, f64)> = (0..g.points())
            .map(|k| self.transfer_weights(axis, &g, k / g.n_pi, k % g.n_pi))
            .collect();
        let row_len = w.row_len();
        out.data_mut()
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, out_row)| {
                for j in 0..g.n_pi {
                    let o = &mut out_row[j * b..(j + 1) * b];
                    let (lo, up) = weights[i * g.n_pi + j];
                    for (z, x) in o.iter_mut().zip(sandwich.block(i, j)) {
                        *z -= x * (lo + up);
                    }
                    // Source below the target sends upward, source above sends downward.
                    let (below, above) = match axis {
                        Axis::H => ((i > 0).then(|| (i - 1, j)), (i + 1 < g.n_h).then_some((i + 1, j))),
                        Axis::Pi => ((j > 0).then(|| (i, j - 1)), (j + 1 < g.n_pi).then_some((i, j + 1))),
                    };
                    if let Some((si, sj)) = below {
                        let w_up = weights[si * g.n_pi + sj].1;
                        for (z, x) in o.iter_mut().zip(sandwich.block(si, sj)) {
                            *z += x * w_up;
                        }
                    }
                    if let Some((si, sj)) = above {
                        let w_lo = weights[si * g.n_pi + sj].0;
                        for (z, x) in o.iter_mut().zip(sandwich.block(si, sj)) {
                            *z += x * w_lo;
                        }
                    }
                }
            });
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Explicit stability limits on `dt` for a grid.
    pub fn stability_limits(&self, grid: &crate::semi_wigner::PhaseSpaceGrid) -> StabilityLimits {
        let c = &self.coeffs;
        let (dh, dp) = (grid.dh(), grid.dpi());
        let lim = |num: f64, den: f64| {
            if den > 0.0 {
                CFL_FACTOR * num / den
            } else {
                f64::INFINITY
            }
        };
        let a_max = [
            (grid.h_min, grid.pi_min),
            (grid.h_min, grid.pi_max),
            (grid.h_max, grid.pi_min),
            (grid.h_max, grid.pi_max),
        ]
        .iter()
        .map(|&(h, p)| c.drift.eval(h, p).abs())
        .fold(0.0, f64::max);
        let op_norm = |v: &[C64]| spectral_norm(v, self.d);
        let hybrid = lim(dp, 2.0 * op_norm(&self.b_pi)).min(lim(dh, 2.0 * op_norm(&self.b_h)));
        // Bound on the pointwise quantum superoperator norm at the grid corners.
        let k_norm = [
            (grid.h_min, grid.pi_min),
            (grid.h_min, grid.pi_max),
            (grid.h_max, grid.pi_min),
            (grid.h_max, grid.pi_max),
        ]
        .iter()
        .map(|&(h, p)| {
            let k: Vec<C64> = (0..self.d * self.d)
                .map(|e| self.k_base[e] + self.k_h[e] * h + self.k_pi[e] * p)
                .collect();
            op_norm(&k)
        })
        .fold(0.0, f64::max);
        let jump_norm: f64 = self.jumps.iter().map(|(l, m, _)| l.abs() * op_norm(m).powi(2)).sum();
        let q_rate = 2.0 * k_norm + jump_norm;
        StabilityLimits {
            diffusion_h: lim(dh * dh, c.diffusion.n33_2.abs()),
            diffusion_pi: lim(dp * dp, c.diffusion.n33.abs()),
            streaming: lim(dh, grid.max_abs_pi()),
            drift: lim(dp, a_max),
            hybrid,
            quantum: if q_rate > 0.0 { 1.0 / q_rate } else { f64::INFINITY },
        }
    }

    /// Time derivative `∂ₜŴ` of a state.
    pub fn rate(&self, w: &SemiWignerState) -> SemiWignerState {
        let mut out = SemiWignerState::zeros(w.grid, w.dim());
        self.rate_into(w, &mut out);
        out
    }

    /// Like [`Generator::rate`], writing into `out`. Derivatives treat the
    /// field as zero outside the grid; one-sided edge stencils would add
    /// growing modes at inflow edges.
    pub fn rate_into(&self, w: &SemiWignerState, out: &mut SemiWignerState) {
        let g = w.grid;
        let d = self.d;
        let b = d * d;
        let c = &self.coeffs;
        let drift = c.drift;

        let mut dh = SemiWignerState::zeros(g, d);
        derivative_into(w, Axis::H, Order::First, Closure::ZeroExterior, &mut dh);
        let mut dp = SemiWignerState::zeros(g, d);
        derivative_into(w, Axis::Pi, Order::First, Closure::ZeroExterior, &mut dp);

        // Conservative drift: differentiate the flux ÃŴ.
        let mut flux = w.clone();
        flux.data_mut()
            .par_chunks_mut(w.row_len())
            .enumerate()
            .for_each(|(i, row)| {
                let h = g.h(i);
                for (j, blk) in row.chunks_mut(b).enumerate() {
                    let a = drift.eval(h, g.pi(j));
                    blk.iter_mut().for_each(|z| *z *= a);
                }
            });
        let mut dflux = SemiWignerState::zeros(g, d);
        derivative_into(&flux, Axis::Pi, Order::First, Closure::ZeroExterior, &mut dflux);
        drop(flux);

        let n33 = c.diffusion.n33;
        let n33_2 = c.diffusion.n33_2;
        let d2h = (n33_2 != 0.0).then(|| {
            let mut s = SemiWignerState::zeros(g, d);
            derivative_into(w, Axis::H, Order::Second, Closure::ZeroExterior, &mut s);
            s
        });
        let d2p = (n33 != 0.0).then(|| {
            let mut s = SemiWignerState::zeros(g, d);
            derivative_into(w, Axis::Pi, Order::Second, Closure::ZeroExterior, &mut s);
            s
        });

        let row_len = w.row_len();
        let one = C64::new(1.0, 0.0);
        out.data_mut()
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, out_row)| {
                let h = g.h(i);
                let mut k = vec![C64::new(0.0, 0.0); b];
                let mut k_dag = vec![C64::new(0.0, 0.0); b];
                let mut tmp = vec![C64::new(0.0, 0.0); b];
                for j in 0..g.n_pi {
                    let pi = g.pi(j);
                    let o = &mut out_row[j * b..(j + 1) * b];
                    let wb = w.block(i, j);
                    let dhb = dh.block(i, j);
                    let dpb = dp.block(i, j);
                    let dfb = dflux.block(i, j);
                    for e in 0..b {
                        o[e] = dhb[e] * (-pi) - dfb[e];
                    }
                    if let Some(s) = &d2h {
                        for (z, x) in o.iter_mut().zip(s.block(i, j)) {
                            *z += x * n33_2;
                        }
                    }
                    if let Some(s) = &d2p {
                        for (z, x) in o.iter_mut().zip(s.block(i, j)) {
                            *z += x * n33;
                        }
                    }
                    for e in 0..b {
                        k[e] = self.k_base[e] + self.k_h[e] * h + self.k_pi[e] * pi;
                    }
                    for r in 0..d {
                        for cc in 0..d {
                            k_dag[r * d + cc] = k[cc * d + r].conj();
                        }
                    }
                    mul_acc(o, &k, wb, d, one);
                    mul_acc(o, wb, &k_dag, d, one);
                    for (l, m, m_dag) in &self.jumps {
                        tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                        mul_acc(&mut tmp, m, wb, d, one);
                        mul_acc(o, &tmp, m_dag, d, C64::new(*l, 0.0));
                    }
                    if self.has_b_pi {
                        mul_acc(o, &self.b_pi, dpb, d, one);
                        mul_acc(o, dpb, &self.b_pi_dag, d, one);
                    }
                    if self.has_b_h {
                        mul_acc(o, &self.b_h, dhb, d, one);
                        mul_acc(o, dhb, &self.b_h_dag, d, one);
                    }
                }
            });
        for axis in [Axis::H, Axis::Pi] {
            if self.redistributes(axis) {
                self.add_redistribution(axis, w, out);
            }
        }
    }

    /// One integrator step without Hermitian projection.
    pub fn step(&self, w: &SemiWignerState, dt: f64, integrator: Integrator) -> SemiWignerState {
        match integrator {
            Integrator::Euler => {
                let mut next = w.clone();
                next.axpy(dt, &self.rate(w));
                next
            }
            Integrator::Rk4 => {
                let k1 = self.rate(w);
                let mut y = w.clone();
                y.axpy(0.5 * dt, &k1);
                let k2 = self.rate(&y);
                y.data_mut().copy_from_slice(w.data());
                y.axpy(0.5 * dt, &k2);
                let k3 = self.rate(&y);
                y.data_mut().copy_from_slice(w.data());
                y.axpy(dt, &k3);
                let k4 = self.rate(&y);
                let mut next = w.clone();
                let s = dt / 6.0;
                next.data_mut()
                    .par_iter_mut()
                    .zip(k1.data().par_iter())
                    .zip(k2.data().par_iter())
                    .zip(k3.data().par_iter())
                    .zip(k4.data().par_iter())
                    .for_each(|((((z, a), b), c), e)| *z += (a + (b + c) * 2.0 + e) * s);
                next
            }
        }
    }
}

/// Largest singular value of a small row-major block.
fn spectral_norm(v: &[C64], d: usize) -> f64 {
    let m = DMatrix::from_row_slice(d, d, v);
    let gram = m.adjoint() * &m;
    eigh_matrix(&gram).0.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

fn diagnostics(
    w: &SemiWignerState,
    step: usize,
    t: f64,
    cfg: &EvolutionConfig,
    observables: &[Observable],
) -> Diagnostics {
    let m = w.marginals();
    let min_p = m.p.iter().copied().fold(f64::INFINITY, f64::min);
    Diagnostics {
        step,
        t,
        trace: m.total,
        min_p,
        min_eig: cfg.monitor_positivity.then(|| w.min_eigenvalue().0),
        mean_h: m.mean_h,
        mean_pi: m.mean_pi,
        var_h: m.var_h,
        var_pi: m.var_pi,
        hermiticity: w.hermiticity_defect(),
        boundary_ratio: w.boundary_ratio(cfg.boundary_cells),
        observables: observables.iter().map(|o| m.rho_psi.trace_product(&o.op).re).collect(),
    }
}

/// Integrates from `w0` to `cfg.t_final`, recording diagnostics every
/// `output_stride` steps (and at `t = 0`).
pub fn evolve(
    w0: &SemiWignerState,
    coeffs: &CQCoefficients,
    cfg: &EvolutionConfig,
    observables: &[Observable],
) -> Result<EvolutionResult, EvolveError> {
    cfg.validate()?;
    if w0.dim() != coeffs.dim {
        return Err(EvolveError::Dimension {
            state: w0.dim(),
            coeffs: coeffs.dim,
        });
    }
    let gen = Generator::new(coeffs).with_stencil(cfg.hybrid_stencil);
    let lattice = gen.lattice_cp_report(&w0.grid);
    log::info!(
        "lattice positivity: max Péclet {:.3}, on-site min eigenvalue {:.3e}, certified {}",
        lattice.max_peclet,
        lattice.min_onsite_eigenvalue,
        lattice.certified
    );
    let limits = gen.stability_limits(&w0.grid);
    let max_dt = limits.max_dt();
    if cfg.dt > max_dt {
        return Err(EvolveError::Cfl {
            dt: cfg.dt,
            max_dt,
            limits,
        });
    }
    let steps = cfg.steps();
    let trace0 = w0.total_trace();
    let mut res = EvolutionResult {
        observable_names: observables.iter().map(|o| o.name.clone()).collect(),
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut w = w0.clone();
    let record = |w: &SemiWignerState, step: usize, res: &mut EvolutionResult| {
        let t = step as f64 * cfg.dt;
        let diag = diagnostics(w, step, t, cfg, observables);
        if let Some(e) = diag.min_eig {
            res.min_eigenvalue = res.min_eigenvalue.min(e);
        }
        log::debug!(
            "t = {t:.4}: trace = {:.12}, min_eig = {:?}, boundary = {:.2e}",
            diag.trace,
            diag.min_eig,
            diag.boundary_ratio
        );
        res.records.push(diag);
        if cfg.keep_snapshots {
            res.snapshots.push((t, w.clone()));
        }
    };
    record(&w, 0, &mut res);
    for step in 1..=steps {
        let mut next = gen.step(&w, cfg.dt, cfg.integrator);
        res.max_hermiticity_defect = res.max_hermiticity_defect.max(next.hermiticity_defect());
        next.symmetrize();
        w = next;
        let t = step as f64 * cfg.dt;
        let abort = |reason, detail: String, mut res: EvolutionResult, w: &SemiWignerState| {
            res.final_state = Some(w.clone());
            Err(EvolveError::Aborted {
                reason,
                t,
                detail,
                partial: Box::new(res),
            })
        };
        if !w.is_finite() {
            return abort(AbortReason::NonFinite, "non-finite entries".into(), res, &w);
        }
        let drift = (w.total_trace() - trace0).abs();
        res.max_trace_drift = res.max_trace_drift.max(drift);
        if drift > cfg.trace_tolerance {
            return abort(AbortReason::TraceDrift, format!("|Δtrace| = {drift:.3e}"), res, &w);
        }
        let boundary = w.boundary_ratio(cfg.boundary_cells);
        if boundary > cfg.boundary_threshold {
            return abort(
                AbortReason::BoundaryMass,
                format!(
                    "mass within {} cells of the boundary reached {boundary:.3e} of the peak",
                    cfg.boundary_cells
                ),
                res,
                &w,
            );
        }
        if step % cfg.output_stride == 0 || step == steps {
            record(&w, step, &mut res);
        }
    }
    res.final_state = Some(w);
    Ok(res)
}
