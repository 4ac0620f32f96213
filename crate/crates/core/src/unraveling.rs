// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Stochastic unraveling of the Markovian hybrid dynamics.
//!
//! Each trajectory carries a phase-space point and a normalized conditional
//! state. One Euler–Maruyama step reads
//!
//! ```text
//! dW_i  = ξ_i dt − ⟨B_i + B_i†⟩ dt          (i ∈ {h, π}, Var ξ_i dt = 2 N_i dt)
//! η     = C_M^{1/2} z / √dt − i C_M ⟨L⟩
//! K     = exp[−(i/ħ) H_eff dt − Σ_i B_i dW_i / (2 N_i) + i η·L dt − ½ G dt]
//! ρ     ← K ρ K† / Tr(K ρ K†)
//! h     ← h + π dt + dW_h,     π ← π + Ã dt + dW_π
//! ```
//!
//! with `G = Σ_ab D0_ab L_b L_a + Σ_i B_i² / (2 N_i)`. The drift shifts are
//! the change of measure that keeps every trajectory at unit weight, and the
//! shift of `dW_π` is the backreaction force. Averaging `ρ δ(z − z_t)` over
//! trajectories reproduces the master equation to first order in `dt`.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq_coeffs::CQCoefficients;
use crate::cq_master::{Diagnostics, Observable};
use crate::hilbert::{eigh_matrix, min_eigenvalue_unchecked, QuantumOperator};
use crate::positivity::{check_markov_cp, PSD_TOL};
use crate::semi_wigner::SemiWignerState;

/// Conditional states below this eigenvalue abort the trajectory.
pub const TRAJECTORY_PSD_TOL: f64 = 1e-8;
/// Relative spread below which an ensemble quantity counts as exact.
pub const DETERMINISTIC_TOL: f64 = 1e-12;
/// Smallest admissible ensemble.
pub const MIN_TRAJECTORIES: usize = 100;

#[derive(Debug, Error)]
pub enum UnravelError {
    #[error("C_M is not positive semidefinite (min eigenvalue {0:.3e}); the unraveling is undefined")]
    NotPositive(f64),
    #[error("Markov CP conditions not certified: {0}")]
    NotCertified(String),
    #[error("negative classical variance {0}")]
    NegativeVariance(f64),
    #[error("invalid ensemble setup: {0}")]
    Config(String),
    #[error("trajectory {index} (seed {seed}) lost positivity at t = {t}: min eigenvalue {min_eigenvalue:.3e}")]
    TrajectoryAborted {
        seed: u64,
        index: u64,
        t: f64,
        min_eigenvalue: f64,
    },
}

/// Covariances of the complex quantum noise and the classical kicks.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    cm: Matrix2<C64>,
    cm_sqrt: Matrix2<C64>,
    /// `2 N33_2` per unit time.
    pub var_h: f64,
    /// `2 N33` per unit time.
    pub var_pi: f64,
}

impl NoiseSpec {
    pub fn new(cm: Matrix2<C64>, n33_2: f64, n33: f64) -> Result<Self, UnravelError> {
        for v in [n33_2, n33] {
            if v < 0.0 {
                return Err(UnravelError::NegativeVariance(v));
            }
        }
        let dm = DMatrix::from_fn(2, 2, |r, c| cm[(r, c)]);
        let (vals, vecs) = eigh_matrix(&dm);
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if vals[0] < -PSD_TOL * scale {
            return Err(UnravelError::NotPositive(vals[0]));
        }
        let mut root = Matrix2::zeros();
        for (k, &v) in vals.iter().enumerate() {
            let col = nalgebra::Vector2::new(vecs[(0, k)], vecs[(1, k)]);
            root += (col * col.adjoint()) * C64::new(v.max(0.0).sqrt(), 0.0);
        }
        Ok(Self {
            cm,
            cm_sqrt: root,
            var_h: 2.0 * n33_2,
            var_pi: 2.0 * n33,
        })
    }

    pub fn cm(&self) -> &Matrix2<C64> {
        &self.cm
    }
}

/// One draw of the white noises over a step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub eta: [C64; 2],
    pub xi_h: f64,
    pub xi_pi: f64,
}

/// Draws `η` with `E[η η†] = C_M / dt`, `E[η ηᵀ] = 0`, and the classical
/// kicks with variances `2 N33_2 / dt` and `2 N33 / dt`.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, dt: f64, rng: &mut R) -> NoiseSample {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let inv = (0.5 / dt).sqrt();
    let z = nalgebra::Vector2::new(C64::new(normal(), normal()) * inv, C64::new(normal(), normal()) * inv);
    let eta = spec.cm_sqrt * z;
    let xi_h = normal() * (spec.var_h / dt).sqrt();
    let xi_pi = normal() * (spec.var_pi / dt).sqrt();
    NoiseSample {
        eta: [eta[0], eta[1]],
        xi_h,
        xi_pi,
    }
}

/// A single trajectory: phase-space point and normalized conditional state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub index: u64,
    pub t: f64,
    pub h: f64,
    pub pi: f64,
    pub rho: QuantumOperator,
    /// Always one: the change of measure is folded into the noise.
    pub weight: f64,
}

/// Precomputed operators for trajectory steps.
#[derive(Debug, Clone)]
pub struct Unraveler {
    coeffs: CQCoefficients,
    spec: NoiseSpec,
    l: [DMatrix<C64>; 2],
    /// `(B, −1 / 2N)` per classical direction `(h, π)` that carries noise.
    hybrid: [Option<(DMatrix<C64>, f64)>; 2],
    g: DMatrix<C64>,
}

impl Unraveler {
    /// Requires the Markov CP conditions to hold.
    pub fn new(coeffs: &CQCoefficients) -> Result<Self, UnravelError> {
        let report = check_markov_cp(coeffs);
        if !report.pass() {
            let why = report
                .cm
                .reason
                .or(report.classical.reason)
                .unwrap_or_else(|| "positivity check failed".into());
            return Err(UnravelError::NotCertified(why));
        }
        let cm = crate::positivity::build_cm(coeffs)
            .map_err(|e| UnravelError::NotCertified(e.to_string()))?
            .matrix;
        let spec = NoiseSpec::new(cm, coeffs.diffusion.n33_2, coeffs.diffusion.n33)?;
        let (f, r) = coeffs.lindblad_ops();
        let l = [f.matrix().clone(), r.matrix().clone()];
        let d = coeffs.dim;
        let mut g = DMatrix::<C64>::zeros(d, d);
        let d0 = coeffs.d0.entries();
        for a in 0..2 {
            for b in 0..2 {
                g += &l[b] * &l[a] * d0[(a, b)];
            }
        }
        let mut hybrid = [None, None];
        for (k, (b, n)) in [
            (coeffs.b_h(), coeffs.diffusion.n33_2),
            (coeffs.b_pi(), coeffs.diffusion.n33),
        ]
        .into_iter()
        .enumerate()
        {
            let bm = b.matrix().clone();
            if bm.iter().all(|z| z.norm() == 0.0) || n <= 0.0 {
                continue;
            }
            g += &bm * &bm / C64::new(2.0 * n, 0.0);
            hybrid[k] = Some((bm, -0.5 / n));
        }
        Ok(Self {
            coeffs: coeffs.clone(),
            spec,
            l,
            hybrid,
            g,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Advances a trajectory by one step.
    pub fn step<R: Rng + ?Sized>(&self, traj: &mut Trajectory, dt: f64, rng: &mut R) -> Result<(), UnravelError> {
        let c = &self.coeffs;
        let rho = traj.rho.matrix();
        let expect = |m: &DMatrix<C64>| -> C64 { (m * rho).trace() };
        let noise = sample_noise(&self.spec, dt, rng);
        let mut dw = [noise.xi_h * dt, noise.xi_pi * dt];
        let mut exponent =
            c.heff_at(traj.h, traj.pi).matrix() * C64::new(0.0, -dt / c.hbar) - &self.g * C64::new(0.5 * dt, 0.0);
        for (k, slot) in self.hybrid.iter().enumerate() {
            if let Some((b, coef)) = slot {
                dw[k] -= 2.0 * expect(b).re * dt;
                exponent += b * C64::new(*coef * dw[k], 0.0);
            }
        }
        let mean_l = [expect(&self.l[0]).re, expect(&self.l[1]).re];
        let cm = self.spec.cm();
        let i = C64::new(0.0, 1.0);
        for a in 0..2 {
            let shift: C64 = (0..2).map(|b| cm[(a, b)] * mean_l[b]).sum();
            let eta = noise.eta[a] - i * shift;
            exponent += &self.l[a] * (i * eta * dt);
        }
        let k = exponent.exp();
        let mut next = &k * rho * k.adjoint();
        let tr = next.trace().re;
        next /= C64::new(tr, 0.0);
        let herm = (&next + next.adjoint()) * C64::new(0.5, 0.0);
        let t = traj.t + dt;
        let min_eig = min_eigenvalue_unchecked(&herm);
        if !(min_eig >= -TRAJECTORY_PSD_TOL) || !tr.is_finite() {
            return Err(UnravelError::TrajectoryAborted {
                seed: traj.seed,
                index: traj.index,
                t,
                min_eigenvalue: min_eig,
            });
        }
        let accel = c.drift.eval(traj.h, traj.pi);
        traj.h += traj.pi * dt + dw[0];
        traj.pi += accel * dt + dw[1];
        traj.rho = QuantumOperator::from_matrix(herm).expect("finite state");
        traj.t = t;
        Ok(())
    }
}

/// Free-function form of [`Unraveler::step`].
pub fn trajectory_step<R: Rng + ?Sized>(
    traj: &mut Trajectory,
    unraveler: &Unraveler,
    dt: f64,
    rng: &mut R,
) -> Result<(), UnravelError> {
    unraveler.step(traj, dt, rng)
}

/// Per-trajectory RNG: a fixed master seed with the trajectory index as the
/// stream, so statistics do not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples initial points from a non-negative grid state: a cell with
/// probability `p_k / Σ p`, its centre as the phase-space point and
/// `Ŵ_k / Tr Ŵ_k` as the conditional state.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    state: SemiWignerState,
    cdf: Vec<f64>,
}

impl InitialSampler {
    pub fn new(state: &SemiWignerState) -> Result<Self, UnravelError> {
        let p = state.density();
        if let Some(v) = p.iter().find(|v| **v < 0.0) {
            return Err(UnravelError::Config(format!(
                "initial density has negative entry {v:.3e}"
            )));
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = p
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(UnravelError::Config("initial density is zero".into()));
        }
        Ok(Self {
            state: state.clone(),
            cdf,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, QuantumOperator) {
        let total = *self.cdf.last().expect("non-empty grid");
        let u: f64 = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let g = &self.state.grid;
        let (i, j) = (k / g.n_pi, k % g.n_pi);
        let op = self.state.op(i, j);
        let tr = op.trace().re;
        (g.h(i), g.pi(j), op.scale(1.0 / tr))
    }
}

/// Ensemble run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Record every this many steps (and at the final step).
    pub output_stride: usize,
    pub seed: u64,
    /// Deposit the final ensemble onto the grid of the initial state.
    #[serde(default)]
    pub deposit_final: bool,
}

impl EnsembleConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), UnravelError> {
        if self.trajectories < MIN_TRAJECTORIES {
            return Err(UnravelError::Config(format!(
                "need at least {MIN_TRAJECTORIES} trajectories, got {}",
                self.trajectories
            )));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            return Err(UnravelError::Config("dt and t_final must be positive".into()));
        }
        let n = self.t_final / self.dt;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(UnravelError::Config("t_final must be an integer multiple of dt".into()));
        }
        if self.output_stride == 0 {
            return Err(UnravelError::Config("output_stride must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar observables per output time, one row of samples per trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleResult {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// Layout `[trajectory][time][observable]`.
    samples: Vec<f64>,
    pub trajectories: usize,
    pub final_state: Option<SemiWignerState>,
    /// Cloud-in-cell weight that fell outside the grid.
    pub lost_weight: f64,
}

/// Ensemble means with standard errors, `[time][observable]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableTable {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl EnsembleResult {
    fn row_len(&self) -> usize {
        self.times.len() * self.names.len()
    }

    /// Statistics over trajectories `range`.
    pub fn stats_over(&self, range: std::ops::Range<usize>) -> ObservableTable {
        let (nt, no) = (self.times.len(), self.names.len());
        let row = self.row_len();
        let m = range.len() as f64;
        let mut mean = vec![vec![0.0; no]; nt];
        let mut stderr = vec![vec![0.0; no]; nt];
        for ti in 0..nt {
            for o in 0..no {
                let at = |k: usize| self.samples[k * row + ti * no + o];
                let mu = compensated_sum(range.clone().map(at)) / m;
                let var = compensated_sum(range.clone().map(|k| (at(k) - mu).powi(2))) / (m - 1.0).max(1.0);
                mean[ti][o] = mu;
                stderr[ti][o] = (var / m).sqrt();
            }
        }
        ObservableTable {
            names: self.names.clone(),
            times: self.times.clone(),
            mean,
            stderr,
        }
    }

    pub fn stats(&self) -> ObservableTable {
        self.stats_over(0..self.trajectories)
    }
}

/// Runs `cfg.trajectories` independent trajectories from `initial` and
/// records `mean_h`, `mean_pi` and `Tr[O ρ]` for each observable.
pub fn ensemble_average(
    coeffs: &CQCoefficients,
    initial: &SemiWignerState,
    cfg: &EnsembleConfig,
    observables: &[Observable],
) -> Result<EnsembleResult, UnravelError> {
    cfg.validate()?;
    if initial.dim() != coeffs.dim {
        return Err(UnravelError::Config(format!(
            "state dimension {} differs from model dimension {}",
            initial.dim(),
            coeffs.dim
        )));
    }
    let unraveler = Unraveler::new(coeffs)?;
    let sampler = InitialSampler::new(initial)?;
    let steps = cfg.steps();
    let record_steps: Vec<usize> = (0..=steps)
        .filter(|s| s % cfg.output_stride == 0 || *s == steps)
        .collect();
    let mut names = vec!["mean_h".to_string(), "mean_pi".to_string()];
    names.extend(observables.iter().map(|o| o.name.clone()));
    let no = names.len();
    let record = |traj: &Trajectory, out: &mut Vec<f64>| {
        out.push(traj.h);
        out.push(traj.pi);
        out.extend(observables.iter().map(|o| traj.rho.trace_product(&o.op).re));
    };

    let runs: Vec<Result<(Vec<f64>, Trajectory), UnravelError>> = (0..cfg.trajectories as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = trajectory_rng(cfg.seed, index);
            let (h, pi, rho) = sampler.sample(&mut rng);
            let mut traj = Trajectory {
                seed: cfg.seed,
                index,
                t: 0.0,
                h,
                pi,
                rho,
                weight: 1.0,
            };
            let mut rows = Vec::with_capacity(record_steps.len() * no);
            record(&traj, &mut rows);
            for s in 1..=steps {
                unraveler.step(&mut traj, cfg.dt, &mut rng)?;
                if s % cfg.output_stride == 0 || s == steps {
                    record(&traj, &mut rows);
                }
            }
            Ok((rows, traj))
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.trajectories * record_steps.len() * no);
    let mut finals = Vec::with_capacity(cfg.trajectories);
    for r in runs {
        let (rows, traj) = r?;
        samples.extend(rows);
        finals.push(traj);
    }
    let (final_state, lost_weight) = if cfg.deposit_final {
        let (s, lost) = deposit(initial, &finals);
        (Some(s), lost)
    } else {
        (None, 0.0)
    };
    Ok(EnsembleResult {
        names,
        times: record_steps.iter().map(|&s| s as f64 * cfg.dt).collect(),
        samples,
        trajectories: cfg.trajectories,
        final_state,
        lost_weight,
    })
}

/// Cloud-in-cell deposit of `(h, π, ρ)` triples on the grid of `like`,
/// normalized so that the total trace is the fraction of weight kept.
fn deposit(like: &SemiWignerState, trajs: &[Trajectory]) -> (SemiWignerState, f64) {
    let g = like.grid;
    let d = like.dim();
    let mut out = SemiWignerState::zeros(g, d);
    let w = 1.0 / (trajs.len() as f64 * g.cell_area());
    let mut lost = 0.0;
    for t in trajs {
        let fi = (t.h - g.h_min) / g.dh();
        let fj = (t.pi - g.pi_min) / g.dpi();
        let (i0, j0) = (fi.floor(), fj.floor());
        let (ai, aj) = (fi - i0, fj - j0);
        let rho = t.rho.to_row_major();
        for (di, wi) in [(0.0, 1.0 - ai), (1.0, ai)] {
            for (dj, wj) in [(0.0, 1.0 - aj), (1.0, aj)] {
                let (i, j) = (i0 + di, j0 + dj);
                let share = wi * wj;
                if i < 0.0 || j < 0.0 || i >= g.n_h as f64 || j >= g.n_pi as f64 {
                    lost += share / trajs.len() as f64;
                    continue;
                }
                let blk = out.block_mut(i as usize, j as usize);
                for (z, r) in blk.iter_mut().zip(&rho) {
                    *z += r * (share * w);
                }
            }
        }
    }
    (out, lost)
}

/// Reference curves from a deterministic evolution, in the layout of
/// [`ensemble_average`].
pub fn reference_table(records: &[Diagnostics], observable_names: &[String]) -> ObservableTable {
    let mut names = vec!["mean_h".to_string(), "mean_pi".to_string()];
    names.extend(observable_names.iter().cloned());
    ObservableTable {
        names,
        times: records.iter().map(|r| r.t).collect(),
        mean: records
            .iter()
            .map(|r| {
                let mut v = vec![r.mean_h, r.mean_pi];
                v.extend(r.observables.iter().copied());
                v
            })
            .collect(),
        stderr: records.iter().map(|r| vec![0.0; 2 + r.observables.len()]).collect(),
    }
}

/// One observable at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub name: String,
    pub t: f64,
    pub reference: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entries: Vec<ZScore>,
    pub max_abs_z: f64,
    /// Every `|z| ≤ threshold`.
    pub pass: bool,
    pub threshold: f64,
}

/// Compares an estimate with standard errors against a reference on
/// matching names and times (times matched to `1e-9` relative).
pub fn compare(
    reference: &ObservableTable,
    estimate: &ObservableTable,
    threshold: f64,
) -> Result<Comparison, UnravelError> {
    let mut entries = Vec::new();
    for (ti, &t) in estimate.times.iter().enumerate() {
        let Some(ri) = reference
            .times
            .iter()
            .position(|&r| (r - t).abs() <= 1e-9 * t.abs().max(1.0))
        else {
            continue;
        };
        for (o, name) in estimate.names.iter().enumerate() {
            let Some(ro) = reference.names.iter().position(|n| n == name) else {
                continue;
            };
            let (x, se, r) = (estimate.mean[ti][o], estimate.stderr[ti][o], reference.mean[ri][ro]);
            let se_tot = (se * se + reference.stderr[ri][ro].powi(2)).sqrt();
            let diff = x - r;
            // Spreads at round-off level mean the quantity is deterministic.
            let z = if se_tot > DETERMINISTIC_TOL * r.abs().max(1.0) {
                diff / se_tot
            } else if diff.abs() <= DETERMINISTIC_TOL * r.abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY * diff.signum()
            };
            entries.push(ZScore {
                name: name.clone(),
                t,
                reference: r,
                estimate: x,
                stderr: se_tot,
                z,
            });
        }
    }
    if entries.is_empty() {
        return Err(UnravelError::Config(
            "no matching observables and times to compare".into(),
        ));
    }
    let max_abs_z = entries.iter().fold(0.0f64, |a, e| a.max(e.z.abs()));
    Ok(Comparison {
        pass: max_abs_z <= threshold,
        entries,
        max_abs_z,
        threshold,
    })
}

/// Error-versus-ensemble-size regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorScaling {
    pub sizes: Vec<usize>,
    /// RMS error normalized by the single-trajectory spread.
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// For each size `m`, averages the squared normalized error over the
/// disjoint batches of `m` trajectories, then fits `log error` against
/// `log m`. Entries with zero spread are skipped.
pub fn error_scaling(
    result: &EnsembleResult,
    reference: &ObservableTable,
    sizes: &[usize],
) -> Result<ErrorScaling, UnravelError> {
    let full = result.stats();
    let spread = |ti: usize, o: usize| full.stderr[ti][o] * (result.trajectories as f64).sqrt();
    let mut errors = Vec::new();
    for &m in sizes {
        if m == 0 || m > result.trajectories {
            return Err(UnravelError::Config(format!("batch size {m} exceeds the ensemble")));
        }
        let batches = result.trajectories / m;
        let mut acc = Vec::new();
        for b in 0..batches {
            let cmp = compare(reference, &result.stats_over(b * m..(b + 1) * m), f64::INFINITY)?;
            for e in &cmp.entries {
                let ti = full
                    .times
                    .iter()
                    .position(|&t| t == e.t)
                    .expect("time from the same result");
                let o = full
                    .names
                    .iter()
                    .position(|n| *n == e.name)
                    .expect("name from the same result");
                let s = spread(ti, o);
                if s > DETERMINISTIC_TOL * e.reference.abs().max(1.0) {
                    acc.push(((e.estimate - e.reference) / s).powi(2));
                }
            }
        }
        if acc.is_empty() {
            return Err(UnravelError::Config("no observable with non-zero spread".into()));
        }
        errors.push((compensated_sum(acc.iter().copied()) / acc.len() as f64).sqrt());
    }
    let xs: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(ErrorScaling {
        sizes: sizes.to_vec(),
        errors,
        slope: if sxx > 0.0 { sxy / sxx } else { f64::NAN },
    })
}
