// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Runs every criterion at its stated tolerance and runtime
//! budget and prints one PASS/FAIL line each. Criteria listed in
//! `KNOWN_FAILURES` are expected to fail; the run fails if any other
//! criterion fails or if a known failure starts passing.
//!
//! Pass criterion numbers as arguments to run a subset.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cqsim_cli::commands::{coefficients, evolution_config, initial_state, resolve_moments, tradeoff_report};
use cqsim_cli::config::{preset_config, RunConfig};
use cqsim_core::cq_coeffs::{assemble, to_oppenheim, ModelConfig};
use cqsim_core::cq_master::{evolve, EvolutionResult};
use cqsim_core::hilbert::{min_eigenvalue, QuantumOperator, C64};
use cqsim_core::kernels::{
    build_cubic_kernels, extract_moments, fdr_check, EnvironmentCorrelator, KernelKind, LagGrid, LocalMoments,
    NonlocalKernel, PairLabel, PartialMoments,
};
use cqsim_core::positivity::{check_markov_cp, check_nonmarkov_kernel, check_tradeoff, NonMarkovKernels, TimeGrid};
use cqsim_core::unraveling::{compare, ensemble_average, error_scaling, reference_table};

/// Criteria whose check is implemented as stated but cannot be met. The
/// local moments of an Ohmic bath satisfy `ħN = 4T·D⁽¹⁾` exactly at every
/// temperature, so the low-temperature half of criterion 4 cannot fail the
/// window.
const KNOWN_FAILURES: &[u32] = &[4];

const SEED: u64 = 20261017;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn preset(name: &str) -> RunConfig {
    preset_config(name).unwrap_or_else(|e| panic!("preset {name}: {e}"))
}

fn run_preset(name: &str) -> EvolutionResult {
    let cfg = preset(name);
    let c = coefficients(&cfg).unwrap();
    let w0 = initial_state(&cfg, "evolve").unwrap();
    let ecfg = evolution_config(&cfg, &c).unwrap();
    evolve(&w0, &c, &ecfg, &cfg.observables).unwrap()
}

fn qubit_model(lambda1: f64, h_psi: QuantumOperator) -> ModelConfig {
    ModelConfig {
        hbar: 1.0,
        lambda1,
        h_psi,
        f2: QuantumOperator::pauli_z(),
        omega_c: 1.0,
    }
}

// 1. Trade-off boundary.

fn tradeoff_boundary() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (ratio, want_pass) in [(0.9, false), (1.0, true), (1.1, true)] {
        // N22·N33 = ratio/16 with N22 = 1/4.
        let n33 = ratio / 4.0;
        let cfg = dir.path().join(format!("r{ratio}.toml"));
        std::fs::write(
            &cfg,
            format!("scenario = \"cubic-white\"\n[moments]\nN22 = 0.25\nN33 = {n33:?}\n"),
        )
        .unwrap();
        let out = dir.path().join(format!("run{ratio}"));
        let status = Command::new(env!("CARGO_BIN_EXE_cqsim"))
            .args(["check-tradeoff", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        let cert: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("cert.json")).unwrap()).unwrap();
        let cli_pass = status.code() == Some(0);
        let verdict_pass = cert["verdict"].as_str() == Some("pass");

        let c = assemble(
            &LocalMoments {
                n22: 0.25,
                n33,
                ..Default::default()
            },
            &qubit_model(1.0, QuantumOperator::pauli_x().scale(0.5)),
        )
        .unwrap();
        let markov = check_markov_cp(&c);
        let tradeoff = check_tradeoff(&to_oppenheim(&c)).unwrap();
        let agree = markov.pass() == tradeoff.verdict.is_pass();
        let mut this = cli_pass == want_pass && verdict_pass == want_pass && agree && markov.pass() == want_pass;
        if ratio == 1.0 {
            this &= tradeoff.margin.abs() <= 1e-12 && markov.cm.margin.abs() <= 1e-12;
        }
        ok &= this;
        parts.push(format!(
            "{ratio}: exit {} margin {:.1e}",
            status.code().unwrap_or(-1),
            tradeoff.margin
        ));
    }
    Outcome::new(ok, parts.join(", "))
}

// 2. Schur form against the trade-off form.

fn random_moments(rng: &mut ChaCha20Rng) -> LocalMoments {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let n22 = u(0.0, 1.0);
    let n22_2 = u(0.0, 1.0);
    let mixed = u(-0.3, 0.3);
    let mixed_2 = u(-0.2, 0.2);
    LocalMoments {
        n22,
        n22_2,
        // |D22_1|/4 ≤ sqrt(N22 N22_2) keeps D0 ⪰ 0, so both forms are defined.
        d22_1: u(-4.0, 4.0) * (n22 * n22_2).sqrt(),
        n33: u(0.0, 1.0),
        n33_2: u(0.0, 0.5),
        d32: u(-1.0, 1.0),
        d32_1: u(-0.5, 0.5),
        n23: mixed,
        n32: mixed,
        n23_2: mixed_2,
        n32_2: mixed_2,
        d33_1: u(0.0, 1.0),
        ..Default::default()
    }
}

fn dictionary_equivalence() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(SEED);
    let (mut agree, mut passes, mut worst) = (0, 0, 0.0f64);
    let total = 200;
    for _ in 0..total {
        let m = random_moments(&mut rng);
        let lambda1 = rng.random_range(-2.0..2.0);
        let h_psi = QuantumOperator::pauli_x().scale(rng.random_range(-1.0..1.0));
        let c = assemble(&m, &qubit_model(lambda1, h_psi)).unwrap();
        let markov = check_markov_cp(&c);
        let t = check_tradeoff(&to_oppenheim(&c)).unwrap();
        if markov.cm.verdict == t.verdict {
            agree += 1;
        }
        if t.verdict.is_pass() {
            passes += 1;
        }
        worst = worst.max((markov.cm.margin - t.margin).abs());
    }
    Outcome::new(
        agree == total && worst <= 1e-9,
        format!("{agree}/{total} verdicts agree ({passes} pass), max margin difference {worst:.1e}"),
    )
}

// 3. Moment extraction.

fn gaussian(area: f64, sigma: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| area * (-0.5 * (t / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn moment_pair(k: &NonlocalKernel) -> (f64, f64) {
    match extract_moments(k, k.kind).unwrap().moments {
        PartialMoments::Noise { n, n2 } => (n, n2),
        PartialMoments::Dissipation { d, d1 } => (d, d1),
    }
}

fn moment_extraction() -> Outcome {
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    let mut worst = 0.0f64;

    // Even Gaussian noise: N = A/2, N⁽²⁾ = −Aσ²/4.
    let (area, sigma) = (1.3, 0.5);
    let k = NonlocalKernel::from_fn(
        KernelKind::Noise,
        PairLabel::P22,
        LagGrid::new(10.0, 0.01).unwrap(),
        gaussian(area, sigma),
    )
    .unwrap();
    let (n, n2) = moment_pair(&k);
    worst = worst.max(rel(n, 0.5 * area)).max(rel(n2, -0.25 * area * sigma * sigma));

    // Retarded half-Gaussian A·(τ/σ²)·exp(−τ²/2σ²)·θ(τ): D = A/2,
    // D⁽¹⁾ = −½·A·σ·sqrt(π/2).
    let (area, sigma) = (0.8, 0.4);
    let f = move |t: f64| {
        if t > 0.0 {
            area * t / (sigma * sigma) * (-0.5 * (t / sigma).powi(2)).exp()
        } else {
            0.0
        }
    };
    let k = NonlocalKernel::from_fn(
        KernelKind::Dissipation,
        PairLabel::P33,
        LagGrid::new(10.0, 5e-4).unwrap(),
        f,
    )
    .unwrap();
    let (d, d1) = moment_pair(&k);
    let d1_want = -0.5 * area * sigma * (0.5 * std::f64::consts::PI).sqrt();
    worst = worst.max(rel(d, 0.5 * area)).max(rel(d1, d1_want));

    // Delta sequence: N⁽²⁾ → 0 as σ², the predicted order 2.
    let grid = LagGrid::new(20.0, 0.01).unwrap();
    let n2s: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&s| {
            let k = NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P22, grid, gaussian(1.0, s)).unwrap();
            moment_pair(&k).1.abs()
        })
        .collect();
    let orders: Vec<f64> = n2s.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|o| (o - 2.0).abs() < 0.05);
    Outcome::new(
        worst <= 1e-6 && order_ok,
        format!(
            "max relative error {worst:.1e}, observed orders {}",
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

// 4. Fluctuation-dissipation relation of an Ohmic bath.

fn ohmic_ratio(beta_hbar_cutoff: f64) -> f64 {
    let (eta, cutoff, hbar) = (1.0, 1.0, 1.0);
    let temperature = hbar * cutoff / beta_hbar_cutoff;
    // Resolves both the cutoff time and the thermal time ħ/T.
    let step = 0.01 * (1.0 / cutoff).min(hbar / temperature);
    let grid = LagGrid::new(400.0 / cutoff, step).unwrap();
    let corr = EnvironmentCorrelator::ohmic(eta, cutoff, temperature, hbar, grid).unwrap();
    let kernels = build_cubic_kernels(&corr, 1.0, 1.0).unwrap();
    let (m, _) = LocalMoments::from_cubic(&kernels).unwrap();
    fdr_check(&m, temperature, hbar)
        .unwrap()
        .entry(PairLabel::P22)
        .and_then(|e| e.ratio)
        .unwrap()
}

fn fluctuation_dissipation() -> Outcome {
    let high = ohmic_ratio(0.01);
    let low = ohmic_ratio(10.0);
    let high_ok = (high - 1.0).abs() <= 0.05;
    let low_ok = (low - 1.0).abs() > 0.05;
    Outcome::new(
        high_ok && low_ok,
        format!(
            "βħΛ = 0.01: ratio {high:.4} ({}), βħΛ = 10: ratio {low:.4} ({})",
            if high_ok { "inside 5%" } else { "outside 5%" },
            if low_ok {
                "outside 5%"
            } else {
                "inside 5%, expected outside"
            }
        ),
    )
}

// 5. Classical limit.

/// `Σ(t)` of `dX = AX dt + dW` with `⟨dW dWᵀ⟩ = Q dt`, from the block
/// exponential of `[[−A, Q], [0, Aᵀ]]`.
fn ou_covariance(a: Matrix2<f64>, q: Matrix2<f64>, s0: Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a * t));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(q * t));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&(a.transpose() * t));
    let f = m.exp();
    let f12 = f.fixed_view::<2, 2>(0, 2).into_owned();
    let f22 = f.fixed_view::<2, 2>(2, 2).into_owned();
    let e = (a * t).exp();
    e * s0 * e.transpose() + f22.transpose() * f12
}

fn classical_limit() -> Outcome {
    let cfg = preset("ou-classical");
    let m = resolve_moments(&cfg, None).unwrap().moments;
    let model = &cfg.model;
    let grid = cfg.grid.unwrap();
    let damping = m.d33_1 / model.hbar;
    let t_final = cfg.evolution.as_ref().unwrap().t_final;
    let w0 = initial_state(&cfg, "evolve").unwrap();
    let r = run_preset("ou-classical");
    let got = r.final_state.unwrap().marginals();

    let a = Matrix2::new(0.0, 1.0, -(model.omega_c.powi(2) + m.d33 / model.hbar), -damping);
    let q = Matrix2::new(2.0 * m.n33_2, 0.0, 0.0, 2.0 * m.n33);
    let s0 = w0.marginals();
    let want = ou_covariance(
        a,
        q,
        Matrix2::new(s0.var_h, s0.cov_h_pi, s0.cov_h_pi, s0.var_pi),
        t_final,
    );
    let worst = [
        (got.var_h, want[(0, 0)]),
        (got.var_pi, want[(1, 1)]),
        (got.cov_h_pi, want[(0, 1)]),
    ]
    .iter()
    .fold(0.0f64, |w, (g, e)| w.max((g - e).abs() / e.abs()));
    let mean = (a * t_final).exp() * Vector2::new(s0.mean_h, s0.mean_pi);
    Outcome::new(
        worst <= 0.01 && grid.n_h == 64 && grid.n_pi == 64 && (t_final * damping - 5.0).abs() < 1e-12,
        format!(
            "t = {} damping times on {}x{}: max relative covariance error {worst:.1e}, mean error {:.1e}",
            t_final * damping,
            grid.n_h,
            grid.n_pi,
            (got.mean_h - mean[0]).abs().max((got.mean_pi - mean[1]).abs())
        ),
    )
}

// 6. Quantum limit.

/// Row-major vectorization, `vec(A X B) = (A ⊗ Bᵀ) vec(X)`.
fn lindbladian(h: &DMatrix<C64>, ls: [&DMatrix<C64>; 2], d0: &Matrix2<C64>, hbar: f64) -> DMatrix<C64> {
    let d = h.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let mut s = (h.kronecker(&id) - id.kronecker(&h.transpose())) * C64::new(0.0, -1.0 / hbar);
    for a in 0..2 {
        for b in 0..2 {
            let lb_dag = ls[b].adjoint();
            let prod = &lb_dag * ls[a];
            let term = ls[a].kronecker(&lb_dag.transpose())
                - (prod.kronecker(&id) + id.kronecker(&prod.transpose())) * C64::new(0.5, 0.0);
            s += term * d0[(a, b)];
        }
    }
    s
}

fn quantum_limit() -> Outcome {
    let cfg = preset("lindblad-frozen");
    let c = coefficients(&cfg).unwrap();
    let grid = cfg.grid.unwrap();
    let init = cfg.initial.as_ref().unwrap();
    let t_final = cfg.evolution.as_ref().unwrap().t_final;
    let r = run_preset("lindblad-frozen");
    let w = r.final_state.unwrap();
    let (i, j) = grid.nearest(init.h0, init.pi0).unwrap();
    let got = w.op(i, j).scale(grid.cell_area());

    let h = c.heff_at(grid.h(i), grid.pi(j));
    let (f, rr) = c.lindblad_ops();
    let s = lindbladian(h.matrix(), [f.matrix(), rr.matrix()], c.d0.entries(), cfg.model.hbar);
    let v0 = DMatrix::from_row_slice(4, 1, &init.rho.to_row_major());
    let v = (s * C64::new(t_final, 0.0)).exp() * v0;
    let want = QuantumOperator::from_row_slice(2, v.as_slice()).unwrap();
    let err = got.max_abs_diff(&want);

    // Characteristic time ħ/ΔE from the spread of the bare Hamiltonian.
    let h_psi = &cfg.model.h_psi;
    let spread = -min_eigenvalue(&h_psi.scale(-1.0)).unwrap() - min_eigenvalue(h_psi).unwrap();
    let periods = t_final * spread / cfg.model.hbar;
    Outcome::new(
        err <= 1e-6 && c.d0.entries().nrows() == 2 && periods >= 10.0 - 1e-12,
        format!("{periods} characteristic times: max-norm error {err:.1e}"),
    )
}

// 7 and 8. Conservation and positivity on the thermal run.

fn thermal_run() -> &'static EvolutionResult {
    static RUN: std::sync::OnceLock<EvolutionResult> = std::sync::OnceLock::new();
    RUN.get_or_init(|| run_preset("cubic-thermal"))
}

fn conservation() -> Outcome {
    let cfg = preset("cubic-thermal");
    let grid = cfg.grid.unwrap();
    let c = coefficients(&cfg).unwrap();
    let ecfg = evolution_config(&cfg, &c).unwrap();
    let steps = (ecfg.t_final / ecfg.dt).round() as usize;
    let r = thermal_run();
    let last = r.records.last().unwrap();
    Outcome::new(
        r.max_trace_drift <= 1e-6
            && r.max_hermiticity_defect <= 1e-9
            && last.step >= 10_000
            && grid.n_h == 32
            && grid.n_pi == 32
            && c.d0.entries().nrows() == 2,
        format!(
            "{steps} steps on {}x{}: max |trace − 1| {:.1e}, max Hermiticity defect {:.1e}",
            grid.n_h, grid.n_pi, r.max_trace_drift, r.max_hermiticity_defect
        ),
    )
}

fn positivity() -> Outcome {
    let certified = tradeoff_report(&coefficients(&preset("cubic-thermal")).unwrap())
        .verdict
        .is_pass();
    let thermal = thermal_run();
    let monitored = thermal.records.iter().all(|d| d.min_eig.is_some());
    let thermal_min = thermal
        .records
        .iter()
        .filter_map(|d| d.min_eig)
        .fold(f64::INFINITY, f64::min);
    let violated = run_preset("tradeoff-violated");
    let violated_min = violated
        .records
        .iter()
        .filter_map(|d| d.min_eig)
        .fold(f64::INFINITY, f64::min);
    let uncertified = !tradeoff_report(&coefficients(&preset("tradeoff-violated")).unwrap())
        .verdict
        .is_pass();
    Outcome::new(
        certified && monitored && thermal_min >= -1e-6 && uncertified && violated_min < -1e-4,
        format!(
            "cubic-thermal ({}) min eigenvalue {thermal_min:.1e} over {} strides, tradeoff-violated ({}) reaches {violated_min:.1e}",
            if certified { "certified" } else { "not certified" },
            thermal.records.len(),
            if uncertified { "fails" } else { "passes" }
        ),
    )
}

// 9. Unraveling.

fn unraveling() -> Outcome {
    let cfg = preset("cubic-white");
    let c = coefficients(&cfg).unwrap();
    let report = tradeoff_report(&c);
    let saturated = report.verdict.is_pass() && report.markov.cm.margin.abs() <= 1e-12;
    let r = run_preset("cubic-white");
    let reference = reference_table(&r.records, &r.observable_names);
    let w0 = initial_state(&cfg, "unravel").unwrap();
    let ens = cfg.unravel.as_ref().unwrap().ensemble();
    let e = ensemble_average(&c, &w0, &ens, &cfg.observables).unwrap();
    let cmp = compare(&reference, &e.stats(), 3.0).unwrap();
    let scaling = error_scaling(&e, &reference, &[1000, 2000, 5000, 10_000]).unwrap();
    Outcome::new(
        saturated && ens.trajectories == 10_000 && cmp.pass && (scaling.slope + 0.5).abs() <= 0.15,
        format!(
            "M = {}: {} entries, max |z| {:.2}; error slope {:.3}",
            ens.trajectories,
            cmp.entries.len(),
            cmp.max_abs_z,
            scaling.slope
        ),
    )
}

// 10. Kernel condition against the Markov condition.

/// `(1/Δ)∫` over the cell `[τ − Δ/2, τ + Δ/2]`, composite Simpson.
fn cell_average(f: impl Fn(f64) -> f64, tau: f64, dt: f64) -> f64 {
    let n = 1024;
    let h = dt / n as f64;
    let a = tau - 0.5 * dt;
    let mut s = f(a) + f(a + dt);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0 / dt
}

/// Noise kernels `A·G_σ(τ)(2 − τ²/σ²)` as cell averages on a grid of step
/// `dt`: unit area, positive spectrum and a non-negative `N⁽²⁾`.
fn cell_kernels(a22: f64, a33: f64, sigma: f64, dt: f64) -> (NonMarkovKernels, LocalMoments) {
    let lag = LagGrid::from_half_points(40, dt).unwrap();
    let g = move |t: f64| {
        let z = t / sigma;
        (-0.5 * z * z).exp() * (2.0 - z * z) / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let make = |a: f64, pair| {
        let values = lag.taus().map(|t| a * cell_average(g, t, dt)).collect();
        NonlocalKernel::new(KernelKind::Noise, pair, lag, values).unwrap()
    };
    let (n22, n33r) = (make(a22, PairLabel::P22), make(a33, PairLabel::P33));
    let mut m = LocalMoments::default();
    for k in [&n22, &n33r] {
        m.set(k.pair, extract_moments(k, KernelKind::Noise).unwrap().moments);
    }
    (
        NonMarkovKernels {
            n22,
            d22: None,
            n23: None,
            n32: None,
            d32: None,
            n33r,
        },
        m,
    )
}

fn kernel_consistency() -> Outcome {
    let dt = 0.1;
    let mut ok = true;
    let mut parts = Vec::new();
    // Above, below and on the bound A22·A33 = λ₁²/4, the last with λ₁ = 0.
    for (label, ratio, lambda1) in [("above", 2.0, 1.0), ("below", 0.5, 1.0), ("uncoupled", 1.0, 0.0)] {
        let a33 = 0.5;
        let a22 = ratio * 0.25 / a33;
        let mut seq = String::new();
        let mut last = (false, false);
        for sigma in [dt / 2.0, dt / 4.0, dt / 8.0] {
            let (k, m) = cell_kernels(a22, a33, sigma, dt);
            let nm = check_nonmarkov_kernel(&k, lambda1, 1.0, TimeGrid { points: 40, dt })
                .unwrap()
                .pass();
            let model = ModelConfig {
                h_psi: QuantumOperator::zeros(2),
                ..qubit_model(lambda1, QuantumOperator::zeros(2))
            };
            let markov = check_markov_cp(&assemble(&m, &model).unwrap()).pass();
            seq.push(if nm == markov { '=' } else { '≠' });
            last = (nm, markov);
        }
        ok &= last.0 == last.1;
        parts.push(format!("{label} {seq} ({})", if last.1 { "pass" } else { "fail" }));
    }
    Outcome::new(ok, parts.join(", "))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "trade-off boundary",
            budget: Duration::from_secs(1),
            run: tradeoff_boundary,
        },
        Criterion {
            id: 2,
            name: "Schur and trade-off forms agree",
            budget: Duration::from_secs(10),
            run: dictionary_equivalence,
        },
        Criterion {
            id: 3,
            name: "moment extraction",
            budget: Duration::from_secs(5),
            run: moment_extraction,
        },
        Criterion {
            id: 4,
            name: "fluctuation-dissipation window",
            budget: Duration::from_secs(10),
            run: fluctuation_dissipation,
        },
        Criterion {
            id: 5,
            name: "classical limit",
            budget: Duration::from_secs(120),
            run: classical_limit,
        },
        Criterion {
            id: 6,
            name: "quantum limit",
            budget: Duration::from_secs(30),
            run: quantum_limit,
        },
        Criterion {
            id: 7,
            name: "conservation",
            budget: Duration::from_secs(300),
            run: conservation,
        },
        Criterion {
            id: 8,
            name: "positivity preservation",
            budget: Duration::from_secs(600),
            run: positivity,
        },
        Criterion {
            id: 9,
            name: "unraveling consistency",
            budget: Duration::from_secs(600),
            run: unraveling,
        },
        Criterion {
            id: 10,
            name: "kernel and Markov verdicts",
            budget: Duration::from_secs(60),
            run: kernel_consistency,
        },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    let mut elapsed_7 = Duration::ZERO;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let out = (c.run)();
        let mut took = start.elapsed();
        // The positivity budget covers the shared thermal run as well.
        if c.id == 7 {
            elapsed_7 = took;
        } else if c.id == 8 {
            took += elapsed_7;
        }
        let in_time = took <= c.budget;
        let pass = out.pass && in_time;
        let known = KNOWN_FAILURES.contains(&c.id);
        let tag = match (pass, known) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known)",
            (true, true) => "PASS (unexpected)",
        };
        println!(
            "criterion {:>2} {:<32} {tag:<17} [{:.2} s / {} s] {}{}",
            c.id,
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs(),
            out.detail,
            if in_time { "" } else { "; over the runtime budget" }
        );
        if pass == known {
            unexpected.push(c.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected results for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
