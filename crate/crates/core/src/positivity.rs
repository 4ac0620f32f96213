// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Complete-positivity certificates.
//!
//! Three routes are provided: the local Markov kernel `C_M` (Schur form),
//! the general decoherence–diffusion trade-off on the block dictionary, and
//! the discretized nonlocal kernel `C`. A failed check means the sufficient
//! condition could not be certified, not that the map is proven non-CP.
//!
//! Both Markov routes report the same margin `1 − λ_max(X†X)` with
//! `X = D0^{+1/2} E (2D2)^{+1/2}`, where `E` has columns `(d_h, d_π)`. The
//! block matrix `[[D0, E], [E†, 2D2]]` is PSD exactly when this margin is
//! non-negative (and the support conditions hold), so either Schur
//! complement leads to the same number.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq_coeffs::{CQCoefficients, OppenheimBlocks};
use crate::hilbert::eigh_matrix;
use crate::kernels::{KernelKind, NonlocalKernel, PairLabel};

/// Relative tolerance for "⪰ 0" verdicts.
pub const PSD_TOL: f64 = 1e-12;
/// Relative tolerance of the trade-off support condition.
pub const SUPPORT_TOL: f64 = 1e-10;
/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Relative Hermiticity tolerance of an assembled nonlocal kernel.
pub const KERNEL_HERMITICITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PositivityError {
    #[error("{name} = {value} is negative; classical diffusion must be non-negative")]
    NegativeDiffusion { name: &'static str, value: f64 },
    #[error("invalid GKSL block: D0 has eigenvalue {min_eigenvalue:.3e}")]
    InvalidGkslBlock { min_eigenvalue: f64 },
    #[error("assembled kernel C is not Hermitian (relative defect {defect:.3e}); kernel inputs are inconsistent")]
    KernelNotHermitian { defect: f64 },
    #[error("kernel input: {0}")]
    KernelInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// Outcome of one positivity test on a Hermitian matrix `M`.
///
/// `witness` is a unit eigenvector for `min_eigenvalue`. A failing verdict
/// means "condition not certified".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub verdict: Verdict,
    pub min_eigenvalue: f64,
    pub witness: Vec<C64>,
    pub condition_name: String,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

fn to_dmatrix(m: &Matrix2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, c| m[(r, c)])
}

fn max_abs2(m: &Matrix2<C64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Lowest eigenpair of a Hermitian matrix.
fn lowest(m: &DMatrix<C64>) -> (f64, Vec<C64>) {
    let (vals, vecs) = eigh_matrix(m);
    (vals[0], vecs.column(0).iter().copied().collect())
}

/// `V f(Λ) V†` for a Hermitian matrix, applying `f` only to eigenvalues
/// above `PINV_CUTOFF` times the largest magnitude and zero elsewhere.
fn spectral_pinv_fn(m: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh_matrix(m);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = vals.len();
    let mut out = DMatrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        if top > 0.0 && v > PINV_CUTOFF * top {
            let col = vecs.column(k);
            out += (&col * col.adjoint()) * C64::new(f(v), 0.0);
        }
    }
    out
}

fn pinv_hermitian(m: &DMatrix<C64>) -> DMatrix<C64> {
    spectral_pinv_fn(m, |v| 1.0 / v)
}

/// `1 − λ_max(X†X)` with `X = D0^{+1/2} E (2D2)^{+1/2}`.
fn schur_margin(d0: &Matrix2<C64>, e: &Matrix2<C64>, n: [f64; 2]) -> f64 {
    let p = spectral_pinv_fn(&to_dmatrix(d0), |v| 1.0 / v.sqrt());
    let top = n[0].abs().max(n[1].abs());
    let s = DMatrix::from_fn(2, 2, |r, c| {
        if r == c && top > 0.0 && n[r] > PINV_CUTOFF * top {
            C64::new(1.0 / (2.0 * n[r]).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let x = p * to_dmatrix(e) * s;
    let gram = x.adjoint() * &x;
    let (vals, _) = eigh_matrix(&gram);
    1.0 - vals[vals.len() - 1]
}

/// Hybrid block with columns `(d_h, d_π)`.
fn hybrid_block(d_h: [C64; 2], d_pi: [C64; 2]) -> Matrix2<C64> {
    Matrix2::new(d_h[0], d_pi[0], d_h[1], d_pi[1])
}

fn is_zero(v: [C64; 2]) -> bool {
    v.iter().all(|z| z.norm() == 0.0)
}

/// The local Markov kernel and the directions whose subtraction term could
/// not be formed.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    pub matrix: Matrix2<C64>,
    /// Subtracted terms plus `D0`, used to normalize tolerances.
    pub scale: f64,
    pub unsupported: Vec<&'static str>,
}

fn assemble_cm(c: &CQCoefficients) -> MarkovKernel {
    let d0 = *c.d0.entries();
    let mut scale = max_abs2(&d0);
    let mut cm = d0;
    let mut unsupported = Vec::new();
    for (name, d, n) in [("h", c.d_h, c.diffusion.n33_2), ("pi", c.d_pi, c.diffusion.n33)] {
        if is_zero(d) {
            continue;
        }
        if n > 0.0 {
            let v = nalgebra::Vector2::new(d[0], d[1]);
            let sub = (v * v.adjoint()) / C64::new(2.0 * n, 0.0);
            scale = scale.max(max_abs2(&sub));
            cm -= sub;
        } else {
            unsupported.push(name);
        }
    }
    MarkovKernel {
        matrix: cm,
        scale,
        unsupported,
    }
}

fn check_diffusion(c: &CQCoefficients) -> Result<(), PositivityError> {
    for (name, value) in [("N33", c.diffusion.n33), ("N33_2", c.diffusion.n33_2)] {
        if value < 0.0 {
            return Err(PositivityError::NegativeDiffusion { name, value });
        }
    }
    Ok(())
}

/// `C_M = D0 − d_h d_h† / (2 N33_2) − d_π d_π† / (2 N33)`.
///
/// A direction with zero diffusion contributes nothing when its hybrid
/// vector vanishes; otherwise it is listed as unsupported.
pub fn build_cm(c: &CQCoefficients) -> Result<MarkovKernel, PositivityError> {
    check_diffusion(c)?;
    Ok(assemble_cm(c))
}

/// Local Markov kernel and classical diffusion certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCpReport {
    pub cm: CertReport,
    pub classical: CertReport,
}

impl MarkovCpReport {
    pub fn pass(&self) -> bool {
        self.cm.verdict.is_pass() && self.classical.verdict.is_pass()
    }
}

fn classical_report(n33_2: f64, n33: f64) -> CertReport {
    let (min, witness) = if n33_2 <= n33 {
        (n33_2, vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    } else {
        (n33, vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
    };
    let scale = n33.abs().max(n33_2.abs());
    CertReport {
        verdict: Verdict::from_bool(min >= 0.0),
        min_eigenvalue: min,
        witness,
        condition_name: "classical diffusion N33, N33_2 >= 0".into(),
        margin: if scale > 0.0 { min / scale } else { 0.0 },
        reason: (min < 0.0).then(|| "negative classical diffusion".into()),
    }
}

/// Certifies `C_M ⪰ 0` and `N33, N33_2 ≥ 0`.
pub fn check_markov_cp(c: &CQCoefficients) -> MarkovCpReport {
    let classical = classical_report(c.diffusion.n33_2, c.diffusion.n33);
    let mk = assemble_cm(c);
    let (min, witness) = lowest(&to_dmatrix(&mk.matrix));
    let e = hybrid_block(c.d_h, c.d_pi);
    let n = [c.diffusion.n33_2, c.diffusion.n33];
    let mut reason = None;
    let margin = if mk.unsupported.is_empty() {
        schur_margin(c.d0.entries(), &e, n)
    } else {
        reason = Some(format!("unsupported direction: {}", mk.unsupported.join(", ")));
        -1.0
    };
    let psd = min >= -PSD_TOL * mk.scale;
    if !psd && reason.is_none() {
        reason = Some("C_M has a negative eigenvalue".into());
    }
    MarkovCpReport {
        cm: CertReport {
            verdict: Verdict::from_bool(psd && mk.unsupported.is_empty()),
            min_eigenvalue: min,
            witness,
            condition_name: "C_M >= 0".into(),
            margin,
            reason,
        },
        classical,
    }
}

/// Certifies `2D2 − E† D0⁺ E ⪰ 0` together with the support condition
/// `(I − D0 D0⁺) E = 0`.
pub fn check_tradeoff(b: &OppenheimBlocks) -> Result<CertReport, PositivityError> {
    let d0 = to_dmatrix(b.d0.entries());
    let (d0_vals, _) = eigh_matrix(&d0);
    let d0_scale = d0_vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if d0_vals[0] < -PSD_TOL * d0_scale {
        return Err(PositivityError::InvalidGkslBlock {
            min_eigenvalue: d0_vals[0],
        });
    }
    let n = [b.d2_00[(0, 0)], b.d2_00[(1, 1)]];
    for (name, value) in [("N33_2", n[0]), ("N33", n[1])] {
        if value < 0.0 {
            return Err(PositivityError::NegativeDiffusion { name, value });
        }
    }
    let e2 = hybrid_block(b.d1_h, b.d1_pi);
    let e = to_dmatrix(&e2);
    let d0p = pinv_hermitian(&d0);
    let residual = (DMatrix::<C64>::identity(2, 2) - &d0 * &d0p) * &e;
    let res_norm = residual.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let e_norm = max_abs2(&e2);
    let supported = res_norm <= SUPPORT_TOL * e_norm.max(f64::MIN_POSITIVE);

    let quad = e.adjoint() * &d0p * &e;
    let two_d2 = DMatrix::from_fn(2, 2, |r, c| C64::new(if r == c { 2.0 * n[r] } else { 0.0 }, 0.0));
    let t = &two_d2 - &quad;
    let scale = quad.iter().chain(two_d2.iter()).fold(0.0f64, |a, z| a.max(z.norm()));
    let (min, witness) = lowest(&t);
    let psd = min >= -PSD_TOL * scale;
    let (margin, reason) = if supported {
        (
            schur_margin(b.d0.entries(), &e2, n),
            (!psd).then(|| "2D2 - E^T D0^+ E has a negative eigenvalue".to_string()),
        )
    } else {
        (
            -res_norm / e_norm,
            Some(format!(
                "support condition violated: |(I - D0 D0^+) D1| = {res_norm:.3e}"
            )),
        )
    };
    Ok(CertReport {
        verdict: Verdict::from_bool(psd && supported),
        min_eigenvalue: min,
        witness,
        condition_name: "2 D2 - D1^T D0^+ D1 >= 0".into(),
        margin,
        reason,
    })
}

/// Nonlocal kernels entering the two-branch coupling. Missing mixed kernels
/// are treated as zero.
#[derive(Debug, Clone)]
pub struct NonMarkovKernels {
    pub n22: NonlocalKernel,
    pub d22: Option<NonlocalKernel>,
    pub n23: Option<NonlocalKernel>,
    pub n32: Option<NonlocalKernel>,
    pub d32: Option<NonlocalKernel>,
    pub n33r: NonlocalKernel,
}

/// Uniform evaluation grid `t_i = i·dt`, `i < points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub points: usize,
    pub dt: f64,
}

/// Certificates for the nonlocal kernel `C` and the classical weight `𝒩33ᴿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovReport {
    pub kernel: CertReport,
    pub classical: CertReport,
}

impl NonMarkovReport {
    pub fn pass(&self) -> bool {
        self.kernel.verdict.is_pass() && self.classical.verdict.is_pass()
    }
}

/// Operator matrix `M_ij = K(t_i − t_j)·dt`, so kernel composition and
/// inversion become matrix products and inverses.
fn kernel_matrix(k: &NonlocalKernel, grid: TimeGrid) -> Result<DMatrix<f64>, PositivityError> {
    let step = k.grid.step();
    if ((step - grid.dt) / grid.dt).abs() > 1e-9 {
        return Err(PositivityError::KernelInput(format!(
            "kernel {} has lag step {step} but the time grid uses {}",
            k.pair.as_str(),
            grid.dt
        )));
    }
    let n = grid.points;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        k.at_offset(i as isize - j as isize) * grid.dt
    }))
}

fn complexify(m: &DMatrix<f64>, s: C64) -> DMatrix<C64> {
    m.map(|v| s * v)
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

fn expect_kind(k: &NonlocalKernel, kind: KernelKind, pair: PairLabel) -> Result<(), PositivityError> {
    if k.kind != kind || k.pair != pair {
        return Err(PositivityError::KernelInput(format!(
            "expected {kind:?} kernel {}, got {:?} {}",
            pair.as_str(),
            k.kind,
            k.pair.as_str()
        )));
    }
    Ok(())
}

/// Certifies `C = 𝒩22/ħ² − (i/2ħ²)𝒟22ᵃ − ℬ₊ᵀ 𝒬 ℬ₋ ⪰ 0` and `𝒩33ᴿ ⪰ 0` on a
/// discretized time interval, with `ℬ± = ½ℒ ∓ (i/ħ)𝒩32`,
/// `ℒ = λ₁ − 𝒟32/(2ħ)` and `𝒬` the pseudo-inverse of `𝒩33ᴿ`.
pub fn check_nonmarkov_kernel(
    k: &NonMarkovKernels,
    lambda1: f64,
    hbar: f64,
    grid: TimeGrid,
) -> Result<NonMarkovReport, PositivityError> {
    if grid.points == 0 || !(grid.dt > 0.0) || !(hbar > 0.0) {
        return Err(PositivityError::KernelInput(
            "time grid and hbar must be positive".into(),
        ));
    }
    expect_kind(&k.n22, KernelKind::Noise, PairLabel::P22)?;
    expect_kind(&k.n33r, KernelKind::Noise, PairLabel::P33)?;
    let n = grid.points;
    let zero = DMatrix::<f64>::zeros(n, n);
    let opt = |o: &Option<NonlocalKernel>, kind, pair| -> Result<DMatrix<f64>, PositivityError> {
        match o {
            Some(kk) => {
                expect_kind(kk, kind, pair)?;
                kernel_matrix(kk, grid)
            }
            None => Ok(zero.clone()),
        }
    };
    let m22 = kernel_matrix(&k.n22, grid)?;
    let m33 = kernel_matrix(&k.n33r, grid)?;
    let d22 = opt(&k.d22, KernelKind::Dissipation, PairLabel::P22)?;
    let n32 = opt(&k.n32, KernelKind::Noise, PairLabel::P32)?;
    let d32 = opt(&k.d32, KernelKind::Dissipation, PairLabel::P32)?;
    if let Some(n23k) = &k.n23 {
        expect_kind(n23k, KernelKind::Noise, PairLabel::P23)?;
        let n23 = kernel_matrix(n23k, grid)?;
        let defect = (&n23 - n32.transpose()).amax();
        let scale = n23.amax().max(n32.amax());
        if defect > KERNEL_HERMITICITY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(PositivityError::KernelInput(format!(
                "N23(x,y) must equal N32(y,x); relative defect {:.3e}",
                defect / scale
            )));
        }
    }

    let classical = {
        let sym = (&m33 + m33.transpose()) * 0.5;
        let c = complexify(&sym, C64::new(1.0, 0.0));
        let (min, witness) = lowest(&c);
        let scale = sym.amax();
        let ok = min >= -PSD_TOL * scale;
        CertReport {
            verdict: Verdict::from_bool(ok),
            min_eigenvalue: min,
            witness,
            condition_name: "N33R >= 0".into(),
            margin: if scale > 0.0 { min / scale } else { 0.0 },
            reason: (!ok).then(|| "classical noise kernel is not positive".into()),
        }
    };

    let inv_h2 = 1.0 / (hbar * hbar);
    let i = C64::new(0.0, 1.0);
    let ell = DMatrix::<f64>::identity(n, n) * lambda1 - &d32 * (0.5 / hbar);
    let b_plus = complexify(&ell, C64::new(0.5, 0.0)) - complexify(&n32, i / hbar);
    let b_minus = complexify(&ell, C64::new(0.5, 0.0)) + complexify(&n32, i / hbar);
    let q = pinv_hermitian(&complexify(&((&m33 + m33.transpose()) * 0.5), C64::new(1.0, 0.0)));
    let feedback = b_plus.transpose() * q * b_minus;
    let noise = complexify(&m22, C64::new(inv_h2, 0.0));
    let d22a = (&d22 - d22.transpose()) * 0.5;
    let diss = complexify(&d22a, -i * 0.5 * inv_h2);
    let c = &noise + &diss - &feedback;
    let scale = max_abs(&noise).max(max_abs(&diss)).max(max_abs(&feedback));
    let defect = max_abs(&(&c - c.adjoint()));
    if defect > KERNEL_HERMITICITY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(PositivityError::KernelNotHermitian { defect: defect / scale });
    }
    let (min, witness) = lowest(&c);
    let ok = min >= -PSD_TOL * scale;
    let kernel = CertReport {
        verdict: Verdict::from_bool(ok),
        min_eigenvalue: min,
        witness,
        condition_name: "C >= 0".into(),
        margin: if scale > 0.0 { min / scale } else { 0.0 },
        reason: (!ok).then(|| "condition not certified: C has a negative eigenvalue".into()),
    };
    Ok(NonMarkovReport { kernel, classical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq_coeffs::{assemble, to_oppenheim, ModelConfig};
    use crate::hilbert::QuantumOperator;
    use crate::kernels::{LagGrid, LocalMoments};

    fn cubic_white(n22: f64, n33: f64, lambda1: f64) -> CQCoefficients {
        let m = LocalMoments {
            n22,
            n33,
            ..Default::default()
        };
        let model = ModelConfig {
            hbar: 1.0,
            lambda1,
            h_psi: QuantumOperator::pauli_x().scale(0.5),
            f2: QuantumOperator::pauli_z(),
            omega_c: 1.0,
        };
        assemble(&m, &model).unwrap()
    }

    #[test]
    fn cubic_white_cm_matches_closed_form() {
        let (n22, n33, l1) = (0.3, 0.4, 1.2);
        let c = cubic_white(n22, n33, l1);
        let cm = build_cm(&c).unwrap().matrix;
        let want = 2.0 * n22 - l1 * l1 / (8.0 * n33);
        assert!((cm[(0, 0)].re - want).abs() < 1e-14);
        for (r, col) in [(0, 1), (1, 0), (1, 1)] {
            assert!(cm[(r, col)].norm() < 1e-14);
        }
    }

    #[test]
    fn decoupled_cm_is_d0() {
        let c = cubic_white(0.3, 0.4, 0.0);
        assert_eq!(build_cm(&c).unwrap().matrix, *c.d0.entries());
    }

    #[test]
    fn subtraction_outer_product() {
        let mut c = cubic_white(0.0, 0.5, 0.0);
        c.d_pi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let cm = build_cm(&c).unwrap().matrix;
        assert!((cm[(0, 0)].re + 1.0).abs() < 1e-15);
        assert!(cm[(1, 1)].norm() < 1e-15 && cm[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn saturation_and_violation() {
        let l1: f64 = 1.0;
        let bound = l1 * l1 / 16.0;
        let sat = check_markov_cp(&cubic_white(0.25, bound / 0.25, l1));
        assert!(sat.pass());
        assert!(sat.cm.margin.abs() <= 1e-12, "{}", sat.cm.margin);
        let bad = check_markov_cp(&cubic_white(0.25, 0.99 * bound / 0.25, l1));
        assert_eq!(bad.cm.verdict, Verdict::Fail);
        // Closed-form lowest eigenvalue of diag(2N22 − λ²/8N33, 0).
        let want = 0.5 - 1.0 / (8.0 * 0.99 * bound / 0.25);
        assert!((bad.cm.min_eigenvalue - want).abs() < 1e-14);
        assert!(check_markov_cp(&cubic_white(0.0, 0.0, 0.0)).pass());
    }

    #[test]
    fn unsupported_direction_fails() {
        let c = cubic_white(0.3, 0.0, 1.0);
        let r = check_markov_cp(&c);
        assert_eq!(r.cm.verdict, Verdict::Fail);
        assert!(r.cm.reason.unwrap().contains("unsupported"));
    }

    #[test]
    fn negative_diffusion_is_error_for_build_and_fail_for_check() {
        let c = cubic_white(0.3, -0.1, 0.0);
        assert!(matches!(build_cm(&c), Err(PositivityError::NegativeDiffusion { .. })));
        assert_eq!(check_markov_cp(&c).classical.verdict, Verdict::Fail);
    }

    #[test]
    fn tradeoff_matches_markov_on_cubic() {
        for f in [0.9, 1.0, 1.1] {
            let c = cubic_white(0.25, f / 16.0 / 0.25, 1.0);
            let m = check_markov_cp(&c);
            let t = check_tradeoff(&to_oppenheim(&c)).unwrap();
            assert_eq!(m.cm.verdict, t.verdict, "f = {f}");
            assert!((m.cm.margin - t.margin).abs() < 1e-12);
        }
    }

    #[test]
    fn tradeoff_zero_hybrid_passes() {
        let mut b = to_oppenheim(&cubic_white(0.3, 0.2, 0.0));
        b.d2_00 = Matrix2::new(0.0, 0.0, 0.0, 0.7);
        let r = check_tradeoff(&b).unwrap();
        assert!(r.verdict.is_pass());
        assert_eq!(r.margin, 1.0);
    }

    #[test]
    fn tradeoff_support_violation() {
        // Rank-one D0 on the first channel, hybrid block on the second.
        let mut b = to_oppenheim(&cubic_white(0.5, 1.0, 0.0));
        b.d1_pi = [C64::new(0.0, 0.0), C64::new(0.3, 0.0)];
        let r = check_tradeoff(&b).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.reason.unwrap().contains("support"));
        assert!(r.margin < 0.0);
    }

    #[test]
    fn invalid_gksl_block_is_error() {
        let mut b = to_oppenheim(&cubic_white(0.5, 1.0, 0.0));
        b.d0 = crate::hilbert::GKSLMatrix::new(Matrix2::new(
            C64::new(-1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
        ))
        .unwrap();
        assert!(matches!(
            check_tradeoff(&b),
            Err(PositivityError::InvalidGkslBlock { .. })
        ));
    }

    #[test]
    fn witness_reproduces_min_eigenvalue() {
        let c = cubic_white(0.21, 0.17, 1.3);
        let r = check_tradeoff(&to_oppenheim(&c)).unwrap();
        let t = {
            let b = to_oppenheim(&c);
            let e = to_dmatrix(&hybrid_block(b.d1_h, b.d1_pi));
            let d0p = pinv_hermitian(&to_dmatrix(b.d0.entries()));
            let two_d2 = DMatrix::from_fn(2, 2, |r, c| {
                C64::new(if r == c { 2.0 * b.d2_00[(r, r)] } else { 0.0 }, 0.0)
            });
            two_d2 - e.adjoint() * d0p * e
        };
        let w = nalgebra::DVector::from_vec(r.witness.clone());
        let q = (w.adjoint() * t * &w)[(0, 0)];
        assert!((q.re - r.min_eigenvalue).abs() < 1e-10);
    }

    fn delta_like(pair: PairLabel, grid: LagGrid, area: f64) -> NonlocalKernel {
        let step = grid.step();
        NonlocalKernel::from_fn(KernelKind::Noise, pair, grid, |t| {
            if t.abs() < 0.5 * step {
                area / step
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn nonmarkov_diagonal_kernels() {
        let grid = LagGrid::from_half_points(40, 0.1).unwrap();
        let tg = TimeGrid { points: 30, dt: 0.1 };
        let c = 0.8;
        let kernels = |l_n33: f64| NonMarkovKernels {
            n22: delta_like(PairLabel::P22, grid, c),
            d22: None,
            n23: None,
            n32: None,
            d32: None,
            n33r: delta_like(PairLabel::P33, grid, l_n33),
        };
        // M22 = c·I, Q = I / n33, so C = c − λ²/(4 n33) on every mode.
        let pass = check_nonmarkov_kernel(&kernels(1.0), 1.0, 1.0, tg).unwrap();
        assert!(pass.pass());
        assert!((pass.kernel.min_eigenvalue - (c - 0.25)).abs() < 1e-12);
        let fail = check_nonmarkov_kernel(&kernels(0.25), 1.5, 1.0, tg).unwrap();
        assert_eq!(fail.kernel.verdict, Verdict::Fail);
        assert!((fail.kernel.min_eigenvalue - (c - 2.25)).abs() < 1e-12);
        let free = check_nonmarkov_kernel(&kernels(0.0), 0.0, 1.0, tg).unwrap();
        assert!(free.pass());
    }

    #[test]
    fn thermal_noise_matrix_is_positive() {
        use crate::kernels::{build_cubic_kernels, EnvironmentCorrelator};
        let grid = LagGrid::from_half_points(400, 0.05).unwrap();
        let corr = EnvironmentCorrelator::thermal_mode(1.0, 0.3, 0.7, 1.0, grid).unwrap();
        let ck = build_cubic_kernels(&corr, 1.0, 1.0).unwrap();
        let k = NonMarkovKernels {
            n22: ck.noise_psi.clone(),
            d22: Some(ck.diss_psi.clone()),
            n23: None,
            n32: None,
            d32: None,
            n33r: ck.noise_h.clone(),
        };
        let r = check_nonmarkov_kernel(&k, 0.0, 1.0, TimeGrid { points: 120, dt: 0.05 }).unwrap();
        assert!(r.kernel.verdict.is_pass(), "{:?}", r.kernel.min_eigenvalue);
        assert!(r.classical.verdict.is_pass());
    }

    #[test]
    fn lag_step_mismatch_is_rejected() {
        let grid = LagGrid::from_half_points(10, 0.1).unwrap();
        let k = NonMarkovKernels {
            n22: delta_like(PairLabel::P22, grid, 1.0),
            d22: None,
            n23: None,
            n32: None,
            d32: None,
            n33r: delta_like(PairLabel::P33, grid, 1.0),
        };
        assert!(check_nonmarkov_kernel(&k, 1.0, 1.0, TimeGrid { points: 5, dt: 0.2 }).is_err());
    }
}
