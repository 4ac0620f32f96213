// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Markov coefficients of the classical–quantum generator and their
//! translation into the general hybrid (D₀, D₁, D₂) parametrization.

use nalgebra::{Matrix2, Matrix2x1};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{anticommutator, heisenberg_rate, GKSLMatrix, HilbertError, QuantumOperator};
use crate::kernels::LocalMoments;

/// Relative tolerance on `N23 = N32` and `N23_2 = N32_2`.
pub const MIXED_SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoeffError {
    #[error("{name}: {a} vs {b} (mixed noise moments must be symmetric)")]
    MixedAsymmetry { name: &'static str, a: f64, b: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Couplings and operators of the hybrid model. The classical sector is the
/// harmonic oscillator `H_c = π²/2 + ω_c² h²/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hbar: f64,
    pub lambda1: f64,
    pub h_psi: QuantumOperator,
    pub f2: QuantumOperator,
    pub omega_c: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CoeffError> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(CoeffError::InvalidModel(format!(
                "hbar must be positive, got {}",
                self.hbar
            )));
        }
        if !(self.omega_c >= 0.0 && self.omega_c.is_finite()) {
            return Err(CoeffError::InvalidModel(format!(
                "omega_c must be >= 0, got {}",
                self.omega_c
            )));
        }
        if !self.lambda1.is_finite() {
            return Err(CoeffError::InvalidModel("lambda1 must be finite".into()));
        }
        if self.h_psi.dim() != self.f2.dim() {
            return Err(HilbertError::DimensionMismatch {
                left: self.h_psi.dim(),
                right: self.f2.dim(),
            }
            .into());
        }
        self.h_psi.ensure_hermitian("H_psi")?;
        self.f2.ensure_hermitian("F2")?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.h_psi.dim()
    }
}

/// Linear classical drift `Ã(h, π) = −(ω_c² + D33/ħ) h − (D33_1/ħ) π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub omega_c_sq: f64,
    /// `D33_1/ħ`.
    pub damping: f64,
    /// `D33/ħ`.
    pub restoring: f64,
}

impl Drift {
    pub fn eval(&self, h: f64, pi: f64) -> f64 {
        -(self.omega_c_sq + self.restoring) * h - self.damping * pi
    }

    /// Matrix `A` of the linear system `d(h, π)/dt = A (h, π)`.
    pub fn linear_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -(self.omega_c_sq + self.restoring), -self.damping)
    }
}

/// Classical diffusion constants: `N33_2` along `h`, `N33` along `π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffusion {
    pub n33: f64,
    pub n33_2: f64,
}

/// Scalar couplings of `Ĥ_eff = Ĥψ + (h·h_coeff + π·pi_coeff)F̂ + f2_sq·F̂² + f2r_anti·{F̂, R̂}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeffCouplings {
    /// `λ₁ − D23/ħ`.
    pub h_coeff: f64,
    /// `−D23_1/ħ`.
    pub pi_coeff: f64,
    /// `D22/2ħ`.
    pub f2_sq: f64,
    /// `−D22_1/4ħ`.
    pub f2r_anti: f64,
}

/// Complete set of constant generator coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CQCoefficients {
    pub hbar: f64,
    pub lambda1: f64,
    pub dim: usize,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub heff: HeffCouplings,
    pub d0: GKSLMatrix,
    pub gamma: f64,
    pub nu: f64,
    pub kappa: f64,
    pub mu: f64,
    /// `(γ − iν, κ)`.
    pub d_pi: [C64; 2],
    /// `(0, iμ)`.
    pub d_h: [C64; 2],
    pub h_psi: QuantumOperator,
    pub f2: QuantumOperator,
    pub r2: QuantumOperator,
    /// Field-independent part of `Ĥ_eff`.
    pub h_base: QuantumOperator,
    /// Coefficient operator of `h` in `Ĥ_eff`.
    pub h_h: QuantumOperator,
    /// Coefficient operator of `π` in `Ĥ_eff`.
    pub h_pi: QuantumOperator,
}

impl CQCoefficients {
    /// `Ĥ_eff(h, π) = Ĥ_base + h·Ĥ_h + π·Ĥ_π`.
    pub fn heff_at(&self, h: f64, pi: f64) -> QuantumOperator {
        let m = self.h_base.matrix() + self.h_h.matrix() * C64::new(h, 0.0) + self.h_pi.matrix() * C64::new(pi, 0.0);
        QuantumOperator::from_matrix(m).expect("affine combination of valid operators")
    }

    /// Lindblad basis `(F̂₂, R̂₂)`.
    pub fn lindblad_ops(&self) -> (QuantumOperator, QuantumOperator) {
        (self.f2.clone(), self.r2.clone())
    }

    /// Hybrid operator `B_π = (γ − iν)F̂₂ + κR̂₂` whose flux `∂_π(B_π Ŵ + Ŵ B_π†)`
    /// collects the π-derivative hybrid terms.
    pub fn b_pi(&self) -> QuantumOperator {
        combine(self.d_pi, &self.f2, &self.r2)
    }

    /// Hybrid operator `B_h = iμR̂₂`.
    pub fn b_h(&self) -> QuantumOperator {
        combine(self.d_h, &self.f2, &self.r2)
    }

    /// Whether all hybrid couplings vanish.
    pub fn is_decoupled(&self) -> bool {
        self.d_pi
            .iter()
            .chain(self.d_h.iter())
            .all(|z| *z == C64::new(0.0, 0.0))
    }
}

fn combine(c: [C64; 2], f: &QuantumOperator, r: &QuantumOperator) -> QuantumOperator {
    QuantumOperator::from_matrix(f.matrix() * c[0] + r.matrix() * c[1]).expect("combination of valid operators")
}

fn check_mixed(name: &'static str, a: f64, b: f64) -> Result<(), CoeffError> {
    let scale = a.abs().max(b.abs());
    if (a - b).abs() > MIXED_SYMMETRY_TOL * scale {
        return Err(CoeffError::MixedAsymmetry { name, a, b });
    }
    Ok(())
}

/// Builds the generator coefficients from local moments and model couplings.
pub fn assemble(m: &LocalMoments, model: &ModelConfig) -> Result<CQCoefficients, CoeffError> {
    model.validate()?;
    check_mixed("N23 vs N32", m.n23, m.n32)?;
    check_mixed("N23_2 vs N32_2", m.n23_2, m.n32_2)?;
    let all = [
        m.n22, m.n33, m.n23, m.n32, m.n22_2, m.n33_2, m.n23_2, m.n32_2, m.d22, m.d33, m.d23, m.d32, m.d22_1, m.d33_1,
        m.d23_1, m.d32_1,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(CoeffError::InvalidModel("moments must be finite".into()));
    }
    let hbar = model.hbar;
    let lambda1 = model.lambda1;
    let f2 = model.f2.clone();
    let r2 = heisenberg_rate(&model.h_psi, &f2, hbar)?;

    let heff = HeffCouplings {
        h_coeff: lambda1 - m.d23 / hbar,
        pi_coeff: -m.d23_1 / hbar,
        f2_sq: m.d22 / (2.0 * hbar),
        f2r_anti: -m.d22_1 / (4.0 * hbar),
    };
    let f2_sq = f2.matmul(&f2)?;
    let anti = anticommutator(&f2, &r2)?;
    let h_base = &(&model.h_psi + &f2_sq.scale(heff.f2_sq)) + &anti.scale(heff.f2r_anti);
    let h_h = f2.scale(heff.h_coeff);
    let h_pi = f2.scale(heff.pi_coeff);

    let pref = 2.0 / (hbar * hbar);
    let off = C64::new(0.0, -m.d22_1 / 4.0) * pref;
    let d0 = GKSLMatrix::new(Matrix2::new(
        C64::new(pref * m.n22, 0.0),
        off,
        off.conj(),
        C64::new(pref * m.n22_2, 0.0),
    ))?;

    let gamma = lambda1 / 2.0 + m.d32 / (2.0 * hbar);
    let nu = 2.0 * m.n23 / hbar;
    let kappa = m.d32_1 / (2.0 * hbar);
    let mu = 2.0 * m.n23_2 / hbar;

    Ok(CQCoefficients {
        hbar,
        lambda1,
        dim: model.dim(),
        drift: Drift {
            omega_c_sq: model.omega_c * model.omega_c,
            damping: m.d33_1 / hbar,
            restoring: m.d33 / hbar,
        },
        diffusion: Diffusion {
            n33: m.n33,
            n33_2: m.n33_2,
        },
        heff,
        d0,
        gamma,
        nu,
        kappa,
        mu,
        d_pi: [C64::new(gamma, -nu), C64::new(kappa, 0.0)],
        d_h: [C64::new(0.0, 0.0), C64::new(0.0, mu)],
        h_psi: model.h_psi.clone(),
        f2,
        r2,
        h_base,
        h_h,
        h_pi,
    })
}

/// Blocks of the general constant-coefficient hybrid generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OppenheimBlocks {
    /// `diag(N33_2, N33)` over the phase-space directions `(h, π)`.
    pub d2_00: Matrix2<f64>,
    pub d1_pi: [C64; 2],
    pub d1_h: [C64; 2],
    pub d0: GKSLMatrix,
    /// Liouville drift `(π, Ã)`.
    pub drift: Drift,
}

impl OppenheimBlocks {
    /// Hybrid block as a matrix whose columns are `(d1_h, d1_pi)`.
    pub fn d1_matrix(&self) -> Matrix2<C64> {
        let col = |v: [C64; 2]| Matrix2x1::new(v[0], v[1]);
        Matrix2::from_columns(&[col(self.d1_h), col(self.d1_pi)])
    }

    /// Recovers `(γ, ν, κ, μ)` from the hybrid blocks.
    pub fn hybrid_coefficients(&self) -> (f64, f64, f64, f64) {
        (self.d1_pi[0].re, -self.d1_pi[0].im, self.d1_pi[1].re, self.d1_h[1].im)
    }
}

pub fn to_oppenheim(c: &CQCoefficients) -> OppenheimBlocks {
    OppenheimBlocks {
        d2_00: Matrix2::new(c.diffusion.n33_2, 0.0, 0.0, c.diffusion.n33),
        d1_pi: c.d_pi,
        d1_h: c.d_h,
        d0: c.d0,
        drift: c.drift,
    }
}
