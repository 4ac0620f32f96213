// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Environment correlators, nonlocal noise/dissipation kernels on a lag grid,
//! and their local (Markov) moments.
//!
//! All kernels are functions of a single time lag `τ` on a uniform grid that
//! is symmetric about `τ = 0`. Integrals use the trapezoid rule on that grid.

use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the even-symmetry checks on sampled kernels.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative kernel size at the window edge above which a kernel counts as
/// not decayed.
pub const EDGE_DECAY_TOL: f64 = 1e-6;
/// Relative window of the fluctuation–dissipation check.
pub const FDR_WINDOW: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("lag grid needs a positive window and step (window {window}, step {step})")]
    BadGrid { window: f64, step: f64 },
    #[error("kernel grid is empty")]
    EmptyGrid,
    #[error("sample count {got} does not match the lag grid ({want} points)")]
    SampleCount { got: usize, want: usize },
    #[error("correlator is not even in the lag: |G(-τ) - G(τ)| = {defect:.3e} (relative)")]
    NotSymmetric { defect: f64 },
    #[error("noise kernel {pair} is not symmetric: relative defect {defect:.3e}")]
    NoiseNotSymmetric { pair: PairLabel, defect: f64 },
    #[error("dissipation kernel {pair} is not retarded: nonzero value at τ = {tau}")]
    NotRetarded { pair: PairLabel, tau: f64 },
    #[error("kernels live on different lag grids")]
    GridMismatch,
    #[error("invalid physical parameter: {0}")]
    BadParameter(String),
    #[error("kernel CSV: {0}")]
    Csv(String),
}

/// Uniform lag grid `τ_k = (k - m)·Δτ`, `k = 0..=2m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagGrid {
    half_points: usize,
    step: f64,
}

impl LagGrid {
    /// Grid covering `[-window, window]` with spacing `step`; the window is
    /// rounded to a whole number of steps.
    pub fn new(window: f64, step: f64) -> Result<Self, KernelError> {
        if !(window > 0.0 && step > 0.0 && window.is_finite() && step.is_finite()) {
            return Err(KernelError::BadGrid { window, step });
        }
        let half_points = (window / step).round() as usize;
        if half_points == 0 {
            return Err(KernelError::BadGrid { window, step });
        }
        Ok(Self { half_points, step })
    }

    pub fn from_half_points(half_points: usize, step: f64) -> Result<Self, KernelError> {
        Self::new(half_points as f64 * step, step)
    }

    /// Default window `50/Ω` and step `0.01/Ω` for a characteristic frequency.
    pub fn for_frequency(omega: f64) -> Result<Self, KernelError> {
        Self::new(50.0 / omega, 0.01 / omega)
    }

    pub fn len(&self) -> usize {
        2 * self.half_points + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn half_points(&self) -> usize {
        self.half_points
    }

    pub fn window(&self) -> f64 {
        self.half_points as f64 * self.step
    }

    pub fn zero_index(&self) -> usize {
        self.half_points
    }

    pub fn tau(&self, k: usize) -> f64 {
        (k as f64 - self.half_points as f64) * self.step
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.tau(k))
    }

    pub fn same_as(&self, other: &LagGrid) -> bool {
        self.half_points == other.half_points && (self.step - other.step).abs() <= 1e-12 * self.step
    }
}

/// Trapezoid rule of `f(τ_k)` over the whole grid.
pub fn trapezoid(grid: &LagGrid, values: impl Iterator<Item = f64>) -> f64 {
    let last = grid.len() - 1;
    let sum: f64 = values
        .enumerate()
        .map(|(k, v)| if k == 0 || k == last { 0.5 * v } else { v })
        .sum();
    sum * grid.step()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelatorKind {
    /// Single oscillator mode of frequency `omega`, optionally broadened by
    /// an exponential envelope `exp(-linewidth·|τ|)`.
    ThermalMode { omega: f64, linewidth: f64 },
    /// Ohmic spectral density `J(ω) = eta·ω·exp(-ω/cutoff)`.
    Ohmic { eta: f64, cutoff: f64 },
}

/// Time-ordered environment correlator `G_F(τ)` sampled on a lag grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentCorrelator {
    pub kind: CorrelatorKind,
    pub temperature: f64,
    pub hbar: f64,
    pub grid: LagGrid,
    samples: Vec<C64>,
}

impl EnvironmentCorrelator {
    /// `G_F(τ) = (ħ/2Ω)[coth(βħΩ/2) cos Ωτ − i sin Ω|τ|]·exp(−Γ|τ|)`.
    pub fn thermal_mode(
        omega: f64,
        linewidth: f64,
        temperature: f64,
        hbar: f64,
        grid: LagGrid,
    ) -> Result<Self, KernelError> {
        check_positive("omega", omega)?;
        check_positive("temperature", temperature)?;
        check_positive("hbar", hbar)?;
        if !(linewidth >= 0.0) {
            return Err(KernelError::BadParameter(format!(
                "linewidth must be >= 0, got {linewidth}"
            )));
        }
        let amp = hbar / (2.0 * omega);
        let coth = 1.0 / (hbar * omega / (2.0 * temperature)).tanh();
        let samples = grid
            .taus()
            .map(|tau| {
                let envelope = (-linewidth * tau.abs()).exp();
                C64::new(
                    amp * coth * (omega * tau).cos() * envelope,
                    -amp * (omega * tau.abs()).sin() * envelope,
                )
            })
            .collect();
        Ok(Self {
            kind: CorrelatorKind::ThermalMode { omega, linewidth },
            temperature,
            hbar,
            grid,
            samples,
        })
    }

    /// Ohmic bath:
    /// `Re G_F = ∫dω J(ω) coth(βħω/2) cos ωτ`, `Im G_F = −∫dω J(ω) sin ω|τ|`.
    ///
    /// The frequency integrals are done in closed form by expanding
    /// `coth(x/2) = 1 + 2 Σ e^{−nx}` and summing the series with the trigamma
    /// function.
    pub fn ohmic(eta: f64, cutoff: f64, temperature: f64, hbar: f64, grid: LagGrid) -> Result<Self, KernelError> {
        check_positive("eta", eta)?;
        check_positive("cutoff", cutoff)?;
        check_positive("temperature", temperature)?;
        check_positive("hbar", hbar)?;
        let a = 1.0 / cutoff;
        let b = hbar / temperature;
        let samples = grid
            .taus()
            .map(|tau| {
                let t = tau.abs();
                let z = C64::new(a, -t);
                let vacuum = (z * z).inv().re;
                let thermal = 2.0 / (b * b) * trigamma(C64::new(1.0, 0.0) + z / b).re;
                let denom = (a * a + t * t).powi(2);
                C64::new(eta * (vacuum + thermal), -eta * 2.0 * a * t / denom)
            })
            .collect();
        Ok(Self {
            kind: CorrelatorKind::Ohmic { eta, cutoff },
            temperature,
            hbar,
            grid,
            samples,
        })
    }

    /// Wraps externally sampled values, checking the even symmetry of `G_F`.
    pub fn from_samples(
        kind: CorrelatorKind,
        temperature: f64,
        hbar: f64,
        grid: LagGrid,
        samples: Vec<C64>,
    ) -> Result<Self, KernelError> {
        let c = Self {
            kind,
            temperature,
            hbar,
            grid,
            samples,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// Relative defect `max|G(−τ) − G(τ)| / max|G|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.samples.len();
        let scale = self.samples.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        (0..n / 2)
            .map(|k| (self.samples[k] - self.samples[n - 1 - k]).norm())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.samples.len() != self.grid.len() {
            return Err(KernelError::SampleCount {
                got: self.samples.len(),
                want: self.grid.len(),
            });
        }
        let defect = self.symmetry_defect();
        if defect > SYMMETRY_TOL {
            return Err(KernelError::NotSymmetric { defect });
        }
        Ok(())
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), KernelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KernelError::BadParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Trigamma function `ψ'(z) = Σ_{n≥0} (z+n)^{-2}` for `Re z > 0`.
pub fn trigamma(mut z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    while z.norm() < 20.0 {
        acc += (z * z).inv();
        z += 1.0;
    }
    let w = z.inv();
    let w2 = w * w;
    // 1/z + 1/2z² + Σ B_2k / z^{2k+1}
    let series = w2
        * (C64::new(1.0 / 6.0, 0.0)
            + w2 * (C64::new(-1.0 / 30.0, 0.0)
                + w2 * (C64::new(1.0 / 42.0, 0.0)
                    + w2 * (C64::new(-1.0 / 30.0, 0.0) + w2 * C64::new(5.0 / 66.0, 0.0)))));
    acc + w + 0.5 * w2 + w * series
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Noise,
    Dissipation,
}

/// Environment-operator index pair `IJ` of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    #[serde(rename = "22")]
    P22,
    #[serde(rename = "33")]
    P33,
    #[serde(rename = "23")]
    P23,
    #[serde(rename = "32")]
    P32,
}

impl PairLabel {
    pub const ALL: [PairLabel; 4] = [PairLabel::P22, PairLabel::P33, PairLabel::P23, PairLabel::P32];

    pub fn as_str(&self) -> &'static str {
        match self {
            PairLabel::P22 => "22",
            PairLabel::P33 => "33",
            PairLabel::P23 => "23",
            PairLabel::P32 => "32",
        }
    }

    fn is_diagonal(&self) -> bool {
        matches!(self, PairLabel::P22 | PairLabel::P33)
    }
}

impl std::fmt::Display for PairLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Couplings {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Real kernel sampled on a lag grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlocalKernel {
    pub kind: KernelKind,
    pub pair: PairLabel,
    pub grid: LagGrid,
    pub couplings: Couplings,
    values: Vec<f64>,
}

impl NonlocalKernel {
    /// Wraps samples and checks the symmetry (diagonal noise kernels) or
    /// retardation (dissipation kernels) invariant.
    pub fn new(kind: KernelKind, pair: PairLabel, grid: LagGrid, values: Vec<f64>) -> Result<Self, KernelError> {
        let k = Self {
            kind,
            pair,
            grid,
            couplings: Couplings::default(),
            values,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn from_fn(
        kind: KernelKind,
        pair: PairLabel,
        grid: LagGrid,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, KernelError> {
        let values = grid.taus().map(f).collect();
        Self::new(kind, pair, grid, values)
    }

    pub fn zeros(kind: KernelKind, pair: PairLabel, grid: LagGrid) -> Self {
        Self {
            kind,
            pair,
            grid,
            couplings: Couplings::default(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn with_couplings(mut self, couplings: Couplings) -> Self {
        self.couplings = couplings;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at integer lag offset `k` (in grid steps), zero outside the window.
    pub fn at_offset(&self, k: isize) -> f64 {
        let idx = self.grid.zero_index() as isize + k;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Largest `|value|` at the two window edges relative to the peak.
    pub fn edge_ratio(&self) -> f64 {
        let peak = self.peak();
        if peak == 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        self.values[0].abs().max(self.values[n - 1].abs()) / peak
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.values.is_empty() {
            return Err(KernelError::EmptyGrid);
        }
        if self.values.len() != self.grid.len() {
            return Err(KernelError::SampleCount {
                got: self.values.len(),
                want: self.grid.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::BadParameter("kernel has non-finite samples".into()));
        }
        let n = self.values.len();
        let peak = self.peak();
        match self.kind {
            KernelKind::Noise if self.pair.is_diagonal() && peak > 0.0 => {
                let defect = (0..n / 2)
                    .map(|k| (self.values[k] - self.values[n - 1 - k]).abs())
                    .fold(0.0, f64::max)
                    / peak;
                if defect > SYMMETRY_TOL {
                    return Err(KernelError::NoiseNotSymmetric {
                        pair: self.pair,
                        defect,
                    });
                }
            }
            KernelKind::Dissipation => {
                if let Some(k) = (0..self.grid.zero_index()).find(|&k| self.values[k] != 0.0) {
                    return Err(KernelError::NotRetarded {
                        pair: self.pair,
                        tau: self.grid.tau(k),
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Writes `tau,value_re,value_im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,value_re,value_im")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.grid.tau(k), v, 0.0)?;
        }
        Ok(())
    }

    /// Reads `tau,value_re,value_im` rows; the lag grid is inferred from the
    /// `tau` column and must be uniform and symmetric.
    pub fn read_csv<R: BufRead>(r: R, kind: KernelKind, pair: PairLabel) -> Result<Self, KernelError> {
        let mut taus = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| KernelError::Csv(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 0 && line.starts_with("tau") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                return Err(KernelError::Csv(format!("line {}: expected 3 columns", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| KernelError::Csv(format!("line {}: {e}", lineno + 1)))
            };
            taus.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
            if cols.len() > 2 && parse(cols[2])?.abs() > 0.0 {
                log::warn!("kernel {pair}: ignoring nonzero imaginary part on line {}", lineno + 1);
            }
        }
        if taus.len() < 3 || taus.len() % 2 == 0 {
            return Err(KernelError::Csv(format!(
                "need an odd number (>= 3) of lag samples, got {}",
                taus.len()
            )));
        }
        let m = taus.len() / 2;
        let step = (taus[taus.len() - 1] - taus[0]) / (taus.len() - 1) as f64;
        let grid = LagGrid::from_half_points(m, step)?;
        for (k, &t) in taus.iter().enumerate() {
            if (t - grid.tau(k)).abs() > 1e-9 * step.max(1.0) {
                return Err(KernelError::Csv(format!(
                    "lag column is not a uniform symmetric grid (row {k}: {t} vs {})",
                    grid.tau(k)
                )));
            }
        }
        Self::new(kind, pair, grid, values)
    }
}

/// Kernels of the cubic interaction model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicKernels {
    pub noise_psi: NonlocalKernel,
    pub diss_psi: NonlocalKernel,
    pub noise_h: NonlocalKernel,
    pub diss_h: NonlocalKernel,
    pub noise_mixed: NonlocalKernel,
    pub diss_mixed: NonlocalKernel,
}

/// `𝒩ψ = 4λ₂² Re G_F`, `𝒟ψ = 4λ₂² θ Im G_F`, `𝒩h = 8λ₃² Re G_F²`,
/// `𝒟h = 8λ₃² θ Im G_F²`; mixed kernels vanish. `θ(0) = ½`.
pub fn build_cubic_kernels(
    corr: &EnvironmentCorrelator,
    lambda2: f64,
    lambda3: f64,
) -> Result<CubicKernels, KernelError> {
    corr.validate()?;
    let grid = corr.grid;
    let zero = grid.zero_index();
    let theta = |k: usize| {
        if k > zero {
            1.0
        } else if k == zero {
            0.5
        } else {
            0.0
        }
    };
    let g = corr.samples();
    let c2 = 4.0 * lambda2 * lambda2;
    let c3 = 8.0 * lambda3 * lambda3;
    let couplings = Couplings {
        lambda1: 0.0,
        lambda2,
        lambda3,
    };
    let mk = |kind, pair, values: Vec<f64>| {
        NonlocalKernel::new(kind, pair, grid, values).map(|k| k.with_couplings(couplings))
    };
    let noise_psi = mk(KernelKind::Noise, PairLabel::P22, g.iter().map(|z| c2 * z.re).collect())?;
    let diss_psi = mk(
        KernelKind::Dissipation,
        PairLabel::P22,
        g.iter().enumerate().map(|(k, z)| c2 * theta(k) * z.im).collect(),
    )?;
    let noise_h = mk(
        KernelKind::Noise,
        PairLabel::P33,
        g.iter().map(|z| c3 * (z * z).re).collect(),
    )?;
    let diss_h = mk(
        KernelKind::Dissipation,
        PairLabel::P33,
        g.iter().enumerate().map(|(k, z)| c3 * theta(k) * (z * z).im).collect(),
    )?;
    Ok(CubicKernels {
        noise_psi,
        diss_psi,
        noise_h,
        diss_h,
        noise_mixed: NonlocalKernel::zeros(KernelKind::Noise, PairLabel::P23, grid).with_couplings(couplings),
        diss_mixed: NonlocalKernel::zeros(KernelKind::Dissipation, PairLabel::P32, grid).with_couplings(couplings),
    })
}

/// Local moments of a single kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartialMoments {
    /// `n = ½∫𝒩`, `n2 = −¼∫τ²𝒩`.
    Noise { n: f64, n2: f64 },
    /// `d = ½∫𝒟`, `d1 = −½∫τ𝒟`.
    Dissipation { d: f64, d1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentExtraction {
    pub moments: PartialMoments,
    /// Kernel magnitude at the window edge relative to its peak.
    pub edge_ratio: f64,
    /// Whether the kernel decayed to `EDGE_DECAY_TOL` of its peak.
    pub decayed: bool,
}

/// Moments of the equal-time delta expansion of a kernel.
pub fn extract_moments(k: &NonlocalKernel, kind: KernelKind) -> Result<MomentExtraction, KernelError> {
    if k.values.is_empty() || k.values.len() != k.grid.len() {
        return Err(KernelError::EmptyGrid);
    }
    let grid = &k.grid;
    let vals = k.values.iter().copied();
    let zeroth = trapezoid(grid, vals);
    let moments = match kind {
        KernelKind::Noise => {
            let second = trapezoid(grid, k.values.iter().enumerate().map(|(i, v)| grid.tau(i).powi(2) * v));
            PartialMoments::Noise {
                n: 0.5 * zeroth,
                n2: -0.25 * second,
            }
        }
        KernelKind::Dissipation => {
            let first = trapezoid(grid, k.values.iter().enumerate().map(|(i, v)| grid.tau(i) * v));
            PartialMoments::Dissipation {
                d: 0.5 * zeroth,
                d1: -0.5 * first,
            }
        }
    };
    let edge_ratio = k.edge_ratio();
    let decayed = edge_ratio <= EDGE_DECAY_TOL;
    if !decayed {
        log::warn!(
            "kernel {} ({:?}) has not decayed at the window edge: edge/peak = {edge_ratio:.3e}",
            k.pair,
            k.kind
        );
    }
    Ok(MomentExtraction {
        moments,
        edge_ratio,
        decayed,
    })
}

/// The sixteen Markov coefficients of the local kernel expansion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalMoments {
    #[serde(rename = "N22", default)]
    pub n22: f64,
    #[serde(rename = "N33", default)]
    pub n33: f64,
    #[serde(rename = "N23", default)]
    pub n23: f64,
    #[serde(rename = "N32", default)]
    pub n32: f64,
    #[serde(rename = "N22_2", default)]
    pub n22_2: f64,
    #[serde(rename = "N33_2", default)]
    pub n33_2: f64,
    #[serde(rename = "N23_2", default)]
    pub n23_2: f64,
    #[serde(rename = "N32_2", default)]
    pub n32_2: f64,
    #[serde(rename = "D22", default)]
    pub d22: f64,
    #[serde(rename = "D33", default)]
    pub d33: f64,
    #[serde(rename = "D23", default)]
    pub d23: f64,
    #[serde(rename = "D32", default)]
    pub d32: f64,
    #[serde(rename = "D22_1", default)]
    pub d22_1: f64,
    #[serde(rename = "D33_1", default)]
    pub d33_1: f64,
    #[serde(rename = "D23_1", default)]
    pub d23_1: f64,
    #[serde(rename = "D32_1", default)]
    pub d32_1: f64,
}

impl LocalMoments {
    /// Stores the moments of one kernel under its pair label.
    pub fn set(&mut self, pair: PairLabel, m: PartialMoments) {
        match (pair, m) {
            (PairLabel::P22, PartialMoments::Noise { n, n2 }) => (self.n22, self.n22_2) = (n, n2),
            (PairLabel::P33, PartialMoments::Noise { n, n2 }) => (self.n33, self.n33_2) = (n, n2),
            (PairLabel::P23, PartialMoments::Noise { n, n2 }) => (self.n23, self.n23_2) = (n, n2),
            (PairLabel::P32, PartialMoments::Noise { n, n2 }) => (self.n32, self.n32_2) = (n, n2),
            (PairLabel::P22, PartialMoments::Dissipation { d, d1 }) => (self.d22, self.d22_1) = (d, d1),
            (PairLabel::P33, PartialMoments::Dissipation { d, d1 }) => (self.d33, self.d33_1) = (d, d1),
            (PairLabel::P23, PartialMoments::Dissipation { d, d1 }) => (self.d23, self.d23_1) = (d, d1),
            (PairLabel::P32, PartialMoments::Dissipation { d, d1 }) => (self.d32, self.d32_1) = (d, d1),
        }
    }

    /// `(N_IJ, D⁽¹⁾_IJ)` for a pair.
    pub fn noise_and_first_dissipation(&self, pair: PairLabel) -> (f64, f64) {
        match pair {
            PairLabel::P22 => (self.n22, self.d22_1),
            PairLabel::P33 => (self.n33, self.d33_1),
            PairLabel::P23 => (self.n23, self.d23_1),
            PairLabel::P32 => (self.n32, self.d32_1),
        }
    }

    /// Moments of the cubic model, extracted kernel by kernel. The mixed pairs
    /// are filled from the (zero) mixed kernels.
    pub fn from_cubic(k: &CubicKernels) -> Result<(Self, Vec<MomentExtraction>), KernelError> {
        let mut m = LocalMoments::default();
        let mut reports = Vec::new();
        for kernel in [&k.noise_psi, &k.diss_psi, &k.noise_h, &k.diss_h] {
            let ex = extract_moments(kernel, kernel.kind)?;
            m.set(kernel.pair, ex.moments);
            reports.push(ex);
        }
        for (kernel, pairs) in [
            (&k.noise_mixed, [PairLabel::P23, PairLabel::P32]),
            (&k.diss_mixed, [PairLabel::P23, PairLabel::P32]),
        ] {
            let ex = extract_moments(kernel, kernel.kind)?;
            for p in pairs {
                m.set(p, ex.moments);
            }
        }
        Ok((m, reports))
    }

    /// White-noise truncation: keeps only the zeroth noise moments `N_IJ`.
    pub fn white_noise(&self) -> Self {
        LocalMoments {
            n22: self.n22,
            n33: self.n33,
            n23: self.n23,
            n32: self.n32,
            ..Default::default()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for v in out.values_mut() {
            *v *= s;
        }
        out
    }

    fn values_mut(&mut self) -> [&mut f64; 16] {
        [
            &mut self.n22,
            &mut self.n33,
            &mut self.n23,
            &mut self.n32,
            &mut self.n22_2,
            &mut self.n33_2,
            &mut self.n23_2,
            &mut self.n32_2,
            &mut self.d22,
            &mut self.d33,
            &mut self.d23,
            &mut self.d32,
            &mut self.d22_1,
            &mut self.d33_1,
            &mut self.d23_1,
            &mut self.d32_1,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrEntry {
    pub pair: PairLabel,
    pub ratio: Option<f64>,
    pub status: FdrStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrReport {
    pub entries: Vec<FdrEntry>,
    /// True iff every applicable pair passes.
    pub pass: bool,
}

impl FdrReport {
    pub fn entry(&self, pair: PairLabel) -> Option<&FdrEntry> {
        self.entries.iter().find(|e| e.pair == pair)
    }
}

/// Checks `N_IJ ≈ (4T/ħ) D⁽¹⁾_IJ` through `r = ħN/(4T D⁽¹⁾)` per pair.
pub fn fdr_check(m: &LocalMoments, temperature: f64, hbar: f64) -> Result<FdrReport, KernelError> {
    check_positive("temperature", temperature)?;
    check_positive("hbar", hbar)?;
    let entries: Vec<FdrEntry> = PairLabel::ALL
        .iter()
        .map(|&pair| {
            let (n, d1) = m.noise_and_first_dissipation(pair);
            if d1 == 0.0 {
                FdrEntry {
                    pair,
                    ratio: None,
                    status: FdrStatus::NotApplicable,
                }
            } else {
                let r = hbar * n / (4.0 * temperature * d1);
                let status = if (r - 1.0).abs() <= FDR_WINDOW {
                    FdrStatus::Pass
                } else {
                    FdrStatus::Fail
                };
                FdrEntry {
                    pair,
                    ratio: Some(r),
                    status,
                }
            }
        })
        .collect();
    let pass = entries.iter().all(|e| e.status != FdrStatus::Fail);
    Ok(FdrReport { entries, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(amp: f64, sigma: f64) -> impl Fn(f64) -> f64 {
        move |t| amp * (-t * t / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn lag_grid_layout() {
        let g = LagGrid::new(1.0, 0.25).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.tau(0), -1.0);
        assert_eq!(g.tau(g.zero_index()), 0.0);
        assert!(LagGrid::new(-1.0, 0.1).is_err());
        assert!(LagGrid::new(1.0, 0.0).is_err());
    }

    #[test]
    fn trigamma_matches_direct_series() {
        for z in [
            C64::new(1.3, 0.0),
            C64::new(2.0, -3.5),
            C64::new(1.01, 40.0),
            C64::new(150.0, -7.0),
        ] {
            // Direct partial sum with the integral tail ∫_N^∞ dn/(z+n)² = 1/(z+N) and
            // the Euler–Maclaurin half-term.
            let n_terms = 200_000;
            let mut direct = C64::new(0.0, 0.0);
            for n in 0..n_terms {
                let w = z + n as f64;
                direct += (w * w).inv();
            }
            let tail_start = z + n_terms as f64;
            direct += tail_start.inv() + 0.5 * (tail_start * tail_start).inv();
            let got = trigamma(z);
            assert!(
                (got - direct).norm() < 1e-10 * direct.norm(),
                "z = {z}: {got} vs {direct}"
            );
        }
    }

    #[test]
    fn ohmic_correlator_matches_frequency_quadrature() {
        // Independent route: Simpson quadrature of ∫dω J(ω)coth(βħω/2)cos ωτ.
        let (eta, cutoff, hbar) = (0.3, 2.0, 1.0);
        for temperature in [0.2, 5.0] {
            let grid = LagGrid::new(3.0, 0.5).unwrap();
            let c = EnvironmentCorrelator::ohmic(eta, cutoff, temperature, hbar, grid).unwrap();
            for (k, tau) in grid.taus().enumerate() {
                let n = 400_000;
                let w_max = 60.0 * cutoff;
                let h = w_max / n as f64;
                let f = |w: f64| {
                    if w == 0.0 {
                        eta * 2.0 * temperature / hbar
                    } else {
                        eta * w * (-w / cutoff).exp() / (hbar * w / (2.0 * temperature)).tanh() * (w * tau).cos()
                    }
                };
                let g = |w: f64| -eta * w * (-w / cutoff).exp() * (w * tau.abs()).sin();
                let simpson = |f: &dyn Fn(f64) -> f64| {
                    let mut s = f(0.0) + f(w_max);
                    for i in 1..n {
                        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                    }
                    s * h / 3.0
                };
                let re = simpson(&f);
                let im = simpson(&g);
                let got = c.samples()[k];
                assert!(
                    (got.re - re).abs() < 1e-8 * re.abs().max(1.0),
                    "T={temperature} τ={tau}: {} vs {re}",
                    got.re
                );
                assert!(
                    (got.im - im).abs() < 1e-8,
                    "T={temperature} τ={tau}: {} vs {im}",
                    got.im
                );
            }
        }
    }

    #[test]
    fn correlators_are_even() {
        let g = LagGrid::new(5.0, 0.01).unwrap();
        let th = EnvironmentCorrelator::thermal_mode(1.0, 0.1, 0.5, 1.0, g).unwrap();
        assert!(th.symmetry_defect() <= SYMMETRY_TOL);
        let oh = EnvironmentCorrelator::ohmic(1.0, 1.0, 0.5, 1.0, g).unwrap();
        assert!(oh.symmetry_defect() <= SYMMETRY_TOL);
        let mut bad: Vec<C64> = th.samples().to_vec();
        bad[3] += C64::new(0.0, 1e-3);
        assert!(matches!(
            EnvironmentCorrelator::from_samples(th.kind, 0.5, 1.0, g, bad),
            Err(KernelError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn cubic_kernels_examples() {
        let g = LagGrid::new(5.0, 0.01).unwrap();
        let (omega, temperature, hbar) = (1.3, 0.7, 0.9);
        let corr = EnvironmentCorrelator::thermal_mode(omega, 0.0, temperature, hbar, g).unwrap();

        let k = build_cubic_kernels(&corr, 0.0, 0.4).unwrap();
        assert!(k.noise_psi.values().iter().all(|&v| v == 0.0));
        assert!(k.diss_psi.values().iter().all(|&v| v == 0.0));

        let l2 = 0.6;
        let k = build_cubic_kernels(&corr, l2, 0.4).unwrap();
        let want = 4.0 * l2 * l2 * hbar / (2.0 * omega) / (hbar * omega / (2.0 * temperature)).tanh();
        let got = k.noise_psi.values()[g.zero_index()];
        assert!((got - want).abs() < 1e-14 * want);

        // Pointwise complex square against an independent evaluation of G_F.
        let l3 = 0.4;
        for (i, tau) in g.taus().enumerate().step_by(37) {
            let amp = hbar / (2.0 * omega);
            let coth = 1.0 / (hbar * omega / (2.0 * temperature)).tanh();
            let re = amp * coth * (omega * tau).cos();
            let im = -amp * (omega * tau.abs()).sin();
            let want = 8.0 * l3 * l3 * (re * re - im * im);
            assert!((k.noise_h.values()[i] - want).abs() < 1e-13);
            let theta = if tau > 0.0 {
                1.0
            } else if tau == 0.0 {
                0.5
            } else {
                0.0
            };
            let want_d = 8.0 * l3 * l3 * theta * 2.0 * re * im;
            assert!((k.diss_h.values()[i] - want_d).abs() < 1e-13);
        }
        assert!(k.noise_mixed.values().iter().all(|&v| v == 0.0));
        assert!(k.diss_mixed.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_noise_moments() {
        let (amp, sigma) = (1.7, 0.3);
        let g = LagGrid::new(12.0 * sigma, sigma / 50.0).unwrap();
        let k = NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P22, g, gaussian(amp, sigma)).unwrap();
        let ex = extract_moments(&k, KernelKind::Noise).unwrap();
        let root = (2.0 * std::f64::consts::PI).sqrt();
        let PartialMoments::Noise { n, n2 } = ex.moments else {
            panic!()
        };
        assert!((n - amp * sigma * root / 2.0).abs() < 1e-12 * n.abs());
        assert!((n2 + amp * sigma.powi(3) * root / 4.0).abs() < 1e-12 * n2.abs());
        assert!(ex.decayed);
    }

    #[test]
    fn zero_kernel_has_zero_moments() {
        let g = LagGrid::new(1.0, 0.1).unwrap();
        let k = NonlocalKernel::zeros(KernelKind::Dissipation, PairLabel::P33, g);
        let ex = extract_moments(&k, KernelKind::Dissipation).unwrap();
        assert_eq!(ex.moments, PartialMoments::Dissipation { d: 0.0, d1: 0.0 });
        let ex = extract_moments(&k, KernelKind::Noise).unwrap();
        assert_eq!(ex.moments, PartialMoments::Noise { n: 0.0, n2: 0.0 });
    }

    #[test]
    fn undecayed_kernel_is_flagged() {
        let g = LagGrid::new(1.0, 0.01).unwrap();
        let k = NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P22, g, gaussian(1.0, 1.0)).unwrap();
        assert!(!extract_moments(&k, KernelKind::Noise).unwrap().decayed);
    }

    #[test]
    fn odd_moment_of_symmetric_noise_kernel_vanishes() {
        let g = LagGrid::new(10.0, 0.01).unwrap();
        let f = |t: f64| (1.0 + 0.3 * t * t) * (-t.abs()).exp() * (2.0 * t).cos();
        let k = NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P33, g, f).unwrap();
        let odd = trapezoid(&g, k.values().iter().enumerate().map(|(i, v)| g.tau(i) * v));
        assert!(odd.abs() < 1e-13);
    }

    #[test]
    fn kernel_invariants_are_enforced() {
        let g = LagGrid::new(1.0, 0.1).unwrap();
        let e = NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P22, g, |t| t.exp());
        assert!(matches!(e, Err(KernelError::NoiseNotSymmetric { .. })));
        let e = NonlocalKernel::from_fn(KernelKind::Dissipation, PairLabel::P22, g, |t| t.cos());
        assert!(matches!(e, Err(KernelError::NotRetarded { .. })));
        // Mixed noise kernels need not be even.
        assert!(NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P23, g, |t| t.exp()).is_ok());
    }

    #[test]
    fn fdr_examples() {
        let (t, hbar) = (0.8, 1.1);
        let m = LocalMoments {
            n22: 4.0 * t * 0.3 / hbar,
            d22_1: 0.3,
            n33: 2.0,
            ..Default::default()
        };
        let r = fdr_check(&m, t, hbar).unwrap();
        let e = r.entry(PairLabel::P22).unwrap();
        assert!((e.ratio.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(e.status, FdrStatus::Pass);
        assert_eq!(r.entry(PairLabel::P33).unwrap().status, FdrStatus::NotApplicable);
        assert!(r.pass);
        assert!(fdr_check(&m, 0.0, hbar).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = LagGrid::new(2.0, 0.5).unwrap();
        let k = NonlocalKernel::from_fn(KernelKind::Noise, PairLabel::P33, g, gaussian(2.0, 0.7)).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let back = NonlocalKernel::read_csv(&buf[..], KernelKind::Noise, PairLabel::P33).unwrap();
        assert_eq!(back.grid, k.grid);
        for (a, b) in back.values().iter().zip(k.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_json_uses_flat_keys() {
        let m = LocalMoments {
            n33_2: 0.25,
            ..Default::default()
        };
        let v: serde_json::Value = serde_json::to_value(m).unwrap();
        assert_eq!(v["N33_2"], 0.25);
        assert_eq!(v.as_object().unwrap().len(), 16);
        assert!(serde_json::from_str::<LocalMoments>(r#"{"N22": 1, "typo": 2}"#).is_err());
    }
}
