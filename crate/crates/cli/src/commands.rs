// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Command implementations and the pieces they share. Each command writes
//! its artifacts into a run directory; the manifest is written last, even
//! when the command fails.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use cqsim_core::cq_coeffs::{assemble, to_oppenheim, CQCoefficients};
use cqsim_core::cq_master::{evolve, EvolutionConfig, EvolveError, Generator};
use cqsim_core::kernels::{
    build_cubic_kernels, extract_moments, fdr_check, CubicKernels, EnvironmentCorrelator, FdrReport, KernelKind,
    LagGrid, LocalMoments, MomentExtraction, NonlocalKernel, PairLabel, PartialMoments,
};
use cqsim_core::positivity::{
    check_markov_cp, check_nonmarkov_kernel, check_tradeoff, CertReport, MarkovCpReport, NonMarkovKernels,
    NonMarkovReport, TimeGrid, Verdict,
};
use cqsim_core::semi_wigner::SemiWignerState;
use cqsim_core::unraveling::{compare, ensemble_average, Comparison, UnravelError};

use crate::config::{
    parse_config, preset_config, CorrelatorName, EnvironmentSection, InitialShape, MomentSource, RunConfig,
};
use crate::output::{evolution_csv, read_table, sha256_hex, table_csv, Manifest, RunDir};
use crate::{presets, CliError, Command, Common, EXIT_CP, EXIT_OK};

/// Default number of evaluation points of `check-kernel`.
pub const DEFAULT_KERNEL_POINTS: usize = 400;

struct Ctx {
    config: Option<RunConfig>,
    run: RunDir,
    seed: Option<u64>,
}

impl Ctx {
    fn config(&self) -> &RunConfig {
        self.config.as_ref().expect("command requires a config")
    }

    fn moments(&mut self) -> Result<MomentReport, CliError> {
        let cfg = self.config.as_ref().expect("command requires a config");
        resolve_moments(cfg, Some(&mut self.run))
    }
}

fn load(common: &Common, required: bool) -> Result<Option<RunConfig>, CliError> {
    match (&common.config, &common.preset) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either --config or --preset; a config file can name its preset with scenario = \"...\"".into(),
        )),
        (Some(p), None) => Ok(Some(parse_config(p)?)),
        (None, Some(name)) => Ok(Some(preset_config(name)?)),
        (None, None) if required => Err(CliError::Usage(
            "a config is required: pass --config FILE or --preset NAME".into(),
        )),
        (None, None) => Ok(None),
    }
}

/// Runs a parsed command; `argv` is recorded in the manifest.
pub fn dispatch(cmd: Command, argv: &[String]) -> Result<i32, CliError> {
    let name = cmd.name();
    let (config, out) = match &cmd {
        Command::Presets => {
            for p in presets::all() {
                emit(&format!("{:<18} {}", p.name, p.description));
            }
            return Ok(EXIT_OK);
        }
        Command::Compare { out, .. } => (None, out.clone()),
        Command::CheckKernel { common, .. } => (load(common, false)?, common.out.clone()),
        Command::Coeffs(c) | Command::Moments(c) | Command::CheckTradeoff(c) | Command::Evolve(c) => {
            (load(c, true)?, c.out.clone())
        }
        Command::Unravel { common, .. } => (load(common, true)?, common.out.clone()),
    };
    let canonical = config.as_ref().map(RunConfig::canonical_toml);
    let config_hash = canonical.as_ref().map(|c| sha256_hex(c.as_bytes()));
    let dir = out.unwrap_or_else(|| {
        let key = config_hash
            .clone()
            .unwrap_or_else(|| sha256_hex(argv[1..].join("\u{1f}").as_bytes()));
        PathBuf::from("runs").join(format!("{name}-{}", &key[..12]))
    });
    let mut run = RunDir::create(&dir)?;
    if let Some(text) = &canonical {
        run.write("config.toml", text.as_bytes())?;
    }
    let mut ctx = Ctx {
        config,
        run,
        seed: None,
    };
    let result = match cmd {
        Command::Coeffs(_) => cmd_coeffs(&mut ctx),
        Command::Moments(_) => cmd_moments(&mut ctx),
        Command::CheckTradeoff(_) => cmd_check_tradeoff(&mut ctx),
        Command::CheckKernel {
            kernels,
            lambda1,
            hbar,
            points,
            ..
        } => cmd_check_kernel(&mut ctx, kernels, lambda1, hbar, points),
        Command::Evolve(_) => cmd_evolve(&mut ctx),
        Command::Unravel {
            trajectories,
            seed,
            reference,
            threshold,
            ..
        } => cmd_unravel(&mut ctx, trajectories, seed, reference, threshold),
        Command::Compare {
            reference,
            estimate,
            threshold,
            ..
        } => cmd_compare(&mut ctx, &reference, &estimate, threshold),
        Command::Presets => unreachable!(),
    };
    let exit_code = match &result {
        Ok(c) => *c,
        Err(e) => e.exit_code(),
    };
    let manifest = Manifest {
        tool: "cqsim",
        version: env!("CARGO_PKG_VERSION"),
        command: name.to_string(),
        args: argv.to_vec(),
        scenario: ctx.config.as_ref().and_then(|c| c.scenario.clone()),
        config_hash,
        config: canonical,
        seed: ctx.seed,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        exit_code,
    };
    ctx.run.finish(manifest)?;
    eprintln!("run directory: {}", dir.display());
    result
}

/// Moments with the diagnostics of how they were obtained.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub source: &'static str,
    pub moments: LocalMoments,
    pub extractions: BTreeMap<String, MomentExtraction>,
    pub fdr: Option<FdrReport>,
}

fn kernel_file(kind: KernelKind, pair: PairLabel) -> String {
    let k = match kind {
        KernelKind::Noise => "noise",
        KernelKind::Dissipation => "dissipation",
    };
    format!("{k}_{pair}.csv")
}

/// Kernels of the cubic model for an environment correlator.
pub fn environment_kernels(e: &EnvironmentSection, hbar: f64) -> Result<CubicKernels, CliError> {
    let input = |err: cqsim_core::kernels::KernelError| CliError::Input(format!("[environment]: {err}"));
    let scale = match e.correlator {
        CorrelatorName::ThermalMode => e.omega.expect("validated"),
        CorrelatorName::Ohmic => e.cutoff.expect("validated"),
    };
    let grid = LagGrid::new(e.window.unwrap_or(50.0 / scale), e.step.unwrap_or(0.01 / scale)).map_err(input)?;
    let corr = match e.correlator {
        CorrelatorName::ThermalMode => {
            EnvironmentCorrelator::thermal_mode(scale, e.linewidth, e.temperature, hbar, grid)
        }
        CorrelatorName::Ohmic => {
            EnvironmentCorrelator::ohmic(e.eta.expect("validated"), scale, e.temperature, hbar, grid)
        }
    }
    .map_err(input)?;
    build_cubic_kernels(&corr, e.lambda2, e.lambda3).map_err(input)
}

fn cubic_list(k: &CubicKernels) -> Vec<NonlocalKernel> {
    let mut mixed_noise_32 = k.noise_mixed.clone();
    mixed_noise_32.pair = PairLabel::P32;
    let mut mixed_diss_23 = k.diss_mixed.clone();
    mixed_diss_23.pair = PairLabel::P23;
    vec![
        k.noise_psi.clone(),
        k.diss_psi.clone(),
        k.noise_h.clone(),
        k.diss_h.clone(),
        k.noise_mixed.clone(),
        mixed_noise_32,
        mixed_diss_23,
        k.diss_mixed.clone(),
    ]
}

/// Reads every `<kind>_<pair>.csv` present in `dir`; all must share one lag grid.
pub fn read_kernel_dir(dir: &Path, mut run: Option<&mut RunDir>) -> Result<Vec<NonlocalKernel>, CliError> {
    let mut out: Vec<NonlocalKernel> = Vec::new();
    for kind in [KernelKind::Noise, KernelKind::Dissipation] {
        for pair in PairLabel::ALL {
            let name = kernel_file(kind, pair);
            let path = dir.join(&name);
            if !path.is_file() {
                continue;
            }
            let bytes = match run.as_deref_mut() {
                Some(r) => r.read_input(&path)?,
                None => std::fs::read(&path).map_err(|e| CliError::io(&path, e))?,
            };
            let k = NonlocalKernel::read_csv(BufReader::new(bytes.as_slice()), kind, pair)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if let Some(first) = out.first() {
                if !k.grid.same_as(&first.grid) {
                    return Err(CliError::Input(format!(
                        "{name} uses a different lag grid from the other kernels"
                    )));
                }
            }
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "no kernel files in {} (expected names like noise_22.csv, dissipation_33.csv)",
            dir.display()
        )));
    }
    Ok(out)
}

fn find(kernels: &[NonlocalKernel], kind: KernelKind, pair: PairLabel) -> Option<&NonlocalKernel> {
    kernels.iter().find(|k| k.kind == kind && k.pair == pair)
}

fn moments_from_kernels(
    kernels: &[NonlocalKernel],
) -> Result<(LocalMoments, BTreeMap<String, MomentExtraction>), CliError> {
    let mut m = LocalMoments::default();
    let mut ex = BTreeMap::new();
    for k in kernels {
        let e = extract_moments(k, k.kind).map_err(|e| CliError::Input(e.to_string()))?;
        if !e.decayed {
            log::warn!(
                "kernel {} has not decayed at the window edge (edge/peak = {:.2e}); moments are truncated",
                kernel_file(k.kind, k.pair),
                e.edge_ratio
            );
        }
        m.set(k.pair, e.moments);
        ex.insert(kernel_file(k.kind, k.pair).trim_end_matches(".csv").to_string(), e);
    }
    // 𝒩23(τ) = 𝒩32(−τ): one mixed noise file fixes both moment pairs.
    let has = |p| find(kernels, KernelKind::Noise, p).is_some();
    if has(PairLabel::P23) != has(PairLabel::P32) {
        let (n, n2) = if has(PairLabel::P23) {
            (m.n23, m.n23_2)
        } else {
            (m.n32, m.n32_2)
        };
        m.set(PairLabel::P23, PartialMoments::Noise { n, n2 });
        m.set(PairLabel::P32, PartialMoments::Noise { n, n2 });
    }
    Ok((m, ex))
}

/// Local moments of the configured source.
pub fn resolve_moments(cfg: &RunConfig, run: Option<&mut RunDir>) -> Result<MomentReport, CliError> {
    match &cfg.source {
        MomentSource::Moments(m) => Ok(MomentReport {
            source: "moments",
            moments: *m,
            extractions: BTreeMap::new(),
            fdr: None,
        }),
        MomentSource::Kernels(dir) => {
            let kernels = read_kernel_dir(dir, run)?;
            let (moments, extractions) = moments_from_kernels(&kernels)?;
            Ok(MomentReport {
                source: "kernels",
                moments,
                extractions,
                fdr: None,
            })
        }
        MomentSource::Environment(e) => {
            let kernels = environment_kernels(e, cfg.model.hbar)?;
            let (moments, extractions) = moments_from_kernels(&cubic_list(&kernels))?;
            let fdr = fdr_check(&moments, e.temperature, cfg.model.hbar).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(MomentReport {
                source: "environment",
                moments,
                extractions,
                fdr: Some(fdr),
            })
        }
    }
}

/// Generator coefficients of a config.
pub fn coefficients(cfg: &RunConfig) -> Result<CQCoefficients, CliError> {
    let m = resolve_moments(cfg, None)?;
    assemble(&m.moments, &cfg.model).map_err(|e| CliError::Input(e.to_string()))
}

fn require<'a, T>(section: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("`{command}` needs a [{name}] section")))
}

/// Initial semi-Wigner state of a config.
pub fn initial_state(cfg: &RunConfig, command: &str) -> Result<SemiWignerState, CliError> {
    let grid = *require(&cfg.grid, "grid", command)?;
    let i = require(&cfg.initial, "initial", command)?;
    let w = match i.shape {
        InitialShape::Gaussian => SemiWignerState::init_gaussian_product(
            grid,
            i.h0,
            i.pi0,
            i.sigma_h.expect("validated"),
            i.sigma_pi.expect("validated"),
            &i.rho,
        ),
        InitialShape::PointMass => SemiWignerState::point_mass(grid, i.h0, i.pi0, &i.rho),
    };
    w.map_err(|e| CliError::Input(format!("[initial]: {e}")))
}

/// Evolution settings of a config, with the automatic step resolved.
pub fn evolution_config(cfg: &RunConfig, coeffs: &CQCoefficients) -> Result<EvolutionConfig, CliError> {
    let grid = require(&cfg.grid, "grid", "evolve")?;
    let e = require(&cfg.evolution, "evolution", "evolve")?;
    let stencil = e.hybrid_stencil.unwrap_or_default();
    let max_dt = Generator::new(coeffs)
        .with_stencil(stencil)
        .stability_limits(grid)
        .max_dt();
    Ok(e.resolve(max_dt))
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn print_json<T: Serialize>(v: &T) {
    emit(&serde_json::to_string_pretty(v).expect("reports serialize"));
}

#[derive(Serialize)]
struct CoeffsOutput<'a> {
    moments: &'a LocalMoments,
    coefficients: &'a CQCoefficients,
    oppenheim: cqsim_core::cq_coeffs::OppenheimBlocks,
}

fn cmd_coeffs(ctx: &mut Ctx) -> Result<i32, CliError> {
    let m = ctx.moments()?;
    let c = assemble(&m.moments, &ctx.config().model).map_err(|e| CliError::Input(e.to_string()))?;
    let out = CoeffsOutput {
        moments: &m.moments,
        coefficients: &c,
        oppenheim: to_oppenheim(&c),
    };
    ctx.run.write_json("coeffs.json", &out)?;
    print_json(&out);
    Ok(EXIT_OK)
}

fn cmd_moments(ctx: &mut Ctx) -> Result<i32, CliError> {
    let report = ctx.moments()?;
    if let MomentSource::Environment(e) = &ctx.config().source {
        let kernels = environment_kernels(e, ctx.config().model.hbar)?;
        for k in cubic_list(&kernels) {
            let mut buf = Vec::new();
            k.write_csv(&mut buf).map_err(|e| CliError::io(ctx.run.path(), e))?;
            ctx.run
                .write(&format!("kernels/{}", kernel_file(k.kind, k.pair)), &buf)?;
        }
    }
    ctx.run.write_json("moments.json", &report)?;
    print_json(&report);
    Ok(EXIT_OK)
}

/// Output of `check-tradeoff`.
#[derive(Debug, Clone, Serialize)]
pub struct TradeoffOutput {
    pub verdict: Verdict,
    pub markov: MarkovCpReport,
    /// `None` when the blocks are not a valid generator at all.
    pub tradeoff: Option<CertReport>,
    pub tradeoff_error: Option<String>,
    /// Whether both certificates reach the same verdict.
    pub agree: bool,
}

pub fn tradeoff_report(c: &CQCoefficients) -> TradeoffOutput {
    let markov = check_markov_cp(c);
    let (tradeoff, tradeoff_error) = match check_tradeoff(&to_oppenheim(c)) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let t_pass = tradeoff
        .as_ref()
        .is_some_and(|r| r.verdict.is_pass() && markov.classical.verdict.is_pass());
    let pass = markov.pass() && t_pass;
    TradeoffOutput {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        agree: markov.pass() == t_pass,
        markov,
        tradeoff,
        tradeoff_error,
    }
}

fn cmd_check_tradeoff(ctx: &mut Ctx) -> Result<i32, CliError> {
    let m = ctx.moments()?;
    let c = assemble(&m.moments, &ctx.config().model).map_err(|e| CliError::Input(e.to_string()))?;
    let out = tradeoff_report(&c);
    ctx.run.write_json("cert.json", &out)?;
    print_json(&out);
    if !out.agree {
        log::warn!("the Schur-form and trade-off certificates disagree");
    }
    Ok(if out.verdict.is_pass() { EXIT_OK } else { EXIT_CP })
}

#[derive(Serialize)]
struct KernelCertOutput {
    verdict: Verdict,
    lambda1: f64,
    hbar: f64,
    time_grid: TimeGrid,
    report: NonMarkovReport,
}

fn cmd_check_kernel(
    ctx: &mut Ctx,
    dir: Option<PathBuf>,
    lambda1: Option<f64>,
    hbar: Option<f64>,
    points: Option<usize>,
) -> Result<i32, CliError> {
    let kernels = match (&dir, ctx.config.as_ref().map(|c| &c.source)) {
        (Some(d), _) => read_kernel_dir(d, Some(&mut ctx.run))?,
        (None, Some(MomentSource::Kernels(d))) => {
            let d = d.clone();
            read_kernel_dir(&d, Some(&mut ctx.run))?
        }
        (None, Some(MomentSource::Environment(e))) => cubic_list(&environment_kernels(e, ctx.config().model.hbar)?),
        _ => {
            return Err(CliError::Usage(
                "check-kernel needs kernels: pass --kernels DIR or a config with [kernels] or [environment]".into(),
            ))
        }
    };
    let model = ctx.config.as_ref().map(|c| &c.model);
    let lambda1 = lambda1
        .or(model.map(|m| m.lambda1))
        .ok_or_else(|| CliError::Usage("check-kernel needs --lambda1 or a config with [model]".into()))?;
    let hbar = hbar.or(model.map(|m| m.hbar)).unwrap_or(1.0);
    if !(hbar > 0.0) {
        return Err(CliError::Usage(format!("hbar must be positive, got {hbar}")));
    }
    let get = |kind, pair| find(&kernels, kind, pair).cloned();
    let missing = |name: &str| CliError::Input(format!("check-kernel needs the {name} kernel"));
    let nk = NonMarkovKernels {
        n22: get(KernelKind::Noise, PairLabel::P22).ok_or_else(|| missing("noise_22"))?,
        d22: get(KernelKind::Dissipation, PairLabel::P22),
        n23: get(KernelKind::Noise, PairLabel::P23),
        n32: get(KernelKind::Noise, PairLabel::P32),
        d32: get(KernelKind::Dissipation, PairLabel::P32),
        n33r: get(KernelKind::Noise, PairLabel::P33).ok_or_else(|| missing("noise_33"))?,
    };
    let lag = nk.n22.grid;
    let points = points
        .or(ctx.config.as_ref().and_then(|c| c.check_kernel.points))
        .unwrap_or_else(|| (lag.half_points() + 1).min(DEFAULT_KERNEL_POINTS));
    if points == 0 || points > lag.half_points() + 1 {
        return Err(CliError::Usage(format!(
            "points must be between 1 and {} for this lag window",
            lag.half_points() + 1
        )));
    }
    let time_grid = TimeGrid { points, dt: lag.step() };
    let report = check_nonmarkov_kernel(&nk, lambda1, hbar, time_grid).map_err(|e| CliError::Input(e.to_string()))?;
    let out = KernelCertOutput {
        verdict: if report.pass() { Verdict::Pass } else { Verdict::Fail },
        lambda1,
        hbar,
        time_grid,
        report,
    };
    ctx.run.write_json("kernel_cert.json", &out)?;
    print_json(&out);
    Ok(if out.verdict.is_pass() { EXIT_OK } else { EXIT_CP })
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    evolution: &'a EvolutionConfig,
    stability: cqsim_core::cq_master::StabilityLimits,
    lattice: cqsim_core::cq_master::LatticeCpReport,
    markov_cp: Verdict,
    completed: bool,
    abort: Option<String>,
    max_trace_drift: f64,
    max_hermiticity_defect: f64,
    min_eigenvalue: f64,
    records: usize,
}

fn cmd_evolve(ctx: &mut Ctx) -> Result<i32, CliError> {
    let m = ctx.moments()?;
    let cfg = ctx.config();
    let c = assemble(&m.moments, &cfg.model).map_err(|e| CliError::Input(e.to_string()))?;
    let w0 = initial_state(cfg, "evolve")?;
    let ev = evolution_config(cfg, &c)?;
    let cp = check_markov_cp(&c);
    if !cp.pass() {
        log::warn!("the configured dynamics are not certified completely positive");
    }
    let gen = Generator::new(&c).with_stencil(ev.hybrid_stencil);
    let stability = gen.stability_limits(&w0.grid);
    let lattice = gen.lattice_cp_report(&w0.grid);
    let observables = cfg.observables.clone();
    let (result, abort) = match evolve(&w0, &c, &ev, &observables) {
        Ok(r) => (r, None),
        Err(EvolveError::Aborted {
            reason,
            t,
            detail,
            partial,
        }) => (*partial, Some(format!("{reason:?} at t = {t}: {detail}"))),
        Err(e @ (EvolveError::Cfl { .. } | EvolveError::Config(_) | EvolveError::Dimension { .. })) => {
            return Err(CliError::Input(e.to_string()))
        }
    };
    ctx.run.write("observables.csv", &evolution_csv(&result))?;
    if let Some(w) = &result.final_state {
        let mut buf = Vec::new();
        w.write_density_csv(&mut buf)
            .map_err(|e| CliError::io(ctx.run.path(), e))?;
        ctx.run.write("final_density.csv", &buf)?;
    }
    let summary = EvolveSummary {
        evolution: &ev,
        stability,
        lattice,
        markov_cp: if cp.pass() { Verdict::Pass } else { Verdict::Fail },
        completed: abort.is_none(),
        abort: abort.clone(),
        max_trace_drift: result.max_trace_drift,
        max_hermiticity_defect: result.max_hermiticity_defect,
        min_eigenvalue: result.min_eigenvalue,
        records: result.records.len(),
    };
    ctx.run.write_json("summary.json", &summary)?;
    emit(&format!(
        "evolve: {} records, max trace drift {:.3e}, max hermiticity defect {:.3e}, min eigenvalue {:.3e}",
        result.records.len(),
        result.max_trace_drift,
        result.max_hermiticity_defect,
        result.min_eigenvalue
    ));
    match abort {
        Some(a) => Err(CliError::Numerical(a)),
        None => Ok(EXIT_OK),
    }
}

/// Comparison plus the largest `|z|` per observable.
#[derive(Debug, Clone, Serialize)]
pub struct CompareOutput {
    pub pass: bool,
    pub threshold: f64,
    pub max_abs_z: f64,
    pub per_observable: BTreeMap<String, f64>,
    pub comparison: Comparison,
}

fn compare_output(c: Comparison) -> CompareOutput {
    let mut per = BTreeMap::new();
    for e in &c.entries {
        let z: &mut f64 = per.entry(e.name.clone()).or_insert(0.0);
        *z = z.max(e.z.abs());
    }
    CompareOutput {
        pass: c.pass,
        threshold: c.threshold,
        max_abs_z: c.max_abs_z,
        per_observable: per,
        comparison: c,
    }
}

fn report_comparison(ctx: &mut Ctx, c: Comparison) -> Result<i32, CliError> {
    let out = compare_output(c);
    ctx.run.write_json("comparison.json", &out)?;
    for (name, z) in &out.per_observable {
        emit(&format!("{name:<16} max |z| = {z:.3}"));
    }
    if out.pass {
        emit(&format!(
            "compare: pass (max |z| {:.3} <= {})",
            out.max_abs_z, out.threshold
        ));
        Ok(EXIT_OK)
    } else {
        Err(CliError::Mismatch(format!(
            "compare: max |z| {:.3} exceeds {}",
            out.max_abs_z, out.threshold
        )))
    }
}

fn unravel_error(e: UnravelError) -> CliError {
    match e {
        UnravelError::NotPositive(_) | UnravelError::NotCertified(_) => CliError::NotCertified(e.to_string()),
        UnravelError::TrajectoryAborted { .. } => CliError::Numerical(e.to_string()),
        UnravelError::Config(_) | UnravelError::NegativeVariance(_) => CliError::Input(e.to_string()),
    }
}

fn cmd_unravel(
    ctx: &mut Ctx,
    trajectories: Option<usize>,
    seed: Option<u64>,
    reference: Option<PathBuf>,
    threshold: f64,
) -> Result<i32, CliError> {
    let m = ctx.moments()?;
    let cfg = ctx.config();
    let c = assemble(&m.moments, &cfg.model).map_err(|e| CliError::Input(e.to_string()))?;
    let w0 = initial_state(cfg, "unravel")?;
    let mut ens = require(&cfg.unravel, "unravel", "unravel")?.ensemble();
    if let Some(t) = trajectories {
        ens.trajectories = t;
    }
    if let Some(s) = seed {
        ens.seed = s;
    }
    let observables = cfg.observables.clone();
    ctx.seed = Some(ens.seed);
    let result = ensemble_average(&c, &w0, &ens, &observables).map_err(unravel_error)?;
    let table = result.stats();
    ctx.run.write("unravel.csv", &table_csv(&table))?;
    emit(&format!(
        "unravel: {} trajectories, seed {}, {} records",
        ens.trajectories,
        ens.seed,
        table.times.len()
    ));
    match reference {
        Some(path) => {
            ctx.run.read_input(&path)?;
            let r = read_table(&path)?;
            let cmp = compare(&r, &table, threshold).map_err(|e| CliError::Input(e.to_string()))?;
            report_comparison(ctx, cmp)
        }
        None => Ok(EXIT_OK),
    }
}

fn cmd_compare(ctx: &mut Ctx, reference: &Path, estimate: &Path, threshold: f64) -> Result<i32, CliError> {
    ctx.run.read_input(reference)?;
    ctx.run.read_input(estimate)?;
    let r = read_table(reference)?;
    let e = read_table(estimate)?;
    let cmp = compare(&r, &e, threshold).map_err(|e| CliError::Input(e.to_string()))?;
    report_comparison(ctx, cmp)
}
