//! Command-line front end: config ingestion, subcommand dispatch, and
//! deterministic CSV/JSON emission for every analysis.
//!
//! Exit codes: 0 success, 1 input/IO error, 2 numerical non-convergence.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use kyle_feedback::equilibrium::{
    estimate_lipschitz, l2_distance, solve_pontryagin, ContractionProbe, EquilibriumSolution,
    FixedPointOptions, IntensityPath, SolveOptions,
};
use kyle_feedback::filter::{gain_path, lambda_sup, LambdaVariant};
use kyle_feedback::model::{ModelConfig, ModelParams, ResolvedModel, TimeGrid, TRUNCATION_NODES};
use kyle_feedback::output;
use kyle_feedback::perturbation::{comparative_statics, integrate_sensitivity};
use kyle_feedback::riccati::{
    integrate_riccati, scan_blowup, BlowupScanResult, HRecord, RiccatiOptions, ScanOptions,
    ScanOutcome,
};
use kyle_feedback::simulator::{monte_carlo_on, simulate_path_on, SimOptions};
use kyle_feedback::stability::{
    check_stability, feedback_matrix, stability_report, AveragingWindow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kyle-feedback",
    version,
    about = "Equilibrium solver and Monte Carlo simulator for an insider-trading market with price-responsive traders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Base seed for all randomized work.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: one per core).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Report the Sigma_vv * beta price-impact variant instead of the
    /// filter-implied e1^T K.
    #[arg(long, default_value_t = false)]
    pub paper_literal_lambda: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSource {
    /// Closed-form h = 0 intensity on a grid truncated ten nodes before T.
    Classical,
    /// Solve the forward-backward system on the full grid first.
    Equilibrium,
    Zero,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Full,
    Terminal,
}

impl Window {
    fn to_core(self) -> AveragingWindow {
        match self {
            Window::Full => AveragingWindow::TruncatedGrid,
            Window::Terminal => AveragingWindow::Terminal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    /// Hold the intensity fixed while scanning H.
    Frozen,
    /// Re-solve the equilibrium at each H.
    Resolved,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the forward-backward system for the equilibrium intensity.
    Equilibrium {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
        #[arg(long, default_value_t = 80)]
        max_iters: usize,
    },
    /// Equilibrium, stability, filter-exponent and contraction diagnostics
    /// along a feedback ray.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of points on the ray (scales 0..=h_max inclusive).
        #[arg(long, default_value_t = 10)]
        h_steps: usize,
        /// Largest feedback scale.
        #[arg(long, default_value_t = 0.5)]
        h_max: f64,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
        #[arg(long, default_value_t = 4)]
        n_probes: usize,
    },
    /// Monte Carlo of the full market under a given intensity.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, value_enum, default_value_t = BetaSource::Classical)]
        beta_source: BetaSource,
        /// Intensity value when --beta-source constant.
        #[arg(long, default_value_t = 1.0)]
        beta_value: f64,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
        /// Also write the first N path trajectories.
        #[arg(long, default_value_t = 0)]
        emit_paths: usize,
    },
    /// Feedback-matrix stability report.
    Stability {
        #[command(flatten)]
        common: CommonArgs,
        /// Bypass the DC-gain computation with "GM,GC".
        #[arg(long)]
        g_override: Option<String>,
        #[arg(long, value_enum, default_value_t = Window::Full)]
        window: Window,
        #[arg(long, value_enum, default_value_t = BetaSource::Classical)]
        beta_source: BetaSource,
        #[arg(long, default_value_t = 1.0)]
        beta_value: f64,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
    },
    /// Tangent-linear sensitivity in gamma_f plus equilibrium comparative
    /// statics.
    Sensitivity {
        #[command(flatten)]
        common: CommonArgs,
        /// Central-difference step for the equilibrium re-solves.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Central-difference step for the covariance-flow oracle.
        #[arg(long, default_value_t = 1e-4)]
        fd_eps: f64,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
    },
    /// Integrate the covariance flow under a given intensity.
    Riccati {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = BetaSource::Classical)]
        beta_source: BetaSource,
        #[arg(long, default_value_t = 1.0)]
        beta_value: f64,
        #[arg(long, default_value_t = 1)]
        substeps: u32,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
    },
    /// Scan the Riccati flow along a (gamma_f, gamma_c) ray for breakdown.
    Breakdown {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1.0)]
        h_min: f64,
        #[arg(long, default_value_t = 1e6)]
        h_max: f64,
        /// Number of logarithmically spaced H values.
        #[arg(long, default_value_t = 13)]
        n_h: usize,
        #[arg(long, value_enum, default_value_t = BetaPolicy::Frozen)]
        beta_policy: BetaPolicy,
        #[arg(long, value_enum, default_value_t = BetaSource::Classical)]
        beta_source: BetaSource,
        #[arg(long, default_value_t = 1.0)]
        beta_value: f64,
        #[arg(long, default_value_t = 5e-6)]
        tol: f64,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a ModelConfig,
    options: serde_json::Value,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_manifest(
    common: &CommonArgs,
    command: &'static str,
    cfg: &ModelConfig,
    options: serde_json::Value,
) -> Result<()> {
    let manifest = Manifest {
        artifact: "kyle-feedback",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: common.seed,
        config: cfg,
        options,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&common.out, "manifest.json", &text)
}

fn load_config(common: &CommonArgs) -> Result<(ModelConfig, ResolvedModel)> {
    let text = fs::read_to_string(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    let cfg = ModelConfig::from_json_str(&text)
        .with_context(|| format!("parsing config {}", common.config.display()))?;
    let resolved = cfg
        .resolve()
        .with_context(|| format!("validating config {}", common.config.display()))?;
    Ok((cfg, resolved))
}

fn lambda_variant(common: &CommonArgs) -> LambdaVariant {
    if common.paper_literal_lambda {
        LambdaVariant::PaperLiteral
    } else {
        LambdaVariant::Canonical
    }
}

/// Grid shortened by the terminal truncation nodes, keeping dt.
fn truncated_grid(grid: &TimeGrid) -> Result<TimeGrid> {
    let n = grid
        .n_steps
        .checked_sub(TRUNCATION_NODES)
        .filter(|&n| n >= 2)
        .ok_or_else(|| anyhow!("n_steps too small to truncate the terminal layer"))?;
    Ok(TimeGrid::new(
        grid.horizon * n as f64 / grid.n_steps as f64,
        n,
    )?)
}

struct BetaChoice {
    beta: IntensityPath,
    solution: Option<EquilibriumSolution>,
}

fn build_beta(
    source: BetaSource,
    beta_value: f64,
    tol: f64,
    resolved: &ResolvedModel,
    opts: &SolveOptions,
) -> Result<BetaChoice> {
    let p = &resolved.params;
    match source {
        BetaSource::Classical => {
            let grid = truncated_grid(&resolved.grid)?;
            Ok(BetaChoice {
                beta: IntensityPath::classical(p, grid, opts.beta_max),
                solution: None,
            })
        }
        BetaSource::Zero => Ok(BetaChoice {
            beta: IntensityPath::zero(resolved.grid.clone()),
            solution: None,
        }),
        BetaSource::Constant => Ok(BetaChoice {
            beta: IntensityPath::constant(resolved.grid.clone(), beta_value)?,
            solution: None,
        }),
        BetaSource::Equilibrium => {
            let init = IntensityPath::classical(p, resolved.grid.clone(), opts.beta_max);
            let sol = solve_pontryagin(p, &init, tol, opts)?;
            Ok(BetaChoice {
                beta: sol.beta_star.clone(),
                solution: Some(sol),
            })
        }
    }
}

fn solve_opts(resolved: &ResolvedModel, common: &CommonArgs, max_iters: usize) -> SolveOptions {
    SolveOptions {
        max_iters,
        lambda_variant: lambda_variant(common),
        psd_tol: resolved.psd_tol,
        sigma0: Some(resolved.sigma0),
        ..SolveOptions::default()
    }
}

fn riccati_opts(resolved: &ResolvedModel, substeps: u32) -> RiccatiOptions {
    RiccatiOptions {
        substeps,
        psd_tol: resolved.psd_tol,
    }
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

fn cmd_equilibrium(common: &CommonArgs, tol: f64, max_iters: usize) -> Result<i32> {
    let (cfg, resolved) = load_config(common)?;
    let opts = solve_opts(&resolved, common, max_iters);
    let init = IntensityPath::classical(&resolved.params, resolved.grid.clone(), opts.beta_max);
    let sol = solve_pontryagin(&resolved.params, &init, tol, &opts)?;

    write_file(
        &common.out,
        "equilibrium.csv",
        &output::equilibrium_csv(&sol),
    )?;
    write_file(
        &common.out,
        "equilibrium.json",
        &output::equilibrium_summary_json(&sol)?,
    )?;
    let gains = gain_path(
        &sol.cov_path,
        &sol.beta_star,
        &resolved.params,
        lambda_variant(common),
    )?;
    let report = lambda_sup(&sol.cov_path, &sol.beta_star, &resolved.params)?;
    write_file(
        &common.out,
        "filter.csv",
        &output::filter_csv(&gains, &report.eigen_trajectory),
    )?;
    write_manifest(
        common,
        "equilibrium",
        &cfg,
        serde_json::json!({ "common": common, "tol": tol, "max_iters": max_iters }),
    )?;
    Ok(if sol.converged {
        EXIT_OK
    } else {
        EXIT_NO_CONVERGENCE
    })
}

#[derive(Serialize)]
struct SweepRow {
    scale: f64,
    h_norm: f64,
    beta_dev: Option<f64>,
    #[serde(rename = "J")]
    j: Option<f64>,
    rho_f: Option<f64>,
    norm_inf: Option<f64>,
    norm_1: Option<f64>,
    lambda_h: Option<f64>,
    l_estimate: Option<f64>,
    spectral_ok: Option<bool>,
    norm_inf_ok: Option<bool>,
    hurwitz: Option<bool>,
    breakdown: bool,
    converged: bool,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepOutput {
    rows: Vec<SweepRow>,
    contraction: ContractionProbe,
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from(
        "scale,h_norm,beta_dev,J,rho_F,norm_inf,norm_1,Lambda,L_estimate,spectral_ok,norm_inf_ok,hurwitz,breakdown,converged,error\n",
    );
    let opt = |x: Option<f64>| x.map(output::fmt_f64).unwrap_or_default();
    let optb = |x: Option<bool>| x.map(|b| b.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            output::fmt_f64(r.scale),
            output::fmt_f64(r.h_norm),
            opt(r.beta_dev),
            opt(r.j),
            opt(r.rho_f),
            opt(r.norm_inf),
            opt(r.norm_1),
            opt(r.lambda_h),
            opt(r.l_estimate),
            optb(r.spectral_ok),
            optb(r.norm_inf_ok),
            optb(r.hurwitz),
            r.breakdown,
            r.converged,
            r.error.clone().unwrap_or_default(),
        );
    }
    out
}

fn cmd_sweep(
    common: &CommonArgs,
    h_steps: usize,
    h_max: f64,
    tol: f64,
    n_probes: usize,
) -> Result<i32> {
    if h_steps == 0 || !(h_max.is_finite() && h_max > 0.0) {
        return Err(anyhow!("sweep range is empty (h_steps >= 1, h_max > 0)"));
    }
    let (cfg, resolved) = load_config(common)?;
    let p = &resolved.params;
    let h_base = p.feedback_vector().norm;
    if h_base == 0.0 {
        return Err(anyhow!(
            "config has h = 0; the sweep direction comes from its feedback components"
        ));
    }
    let opts = solve_opts(&resolved, common, 80);
    let init = IntensityPath::classical(p, resolved.grid.clone(), opts.beta_max);
    let base = solve_pontryagin(&p.scale_feedback(0.0), &init, tol, &opts)?;
    let n_trunc = resolved.grid.truncated_len();
    let scales: Vec<f64> = (0..h_steps)
        .map(|i| h_max * i as f64 / (h_steps - 1).max(1) as f64)
        .collect();

    use rayon::prelude::*;
    let rows: Vec<SweepRow> = scales
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let ps = p.scale_feedback(s);
            let run = || -> Result<SweepRow> {
                let sol = solve_pontryagin(&ps, &init, tol, &opts)?;
                let beta_dev = l2_distance(&sol.beta_star, &base.beta_star, n_trunc)?;
                let stab = stability_report(
                    &sol.cov_path,
                    &sol.beta_star,
                    &ps,
                    AveragingWindow::TruncatedGrid,
                )?;
                let inst = lambda_sup(&sol.cov_path, &sol.beta_star, &ps)?;
                // Contraction probe on the truncated restriction: the
                // terminal layer of the equilibrium intensity is singular
                // and the map is only well defined where lambda stays away
                // from zero.
                let l_est = estimate_lipschitz(
                    &sol.beta_star.truncated()?,
                    &ps,
                    n_probes,
                    1e-5,
                    common.seed.wrapping_add(i as u64),
                    &FixedPointOptions {
                        sigma0: Some(resolved.sigma0),
                        ..FixedPointOptions::default()
                    },
                )?;
                Ok(SweepRow {
                    scale: s,
                    h_norm: s * h_base,
                    beta_dev: Some(beta_dev),
                    j: Some(sol.profit_j),
                    rho_f: Some(stab.rho_f),
                    norm_inf: Some(stab.norm_inf),
                    norm_1: Some(stab.norm_1),
                    lambda_h: Some(inst.lambda),
                    l_estimate: Some(l_est),
                    spectral_ok: Some(stab.spectral_ok),
                    norm_inf_ok: Some(stab.norm_inf_ok),
                    hurwitz: Some(stab.hurwitz),
                    breakdown: false,
                    converged: sol.converged,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| SweepRow {
                scale: s,
                h_norm: s * h_base,
                beta_dev: None,
                j: None,
                rho_f: None,
                norm_inf: None,
                norm_1: None,
                lambda_h: None,
                l_estimate: None,
                spectral_ok: None,
                norm_inf_ok: None,
                hurwitz: None,
                breakdown: e.to_string().contains("broke down"),
                converged: false,
                error: Some(e.to_string()),
            })
        })
        .collect();

    let contraction = ContractionProbe::new(
        rows.iter().map(|r| r.h_norm).collect(),
        rows.iter()
            .map(|r| r.l_estimate.unwrap_or(f64::NAN))
            .collect(),
    );
    write_file(&common.out, "sweep.csv", &sweep_csv(&rows))?;
    write_file(
        &common.out,
        "sweep.json",
        &output::to_json_pretty(&SweepOutput { rows, contraction })?,
    )?;
    write_manifest(
        common,
        "sweep",
        &cfg,
        serde_json::json!({
            "common": common, "h_steps": h_steps, "h_max": h_max,
            "tol": tol, "n_probes": n_probes
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_simulate(
    common: &CommonArgs,
    n_paths: usize,
    beta_source: BetaSource,
    beta_value: f64,
    tol: f64,
    emit_paths: usize,
) -> Result<i32> {
    let (cfg, resolved) = load_config(common)?;
    let opts = solve_opts(&resolved, common, 80);
    let choice = build_beta(beta_source, beta_value, tol, &resolved, &opts)?;
    let sim_opts = SimOptions {
        riccati: riccati_opts(&resolved, 1),
        sigma0: Some(resolved.sigma0),
        checkpoints: 10,
        m_level_shift: 0.0,
    };
    // The equilibrium covariance comes from the solver (its terminal layer
    // needs the solver's refined stepping); other sources integrate here.
    let cov = match &choice.solution {
        Some(sol) => sol.cov_path.clone(),
        None => integrate_riccati(
            &choice.beta,
            resolved.sigma0,
            &resolved.params,
            &sim_opts.riccati,
        )?,
    };
    let summary = monte_carlo_on(
        &cov,
        n_paths,
        common.seed,
        &choice.beta,
        &resolved.params,
        &sim_opts,
    )?;
    write_file(
        &common.out,
        "mc_summary.json",
        &output::mc_summary_json(&summary)?,
    )?;
    if emit_paths > 0 {
        let mut text = String::new();
        for i in 0..emit_paths.min(n_paths) {
            let rec = simulate_path_on(
                &cov,
                common.seed.wrapping_add(i as u64),
                &choice.beta,
                &resolved.params,
                &sim_opts,
            )?;
            let csv = output::path_csv(&rec);
            if i == 0 {
                text.push_str(&csv);
            } else {
                // Skip the repeated header.
                text.push_str(csv.split_once('\n').map(|x| x.1).unwrap_or(""));
            }
        }
        write_file(&common.out, "paths.csv", &text)?;
    }
    write_manifest(
        common,
        "simulate",
        &cfg,
        serde_json::json!({
            "common": common, "n_paths": n_paths, "beta_source": beta_source,
            "beta_value": beta_value, "tol": tol, "emit_paths": emit_paths
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_stability(
    common: &CommonArgs,
    g_override: Option<&str>,
    window: Window,
    beta_source: BetaSource,
    beta_value: f64,
    tol: f64,
) -> Result<i32> {
    let (cfg, resolved) = load_config(common)?;
    let p = &resolved.params;
    let report = match g_override {
        Some(text) => {
            let (gm, gc) = text
                .split_once(',')
                .and_then(|(a, b)| {
                    Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?))
                })
                .ok_or_else(|| anyhow!("--g-override expects \"GM,GC\""))?;
            check_stability(feedback_matrix(gm, gc, p), gm, gc, p)
        }
        None => {
            let opts = solve_opts(&resolved, common, 80);
            let choice = build_beta(beta_source, beta_value, tol, &resolved, &opts)?;
            let cov = match &choice.solution {
                Some(sol) => sol.cov_path.clone(),
                None => integrate_riccati(
                    &choice.beta,
                    resolved.sigma0,
                    p,
                    &riccati_opts(&resolved, 1),
                )?,
            };
            stability_report(&cov, &choice.beta, p, window.to_core())?
        }
    };
    write_file(
        &common.out,
        "stability.json",
        &output::stability_json(&report)?,
    )?;
    write_manifest(
        common,
        "stability",
        &cfg,
        serde_json::json!({
            "common": common, "g_override": g_override, "window": window,
            "beta_source": beta_source, "beta_value": beta_value, "tol": tol
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_sensitivity(common: &CommonArgs, eps: f64, fd_eps: f64, tol: f64) -> Result<i32> {
    let (cfg, resolved) = load_config(common)?;
    // The expansion point is gamma_f = gamma_c = 0 with everything else from
    // the config (including any prior override).
    let p0 = ModelParams {
        gamma_f: 0.0,
        gamma_c: 0.0,
        ..resolved.params
    };
    let grid = truncated_grid(&resolved.grid)?;
    let beta0 = IntensityPath::classical(&p0, grid, 1e6);
    let ric = riccati_opts(&resolved, 1);
    let cov0 = integrate_riccati(&beta0, resolved.sigma0, &p0, &ric)?;
    let sens = integrate_sensitivity(&cov0, &beta0, &p0, &ric)?;

    let run_at = |gamma_f: f64| -> Result<Vec<f64>> {
        let ps = ModelParams { gamma_f, ..p0 };
        let cov = integrate_riccati(&beta0, resolved.sigma0, &ps, &ric)?;
        Ok(cov.sigmas.iter().map(|s| s.vv).collect())
    };
    let plus = run_at(fd_eps)?;
    let minus = run_at(-fd_eps)?;
    let dvv_fd: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * fd_eps))
        .collect();
    write_file(
        &common.out,
        "sensitivity.csv",
        &output::sensitivity_csv(&sens, &dvv_fd),
    )?;

    let opts = solve_opts(&resolved, common, 80);
    let init = IntensityPath::classical(&p0, resolved.grid.clone(), opts.beta_max);
    let sol0 = solve_pontryagin(&p0, &init, tol, &opts)?;
    let stats = comparative_statics(&sol0, &p0, eps, tol, &opts)?;
    write_file(
        &common.out,
        "sensitivity.json",
        &output::to_json_pretty(&stats)?,
    )?;
    write_manifest(
        common,
        "sensitivity",
        &cfg,
        serde_json::json!({ "common": common, "eps": eps, "fd_eps": fd_eps, "tol": tol }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_riccati(
    common: &CommonArgs,
    beta_source: BetaSource,
    beta_value: f64,
    substeps: u32,
    tol: f64,
) -> Result<i32> {
    let (cfg, resolved) = load_config(common)?;
    let opts = solve_opts(&resolved, common, 80);
    let choice = build_beta(beta_source, beta_value, tol, &resolved, &opts)?;
    let cov = integrate_riccati(
        &choice.beta,
        resolved.sigma0,
        &resolved.params,
        &riccati_opts(&resolved, substeps),
    )?;
    write_file(&common.out, "riccati.csv", &output::cov_path_csv(&cov))?;
    if cov.is_complete() {
        let gains = gain_path(&cov, &choice.beta, &resolved.params, lambda_variant(common))?;
        let report = lambda_sup(&cov, &choice.beta, &resolved.params)?;
        write_file(
            &common.out,
            "filter.csv",
            &output::filter_csv(&gains, &report.eigen_trajectory),
        )?;
    }
    write_manifest(
        common,
        "riccati",
        &cfg,
        serde_json::json!({
            "common": common, "beta_source": beta_source,
            "beta_value": beta_value, "substeps": substeps, "tol": tol
        }),
    )?;
    Ok(EXIT_OK)
}

/// Re-solve variant of the breakdown scan: the failure predicate is a
/// Riccati breakdown inside the equilibrium solve at each H.
fn resolved_scan(
    p: &ModelParams,
    resolved: &ResolvedModel,
    h_grid: &[f64],
    tol: f64,
    opts: &SolveOptions,
) -> Result<BlowupScanResult> {
    let g_norm = (p.gamma_f * p.gamma_f + p.gamma_c * p.gamma_c).sqrt();
    let dir = if g_norm > 0.0 {
        (p.gamma_f / g_norm, p.gamma_c / g_norm)
    } else {
        (
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        )
    };
    let init = IntensityPath::classical(p, resolved.grid.clone(), opts.beta_max);
    let run = |h: f64| -> ScanOutcome {
        let ph = ModelParams {
            gamma_f: dir.0 * h.sqrt(),
            gamma_c: dir.1 * h.sqrt(),
            ..*p
        };
        match solve_pontryagin(&ph, &init, tol, opts) {
            Ok(_) => ScanOutcome::Completed,
            Err(kyle_feedback::Error::RiccatiBreakdown { time, mode }) => ScanOutcome::Breakdown {
                time,
                mode: if mode == "psd_loss" {
                    kyle_feedback::riccati::BreakdownMode::PsdLoss
                } else {
                    kyle_feedback::riccati::BreakdownMode::Divergence
                },
            },
            Err(_) => ScanOutcome::Breakdown {
                time: p.horizon,
                mode: kyle_feedback::riccati::BreakdownMode::Divergence,
            },
        }
    };
    let records: Vec<HRecord> = h_grid
        .iter()
        .map(|&h| HRecord { h, outcome: run(h) })
        .collect();
    let first = records
        .iter()
        .position(|r| matches!(r.outcome, ScanOutcome::Breakdown { .. }));
    let violations: Vec<f64> = match first {
        None => Vec::new(),
        Some(i) => records[i..]
            .iter()
            .filter(|r| matches!(r.outcome, ScanOutcome::Completed))
            .map(|r| r.h)
            .collect(),
    };
    let (h_star_estimate, bracket) = match first {
        None => (None, None),
        Some(0) => (Some(h_grid[0]), Some((0.0, h_grid[0]))),
        Some(i) => {
            let (mut lo, mut hi) = (h_grid[i - 1], h_grid[i]);
            while (hi - lo) > 1e-3 * hi {
                let mid = 0.5 * (lo + hi);
                match run(mid) {
                    ScanOutcome::Completed => lo = mid,
                    ScanOutcome::Breakdown { .. } => hi = mid,
                }
            }
            (Some(0.5 * (lo + hi)), Some((lo, hi)))
        }
    };
    Ok(BlowupScanResult {
        h_star_estimate,
        bracket,
        monotone: violations.is_empty(),
        violations,
        records,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_breakdown(
    common: &CommonArgs,
    h_min: f64,
    h_max: f64,
    n_h: usize,
    beta_policy: BetaPolicy,
    beta_source: BetaSource,
    beta_value: f64,
    tol: f64,
) -> Result<i32> {
    if n_h < 2 || !(h_min > 0.0 && h_max > h_min) {
        return Err(anyhow!(
            "breakdown scan needs 0 < h_min < h_max and n_h >= 2"
        ));
    }
    let (cfg, resolved) = load_config(common)?;
    let h_grid: Vec<f64> = (0..n_h)
        .map(|i| {
            let t = i as f64 / (n_h - 1) as f64;
            h_min * (h_max / h_min).powf(t)
        })
        .collect();
    let scan = match beta_policy {
        BetaPolicy::Frozen => {
            let opts = solve_opts(&resolved, common, 80);
            let choice = build_beta(beta_source, beta_value, tol, &resolved, &opts)?;
            scan_blowup(
                &resolved.params,
                &choice.beta,
                &h_grid,
                &ScanOptions {
                    riccati: riccati_opts(&resolved, 1),
                    sigma0: Some(resolved.sigma0),
                    bracket_rel_width: 1e-3,
                },
            )?
        }
        BetaPolicy::Resolved => {
            let opts = solve_opts(&resolved, common, 80);
            resolved_scan(&resolved.params, &resolved, &h_grid, tol, &opts)?
        }
    };
    write_file(
        &common.out,
        "breakdown.json",
        &output::breakdown_json(&scan)?,
    )?;
    write_file(&common.out, "breakdown.csv", &output::breakdown_csv(&scan))?;
    write_manifest(
        common,
        "breakdown",
        &cfg,
        serde_json::json!({
            "common": common, "h_min": h_min, "h_max": h_max, "n_h": n_h,
            "beta_policy": beta_policy, "beta_source": beta_source,
            "beta_value": beta_value, "tol": tol
        }),
    )?;
    Ok(EXIT_OK)
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Equilibrium {
            common,
            tol,
            max_iters,
        } => cmd_equilibrium(common, *tol, *max_iters),
        Command::Sweep {
            common,
            h_steps,
            h_max,
            tol,
            n_probes,
        } => cmd_sweep(common, *h_steps, *h_max, *tol, *n_probes),
        Command::Simulate {
            common,
            n_paths,
            beta_source,
            beta_value,
            tol,
            emit_paths,
        } => cmd_simulate(
            common,
            *n_paths,
            *beta_source,
            *beta_value,
            *tol,
            *emit_paths,
        ),
        Command::Stability {
            common,
            g_override,
            window,
            beta_source,
            beta_value,
            tol,
        } => cmd_stability(
            common,
            g_override.as_deref(),
            *window,
            *beta_source,
            *beta_value,
            *tol,
        ),
        Command::Sensitivity {
            common,
            eps,
            fd_eps,
            tol,
        } => cmd_sensitivity(common, *eps, *fd_eps, *tol),
        Command::Riccati {
            common,
            beta_source,
            beta_value,
            substeps,
            tol,
        } => cmd_riccati(common, *beta_source, *beta_value, *substeps, *tol),
        Command::Breakdown {
            common,
            h_min,
            h_max,
            n_h,
            beta_policy,
            beta_source,
            beta_value,
            tol,
        } => cmd_breakdown(
            common,
            *h_min,
            *h_max,
            *n_h,
            *beta_policy,
            *beta_source,
            *beta_value,
            *tol,
        ),
    }
}

fn common_of(command: &Command) -> &CommonArgs {
    match command {
        Command::Equilibrium { common, .. }
        | Command::Sweep { common, .. }
        | Command::Simulate { common, .. }
        | Command::Stability { common, .. }
        | Command::Sensitivity { common, .. }
        | Command::Riccati { common, .. }
        | Command::Breakdown { common, .. } => common,
    }
}

/// Run a parsed invocation; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let common = common_of(&cli.command);
    let result = match common.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(anyhow!("building thread pool: {e}")),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

/// Convenience for tests and the binary: run from argv-style strings.
pub fn run_from<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            // Help/version requests are success, not input errors.
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
