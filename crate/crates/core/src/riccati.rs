//! Forward matrix Riccati equation for the conditional covariance, with
//! well-posedness monitors and the strong-feedback breakdown scan.
//!
//! The right-hand side is implemented componentwise as the entrywise
//! expansion of A S + S A^T + Q - S C^T R^-1 C S over the six independent
//! entries; tests check it against an independently coded matrix-form
//! evaluation.

use crate::equilibrium::IntensityPath;
use crate::error::{Error, Result};
use crate::linalg::Sym3;
use crate::model::{initial_covariance, CovMatrix, ModelParams, TimeGrid};
use serde::Serialize;

/// How a covariance path failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownMode {
    PsdLoss,
    Divergence,
}

impl BreakdownMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BreakdownMode::PsdLoss => "psd_loss",
            BreakdownMode::Divergence => "divergence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakdown {
    /// Time of the first node that failed the monitors.
    pub time: f64,
    /// Node index of the failure.
    pub index: usize,
    pub mode: BreakdownMode,
}

/// Covariance trajectory on a grid. `sigmas` holds the nodes that passed the
/// monitors; on failure the path is truncated there and `breakdown` records
/// where and how.
#[derive(Debug, Clone)]
pub struct CovPath {
    pub grid: TimeGrid,
    pub sigmas: Vec<CovMatrix>,
    pub breakdown: Option<Breakdown>,
}

impl CovPath {
    pub fn is_complete(&self) -> bool {
        self.breakdown.is_none()
    }

    /// Smallest eigenvalue at each stored node.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.sigmas.iter().map(|s| s.min_eigenvalue()).collect()
    }
}

/// Integration knobs. `substeps` applies that many RK4 steps per grid
/// interval (the grid spacing stays the reporting resolution); the default 1
/// is the plain fixed-step scheme.
#[derive(Debug, Clone, Copy)]
pub struct RiccatiOptions {
    pub substeps: u32,
    pub psd_tol: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        RiccatiOptions {
            substeps: 1,
            psd_tol: 1e-10,
        }
    }
}

/// Componentwise Riccati right-hand side. Checked variant: rejects
/// non-finite inputs.
pub fn riccati_rhs(sigma: &CovMatrix, beta_t: f64, p: &ModelParams) -> Result<Sym3> {
    if !sigma.is_finite() {
        return Err(Error::NonFinite { field: "sigma" });
    }
    if !beta_t.is_finite() {
        return Err(Error::NonFinite { field: "beta_t" });
    }
    Ok(rhs_raw(sigma, beta_t, p))
}

/// The six entry derivatives, written out as monomials in the entries.
pub(crate) fn rhs_raw(s: &CovMatrix, beta: f64, p: &ModelParams) -> Sym3 {
    let r = p.obs_variance();
    let gf = p.gamma_f;
    let gc = p.gamma_c;
    let am = p.alpha_m;
    let ac = p.alpha_c;
    let b2 = beta * beta;
    let gf2 = gf * gf;
    let gc2 = gc * gc;

    let d_vv = -(b2 * s.vv * s.vv
        + gf2 * s.vm * s.vm
        + gc2 * s.vc * s.vc
        + 2.0 * beta * gf * s.vv * s.vm
        + 2.0 * beta * gc * s.vv * s.vc
        + 2.0 * gf * gc * s.vm * s.vc)
        / r;

    let d_vm = -am * s.vm
        - (b2 * s.vv * s.vm
            + beta * gf * (s.vv * s.mm + s.vm * s.vm)
            + beta * gc * (s.vv * s.mc + s.vc * s.vm)
            + gf2 * s.vm * s.mm
            + gf * gc * (s.vm * s.mc + s.vc * s.mm)
            + gc2 * s.vc * s.mc)
            / r;

    let d_vc = -ac * s.vc
        - (b2 * s.vv * s.vc
            + beta * gf * (s.vv * s.mc + s.vm * s.vc)
            + beta * gc * (s.vv * s.cc + s.vc * s.vc)
            + gf2 * s.vm * s.mc
            + gf * gc * (s.vm * s.cc + s.vc * s.mc)
            + gc2 * s.vc * s.cc)
            / r;

    let d_mm = -2.0 * am * s.mm + p.sigma_m * p.sigma_m
        - (b2 * s.vm * s.vm
            + gf2 * s.mm * s.mm
            + gc2 * s.mc * s.mc
            + 2.0 * beta * gf * s.vm * s.mm
            + 2.0 * beta * gc * s.vm * s.mc
            + 2.0 * gf * gc * s.mm * s.mc)
            / r;

    let d_mc = -(am + ac) * s.mc
        - (b2 * s.vm * s.vc
            + beta * gf * (s.vm * s.mc + s.mm * s.vc)
            + beta * gc * (s.vm * s.cc + s.mc * s.vc)
            + gf2 * s.mm * s.mc
            + gf * gc * (s.mm * s.cc + s.mc * s.mc)
            + gc2 * s.mc * s.cc)
            / r;

    let d_cc = -2.0 * ac * s.cc + p.sigma_c * p.sigma_c
        - (b2 * s.vc * s.vc
            + gf2 * s.mc * s.mc
            + gc2 * s.cc * s.cc
            + 2.0 * beta * gf * s.vc * s.mc
            + 2.0 * beta * gc * s.vc * s.cc
            + 2.0 * gf * gc * s.mc * s.cc)
            / r;

    Sym3 {
        vv: d_vv,
        vm: d_vm,
        vc: d_vc,
        mm: d_mm,
        mc: d_mc,
        cc: d_cc,
    }
}

/// Intensity value inside a grid interval. Interpolates the reciprocal when
/// both endpoints are positive (exact for the classical 1/(T-t) family and
/// positivity-preserving); falls back to linear otherwise.
pub(crate) fn beta_stage(b0: f64, b1: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        return b0;
    }
    if theta == 1.0 {
        return b1;
    }
    if b0 > 0.0 && b1 > 0.0 {
        1.0 / ((1.0 - theta) / b0 + theta / b1)
    } else {
        (1.0 - theta) * b0 + theta * b1
    }
}

/// One RK4 step of length h starting from `s`, with intensity endpoints
/// (b0, b1) spanning the step.
pub(crate) fn rk4_step(s: &Sym3, b0: f64, b1: f64, h: f64, p: &ModelParams) -> Sym3 {
    let bm = beta_stage(b0, b1, 0.5);
    let k1 = rhs_raw(s, b0, p);
    let k2 = rhs_raw(&s.axpy(0.5 * h, &k1), bm, p);
    let k3 = rhs_raw(&s.axpy(0.5 * h, &k2), bm, p);
    let k4 = rhs_raw(&s.axpy(h, &k3), b1, p);
    s.axpy(h / 6.0, &k1)
        .axpy(h / 3.0, &k2)
        .axpy(h / 3.0, &k3)
        .axpy(h / 6.0, &k4)
}

/// Advance one grid interval with `substeps` internal RK4 steps.
pub(crate) fn advance_interval(
    s: &Sym3,
    b_left: f64,
    b_right: f64,
    dt: f64,
    substeps: u32,
    p: &ModelParams,
) -> Sym3 {
    let m = substeps.max(1);
    if m == 1 {
        return rk4_step(s, b_left, b_right, dt, p);
    }
    let h = dt / m as f64;
    let mut y = *s;
    for j in 0..m {
        let t0 = j as f64 / m as f64;
        let t1 = (j + 1) as f64 / m as f64;
        let bj0 = beta_stage(b_left, b_right, t0);
        let bj1 = beta_stage(b_left, b_right, t1);
        y = rk4_step(&y, bj0, bj1, h, p);
    }
    y
}

fn divergence_threshold(p: &ModelParams) -> f64 {
    1e12 * (p.sigma_v * p.sigma_v + p.sigma_m * p.sigma_m + p.sigma_c * p.sigma_c + 1.0)
}

pub(crate) fn check_node(sigma: &Sym3, psd_tol: f64, div_threshold: f64) -> Option<BreakdownMode> {
    if !sigma.is_finite() || sigma.max_abs_entry() > div_threshold {
        return Some(BreakdownMode::Divergence);
    }
    let tol = psd_tol * sigma.trace().abs();
    if sigma.min_eigenvalue() < -tol {
        return Some(BreakdownMode::PsdLoss);
    }
    None
}

/// Fixed-step RK4 integration of the covariance flow under the given
/// intensity path. Monitor failures truncate the path and are recorded, not
/// raised; only contract violations (grid mismatch, bad initial condition)
/// are errors.
pub fn integrate_riccati(
    beta: &IntensityPath,
    sigma0: CovMatrix,
    p: &ModelParams,
    opts: &RiccatiOptions,
) -> Result<CovPath> {
    let grid = beta.grid.clone();
    if !sigma0.is_finite() {
        return Err(Error::NonFinite { field: "sigma0" });
    }
    let div_threshold = divergence_threshold(p);
    if let Some(mode) = check_node(&sigma0, opts.psd_tol, div_threshold) {
        return Err(Error::InvalidArgument(format!(
            "sigma0 fails the {} monitor before integration",
            mode.as_str()
        )));
    }
    let dt = grid.dt();
    let mut sigmas = Vec::with_capacity(grid.len());
    sigmas.push(sigma0);
    let mut breakdown = None;
    let mut s = sigma0;
    for k in 0..grid.n_steps {
        s = advance_interval(&s, beta.values[k], beta.values[k + 1], dt, opts.substeps, p);
        if let Some(mode) = check_node(&s, opts.psd_tol, div_threshold) {
            breakdown = Some(Breakdown {
                time: grid.times[k + 1],
                index: k + 1,
                mode,
            });
            break;
        }
        sigmas.push(s);
    }
    Ok(CovPath {
        grid,
        sigmas,
        breakdown,
    })
}

/// Outcome of one scan integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ScanOutcome {
    Completed,
    Breakdown { time: f64, mode: BreakdownMode },
}

#[derive(Debug, Clone, Serialize)]
pub struct HRecord {
    pub h: f64,
    #[serde(flatten)]
    pub outcome: ScanOutcome,
}

/// Result of the strong-feedback scan along a (gamma_f, gamma_c) ray,
/// H = gamma_f^2 + gamma_c^2.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupScanResult {
    /// Bisection estimate of the threshold; None when no breakdown occurred
    /// in the scanned range.
    pub h_star_estimate: Option<f64>,
    /// (largest H with a global solution, smallest H with breakdown) after
    /// refinement.
    pub bracket: Option<(f64, f64)>,
    pub records: Vec<HRecord>,
    /// Whether the grid outcomes were monotone (no global solution re-appears
    /// above the first breakdown).
    pub monotone: bool,
    /// H values violating monotonicity, if any.
    pub violations: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub riccati: RiccatiOptions,
    /// Initial covariance; defaults to the model prior.
    pub sigma0: Option<CovMatrix>,
    /// Relative bracket width for the bisection refinement.
    pub bracket_rel_width: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            riccati: RiccatiOptions::default(),
            sigma0: None,
            bracket_rel_width: 1e-3,
        }
    }
}

fn params_at_h(p: &ModelParams, dir: (f64, f64), h: f64) -> ModelParams {
    let scale = h.sqrt();
    ModelParams {
        gamma_f: dir.0 * scale,
        gamma_c: dir.1 * scale,
        ..*p
    }
}

/// Integrate the flow for each H on an ascending grid with the intensity
/// path held fixed, bracket the first global-solution -> breakdown flip, and
/// refine the threshold by bisection.
pub fn scan_blowup(
    p: &ModelParams,
    beta: &IntensityPath,
    h_grid: &[f64],
    opts: &ScanOptions,
) -> Result<BlowupScanResult> {
    if h_grid.is_empty() {
        return Err(Error::InvalidArgument("H grid must be nonempty".into()));
    }
    if h_grid.windows(2).any(|w| w[1] <= w[0]) || h_grid[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "H grid must be ascending and nonnegative".into(),
        ));
    }
    let g_norm = (p.gamma_f * p.gamma_f + p.gamma_c * p.gamma_c).sqrt();
    let dir = if g_norm > 0.0 {
        (p.gamma_f / g_norm, p.gamma_c / g_norm)
    } else {
        (
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        )
    };
    let sigma0 = opts.sigma0.unwrap_or_else(|| initial_covariance(p));

    let run = |h: f64| -> Result<ScanOutcome> {
        let ph = params_at_h(p, dir, h);
        let path = integrate_riccati(beta, sigma0, &ph, &opts.riccati)?;
        Ok(match path.breakdown {
            None => ScanOutcome::Completed,
            Some(b) => ScanOutcome::Breakdown {
                time: b.time,
                mode: b.mode,
            },
        })
    };

    use rayon::prelude::*;
    let outcomes: Vec<ScanOutcome> = h_grid
        .par_iter()
        .map(|&h| run(h))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<HRecord> = h_grid
        .iter()
        .zip(&outcomes)
        .map(|(&h, &outcome)| HRecord { h, outcome })
        .collect();

    let first_break = outcomes
        .iter()
        .position(|o| matches!(o, ScanOutcome::Breakdown { .. }));
    let violations: Vec<f64> = match first_break {
        None => Vec::new(),
        Some(i) => records[i..]
            .iter()
            .filter(|r| matches!(r.outcome, ScanOutcome::Completed))
            .map(|r| r.h)
            .collect(),
    };
    let monotone = violations.is_empty();

    let Some(i) = first_break else {
        return Ok(BlowupScanResult {
            h_star_estimate: None,
            bracket: None,
            records,
            monotone,
            violations,
        });
    };

    // Lower end of the initial bracket: the previous grid point, or H = 0
    // (zero feedback always completes for a bounded intensity).
    let mut lo = if i > 0 {
        h_grid[i - 1]
    } else {
        match run(0.0)? {
            ScanOutcome::Completed => 0.0,
            ScanOutcome::Breakdown { time, mode } => {
                return Err(Error::RiccatiBreakdown {
                    time,
                    mode: mode.as_str(),
                })
            }
        }
    };
    let mut hi = h_grid[i];
    while (hi - lo) > opts.bracket_rel_width * hi && hi > lo {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match run(mid)? {
            ScanOutcome::Completed => lo = mid,
            ScanOutcome::Breakdown { .. } => hi = mid,
        }
    }

    Ok(BlowupScanResult {
        h_star_estimate: Some(0.5 * (lo + hi)),
        bracket: Some((lo, hi)),
        records,
        monotone,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::IntensityPath;
    use crate::linalg::Mat3;
    use crate::model::{drift_matrix, state_noise_cov, TimeGrid};
    use crate::rng::Stream;

    fn params() -> ModelParams {
        ModelParams {
            sigma_v: 1.0,
            sigma_z: 1.0,
            sigma_m: 0.0,
            sigma_c: 0.0,
            sigma_eps: 0.0,
            alpha_m: 1.0,
            alpha_c: 1.0,
            kappa_m: 0.0,
            kappa_c: 0.0,
            gamma_f: 0.0,
            gamma_c: 0.0,
            horizon: 1.0,
            var_m0: 0.0,
            var_c0: 0.0,
            fold_eps_into_r: true,
        }
    }

    /// Independent oracle: A S + S A^T + Q - (S c)(S c)^T / R via dense
    /// matrix algebra.
    fn matrix_form(s: &Sym3, beta: f64, p: &ModelParams) -> Sym3 {
        let a = drift_matrix(p);
        let sm = s.to_mat();
        let c = [beta, p.gamma_f, p.gamma_c];
        let b = sm.mul_vec(&c);
        let quad = Mat3::outer(&b, &b).scale(1.0 / p.obs_variance());
        let lin = a.mul(&sm).add(&sm.mul(&a.transpose()));
        let full = lin.add(&state_noise_cov(p).to_mat()).add(&quad.scale(-1.0));
        Sym3::from_mat(&full)
    }

    fn random_psd(rng: &mut Stream) -> Sym3 {
        let mut b = [[0.0; 3]; 3];
        for row in b.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.next_range(-1.0, 1.0);
            }
        }
        let bm = Mat3(b);
        let prod = bm.transpose().mul(&bm);
        Sym3::from_mat(&prod)
    }

    #[test]
    fn rhs_direct_substitution() {
        let p = params();
        let s = Sym3::diag(1.0, 0.02, 0.02);
        let d = riccati_rhs(&s, 1.0, &p).unwrap();
        assert!((d.vv + 1.0).abs() < 1e-15);
        assert_eq!(d.vm, 0.0);
        assert_eq!(d.vc, 0.0);
        assert_eq!(d.mc, 0.0);
        assert!((d.mm + 0.04).abs() < 1e-15);
        assert!((d.cc + 0.04).abs() < 1e-15);
    }

    #[test]
    fn rhs_no_signal_no_learning() {
        let p = params();
        let s = Sym3::diag(1.0, 0.5, 0.25);
        let d = riccati_rhs(&s, 0.0, &p).unwrap();
        assert_eq!(d.vv, 0.0);
    }

    #[test]
    fn rhs_rejects_nonfinite() {
        let p = params();
        assert!(riccati_rhs(&Sym3::diag(f64::INFINITY, 0.0, 0.0), 1.0, &p).is_err());
        assert!(riccati_rhs(&Sym3::zeros(), f64::NAN, &p).is_err());
    }

    #[test]
    fn componentwise_matches_matrix_form_on_random_psd() {
        let mut rng = Stream::new(2024);
        for _ in 0..1000 {
            let p = ModelParams {
                sigma_m: rng.next_range(0.0, 1.0),
                sigma_c: rng.next_range(0.0, 1.0),
                alpha_m: rng.next_range(0.1, 3.0),
                alpha_c: rng.next_range(0.1, 3.0),
                gamma_f: rng.next_range(-2.0, 2.0),
                gamma_c: rng.next_range(-2.0, 2.0),
                sigma_z: rng.next_range(0.2, 2.0),
                ..params()
            };
            let s = random_psd(&mut rng);
            let beta = rng.next_range(-3.0, 3.0);
            let lhs = riccati_rhs(&s, beta, &p).unwrap();
            let rhs = matrix_form(&s, beta, &p);
            let scale = rhs.max_abs_entry().max(1e-12);
            for (a, b) in lhs.entries().iter().zip(rhs.entries()) {
                assert!(
                    (a - b).abs() <= 1e-12 * scale,
                    "componentwise {a} vs matrix {b} (scale {scale})"
                );
            }
        }
    }

    #[test]
    fn classical_flow_matches_closed_form() {
        // Truncated horizon keeps the classical intensity bounded; the
        // closed form there is Sigma_vv(t) = 1 - t.
        let p = params();
        let n = 9990;
        let grid = TimeGrid::new(0.999, n).unwrap();
        let values: Vec<f64> = grid.times.iter().map(|&t| 1.0 / (1.0 - t)).collect();
        let beta = IntensityPath::new(grid.clone(), values).unwrap();
        let path = integrate_riccati(
            &beta,
            Sym3::diag(1.0, 0.0, 0.0),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        assert!(path.is_complete());
        let mut worst = 0.0f64;
        for (k, s) in path.sigmas.iter().enumerate() {
            let exact = 1.0 - grid.times[k];
            worst = worst.max((s.vv - exact).abs() / exact);
        }
        assert!(worst <= 1e-6, "max relative error {worst}");
    }

    #[test]
    fn ou_variance_reaches_stationary_level() {
        let p = ModelParams {
            sigma_m: 0.2,
            horizon: 20.0,
            ..params()
        };
        let grid = TimeGrid::new(20.0, 4000).unwrap();
        let beta = IntensityPath::zero(grid.clone());
        let path = integrate_riccati(&beta, Sym3::zeros(), &p, &RiccatiOptions::default()).unwrap();
        let target = 0.2f64.powi(2) / (2.0 * 1.0);
        assert!((path.sigmas.last().unwrap().mm - target).abs() < 1e-6);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let p = params();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let beta = IntensityPath::constant(grid.clone(), 1.0).unwrap();
        let path = integrate_riccati(&beta, Sym3::zeros(), &p, &RiccatiOptions::default()).unwrap();
        assert!(path.is_complete());
        for s in &path.sigmas {
            assert_eq!(s.max_abs_entry(), 0.0);
        }
    }

    #[test]
    fn decoupling_and_monotone_vv_at_h_zero() {
        let p = ModelParams {
            sigma_m: 0.3,
            sigma_c: 0.2,
            var_m0: 0.1,
            var_c0: 0.05,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let beta = IntensityPath::constant(grid.clone(), 1.5).unwrap();
        let path = integrate_riccati(
            &beta,
            initial_covariance(&p),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for s in &path.sigmas {
            assert!(s.vm.abs() <= 1e-12 && s.vc.abs() <= 1e-12 && s.mc.abs() <= 1e-12);
            assert!(s.vv <= prev + 1e-15);
            prev = s.vv;
        }
    }

    #[test]
    fn grid_refinement_rk4_order() {
        // Constant intensity so stage values are exact; halving dt should
        // shrink the terminal error by about 2^4.
        let p = ModelParams {
            sigma_m: 0.3,
            sigma_c: 0.2,
            gamma_f: 0.4,
            gamma_c: -0.3,
            var_m0: 0.2,
            var_c0: 0.1,
            ..params()
        };
        let run = |n: usize| -> Sym3 {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let beta = IntensityPath::constant(grid.clone(), 1.0).unwrap();
            *integrate_riccati(
                &beta,
                initial_covariance(&p),
                &p,
                &RiccatiOptions::default(),
            )
            .unwrap()
            .sigmas
            .last()
            .unwrap()
        };
        let reference = run(2048);
        let err = |s: &Sym3| -> f64 {
            s.sub(&reference)
                .entries()
                .iter()
                .fold(0.0f64, |a, x| a.max(x.abs()))
        };
        let e1 = err(&run(32));
        let e2 = err(&run(64));
        assert!(e2 <= e1 / 8.0, "e1 = {e1}, e2 = {e2}");
    }

    #[test]
    fn scan_finds_monotone_bracket() {
        let p = ModelParams {
            sigma_m: 0.5,
            sigma_c: 0.5,
            var_m0: 1.0,
            var_c0: 1.0,
            gamma_f: 1.0,
            gamma_c: 1.0,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let beta = IntensityPath::constant(grid.clone(), 1.0).unwrap();
        let h_grid: Vec<f64> = (0..12).map(|k| 10.0f64.powf(k as f64 / 2.0)).collect();
        let scan = scan_blowup(&p, &beta, &h_grid, &ScanOptions::default()).unwrap();
        let (lo, hi) = scan.bracket.expect("expected a breakdown in range");
        assert!(lo < hi);
        assert!(hi - lo <= 1e-3 * hi);
        assert!(scan.monotone, "violations at {:?}", scan.violations);
        let broke: Vec<_> = scan
            .records
            .iter()
            .filter_map(|r| match r.outcome {
                ScanOutcome::Breakdown { time, mode } => Some((time, mode)),
                ScanOutcome::Completed => None,
            })
            .collect();
        assert!(!broke.is_empty());
        for (time, _) in broke {
            assert!(time < 1.0 + 1e-12);
        }
    }

    #[test]
    fn scan_reports_no_breakdown_in_weak_range() {
        let p = ModelParams {
            sigma_m: 0.2,
            sigma_c: 0.2,
            var_m0: 0.04,
            var_c0: 0.04,
            gamma_f: 1.0,
            gamma_c: 0.0,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let beta = IntensityPath::constant(grid.clone(), 1.0).unwrap();
        let h_grid = [1e-4, 1e-3, 1e-2, 0.1];
        let scan = scan_blowup(&p, &beta, &h_grid, &ScanOptions::default()).unwrap();
        assert!(scan.h_star_estimate.is_none());
        assert!(scan.bracket.is_none());
        assert!(scan.monotone);
    }

    #[test]
    fn scan_rejects_bad_grid() {
        let p = params();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let beta = IntensityPath::constant(grid, 1.0).unwrap();
        assert!(scan_blowup(&p, &beta, &[], &ScanOptions::default()).is_err());
        assert!(scan_blowup(&p, &beta, &[2.0, 1.0], &ScanOptions::default()).is_err());
    }
}
