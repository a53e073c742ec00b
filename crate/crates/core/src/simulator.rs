//! Euler-Maruyama Monte Carlo of the full market: fundamental draw, momentum
//! and contrarian positions kicked by realized price changes, aggregate
//! order flow, and the discrete Kalman-Bucy price update running at the same
//! step size as the paths.
//!
//! The insider trades theta = beta (v - P); its publicly known -beta P dt
//! part of the order-flow drift is added back before the filter innovation
//! so the observation matches the state map C = (beta, gamma_f, gamma_c).

use crate::equilibrium::{expected_profit, IntensityPath};
use crate::error::{Error, Result};
use crate::model::{initial_covariance, CovMatrix, ModelParams, StateVec, TimeGrid};
use crate::riccati::{integrate_riccati, CovPath, RiccatiOptions};
use crate::rng::{Channel, PathRng};
use serde::Serialize;

/// One simulated market path with full trajectories.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub seed: u64,
    pub grid: TimeGrid,
    /// Fundamental value (constant along the path).
    pub v: f64,
    pub m: Vec<f64>,
    pub c: Vec<f64>,
    /// Cumulated drift-noise contribution to order flow.
    pub eps_state: Vec<f64>,
    pub y: Vec<f64>,
    pub price: Vec<f64>,
    pub theta: Vec<f64>,
    /// theta_k (v - P_k) dt per step.
    pub wealth_increment: Vec<f64>,
    pub x_t: f64,
    pub filter_diverged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub riccati: RiccatiOptions,
    /// Initial covariance for the filter; defaults to the model prior.
    pub sigma0: Option<CovMatrix>,
    /// Number of rational-pricing checkpoints collected by the Monte Carlo
    /// aggregation.
    pub checkpoints: usize,
    /// Sustained shift of the momentum position's reversion level, unknown
    /// to the filter. Linear-response probe for the price DC gain.
    pub m_level_shift: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            riccati: RiccatiOptions::default(),
            sigma0: None,
            checkpoints: 10,
            m_level_shift: 0.0,
        }
    }
}

const AUTOCORR_LAGS: usize = 5;

/// Per-path sufficient statistics for the Monte Carlo summary.
struct PathStats {
    x_t: f64,
    vp_at_checkpoints: Vec<f64>,
    // Pooled regression of theta increments on lagged order-flow increments.
    reg_n: f64,
    reg_sx: f64,
    reg_sy: f64,
    reg_sxx: f64,
    reg_sxy: f64,
    reg_syy: f64,
    // Price-increment moments and lagged products.
    dp_n: f64,
    dp_sum: f64,
    dp_sumsq: f64,
    dp_lag: [f64; AUTOCORR_LAGS],
    dp_lag_n: [f64; AUTOCORR_LAGS],
}

struct PathRunner<'a> {
    p: &'a ModelParams,
    beta: &'a IntensityPath,
    cov: &'a CovPath,
    checkpoints: &'a [usize],
    m_shift: f64,
}

impl<'a> PathRunner<'a> {
    /// Advance one full path; `record` toggles trajectory storage.
    fn run(&self, seed: u64, path_index: u64, record: bool) -> (Option<PathRecord>, PathStats) {
        let p = self.p;
        let grid = &self.beta.grid;
        let n = grid.n_steps;
        let dt = grid.dt();
        let sqdt = dt.sqrt();
        let rng = PathRng::new(seed, path_index);

        let v = p.sigma_v * rng.normal(Channel::FundamentalDraw, u64::MAX);
        let mut m = self.m_shift + p.var_m0.sqrt() * rng.normal(Channel::Momentum, u64::MAX);
        let mut c = p.var_c0.sqrt() * rng.normal(Channel::Contrarian, u64::MAX);
        let mut xhat = StateVec::default();
        let mut price = 0.0;
        let mut y = 0.0;
        let mut eps_cum = 0.0;
        let mut x_t = 0.0;
        let mut diverged = false;

        let mut rec = record.then(|| PathRecord {
            seed,
            grid: grid.clone(),
            v,
            m: Vec::with_capacity(n + 1),
            c: Vec::with_capacity(n + 1),
            eps_state: Vec::with_capacity(n + 1),
            y: Vec::with_capacity(n + 1),
            price: Vec::with_capacity(n + 1),
            theta: Vec::with_capacity(n + 1),
            wealth_increment: Vec::with_capacity(n),
            x_t: 0.0,
            filter_diverged: false,
        });
        if let Some(r) = rec.as_mut() {
            r.m.push(m);
            r.c.push(c);
            r.eps_state.push(eps_cum);
            r.y.push(y);
            r.price.push(price);
        }

        let mut stats = PathStats {
            x_t: 0.0,
            vp_at_checkpoints: Vec::with_capacity(self.checkpoints.len()),
            reg_n: 0.0,
            reg_sx: 0.0,
            reg_sy: 0.0,
            reg_sxx: 0.0,
            reg_sxy: 0.0,
            reg_syy: 0.0,
            dp_n: 0.0,
            dp_sum: 0.0,
            dp_sumsq: 0.0,
            dp_lag: [0.0; AUTOCORR_LAGS],
            dp_lag_n: [0.0; AUTOCORR_LAGS],
        };
        let mut checkpoint_iter = self.checkpoints.iter().peekable();
        if let Some(&&0) = checkpoint_iter.peek() {
            stats.vp_at_checkpoints.push(v - price);
            checkpoint_iter.next();
        }

        let mut dp_hist = [0.0f64; AUTOCORR_LAGS];
        let mut prev_dy = 0.0;

        for k in 0..n {
            let beta_k = self.beta.values[k];
            let theta = beta_k * (v - price);
            let dw = sqdt * rng.normal(Channel::OrderFlow, k as u64);
            let dbm = sqdt * rng.normal(Channel::Momentum, k as u64);
            let dbc = sqdt * rng.normal(Channel::Contrarian, k as u64);
            let deps = p.sigma_eps * sqdt * rng.normal(Channel::DriftNoise, k as u64);
            let dy = theta * dt + (p.gamma_f * m + p.gamma_c * c) * dt + deps + p.sigma_z * dw;

            // Known offset: theta carries -beta P dt relative to C x.
            let dy_filter = dy + beta_k * price * dt;
            let sigma_k = &self.cov.sigmas[k];
            let cvec = [beta_k, p.gamma_f, p.gamma_c];
            let innovation =
                dy_filter - (cvec[0] * xhat.v + cvec[1] * xhat.m + cvec[2] * xhat.c) * dt;
            // One-step posterior gain: the innovation variance over a step
            // is R dt + C Sigma C^T dt^2, so the dt-consistent gain is
            // Sigma C^T / (R + C Sigma C^T dt). Using the continuous gain
            // Sigma C^T / R here leaves an O(dt) predictable component in
            // the price that the inconspicuousness regression picks up.
            let sig_c = sigma_k.mul_vec(&cvec);
            let denom = p.obs_variance() + sigma_k.quad_form(&cvec, &cvec) * dt;
            let gain = [sig_c[0] / denom, sig_c[1] / denom, sig_c[2] / denom];
            let dp = gain[0] * innovation;

            xhat = StateVec {
                v: xhat.v + gain[0] * innovation,
                m: xhat.m - p.alpha_m * xhat.m * dt + gain[1] * innovation + p.kappa_m * dp,
                c: xhat.c - p.alpha_c * xhat.c * dt + gain[2] * innovation - p.kappa_c * dp,
            };
            if !(xhat.v.is_finite() && xhat.m.is_finite() && xhat.c.is_finite()) {
                diverged = true;
                break;
            }

            m += -p.alpha_m * (m - self.m_shift) * dt + p.kappa_m * dp + p.sigma_m * dbm;
            c += -p.alpha_c * c * dt - p.kappa_c * dp + p.sigma_c * dbc;
            let wealth = theta * (v - price) * dt;
            x_t += wealth;
            y += dy;
            eps_cum += deps;
            let new_price = xhat.v;
            if !new_price.is_finite() {
                diverged = true;
                break;
            }

            // Inconspicuousness regression sample: this step's insider order
            // flow against the previous step's total order-flow increment.
            if k >= 1 {
                let x = prev_dy;
                let ysamp = theta * dt;
                stats.reg_n += 1.0;
                stats.reg_sx += x;
                stats.reg_sy += ysamp;
                stats.reg_sxx += x * x;
                stats.reg_sxy += x * ysamp;
                stats.reg_syy += ysamp * ysamp;
            }
            prev_dy = dy;

            let dp_realized = new_price - price;
            stats.dp_n += 1.0;
            stats.dp_sum += dp_realized;
            stats.dp_sumsq += dp_realized * dp_realized;
            for lag in 1..=AUTOCORR_LAGS {
                if k >= lag {
                    stats.dp_lag[lag - 1] += dp_realized * dp_hist[(k - lag) % AUTOCORR_LAGS];
                    stats.dp_lag_n[lag - 1] += 1.0;
                }
            }
            dp_hist[k % AUTOCORR_LAGS] = dp_realized;

            price = new_price;
            if let Some(r) = rec.as_mut() {
                r.m.push(m);
                r.c.push(c);
                r.eps_state.push(eps_cum);
                r.y.push(y);
                r.price.push(price);
                r.theta.push(theta);
                r.wealth_increment.push(wealth);
            }
            if let Some(&&ck) = checkpoint_iter.peek() {
                if ck == k + 1 {
                    stats.vp_at_checkpoints.push(v - price);
                    checkpoint_iter.next();
                }
            }
        }
        stats.x_t = x_t;
        while stats.vp_at_checkpoints.len() < self.checkpoints.len() {
            stats.vp_at_checkpoints.push(f64::NAN);
        }

        if let Some(r) = rec.as_mut() {
            // Terminal intensity node, informational only.
            r.theta.push(self.beta.values[n] * (v - price));
            r.x_t = x_t;
            r.filter_diverged = diverged;
        }
        (rec, stats)
    }
}

fn checkpoint_indices(n_steps: usize, count: usize) -> Vec<usize> {
    let count = count.max(1).min(n_steps);
    (1..=count).map(|j| (j * n_steps).div_ceil(count)).collect()
}

fn integrate_for_sim(beta: &IntensityPath, p: &ModelParams, opts: &SimOptions) -> Result<CovPath> {
    let sigma0 = opts.sigma0.unwrap_or_else(|| initial_covariance(p));
    let cov = integrate_riccati(beta, sigma0, p, &opts.riccati)?;
    if let Some(b) = cov.breakdown {
        return Err(Error::BrokenCovPath {
            time: b.time,
            mode: b.mode.as_str(),
        });
    }
    Ok(cov)
}

fn check_cov(cov: &CovPath, beta: &IntensityPath) -> Result<()> {
    if let Some(b) = cov.breakdown {
        return Err(Error::BrokenCovPath {
            time: b.time,
            mode: b.mode.as_str(),
        });
    }
    if !cov.grid.same_as(&beta.grid) {
        return Err(Error::GridMismatch(
            "covariance and intensity paths use different grids".into(),
        ));
    }
    Ok(())
}

/// Simulate a single path against a precomputed covariance path (e.g. the
/// one produced by the equilibrium solver, whose terminal layer the plain
/// fixed-step integrator cannot reproduce).
pub fn simulate_path_on(
    cov: &CovPath,
    seed: u64,
    beta: &IntensityPath,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<PathRecord> {
    check_cov(cov, beta)?;
    let checkpoints = checkpoint_indices(beta.grid.n_steps, opts.checkpoints);
    let runner = PathRunner {
        p,
        beta,
        cov,
        checkpoints: &checkpoints,
        m_shift: opts.m_level_shift,
    };
    let (rec, _) = runner.run(seed, 0, true);
    Ok(rec.expect("record requested"))
}

/// Simulate a single path with full trajectories. The covariance path is
/// integrated internally; use [`monte_carlo`] for ensembles.
pub fn simulate_path(
    seed: u64,
    beta: &IntensityPath,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<PathRecord> {
    let cov = integrate_for_sim(beta, p, opts)?;
    simulate_path_on(&cov, seed, beta, p, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct VpPoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionStat {
    pub coefficient: f64,
    pub se: f64,
}

/// Ensemble summary: profit statistics, rational-pricing profile,
/// martingale and inconspicuousness diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub n_paths: usize,
    pub mean_xt: f64,
    pub se_xt: f64,
    /// Trapezoidal integral of beta_t Sigma_vv(t) over the same grid.
    pub analytic_j: f64,
    pub mean_vp_profile: Vec<VpPoint>,
    /// Max over lags 1..=5 of |pooled autocorrelation| * sqrt(samples) for
    /// realized price increments.
    pub martingale_stat: f64,
    /// Pooled OLS of theta_k dt on the previous order-flow increment.
    pub theta_pred_stat: RegressionStat,
}

/// Run independent paths with seeds split off `base_seed` and aggregate.
/// Aggregation folds per-path statistics in path order, so the result is
/// independent of scheduling.
pub fn monte_carlo(
    n_paths: usize,
    base_seed: u64,
    beta: &IntensityPath,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<McSummary> {
    let cov = integrate_for_sim(beta, p, opts)?;
    monte_carlo_on(&cov, n_paths, base_seed, beta, p, opts)
}

/// [`monte_carlo`] against a precomputed covariance path.
pub fn monte_carlo_on(
    cov: &CovPath,
    n_paths: usize,
    base_seed: u64,
    beta: &IntensityPath,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<McSummary> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("n_paths must be at least 2".into()));
    }
    check_cov(cov, beta)?;
    let analytic_j = expected_profit(beta, cov)?;
    let checkpoints = checkpoint_indices(beta.grid.n_steps, opts.checkpoints);
    let runner = PathRunner {
        p,
        beta,
        cov,
        checkpoints: &checkpoints,
        m_shift: opts.m_level_shift,
    };

    use rayon::prelude::*;
    let stats: Vec<PathStats> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let (_, s) = runner.run(base_seed, i as u64, false);
            s
        })
        .collect();

    // Profit moments (two-pass for a stable standard error).
    let mean_xt = stats.iter().map(|s| s.x_t).sum::<f64>() / n_paths as f64;
    let var_xt = stats
        .iter()
        .map(|s| (s.x_t - mean_xt) * (s.x_t - mean_xt))
        .sum::<f64>()
        / (n_paths as f64 - 1.0);
    let se_xt = (var_xt / n_paths as f64).sqrt();

    let mean_vp_profile: Vec<VpPoint> = checkpoints
        .iter()
        .enumerate()
        .map(|(j, &node)| {
            let mean = stats.iter().map(|s| s.vp_at_checkpoints[j]).sum::<f64>() / n_paths as f64;
            let var = stats
                .iter()
                .map(|s| {
                    let d = s.vp_at_checkpoints[j] - mean;
                    d * d
                })
                .sum::<f64>()
                / (n_paths as f64 - 1.0);
            VpPoint {
                t: beta.grid.times[node],
                mean,
                se: (var / n_paths as f64).sqrt(),
            }
        })
        .collect();

    // Pooled price-increment autocorrelations.
    let dp_n: f64 = stats.iter().map(|s| s.dp_n).sum();
    let dp_mean = stats.iter().map(|s| s.dp_sum).sum::<f64>() / dp_n;
    let dp_var = stats.iter().map(|s| s.dp_sumsq).sum::<f64>() / dp_n - dp_mean * dp_mean;
    let mut martingale_stat = 0.0f64;
    if dp_var > 0.0 {
        for lag in 0..AUTOCORR_LAGS {
            let n_l: f64 = stats.iter().map(|s| s.dp_lag_n[lag]).sum();
            if n_l < 2.0 {
                continue;
            }
            let cross = stats.iter().map(|s| s.dp_lag[lag]).sum::<f64>() / n_l;
            let rho = (cross - dp_mean * dp_mean) / dp_var;
            martingale_stat = martingale_stat.max(rho.abs() * n_l.sqrt());
        }
    }

    // Pooled inconspicuousness regression.
    let rn: f64 = stats.iter().map(|s| s.reg_n).sum();
    let sx: f64 = stats.iter().map(|s| s.reg_sx).sum();
    let sy: f64 = stats.iter().map(|s| s.reg_sy).sum();
    let sxx: f64 = stats.iter().map(|s| s.reg_sxx).sum();
    let sxy: f64 = stats.iter().map(|s| s.reg_sxy).sum();
    let syy: f64 = stats.iter().map(|s| s.reg_syy).sum();
    let cxx = sxx - sx * sx / rn;
    let cxy = sxy - sx * sy / rn;
    let cyy = syy - sy * sy / rn;
    let coefficient = cxy / cxx;
    let resid = (cyy - coefficient * cxy).max(0.0);
    let se = (resid / ((rn - 2.0) * cxx)).sqrt();

    Ok(McSummary {
        n_paths,
        mean_xt,
        se_xt,
        analytic_j,
        mean_vp_profile,
        martingale_stat,
        theta_pred_stat: RegressionStat { coefficient, se },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn classical_truncated(p: &ModelParams, n: usize) -> IntensityPath {
        let grid = TimeGrid::new(0.99 * p.horizon, n).unwrap();
        IntensityPath::classical(p, grid, 1e6)
    }

    #[test]
    fn no_trading_no_signal_means_flat_price_and_zero_wealth() {
        let p = params();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let beta = IntensityPath::zero(grid);
        let rec = simulate_path(7, &beta, &p, &SimOptions::default()).unwrap();
        for &pr in &rec.price {
            assert_eq!(pr, 0.0);
        }
        assert_eq!(rec.x_t, 0.0);
    }

    #[test]
    fn wealth_bookkeeping_identity() {
        let p = params();
        let beta = classical_truncated(&p, 500);
        let rec = simulate_path(42, &beta, &p, &SimOptions::default()).unwrap();
        let sum: f64 = rec.wealth_increment.iter().sum();
        assert!((rec.x_t - sum).abs() <= 1e-12 * (1.0 + rec.x_t.abs()));
    }

    #[test]
    fn integration_by_parts_identity() {
        // X_T = Theta_N (v - P_N) + sum_k Theta_{k+1} (P_{k+1} - P_k),
        // exactly, path by path.
        let p = ModelParams {
            sigma_m: 0.2,
            sigma_c: 0.1,
            gamma_f: 0.2,
            gamma_c: -0.1,
            kappa_m: 0.1,
            kappa_c: 0.05,
            var_m0: 0.02,
            var_c0: 0.02,
            ..params()
        };
        let beta = classical_truncated(&p, 500);
        let dt = beta.grid.dt();
        for seed in [1u64, 2, 3] {
            let rec = simulate_path(seed, &beta, &p, &SimOptions::default()).unwrap();
            let n = rec.wealth_increment.len();
            let mut theta_cum = 0.0;
            let mut by_parts = 0.0;
            for k in 0..n {
                theta_cum += rec.theta[k] * dt;
                by_parts += theta_cum * (rec.price[k + 1] - rec.price[k]);
            }
            by_parts += theta_cum * (rec.v - rec.price[n]);
            assert!(
                (rec.x_t - by_parts).abs() <= 1e-8 * (1.0 + rec.x_t.abs()),
                "direct {} vs by-parts {}",
                rec.x_t,
                by_parts
            );
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_paths() {
        let p = ModelParams {
            sigma_m: 0.3,
            gamma_f: 0.2,
            kappa_m: 0.1,
            var_m0: 0.05,
            ..params()
        };
        let beta = classical_truncated(&p, 300);
        let a = simulate_path(99, &beta, &p, &SimOptions::default()).unwrap();
        let b = simulate_path(99, &beta, &p, &SimOptions::default()).unwrap();
        assert_eq!(a.price, b.price);
        assert_eq!(a.m, b.m);
        assert_eq!(a.x_t, b.x_t);
        let c = simulate_path(100, &beta, &p, &SimOptions::default()).unwrap();
        assert_ne!(a.price, c.price);
    }

    #[test]
    fn profit_matches_analytic_value_within_three_ses() {
        let p = params();
        let beta = classical_truncated(&p, 500);
        let mc = monte_carlo(4000, 2026, &beta, &p, &SimOptions::default()).unwrap();
        let gap = (mc.mean_xt - mc.analytic_j).abs();
        assert!(
            gap <= 3.0 * mc.se_xt,
            "mean {} analytic {} se {}",
            mc.mean_xt,
            mc.analytic_j,
            mc.se_xt
        );
    }

    #[test]
    fn rational_pricing_and_inconspicuousness() {
        let p = ModelParams {
            sigma_m: 0.2,
            sigma_c: 0.2,
            gamma_f: 0.15,
            gamma_c: -0.1,
            kappa_m: 0.1,
            kappa_c: 0.05,
            var_m0: 0.02,
            var_c0: 0.02,
            ..params()
        };
        let beta = classical_truncated(&p, 400);
        let mc = monte_carlo(4000, 7, &beta, &p, &SimOptions::default()).unwrap();
        for pt in &mc.mean_vp_profile {
            assert!(
                pt.mean.abs() <= 3.0 * pt.se,
                "t = {}: mean {} se {}",
                pt.t,
                pt.mean,
                pt.se
            );
        }
        let reg = &mc.theta_pred_stat;
        assert!(
            reg.coefficient.abs() <= 3.0 * reg.se,
            "slope {} se {}",
            reg.coefficient,
            reg.se
        );
        assert!(mc.martingale_stat <= 3.0, "stat {}", mc.martingale_stat);
    }

    #[test]
    fn se_shrinks_like_sqrt_n() {
        let p = params();
        let beta = classical_truncated(&p, 200);
        let a = monte_carlo(2000, 5, &beta, &p, &SimOptions::default()).unwrap();
        let b = monte_carlo(4000, 5, &beta, &p, &SimOptions::default()).unwrap();
        let ratio = a.se_xt / b.se_xt;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() <= 0.1 * std::f64::consts::SQRT_2,
            "ratio {ratio}"
        );
    }

    #[test]
    fn ou_positions_reach_stationary_variance() {
        let p = ModelParams {
            sigma_m: 0.4,
            sigma_c: 0.3,
            alpha_m: 1.5,
            alpha_c: 1.0,
            horizon: 6.0,
            ..params()
        };
        let grid = TimeGrid::new(6.0, 1200).unwrap();
        let beta = IntensityPath::constant(grid, 1.0).unwrap();
        let n = 4000;
        let mut m_final = Vec::with_capacity(n);
        let mut c_final = Vec::with_capacity(n);
        let opts = SimOptions::default();
        for seed in 0..n {
            let rec = simulate_path(seed as u64, &beta, &p, &opts).unwrap();
            m_final.push(*rec.m.last().unwrap());
            c_final.push(*rec.c.last().unwrap());
        }
        let check = |xs: &[f64], sigma: f64, alpha: f64| {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var =
                xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0);
            let target = sigma * sigma / (2.0 * alpha);
            // Var of the sample variance of a Gaussian: 2 var^2 / (n - 1).
            let se = (2.0 * var * var / (xs.len() as f64 - 1.0)).sqrt();
            assert!(
                (var - target).abs() <= 3.0 * se,
                "var {var} target {target} se {se}"
            );
        };
        check(&m_final, 0.4, 1.5);
        check(&c_final, 0.3, 1.0);
    }

    #[test]
    fn monte_carlo_needs_two_paths() {
        let p = params();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let beta = IntensityPath::zero(grid);
        assert!(monte_carlo(1, 0, &beta, &p, &SimOptions::default()).is_err());
    }
}
