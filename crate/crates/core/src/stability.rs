//! Closed-loop stability of the (m, c) feedback block: price DC gains, the
//! rank-one feedback matrix F, the effective matrix A_eff = -diag(alpha) + F,
//! the spectral-radius sufficient condition, and the induced-norm variants.

use crate::equilibrium::IntensityPath;
use crate::error::{Error, Result};
use crate::linalg::{eig2, spectral_radius2, Mat3, Vec3};
use crate::model::{drift_matrix, ModelParams};
use crate::riccati::CovPath;
use serde::Serialize;

/// How the time-varying filter is frozen into the constant (K_bar, M_bar)
/// used by the DC-gain linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingWindow {
    /// Uniform average over the truncated grid.
    TruncatedGrid,
    /// Freeze at the last truncated node.
    Terminal,
}

/// Stationary price response to sustained unit shifts of the m and c
/// positions through the order-flow exposures.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DcGains {
    pub g_m: f64,
    pub g_c: f64,
    /// Shared scalar response e1^T (-M_bar)^-1 K_bar; g_m = gamma_f * g and
    /// g_c = gamma_c * g.
    pub response: f64,
}

/// Freeze the filter and return the stationary price gains. Errors when the
/// frozen error matrix is not Hurwitz (no stationary response exists).
pub fn dc_gains(
    cov_path: &CovPath,
    beta: &IntensityPath,
    p: &ModelParams,
    window: AveragingWindow,
) -> Result<DcGains> {
    if let Some(b) = cov_path.breakdown {
        return Err(Error::BrokenCovPath {
            time: b.time,
            mode: b.mode.as_str(),
        });
    }
    if !cov_path.grid.same_as(&beta.grid) {
        return Err(Error::GridMismatch(
            "covariance and intensity paths use different grids".into(),
        ));
    }
    let n_trunc = cov_path.grid.truncated_len().min(cov_path.sigmas.len());
    let r = p.obs_variance();
    let (k_bar, beta_bar) = match window {
        AveragingWindow::TruncatedGrid => {
            let mut acc: Vec3 = [0.0; 3];
            let mut bacc = 0.0;
            for k in 0..n_trunc {
                let c: Vec3 = [beta.values[k], p.gamma_f, p.gamma_c];
                let kk = cov_path.sigmas[k].mul_vec(&c);
                for i in 0..3 {
                    acc[i] += kk[i] / r;
                }
                bacc += beta.values[k];
            }
            let inv = 1.0 / n_trunc as f64;
            ([acc[0] * inv, acc[1] * inv, acc[2] * inv], bacc * inv)
        }
        AveragingWindow::Terminal => {
            let k = n_trunc - 1;
            let c: Vec3 = [beta.values[k], p.gamma_f, p.gamma_c];
            let kk = cov_path.sigmas[k].mul_vec(&c);
            ([kk[0] / r, kk[1] / r, kk[2] / r], beta.values[k])
        }
    };
    let c_bar: Vec3 = [beta_bar, p.gamma_f, p.gamma_c];
    let m_bar = drift_matrix(p).add(&Mat3::outer(&k_bar, &c_bar).scale(-1.0));
    if m_bar.max_real_eigenvalue() >= 0.0 {
        return Err(Error::NotHurwitz);
    }
    let x = m_bar.scale(-1.0).solve(&k_bar).ok_or(Error::NotHurwitz)?;
    let response = x[0];
    Ok(DcGains {
        g_m: p.gamma_f * response,
        g_c: p.gamma_c * response,
        response,
    })
}

/// F = [[kappa_m G_m, kappa_m G_c], [-kappa_c G_m, -kappa_c G_c]]; rank one
/// by construction.
pub fn feedback_matrix(g_m: f64, g_c: f64, p: &ModelParams) -> [[f64; 2]; 2] {
    [
        [p.kappa_m * g_m, p.kappa_m * g_c],
        [-p.kappa_c * g_m, -p.kappa_c * g_c],
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub g_m: f64,
    pub g_c: f64,
    pub f: [[f64; 2]; 2],
    pub a_eff: [[f64; 2]; 2],
    pub rho_f: f64,
    pub norm_inf: f64,
    pub norm_1: f64,
    pub min_alpha: f64,
    pub a_eff_max_re: f64,
    pub spectral_ok: bool,
    pub norm_inf_ok: bool,
    pub norm_1_ok: bool,
    pub hurwitz: bool,
}

/// Evaluate the sufficient conditions for the given feedback matrix. The
/// gains are carried through for reporting.
pub fn check_stability(f: [[f64; 2]; 2], g_m: f64, g_c: f64, p: &ModelParams) -> StabilityReport {
    let rho_f = spectral_radius2(&f);
    let norm_inf = (f[0][0].abs() + f[0][1].abs()).max(f[1][0].abs() + f[1][1].abs());
    let norm_1 = (f[0][0].abs() + f[1][0].abs()).max(f[0][1].abs() + f[1][1].abs());
    let min_alpha = p.alpha_m.min(p.alpha_c);
    let a_eff = [
        [-p.alpha_m + f[0][0], f[0][1]],
        [f[1][0], -p.alpha_c + f[1][1]],
    ];
    let a_eff_max_re = {
        let [(r1, _), (r2, _)] = eig2(&a_eff);
        r1.max(r2)
    };
    StabilityReport {
        g_m,
        g_c,
        f,
        a_eff,
        rho_f,
        norm_inf,
        norm_1,
        min_alpha,
        a_eff_max_re,
        spectral_ok: rho_f < min_alpha,
        norm_inf_ok: norm_inf < min_alpha,
        norm_1_ok: norm_1 < min_alpha,
        hurwitz: a_eff_max_re < 0.0,
    }
}

/// Full pipeline: freeze the filter, form F and evaluate the conditions.
pub fn stability_report(
    cov_path: &CovPath,
    beta: &IntensityPath,
    p: &ModelParams,
    window: AveragingWindow,
) -> Result<StabilityReport> {
    let gains = dc_gains(cov_path, beta, p, window)?;
    let f = feedback_matrix(gains.g_m, gains.g_c, p);
    Ok(check_stability(f, gains.g_m, gains.g_c, p))
}
