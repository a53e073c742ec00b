//! First-order sensitivity of the covariance flow in the momentum exposure
//! gamma_f, and comparative statics of the equilibrium around h = 0.
//!
//! The sensitivity S1 = d Sigma / d gamma_f at gamma_f = 0 solves the linear
//! nonhomogeneous ODE dS1 = L_t[S1] + forcing(t) with S1(0) = 0, where L_t
//! is the Riccati flow linearized around the baseline and the forcing comes
//! from the measurement vector's dependence on gamma_f. S1 is propagated by
//! co-integration alongside the baseline instead of assembling the
//! state-transition family, which is the same variation-of-constants
//! solution evaluated without storing it.

use crate::equilibrium::{
    expected_profit, l2_distance, solve_pontryagin, EquilibriumSolution, IntensityPath,
    SolveOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Sym3};
use crate::model::{drift_matrix, ModelParams, TimeGrid};
use crate::riccati::{beta_stage, rhs_raw, CovPath, RiccatiOptions};
use serde::Serialize;

/// Linearized Riccati operator at the h = 0 baseline:
/// L[H] = A H + H A^T - (H C0^T C0 S0 + S0 C0^T C0 H) / R, C0 = (beta, 0, 0).
pub fn linearized_rhs(h: &Sym3, sigma0: &Sym3, beta0_t: f64, p: &ModelParams) -> Sym3 {
    let a = drift_matrix(p);
    let r = p.obs_variance();
    let hm = h.to_mat();
    let lyap = a.mul(&hm).add(&hm.mul(&a.transpose()));
    // H e1 e1^T S0 + S0 e1 e1^T H = u w^T + w u^T with u = H e1, w = S0 e1.
    let u = [h.vv, h.vm, h.vc];
    let w = [sigma0.vv, sigma0.vm, sigma0.vc];
    let quad = Mat3::outer(&u, &w)
        .add(&Mat3::outer(&w, &u))
        .scale(beta0_t * beta0_t / r);
    Sym3::from_mat(&lyap.add(&quad.scale(-1.0)))
}

/// Forcing term of the sensitivity ODE:
/// -(S0 e2 (C0 S0) + (S0 C0^T) e2^T S0) / R; its (1,1) entry is
/// -2 beta Sigma_vv Sigma_vm / R.
pub fn forcing_term(sigma0: &Sym3, beta0_t: f64, p: &ModelParams) -> Sym3 {
    let r = p.obs_variance();
    let u = [sigma0.vm, sigma0.mm, sigma0.mc]; // S0 e2
    let w = [sigma0.vv, sigma0.vm, sigma0.vc]; // S0 e1
    let m = Mat3::outer(&u, &w)
        .add(&Mat3::outer(&w, &u))
        .scale(-beta0_t / r);
    Sym3::from_mat(&m)
}

/// Baseline-plus-sensitivity trajectory.
#[derive(Debug, Clone)]
pub struct SensitivityPath {
    pub grid: TimeGrid,
    pub sigma1: Vec<Sym3>,
    /// d Sigma_vv(t) / d gamma_f, the (1,1) entry of sigma1.
    pub dvv: Vec<f64>,
}

pub(crate) fn integrate_sensitivity_scaled(
    cov_path0: &CovPath,
    beta0: &IntensityPath,
    p: &ModelParams,
    opts: &RiccatiOptions,
    forcing_scale: f64,
) -> Result<SensitivityPath> {
    if let Some(b) = cov_path0.breakdown {
        return Err(Error::BrokenCovPath {
            time: b.time,
            mode: b.mode.as_str(),
        });
    }
    if !cov_path0.grid.same_as(&beta0.grid) {
        return Err(Error::GridMismatch(
            "baseline covariance and intensity use different grids".into(),
        ));
    }
    // The expansion point is h = 0: the baseline is re-propagated with the
    // exposures zeroed so stage values stay consistent with the sensitivity.
    let p0 = ModelParams {
        gamma_f: 0.0,
        gamma_c: 0.0,
        ..*p
    };
    let grid = cov_path0.grid.clone();
    let dt = grid.dt();
    let m = opts.substeps.max(1);
    let h = dt / m as f64;

    let mut s0 = cov_path0.sigmas[0];
    let mut s1 = Sym3::zeros();
    let mut sigma1 = Vec::with_capacity(grid.len());
    sigma1.push(s1);

    let joint_rhs = |s0: &Sym3, s1: &Sym3, b: f64| -> (Sym3, Sym3) {
        (
            rhs_raw(s0, b, &p0),
            linearized_rhs(s1, s0, b, &p0).add(&forcing_term(s0, b, &p0).scale(forcing_scale)),
        )
    };

    for k in 0..grid.n_steps {
        let (bl, br) = (beta0.values[k], beta0.values[k + 1]);
        for j in 0..m {
            let t0 = j as f64 / m as f64;
            let t1 = (j + 1) as f64 / m as f64;
            let (b0, bm, b1) = (
                beta_stage(bl, br, t0),
                beta_stage(bl, br, 0.5 * (t0 + t1)),
                beta_stage(bl, br, t1),
            );
            let (k1a, k1b) = joint_rhs(&s0, &s1, b0);
            let (k2a, k2b) = joint_rhs(&s0.axpy(0.5 * h, &k1a), &s1.axpy(0.5 * h, &k1b), bm);
            let (k3a, k3b) = joint_rhs(&s0.axpy(0.5 * h, &k2a), &s1.axpy(0.5 * h, &k2b), bm);
            let (k4a, k4b) = joint_rhs(&s0.axpy(h, &k3a), &s1.axpy(h, &k3b), b1);
            s0 = s0
                .axpy(h / 6.0, &k1a)
                .axpy(h / 3.0, &k2a)
                .axpy(h / 3.0, &k3a)
                .axpy(h / 6.0, &k4a);
            s1 = s1
                .axpy(h / 6.0, &k1b)
                .axpy(h / 3.0, &k2b)
                .axpy(h / 3.0, &k3b)
                .axpy(h / 6.0, &k4b);
        }
        if !s1.is_finite() {
            return Err(Error::NonFinite { field: "sigma1" });
        }
        sigma1.push(s1);
    }

    let dvv = sigma1.iter().map(|s| s.vv).collect();
    Ok(SensitivityPath { grid, sigma1, dvv })
}

/// Forward co-integration of the gamma_f sensitivity alongside the baseline
/// flow (starting from S1(0) = 0).
pub fn integrate_sensitivity(
    cov_path0: &CovPath,
    beta0: &IntensityPath,
    p: &ModelParams,
    opts: &RiccatiOptions,
) -> Result<SensitivityPath> {
    integrate_sensitivity_scaled(cov_path0, beta0, p, opts, 1.0)
}

/// Central-difference comparative statics of the equilibrium in gamma_f,
/// with the tangent-linear prediction for comparison.
///
/// The profiles are reported on the truncated grid: past it the terminal
/// condition pins Sigma_vv(T) for every solve, so the shift there reflects
/// the shooting target rather than the feedback response.
#[derive(Debug, Clone, Serialize)]
pub struct ComparativeStatics {
    pub eps: f64,
    pub d_j_d_gamma_f: f64,
    /// dt-L2 norm of the intensity response per unit gamma_f, on the
    /// truncated grid.
    pub d_beta_norm: f64,
    /// Per-node central-difference shift of Sigma_vv.
    pub d_sigma_vv: Vec<f64>,
    /// Per-node tangent-linear prediction of the same shift (at the frozen
    /// baseline intensity).
    pub linear_dvv: Vec<f64>,
}

pub fn comparative_statics(
    sol0: &EquilibriumSolution,
    p: &ModelParams,
    eps: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<ComparativeStatics> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::MustBePositive { field: "eps" });
    }
    let solve_at = |gamma_f: f64| -> Result<EquilibriumSolution> {
        let ps = ModelParams { gamma_f, ..*p };
        solve_pontryagin(&ps, &sol0.beta_star, tol, opts)
    };
    let (plus, minus) = rayon::join(|| solve_at(p.gamma_f + eps), || solve_at(p.gamma_f - eps));
    let (plus, minus) = (plus?, minus?);

    let j_plus = expected_profit(&plus.beta_star, &plus.cov_path)?;
    let j_minus = expected_profit(&minus.beta_star, &minus.cov_path)?;
    let d_j_d_gamma_f = (j_plus - j_minus) / (2.0 * eps);

    let n_trunc = sol0.beta_star.grid.truncated_len();
    let d_beta_norm = l2_distance(&plus.beta_star, &minus.beta_star, n_trunc)? / (2.0 * eps);

    let d_sigma_vv: Vec<f64> = plus.cov_path.sigmas[..n_trunc]
        .iter()
        .zip(&minus.cov_path.sigmas[..n_trunc])
        .map(|(a, b)| (a.vv - b.vv) / (2.0 * eps))
        .collect();

    // Tangent-linear prediction on the truncated grid; the baseline
    // intensity is bounded there so the plain fixed-step co-integration is
    // well resolved.
    let grid0 = &sol0.beta_star.grid;
    let trunc_grid = TimeGrid::new(
        grid0.horizon * (n_trunc - 1) as f64 / grid0.n_steps as f64,
        n_trunc - 1,
    )?;
    let beta_trunc = IntensityPath::new(
        trunc_grid.clone(),
        sol0.beta_star.values[..n_trunc].to_vec(),
    )?;
    let cov_trunc = CovPath {
        grid: trunc_grid,
        sigmas: sol0.cov_path.sigmas[..n_trunc].to_vec(),
        breakdown: None,
    };
    let linear = integrate_sensitivity(&cov_trunc, &beta_trunc, p, &RiccatiOptions::default())?;

    Ok(ComparativeStatics {
        eps,
        d_j_d_gamma_f,
        d_beta_norm,
        d_sigma_vv,
        linear_dvv: linear.dvv,
    })
}
