//! Equilibrium intensity solver.
//!
//! The insider's optimum is characterized by a coupled forward-backward
//! system: the forward covariance Riccati flow under the intensity path, a
//! backward symmetric adjoint ODE with terminal value p * e1 e1^T (p a scalar
//! multiplier enforcing full terminal revelation), and a pointwise
//! first-order condition linking the two. The solver runs a damped Picard
//! iteration on the intensity inside a bisection on the multiplier.
//!
//! The terminal condition drives Sigma_vv(T) toward zero, so the optimal
//! intensity grows like 1/Sigma_vv near T. The solver's internal sweeps
//! therefore refine steps with a deterministic substep ladder whenever a
//! step fails basic sanity checks; the public fixed-step integrator in
//! [`crate::riccati`] is left untouched.

use crate::error::{Error, Result};
use crate::filter::{price_impact, LambdaVariant};
use crate::linalg::{Sym3, Vec3};
use crate::model::{initial_covariance, measurement_vec, CovMatrix, ModelParams, TimeGrid};
use crate::riccati::{
    advance_interval, beta_stage, check_node, integrate_riccati, Breakdown, CovPath, RiccatiOptions,
};
use serde::Serialize;

/// Deterministic insider intensity on a time grid, nonnegative by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl IntensityPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "intensity has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: "beta" });
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::MustBeNonnegative { field: "beta" });
        }
        Ok(IntensityPath { grid, values })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        let values = vec![0.0; grid.len()];
        IntensityPath { grid, values }
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        let values = vec![value; grid.len()];
        Self::new(grid, values)
    }

    /// Classical h = 0 intensity sigma_z sqrt(T) / (sigma_v (T - t)),
    /// clamped at `beta_max` where the closed form is singular.
    pub fn classical(p: &ModelParams, grid: TimeGrid, beta_max: f64) -> Self {
        let scale = p.sigma_z * p.horizon.sqrt() / p.sigma_v;
        let values = grid
            .times
            .iter()
            .map(|&t| {
                let rem = p.horizon - t;
                if rem <= scale / beta_max {
                    beta_max
                } else {
                    scale / rem
                }
            })
            .collect();
        IntensityPath { grid, values }
    }

    /// Discrete L2 norm with dt weight over the first `n_nodes` nodes.
    pub fn l2_norm(&self, n_nodes: usize) -> f64 {
        l2_dt(
            &self.values[..n_nodes.min(self.values.len())],
            self.grid.dt(),
        )
    }

    /// Restriction to the truncated grid [0, T - 10 dt], same spacing. The
    /// terminal layer of an equilibrium path is singular; diagnostics that
    /// re-integrate the flow under perturbed intensities live here.
    pub fn truncated(&self) -> Result<IntensityPath> {
        let n_nodes = self.grid.truncated_len();
        let grid = TimeGrid::new(
            self.grid.horizon * (n_nodes - 1) as f64 / self.grid.n_steps as f64,
            n_nodes - 1,
        )?;
        IntensityPath::new(grid, self.values[..n_nodes].to_vec())
    }
}

pub(crate) fn l2_dt(values: &[f64], dt: f64) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * dt).sqrt()
}

/// dt-weighted L2 distance over the first `n_nodes` nodes of two paths on
/// the same grid.
pub fn l2_distance(a: &IntensityPath, b: &IntensityPath, n_nodes: usize) -> Result<f64> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch("intensity paths differ in grid".into()));
    }
    let n = n_nodes.min(a.values.len());
    let dt = a.grid.dt();
    Ok((a.values[..n]
        .iter()
        .zip(&b.values[..n])
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        * dt)
        .sqrt())
}

/// Backward adjoint trajectory; terminal value is p_multiplier at the (1,1)
/// slot and zero elsewhere.
#[derive(Debug, Clone)]
pub struct AdjointPath {
    pub grid: TimeGrid,
    pub matrices: Vec<Sym3>,
    pub p_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// Sigma_vv(T) left over by the multiplier shooting (absolute).
    pub terminal_gap: f64,
    /// Relative dt-L2 gap between the intensity and its best response on the
    /// truncated grid.
    pub fixed_point_gap: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub beta_star: IntensityPath,
    pub cov_path: CovPath,
    pub adjoint: AdjointPath,
    pub lambda_path: Vec<f64>,
    pub profit_j: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the shooting map p -> Sigma_vv(T) looked monotone across all
    /// evaluations of this run.
    pub monotone_shooting: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Picard iteration budget per multiplier evaluation.
    pub max_iters: usize,
    /// Initial relaxation weight, halved when the residual increases.
    pub damping: f64,
    pub beta_max: f64,
    pub lambda_variant: LambdaVariant,
    pub psd_tol: f64,
    /// Initial covariance; defaults to the model prior.
    pub sigma0: Option<CovMatrix>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 80,
            damping: 0.5,
            beta_max: 1e6,
            lambda_variant: LambdaVariant::Canonical,
            psd_tol: 1e-10,
            sigma0: None,
        }
    }
}

/// Trapezoidal quadrature of beta_t Sigma_vv(t) over the nodes both paths
/// cover (a truncated covariance path is integrated up to its last node).
pub fn expected_profit(beta: &IntensityPath, cov_path: &CovPath) -> Result<f64> {
    if !beta.grid.same_as(&cov_path.grid) {
        return Err(Error::GridMismatch(
            "intensity and covariance paths use different grids".into(),
        ));
    }
    let n = beta.values.len().min(cov_path.sigmas.len());
    if n < 2 {
        return Ok(0.0);
    }
    let dt = beta.grid.dt();
    let f = |k: usize| beta.values[k] * cov_path.sigmas[k].vv;
    let mut sum = 0.5 * (f(0) + f(n - 1));
    for k in 1..n - 1 {
        sum += f(k);
    }
    Ok(sum * dt)
}

// ---------------------------------------------------------------------------
// Internal sweeps.
// ---------------------------------------------------------------------------

const MAX_SUBSTEPS: u32 = 1 << 18;
const SUBSTEP_CAP: u32 = 1 << 16;

struct SolverCtx<'a> {
    p: &'a ModelParams,
    grid: &'a TimeGrid,
    sigma0: CovMatrix,
    beta_max: f64,
    div_threshold: f64,
}

impl<'a> SolverCtx<'a> {
    fn new(p: &'a ModelParams, grid: &'a TimeGrid, sigma0: CovMatrix, opts: &SolveOptions) -> Self {
        let div_threshold =
            1e12 * (p.sigma_v * p.sigma_v + p.sigma_m * p.sigma_m + p.sigma_c * p.sigma_c + 1.0);
        SolverCtx {
            p,
            grid,
            sigma0,
            beta_max: opts.beta_max,
            div_threshold,
        }
    }

    fn sigma_ok(&self, s: &Sym3) -> bool {
        let floor = -1e-10 * self.sigma0.trace().max(1e-30);
        s.is_finite()
            && s.max_abs_entry() <= self.div_threshold
            && s.vv >= floor
            && s.mm >= floor
            && s.cc >= floor
    }

    /// Substep count keeping h times the local Jacobian scale of order one.
    /// The dominant stiffness is 2 beta^2 Sigma_vv / R, which peaks at the
    /// terminal layer where beta ~ 1/Sigma_vv.
    fn stiffness_substeps(&self, a_est: f64, dt: f64) -> u32 {
        if !a_est.is_finite() {
            return SUBSTEP_CAP;
        }
        ((dt * a_est).ceil().max(1.0) as u32).min(SUBSTEP_CAP)
    }

    fn substeps_forward(&self, b0: f64, b1: f64, s0: &Sym3, dt: f64) -> u32 {
        let p = self.p;
        let r = p.obs_variance();
        // Scalar surrogate for Sigma_vv at the right end: d(1/Sigma) ~
        // beta^2 / R, and the reciprocal interpolation integrates to
        // b0 * b1 * dt over the interval.
        let s0vv = s0.vv.max(0.0);
        let s1_pred = if s0vv > 0.0 {
            1.0 / (1.0 / s0vv + dt * b0 * b1 / r)
        } else {
            0.0
        };
        let gamma2 = p.gamma_f * p.gamma_f + p.gamma_c * p.gamma_c;
        let a_est =
            2.0 * ((b0 * b0 * s0vv).max(b1 * b1 * 4.0 * s1_pred) + gamma2 * s0.trace().abs()) / r
                + 2.0 * p.alpha_m.max(p.alpha_c);
        self.stiffness_substeps(a_est, dt)
    }

    fn substeps_backward(&self, b0: f64, b1: f64, s0: &Sym3, s1: &Sym3, dt: f64) -> u32 {
        let p = self.p;
        let r = p.obs_variance();
        let gamma2 = p.gamma_f * p.gamma_f + p.gamma_c * p.gamma_c;
        let sig_scale = s0.max_abs_entry().max(s1.max_abs_entry());
        let a_est = 2.0
            * ((b0 * b0 * s0.vv.max(0.0)).max(b1 * b1 * s1.vv.max(0.0)) + gamma2 * sig_scale)
            / r
            + 2.0 * p.alpha_m.max(p.alpha_c);
        self.stiffness_substeps(a_est, dt)
    }

    /// Forward covariance sweep. Substeps come from the stiffness estimate;
    /// a retry ladder (8x more substeps) backstops any interval that still
    /// fails the sanity check.
    fn forward(&self, beta: &[f64]) -> (Vec<Sym3>, bool) {
        let dt = self.grid.dt();
        let mut out = Vec::with_capacity(self.grid.len());
        out.push(self.sigma0);
        let mut s = self.sigma0;
        for k in 0..self.grid.n_steps {
            let (b0, b1) = (beta[k], beta[k + 1]);
            let mut m = self.substeps_forward(b0, b1, &s, dt);
            let mut next = advance_interval(&s, b0, b1, dt, m, self.p);
            while !self.sigma_ok(&next) {
                if m >= MAX_SUBSTEPS {
                    return (out, false);
                }
                m = m.saturating_mul(8).min(MAX_SUBSTEPS);
                next = advance_interval(&s, b0, b1, dt, m, self.p);
            }
            s = next;
            out.push(s);
        }
        (out, true)
    }

    /// Value of -d(Lambda)/dt for the symmetric adjoint.
    fn adjoint_rhs(&self, lam: &Sym3, sigma: &Sym3, beta: f64) -> Sym3 {
        let p = self.p;
        let r = p.obs_variance();
        let c: Vec3 = [beta, p.gamma_f, p.gamma_c];
        let b = sigma.mul_vec(&c);
        let w = lam.mul_vec(&b);
        let a = [0.0, -p.alpha_m, -p.alpha_c];
        Sym3 {
            vv: beta + 2.0 * a[0] * lam.vv - 2.0 * w[0] * c[0] / r,
            vm: (a[0] + a[1]) * lam.vm - (w[0] * c[1] + w[1] * c[0]) / r,
            vc: (a[0] + a[2]) * lam.vc - (w[0] * c[2] + w[2] * c[0]) / r,
            mm: 2.0 * a[1] * lam.mm - 2.0 * w[1] * c[1] / r,
            mc: (a[1] + a[2]) * lam.mc - (w[1] * c[2] + w[2] * c[1]) / r,
            cc: 2.0 * a[2] * lam.cc - 2.0 * w[2] * c[2] / r,
        }
    }

    fn lambda_ok(&self, lam: &Sym3, p_mult: f64) -> bool {
        lam.is_finite() && lam.max_abs_entry() <= 1e12 * (p_mult.abs() + 1.0)
    }

    /// One backward interval t_{k+1} -> t_k with `m` RK4 substeps; sigma is
    /// interpolated linearly and beta through its reciprocal.
    #[allow(clippy::too_many_arguments)]
    fn backward_interval(
        &self,
        lam_right: &Sym3,
        s_left: &Sym3,
        s_right: &Sym3,
        b_left: f64,
        b_right: f64,
        dt: f64,
        m: u32,
    ) -> Sym3 {
        let h = dt / m as f64;
        let sigma_at = |theta: f64| s_left.scale(1.0 - theta).axpy(theta, s_right);
        let mut lam = *lam_right;
        // theta runs from 1 down to 0 across the substeps.
        for j in 0..m {
            let th1 = 1.0 - j as f64 / m as f64;
            let th0 = 1.0 - (j + 1) as f64 / m as f64;
            let thm = 0.5 * (th0 + th1);
            let (s1, sm, s0) = (sigma_at(th1), sigma_at(thm), sigma_at(th0));
            let (b1, bm, b0) = (
                beta_stage(b_left, b_right, th1),
                beta_stage(b_left, b_right, thm),
                beta_stage(b_left, b_right, th0),
            );
            let k1 = self.adjoint_rhs(&lam, &s1, b1);
            let k2 = self.adjoint_rhs(&lam.axpy(0.5 * h, &k1), &sm, bm);
            let k3 = self.adjoint_rhs(&lam.axpy(0.5 * h, &k2), &sm, bm);
            let k4 = self.adjoint_rhs(&lam.axpy(h, &k3), &s0, b0);
            lam = lam
                .axpy(h / 6.0, &k1)
                .axpy(h / 3.0, &k2)
                .axpy(h / 3.0, &k3)
                .axpy(h / 6.0, &k4);
        }
        lam
    }

    fn backward(&self, beta: &[f64], sigmas: &[Sym3], p_mult: f64) -> (Vec<Sym3>, bool) {
        let n = self.grid.n_steps;
        let dt = self.grid.dt();
        let mut out = vec![Sym3::zeros(); n + 1];
        out[n] = Sym3 {
            vv: p_mult,
            ..Sym3::zeros()
        };
        for k in (0..n).rev() {
            let mut m =
                self.substeps_backward(beta[k], beta[k + 1], &sigmas[k], &sigmas[k + 1], dt);
            let mut lam = self.backward_interval(
                &out[k + 1],
                &sigmas[k],
                &sigmas[k + 1],
                beta[k],
                beta[k + 1],
                dt,
                m,
            );
            while !self.lambda_ok(&lam, p_mult) {
                if m >= MAX_SUBSTEPS {
                    return (out, false);
                }
                m = m.saturating_mul(8).min(MAX_SUBSTEPS);
                lam = self.backward_interval(
                    &out[k + 1],
                    &sigmas[k],
                    &sigmas[k + 1],
                    beta[k],
                    beta[k + 1],
                    dt,
                    m,
                );
            }
            out[k] = lam;
        }
        (out, true)
    }

    /// Pointwise first-order condition. The Hamiltonian is quadratic in
    /// beta, so the safeguarded Newton step lands on the stationary point in
    /// one move; the bracket [0, beta_max] handles the boundary cases.
    fn foc_beta(&self, sigma: &Sym3, lam: &Sym3) -> f64 {
        let p = self.p;
        let r = p.obs_variance();
        let a: Vec3 = [sigma.vv, sigma.vm, sigma.vc];
        let gcol = sigma.mul_vec(&[0.0, p.gamma_f, p.gamma_c]);
        let ala = lam.quad_form(&a, &a);
        let alg = lam.quad_form(&a, &gcol);
        if ala > 0.0 {
            ((r * sigma.vv - 2.0 * alg) / (2.0 * ala)).clamp(0.0, self.beta_max)
        } else {
            // Degenerate curvature: the Hamiltonian is monotone in beta.
            if sigma.vv - 2.0 * alg / r > 0.0 {
                self.beta_max
            } else {
                0.0
            }
        }
    }
}

struct InnerOutcome {
    beta: Vec<f64>,
    sigmas: Vec<Sym3>,
    adjoints: Vec<Sym3>,
    fp_gap: f64,
    iters: usize,
    terminal_vv: f64,
    integ_ok: bool,
}

fn rel_gap(new: &[f64], old: &[f64], n_trunc: usize, dt: f64) -> f64 {
    let n = n_trunc.min(new.len());
    let num = (new[..n]
        .iter()
        .zip(&old[..n])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * dt)
        .sqrt();
    num / (1.0 + l2_dt(&old[..n], dt))
}

fn inner_solve(
    ctx: &SolverCtx,
    p_mult: f64,
    beta_init: &[f64],
    tol: f64,
    max_iters: usize,
    damping0: f64,
) -> InnerOutcome {
    let dt = ctx.grid.dt();
    let n_trunc = ctx.grid.truncated_len();
    let mut beta = beta_init.to_vec();
    let mut omega = damping0;
    let mut prev_gap = f64::INFINITY;
    let mut good_streak = 0usize;
    let mut fp_gap = f64::INFINITY;
    let mut iters = 0;
    let mut adjoints = Vec::new();

    let mut best_gap = f64::INFINITY;
    let mut stalled = 0usize;
    for it in 1..=max_iters {
        iters = it;
        let (sigmas, fwd_ok) = ctx.forward(&beta);
        if !fwd_ok {
            return InnerOutcome {
                beta,
                sigmas,
                adjoints,
                fp_gap,
                iters,
                terminal_vv: 0.0,
                integ_ok: false,
            };
        }
        let (lams, bwd_ok) = ctx.backward(&beta, &sigmas, p_mult);
        if !bwd_ok {
            return InnerOutcome {
                beta,
                sigmas,
                adjoints: lams,
                fp_gap,
                iters,
                terminal_vv: 0.0,
                integ_ok: false,
            };
        }
        let beta_new: Vec<f64> = sigmas
            .iter()
            .zip(&lams)
            .map(|(s, l)| ctx.foc_beta(s, l))
            .collect();
        fp_gap = rel_gap(&beta_new, &beta, n_trunc, dt);
        if fp_gap > prev_gap {
            omega = (omega / 2.0).max(1.0 / 64.0);
            good_streak = 0;
        } else {
            good_streak += 1;
            if good_streak >= 3 {
                omega = (omega * 1.6).min(damping0);
            }
        }
        prev_gap = fp_gap;
        for (b, bn) in beta.iter_mut().zip(&beta_new) {
            *b = (1.0 - omega) * *b + omega * bn;
        }
        adjoints = lams;
        if fp_gap < tol {
            break;
        }
        // Residual plateau (typically the intensity cap binding at the
        // terminal node): further sweeps cannot improve the iterate.
        if fp_gap > 0.999 * best_gap {
            stalled += 1;
            if stalled >= 20 {
                break;
            }
        } else {
            stalled = 0;
        }
        best_gap = best_gap.min(fp_gap);
    }

    // Final sweeps so the returned trajectories correspond to the returned
    // intensity.
    let (sigmas, fwd_ok) = ctx.forward(&beta);
    let terminal_vv = if fwd_ok {
        sigmas.last().map(|s| s.vv).unwrap_or(f64::NAN)
    } else {
        0.0
    };
    let (adjoints, bwd_ok) = if fwd_ok {
        ctx.backward(&beta, &sigmas, p_mult)
    } else {
        (adjoints, false)
    };
    InnerOutcome {
        beta,
        sigmas,
        adjoints,
        fp_gap,
        iters,
        terminal_vv,
        integ_ok: fwd_ok && bwd_ok,
    }
}

/// Solve the forward-backward system for the equilibrium intensity.
///
/// Damped Picard iteration on beta (forward Riccati, backward adjoint,
/// pointwise first-order condition, relaxation) nested in a bisection on the
/// terminal multiplier that drives Sigma_vv(T) below `tol`. Non-convergence
/// returns the best iterate with `converged == false`; a Riccati breakdown
/// in the final trajectory is an error.
///
/// The achievable terminal value is floored by the intensity cap: over the
/// last interval the filter can extract at most ~beta_max * beta(T-dt) * dt
/// / R of precision, about 1e-6 on a unit-scale model with the default cap
/// and dt = 1e-3. Tolerances at or below that floor cannot converge.
pub fn solve_pontryagin(
    p: &ModelParams,
    init_beta: &IntensityPath,
    tol: f64,
    opts: &SolveOptions,
) -> Result<EquilibriumSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::MustBePositive { field: "tolerance" });
    }
    let grid = &init_beta.grid;
    if (grid.horizon - p.horizon).abs() > 1e-12 * p.horizon {
        return Err(Error::GridMismatch(
            "intensity grid horizon differs from the model horizon".into(),
        ));
    }
    let sigma0 = opts.sigma0.unwrap_or_else(|| initial_covariance(p));
    let ctx = SolverCtx::new(p, grid, sigma0, opts);

    let target = 0.5 * tol;
    // The terminal value responds to a relative intensity error eps at
    // roughly 2 eps sigma_v^2, so the inner iteration must settle well below
    // the terminal window for the bisection to resolve it.
    let fp_tol = (0.01 * tol).max(1e-13);
    let mut total_iters = 0usize;
    let mut observations: Vec<(f64, f64)> = Vec::new();
    let init_values: Vec<f64> = init_beta
        .values
        .iter()
        .map(|&b| b.clamp(0.0, opts.beta_max))
        .collect();

    // Every evaluation starts from the caller's initial path: the map
    // p -> Sigma_vv(T) must be a function of p alone, and warm-starting
    // across multipliers makes it hysteretic near the terminal layer.
    let mut evaluate = |p_mult: f64| -> (f64, InnerOutcome) {
        let out = inner_solve(
            &ctx,
            p_mult,
            &init_values,
            fp_tol,
            opts.max_iters,
            opts.damping,
        );
        total_iters += out.iters;
        let g = if out.integ_ok { out.terminal_vv } else { 0.0 };
        observations.push((p_mult, g));
        (g, out)
    };

    let valid =
        |g: f64, out: &InnerOutcome| g > 0.0 && g <= tol && out.integ_ok && out.fp_gap < tol;
    let mut best: Option<(f64, InnerOutcome)> = None;
    let consider = |g: f64, out: InnerOutcome, best: &mut Option<(f64, InnerOutcome)>| {
        let better = match best {
            None => true,
            Some((bg, bout)) => match (valid(g, &out), valid(*bg, bout)) {
                (true, false) => true,
                (false, true) => false,
                // Prefer the least-aggressive multiplier among the valid
                // ones (largest terminal value still under tolerance).
                (true, true) => g > *bg,
                (false, false) => (g - target).abs() < (*bg - target).abs(),
            },
        };
        if better {
            *best = Some((g, out));
        }
    };

    // Classical multiplier first: when the initial path already carries the
    // terminal layer, the flow reaches full revelation for any multiplier
    // and no bracketing is needed.
    let p_classical = (p.obs_variance() * p.horizon).sqrt() / (2.0 * p.sigma_v);
    let (g0, out0) = evaluate(p_classical);
    let accept0 = valid(g0, &out0);
    consider(g0, out0, &mut best);

    if !accept0 {
        let mut p_hi = p_classical;
        let mut g_hi = g0;
        let mut expansions = 0;
        while g_hi <= target && expansions < 64 {
            p_hi *= 2.0;
            let (g, o) = evaluate(p_hi);
            g_hi = g;
            consider(g, o, &mut best);
            expansions += 1;
        }
        let mut p_lo = p_hi;
        let mut g_lo = g_hi;
        while g_lo > target && p_lo > 1e-12 * p_classical {
            p_lo /= 2.0;
            let (g, o) = evaluate(p_lo);
            g_lo = g;
            consider(g, o, &mut best);
        }
        for _ in 0..60 {
            if best.as_ref().is_some_and(|(bg, bo)| valid(*bg, bo)) {
                break;
            }
            if (p_hi - p_lo) <= 1e-14 * p_hi {
                break;
            }
            let mid = 0.5 * (p_lo + p_hi);
            let (g, o) = evaluate(mid);
            consider(g, o, &mut best);
            if g <= target {
                p_lo = mid;
            } else {
                p_hi = mid;
            }
        }
    }

    let (terminal_gap, chosen) = best.ok_or_else(|| {
        Error::InvalidArgument("multiplier shooting found no usable iterate".into())
    })?;
    let p_mult = observations
        .iter()
        .rev()
        .find(|(_, g)| (*g - terminal_gap).abs() <= f64::EPSILON * terminal_gap.abs().max(1.0))
        .map(|(pm, _)| *pm)
        .unwrap_or(p_classical);

    // Shooting-map monotonicity (checked, not assumed). Evaluations on the
    // terminal plateau carry iteration noise, so inversions within 1% of
    // scale are not flagged.
    let mut sorted = observations.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let monotone_shooting = sorted
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 - 1e-12 - 0.01 * w[0].1.abs().max(w[1].1.abs()));

    let beta_star = IntensityPath::new(grid.clone(), chosen.beta.clone())?;

    // Monitor the final trajectory node by node.
    let mut breakdown: Option<Breakdown> = None;
    for (k, s) in chosen.sigmas.iter().enumerate() {
        if let Some(mode) = check_node(s, opts.psd_tol, ctx.div_threshold) {
            breakdown = Some(Breakdown {
                time: grid.times[k],
                index: k,
                mode,
            });
            break;
        }
    }
    if let Some(b) = breakdown {
        return Err(Error::RiccatiBreakdown {
            time: b.time,
            mode: b.mode.as_str(),
        });
    }
    let cov_path = CovPath {
        grid: grid.clone(),
        sigmas: chosen.sigmas,
        breakdown: None,
    };

    let r = p.obs_variance();
    let lambda_path = cov_path
        .sigmas
        .iter()
        .zip(&beta_star.values)
        .map(|(s, &b)| price_impact(s, &measurement_vec(b, p)?, r, opts.lambda_variant))
        .collect::<Result<Vec<f64>>>()?;
    let profit_j = expected_profit(&beta_star, &cov_path)?;

    let converged = chosen.integ_ok && chosen.fp_gap < tol && terminal_gap <= tol;
    Ok(EquilibriumSolution {
        beta_star,
        adjoint: AdjointPath {
            grid: grid.clone(),
            matrices: chosen.adjoints,
            p_multiplier: p_mult,
        },
        cov_path,
        lambda_path,
        profit_j,
        residuals: Residuals {
            terminal_gap,
            fixed_point_gap: chosen.fp_gap,
        },
        iterations: total_iters,
        converged,
        monotone_shooting,
    })
}

// ---------------------------------------------------------------------------
// Fixed-point map and contraction diagnostics.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Which price-impact definition feeds the map; the fixed-point form of
    /// the equilibrium condition uses the Sigma_vv * beta variant.
    pub variant: LambdaVariant,
    /// Diagnostic mode: bypass the Riccati flow and hold Sigma_vv constant.
    pub frozen_sigma_vv: Option<f64>,
    pub lambda_floor: f64,
    pub sigma0: Option<CovMatrix>,
    pub riccati: RiccatiOptions,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            variant: LambdaVariant::PaperLiteral,
            frozen_sigma_vv: None,
            lambda_floor: 1e-10,
            sigma0: None,
            riccati: RiccatiOptions::default(),
        }
    }
}

/// The equilibrium fixed-point map beta -> 1 / (2 lambda(beta)).
pub fn fixed_point_map(
    beta: &IntensityPath,
    p: &ModelParams,
    opts: &FixedPointOptions,
) -> Result<IntensityPath> {
    let r = p.obs_variance();
    let lambdas: Vec<f64> = match opts.frozen_sigma_vv {
        Some(vv) => {
            let sigma = Sym3::diag(vv, 0.0, 0.0);
            beta.values
                .iter()
                .map(|&b| price_impact(&sigma, &measurement_vec(b, p)?, r, opts.variant))
                .collect::<Result<Vec<f64>>>()?
        }
        None => {
            let sigma0 = opts.sigma0.unwrap_or_else(|| initial_covariance(p));
            let cov = integrate_riccati(beta, sigma0, p, &opts.riccati)?;
            if let Some(b) = cov.breakdown {
                return Err(Error::RiccatiBreakdown {
                    time: b.time,
                    mode: b.mode.as_str(),
                });
            }
            cov.sigmas
                .iter()
                .zip(&beta.values)
                .map(|(s, &b)| price_impact(s, &measurement_vec(b, p)?, r, opts.variant))
                .collect::<Result<Vec<f64>>>()?
        }
    };
    let n_trunc = beta.grid.truncated_len();
    let mut values = Vec::with_capacity(lambdas.len());
    for (k, &lam) in lambdas.iter().enumerate() {
        if lam < opts.lambda_floor && k < n_trunc {
            return Err(Error::DegenerateImpact {
                time: beta.grid.times[k],
                floor: opts.lambda_floor,
            });
        }
        values.push(1.0 / (2.0 * lam.max(opts.lambda_floor)));
    }
    IntensityPath::new(beta.grid.clone(), values)
}

/// Max-over-probes lower bound on the Lipschitz constant of the fixed-point
/// map at `beta`: random L2-normalized directions, one-sided difference
/// quotients at step `eps`.
pub fn estimate_lipschitz(
    beta: &IntensityPath,
    p: &ModelParams,
    n_probes: usize,
    eps: f64,
    seed: u64,
    opts: &FixedPointOptions,
) -> Result<f64> {
    if n_probes == 0 {
        return Err(Error::MustBePositive { field: "n_probes" });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::MustBePositive { field: "eps" });
    }
    let f0 = fixed_point_map(beta, p, opts)?;
    let dt = beta.grid.dt();
    use rayon::prelude::*;
    let ratios: Vec<f64> = (0..n_probes)
        .into_par_iter()
        .map(|probe| -> Result<f64> {
            let mut rng =
                crate::rng::Stream::new(seed ^ (probe as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let mut dir: Vec<f64> = (0..beta.values.len()).map(|_| rng.next_normal()).collect();
            let norm = l2_dt(&dir, dt);
            for d in dir.iter_mut() {
                *d /= norm;
            }
            let perturbed: Vec<f64> = beta
                .values
                .iter()
                .zip(&dir)
                .map(|(b, d)| (b + eps * d).max(0.0))
                .collect();
            let fp = fixed_point_map(&IntensityPath::new(beta.grid.clone(), perturbed)?, p, opts)?;
            let diff: Vec<f64> = fp
                .values
                .iter()
                .zip(&f0.values)
                .map(|(a, b)| a - b)
                .collect();
            Ok(l2_dt(&diff, dt) / eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ratios.into_iter().fold(0.0f64, f64::max))
}

/// Lipschitz estimates of the fixed-point map along a feedback ray, with the
/// first L > 1 crossing when one occurs in range.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionProbe {
    pub h_values: Vec<f64>,
    pub l_estimates: Vec<f64>,
    pub crossing: Option<f64>,
}

impl ContractionProbe {
    pub fn new(h_values: Vec<f64>, l_estimates: Vec<f64>) -> Self {
        let crossing = h_values
            .iter()
            .zip(&l_estimates)
            .find(|(_, &l)| l > 1.0)
            .map(|(&h, _)| h);
        ContractionProbe {
            h_values,
            l_estimates,
            crossing,
        }
    }
}

// ---------------------------------------------------------------------------
// Continuity of the equilibrium in the feedback strength.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityRow {
    pub scale: f64,
    pub deviation: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    /// Deviations decrease with the scale over the successful rows.
    pub decreasing: bool,
}

/// Solve the equilibrium along the ray s * h (h taken from the base
/// parameters) and report dt-L2 deviations from the h = 0 intensity on the
/// truncated grid.
pub fn continuity_check(
    p_base: &ModelParams,
    h_scales: &[f64],
    grid: &TimeGrid,
    tol: f64,
    opts: &SolveOptions,
) -> Result<ContinuityTable> {
    if h_scales.is_empty() {
        return Err(Error::InvalidArgument("h_scales must be nonempty".into()));
    }
    let init = IntensityPath::classical(p_base, grid.clone(), opts.beta_max);
    let base = solve_pontryagin(&p_base.scale_feedback(0.0), &init, tol, opts)?;
    let n_trunc = grid.truncated_len();

    use rayon::prelude::*;
    let rows: Vec<ContinuityRow> = h_scales
        .par_iter()
        .map(|&s| {
            let ps = p_base.scale_feedback(s);
            match crate::model::validate_params(ps)
                .and_then(|ps| solve_pontryagin(&ps, &init, tol, opts))
            {
                Ok(sol) => {
                    let deviation = l2_distance(&sol.beta_star, &base.beta_star, n_trunc).ok();
                    ContinuityRow {
                        scale: s,
                        deviation,
                        converged: sol.converged,
                        error: None,
                    }
                }
                Err(e) => ContinuityRow {
                    scale: s,
                    deviation: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut ordered: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.deviation.map(|d| (r.scale, d)))
        .filter(|(s, _)| *s > 0.0)
        .collect();
    ordered.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let decreasing = ordered.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(ContinuityTable { rows, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeGrid;

    pub(crate) fn params() -> ModelParams {
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

    fn classical_truncated(p: &ModelParams, n: usize) -> (TimeGrid, IntensityPath) {
        let horizon = p.horizon * (1.0 - 10.0 / (n as f64 + 10.0));
        let grid = TimeGrid::new(horizon, n).unwrap();
        let scale = p.sigma_z * p.horizon.sqrt() / p.sigma_v;
        let values: Vec<f64> = grid
            .times
            .iter()
            .map(|&t| scale / (p.horizon - t))
            .collect();
        let beta = IntensityPath::new(grid.clone(), values).unwrap();
        (grid, beta)
    }

    #[test]
    fn expected_profit_matches_truncated_classical_value() {
        let p = params();
        let (_, beta) = classical_truncated(&p, 990);
        let cov = integrate_riccati(
            &beta,
            Sym3::diag(1.0, 0.0, 0.0),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        let j = expected_profit(&beta, &cov).unwrap();
        // beta * Sigma_vv is constant = 1, so the truncated integral is the
        // truncated horizon.
        assert!((j - 0.99).abs() <= 1e-3, "J = {j}");
    }

    #[test]
    fn expected_profit_zero_for_no_trading() {
        let p = params();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let beta = IntensityPath::zero(grid.clone());
        let cov = integrate_riccati(
            &beta,
            Sym3::diag(1.0, 0.0, 0.0),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        assert_eq!(expected_profit(&beta, &cov).unwrap(), 0.0);
    }

    #[test]
    fn expected_profit_scales_linearly_in_sigma_v() {
        let run = |sigma_v: f64| -> f64 {
            let p = ModelParams {
                sigma_v,
                ..params()
            };
            let (_, beta) = classical_truncated(&p, 990);
            let cov = integrate_riccati(
                &beta,
                Sym3::diag(sigma_v * sigma_v, 0.0, 0.0),
                &p,
                &RiccatiOptions::default(),
            )
            .unwrap();
            expected_profit(&beta, &cov).unwrap()
        };
        let j1 = run(1.0);
        let j2 = run(2.0);
        assert!((j2 / j1 - 2.0).abs() < 1e-6, "ratio = {}", j2 / j1);
    }

    #[test]
    fn fixed_point_map_frozen_diagnostic() {
        let p = params();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let opts = FixedPointOptions {
            frozen_sigma_vv: Some(2.0),
            ..FixedPointOptions::default()
        };
        let at_fp = IntensityPath::constant(grid.clone(), 0.5).unwrap();
        let image = fixed_point_map(&at_fp, &p, &opts).unwrap();
        for v in &image.values {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let opts_half = FixedPointOptions {
            frozen_sigma_vv: Some(0.5),
            ..FixedPointOptions::default()
        };
        let at_one = IntensityPath::constant(grid, 1.0).unwrap();
        let image2 = fixed_point_map(&at_one, &p, &opts_half).unwrap();
        for v in &image2.values {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_point_map_rejects_degenerate_impact() {
        let p = params();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let beta = IntensityPath::zero(grid);
        let err = fixed_point_map(&beta, &p, &FixedPointOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateImpact { .. }));
    }

    #[test]
    fn lipschitz_estimator_recovers_unit_derivative_at_frozen_fixed_point() {
        let p = params();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let sigma_vv = 2.0f64;
        let beta_fp = 1.0 / (2.0 * sigma_vv).sqrt();
        let beta = IntensityPath::constant(grid, beta_fp).unwrap();
        let opts = FixedPointOptions {
            frozen_sigma_vv: Some(sigma_vv),
            ..FixedPointOptions::default()
        };
        let l = estimate_lipschitz(&beta, &p, 4, 1e-5, 7, &opts).unwrap();
        assert!((l - 1.0).abs() <= 1e-3, "L = {l}");
    }

    #[test]
    fn lipschitz_requires_probes() {
        let p = params();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let beta = IntensityPath::constant(grid, 1.0).unwrap();
        assert!(matches!(
            estimate_lipschitz(&beta, &p, 0, 1e-5, 1, &FixedPointOptions::default()),
            Err(Error::MustBePositive { field: "n_probes" })
        ));
    }

    #[test]
    fn solve_rejects_nonpositive_tolerance() {
        let p = params();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let init = IntensityPath::classical(&p, grid, 1e6);
        assert!(matches!(
            solve_pontryagin(&p, &init, 0.0, &SolveOptions::default()),
            Err(Error::MustBePositive { field: "tolerance" })
        ));
    }

    /// Full-matrix trace inner product of two symmetric matrices (the
    /// off-diagonal entries count twice).
    fn trace_inner(a: &Sym3, b: &Sym3) -> f64 {
        a.vv * b.vv + a.mm * b.mm + a.cc * b.cc + 2.0 * (a.vm * b.vm + a.vc * b.vc + a.mc * b.mc)
    }

    fn random_sym(rng: &mut crate::rng::Stream, scale: f64) -> Sym3 {
        Sym3::from_entries([
            rng.next_range(-scale, scale),
            rng.next_range(-scale, scale),
            rng.next_range(-scale, scale),
            rng.next_range(-scale, scale),
            rng.next_range(-scale, scale),
            rng.next_range(-scale, scale),
        ])
    }

    #[test]
    fn adjoint_rhs_is_dual_to_the_riccati_derivative() {
        // <L*(Lambda), H> must equal <Lambda, dF/dSigma [H]>, with the
        // directional derivative taken by centered finite differences of the
        // componentwise system.
        let p = ModelParams {
            gamma_f: 0.4,
            gamma_c: -0.3,
            sigma_m: 0.3,
            sigma_c: 0.2,
            alpha_m: 1.3,
            alpha_c: 0.7,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let opts = SolveOptions::default();
        let ctx = SolverCtx::new(&p, &grid, initial_covariance(&p), &opts);
        let mut rng = crate::rng::Stream::new(99);
        let eps = 1e-6;
        for _ in 0..50 {
            let sigma = Sym3 {
                vv: rng.next_range(0.1, 2.0),
                vm: rng.next_range(-0.3, 0.3),
                vc: rng.next_range(-0.3, 0.3),
                mm: rng.next_range(0.1, 2.0),
                mc: rng.next_range(-0.3, 0.3),
                cc: rng.next_range(0.1, 2.0),
            };
            let lam = random_sym(&mut rng, 1.0);
            let h = random_sym(&mut rng, 1.0);
            let beta = rng.next_range(0.0, 3.0);

            let plus = crate::riccati::riccati_rhs(&sigma.axpy(eps, &h), beta, &p).unwrap();
            let minus = crate::riccati::riccati_rhs(&sigma.axpy(-eps, &h), beta, &p).unwrap();
            let df = plus.sub(&minus).scale(1.0 / (2.0 * eps));

            let mut lstar = ctx.adjoint_rhs(&lam, &sigma, beta);
            lstar.vv -= beta; // drop the inhomogeneous profit term
            let lhs = trace_inner(&lstar, &h);
            let rhs = trace_inner(&lam, &df);
            assert!(
                (lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()),
                "dual pairing mismatch: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn foc_root_zeroes_the_hamiltonian_gradient() {
        let p = ModelParams {
            gamma_f: 0.2,
            gamma_c: -0.1,
            sigma_m: 0.3,
            sigma_c: 0.2,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let opts = SolveOptions::default();
        let ctx = SolverCtx::new(&p, &grid, initial_covariance(&p), &opts);
        let mut rng = crate::rng::Stream::new(1234);
        let eps = 1e-6;
        for _ in 0..50 {
            let sigma = Sym3 {
                vv: rng.next_range(0.2, 2.0),
                vm: rng.next_range(-0.2, 0.2),
                vc: rng.next_range(-0.2, 0.2),
                mm: rng.next_range(0.2, 2.0),
                mc: rng.next_range(-0.2, 0.2),
                cc: rng.next_range(0.2, 2.0),
            };
            // Positive-definite-leaning adjoint so the stationary point is
            // interior.
            let base = random_sym(&mut rng, 0.4);
            let lam = Sym3 {
                vv: base.vv.abs() + 0.5,
                mm: base.mm.abs() + 0.3,
                cc: base.cc.abs() + 0.3,
                ..base
            };
            let beta_star = ctx.foc_beta(&sigma, &lam);
            if beta_star <= 0.0 || beta_star >= opts.beta_max {
                continue;
            }
            let plus = crate::riccati::riccati_rhs(&sigma, beta_star + eps, &p).unwrap();
            let minus = crate::riccati::riccati_rhs(&sigma, beta_star - eps, &p).unwrap();
            let df_dbeta = plus.sub(&minus).scale(1.0 / (2.0 * eps));
            let grad = sigma.vv + trace_inner(&lam, &df_dbeta);
            assert!(grad.abs() <= 1e-6 * (1.0 + sigma.vv), "gradient {grad}");
        }
    }

    #[test]
    fn solve_recovers_classical_equilibrium() {
        let p = params();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let init = IntensityPath::classical(&p, grid.clone(), 1e6);
        let sol = solve_pontryagin(&p, &init, 5e-6, &SolveOptions::default()).unwrap();
        assert!(sol.converged, "residuals: {:?}", sol.residuals);
        assert!(sol.monotone_shooting);
        // Sigma_vv tracks 1 - t away from the terminal layer.
        let n_trunc = grid.truncated_len();
        let mut worst = 0.0f64;
        for k in 0..n_trunc {
            let exact = 1.0 - grid.times[k];
            worst = worst.max((sol.cov_path.sigmas[k].vv - exact).abs() / exact);
        }
        assert!(worst <= 1e-3, "worst relative error {worst}");
        assert!((sol.profit_j - 1.0).abs() <= 1e-3, "J = {}", sol.profit_j);
        // Terminal adjoint keeps the multiplier pattern exactly.
        let last = sol.adjoint.matrices.last().unwrap();
        assert_eq!(last.vm, 0.0);
        assert_eq!(last.mm, 0.0);
        assert_eq!(last.vv, sol.adjoint.p_multiplier);
        // Near-full revelation at the truncation point.
        let s_trunc = sol.cov_path.sigmas[n_trunc - 1].vv;
        assert!(s_trunc <= 1.0 * (10.0 * grid.dt()) / 1.0 + 1e-3);
    }

    #[test]
    fn solve_is_deterministic() {
        let p = ModelParams {
            gamma_f: 0.05,
            gamma_c: -0.02,
            sigma_m: 0.2,
            sigma_c: 0.2,
            var_m0: 0.02,
            var_c0: 0.02,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 300).unwrap();
        let init = IntensityPath::classical(&p, grid, 1e6);
        let a = solve_pontryagin(&p, &init, 1e-5, &SolveOptions::default()).unwrap();
        let b = solve_pontryagin(&p, &init, 1e-5, &SolveOptions::default()).unwrap();
        assert_eq!(a.beta_star.values, b.beta_star.values);
        assert_eq!(a.profit_j, b.profit_j);
    }

    #[test]
    fn first_order_response_halves_with_the_perturbation() {
        // Correlated prior so the gamma direction has a first-order effect.
        let sigma0 = Sym3 {
            vm: 0.2,
            ..Sym3::diag(1.0, 0.1, 0.1)
        };
        let opts = SolveOptions {
            sigma0: Some(sigma0),
            ..SolveOptions::default()
        };
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let base = ModelParams {
            sigma_m: 0.2,
            sigma_c: 0.2,
            var_m0: 0.1,
            var_c0: 0.1,
            ..params()
        };
        let init = IntensityPath::classical(&base, grid.clone(), 1e6);
        let tol = 2e-6;
        let solve_at = |g: f64| {
            let p = ModelParams { gamma_f: g, ..base };
            solve_pontryagin(&p, &init, tol, &opts).unwrap()
        };
        let b0 = solve_at(0.0);
        let b1 = solve_at(1e-3);
        let b2 = solve_at(5e-4);
        let n = grid.truncated_len();
        let d1 = l2_distance(&b1.beta_star, &b0.beta_star, n).unwrap();
        let d2 = l2_distance(&b2.beta_star, &b0.beta_star, n).unwrap();
        let ratio = d2 / d1;
        assert!(
            (0.25..=1.0).contains(&ratio),
            "d1 = {d1}, d2 = {d2}, ratio = {ratio}"
        );
    }
}
