//! Model primitives: parameters, validation, the time grid, and the derived
//! state-space objects (drift matrix, state-noise covariance, measurement
//! vector, initial covariance).
//!
//! The market has a static fundamental v, a momentum position m reverting at
//! rate alpha_m and pushed by +kappa_m dP, and a contrarian position c
//! reverting at alpha_c and pushed by -kappa_c dP. Aggregate order flow
//! carries the exposures gamma_f m + gamma_c c plus exogenous noise.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Sym3, Vec3};
use serde::{Deserialize, Serialize};

/// Conditional covariance of the unobserved state (v, m, c); the Riccati
/// state. Stored as six independent entries so symmetry is exact.
pub type CovMatrix = Sym3;

/// All model primitives, validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    /// Std dev of the fundamental value v.
    pub sigma_v: f64,
    /// Exogenous order-flow volatility.
    pub sigma_z: f64,
    /// Position-noise volatility of momentum traders.
    pub sigma_m: f64,
    /// Position-noise volatility of contrarian traders.
    pub sigma_c: f64,
    /// Drift-noise scale in aggregate order flow.
    pub sigma_eps: f64,
    /// Mean-reversion rate of the momentum position (> 0).
    pub alpha_m: f64,
    /// Mean-reversion rate of the contrarian position (> 0).
    pub alpha_c: f64,
    /// Momentum price sensitivity (>= 0).
    pub kappa_m: f64,
    /// Contrarian price sensitivity (>= 0).
    pub kappa_c: f64,
    /// Momentum exposure in order flow.
    pub gamma_f: f64,
    /// Contrarian exposure in order flow.
    pub gamma_c: f64,
    /// Trading horizon T.
    pub horizon: f64,
    /// Initial variance of the momentum position.
    pub var_m0: f64,
    /// Initial variance of the contrarian position.
    pub var_c0: f64,
    /// When set, the drift-noise term is folded into the effective
    /// observation variance R_eff = sigma_z^2 + sigma_eps^2; otherwise the
    /// filter uses R = sigma_z^2 and sigma_eps only appears in simulation.
    pub fold_eps_into_r: bool,
}

impl ModelParams {
    /// Observation noise variance seen by the filter.
    pub fn obs_variance(&self) -> f64 {
        if self.fold_eps_into_r {
            self.sigma_z * self.sigma_z + self.sigma_eps * self.sigma_eps
        } else {
            self.sigma_z * self.sigma_z
        }
    }

    pub fn feedback_vector(&self) -> FeedbackVector {
        FeedbackVector::new(
            self.kappa_m,
            self.kappa_c,
            self.gamma_f,
            self.gamma_c,
            self.sigma_eps,
        )
    }

    /// Copy with the five feedback components scaled by `s` (the h-ray used
    /// by continuity checks and sweeps).
    pub fn scale_feedback(&self, s: f64) -> ModelParams {
        ModelParams {
            kappa_m: s * self.kappa_m,
            kappa_c: s * self.kappa_c,
            gamma_f: s * self.gamma_f,
            gamma_c: s * self.gamma_c,
            sigma_eps: s * self.sigma_eps,
            ..*self
        }
    }
}

/// The feedback parameter vector h = (kappa_m, kappa_c, gamma_f, gamma_c,
/// sigma_eps); h = 0 recovers the classical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackVector {
    pub kappa_m: f64,
    pub kappa_c: f64,
    pub gamma_f: f64,
    pub gamma_c: f64,
    pub sigma_eps: f64,
    /// Euclidean norm of the five components.
    pub norm: f64,
}

impl FeedbackVector {
    pub fn new(kappa_m: f64, kappa_c: f64, gamma_f: f64, gamma_c: f64, sigma_eps: f64) -> Self {
        let norm = (kappa_m * kappa_m
            + kappa_c * kappa_c
            + gamma_f * gamma_f
            + gamma_c * gamma_c
            + sigma_eps * sigma_eps)
            .sqrt();
        FeedbackVector {
            kappa_m,
            kappa_c,
            gamma_f,
            gamma_c,
            sigma_eps,
            norm,
        }
    }
}

fn require_positive(value: f64, field: &'static str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite { field });
    }
    if value <= 0.0 {
        return Err(Error::MustBePositive { field });
    }
    Ok(())
}

fn require_nonnegative(value: f64, field: &'static str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite { field });
    }
    if value < 0.0 {
        return Err(Error::MustBeNonnegative { field });
    }
    Ok(())
}

/// Check every parameter invariant; returns the params unchanged on success.
pub fn validate_params(p: ModelParams) -> Result<ModelParams> {
    require_positive(p.sigma_v, "sigma_v")?;
    require_positive(p.sigma_z, "sigma_z")?;
    require_positive(p.horizon, "T")?;
    require_positive(p.alpha_m, "alpha_m")?;
    require_positive(p.alpha_c, "alpha_c")?;
    require_nonnegative(p.sigma_m, "sigma_m")?;
    require_nonnegative(p.sigma_c, "sigma_c")?;
    require_nonnegative(p.sigma_eps, "sigma_eps")?;
    require_nonnegative(p.kappa_m, "kappa_m")?;
    require_nonnegative(p.kappa_c, "kappa_c")?;
    require_nonnegative(p.var_m0, "var_m0")?;
    require_nonnegative(p.var_c0, "var_c0")?;
    if !p.gamma_f.is_finite() {
        return Err(Error::NonFinite { field: "gamma_f" });
    }
    if !p.gamma_c.is_finite() {
        return Err(Error::NonFinite { field: "gamma_c" });
    }
    Ok(p)
}

/// Uniform grid 0 = t_0 < ... < t_n = T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
    pub times: Vec<f64>,
}

/// Terminal nodes excluded from truncated-grid norms and analytic
/// comparisons (the classical intensity is singular at T).
pub const TRUNCATION_NODES: usize = 10;

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        require_positive(horizon, "T")?;
        if n_steps == 0 {
            return Err(Error::MustBePositive { field: "n_steps" });
        }
        let times = (0..=n_steps)
            .map(|k| horizon * k as f64 / n_steps as f64)
            .collect();
        Ok(TimeGrid {
            horizon,
            n_steps,
            times,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Number of nodes (n_steps + 1).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nodes on the truncated grid [0, T - 10 dt], at least two.
    pub fn truncated_len(&self) -> usize {
        self.len().saturating_sub(TRUNCATION_NODES).max(2)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps && self.horizon == other.horizon
    }
}

/// System state x = (v, m, c).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVec {
    pub v: f64,
    pub m: f64,
    pub c: f64,
}

impl StateVec {
    pub fn as_vec3(&self) -> Vec3 {
        [self.v, self.m, self.c]
    }

    pub fn from_vec3(v: Vec3) -> Self {
        StateVec {
            v: v[0],
            m: v[1],
            c: v[2],
        }
    }
}

/// Measurement row vector C_t = (beta_t, gamma_f, gamma_c): how (v, m, c)
/// enter the drift of aggregate order flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementVec {
    pub beta: f64,
    pub gamma_f: f64,
    pub gamma_c: f64,
}

impl MeasurementVec {
    pub fn as_vec3(&self) -> Vec3 {
        [self.beta, self.gamma_f, self.gamma_c]
    }
}

/// C_t for a given intensity value. Rejects non-finite beta.
pub fn measurement_vec(beta_t: f64, p: &ModelParams) -> Result<MeasurementVec> {
    if !beta_t.is_finite() {
        return Err(Error::NonFinite { field: "beta_t" });
    }
    Ok(MeasurementVec {
        beta: beta_t,
        gamma_f: p.gamma_f,
        gamma_c: p.gamma_c,
    })
}

/// Drift matrix A = diag(0, -alpha_m, -alpha_c); the fundamental is static.
pub fn drift_matrix(p: &ModelParams) -> Mat3 {
    Mat3::diag(0.0, -p.alpha_m, -p.alpha_c)
}

/// State-noise covariance Q = diag(0, sigma_m^2, sigma_c^2); v has no
/// diffusion.
pub fn state_noise_cov(p: &ModelParams) -> Sym3 {
    Sym3::diag(0.0, p.sigma_m * p.sigma_m, p.sigma_c * p.sigma_c)
}

/// Prior covariance diag(sigma_v^2, var_m0, var_c0).
pub fn initial_covariance(p: &ModelParams) -> CovMatrix {
    Sym3::diag(p.sigma_v * p.sigma_v, p.var_m0, p.var_c0)
}

fn default_psd_tol() -> f64 {
    1e-10
}

fn default_fold_eps() -> bool {
    true
}

/// On-disk run configuration. One key per model parameter plus the grid and
/// filter knobs; unknown keys are an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sigma_v: f64,
    pub sigma_z: f64,
    pub sigma_m: f64,
    pub sigma_c: f64,
    pub sigma_eps: f64,
    pub alpha_m: f64,
    pub alpha_c: f64,
    pub kappa_m: f64,
    pub kappa_c: f64,
    pub gamma_f: f64,
    pub gamma_c: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub var_m0: f64,
    pub var_c0: f64,
    pub n_steps: usize,
    #[serde(default = "default_psd_tol")]
    pub psd_tol: f64,
    #[serde(rename = "fold_eps_into_R", default = "default_fold_eps")]
    pub fold_eps_into_r: bool,
    /// Optional full replacement of the initial covariance, as the six
    /// entries (vv, vm, vc, mm, mc, cc). Needed to exercise the correlated
    /// prior regimes; must be positive semidefinite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0_override: Option<[f64; 6]>,
}

/// Everything a run needs, derived from one config.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub params: ModelParams,
    pub grid: TimeGrid,
    pub sigma0: CovMatrix,
    pub psd_tol: f64,
}

impl ModelConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn resolve(&self) -> Result<ResolvedModel> {
        let params = validate_params(ModelParams {
            sigma_v: self.sigma_v,
            sigma_z: self.sigma_z,
            sigma_m: self.sigma_m,
            sigma_c: self.sigma_c,
            sigma_eps: self.sigma_eps,
            alpha_m: self.alpha_m,
            alpha_c: self.alpha_c,
            kappa_m: self.kappa_m,
            kappa_c: self.kappa_c,
            gamma_f: self.gamma_f,
            gamma_c: self.gamma_c,
            horizon: self.horizon,
            var_m0: self.var_m0,
            var_c0: self.var_c0,
            fold_eps_into_r: self.fold_eps_into_r,
        })?;
        let grid = TimeGrid::new(self.horizon, self.n_steps)?;
        if !(self.psd_tol.is_finite() && self.psd_tol >= 0.0) {
            return Err(Error::MustBeNonnegative { field: "psd_tol" });
        }
        let sigma0 = match self.sigma0_override {
            None => initial_covariance(&params),
            Some(entries) => {
                let s = Sym3::from_entries(entries);
                if !s.is_finite() {
                    return Err(Error::NonFinite {
                        field: "sigma0_override",
                    });
                }
                let tol = self.psd_tol * s.trace().abs().max(1.0);
                if s.min_eigenvalue() < -tol {
                    return Err(Error::InvalidArgument(
                        "sigma0_override must be positive semidefinite".into(),
                    ));
                }
                s
            }
        };
        Ok(ResolvedModel {
            params,
            grid,
            sigma0,
            psd_tol: self.psd_tol,
        })
    }
}
