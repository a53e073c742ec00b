//! Kalman-Bucy filter layer: gain, price-impact coefficient, filtered-mean
//! propagation with known price-feedback inputs, the error-dynamics matrix
//! M_t = A - K_t C_t, and its worst-case growth exponent.

use crate::equilibrium::IntensityPath;
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::model::{
    drift_matrix, measurement_vec, CovMatrix, MeasurementVec, ModelParams, StateVec, TimeGrid,
};
use crate::riccati::CovPath;
use serde::Serialize;

/// K_t = Sigma_t C_t^T / R.
pub fn kalman_gain(sigma: &CovMatrix, c: &MeasurementVec, r: f64) -> Result<Vec3> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::MustBePositive { field: "R" });
    }
    let b = sigma.mul_vec(&c.as_vec3());
    Ok([b[0] / r, b[1] / r, b[2] / r])
}

/// Which definition of the price-impact coefficient to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaVariant {
    /// Filter-implied e1^T K_t = (beta Sigma_vv + gamma_f Sigma_vm +
    /// gamma_c Sigma_vc) / R.
    Canonical,
    /// The fixed-point-map form Sigma_vv * beta (differs from the canonical
    /// one by the factor R and the cross terms; both are reported, neither is
    /// reconciled here).
    PaperLiteral,
}

pub fn price_impact(
    sigma: &CovMatrix,
    c: &MeasurementVec,
    r: f64,
    variant: LambdaVariant,
) -> Result<f64> {
    match variant {
        LambdaVariant::Canonical => Ok(kalman_gain(sigma, c, r)?[0]),
        LambdaVariant::PaperLiteral => {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::MustBePositive { field: "R" });
            }
            Ok(sigma.vv * c.beta)
        }
    }
}

/// Error-dynamics matrix M = A - K_t C_t.
pub fn error_matrix(sigma: &CovMatrix, beta_t: f64, p: &ModelParams) -> Result<Mat3> {
    let c = measurement_vec(beta_t, p)?;
    let k = kalman_gain(sigma, &c, p.obs_variance())?;
    Ok(drift_matrix(p).add(&Mat3::outer(&k, &c.as_vec3()).scale(-1.0)))
}

/// Gains and price impacts along a covariance path.
#[derive(Debug, Clone)]
pub struct GainPath {
    pub grid: TimeGrid,
    pub gains: Vec<Vec3>,
    pub impacts: Vec<f64>,
}

pub fn gain_path(
    cov: &CovPath,
    beta: &IntensityPath,
    p: &ModelParams,
    variant: LambdaVariant,
) -> Result<GainPath> {
    if !cov.grid.same_as(&beta.grid) {
        return Err(Error::GridMismatch(
            "covariance and intensity paths use different grids".into(),
        ));
    }
    let r = p.obs_variance();
    let mut gains = Vec::with_capacity(cov.sigmas.len());
    let mut impacts = Vec::with_capacity(cov.sigmas.len());
    for (s, &b) in cov.sigmas.iter().zip(&beta.values) {
        let c = measurement_vec(b, p)?;
        gains.push(kalman_gain(s, &c, r)?);
        impacts.push(price_impact(s, &c, r, variant)?);
    }
    Ok(GainPath {
        grid: cov.grid.clone(),
        gains,
        impacts,
    })
}

/// Sup over the grid of the largest real eigenvalue part of M_t, with the
/// per-node trajectory. Lambda > 0 flags an unstable filter.
#[derive(Debug, Clone, Serialize)]
pub struct InstabilityReport {
    pub lambda: f64,
    pub argmax_time: f64,
    pub eigen_trajectory: Vec<f64>,
    pub unstable: bool,
}

pub fn lambda_sup(
    cov_path: &CovPath,
    beta: &IntensityPath,
    p: &ModelParams,
) -> Result<InstabilityReport> {
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
    use rayon::prelude::*;
    let eigen_trajectory: Vec<f64> = cov_path
        .sigmas
        .par_iter()
        .zip(&beta.values)
        .map(|(s, &b)| error_matrix(s, b, p).map(|m| m.max_real_eigenvalue()))
        .collect::<Result<Vec<_>>>()?;
    let (arg, lambda) = eigen_trajectory.iter().enumerate().fold(
        (0usize, f64::NEG_INFINITY),
        |(ai, av), (i, &v)| {
            if v > av {
                (i, v)
            } else {
                (ai, av)
            }
        },
    );
    Ok(InstabilityReport {
        lambda,
        argmax_time: cov_path.grid.times[arg],
        eigen_trajectory,
        unstable: lambda > 0.0,
    })
}

/// One mean update of the filtered state.
///
/// dxhat = A xhat dt + u dt + K (dY - C xhat dt), with the price-feedback
/// known input u dt = (0, kappa_m dP, -kappa_c dP). `d_y` is the observation
/// increment expressed against the state map C (callers subtract any
/// publicly known offset beforehand); the covariance advances separately
/// through the Riccati flow.
pub fn filter_step(
    xhat: &StateVec,
    sigma: &CovMatrix,
    d_y: f64,
    d_p_known: f64,
    beta_t: f64,
    p: &ModelParams,
    dt: f64,
) -> Result<StateVec> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::MustBePositive { field: "dt" });
    }
    let c = measurement_vec(beta_t, p)?;
    let k = kalman_gain(sigma, &c, p.obs_variance())?;
    let x = xhat.as_vec3();
    let innovation = d_y - crate::linalg::dot3(&c.as_vec3(), &x) * dt;
    let drift = drift_matrix(p).mul_vec(&x);
    Ok(StateVec {
        v: x[0] + drift[0] * dt + k[0] * innovation,
        m: x[1] + drift[1] * dt + k[1] * innovation + p.kappa_m * d_p_known,
        c: x[2] + drift[2] * dt + k[2] * innovation - p.kappa_c * d_p_known,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Sym3;
    use crate::riccati::{integrate_riccati, RiccatiOptions};
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

    fn cvec(beta: f64, gf: f64, gc: f64) -> MeasurementVec {
        MeasurementVec {
            beta,
            gamma_f: gf,
            gamma_c: gc,
        }
    }

    #[test]
    fn gain_direct_products() {
        let k = kalman_gain(&Sym3::diag(1.0, 0.02, 0.02), &cvec(1.0, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(k, [1.0, 0.0, 0.0]);
        let k0 = kalman_gain(&Sym3::diag(1.0, 1.0, 1.0), &cvec(0.0, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(k0, [0.0, 0.0, 0.0]);
        let k2 = kalman_gain(&Sym3::diag(1.0, 1.0, 1.0), &cvec(2.0, 0.5, -0.3), 4.0).unwrap();
        assert_eq!(k2, [0.5, 0.125, -0.075]);
        assert!(kalman_gain(&Sym3::zeros(), &cvec(1.0, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn gain_is_homogeneous_in_sigma() {
        let mut rng = Stream::new(5);
        for _ in 0..50 {
            let s = Sym3::from_entries([
                rng.next_range(0.0, 2.0),
                rng.next_range(-0.5, 0.5),
                rng.next_range(-0.5, 0.5),
                rng.next_range(0.0, 2.0),
                rng.next_range(-0.5, 0.5),
                rng.next_range(0.0, 2.0),
            ]);
            let c = cvec(rng.next_range(0.0, 2.0), 0.3, -0.2);
            let alpha = rng.next_range(0.0, 3.0);
            let k1 = kalman_gain(&s.scale(alpha), &c, 1.3).unwrap();
            let k2 = kalman_gain(&s, &c, 1.3).unwrap();
            for i in 0..3 {
                assert!((k1[i] - alpha * k2[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn price_impact_variants() {
        let s = Sym3::diag(1.0, 0.0, 0.0);
        let c = cvec(1.0, 0.0, 0.0);
        let canon = price_impact(&s, &c, 1.0, LambdaVariant::Canonical).unwrap();
        let lit = price_impact(&s, &c, 1.0, LambdaVariant::PaperLiteral).unwrap();
        assert_eq!(canon, 1.0);
        assert_eq!(lit, 1.0);

        // With gamma terms off, the two forms differ exactly by R.
        let r = 2.5;
        let s2 = Sym3::diag(0.7, 0.1, 0.1);
        let c2 = cvec(1.3, 0.0, 0.0);
        let canon2 = price_impact(&s2, &c2, r, LambdaVariant::Canonical).unwrap();
        let lit2 = price_impact(&s2, &c2, r, LambdaVariant::PaperLiteral).unwrap();
        assert!((lit2 / canon2 - r).abs() < 1e-12);

        // A positive cross-covariance raises the canonical impact.
        let s3 = Sym3 {
            vm: 0.2,
            ..Sym3::diag(0.7, 0.3, 0.3)
        };
        let c3 = cvec(1.3, 0.5, 0.0);
        let with_cross = price_impact(&s3, &c3, r, LambdaVariant::Canonical).unwrap();
        let base = price_impact(
            &Sym3::diag(0.7, 0.3, 0.3),
            &cvec(1.3, 0.0, 0.0),
            r,
            LambdaVariant::Canonical,
        )
        .unwrap();
        assert!(with_cross > base);
    }

    #[test]
    fn error_matrix_closed_form_at_h_zero() {
        let p = params();
        let s = Sym3::diag(0.8, 0.3, 0.2);
        let beta = 1.7;
        let m = error_matrix(&s, beta, &p).unwrap();
        let expected = Mat3::diag(-beta * beta * 0.8, -1.0, -1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.0[i][j] - expected.0[i][j]).abs() < 1e-12);
            }
        }
        let m0 = error_matrix(&s, 0.0, &p).unwrap();
        assert_eq!(m0, drift_matrix(&p));
    }

    #[test]
    fn error_matrix_trace_identity() {
        let mut rng = Stream::new(11);
        for _ in 0..100 {
            let p = ModelParams {
                gamma_f: rng.next_range(-1.0, 1.0),
                gamma_c: rng.next_range(-1.0, 1.0),
                alpha_m: rng.next_range(0.2, 2.0),
                alpha_c: rng.next_range(0.2, 2.0),
                ..params()
            };
            let s = Sym3::from_entries([
                rng.next_range(0.1, 2.0),
                rng.next_range(-0.3, 0.3),
                rng.next_range(-0.3, 0.3),
                rng.next_range(0.1, 2.0),
                rng.next_range(-0.3, 0.3),
                rng.next_range(0.1, 2.0),
            ]);
            let beta = rng.next_range(0.0, 3.0);
            let c = measurement_vec(beta, &p).unwrap();
            let k = kalman_gain(&s, &c, p.obs_variance()).unwrap();
            let m = error_matrix(&s, beta, &p).unwrap();
            let expected = drift_matrix(&p).trace() - crate::linalg::dot3(&k, &c.as_vec3());
            assert!((m.trace() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_sup_classical_closed_form() {
        let p = params();
        let grid = TimeGrid::new(0.99, 990).unwrap();
        let values: Vec<f64> = grid.times.iter().map(|&t| 1.0 / (1.0 - t)).collect();
        let beta = IntensityPath::new(grid, values).unwrap();
        let cov = integrate_riccati(
            &beta,
            Sym3::diag(1.0, 0.0, 0.0),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        let report = lambda_sup(&cov, &beta, &p).unwrap();
        assert!(
            (report.lambda + 1.0).abs() < 1e-6,
            "Lambda = {}",
            report.lambda
        );
        assert!(!report.unstable);
    }

    #[test]
    fn lambda_sup_zero_intensity_is_marginal() {
        let p = ModelParams {
            sigma_m: 0.1,
            sigma_c: 0.1,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let beta = IntensityPath::zero(grid.clone());
        let cov = integrate_riccati(
            &beta,
            Sym3::diag(1.0, 0.1, 0.1),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        let report = lambda_sup(&cov, &beta, &p).unwrap();
        assert!(report.lambda.abs() < 1e-12);
    }

    #[test]
    fn lambda_sup_matches_bruteforce_recomputation() {
        let p = ModelParams {
            gamma_f: 0.3,
            gamma_c: -0.2,
            sigma_m: 0.2,
            sigma_c: 0.2,
            var_m0: 0.04,
            var_c0: 0.04,
            ..params()
        };
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let beta = IntensityPath::constant(grid.clone(), 1.2).unwrap();
        let cov = integrate_riccati(
            &beta,
            crate::model::initial_covariance(&p),
            &p,
            &RiccatiOptions::default(),
        )
        .unwrap();
        let report = lambda_sup(&cov, &beta, &p).unwrap();
        let mut expect = f64::NEG_INFINITY;
        for (s, &b) in cov.sigmas.iter().zip(&beta.values) {
            expect = expect.max(error_matrix(s, b, &p).unwrap().max_real_eigenvalue());
        }
        assert!((report.lambda - expect).abs() < 1e-12);
        assert_eq!(
            report.lambda,
            report
                .eigen_trajectory
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        );
    }

    #[test]
    fn filter_step_drift_and_known_input() {
        let p = ModelParams {
            kappa_m: 0.5,
            kappa_c: 0.25,
            alpha_m: 2.0,
            alpha_c: 3.0,
            ..params()
        };
        let x = StateVec {
            v: 0.4,
            m: 1.0,
            c: -2.0,
        };
        // Zero gain: pure drift plus known input.
        let s = Sym3::zeros();
        let dt = 0.01;
        let out = filter_step(&x, &s, 0.123, 0.0, 1.0, &p, dt).unwrap();
        assert!((out.v - 0.4).abs() < 1e-15);
        assert!((out.m - (1.0 - 2.0 * 1.0 * dt)).abs() < 1e-15);
        assert!((out.c - (-2.0 + 3.0 * 2.0 * dt)).abs() < 1e-15);

        // Zero innovation: drift plus the dP kicks only.
        let s2 = Sym3::diag(1.0, 0.5, 0.5);
        let c2 = measurement_vec(1.0, &p).unwrap();
        let d_y = crate::linalg::dot3(&c2.as_vec3(), &x.as_vec3()) * dt;
        let d_p = 0.2;
        let out2 = filter_step(&x, &s2, d_y, d_p, 1.0, &p, dt).unwrap();
        assert!((out2.v - 0.4).abs() < 1e-15);
        assert!((out2.m - (1.0 - 2.0 * dt + 0.5 * d_p)).abs() < 1e-15);
        assert!((out2.c - (-2.0 + 6.0 * dt - 0.25 * d_p)).abs() < 1e-15);

        assert!(filter_step(&x, &s2, 0.0, 0.0, 1.0, &p, 0.0).is_err());
    }
}
