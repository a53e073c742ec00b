//! Deterministic CSV and JSON emission. Floats are printed with 17
//! significant digits so files round-trip losslessly and reruns are
//! byte-identical.

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::filter::GainPath;
use crate::perturbation::SensitivityPath;
use crate::riccati::{BlowupScanResult, CovPath};
use crate::simulator::{McSummary, PathRecord};
use crate::stability::StabilityReport;
use serde::Serialize;
use std::fmt::Write as _;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::InvalidArgument(format!("serialization: {e}")))
}

/// Columns: t, sigma_vv, sigma_vm, sigma_vc, sigma_mm, sigma_mc, sigma_cc,
/// psd_min_eig.
pub fn cov_path_csv(path: &CovPath) -> String {
    let mut out =
        String::from("t,sigma_vv,sigma_vm,sigma_vc,sigma_mm,sigma_mc,sigma_cc,psd_min_eig\n");
    for (k, s) in path.sigmas.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(path.grid.times[k]),
            fmt_f64(s.vv),
            fmt_f64(s.vm),
            fmt_f64(s.vc),
            fmt_f64(s.mm),
            fmt_f64(s.mc),
            fmt_f64(s.cc),
            fmt_f64(s.min_eigenvalue()),
        );
    }
    out
}

/// Columns: t, K1, K2, K3, lambda_impact, maxRe_eig_M.
pub fn filter_csv(gains: &GainPath, eigen_trajectory: &[f64]) -> String {
    let mut out = String::from("t,K1,K2,K3,lambda_impact,maxRe_eig_M\n");
    for (k, g) in gains.gains.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(gains.grid.times[k]),
            fmt_f64(g[0]),
            fmt_f64(g[1]),
            fmt_f64(g[2]),
            fmt_f64(gains.impacts[k]),
            fmt_f64(eigen_trajectory.get(k).copied().unwrap_or(f64::NAN)),
        );
    }
    out
}

/// Columns: t, beta_star, Sigma_vv, lambda.
pub fn equilibrium_csv(sol: &EquilibriumSolution) -> String {
    let mut out = String::from("t,beta_star,Sigma_vv,lambda\n");
    for k in 0..sol.cov_path.sigmas.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(sol.beta_star.grid.times[k]),
            fmt_f64(sol.beta_star.values[k]),
            fmt_f64(sol.cov_path.sigmas[k].vv),
            fmt_f64(sol.lambda_path[k]),
        );
    }
    out
}

#[derive(Serialize)]
struct EquilibriumSummary<'a> {
    #[serde(rename = "J")]
    j: f64,
    residuals: &'a crate::equilibrium::Residuals,
    iterations: usize,
    converged: bool,
}

pub fn equilibrium_summary_json(sol: &EquilibriumSolution) -> Result<String> {
    to_json_pretty(&EquilibriumSummary {
        j: sol.profit_j,
        residuals: &sol.residuals,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Columns: t, dvv_linear, dvv_fd, abs_gap.
pub fn sensitivity_csv(sens: &SensitivityPath, dvv_fd: &[f64]) -> String {
    let mut out = String::from("t,dvv_linear,dvv_fd,abs_gap\n");
    for (k, &lin) in sens.dvv.iter().enumerate() {
        let fd = dvv_fd.get(k).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(sens.grid.times[k]),
            fmt_f64(lin),
            fmt_f64(fd),
            fmt_f64((lin - fd).abs()),
        );
    }
    out
}

pub fn mc_summary_json(summary: &McSummary) -> Result<String> {
    to_json_pretty(summary)
}

pub fn stability_json(report: &StabilityReport) -> Result<String> {
    to_json_pretty(report)
}

pub fn breakdown_json(scan: &BlowupScanResult) -> Result<String> {
    to_json_pretty(scan)
}

/// Per-H scan rows: h, outcome, breakdown_time, mode.
pub fn breakdown_csv(scan: &BlowupScanResult) -> String {
    let mut out = String::from("h,outcome,breakdown_time,mode\n");
    for rec in &scan.records {
        match rec.outcome {
            crate::riccati::ScanOutcome::Completed => {
                let _ = writeln!(out, "{},completed,,", fmt_f64(rec.h));
            }
            crate::riccati::ScanOutcome::Breakdown { time, mode } => {
                let _ = writeln!(
                    out,
                    "{},breakdown,{},{}",
                    fmt_f64(rec.h),
                    fmt_f64(time),
                    mode.as_str()
                );
            }
        }
    }
    out
}

/// Per-path trajectory rows: t, m, c, eps_state, Y, P, theta plus the path
/// header fields carried on every row.
pub fn path_csv(rec: &PathRecord) -> String {
    let mut out = String::from("seed,t,v,m,c,eps_state,Y,P,theta\n");
    for k in 0..rec.price.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.seed,
            fmt_f64(rec.grid.times[k]),
            fmt_f64(rec.v),
            fmt_f64(rec.m[k]),
            fmt_f64(rec.c[k]),
            fmt_f64(rec.eps_state[k]),
            fmt_f64(rec.y[k]),
            fmt_f64(rec.price[k]),
            fmt_f64(rec.theta[k]),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_roundtrips() {
        for x in [
            0.1,
            -3.5e-17,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e12,
            -0.0,
            5e-324,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s}");
        }
    }
}
