//! Per-iteration run trace and its CSV/JSON serializations.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use crate::core::CountTriple;

use super::bounds::BoundReport;
use super::KKTCertificate;

/// One outer iteration: the subproblem solved at `beta` producing `x_{k+1}`.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub k: usize,
    pub beta: f64,
    pub inner_iters: usize,
    /// `||c(x_{k+1})||`.
    pub c_norm: f64,
    /// `||∇Q_beta(x_{k+1})||`.
    pub grad_q_norm: f64,
    pub f: f64,
    pub q: f64,
    /// Oracle-call deltas attributed to this outer iteration.
    pub value_evals: u64,
    pub grad_evals: u64,
    pub hess_evals: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Success,
    Failure(String),
}

/// Full record of one solver run, serializable to CSV and JSON.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub problem: String,
    pub n: usize,
    pub m: usize,
    pub eps0: f64,
    pub eps1: f64,
    pub tau_cap: f64,
    pub alpha: f64,
    pub beta0: f64,
    pub inner_kind: &'static str,
    pub f_low: f64,
    pub f_x0: f64,
    pub c_norm_x0: f64,
    pub rows: Vec<TraceRow>,
    pub outcome: RunOutcome,
    /// Number of subproblems solved; equals T on success.
    pub outer_iters: usize,
    pub beta_final: f64,
    pub final_f: f64,
    pub final_c_norm: f64,
    pub final_grad_q_norm: f64,
    /// Max `||∇f||` over x0 and all accepted outer iterates.
    pub max_grad_f_norm: f64,
    pub totals: CountTriple,
    pub certificate: Option<KKTCertificate>,
    pub bounds: Option<BoundReport>,
}

/// 17 significant digits: round-trip exact for f64.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_infinite() && x > 0.0 {
        json!("inf")
    } else if x.is_infinite() {
        json!("-inf")
    } else {
        json!("nan")
    }
}

/// `tau_cap` in its CLI spelling: `0`, `inf`, or the positive real.
pub fn tau_cap_text(tau_cap: f64) -> String {
    if tau_cap == 0.0 {
        "0".to_string()
    } else if tau_cap.is_infinite() {
        "inf".to_string()
    } else {
        format!("{tau_cap}")
    }
}

impl RunReport {
    pub fn is_success(&self) -> bool {
        self.outcome == RunOutcome::Success
    }

    /// Per-iteration trace in the fixed CSV schema.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from(
            "k,beta,inner_iters,c_norm,gradQ_norm,f,Q,value_evals,grad_evals,hess_evals\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.k,
                csv_float(r.beta),
                r.inner_iters,
                csv_float(r.c_norm),
                csv_float(r.grad_q_norm),
                csv_float(r.f),
                csv_float(r.q),
                r.value_evals,
                r.grad_evals,
                r.hess_evals,
            ));
        }
        out
    }

    pub fn write_trace_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.trace_csv().as_bytes())
    }

    /// JSON summary: config echo, outcome, totals, final residuals, bounds.
    pub fn summary_json(&self) -> Value {
        let outcome = match &self.outcome {
            RunOutcome::Success => json!({"status": "success"}),
            RunOutcome::Failure(reason) => json!({"status": "failure", "reason": reason}),
        };
        let certificate = self.certificate.as_ref().map(|c| {
            json!({
                "feas_residual": json_f64(c.feas_residual),
                "stat_residual": json_f64(c.stat_residual),
                "eps0": json_f64(c.eps0),
                "eps1": json_f64(c.eps1),
                "valid": c.is_valid(),
                "lambda": c.lambda.iter().map(|v| json_f64(*v)).collect::<Vec<_>>(),
            })
        });
        let bounds = self.bounds.as_ref().map(bound_report_json);
        json!({
            "problem": self.problem,
            "n": self.n,
            "m": self.m,
            "config": {
                "eps0": json_f64(self.eps0),
                "eps1": json_f64(self.eps1),
                "tau_cap": tau_cap_text(self.tau_cap),
                "alpha": json_f64(self.alpha),
                "beta0": json_f64(self.beta0),
                "inner": self.inner_kind,
            },
            "outcome": outcome,
            "outer_iters": self.outer_iters,
            "beta_final": json_f64(self.beta_final),
            "x0": {"f": json_f64(self.f_x0), "c_norm": json_f64(self.c_norm_x0)},
            "final": {
                "f": json_f64(self.final_f),
                "c_norm": json_f64(self.final_c_norm),
                "gradQ_norm": json_f64(self.final_grad_q_norm),
            },
            "totals": {
                "value_evals": self.totals.value,
                "grad_evals": self.totals.gradient,
                "hess_evals": self.totals.hessian,
            },
            "max_grad_f_norm": json_f64(self.max_grad_f_norm),
            "trace_rows": self.rows.len(),
            "certificate": certificate,
            "bounds": bounds,
        })
    }

    pub fn write_summary_json(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        let text = serde_json::to_string_pretty(&self.summary_json()).expect("serializable");
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")
    }
}

/// JSON form of a bound report, shared by run summaries and `bounds.json`.
pub fn bound_report_json(b: &BoundReport) -> Value {
    json!({
        "t_hat": json_f64(b.t_hat),
        "beta_max_no_pl": json_f64(b.beta_max_no_pl),
        "t_tilde": b.t_tilde.map(json_f64),
        "beta_max_pl": b.beta_max_pl.map(json_f64),
        "observed_outer_iters": b.observed_outer_iters,
        "observed_beta_final": b.observed_beta_final.map(json_f64),
        "inputs": {
            "f_x0": json_f64(b.inputs.f_x0),
            "f_low": json_f64(b.inputs.f_low),
            "pl": b.inputs.pl.map(|p| json!({
                "sigma_min": json_f64(p.sigma_min),
                "r": json_f64(p.r),
                "l_f0": json_f64(p.l_f0),
                "l_f0_estimated": p.l_f0_estimated,
            })),
        },
        "alpha": json_f64(b.alpha),
        "beta0": json_f64(b.beta0),
        "eps0": json_f64(b.eps0),
        "eps1": json_f64(b.eps1),
    })
}
