//! Analytic penalty-parameter and outer-iteration bounds, and post-run
//! invariant monitoring against them.
//!
//! With `df = f(x0) - f_low`:
//!   - `beta_max_no_pl = 4·df·eps0^-2` bounds `beta_{T-2}` on any run;
//!   - `T < t_hat = 2 + log_alpha(4·df·beta0^-1·eps0^-2)`;
//! and under the PL condition with constants `(sigma_min, R)` and a gradient
//! bound `L_f0` on the sublevel set `{f <= 2 f(x0) - f_low}`:
//!   - `beta_max_pl = max((L_f0 + eps1)/sigma_min, 4·df/R)·eps0^-1`;
//!   - `T <= t_tilde = 2 + log_alpha(beta_max_pl/beta0)`.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::core::{ConfigError, ProblemSpec};
use crate::penalty::ToleranceRule;

use super::report::{RunOutcome, RunReport};

/// PL-side inputs for the tight bounds.
#[derive(Clone, Copy, Debug)]
pub struct PlBoundInputs {
    pub sigma_min: f64,
    pub r: f64,
    /// Bound on `||∇f||` over the working sublevel set.
    pub l_f0: f64,
    /// True when `l_f0` is a numerical estimate rather than an analytic bound.
    pub l_f0_estimated: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundInputs {
    pub f_x0: f64,
    pub f_low: f64,
    pub pl: Option<PlBoundInputs>,
}

/// The four bound values plus the observed run data they are compared with.
#[derive(Clone, Copy, Debug)]
pub struct BoundReport {
    pub t_hat: f64,
    pub beta_max_no_pl: f64,
    pub t_tilde: Option<f64>,
    pub beta_max_pl: Option<f64>,
    pub observed_outer_iters: Option<usize>,
    pub observed_beta_final: Option<f64>,
    pub inputs: BoundInputs,
    pub alpha: f64,
    pub beta0: f64,
    pub eps0: f64,
    pub eps1: f64,
}

/// Pure arithmetic evaluation of the bound formulas.
pub fn compute_bounds(
    inputs: &BoundInputs,
    rule: &ToleranceRule,
    alpha: f64,
    beta0: f64,
) -> Result<BoundReport, ConfigError> {
    if !(alpha > 1.0) {
        return Err(ConfigError::new("alpha must be > 1"));
    }
    if !(beta0 > 0.0) {
        return Err(ConfigError::new("beta0 must be positive"));
    }
    let df = inputs.f_x0 - inputs.f_low;
    if !(df > 0.0) {
        return Err(ConfigError::new(
            "bounds require f(x0) > f_low; the gap is the driving constant",
        ));
    }
    let eps0 = rule.eps0();
    let eps1 = rule.eps1();
    let log_alpha = alpha.ln();
    let beta_max_no_pl = 4.0 * df / (eps0 * eps0);
    let t_hat = 2.0 + (beta_max_no_pl / beta0).ln() / log_alpha;
    let (t_tilde, beta_max_pl) = match inputs.pl {
        None => (None, None),
        Some(pl) => {
            if !(pl.r > eps0) {
                return Err(ConfigError::new(format!(
                    "PL radius R = {} must exceed eps0 = {eps0}",
                    pl.r
                )));
            }
            if !(pl.sigma_min > 0.0) {
                return Err(ConfigError::new("sigma_min must be positive"));
            }
            if !(pl.l_f0 >= 0.0) {
                return Err(ConfigError::new("L_f0 must be non-negative"));
            }
            let beta_max = ((pl.l_f0 + eps1) / pl.sigma_min).max(4.0 * df / pl.r) / eps0;
            let t_tilde = 2.0 + (beta_max / beta0).ln() / log_alpha;
            (Some(t_tilde), Some(beta_max))
        }
    };
    Ok(BoundReport {
        t_hat,
        beta_max_no_pl,
        t_tilde,
        beta_max_pl,
        observed_outer_iters: None,
        observed_beta_final: None,
        inputs: *inputs,
        alpha,
        beta0,
        eps0,
        eps1,
    })
}

/// A broken run-level invariant; data, not an exception.
#[derive(Clone, Debug)]
pub enum InvariantViolation {
    /// `beta_k` drifted from `beta0·alpha^k`.
    BetaSchedule { k: usize, beta: f64, expected: f64 },
    /// An infeasible iterate escaped the sublevel set `{f <= 2 f(x0) - f_low}`.
    SublevelSet { k: usize, f: f64, limit: f64 },
    /// `beta_{T-2}` at or above the applicable bound.
    BetaBound {
        beta: f64,
        limit: f64,
        under_pl: bool,
    },
    /// Outer iterations at or above the applicable bound.
    OuterBound { t: usize, limit: f64, under_pl: bool },
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvariantViolation::BetaSchedule { k, beta, expected } => write!(
                f,
                "beta schedule broken at k={k}: beta={beta:e}, expected {expected:e}"
            ),
            InvariantViolation::SublevelSet { k, f: fv, limit } => write!(
                f,
                "sublevel-set containment broken at k={k}: f={fv} > 2 f(x0) - f_low = {limit}"
            ),
            InvariantViolation::BetaBound { beta, limit, under_pl } => write!(
                f,
                "beta_(T-2)={beta:e} reached the {} bound {limit:e}",
                if *under_pl { "PL" } else { "PL-free" }
            ),
            InvariantViolation::OuterBound { t, limit, under_pl } => write!(
                f,
                "outer iterations T={t} reached the {} bound {limit}",
                if *under_pl { "PL" } else { "PL-free" }
            ),
        }
    }
}

/// Checks a completed run against the schedule, sublevel-set, penalty-bound,
/// and outer-bound invariants. Empty on a conforming run.
pub fn monitor_invariants(report: &RunReport) -> Vec<InvariantViolation> {
    let mut violations = Vec::new();

    for row in &report.rows {
        let expected = report.beta0 * report.alpha.powi(row.k as i32);
        if (row.beta - expected).abs() > 1e-12 * expected {
            violations.push(InvariantViolation::BetaSchedule {
                k: row.k,
                beta: row.beta,
                expected,
            });
        }
    }

    let sublevel_limit = 2.0 * report.f_x0 - report.f_low;
    for row in &report.rows {
        if row.c_norm > report.eps0
            && row.f > sublevel_limit + 1e-9 * (1.0 + sublevel_limit.abs())
        {
            violations.push(InvariantViolation::SublevelSet {
                k: row.k,
                f: row.f,
                limit: sublevel_limit,
            });
        }
    }

    if report.outcome == RunOutcome::Success {
        if let Some(bounds) = &report.bounds {
            let t = report.outer_iters;
            if t >= 2 {
                let beta_t_minus_2 = report.rows[t - 2].beta;
                if beta_t_minus_2 >= bounds.beta_max_no_pl {
                    violations.push(InvariantViolation::BetaBound {
                        beta: beta_t_minus_2,
                        limit: bounds.beta_max_no_pl,
                        under_pl: false,
                    });
                }
                if let Some(limit) = bounds.beta_max_pl {
                    if beta_t_minus_2 >= limit {
                        violations.push(InvariantViolation::BetaBound {
                            beta: beta_t_minus_2,
                            limit,
                            under_pl: true,
                        });
                    }
                }
            }
            if (t as f64) >= bounds.t_hat {
                violations.push(InvariantViolation::OuterBound {
                    t,
                    limit: bounds.t_hat,
                    under_pl: false,
                });
            }
            if let Some(t_tilde) = bounds.t_tilde {
                // One extra iteration of slack when L_f0 is only an estimate.
                let slack = match bounds.inputs.pl {
                    Some(pl) if pl.l_f0_estimated => 1.0,
                    _ => 0.0,
                };
                if (t as f64) > t_tilde + slack {
                    violations.push(InvariantViolation::OuterBound {
                        t,
                        limit: t_tilde + slack,
                        under_pl: true,
                    });
                }
            }
        }
    }

    violations
}

/// Max `||∇f||` over box samples that land in `{f <= f_threshold}`;
/// 0 when none do. Deterministic for a seed; an estimate, never a bound.
pub fn sample_gradient_bound(
    problem: &ProblemSpec,
    f_threshold: f64,
    lo: f64,
    hi: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..n_samples {
        let x = DVector::from_fn(problem.n(), |_, _| rng.gen_range(lo..hi));
        if problem.objective(&x) <= f_threshold {
            best = best.max(problem.objective_gradient(&x).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::CountTriple;
    use approx::assert_relative_eq;

    fn rule(eps0: f64, eps1: f64) -> ToleranceRule {
        ToleranceRule::adaptive(eps0, eps1).unwrap()
    }

    #[test]
    fn t_hat_and_beta_max_no_pl() {
        // alpha = 1.2, beta0 = 1, df = 1, eps0 = 1e-2:
        // t_hat = 2 + ln(4e4)/ln(1.2) = 60.1206; beta_max = 4e4.
        let inputs = BoundInputs { f_x0: 1.0, f_low: 0.0, pl: None };
        let b = compute_bounds(&inputs, &rule(1e-2, 1e-3), 1.2, 1.0).unwrap();
        assert_relative_eq!(b.t_hat, 60.120_580_579_901_21, max_relative = 1e-12);
        assert_relative_eq!(b.beta_max_no_pl, 4.0e4, max_relative = 1e-15);
        assert!(b.t_tilde.is_none() && b.beta_max_pl.is_none());
    }

    #[test]
    fn beta_max_pl_takes_the_max_of_the_two_terms() {
        // L_f0 = 10, eps1 = 1e-3, sigma = sqrt(2), R = 0.5, df = 1, eps0 = 1e-2:
        // max(10.001/sqrt(2) = 7.0718, 4/0.5 = 8)·100 = 800.
        let inputs = BoundInputs {
            f_x0: 1.0,
            f_low: 0.0,
            pl: Some(PlBoundInputs {
                sigma_min: 2.0_f64.sqrt(),
                r: 0.5,
                l_f0: 10.0,
                l_f0_estimated: false,
            }),
        };
        let b = compute_bounds(&inputs, &rule(1e-2, 1e-3), 1.2, 1.0).unwrap();
        assert_relative_eq!(b.beta_max_pl.unwrap(), 800.0, max_relative = 1e-12);
        assert_relative_eq!(
            b.t_tilde.unwrap(),
            2.0 + 800.0_f64.ln() / 1.2_f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn pl_radius_must_exceed_eps0() {
        let inputs = BoundInputs {
            f_x0: 1.0,
            f_low: 0.0,
            pl: Some(PlBoundInputs {
                sigma_min: 1.0,
                r: 1e-3,
                l_f0: 1.0,
                l_f0_estimated: false,
            }),
        };
        assert!(compute_bounds(&inputs, &rule(1e-2, 1e-3), 1.2, 1.0).is_err());
    }

    #[test]
    fn degenerate_gap_is_rejected() {
        let inputs = BoundInputs { f_x0: 0.0, f_low: 0.0, pl: None };
        assert!(compute_bounds(&inputs, &rule(1e-2, 1e-3), 1.2, 1.0).is_err());
    }

    fn fake_report(rows: Vec<super::super::report::TraceRow>, t: usize) -> RunReport {
        let bounds = compute_bounds(
            &BoundInputs { f_x0: 1.0, f_low: 0.0, pl: None },
            &rule(1e-2, 1e-2),
            1.2,
            1.0,
        )
        .unwrap();
        RunReport {
            problem: "fake".into(),
            n: 2,
            m: 1,
            eps0: 1e-2,
            eps1: 1e-2,
            tau_cap: f64::INFINITY,
            alpha: 1.2,
            beta0: 1.0,
            inner_kind: "gd",
            f_low: 0.0,
            f_x0: 1.0,
            c_norm_x0: 0.0,
            rows,
            outcome: RunOutcome::Success,
            outer_iters: t,
            beta_final: 1.0,
            final_f: 0.0,
            final_c_norm: 0.0,
            final_grad_q_norm: 0.0,
            max_grad_f_norm: 1.0,
            totals: CountTriple::default(),
            certificate: None,
            bounds: Some(bounds),
        }
    }

    fn row(k: usize, beta: f64, c_norm: f64, f: f64) -> super::super::report::TraceRow {
        super::super::report::TraceRow {
            k,
            beta,
            inner_iters: 1,
            c_norm,
            grad_q_norm: 0.0,
            f,
            q: f,
            value_evals: 1,
            grad_evals: 1,
            hess_evals: 0,
        }
    }

    #[test]
    fn constructed_sublevel_violation_is_caught() {
        // f = 2 f(x0) - f_low + 1 = 3 at an infeasible iterate.
        let rows = vec![row(0, 1.0, 0.5, 3.0), row(1, 1.2, 1e-3, 0.5)];
        let report = fake_report(rows, 2);
        let violations = monitor_invariants(&report);
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            violations[0],
            InvariantViolation::SublevelSet { k: 0, .. }
        ));
    }

    #[test]
    fn constructed_outer_bound_violation_is_caught() {
        // t_hat = 60.12 for this configuration; fake a run with T = 62.
        let t = 62;
        let rows: Vec<_> = (0..t)
            .map(|k| row(k, 1.2f64.powi(k as i32), if k + 1 == t { 1e-3 } else { 0.5 }, 0.5))
            .collect();
        let report = fake_report(rows, t);
        let violations = monitor_invariants(&report);
        assert!(violations
            .iter()
            .any(|v| matches!(v, InvariantViolation::OuterBound { under_pl: false, .. })));
        // The beta bound breaks too at this length: beta_60 = 1.2^60 > 4e4.
        assert!(violations
            .iter()
            .any(|v| matches!(v, InvariantViolation::BetaBound { under_pl: false, .. })));
    }

    #[test]
    fn broken_beta_schedule_is_caught() {
        let rows = vec![row(0, 1.0, 0.5, 0.5), row(1, 1.3, 1e-3, 0.5)];
        let report = fake_report(rows, 2);
        let violations = monitor_invariants(&report);
        assert!(violations
            .iter()
            .any(|v| matches!(v, InvariantViolation::BetaSchedule { k: 1, .. })));
    }

    #[test]
    fn conforming_trace_is_clean() {
        let rows = vec![row(0, 1.0, 0.5, 0.5), row(1, 1.2, 1e-3, 0.5)];
        let report = fake_report(rows, 2);
        assert!(monitor_invariants(&report).is_empty());
    }
}
