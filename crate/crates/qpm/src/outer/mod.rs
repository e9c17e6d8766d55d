//! The penalty outer loop: warm starts, subproblem dispatch, geometric
//! penalty growth, termination, KKT certification, and bound reporting.

mod bounds;
mod report;

pub use bounds::{
    compute_bounds, monitor_invariants, sample_gradient_bound, BoundInputs, BoundReport,
    InvariantViolation, PlBoundInputs,
};
pub use report::{bound_report_json, csv_float, tau_cap_text, RunOutcome, RunReport, TraceRow};

use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

use crate::core::{ConfigError, CountingOracle, OracleError, ProblemSpec};
use crate::inner::{gd_armijo, tr_solve, GdConfig, InnerError, InnerStatus, StepLog, TrConfig};
use crate::penalty::{EvalPoint, ToleranceRule};

/// Which inner solver minimizes the subproblems.
#[derive(Clone, Copy, Debug)]
pub enum InnerConfig {
    Gd(GdConfig),
    Tr(TrConfig),
}

impl InnerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            InnerConfig::Gd(_) => "gd",
            InnerConfig::Tr(_) => "tr",
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match self {
            InnerConfig::Gd(c) => c.validate(),
            InnerConfig::Tr(c) => c.validate(),
        }
    }
}

/// Analytic PL constants of the problem, for the tight bound report.
#[derive(Clone, Copy, Debug)]
pub struct PlInputs {
    pub sigma_min: f64,
    pub r: f64,
}

/// Outer-loop configuration.
#[derive(Clone, Debug)]
pub struct QpmConfig {
    /// Initial penalty parameter, >= 1.
    pub beta0: f64,
    /// Geometric growth factor, > 1.
    pub alpha: f64,
    pub rule: ToleranceRule,
    pub inner: InnerConfig,
    /// Safeguard; `None` derives `ceil(t_hat) + 10` from the bound report.
    pub max_outer_iters: Option<usize>,
    /// Require `||c(x0)|| <= eps0/sqrt(2)` before starting (on by default).
    pub enforce_x0_feasibility: bool,
    /// Abort when beta exceeds this; Q is numerically meaningless beyond.
    pub beta_limit: f64,
    /// Collect per-step instrumentation from the inner solvers.
    pub collect_step_logs: bool,
    /// Analytic PL constants, when known, for the bound report.
    pub pl: Option<PlInputs>,
    /// Box samples used to estimate the sublevel gradient bound L_f0.
    pub grad_bound_samples: usize,
    /// Seed for the L_f0 sampling.
    pub seed: u64,
}

impl QpmConfig {
    pub fn new(
        beta0: f64,
        alpha: f64,
        rule: ToleranceRule,
        inner: InnerConfig,
    ) -> Result<Self, ConfigError> {
        let cfg = QpmConfig {
            beta0,
            alpha,
            rule,
            inner,
            max_outer_iters: None,
            enforce_x0_feasibility: true,
            beta_limit: 1e15,
            collect_step_logs: false,
            pl: None,
            grad_bound_samples: 1000,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.beta0 >= 1.0) {
            return Err(ConfigError::new("beta0 must be >= 1"));
        }
        if !(self.alpha > 1.0) {
            return Err(ConfigError::new(
                "alpha must be > 1: the penalty schedule beta_{k+1} = alpha*beta_k must grow",
            ));
        }
        self.inner.validate()?;
        if let Some(pl) = &self.pl {
            if !(pl.sigma_min > 0.0) {
                return Err(ConfigError::new("sigma_min must be positive"));
            }
            if !(pl.r > self.rule.eps0()) {
                return Err(ConfigError::new("the PL radius R must exceed eps0"));
            }
        }
        Ok(())
    }

    pub fn with_pl(mut self, pl: PlInputs) -> Self {
        self.pl = Some(pl);
        self
    }

    pub fn with_step_logs(mut self, on: bool) -> Self {
        self.collect_step_logs = on;
        self
    }

    pub fn with_max_outer(mut self, limit: usize) -> Self {
        self.max_outer_iters = Some(limit);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Candidate KKT point with multipliers and the two residuals.
#[derive(Clone, Debug)]
pub struct KKTCertificate {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    /// `||c(x)||`.
    pub feas_residual: f64,
    /// `||∇f(x) - Σ λ_i ∇c_i(x)||`.
    pub stat_residual: f64,
    pub eps0: f64,
    pub eps1: f64,
}

impl KKTCertificate {
    pub fn is_valid(&self) -> bool {
        self.feas_residual <= self.eps0 && self.stat_residual <= self.eps1
    }
}

/// Computes both KKT residuals at `(x, lambda)` from fresh (uncounted) oracle
/// evaluations, independent of how `lambda` was produced.
pub fn certify_kkt(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    rule: &ToleranceRule,
) -> Result<KKTCertificate, OracleError> {
    if x.len() != problem.n() {
        return Err(OracleError::Dimension {
            expected: problem.n(),
            got: x.len(),
        });
    }
    if lambda.len() != problem.m() {
        return Err(OracleError::Dimension {
            expected: problem.m(),
            got: lambda.len(),
        });
    }
    let c = problem.constraint(x);
    let grad = problem.objective_gradient(x);
    let jac = problem.constraint_jacobian(x);
    let stat = (&grad - jac.tr_mul(lambda)).norm();
    Ok(KKTCertificate {
        x: x.clone(),
        lambda: lambda.clone(),
        feas_residual: c.norm(),
        stat_residual: stat,
        eps0: rule.eps0(),
        eps1: rule.eps1(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarmStartChoice {
    Current,
    Initial,
}

/// The better of `{x_k, x_0}` under `Q_beta`; ties keep the current iterate.
/// Costs no oracle calls: both penalty values come from cached evaluations.
pub fn warm_start(current: &EvalPoint, initial: &EvalPoint, beta: f64) -> WarmStartChoice {
    if initial.q(beta) < current.q(beta) {
        WarmStartChoice::Initial
    } else {
        WarmStartChoice::Current
    }
}

/// Why a run failed.
#[derive(Clone, Debug)]
pub enum FailureReason {
    InnerIterationCap { outer: usize },
    InnerStalled { outer: usize },
    OuterIterationCap { limit: usize },
    BetaOverflow { beta: f64 },
    /// The accepted subproblem solution increased Q; an implementation bug,
    /// not a modeling outcome.
    DecreaseConditionViolated { outer: usize },
    /// Termination fired but the certificate failed its own residual check.
    CertificateInvalid { feas: f64, stat: f64 },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::InnerIterationCap { outer } => {
                write!(f, "inner solver hit its iteration cap at outer iteration {outer}")
            }
            FailureReason::InnerStalled { outer } => {
                write!(f, "inner solver stalled at outer iteration {outer}")
            }
            FailureReason::OuterIterationCap { limit } => {
                write!(f, "outer iteration safeguard {limit} exceeded")
            }
            FailureReason::BetaOverflow { beta } => {
                write!(f, "penalty parameter overflowed the conditioning guard: beta = {beta:e}")
            }
            FailureReason::DecreaseConditionViolated { outer } => {
                write!(f, "subproblem decrease condition violated at outer iteration {outer}")
            }
            FailureReason::CertificateInvalid { feas, stat } => {
                write!(f, "termination produced an invalid certificate (feas {feas:e}, stat {stat:e})")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum QpmError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("oracle error: {0}")]
    Oracle(#[from] OracleError),
    #[error("run failed: {reason}")]
    RunFailed {
        reason: FailureReason,
        report: Box<RunReport>,
    },
}

/// A successful run: the certificate, the full report, and any step logs.
#[derive(Debug)]
pub struct QpmSolution {
    pub certificate: KKTCertificate,
    pub report: RunReport,
    /// One entry per outer iteration when `collect_step_logs` was set.
    pub step_logs: Vec<StepLog>,
}

struct RunState<'a> {
    problem: &'a ProblemSpec,
    cfg: &'a QpmConfig,
    f_x0: f64,
    c_norm_x0: f64,
    rows: Vec<TraceRow>,
    max_grad_f: f64,
}

impl RunState<'_> {
    fn report(
        &self,
        oracle: &CountingOracle,
        outcome: RunOutcome,
        certificate: Option<KKTCertificate>,
        bounds: Option<BoundReport>,
    ) -> RunReport {
        let last = self.rows.last();
        RunReport {
            problem: self.problem.name().to_string(),
            n: self.problem.n(),
            m: self.problem.m(),
            eps0: self.cfg.rule.eps0(),
            eps1: self.cfg.rule.eps1(),
            tau_cap: self.cfg.rule.tau_cap(),
            alpha: self.cfg.alpha,
            beta0: self.cfg.beta0,
            inner_kind: self.cfg.inner.kind(),
            f_low: self.problem.f_low(),
            f_x0: self.f_x0,
            c_norm_x0: self.c_norm_x0,
            outcome,
            outer_iters: self.rows.len(),
            beta_final: last.map_or(self.cfg.beta0, |r| r.beta),
            final_f: last.map_or(self.f_x0, |r| r.f),
            final_c_norm: last.map_or(self.c_norm_x0, |r| r.c_norm),
            final_grad_q_norm: last.map_or(f64::NAN, |r| r.grad_q_norm),
            max_grad_f_norm: self.max_grad_f,
            totals: oracle.counters().totals(),
            rows: self.rows.clone(),
            certificate,
            bounds,
        }
    }
}

/// Runs the quadratic penalty method from `x0`.
///
/// Each outer iteration warm-starts the inner solver at the better of
/// `{x_k, x0}` under the current `Q_beta`, solves to the feasibility-aware
/// tolerance, then either terminates with multipliers `-beta_k c(x_{k+1})`
/// (when `||c(x_{k+1})|| <= eps0`) or grows `beta`. The returned certificate
/// is recomputed from fresh oracle evaluations and is always valid; an
/// invalid one aborts the run as a bug.
pub fn qpm_solve(
    problem: &ProblemSpec,
    x0: DVector<f64>,
    cfg: &QpmConfig,
) -> Result<QpmSolution, QpmError> {
    cfg.validate()?;
    let rule = cfg.rule;
    let eps0 = rule.eps0();

    let mut oracle = CountingOracle::new(problem);
    let x0_point = EvalPoint::evaluate(&mut oracle, x0)?;
    let feas_cap = eps0 / 2.0_f64.sqrt();
    if cfg.enforce_x0_feasibility && x0_point.c_norm() > feas_cap * (1.0 + 1e-9) {
        return Err(QpmError::Config(ConfigError::new(format!(
            "||c(x0)|| = {:e} exceeds eps0/sqrt(2) = {:e}; move x0, loosen eps0, or disable \
             the start feasibility check",
            x0_point.c_norm(),
            feas_cap
        ))));
    }

    let df = x0_point.f - problem.f_low();
    let max_outer = cfg.max_outer_iters.unwrap_or_else(|| {
        if df > 0.0 {
            let t_hat =
                2.0 + (4.0 * df / (cfg.beta0 * eps0 * eps0)).ln() / cfg.alpha.ln();
            (t_hat.ceil().max(0.0) as usize) + 10
        } else {
            500
        }
    });

    let mut state = RunState {
        problem,
        cfg,
        f_x0: x0_point.f,
        c_norm_x0: x0_point.c_norm(),
        rows: Vec::new(),
        max_grad_f: x0_point.grad_f.norm(),
    };
    let mut step_logs = Vec::new();
    let mut beta = cfg.beta0;
    let mut current = x0_point.clone();
    let mut k = 0usize;

    macro_rules! run_failed {
        ($reason:expr) => {{
            let reason = $reason;
            let report = state.report(&oracle, RunOutcome::Failure(reason.to_string()), None, None);
            return Err(QpmError::RunFailed {
                reason,
                report: Box::new(report),
            });
        }};
    }

    loop {
        if k > 0 {
            oracle.begin_outer();
        }
        let start = match warm_start(&current, &x0_point, beta) {
            WarmStartChoice::Current => current.clone(),
            WarmStartChoice::Initial => x0_point.clone(),
        };
        let inner = match &cfg.inner {
            InnerConfig::Gd(c) => {
                gd_armijo(&mut oracle, beta, start, &rule, c, cfg.collect_step_logs)
            }
            InnerConfig::Tr(c) => {
                tr_solve(&mut oracle, beta, start, &rule, c, cfg.collect_step_logs)
            }
        }
        .map_err(|e| match e {
            InnerError::Config(c) => QpmError::Config(c),
            InnerError::Oracle(o) => QpmError::Oracle(o),
        })?;

        let bucket = oracle.counters().per_outer()[k];
        state.rows.push(TraceRow {
            k,
            beta,
            inner_iters: inner.iters,
            c_norm: inner.point.c_norm(),
            grad_q_norm: inner.grad_norm,
            f: inner.point.f,
            q: inner.q_out,
            value_evals: bucket.value,
            grad_evals: bucket.gradient,
            hess_evals: bucket.hessian,
        });
        if let Some(log) = inner.steps {
            step_logs.push(log);
        }
        state.max_grad_f = state.max_grad_f.max(inner.point.grad_f.norm());

        match inner.status {
            InnerStatus::Converged => {}
            InnerStatus::IterationCap => run_failed!(FailureReason::InnerIterationCap { outer: k }),
            InnerStatus::Stalled => run_failed!(FailureReason::InnerStalled { outer: k }),
        }

        // Decrease condition: guaranteed by warm start + monotone inner
        // solver; violation means a bug, not a modeling outcome.
        let q_reference = current.q(beta).min(x0_point.q(beta));
        if inner.q_out > q_reference + 1e-12 * (1.0 + q_reference.abs()) {
            run_failed!(FailureReason::DecreaseConditionViolated { outer: k });
        }
        debug_assert!(
            (beta - cfg.beta0 * cfg.alpha.powi(k as i32)).abs()
                <= 1e-12 * cfg.beta0 * cfg.alpha.powi(k as i32)
        );

        current = inner.point;

        if current.c_norm() <= eps0 {
            let lambda = -beta * &current.c;
            let certificate = certify_kkt(problem, &current.x, &lambda, &rule)?;
            if !certificate.is_valid() {
                run_failed!(FailureReason::CertificateInvalid {
                    feas: certificate.feas_residual,
                    stat: certificate.stat_residual,
                });
            }
            let bounds = build_bound_report(problem, cfg, &state, beta, k + 1);
            let report = state.report(
                &oracle,
                RunOutcome::Success,
                Some(certificate.clone()),
                bounds,
            );
            return Ok(QpmSolution {
                certificate,
                report,
                step_logs,
            });
        }

        beta *= cfg.alpha;
        if beta > cfg.beta_limit {
            run_failed!(FailureReason::BetaOverflow { beta });
        }
        k += 1;
        if k >= max_outer {
            run_failed!(FailureReason::OuterIterationCap { limit: max_outer });
        }
    }
}

fn build_bound_report(
    problem: &ProblemSpec,
    cfg: &QpmConfig,
    state: &RunState,
    beta_final: f64,
    t: usize,
) -> Option<BoundReport> {
    let pl = cfg.pl.map(|pl| {
        let sampled = sample_gradient_bound(
            problem,
            2.0 * state.f_x0 - problem.f_low(),
            -2.0,
            2.0,
            cfg.grad_bound_samples,
            cfg.seed,
        );
        PlBoundInputs {
            sigma_min: pl.sigma_min,
            r: pl.r,
            l_f0: state.max_grad_f.max(sampled),
            l_f0_estimated: true,
        }
    });
    let inputs = BoundInputs {
        f_x0: state.f_x0,
        f_low: problem.f_low(),
        pl,
    };
    compute_bounds(&inputs, &cfg.rule, cfg.alpha, cfg.beta0)
        .ok()
        .map(|mut b| {
            b.observed_beta_final = Some(beta_final);
            b.observed_outer_iters = Some(t);
            b
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_rosenbrock_sphere, make_x0_sphere};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn point(f: f64, c: f64) -> EvalPoint {
        EvalPoint {
            x: DVector::zeros(1),
            f,
            c: DVector::from_element(1, c),
            grad_f: DVector::zeros(1),
            jac_t_c: DVector::zeros(1),
        }
    }

    #[test]
    fn warm_start_prefers_current_on_ties_and_at_k0() {
        let x0 = point(1.0, 0.0);
        assert_eq!(warm_start(&x0, &x0, 3.0), WarmStartChoice::Current);
        // Feasible current with smaller f wins for every beta.
        let xk = point(0.5, 0.0);
        for beta in [0.0, 1.0, 100.0] {
            assert_eq!(warm_start(&xk, &x0, beta), WarmStartChoice::Current);
        }
    }

    #[test]
    fn warm_start_crossover_beta() {
        // f(x_k) = 0, ||c(x_k)|| = 2; f(x0) = 1, ||c(x0)|| = 0.
        // Q ties at beta* = 2(f(x0) - f(x_k))/(||c(x_k)||^2 - ||c(x0)||^2) = 0.5.
        let xk = point(0.0, 2.0);
        let x0 = point(1.0, 0.0);
        assert_eq!(warm_start(&xk, &x0, 0.49), WarmStartChoice::Current);
        assert_eq!(warm_start(&xk, &x0, 0.5), WarmStartChoice::Current); // tie
        assert_eq!(warm_start(&xk, &x0, 0.51), WarmStartChoice::Initial);
    }

    #[test]
    fn certify_exact_kkt_pair_is_zero() {
        // f = ||x||^2/2 on the line x_1 = 1: minimizer (1, 0), lambda = 1.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = crate::core::ProblemSpec::builder(2, 1)
            .objective(|x| 0.5 * x.norm_squared())
            .objective_gradient(|x| x.clone())
            .constraint(move |x| &a * x - DVector::from_element(1, 1.0))
            .constraint_jacobian(|_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
            .f_low(0.0)
            .build()
            .unwrap();
        let rule = ToleranceRule::adaptive(1e-6, 1e-6).unwrap();
        let cert = certify_kkt(
            &p,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::from_element(1, 1.0),
            &rule,
        )
        .unwrap();
        assert_eq!(cert.feas_residual, 0.0);
        assert_eq!(cert.stat_residual, 0.0);
        assert!(cert.is_valid());
    }

    #[test]
    fn multiplier_identity_matches_penalty_gradient() {
        // With lambda = -beta c(x), the stationarity residual is ||∇Q_beta(x)||.
        let (problem, _) = make_rosenbrock_sphere(4).unwrap();
        let rule = ToleranceRule::adaptive(1e-6, 1e-6).unwrap();
        for (s, beta) in [(0.7, 2.5), (-0.4, 11.0), (1.3, 0.5)] {
            let x = DVector::from_fn(4, |i, _| s + 0.1 * i as f64);
            let c = problem.constraint(&x);
            let lambda = -beta * &c;
            let cert = certify_kkt(&problem, &x, &lambda, &rule).unwrap();
            let grad_q = problem.objective_gradient(&x)
                + beta * problem.constraint_jacobian(&x).tr_mul(&c);
            assert_relative_eq!(cert.stat_residual, grad_q.norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn least_squares_multiplier_projects_onto_the_tangent_space() {
        // On the unit sphere with lambda = (∇f·x)/(2||x||^2), the residual is
        // the tangential component of ∇f.
        let (problem, _) = make_rosenbrock_sphere(2).unwrap();
        let rule = ToleranceRule::adaptive(1e-6, 1e-6).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let grad = problem.objective_gradient(&x);
        let lambda = DVector::from_element(1, grad.dot(&x) / (2.0 * x.norm_squared()));
        let cert = certify_kkt(&problem, &x, &lambda, &rule).unwrap();
        let tangential = &grad - (grad.dot(&x)) * &x; // ||x|| = 1
        assert_relative_eq!(cert.stat_residual, tangential.norm(), max_relative = 1e-12);
    }

    #[test]
    fn zero_constraint_map_terminates_at_k0_with_zero_multipliers() {
        // c ≡ 0 and x0 already eps1-stationary: x1 = x0, lambda = 0, T = 1.
        let p = crate::core::ProblemSpec::builder(3, 2)
            .objective(|x| 0.5 * x.norm_squared())
            .objective_gradient(|x| x.clone())
            .objective_hessian(|_| DMatrix::identity(3, 3))
            .constraint(|_| DVector::zeros(2))
            .constraint_jacobian(|_| DMatrix::zeros(2, 3))
            .constraint_hessian(|_, _| DMatrix::zeros(3, 3))
            .f_low(0.0)
            .build()
            .unwrap();
        let rule = ToleranceRule::adaptive(1e-6, 1e-6).unwrap();
        let x0 = DVector::from_element(3, 1e-8);
        let cfg = QpmConfig::new(1.0, 1.2, rule, InnerConfig::Gd(GdConfig::default())).unwrap();
        let sol = qpm_solve(&p, x0.clone(), &cfg).unwrap();
        assert_eq!(sol.report.outer_iters, 1);
        assert_eq!(sol.certificate.lambda, DVector::zeros(2));
        assert_eq!(sol.certificate.x, x0);
        assert!(sol.certificate.is_valid());
    }

    #[test]
    fn infeasible_start_is_a_configuration_error_unless_disabled() {
        let (problem, _) = make_rosenbrock_sphere(4).unwrap();
        let rule = ToleranceRule::adaptive(1e-3, 1e-3).unwrap();
        let cfg = QpmConfig::new(1.0, 1.2, rule, InnerConfig::Gd(GdConfig::default())).unwrap();
        let far = DVector::from_element(4, 2.0);
        match qpm_solve(&problem, far.clone(), &cfg) {
            Err(QpmError::Config(_)) => {}
            other => panic!("expected a configuration error, got {other:?}"),
        }
        let mut relaxed = cfg;
        relaxed.enforce_x0_feasibility = false;
        let sol = qpm_solve(&problem, far, &relaxed).unwrap();
        assert!(sol.certificate.is_valid());
    }

    #[test]
    fn small_sphere_run_produces_a_conforming_trace() {
        let (problem, pl) = make_rosenbrock_sphere(4).unwrap();
        let rule = ToleranceRule::adaptive(1e-4, 1e-4).unwrap();
        let cfg = QpmConfig::new(1.0, 1.2, rule, InnerConfig::Gd(GdConfig::default()))
            .unwrap()
            .with_pl(PlInputs {
                sigma_min: pl.sigma_min,
                r: pl.r,
            });
        let x0 = make_x0_sphere(4, 1e-4).unwrap();
        let sol = qpm_solve(&problem, x0, &cfg).unwrap();
        assert!(sol.certificate.is_valid());
        assert!(sol.report.final_c_norm <= 1e-4);
        // Penalty schedule is exactly geometric in the trace.
        for row in &sol.report.rows {
            let expected = 1.2f64.powi(row.k as i32);
            assert_relative_eq!(row.beta, expected, max_relative = 1e-12);
        }
        // Counter deltas in rows sum to the totals.
        let v: u64 = sol.report.rows.iter().map(|r| r.value_evals).sum();
        assert_eq!(v, sol.report.totals.value);
        assert!(monitor_invariants(&sol.report).is_empty());
        let b = sol.report.bounds.unwrap();
        assert!((sol.report.outer_iters as f64) < b.t_hat);
    }

    #[test]
    fn run_failure_carries_the_partial_trace() {
        let (problem, _) = make_rosenbrock_sphere(4).unwrap();
        let rule = ToleranceRule::adaptive(1e-6, 1e-6).unwrap();
        let gd = GdConfig {
            max_inner_iters: 3,
            ..GdConfig::default()
        };
        let cfg = QpmConfig::new(1.0, 1.2, rule, InnerConfig::Gd(gd)).unwrap();
        let x0 = make_x0_sphere(4, 1e-6).unwrap();
        match qpm_solve(&problem, x0, &cfg) {
            Err(QpmError::RunFailed { reason, report }) => {
                assert!(matches!(reason, FailureReason::InnerIterationCap { .. }));
                assert!(!report.rows.is_empty());
                assert!(!report.is_success());
            }
            other => panic!("expected a run failure, got {other:?}"),
        }
    }
}
