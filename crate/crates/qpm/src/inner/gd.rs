//! Gradient descent with Armijo backtracking on the penalty `Q_beta`.

use nalgebra::DVector;

use crate::core::{CountingOracle, OracleError};
use crate::penalty::EvalPoint;

use super::{
    GdConfig, GdStepRecord, InnerError, InnerResult, InnerStatus, StepLog, StoppingTest,
    STALL_FLOOR,
};

/// Minimizes `Q_beta` from `start` until `||∇Q_beta(x)|| <= stop(x)`.
///
/// Accepted Q-values are non-increasing. Every trial evaluation is one
/// value-oracle call; every accepted step costs exactly one gradient call, so
/// `iters` equals the gradient calls consumed. Non-finite trial values are
/// treated as failed trials; a step underflow below 1e-18 reports a stall.
pub fn gd_armijo(
    oracle: &mut CountingOracle,
    beta: f64,
    start: EvalPoint,
    stop: &dyn StoppingTest,
    cfg: &GdConfig,
    collect_log: bool,
) -> Result<InnerResult, InnerError> {
    cfg.validate()?;
    let mut cur = start;
    let mut q_cur = cur.q(beta);
    if !q_cur.is_finite() {
        return Err(InnerError::Oracle(OracleError::NonFinite {
            oracle: "penalty value at the start point",
            coordinate: 0,
        }));
    }
    let mut grad_q = cur.grad_q(beta);
    let mut grad_norm = grad_q.norm();
    let mut log = collect_log.then(Vec::new);
    let mut iters = 0usize;
    let mut first_trial_step = cfg.initial_step;

    let finish = |cur: EvalPoint, grad_norm, q_cur, iters, status, log: Option<Vec<_>>| InnerResult {
        point: cur,
        grad_norm,
        q_out: q_cur,
        iters,
        status,
        steps: log.map(StepLog::Gd),
    };

    if grad_norm <= stop.tolerance_at(&cur) {
        return Ok(finish(cur, grad_norm, q_cur, 0, InnerStatus::Converged, log));
    }

    loop {
        if iters >= cfg.max_inner_iters {
            return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::IterationCap, log));
        }

        // Backtracking line search along -∇Q. Near the round-off floor of Q
        // a whole scale sweep can fail on 1-ulp noise; before declaring a
        // stall the sweep is retried on shifted step grids, which moves every
        // trial point and redraws the rounding.
        let mut t = first_trial_step;
        let mut trials = 0usize;
        let mut rescales = 0u32;
        let accepted: (DVector<f64>, f64, DVector<f64>, f64);
        'search: loop {
            let trial_x = &cur.x - t * &grad_q;
            let floored = if trial_x == cur.x {
                // Step rounds to no movement; not evaluated, not counted.
                true
            } else {
                trials += 1;
                match oracle.value(&trial_x) {
                    Ok((f, c)) => {
                        let q_trial = f + 0.5 * beta * c.norm_squared();
                        if q_trial.is_finite()
                            && q_trial <= q_cur - cfg.armijo_slope * t * grad_norm * grad_norm
                        {
                            accepted = (trial_x, f, c, q_trial);
                            break 'search;
                        }
                    }
                    // A trial outside the domain of finiteness just backtracks.
                    Err(OracleError::NonFinite { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
                t *= cfg.backtrack_factor;
                t < STALL_FLOOR
            };
            if floored {
                rescales += 1;
                if rescales > 2 {
                    return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::Stalled, log));
                }
                t = cfg.initial_step * 0.7f64.powi(rescales as i32);
            }
        }
        let (trial_x, f, c, q_trial) = accepted;

        let (grad_f, jac) = oracle.gradient(&trial_x)?;
        let jac_t_c = jac.tr_mul(&c);
        if let Some(records) = log.as_mut() {
            records.push(GdStepRecord {
                step: t,
                grad_norm,
                q_before: q_cur,
                q_after: q_trial,
                trials,
            });
        }
        cur = EvalPoint {
            x: trial_x,
            f,
            c,
            grad_f,
            jac_t_c,
        };
        q_cur = q_trial;
        grad_q = cur.grad_q(beta);
        grad_norm = grad_q.norm();
        iters += 1;
        first_trial_step = t * cfg.step_recovery;

        if grad_norm <= stop.tolerance_at(&cur) {
            return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::Converged, log));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::ProblemSpec;
    use crate::inner::FixedTolerance;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn half_norm_squared(n: usize) -> ProblemSpec {
        ProblemSpec::builder(n, 1)
            .name("half-norm-squared")
            .objective(|x| 0.5 * x.norm_squared())
            .objective_gradient(|x| x.clone())
            .constraint(|_| DVector::zeros(1))
            .constraint_jacobian(|x| DMatrix::zeros(1, x.len()))
            .f_low(0.0)
            .build()
            .unwrap()
    }

    fn eval_start(problem: &ProblemSpec, x: DVector<f64>) -> (CountingOracle<'_>, EvalPoint) {
        let mut oracle = CountingOracle::new(problem);
        let start = EvalPoint::evaluate(&mut oracle, x).unwrap();
        (oracle, start)
    }

    #[test]
    fn immediate_convergence_costs_nothing() {
        let p = half_norm_squared(3);
        let (mut oracle, start) = eval_start(&p, DVector::zeros(3));
        let before = oracle.counters().totals();
        let out = gd_armijo(
            &mut oracle,
            0.0,
            start,
            &FixedTolerance(1e-6),
            &GdConfig::default(),
            false,
        )
        .unwrap();
        assert_eq!(out.status, InnerStatus::Converged);
        assert_eq!(out.iters, 0);
        assert_eq!(oracle.counters().totals(), before);
    }

    #[test]
    fn quadratic_converges_in_one_unit_step() {
        // f = ||x||^2/2, beta = 0: x_1 = (1 - t) x_0 with t = 1 accepted
        // whenever armijo_slope <= 0.5.
        let p = half_norm_squared(5);
        let (mut oracle, start) = eval_start(&p, DVector::from_element(5, 1.0));
        let out = gd_armijo(
            &mut oracle,
            0.0,
            start,
            &FixedTolerance(1e-6),
            &GdConfig::default(),
            true,
        )
        .unwrap();
        assert_eq!(out.status, InnerStatus::Converged);
        assert_eq!(out.iters, 1);
        assert_eq!(out.point.x, DVector::zeros(5));
        match out.steps.unwrap() {
            StepLog::Gd(records) => {
                assert_eq!(records.len(), 1);
                assert_eq!(records[0].step, 1.0);
                assert_eq!(records[0].trials, 1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn monotone_q_and_armijo_hold_on_rosenbrock() {
        let p = ProblemSpec::builder(2, 1)
            .objective(|x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2))
            .objective_gradient(|x| {
                DVector::from_vec(vec![
                    -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            })
            .constraint(|x| DVector::from_element(1, x.norm_squared() - 1.0))
            .constraint_jacobian(|x| DMatrix::from_fn(1, x.len(), |_, j| 2.0 * x[j]))
            .f_low(0.0)
            .build()
            .unwrap();
        let cfg = GdConfig::default();
        let (mut oracle, start) = eval_start(&p, DVector::from_vec(vec![-0.5, 0.7]));
        let grads_before = oracle.counters().gradient_evals();
        let out = gd_armijo(&mut oracle, 2.0, start, &FixedTolerance(1e-5), &cfg, true).unwrap();
        assert_eq!(out.status, InnerStatus::Converged);
        assert!(out.grad_norm <= 1e-5);
        let records = match out.steps.unwrap() {
            StepLog::Gd(r) => r,
            _ => unreachable!(),
        };
        // Oracle parity: iterations == gradient calls consumed by the solve.
        assert_eq!(
            out.iters as u64,
            oracle.counters().gradient_evals() - grads_before
        );
        assert_eq!(out.iters, records.len());
        for w in records.windows(2) {
            assert!(w[1].q_before <= w[0].q_after + 1e-15 * (1.0 + w[0].q_after.abs()));
        }
        for r in &records {
            assert!(
                r.q_after <= r.q_before - cfg.armijo_slope * r.step * r.grad_norm * r.grad_norm
            );
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let p = half_norm_squared(4);
        let (mut oracle, start) = eval_start(&p, DVector::from_element(4, 100.0));
        let cfg = GdConfig {
            max_inner_iters: 1,
            // Tiny steps so one iteration cannot converge.
            initial_step: 1e-3,
            step_recovery: 1.0,
            ..GdConfig::default()
        };
        let out = gd_armijo(&mut oracle, 0.0, start, &FixedTolerance(1e-12), &cfg, false).unwrap();
        assert_eq!(out.status, InnerStatus::IterationCap);
        assert_eq!(out.iters, 1);
    }

    #[test]
    fn non_finite_wall_stalls_instead_of_looping() {
        // Objective is finite only at the start; every trial fails, the step
        // underflows, and the solver reports a stall.
        let p = ProblemSpec::builder(1, 1)
            .objective(|x| if x[0] == 1.0 { 1.0 } else { f64::NAN })
            .objective_gradient(|_| DVector::from_element(1, 1.0))
            .constraint(|_| DVector::zeros(1))
            .constraint_jacobian(|_| DMatrix::zeros(1, 1))
            .f_low(0.0)
            .build()
            .unwrap();
        let (mut oracle, start) = eval_start(&p, DVector::from_element(1, 1.0));
        let out = gd_armijo(
            &mut oracle,
            0.0,
            start,
            &FixedTolerance(1e-12),
            &GdConfig::default(),
            false,
        )
        .unwrap();
        assert_eq!(out.status, InnerStatus::Stalled);
        assert_relative_eq!(out.point.x[0], 1.0);
    }
}
