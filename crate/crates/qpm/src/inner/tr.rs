//! Trust-region method with exact penalty Hessian and Steihaug truncated CG.

use crate::core::{CountingOracle, OracleError};
use crate::penalty::{hess_penalty_op, EvalPoint};

use super::{
    truncated_cg, InnerError, InnerResult, InnerStatus, StepLog, StoppingTest, TrConfig,
    TrTrialRecord, STALL_FLOOR,
};

/// Measured Q-differences below this are indistinguishable from round-off.
fn q_noise_floor(q: f64) -> f64 {
    64.0 * f64::EPSILON * (1.0 + q.abs())
}

/// Minimizes `Q_beta` from `start` until `||∇Q_beta(x)|| <= stop(x)`.
///
/// Rejected trials never replace the iterate and reuse the current model, so
/// each accepted iteration consumes exactly one Hessian call (model at the
/// old point) and one gradient call (at the new point); every trial costs one
/// value call. The radius never exceeds `delta_max` and strictly decreases
/// after a rejection. When the predicted decrease sinks below the round-off
/// floor of Q, the ratio test is meaningless and a trial is accepted iff its
/// measured Q does not increase.
pub fn tr_solve(
    oracle: &mut CountingOracle,
    beta: f64,
    start: EvalPoint,
    stop: &dyn StoppingTest,
    cfg: &TrConfig,
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
    let mut delta = cfg.delta0;
    let mut iters = 0usize;

    let finish = |cur: EvalPoint, grad_norm, q_cur, iters, status, log: Option<Vec<_>>| InnerResult {
        point: cur,
        grad_norm,
        q_out: q_cur,
        iters,
        status,
        steps: log.map(StepLog::Tr),
    };

    if grad_norm <= stop.tolerance_at(&cur) {
        return Ok(finish(cur, grad_norm, q_cur, 0, InnerStatus::Converged, log));
    }

    'outer: loop {
        if iters >= cfg.max_inner_iters {
            return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::IterationCap, log));
        }
        let hess = hess_penalty_op(oracle, &cur.x, beta, cfg.hessian_mode)?;
        let cauchy_scale = hess.norm_upper_bound();

        // Trial loop at a fixed model; only the radius changes on rejection.
        loop {
            let rel_tol = cfg.cg_rel_tol.min(grad_norm.sqrt());
            let cg = truncated_cg(&hess, &grad_q, delta, rel_tol);
            let predicted = cg.model_decrease;
            let trial_x = &cur.x + &cg.step;
            let delta_before = delta;

            let evaluated = match oracle.value(&trial_x) {
                Ok((f, c)) => {
                    let q_trial = f + 0.5 * beta * c.norm_squared();
                    if q_trial.is_finite() {
                        Some((f, c, q_trial))
                    } else {
                        None
                    }
                }
                Err(OracleError::NonFinite { .. }) => None,
                Err(e) => return Err(e.into()),
            };

            let (accepted, rho, actual) = match &evaluated {
                Some((_, _, q_trial)) => {
                    let actual = q_cur - q_trial;
                    if predicted <= q_noise_floor(q_cur) {
                        (actual >= 0.0, f64::NAN, actual)
                    } else {
                        let rho = actual / predicted;
                        (rho >= cfg.eta_accept, rho, actual)
                    }
                }
                None => (false, f64::NEG_INFINITY, f64::NAN),
            };

            let mut delta_after = delta;
            if accepted {
                if rho >= cfg.eta_expand && cg.boundary_hit {
                    delta_after = (cfg.expand * delta).min(cfg.delta_max);
                }
            } else {
                delta_after = cfg.shrink * delta;
            }
            if let Some(records) = log.as_mut() {
                records.push(TrTrialRecord {
                    delta_before,
                    delta_after,
                    step_norm: cg.step.norm(),
                    boundary_hit: cg.boundary_hit,
                    negative_curvature: cg.negative_curvature,
                    predicted,
                    actual,
                    rho,
                    accepted,
                    q_before: q_cur,
                    q_trial: evaluated.as_ref().map_or(f64::NAN, |(_, _, q)| *q),
                    cauchy_bound: cauchy_scale.map(|h_norm| {
                        0.5 * grad_norm * delta_before.min(grad_norm / h_norm)
                    }),
                    cg_iterations: cg.iterations,
                });
            }
            delta = delta_after;

            if accepted {
                let (f, c, q_trial) = evaluated.expect("accepted trials were evaluated");
                if trial_x == cur.x {
                    return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::Stalled, log));
                }
                let (grad_f, jac) = oracle.gradient(&trial_x)?;
                let jac_t_c = jac.tr_mul(&c);
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
                if grad_norm <= stop.tolerance_at(&cur) {
                    return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::Converged, log));
                }
                continue 'outer;
            }
            if delta < STALL_FLOOR {
                return Ok(finish(cur, grad_norm, q_cur, iters, InnerStatus::Stalled, log));
            }
        }
    }
}
