//! Unconstrained inner solvers for the penalty subproblems: gradient descent
//! with Armijo backtracking and a trust-region method with Steihaug truncated
//! CG and a hard radius cap.

mod cg;
mod gd;
mod tr;

pub use cg::{truncated_cg, CgResult};
pub use gd::gd_armijo;
pub use tr::tr_solve;

use thiserror::Error;

use crate::core::{ConfigError, OracleError};
use crate::penalty::{EvalPoint, HessianMode, ToleranceRule};

/// Step sizes and radii below this are treated as stalls.
pub(crate) const STALL_FLOOR: f64 = 1e-18;

#[derive(Debug, Error)]
pub enum InnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// The stationarity threshold in force at a candidate point. Re-evaluated at
/// every accepted iterate because the adaptive rule depends on `||c(x)||`,
/// which is already cached on the point.
pub trait StoppingTest {
    fn tolerance_at(&self, point: &EvalPoint) -> f64;
}

impl StoppingTest for ToleranceRule {
    fn tolerance_at(&self, point: &EvalPoint) -> f64 {
        self.tolerance(point.c_norm())
    }
}

/// Constant threshold, mostly for tests and plain unconstrained use.
pub struct FixedTolerance(pub f64);

impl StoppingTest for FixedTolerance {
    fn tolerance_at(&self, _point: &EvalPoint) -> f64 {
        self.0
    }
}

/// Gradient-descent configuration. Defaults follow the conventional Armijo
/// constants: slope 1e-4, halving backtracks, unit initial step, doubling
/// recovery after acceptance.
#[derive(Clone, Copy, Debug)]
pub struct GdConfig {
    /// Sufficient-decrease constant, in (0, 1).
    pub armijo_slope: f64,
    /// Step shrink factor per failed trial, in (0, 1).
    pub backtrack_factor: f64,
    /// First trial step of the first iteration, > 0.
    pub initial_step: f64,
    /// Growth applied to an accepted step for the next first trial, >= 1.
    pub step_recovery: f64,
    /// Safeguard; hitting it fails the run loudly.
    pub max_inner_iters: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            armijo_slope: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            step_recovery: 2.0,
            max_inner_iters: 200_000,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return Err(ConfigError::new("armijo_slope must be in (0, 1)"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(ConfigError::new("backtrack_factor must be in (0, 1)"));
        }
        if !(self.initial_step > 0.0) {
            return Err(ConfigError::new("initial_step must be positive"));
        }
        if !(self.step_recovery >= 1.0) {
            return Err(ConfigError::new("step_recovery must be >= 1"));
        }
        if self.max_inner_iters == 0 {
            return Err(ConfigError::new("max_inner_iters must be positive"));
        }
        Ok(())
    }
}

/// Trust-region configuration. The radius never exceeds `delta_max`, so every
/// trial point stays within `delta_max` of an accepted iterate.
#[derive(Clone, Copy, Debug)]
pub struct TrConfig {
    pub delta0: f64,
    pub delta_max: f64,
    /// Smallest acceptable actual/predicted ratio, in (0, 1).
    pub eta_accept: f64,
    /// Ratio above which a boundary step expands the radius, in (eta_accept, 1).
    pub eta_expand: f64,
    /// Radius shrink factor after a rejection, in (0, 1).
    pub shrink: f64,
    /// Radius growth factor after a strong boundary step, > 1.
    pub expand: f64,
    /// Base relative CG tolerance; the effective tolerance is
    /// `min(cg_rel_tol, sqrt(||g||))`.
    pub cg_rel_tol: f64,
    pub max_inner_iters: usize,
    pub hessian_mode: HessianMode,
}

impl Default for TrConfig {
    fn default() -> Self {
        TrConfig {
            delta0: 1.0,
            delta_max: 100.0,
            eta_accept: 0.1,
            eta_expand: 0.75,
            shrink: 0.25,
            expand: 2.0,
            cg_rel_tol: 0.1,
            max_inner_iters: 20_000,
            hessian_mode: HessianMode::Dense,
        }
    }
}

impl TrConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta0 > 0.0) {
            return Err(ConfigError::new("delta0 must be positive"));
        }
        if !(self.delta_max >= self.delta0) {
            return Err(ConfigError::new("delta_max must be >= delta0"));
        }
        if !(self.eta_accept > 0.0 && self.eta_accept < 1.0) {
            return Err(ConfigError::new("eta_accept must be in (0, 1)"));
        }
        if !(self.eta_expand > self.eta_accept && self.eta_expand < 1.0) {
            return Err(ConfigError::new("eta_expand must be in (eta_accept, 1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(ConfigError::new("shrink must be in (0, 1)"));
        }
        if !(self.expand > 1.0) {
            return Err(ConfigError::new("expand must be > 1"));
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol < 1.0) {
            return Err(ConfigError::new("cg_rel_tol must be in (0, 1)"));
        }
        if self.max_inner_iters == 0 {
            return Err(ConfigError::new("max_inner_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerStatus {
    /// `||∇Q(x_out)|| <= tolerance-in-force at x_out`.
    Converged,
    /// The safeguard iteration cap was reached.
    IterationCap,
    /// Step size or radius underflowed, or the iterate stopped moving.
    Stalled,
}

/// One accepted gradient-descent step.
#[derive(Clone, Copy, Debug)]
pub struct GdStepRecord {
    pub step: f64,
    pub grad_norm: f64,
    pub q_before: f64,
    pub q_after: f64,
    /// Value-oracle calls spent on this acceptance (failed trials included).
    pub trials: usize,
}

/// One trust-region trial (accepted or rejected).
#[derive(Clone, Copy, Debug)]
pub struct TrTrialRecord {
    pub delta_before: f64,
    pub delta_after: f64,
    pub step_norm: f64,
    pub boundary_hit: bool,
    pub negative_curvature: bool,
    /// Model decrease m(0) − m(d), >= 0.
    pub predicted: f64,
    /// Measured decrease Q(x) − Q(x + d); NaN for non-finite trials.
    pub actual: f64,
    pub rho: f64,
    pub accepted: bool,
    pub q_before: f64,
    /// Q at the trial point; NaN when the trial evaluated non-finite.
    pub q_trial: f64,
    /// Cauchy lower bound `0.5·||g||·min(delta, ||g||/||H||)` when
    /// a Hessian norm bound is available (dense mode).
    pub cauchy_bound: Option<f64>,
    pub cg_iterations: usize,
}

/// Per-step instrumentation, collected only on request.
#[derive(Clone, Debug)]
pub enum StepLog {
    Gd(Vec<GdStepRecord>),
    Tr(Vec<TrTrialRecord>),
}

/// Outcome of one inner solve.
#[derive(Clone, Debug)]
pub struct InnerResult {
    pub point: EvalPoint,
    /// `||∇Q_beta||` at `point`.
    pub grad_norm: f64,
    /// `Q_beta` at `point`.
    pub q_out: f64,
    /// Accepted steps. Equals the gradient calls consumed (GD) or the
    /// gradient+Hessian pairs consumed (TR).
    pub iters: usize,
    pub status: InnerStatus,
    pub steps: Option<StepLog>,
}
