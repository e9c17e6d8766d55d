//! Problem abstraction, derivative oracles with call counting, and
//! finite-difference verification of user-supplied derivatives.
//!
//! A [`ProblemSpec`] bundles the oracles of one equality-constrained problem
//! and is immutable once built; concurrent runs may share it by reference.
//! All oracle-call accounting goes through a per-run [`CountingOracle`], so
//! there is no global mutable state.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Hessian of the i-th constraint: `(x, i) -> ∇²c_i(x)`.
pub type IndexedMatrixFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;
/// Hessian-vector product of the objective: `(x, v) -> ∇²f(x)·v`.
pub type HvpFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Weighted constraint Hessian-vector product: `(x, w, v) -> Σ_i w_i ∇²c_i(x)·v`.
pub type WeightedHvpFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Errors raised by oracle evaluation and capability checks.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("non-finite output from the {oracle} oracle at coordinate {coordinate}")]
    NonFinite {
        oracle: &'static str,
        coordinate: usize,
    },
    #[error("objective value {value} is below the declared lower bound {f_low}")]
    BelowLowerBound { value: f64, f_low: f64 },
    #[error("problem does not supply {0} oracles")]
    MissingCapability(&'static str),
    #[error("{oracle} Hessian is not symmetric: max |H - H'| = {asymmetry:e} exceeds {tolerance:e}")]
    AsymmetricHessian {
        oracle: String,
        asymmetry: f64,
        tolerance: f64,
    },
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Errors raised by configuration and constructor validation.
#[derive(Debug, Error)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

/// An equality-constrained problem `min f(x) s.t. c(x) = 0` with `m <= n`.
///
/// First-order oracles are required; second-order oracles (dense and/or
/// matrix-free) are optional and gate the trust-region inner solver.
/// `f_low` is a lower bound on `f` over all of space.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    n: usize,
    m: usize,
    f_low: f64,
    obj: ScalarFn,
    obj_grad: VectorFn,
    obj_hess: Option<MatrixFn>,
    obj_hvp: Option<HvpFn>,
    cons: VectorFn,
    cons_jac: MatrixFn,
    cons_hess: Option<IndexedMatrixFn>,
    cons_whvp: Option<WeightedHvpFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("f_low", &self.f_low)
            .field("has_hessians", &self.has_hessians())
            .finish()
    }
}

impl ProblemSpec {
    pub fn builder(n: usize, m: usize) -> ProblemBuilder {
        ProblemBuilder::new(n, m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Decision dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Constraint dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Declared lower bound on the objective.
    pub fn f_low(&self) -> f64 {
        self.f_low
    }

    pub fn has_hessians(&self) -> bool {
        self.obj_hess.is_some() && self.cons_hess.is_some()
    }

    pub fn has_hessian_products(&self) -> bool {
        self.obj_hvp.is_some() && self.cons_whvp.is_some()
    }

    /// Raw (uncounted) objective evaluation. Solvers must go through
    /// [`CountingOracle`] instead.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        (self.obj)(x)
    }

    pub fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n);
        (self.obj_grad)(x)
    }

    pub fn objective_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, OracleError> {
        let h = self
            .obj_hess
            .as_ref()
            .ok_or(OracleError::MissingCapability("objective Hessian"))?;
        Ok(h(x))
    }

    pub fn objective_hessian_vp(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>, OracleError> {
        let h = self
            .obj_hvp
            .as_ref()
            .ok_or(OracleError::MissingCapability("objective Hessian-vector"))?;
        Ok(h(x, v))
    }

    pub fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n);
        (self.cons)(x)
    }

    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.n);
        (self.cons_jac)(x)
    }

    pub fn constraint_hessian(
        &self,
        x: &DVector<f64>,
        i: usize,
    ) -> Result<DMatrix<f64>, OracleError> {
        let h = self
            .cons_hess
            .as_ref()
            .ok_or(OracleError::MissingCapability("constraint Hessian"))?;
        Ok(h(x, i))
    }

    pub fn constraint_hessian_weighted_vp(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>, OracleError> {
        let h = self
            .cons_whvp
            .as_ref()
            .ok_or(OracleError::MissingCapability("constraint Hessian-vector"))?;
        Ok(h(x, w, v))
    }
}

/// Builder for [`ProblemSpec`]; validates dimensions and required oracles.
pub struct ProblemBuilder {
    name: String,
    n: usize,
    m: usize,
    f_low: Option<f64>,
    obj: Option<ScalarFn>,
    obj_grad: Option<VectorFn>,
    obj_hess: Option<MatrixFn>,
    obj_hvp: Option<HvpFn>,
    cons: Option<VectorFn>,
    cons_jac: Option<MatrixFn>,
    cons_hess: Option<IndexedMatrixFn>,
    cons_whvp: Option<WeightedHvpFn>,
}

impl ProblemBuilder {
    pub fn new(n: usize, m: usize) -> Self {
        ProblemBuilder {
            name: String::from("unnamed"),
            n,
            m,
            f_low: None,
            obj: None,
            obj_grad: None,
            obj_hess: None,
            obj_hvp: None,
            cons: None,
            cons_jac: None,
            cons_hess: None,
            cons_whvp: None,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn objective<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.obj = Some(Arc::new(f));
        self
    }

    pub fn objective_gradient<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.obj_grad = Some(Arc::new(f));
        self
    }

    pub fn objective_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.obj_hess = Some(Arc::new(f));
        self
    }

    pub fn objective_hessian_vp<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.obj_hvp = Some(Arc::new(f));
        self
    }

    pub fn constraint<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.cons = Some(Arc::new(f));
        self
    }

    pub fn constraint_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.cons_jac = Some(Arc::new(f));
        self
    }

    pub fn constraint_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.cons_hess = Some(Arc::new(f));
        self
    }

    pub fn constraint_hessian_weighted_vp<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>
            + Send
            + Sync
            + 'static,
    {
        self.cons_whvp = Some(Arc::new(f));
        self
    }

    /// Sets the lower bound on `f` (required).
    pub fn f_low(mut self, f_low: f64) -> Self {
        self.f_low = Some(f_low);
        self
    }

    pub(crate) fn constraint_arcs(
        mut self,
        cons: VectorFn,
        jac: MatrixFn,
        hess: Option<IndexedMatrixFn>,
        whvp: Option<WeightedHvpFn>,
    ) -> Self {
        self.cons = Some(cons);
        self.cons_jac = Some(jac);
        self.cons_hess = hess;
        self.cons_whvp = whvp;
        self
    }

    pub(crate) fn objective_arcs(
        mut self,
        obj: ScalarFn,
        grad: VectorFn,
        hess: Option<MatrixFn>,
        hvp: Option<HvpFn>,
    ) -> Self {
        self.obj = Some(obj);
        self.obj_grad = Some(grad);
        self.obj_hess = hess;
        self.obj_hvp = hvp;
        self
    }

    pub fn build(self) -> Result<ProblemSpec, ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::new("decision dimension n must be positive"));
        }
        if self.m == 0 {
            return Err(ConfigError::new("constraint dimension m must be positive"));
        }
        if self.m > self.n {
            return Err(ConfigError::new(format!(
                "constraint dimension m = {} exceeds decision dimension n = {}",
                self.m, self.n
            )));
        }
        let f_low = self
            .f_low
            .ok_or_else(|| ConfigError::new("f_low (lower bound on f) is required"))?;
        if !f_low.is_finite() {
            return Err(ConfigError::new("f_low must be finite"));
        }
        Ok(ProblemSpec {
            name: self.name,
            n: self.n,
            m: self.m,
            f_low,
            obj: self
                .obj
                .ok_or_else(|| ConfigError::new("objective oracle is required"))?,
            obj_grad: self
                .obj_grad
                .ok_or_else(|| ConfigError::new("objective gradient oracle is required"))?,
            obj_hess: self.obj_hess,
            obj_hvp: self.obj_hvp,
            cons: self
                .cons
                .ok_or_else(|| ConfigError::new("constraint oracle is required"))?,
            cons_jac: self
                .cons_jac
                .ok_or_else(|| ConfigError::new("constraint Jacobian oracle is required"))?,
            cons_hess: self.cons_hess,
            cons_whvp: self.cons_whvp,
        })
    }
}

/// Oracle-call counts of one bucket (one outer iteration).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CountTriple {
    pub value: u64,
    pub gradient: u64,
    pub hessian: u64,
}

/// Tallies of joint (f, c), (∇f, J), and second-derivative evaluations,
/// bucketed by outer iteration.
#[derive(Clone, Debug, Default)]
pub struct OracleCounters {
    totals: CountTriple,
    per_outer: Vec<CountTriple>,
}

impl OracleCounters {
    pub fn new() -> Self {
        OracleCounters {
            totals: CountTriple::default(),
            per_outer: vec![CountTriple::default()],
        }
    }

    /// Opens the bucket for the next outer iteration.
    pub fn begin_outer(&mut self) {
        self.per_outer.push(CountTriple::default());
    }

    pub fn value_evals(&self) -> u64 {
        self.totals.value
    }

    pub fn gradient_evals(&self) -> u64 {
        self.totals.gradient
    }

    pub fn hessian_evals(&self) -> u64 {
        self.totals.hessian
    }

    pub fn totals(&self) -> CountTriple {
        self.totals
    }

    pub fn per_outer(&self) -> &[CountTriple] {
        &self.per_outer
    }

    fn bump(&mut self, f: impl Fn(&mut CountTriple)) {
        f(&mut self.totals);
        // A bucket is always open; new() seeds bucket 0.
        f(self.per_outer.last_mut().expect("bucket"));
    }
}

/// Second-derivative data of one counted Hessian-oracle call (dense form).
#[derive(Debug)]
pub struct HessianEval {
    pub obj_hess: DMatrix<f64>,
    pub cons_hess: Vec<DMatrix<f64>>,
}

/// Matrix-free second-derivative access of one counted Hessian-oracle call.
pub struct HessianProducts {
    pub obj_hvp: HvpFn,
    pub cons_whvp: WeightedHvpFn,
}

/// Per-run view of a [`ProblemSpec`] that counts oracle calls.
///
/// One `value` call evaluates f and c jointly; one `gradient` call evaluates
/// ∇f and J jointly; one `hessian` call provides all second derivatives.
/// Each run owns its `CountingOracle` exclusively.
pub struct CountingOracle<'a> {
    problem: &'a ProblemSpec,
    counters: OracleCounters,
}

impl<'a> CountingOracle<'a> {
    pub fn new(problem: &'a ProblemSpec) -> Self {
        CountingOracle {
            problem,
            counters: OracleCounters::new(),
        }
    }

    pub fn problem(&self) -> &'a ProblemSpec {
        self.problem
    }

    pub fn counters(&self) -> &OracleCounters {
        &self.counters
    }

    pub fn begin_outer(&mut self) {
        self.counters.begin_outer();
    }

    /// Joint (f, c) evaluation; one value-oracle call.
    pub fn value(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>), OracleError> {
        if x.len() != self.problem.n {
            return Err(OracleError::Dimension {
                expected: self.problem.n,
                got: x.len(),
            });
        }
        self.counters.bump(|t| t.value += 1);
        let f = self.problem.objective(x);
        if !f.is_finite() {
            return Err(OracleError::NonFinite {
                oracle: "objective",
                coordinate: 0,
            });
        }
        if f < self.problem.f_low {
            return Err(OracleError::BelowLowerBound {
                value: f,
                f_low: self.problem.f_low,
            });
        }
        let c = self.problem.constraint(x);
        if c.len() != self.problem.m {
            return Err(OracleError::Dimension {
                expected: self.problem.m,
                got: c.len(),
            });
        }
        if let Some(i) = c.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite {
                oracle: "constraint",
                coordinate: i,
            });
        }
        Ok((f, c))
    }

    /// Joint (∇f, J) evaluation; one gradient-oracle call.
    pub fn gradient(
        &mut self,
        x: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>), OracleError> {
        if x.len() != self.problem.n {
            return Err(OracleError::Dimension {
                expected: self.problem.n,
                got: x.len(),
            });
        }
        self.counters.bump(|t| t.gradient += 1);
        let g = self.problem.objective_gradient(x);
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite {
                oracle: "objective gradient",
                coordinate: i,
            });
        }
        let jac = self.problem.constraint_jacobian(x);
        if let Some(i) = jac.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite {
                oracle: "constraint Jacobian",
                coordinate: i,
            });
        }
        Ok((g, jac))
    }

    /// Dense second derivatives; one Hessian-oracle call.
    pub fn hessian(&mut self, x: &DVector<f64>) -> Result<HessianEval, OracleError> {
        self.counters.bump(|t| t.hessian += 1);
        let obj_hess = self.problem.objective_hessian(x)?;
        check_symmetry("objective", &obj_hess)?;
        let mut cons_hess = Vec::with_capacity(self.problem.m);
        for i in 0..self.problem.m {
            let h = self.problem.constraint_hessian(x, i)?;
            check_symmetry("constraint", &h)?;
            cons_hess.push(h);
        }
        Ok(HessianEval {
            obj_hess,
            cons_hess,
        })
    }

    /// Matrix-free second derivatives; one Hessian-oracle call.
    pub fn hessian_products(&mut self, x: &DVector<f64>) -> Result<HessianProducts, OracleError> {
        let _ = x;
        let obj_hvp = self
            .problem
            .obj_hvp
            .clone()
            .ok_or(OracleError::MissingCapability("objective Hessian-vector"))?;
        let cons_whvp = self
            .problem
            .cons_whvp
            .clone()
            .ok_or(OracleError::MissingCapability("constraint Hessian-vector"))?;
        self.counters.bump(|t| t.hessian += 1);
        Ok(HessianProducts {
            obj_hvp,
            cons_whvp,
        })
    }
}

fn check_symmetry(oracle: &str, h: &DMatrix<f64>) -> Result<(), OracleError> {
    let mut max_abs = 0.0_f64;
    let mut asym = 0.0_f64;
    let n = h.nrows();
    for i in 0..n {
        for j in i..n {
            max_abs = max_abs.max(h[(i, j)].abs()).max(h[(j, i)].abs());
            asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    let tolerance = 1e-12 * max_abs;
    if asym > tolerance {
        return Err(OracleError::AsymmetricHessian {
            oracle: oracle.to_string(),
            asymmetry: asym,
            tolerance,
        });
    }
    Ok(())
}

/// Step size for gradient checks: `eps^(1/3) * (1 + |x|_inf)`.
pub fn gradient_check_step(x: &DVector<f64>) -> f64 {
    f64::EPSILON.powf(1.0 / 3.0) * (1.0 + x.amax())
}

/// Step size for Hessian checks: `eps^(1/4) * (1 + |x|_inf)`.
pub fn hessian_check_step(x: &DVector<f64>) -> f64 {
    f64::EPSILON.powf(1.0 / 4.0) * (1.0 + x.amax())
}

fn relative_error(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / (1.0 + exact.abs())
}

fn finite_or(oracle: &'static str, coordinate: usize, v: f64) -> Result<f64, OracleError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OracleError::NonFinite { oracle, coordinate })
    }
}

/// Central-difference check of ∇f and J against their analytic oracles.
///
/// Returns the max over coordinates of
/// `|central difference - analytic| / (1 + |analytic|)`.
pub fn check_gradient(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64, OracleError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let grad = problem.objective_gradient(x);
    let jac = problem.constraint_jacobian(x);
    let mut worst = 0.0_f64;
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..problem.n() {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let fp = finite_or("objective", j, problem.objective(&xp))?;
        let fm = finite_or("objective", j, problem.objective(&xm))?;
        worst = worst.max(relative_error((fp - fm) / (2.0 * h), grad[j]));
        let cp = problem.constraint(&xp);
        let cm = problem.constraint(&xm);
        for i in 0..problem.m() {
            let dp = finite_or("constraint", i, cp[i])?;
            let dm = finite_or("constraint", i, cm[i])?;
            worst = worst.max(relative_error((dp - dm) / (2.0 * h), jac[(i, j)]));
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(worst)
}

/// Central-difference check of ∇²f and each ∇²c_i against the analytic
/// Hessian oracles (differences of the gradient/Jacobian oracles).
pub fn check_hessian(problem: &ProblemSpec, x: &DVector<f64>, h: f64) -> Result<f64, OracleError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let obj_hess = problem.objective_hessian(x)?;
    let cons_hess: Vec<DMatrix<f64>> = (0..problem.m())
        .map(|i| problem.constraint_hessian(x, i))
        .collect::<Result<_, _>>()?;
    let mut worst = 0.0_f64;
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..problem.n() {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let gp = problem.objective_gradient(&xp);
        let gm = problem.objective_gradient(&xm);
        for r in 0..problem.n() {
            let dp = finite_or("objective gradient", r, gp[r])?;
            let dm = finite_or("objective gradient", r, gm[r])?;
            worst = worst.max(relative_error((dp - dm) / (2.0 * h), obj_hess[(r, j)]));
        }
        let jp = problem.constraint_jacobian(&xp);
        let jm = problem.constraint_jacobian(&xm);
        for i in 0..problem.m() {
            for r in 0..problem.n() {
                let dp = finite_or("constraint Jacobian", r, jp[(i, r)])?;
                let dm = finite_or("constraint Jacobian", r, jm[(i, r)])?;
                worst = worst.max(relative_error(
                    (dp - dm) / (2.0 * h),
                    cons_hess[i][(r, j)],
                ));
            }
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(worst)
}
