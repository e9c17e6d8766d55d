//! The quadratic penalty `Q_beta(x) = f(x) + (beta/2)·||c(x)||^2`, its
//! derivatives, and the feasibility-aware subproblem tolerance.

use nalgebra::{DMatrix, DVector};

use crate::core::{ConfigError, CountingOracle, HvpFn, OracleError, WeightedHvpFn};

/// Subproblem stationarity tolerance `tau(x) = max(eps1, min(tau_cap, (eps1/eps0)·||c(x)||))`.
///
/// `tau_cap = 0` encodes the non-adaptive rule `tau ≡ eps1`; `tau_cap = +inf`
/// the uncapped adaptive rule; any finite positive value is a genuine cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToleranceRule {
    eps0: f64,
    eps1: f64,
    tau_cap: f64,
}

impl ToleranceRule {
    pub fn new(eps0: f64, eps1: f64, tau_cap: f64) -> Result<Self, ConfigError> {
        if !(eps0 > 0.0) || !eps0.is_finite() {
            return Err(ConfigError::new("eps0 must be a positive real"));
        }
        if !(eps1 > 0.0) || !eps1.is_finite() {
            return Err(ConfigError::new("eps1 must be a positive real"));
        }
        if tau_cap.is_nan() || tau_cap < 0.0 {
            return Err(ConfigError::new(
                "tau_cap must be 0 (non-adaptive), +inf (uncapped), or a positive real",
            ));
        }
        Ok(ToleranceRule { eps0, eps1, tau_cap })
    }

    /// Non-adaptive rule: `tau(x) ≡ eps1`.
    pub fn non_adaptive(eps0: f64, eps1: f64) -> Result<Self, ConfigError> {
        Self::new(eps0, eps1, 0.0)
    }

    /// Uncapped adaptive rule: `tau(x) = max(eps1, (eps1/eps0)·||c(x)||)`.
    pub fn adaptive(eps0: f64, eps1: f64) -> Result<Self, ConfigError> {
        Self::new(eps0, eps1, f64::INFINITY)
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    pub fn tau_cap(&self) -> f64 {
        self.tau_cap
    }

    /// Evaluates the tolerance at constraint-violation norm `c_norm`.
    ///
    /// Always ≥ eps1, and exactly eps1 whenever `c_norm <= eps0`.
    pub fn tolerance(&self, c_norm: f64) -> f64 {
        debug_assert!(c_norm >= 0.0);
        self.eps1
            .max(self.tau_cap.min(self.eps1 / self.eps0 * c_norm))
    }
}

/// The penalty value at one point, with its ingredients.
#[derive(Clone, Copy, Debug)]
pub struct PenaltyValue {
    /// `Q_beta(x)`.
    pub q: f64,
    /// `f(x)`.
    pub f_val: f64,
    /// `||c(x)||`.
    pub c_norm: f64,
    pub beta: f64,
}

impl PenaltyValue {
    fn assemble(f_val: f64, c_norm: f64, beta: f64) -> Self {
        PenaltyValue {
            q: f_val + 0.5 * beta * c_norm * c_norm,
            f_val,
            c_norm,
            beta,
        }
    }
}

/// Everything known about a point after one value call and one gradient call.
///
/// The penalty and its gradient under *any* `beta` are reassembled from this
/// cache without further oracle calls, which is what makes warm starts and
/// cross-`beta` convergence checks free.
#[derive(Clone, Debug)]
pub struct EvalPoint {
    pub x: DVector<f64>,
    pub f: f64,
    pub c: DVector<f64>,
    pub grad_f: DVector<f64>,
    /// `J(x)' c(x)`.
    pub jac_t_c: DVector<f64>,
}

impl EvalPoint {
    /// Evaluates a fresh point: exactly one value call and one gradient call.
    pub fn evaluate(oracle: &mut CountingOracle, x: DVector<f64>) -> Result<Self, OracleError> {
        let (f, c) = oracle.value(&x)?;
        let (grad_f, jac) = oracle.gradient(&x)?;
        let jac_t_c = jac.tr_mul(&c);
        Ok(EvalPoint {
            x,
            f,
            c,
            grad_f,
            jac_t_c,
        })
    }

    pub fn c_norm(&self) -> f64 {
        self.c.norm()
    }

    /// `Q_beta` at this point (no oracle call).
    pub fn q(&self, beta: f64) -> f64 {
        self.f + 0.5 * beta * self.c.norm_squared()
    }

    pub fn penalty_value(&self, beta: f64) -> PenaltyValue {
        PenaltyValue::assemble(self.f, self.c_norm(), beta)
    }

    /// `∇Q_beta = ∇f + beta·J'c` at this point (no oracle call).
    pub fn grad_q(&self, beta: f64) -> DVector<f64> {
        &self.grad_f + beta * &self.jac_t_c
    }

    pub fn grad_q_norm(&self, beta: f64) -> f64 {
        self.grad_q(beta).norm()
    }
}

/// `Q_beta(x)`; one value-oracle call.
pub fn eval_penalty(
    oracle: &mut CountingOracle,
    x: &DVector<f64>,
    beta: f64,
) -> Result<PenaltyValue, OracleError> {
    let (value, _) = eval_penalty_full(oracle, x, beta)?;
    Ok(value)
}

/// `Q_beta(x)` together with the constraint vector; one value-oracle call.
pub fn eval_penalty_full(
    oracle: &mut CountingOracle,
    x: &DVector<f64>,
    beta: f64,
) -> Result<(PenaltyValue, DVector<f64>), OracleError> {
    debug_assert!(beta >= 0.0);
    let (f, c) = oracle.value(x)?;
    Ok((PenaltyValue::assemble(f, c.norm(), beta), c))
}

/// `∇Q_beta(x) = ∇f(x) + beta·J(x)'c(x)`; one gradient-oracle call.
///
/// The constraint values needed for `J'c` come from the same call, matching
/// the convention that a first-order oracle returns f, c, and their
/// derivatives jointly.
pub fn grad_penalty(
    oracle: &mut CountingOracle,
    x: &DVector<f64>,
    beta: f64,
) -> Result<DVector<f64>, OracleError> {
    let (grad_f, jac) = oracle.gradient(x)?;
    let c = oracle.problem().constraint(x);
    Ok(grad_f + beta * jac.tr_mul(&c))
}

/// Dense `∇²Q_beta(x) = ∇²f + beta·(J'J + Σ c_i ∇²c_i)`; one Hessian-oracle call.
pub fn hess_penalty(
    oracle: &mut CountingOracle,
    x: &DVector<f64>,
    beta: f64,
) -> Result<DMatrix<f64>, OracleError> {
    match hess_penalty_op(oracle, x, beta, HessianMode::Dense)? {
        PenaltyHessian::Dense(h) => Ok(h),
        PenaltyHessian::MatrixFree(_) => unreachable!("dense mode returns a dense matrix"),
    }
}

/// How the trust-region solver accesses `∇²Q_beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HessianMode {
    /// Materialize the n×n matrix.
    #[default]
    Dense,
    /// Hessian-vector products only; needs the problem's product oracles.
    MatrixFree,
}

/// Matrix-free penalty Hessian: keeps J and c, applies products on demand.
pub struct MatrixFreeHessian {
    x: DVector<f64>,
    beta: f64,
    c: DVector<f64>,
    jac: DMatrix<f64>,
    obj_hvp: HvpFn,
    cons_whvp: WeightedHvpFn,
}

/// The penalty Hessian as an operator for truncated CG.
pub enum PenaltyHessian {
    Dense(DMatrix<f64>),
    MatrixFree(MatrixFreeHessian),
}

impl PenaltyHessian {
    pub fn dim(&self) -> usize {
        match self {
            PenaltyHessian::Dense(h) => h.nrows(),
            PenaltyHessian::MatrixFree(op) => op.x.len(),
        }
    }

    /// `∇²Q_beta(x)·v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            PenaltyHessian::Dense(h) => h * v,
            PenaltyHessian::MatrixFree(op) => {
                let jv = &op.jac * v;
                let mut out = (op.obj_hvp)(&op.x, v);
                out += op.beta * op.jac.tr_mul(&jv);
                out += op.beta * (op.cons_whvp)(&op.x, &op.c, v);
                out
            }
        }
    }

    /// An upper bound on the spectral norm (Frobenius); dense only.
    pub fn norm_upper_bound(&self) -> Option<f64> {
        match self {
            PenaltyHessian::Dense(h) => Some(h.norm()),
            PenaltyHessian::MatrixFree(_) => None,
        }
    }
}

/// Builds the penalty Hessian operator; one Hessian-oracle call either way.
pub fn hess_penalty_op(
    oracle: &mut CountingOracle,
    x: &DVector<f64>,
    beta: f64,
    mode: HessianMode,
) -> Result<PenaltyHessian, OracleError> {
    debug_assert!(beta >= 0.0);
    let problem = oracle.problem();
    let c = problem.constraint(x);
    let jac = problem.constraint_jacobian(x);
    match mode {
        HessianMode::Dense => {
            let eval = oracle.hessian(x)?;
            let mut h = eval.obj_hess;
            // J'J accumulated in place; beta can be huge, so the penalty term
            // is added after scaling rather than via a scaled copy of J.
            h += beta * jac.tr_mul(&jac);
            for (i, hc) in eval.cons_hess.iter().enumerate() {
                let w = beta * c[i];
                if w != 0.0 {
                    h += w * hc;
                }
            }
            Ok(PenaltyHessian::Dense(h))
        }
        HessianMode::MatrixFree => {
            let products = oracle.hessian_products(x)?;
            Ok(PenaltyHessian::MatrixFree(MatrixFreeHessian {
                x: x.clone(),
                beta,
                c,
                jac,
                obj_hvp: products.obj_hvp,
                cons_whvp: products.cons_whvp,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::ProblemSpec;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn rosenbrock_sphere2() -> ProblemSpec {
        ProblemSpec::builder(2, 1)
            .name("rosenbrock-sphere-2")
            .objective(|x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2))
            .objective_gradient(|x| {
                DVector::from_vec(vec![
                    -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            })
            .objective_hessian(|x| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        -400.0 * x[1] + 1200.0 * x[0] * x[0] + 2.0,
                        -400.0 * x[0],
                        -400.0 * x[0],
                        200.0,
                    ],
                )
            })
            .objective_hessian_vp(|x, v| {
                let h00 = -400.0 * x[1] + 1200.0 * x[0] * x[0] + 2.0;
                DVector::from_vec(vec![
                    h00 * v[0] - 400.0 * x[0] * v[1],
                    -400.0 * x[0] * v[0] + 200.0 * v[1],
                ])
            })
            .constraint(|x| DVector::from_element(1, x.norm_squared() - 1.0))
            .constraint_jacobian(|x| DMatrix::from_fn(1, x.len(), |_, j| 2.0 * x[j]))
            .constraint_hessian(|x, _| 2.0 * DMatrix::identity(x.len(), x.len()))
            .constraint_hessian_weighted_vp(|_, w, v| 2.0 * w[0] * v)
            .f_low(0.0)
            .build()
            .unwrap()
    }

    #[test]
    fn tolerance_is_eps1_inside_the_feasible_tube() {
        let rule = ToleranceRule::adaptive(1e-3, 1e-4).unwrap();
        assert_eq!(rule.tolerance(0.0), 1e-4);
        assert_eq!(rule.tolerance(1e-3), 1e-4);
        assert_eq!(rule.tolerance(0.5e-3), 1e-4);
    }

    #[test]
    fn tolerance_cap_regimes() {
        // Uncapped: (eps1/eps0)*c = 0.5.
        let rule = ToleranceRule::adaptive(1e-3, 1e-3).unwrap();
        assert_eq!(rule.tolerance(0.5), 0.5);
        // Finite cap binds.
        let rule = ToleranceRule::new(1e-3, 1e-3, 1e-2).unwrap();
        assert_eq!(rule.tolerance(0.5), 1e-2);
        // tau_cap = 0 is the constant rule.
        let rule = ToleranceRule::non_adaptive(1e-3, 1e-3).unwrap();
        assert_eq!(rule.tolerance(0.5), 1e-3);
        assert_eq!(rule.tolerance(123.0), 1e-3);
    }

    proptest! {
        #[test]
        fn tolerance_is_monotone_and_floored(
            c1 in 0.0f64..10.0,
            c2 in 0.0f64..10.0,
            eps0 in 1e-8f64..1.0,
            eps1 in 1e-8f64..1.0,
            cap_sel in 0usize..3,
            cap in 1e-8f64..10.0,
        ) {
            let tau_cap = match cap_sel { 0 => 0.0, 1 => f64::INFINITY, _ => cap };
            let rule = ToleranceRule::new(eps0, eps1, tau_cap).unwrap();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(rule.tolerance(lo) <= rule.tolerance(hi));
            prop_assert!(rule.tolerance(c1) >= eps1);
            if c1 <= eps0 {
                prop_assert_eq!(rule.tolerance(c1), eps1);
            }
        }
    }

    #[test]
    fn penalty_vanishes_at_feasible_points_and_beta_zero() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let feasible = DVector::from_vec(vec![1.0, 0.0]);
        let v = eval_penalty(&mut oracle, &feasible, 7.5).unwrap();
        assert_eq!(v.q, v.f_val);
        let x = DVector::from_vec(vec![0.3, -0.8]);
        let v = eval_penalty(&mut oracle, &x, 0.0).unwrap();
        assert_eq!(v.q, v.f_val);
        assert_eq!(oracle.counters().value_evals(), 2);
    }

    #[test]
    fn penalty_at_rosenbrock_one_one() {
        // f(1,1) = 0, c = 1, so Q_4 = 2.
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let v = eval_penalty(&mut oracle, &x, 4.0).unwrap();
        assert_relative_eq!(v.q, 2.0, max_relative = 1e-15);
        assert_eq!(v.f_val, 0.0);
        assert_eq!(v.c_norm, 1.0);
    }

    #[test]
    fn penalty_value_identity_holds() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        for (a, b, beta) in [(0.2, -0.4, 3.0), (1.5, 0.9, 11.0), (-0.3, 0.0, 0.5)] {
            let x = DVector::from_vec(vec![a, b]);
            let v = eval_penalty(&mut oracle, &x, beta).unwrap();
            let rebuilt = v.f_val + 0.5 * v.beta * v.c_norm * v.c_norm;
            assert!((v.q - rebuilt).abs() <= 1e-14 * (1.0 + v.q.abs()));
        }
    }

    #[test]
    fn grad_penalty_feasible_point_is_objective_gradient() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let g = grad_penalty(&mut oracle, &x, 9.0).unwrap();
        let gf = p.objective_gradient(&x);
        assert_relative_eq!(g, gf, max_relative = 1e-15);
        assert_eq!(oracle.counters().gradient_evals(), 1);
        assert_eq!(oracle.counters().value_evals(), 0);
    }

    #[test]
    fn grad_penalty_rosenbrock_one_one() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let g = grad_penalty(&mut oracle, &x, 1.0).unwrap();
        assert_relative_eq!(g, DVector::from_vec(vec![2.0, 2.0]), max_relative = 1e-15);
    }

    #[test]
    fn grad_penalty_matches_finite_differences() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let beta = 3.7;
        for (a, b) in [(0.4, -0.2), (-1.1, 0.8), (0.05, 1.9)] {
            let x = DVector::from_vec(vec![a, b]);
            let g = grad_penalty(&mut oracle, &x, beta).unwrap();
            let h = crate::core::gradient_check_step(&x);
            for j in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let qp = eval_penalty(&mut oracle, &xp, beta).unwrap().q;
                let qm = eval_penalty(&mut oracle, &xm, beta).unwrap().q;
                let fd = (qp - qm) / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() / (1.0 + g[j].abs()) <= 1e-5,
                    "coordinate {j}: fd = {fd}, analytic = {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn hess_penalty_sphere_feasible_point() {
        // At a feasible point c = 0 kills the ∇²c term: H = ∇²f + 4βxx'.
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let h = hess_penalty(&mut oracle, &x, 1.0).unwrap();
        let expected = p.objective_hessian(&x).unwrap() + 4.0 * &x * x.transpose();
        assert_relative_eq!(h, expected, max_relative = 1e-12);
    }

    #[test]
    fn hess_penalty_matches_finite_differences_and_is_symmetric() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let beta = 2.3;
        let x = DVector::from_vec(vec![0.7, -0.4]);
        let h = hess_penalty(&mut oracle, &x, beta).unwrap();
        assert_relative_eq!(h.clone(), h.transpose(), max_relative = 1e-14);
        let step = crate::core::hessian_check_step(&x);
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let gp = grad_penalty(&mut oracle, &xp, beta).unwrap();
            let gm = grad_penalty(&mut oracle, &xm, beta).unwrap();
            for r in 0..2 {
                let fd = (gp[r] - gm[r]) / (2.0 * step);
                assert!(
                    (fd - h[(r, j)]).abs() / (1.0 + h[(r, j)].abs()) <= 1e-4,
                    "entry ({r},{j}): fd = {fd}, analytic = {}",
                    h[(r, j)]
                );
            }
        }
    }

    #[test]
    fn dense_and_matrix_free_hessians_agree() {
        let p = rosenbrock_sphere2();
        let mut oracle = CountingOracle::new(&p);
        let beta = 5.0;
        let x = DVector::from_vec(vec![0.9, -1.3]);
        let dense = hess_penalty_op(&mut oracle, &x, beta, HessianMode::Dense).unwrap();
        let free = hess_penalty_op(&mut oracle, &x, beta, HessianMode::MatrixFree).unwrap();
        assert_eq!(oracle.counters().hessian_evals(), 2);
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        for _ in 0..10 {
            let v = DVector::from_fn(2, |_, _| {
                // xorshift; test-local deterministic probe directions
                rng_state ^= rng_state << 13;
                rng_state ^= rng_state >> 7;
                rng_state ^= rng_state << 17;
                (rng_state % 1000) as f64 / 500.0 - 1.0
            });
            let a = dense.apply(&v);
            let b = free.apply(&v);
            assert!((&a - &b).norm() <= 1e-10 * (1.0 + a.norm()), "probe mismatch");
        }
    }

    #[test]
    fn non_finite_penalty_reports_the_point() {
        let p = ProblemSpec::builder(1, 1)
            .objective(|x| if x[0] > 1.0 { f64::INFINITY } else { x[0] })
            .objective_gradient(|_| DVector::from_element(1, 1.0))
            .constraint(|_| DVector::zeros(1))
            .constraint_jacobian(|_| DMatrix::zeros(1, 1))
            .f_low(-10.0)
            .build()
            .unwrap();
        let mut oracle = CountingOracle::new(&p);
        assert!(eval_penalty(&mut oracle, &DVector::from_element(1, 2.0), 1.0).is_err());
    }
}
