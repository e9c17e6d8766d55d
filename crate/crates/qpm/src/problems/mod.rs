//! Built-in test problems, constraint stacking, starting-point constructors,
//! and a sampling estimator for the PL constant of the constraint violation.
//!
//! The PL condition here is `||J(x)'c(x)|| >= sigma_min·||c(x)||` on the tube
//! `C_R = { x : ||c(x)|| <= R }`; each built-in constraint family carries its
//! analytic `(R, sigma_min)` pair as a [`PLRegion`].

mod builtin;
mod pl;

pub use builtin::{
    affine_block, binary_block, make_affine, make_binary, make_rosenbrock_sphere,
    make_stacked_demo, make_stiefel, make_x0_sphere, quadratic_distance_objective,
    rosenbrock_objective, sphere_block, stiefel_block, trace_quadratic_objective,
};
pub use pl::{estimate_pl, PlError, PlEstimate, PlSampler};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::core::{
    ConfigError, HvpFn, IndexedMatrixFn, MatrixFn, ProblemSpec, ScalarFn, VectorFn,
    WeightedHvpFn,
};

/// Where a PL constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Estimated,
}

/// Region and constant of the PL condition for a constraint family.
#[derive(Clone, Copy, Debug)]
pub struct PLRegion {
    /// Infeasibility radius of the tube; `f64::INFINITY` when global.
    pub r: f64,
    pub sigma_min: f64,
    pub provenance: Provenance,
}

/// Objective oracles plus the lower bound, ready to combine with constraints.
#[derive(Clone)]
pub struct ObjectiveOracles {
    pub f: ScalarFn,
    pub grad: VectorFn,
    pub hess: Option<MatrixFn>,
    pub hvp: Option<HvpFn>,
    pub f_low: f64,
}

/// One constraint family on R^n with its PL region.
#[derive(Clone)]
pub struct ConstraintBlock {
    pub n: usize,
    pub m: usize,
    pub cons: VectorFn,
    pub jac: MatrixFn,
    pub hess: Option<IndexedMatrixFn>,
    pub whvp: Option<WeightedHvpFn>,
    pub pl: PLRegion,
}

/// Combines objective oracles and a constraint block into a [`ProblemSpec`].
pub fn assemble_problem(
    name: &str,
    objective: ObjectiveOracles,
    block: ConstraintBlock,
) -> Result<(ProblemSpec, PLRegion), ConfigError> {
    let pl = block.pl;
    let spec = ProblemSpec::builder(block.n, block.m)
        .name(name)
        .f_low(objective.f_low)
        .objective_arcs(objective.f, objective.grad, objective.hess, objective.hvp)
        .constraint_arcs(block.cons, block.jac, block.hess, block.whvp)
        .build()?;
    Ok((spec, pl))
}

/// Concatenates constraint blocks; the combined PL region takes the min of
/// the radii and the min of the constants.
pub fn stack_constraints(blocks: Vec<ConstraintBlock>) -> Result<ConstraintBlock, ConfigError> {
    if blocks.is_empty() {
        return Err(ConfigError::new("cannot stack zero constraint blocks"));
    }
    let n = blocks[0].n;
    if blocks.iter().any(|b| b.n != n) {
        return Err(ConfigError::new(
            "all stacked constraint blocks must share the decision dimension",
        ));
    }
    if blocks.len() == 1 {
        return Ok(blocks.into_iter().next().expect("one block"));
    }
    let m: usize = blocks.iter().map(|b| b.m).sum();
    let r = blocks.iter().map(|b| b.pl.r).fold(f64::INFINITY, f64::min);
    let sigma_min = blocks
        .iter()
        .map(|b| b.pl.sigma_min)
        .fold(f64::INFINITY, f64::min);
    let provenance = if blocks
        .iter()
        .all(|b| b.pl.provenance == Provenance::Analytic)
    {
        Provenance::Analytic
    } else {
        Provenance::Estimated
    };
    let all_hess = blocks.iter().all(|b| b.hess.is_some());
    let all_whvp = blocks.iter().all(|b| b.whvp.is_some());
    let blocks = Arc::new(blocks);

    let cons = {
        let blocks = Arc::clone(&blocks);
        Arc::new(move |x: &DVector<f64>| {
            let mut out = DVector::zeros(m);
            let mut offset = 0;
            for b in blocks.iter() {
                out.rows_mut(offset, b.m).copy_from(&(b.cons)(x));
                offset += b.m;
            }
            out
        }) as VectorFn
    };
    let jac = {
        let blocks = Arc::clone(&blocks);
        Arc::new(move |x: &DVector<f64>| {
            let mut out = DMatrix::zeros(m, n);
            let mut offset = 0;
            for b in blocks.iter() {
                out.rows_mut(offset, b.m).copy_from(&(b.jac)(x));
                offset += b.m;
            }
            out
        }) as MatrixFn
    };
    let hess: Option<IndexedMatrixFn> = all_hess.then(|| {
        let blocks = Arc::clone(&blocks);
        Arc::new(move |x: &DVector<f64>, i: usize| {
            let mut idx = i;
            for b in blocks.iter() {
                if idx < b.m {
                    return (b.hess.as_ref().expect("checked"))(x, idx);
                }
                idx -= b.m;
            }
            panic!("constraint index {i} out of range for stacked block");
        }) as IndexedMatrixFn
    });
    let whvp: Option<WeightedHvpFn> = all_whvp.then(|| {
        let blocks = Arc::clone(&blocks);
        Arc::new(
            move |x: &DVector<f64>, w: &DVector<f64>, v: &DVector<f64>| {
                let mut out = DVector::zeros(n);
                let mut offset = 0;
                for b in blocks.iter() {
                    let w_slice = DVector::from(w.rows(offset, b.m));
                    out += (b.whvp.as_ref().expect("checked"))(x, &w_slice, v);
                    offset += b.m;
                }
                out
            },
        ) as WeightedHvpFn
    });

    Ok(ConstraintBlock {
        n,
        m,
        cons,
        jac,
        hess,
        whvp,
        pl: PLRegion {
            r,
            sigma_min,
            provenance,
        },
    })
}

/// Registry names accepted by the CLI and the examples.
pub const REGISTRY_NAMES: [&str; 5] = [
    "rosenbrock-sphere",
    "affine-quadratic",
    "binary-quadratic",
    "stiefel-trace",
    "stacked-demo",
];

/// Size parameters of a registry problem.
#[derive(Clone, Copy, Debug)]
pub struct DimParams {
    pub n: usize,
    /// Columns for the orthogonality problem (default 2).
    pub p: Option<usize>,
    /// Rows for the affine problem (default max(1, n/4)).
    pub m: Option<usize>,
}

impl DimParams {
    pub fn n(n: usize) -> Self {
        DimParams { n, p: None, m: None }
    }
}

/// A ready-to-solve registry problem.
pub struct BuiltinProblem {
    pub spec: ProblemSpec,
    pub pl: PLRegion,
    pub x0: DVector<f64>,
    pub sampler: PlSampler,
}

/// Builds a named problem with a deterministic instance for `seed`.
///
/// `eps0` shapes the starting point where the construction targets
/// `||c(x0)|| = eps0/sqrt(2)`; problems with exactly feasible starts ignore it.
pub fn build_problem(
    name: &str,
    dims: &DimParams,
    eps0: f64,
    seed: u64,
) -> Result<BuiltinProblem, ConfigError> {
    builtin::build_registry_problem(name, dims, eps0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stacking_one_block_is_identity() {
        let block = sphere_block(3, 0.5).unwrap();
        let stacked = stack_constraints(vec![block.clone()]).unwrap();
        assert_eq!(stacked.m, 1);
        let x = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        assert_eq!((stacked.cons)(&x), (block.cons)(&x));
        assert_eq!(stacked.pl.sigma_min, block.pl.sigma_min);
    }

    #[test]
    fn stacking_takes_min_constants() {
        let a1 = DMatrix::from_row_slice(1, 4, &[2.0, 0.0, 0.0, 0.0]);
        let a2 = DMatrix::from_row_slice(1, 4, &[0.0, 3.0, 0.0, 0.0]);
        let b1 = builtin::affine_block(a1, DVector::zeros(1)).unwrap();
        let b2 = builtin::affine_block(a2, DVector::zeros(1)).unwrap();
        assert_relative_eq!(b1.pl.sigma_min, 2.0, max_relative = 1e-12);
        assert_relative_eq!(b2.pl.sigma_min, 3.0, max_relative = 1e-12);
        let stacked = stack_constraints(vec![b1, b2]).unwrap();
        assert_relative_eq!(stacked.pl.sigma_min, 2.0, max_relative = 1e-12);
        assert_eq!(stacked.m, 2);
        // Concatenation order and Jacobian stacking.
        let x = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0]);
        let c = (stacked.cons)(&x);
        assert_eq!(c[0], 2.0);
        assert_eq!(c[1], -3.0);
        let j = (stacked.jac)(&x);
        assert_eq!(j[(0, 0)], 2.0);
        assert_eq!(j[(1, 1)], 3.0);
    }

    #[test]
    fn stacking_rejects_dimension_mismatch() {
        let b1 = sphere_block(3, 0.5).unwrap();
        let b2 = sphere_block(4, 0.5).unwrap();
        assert!(stack_constraints(vec![b1, b2]).is_err());
    }
}
