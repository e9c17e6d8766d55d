//! Constructors for the built-in objectives, constraint families, and the
//! named registry instances.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::core::{ConfigError, ProblemSpec};

use super::pl::PlSampler;
use super::{
    assemble_problem, stack_constraints, BuiltinProblem, ConstraintBlock, DimParams,
    ObjectiveOracles, PLRegion, Provenance,
};

/// Extended Rosenbrock objective on R^n (n even):
/// `sum over pairs of 100·(b - a^2)^2 + (1 - a)^2`, bounded below by 0.
pub fn rosenbrock_objective(n: usize) -> Result<ObjectiveOracles, ConfigError> {
    if n == 0 || n % 2 != 0 {
        return Err(ConfigError::new(
            "the extended Rosenbrock objective needs an even positive dimension",
        ));
    }
    Ok(ObjectiveOracles {
        f: Arc::new(|x: &DVector<f64>| {
            let mut total = 0.0;
            for t in 0..x.len() / 2 {
                let (a, b) = (x[2 * t], x[2 * t + 1]);
                total += 100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2);
            }
            total
        }),
        grad: Arc::new(|x: &DVector<f64>| {
            let mut g = DVector::zeros(x.len());
            for t in 0..x.len() / 2 {
                let (a, b) = (x[2 * t], x[2 * t + 1]);
                g[2 * t] = -400.0 * a * (b - a * a) - 2.0 * (1.0 - a);
                g[2 * t + 1] = 200.0 * (b - a * a);
            }
            g
        }),
        hess: Some(Arc::new(|x: &DVector<f64>| {
            let n = x.len();
            let mut h = DMatrix::zeros(n, n);
            for t in 0..n / 2 {
                let (a, b) = (x[2 * t], x[2 * t + 1]);
                h[(2 * t, 2 * t)] = -400.0 * b + 1200.0 * a * a + 2.0;
                h[(2 * t, 2 * t + 1)] = -400.0 * a;
                h[(2 * t + 1, 2 * t)] = -400.0 * a;
                h[(2 * t + 1, 2 * t + 1)] = 200.0;
            }
            h
        })),
        hvp: Some(Arc::new(|x: &DVector<f64>, v: &DVector<f64>| {
            let mut out = DVector::zeros(x.len());
            for t in 0..x.len() / 2 {
                let (a, b) = (x[2 * t], x[2 * t + 1]);
                let haa = -400.0 * b + 1200.0 * a * a + 2.0;
                let hab = -400.0 * a;
                out[2 * t] = haa * v[2 * t] + hab * v[2 * t + 1];
                out[2 * t + 1] = hab * v[2 * t] + 200.0 * v[2 * t + 1];
            }
            out
        })),
        f_low: 0.0,
    })
}

/// `f(x) = ||x - target||^2 / 2`; bounded below by 0 and coercive.
pub fn quadratic_distance_objective(target: DVector<f64>) -> ObjectiveOracles {
    let t1 = target.clone();
    let t2 = target;
    ObjectiveOracles {
        f: Arc::new(move |x: &DVector<f64>| 0.5 * (x - &t1).norm_squared()),
        grad: Arc::new(move |x: &DVector<f64>| x - &t2),
        hess: Some(Arc::new(|x: &DVector<f64>| {
            DMatrix::identity(x.len(), x.len())
        })),
        hvp: Some(Arc::new(|_: &DVector<f64>, v: &DVector<f64>| v.clone())),
        f_low: 0.0,
    }
}

/// `f(X) = tr(X' M X) / 2` for an n×p matrix variable flattened column-major;
/// `M` must be symmetric positive semidefinite so that `f_low = 0`.
pub fn trace_quadratic_objective(m_mat: DMatrix<f64>, p: usize) -> ObjectiveOracles {
    let n = m_mat.nrows();
    let m1 = m_mat.clone();
    let m2 = m_mat.clone();
    let m3 = m_mat.clone();
    let m4 = m_mat;
    ObjectiveOracles {
        f: Arc::new(move |x: &DVector<f64>| {
            let mut total = 0.0;
            for i in 0..p {
                let col = x.rows(n * i, n);
                total += 0.5 * (&m1 * col).dot(&col.clone_owned());
            }
            total
        }),
        grad: Arc::new(move |x: &DVector<f64>| {
            let mut g = DVector::zeros(n * p);
            for i in 0..p {
                let col = x.rows(n * i, n).clone_owned();
                g.rows_mut(n * i, n).copy_from(&(&m2 * &col));
            }
            g
        }),
        hess: Some(Arc::new(move |_: &DVector<f64>| {
            let mut h = DMatrix::zeros(n * p, n * p);
            for i in 0..p {
                h.view_mut((n * i, n * i), (n, n)).copy_from(&m3);
            }
            h
        })),
        hvp: Some(Arc::new(move |_: &DVector<f64>, v: &DVector<f64>| {
            let mut out = DVector::zeros(n * p);
            for i in 0..p {
                let col = v.rows(n * i, n).clone_owned();
                out.rows_mut(n * i, n).copy_from(&(&m4 * &col));
            }
            out
        })),
        f_low: 0.0,
    }
}

/// Unit-sphere constraint `||x||^2 = 1`; PL with `sigma_min = 2·sqrt(1 - R)`
/// for any `R < 1`.
pub fn sphere_block(n: usize, r: f64) -> Result<ConstraintBlock, ConfigError> {
    sphere_block_embedded(n, 0, n, r)
}

/// Sphere constraint on `x[start .. start + len]`, zero elsewhere.
pub(crate) fn sphere_block_embedded(
    n: usize,
    start: usize,
    len: usize,
    r: f64,
) -> Result<ConstraintBlock, ConfigError> {
    if len == 0 || start + len > n {
        return Err(ConfigError::new("sphere window out of range"));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(ConfigError::new(
            "the sphere constraint satisfies the PL condition only for R in (0, 1)",
        ));
    }
    Ok(ConstraintBlock {
        n,
        m: 1,
        cons: Arc::new(move |x: &DVector<f64>| {
            DVector::from_element(1, x.rows(start, len).norm_squared() - 1.0)
        }),
        jac: Arc::new(move |x: &DVector<f64>| {
            let mut j = DMatrix::zeros(1, x.len());
            for k in 0..len {
                j[(0, start + k)] = 2.0 * x[start + k];
            }
            j
        }),
        hess: Some(Arc::new(move |x: &DVector<f64>, _| {
            let mut h = DMatrix::zeros(x.len(), x.len());
            for k in 0..len {
                h[(start + k, start + k)] = 2.0;
            }
            h
        })),
        whvp: Some(Arc::new(
            move |_: &DVector<f64>, w: &DVector<f64>, v: &DVector<f64>| {
                let mut out = DVector::zeros(v.len());
                for k in 0..len {
                    out[start + k] = 2.0 * w[0] * v[start + k];
                }
                out
            },
        )),
        pl: PLRegion {
            r,
            sigma_min: 2.0 * (1.0 - r).sqrt(),
            provenance: Provenance::Analytic,
        },
    })
}

/// Affine constraints `A x = b` with full row rank; PL globally with
/// `sigma_min` the smallest singular value of `A`.
pub fn affine_block(a: DMatrix<f64>, b: DVector<f64>) -> Result<ConstraintBlock, ConfigError> {
    let (m, n) = a.shape();
    if m == 0 || m > n {
        return Err(ConfigError::new("affine block needs 1 <= m <= n"));
    }
    if b.len() != m {
        return Err(ConfigError::new("right-hand side length must equal m"));
    }
    let svals = a.clone().singular_values();
    let smax = svals.iter().cloned().fold(0.0_f64, f64::max);
    let smin = svals.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-10 * smax) {
        return Err(ConfigError::new(format!(
            "A is rank deficient: smallest singular value {smin:e} vs largest {smax:e}"
        )));
    }
    let a_c = a.clone();
    let a_j = a;
    Ok(ConstraintBlock {
        n,
        m,
        cons: Arc::new(move |x: &DVector<f64>| &a_c * x - &b),
        jac: Arc::new(move |_: &DVector<f64>| a_j.clone()),
        hess: Some(Arc::new(move |x: &DVector<f64>, _| {
            DMatrix::zeros(x.len(), x.len())
        })),
        whvp: Some(Arc::new(
            |_: &DVector<f64>, _: &DVector<f64>, v: &DVector<f64>| DVector::zeros(v.len()),
        )),
        pl: PLRegion {
            r: f64::INFINITY,
            sigma_min: smin,
            provenance: Provenance::Analytic,
        },
    })
}

/// Binary constraints `x_i(1 - x_i) = 0`; PL with `sigma_min = sqrt(1 - 4R)`
/// for any `R < 1/4`.
pub fn binary_block(n: usize, r: f64) -> Result<ConstraintBlock, ConfigError> {
    if n == 0 {
        return Err(ConfigError::new("binary block needs n >= 1"));
    }
    if !(r > 0.0 && r < 0.25) {
        return Err(ConfigError::new(
            "the binary constraints satisfy the PL condition only for R in (0, 1/4)",
        ));
    }
    Ok(ConstraintBlock {
        n,
        m: n,
        cons: Arc::new(|x: &DVector<f64>| x.map(|v| v * (1.0 - v))),
        jac: Arc::new(|x: &DVector<f64>| {
            DMatrix::from_fn(x.len(), x.len(), |i, j| {
                if i == j {
                    1.0 - 2.0 * x[i]
                } else {
                    0.0
                }
            })
        }),
        hess: Some(Arc::new(|x: &DVector<f64>, i: usize| {
            let mut h = DMatrix::zeros(x.len(), x.len());
            h[(i, i)] = -2.0;
            h
        })),
        whvp: Some(Arc::new(
            |_: &DVector<f64>, w: &DVector<f64>, v: &DVector<f64>| {
                -2.0 * w.component_mul(v)
            },
        )),
        pl: PLRegion {
            r,
            sigma_min: (1.0 - 4.0 * r).sqrt(),
            provenance: Provenance::Analytic,
        },
    })
}

/// Orthogonality constraints `X'X = I_p` on the flattened n×p variable.
///
/// The residual stacks the p(p+1)/2 upper-triangular entries of `X'X - I`,
/// with off-diagonal entries scaled by sqrt(2) so that `||c(X)||` equals the
/// Frobenius norm of `X'X - I`. PL with `sigma_min = 2·sqrt(1 - R)`, `R < 1`.
pub fn stiefel_block(n: usize, p: usize, r: f64) -> Result<ConstraintBlock, ConfigError> {
    if p == 0 || p > n {
        return Err(ConfigError::new("orthogonality block needs 1 <= p <= n"));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(ConfigError::new(
            "the orthogonality constraints satisfy the PL condition only for R in (0, 1)",
        ));
    }
    let m = p * (p + 1) / 2;
    // Constraint order: (i, j) with i <= j, j ascending.
    let pairs: Arc<Vec<(usize, usize, f64)>> = Arc::new(
        (0..p)
            .flat_map(|j| (0..=j).map(move |i| (i, j, if i < j { 2.0_f64.sqrt() } else { 1.0 })))
            .collect(),
    );
    let dim = n * p;
    let pr = Arc::clone(&pairs);
    let cons = Arc::new(move |x: &DVector<f64>| {
        let mut c = DVector::zeros(m);
        for (row, &(i, j, s)) in pr.iter().enumerate() {
            let xi = x.rows(n * i, n);
            let xj = x.rows(n * j, n);
            let gram = xi.dot(&xj.clone_owned());
            c[row] = s * (gram - if i == j { 1.0 } else { 0.0 });
        }
        c
    });
    let pr = Arc::clone(&pairs);
    let jac = Arc::new(move |x: &DVector<f64>| {
        let mut j_mat = DMatrix::zeros(m, dim);
        for (row, &(i, j, s)) in pr.iter().enumerate() {
            for a in 0..n {
                j_mat[(row, a + n * i)] += s * x[a + n * j];
                j_mat[(row, a + n * j)] += s * x[a + n * i];
            }
        }
        j_mat
    });
    let pr = Arc::clone(&pairs);
    let hess = Arc::new(move |_: &DVector<f64>, idx: usize| {
        let (i, j, s) = pr[idx];
        let mut h = DMatrix::zeros(dim, dim);
        for a in 0..n {
            h[(a + n * i, a + n * j)] += s;
            h[(a + n * j, a + n * i)] += s;
        }
        h
    });
    let pr = Arc::clone(&pairs);
    let whvp = Arc::new(
        move |_: &DVector<f64>, w: &DVector<f64>, v: &DVector<f64>| {
            // sum_k w_k ∇²c_k v = V·M with M_{ij} = s·w_(i,j) off-diagonal,
            // M_{ii} = 2·w_(i,i).
            let mut m_small: DMatrix<f64> = DMatrix::zeros(p, p);
            for (row, &(i, j, s)) in pr.iter().enumerate() {
                if i == j {
                    m_small[(i, i)] += 2.0 * w[row];
                } else {
                    m_small[(i, j)] += s * w[row];
                    m_small[(j, i)] += s * w[row];
                }
            }
            let mut out = DVector::zeros(dim);
            for col in 0..p {
                for src in 0..p {
                    let weight = m_small[(src, col)];
                    if weight != 0.0 {
                        for a in 0..n {
                            out[a + n * col] += weight * v[a + n * src];
                        }
                    }
                }
            }
            out
        },
    );
    Ok(ConstraintBlock {
        n: dim,
        m,
        cons,
        jac,
        hess: Some(hess),
        whvp: Some(whvp),
        pl: PLRegion {
            r,
            sigma_min: 2.0 * (1.0 - r).sqrt(),
            provenance: Provenance::Analytic,
        },
    })
}

/// Extended Rosenbrock over the unit sphere (n even), `f_low = 0`,
/// PL region `(R, sigma_min) = (0.5, 2·sqrt(0.5))`.
pub fn make_rosenbrock_sphere(n: usize) -> Result<(ProblemSpec, PLRegion), ConfigError> {
    let objective = rosenbrock_objective(n)?;
    let block = sphere_block(n, 0.5)?;
    assemble_problem("rosenbrock-sphere", objective, block)
}

/// Starting point `x0 = sqrt((1/n)(1 + eps0/sqrt(2)))·1_n`, which puts
/// `||c(x0)|| = eps0/sqrt(2)` for the sphere constraint.
pub fn make_x0_sphere(n: usize, eps0: f64) -> Result<DVector<f64>, ConfigError> {
    if n == 0 || n % 2 != 0 {
        return Err(ConfigError::new("n must be even and positive"));
    }
    if !(eps0 > 0.0) {
        return Err(ConfigError::new("eps0 must be positive"));
    }
    let value = ((1.0 + eps0 / 2.0_f64.sqrt()) / n as f64).sqrt();
    Ok(DVector::from_element(n, value))
}

/// Objective subject to `A x = b` with `rank(A) = m`.
pub fn make_affine(
    a: DMatrix<f64>,
    b: DVector<f64>,
    objective: ObjectiveOracles,
) -> Result<(ProblemSpec, PLRegion), ConfigError> {
    let block = affine_block(a, b)?;
    assemble_problem("affine", objective, block)
}

/// Objective subject to `x_i(1 - x_i) = 0` for all i.
pub fn make_binary(
    n: usize,
    objective: ObjectiveOracles,
    r: f64,
) -> Result<(ProblemSpec, PLRegion), ConfigError> {
    let block = binary_block(n, r)?;
    assemble_problem("binary", objective, block)
}

/// Objective subject to `X'X = I_p` on the flattened n×p variable.
pub fn make_stiefel(
    n: usize,
    p: usize,
    objective: ObjectiveOracles,
    r: f64,
) -> Result<(ProblemSpec, PLRegion), ConfigError> {
    let block = stiefel_block(n, p, r)?;
    assemble_problem("stiefel", objective, block)
}

/// Product-structure demo: sphere on the first half of the coordinates
/// stacked with affine rows on the second half. Returns the problem, the
/// combined PL region (min rule), and an exactly feasible starting point.
pub fn make_stacked_demo(
    n: usize,
    seed: u64,
) -> Result<(ProblemSpec, PLRegion, DVector<f64>), ConfigError> {
    if n < 4 || n % 2 != 0 {
        return Err(ConfigError::new("stacked-demo needs even n >= 4"));
    }
    let half = n / 2;
    let m2 = (half / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(m2, n);
    for i in 0..m2 {
        for j in 0..half {
            a[(i, half + j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let x2_feas = DVector::from_fn(half, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let mut b = DVector::zeros(m2);
    for i in 0..m2 {
        let mut acc = 0.0;
        for j in 0..half {
            acc += a[(i, half + j)] * x2_feas[j];
        }
        b[i] = acc;
    }
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));

    let sphere = sphere_block_embedded(n, 0, half, 0.5)?;
    let affine = affine_block(a, b)?;
    let stacked = stack_constraints(vec![sphere, affine])?;
    let pl = stacked.pl;
    let (spec, _) =
        assemble_problem("stacked-demo", quadratic_distance_objective(z), stacked)?;

    let mut x0 = DVector::zeros(n);
    x0[0] = 1.0; // unit vector: sphere block feasible
    x0.rows_mut(half, half).copy_from(&x2_feas);
    Ok((spec, pl, x0))
}

fn random_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Random matrix with orthonormal columns (thin QR of a Gaussian matrix).
fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DVector<f64> {
    let g = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let mut flat = DVector::zeros(n * p);
    for i in 0..p {
        flat.rows_mut(n * i, n).copy_from(&q.column(i));
    }
    flat
}

pub(super) fn build_registry_problem(
    name: &str,
    dims: &DimParams,
    eps0: f64,
    seed: u64,
) -> Result<BuiltinProblem, ConfigError> {
    let n = dims.n;
    match name {
        "rosenbrock-sphere" => {
            let (spec, pl) = make_rosenbrock_sphere(n)?;
            let x0 = make_x0_sphere(n, eps0)?;
            Ok(BuiltinProblem {
                spec,
                pl,
                x0,
                sampler: PlSampler::near_feasible(
                    move |rng| random_unit_vector(rng, n),
                    1.0,
                ),
            })
        }
        "affine-quadratic" => {
            let m = dims.m.unwrap_or((n / 4).max(1));
            if m > n {
                return Err(ConfigError::new("affine-quadratic needs m <= n"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x_feas = DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
            let b = &a * &x_feas;
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (spec, pl) = make_affine(a, b, quadratic_distance_objective(z))?;
            Ok(BuiltinProblem {
                spec,
                pl,
                x0: x_feas,
                sampler: PlSampler::sampling_box(-2.0, 2.0),
            })
        }
        "binary-quadratic" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
            let x0 = target.map(|t: f64| t.round());
            let (spec, pl) = make_binary(n, quadratic_distance_objective(target), 0.2)?;
            Ok(BuiltinProblem {
                spec,
                pl,
                x0,
                sampler: PlSampler::near_feasible(
                    move |rng| DVector::from_fn(n, |_, _| if rng.gen::<bool>() { 1.0 } else { 0.0 }),
                    0.6,
                ),
            })
        }
        "stiefel-trace" => {
            let p = dims.p.unwrap_or(2);
            if p > n {
                return Err(ConfigError::new("stiefel-trace needs p <= n"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m_mat = g.tr_mul(&g) / n as f64 + 0.1 * DMatrix::identity(n, n);
            let (spec, pl) = make_stiefel(n, p, trace_quadratic_objective(m_mat, p), 0.5)?;
            // Identity columns: orthonormal start.
            let mut x0 = DVector::zeros(n * p);
            for i in 0..p {
                x0[i + n * i] = 1.0;
            }
            Ok(BuiltinProblem {
                spec,
                pl,
                x0,
                sampler: PlSampler::near_feasible(
                    move |rng| random_orthonormal(rng, n, p),
                    1.0,
                ),
            })
        }
        "stacked-demo" => {
            let (spec, pl, x0) = make_stacked_demo(n, seed)?;
            let half = n / 2;
            let anchor_tail = x0.rows(half, half).clone_owned();
            Ok(BuiltinProblem {
                spec,
                pl,
                x0,
                sampler: PlSampler::near_feasible(
                    move |rng| {
                        let mut x = DVector::zeros(2 * half);
                        x.rows_mut(0, half)
                            .copy_from(&random_unit_vector(rng, half));
                        x.rows_mut(half, half).copy_from(&anchor_tail);
                        x
                    },
                    1.0,
                ),
            })
        }
        other => Err(ConfigError::new(format!(
            "unknown problem '{other}'; available: {}",
            super::REGISTRY_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rosenbrock_unconstrained_minimizer_has_zero_value() {
        let obj = rosenbrock_objective(6).unwrap();
        let x = DVector::from_element(6, 1.0);
        assert_eq!((obj.f)(&x), 0.0);
        assert_eq!((obj.grad)(&x).norm(), 0.0);
    }

    #[test]
    fn rosenbrock_rejects_odd_dimension() {
        assert!(rosenbrock_objective(3).is_err());
        assert!(make_rosenbrock_sphere(5).is_err());
    }

    #[test]
    fn sphere_unit_vector_is_feasible() {
        let (spec, pl) = make_rosenbrock_sphere(4).unwrap();
        let mut e1 = DVector::zeros(4);
        e1[0] = 1.0;
        assert_eq!(spec.constraint(&e1)[0], 0.0);
        assert_relative_eq!(pl.sigma_min, 2.0 * 0.5_f64.sqrt(), max_relative = 1e-15);
        assert_eq!(pl.r, 0.5);
    }

    #[test]
    fn x0_sphere_matches_the_construction() {
        // n = 2, eps0 = sqrt(2) gives exactly (1, 1) and c = 1.
        let x0 = make_x0_sphere(2, 2.0_f64.sqrt()).unwrap();
        assert_relative_eq!(x0[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(x0[1], 1.0, max_relative = 1e-15);
        let (spec, _) = make_rosenbrock_sphere(2).unwrap();
        assert_relative_eq!(spec.constraint(&x0)[0], 1.0, max_relative = 1e-14);

        for (n, eps0) in [(2usize, 1e-3), (10, 1e-6), (1000, 1e-2)] {
            let x0 = make_x0_sphere(n, eps0).unwrap();
            let c = x0.norm_squared() - 1.0;
            let target = eps0 / 2.0_f64.sqrt();
            assert_relative_eq!(c, target, max_relative = 1e-10);
        }
        // eps0 -> 0 puts x0 on the sphere.
        let x0 = make_x0_sphere(8, 1e-14).unwrap();
        assert_relative_eq!(x0.norm(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn affine_sigma_is_the_smallest_singular_value() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]);
        let block = affine_block(a, DVector::zeros(2)).unwrap();
        assert_relative_eq!(block.pl.sigma_min, 2.0, max_relative = 1e-12);

        let mut padded = DMatrix::zeros(2, 5);
        padded[(0, 0)] = 1.0;
        padded[(1, 1)] = 1.0;
        let block = affine_block(padded, DVector::zeros(2)).unwrap();
        assert_relative_eq!(block.pl.sigma_min, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn affine_rejects_rank_deficiency() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(affine_block(a, DVector::zeros(2)).is_err());
    }

    #[test]
    fn binary_corners_are_feasible_and_midpoint_is_outside_the_tube() {
        let block = binary_block(4, 0.2).unwrap();
        let corner = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!((block.cons)(&corner).norm(), 0.0);

        // x = 1/2: c = 1/4 per coordinate, J = 0, so the PL ratio is 0; the
        // point must lie outside C_R (||c|| = sqrt(n)/4 > 0.2).
        let mid = DVector::from_element(4, 0.5);
        let c = (block.cons)(&mid);
        assert_relative_eq!(c.norm(), 0.5, max_relative = 1e-15);
        assert!(c.norm() > block.pl.r);
        let j = (block.jac)(&mid);
        assert_eq!(j.norm(), 0.0);
    }

    #[test]
    fn binary_rejects_r_of_one_quarter_and_beyond() {
        assert!(binary_block(3, 0.25).is_err());
        assert!(binary_block(3, 0.3).is_err());
        assert!(make_binary(3, quadratic_distance_objective(DVector::zeros(3)), 0.25).is_err());
    }

    #[test]
    fn stiefel_orthonormal_is_feasible_and_norm_matches_frobenius() {
        let block = stiefel_block(5, 2, 0.5).unwrap();
        let mut x = DVector::zeros(10);
        x[0] = 1.0; // e1
        x[6] = 1.0; // e2 in the second column
        assert_eq!((block.cons)(&x).norm(), 0.0);

        // Generic point: ||c(X)|| must equal ||X'X - I||_F.
        let x = DVector::from_vec(vec![0.3, -0.2, 0.9, 0.1, 0.4, 0.5, 0.8, -0.7, 0.2, 0.0]);
        let mut xm = DMatrix::zeros(5, 2);
        for i in 0..2 {
            xm.set_column(i, &x.rows(5 * i, 5).clone_owned());
        }
        let gram = xm.tr_mul(&xm) - DMatrix::identity(2, 2);
        assert_relative_eq!((block.cons)(&x).norm(), gram.norm(), max_relative = 1e-13);
    }

    #[test]
    fn stiefel_p_one_reduces_to_the_sphere() {
        let stiefel = stiefel_block(4, 1, 0.5).unwrap();
        let sphere = sphere_block(4, 0.5).unwrap();
        let x = DVector::from_vec(vec![0.7, -0.1, 0.4, 0.2]);
        assert_relative_eq!(
            (stiefel.cons)(&x)[0],
            (sphere.cons)(&x)[0],
            max_relative = 1e-15
        );
        assert!(stiefel_block(2, 3, 0.5).is_err());
    }

    #[test]
    fn registry_builds_every_name_deterministically() {
        for name in super::super::REGISTRY_NAMES {
            let dims = DimParams { n: 8, p: Some(2), m: Some(2) };
            let a = build_registry_problem(name, &dims, 1e-3, 7).unwrap();
            let b = build_registry_problem(name, &dims, 1e-3, 7).unwrap();
            assert_eq!(a.x0, b.x0, "{name} x0 must be seed-deterministic");
            let xa = a.spec.constraint(&a.x0);
            let xb = b.spec.constraint(&b.x0);
            assert_eq!(xa, xb);
            // Start points are feasible enough for the default check.
            assert!(xa.norm() <= 1e-3, "{name}: ||c(x0)|| = {}", xa.norm());
        }
        assert!(build_registry_problem("nope", &DimParams::n(4), 1e-3, 0).is_err());
    }

    #[test]
    fn stacked_demo_combines_the_pl_constants() {
        let (spec, pl, x0) = make_stacked_demo(8, 3).unwrap();
        assert_eq!(pl.r, 0.5);
        assert!(pl.sigma_min <= 2.0 * 0.5_f64.sqrt());
        assert_eq!(spec.constraint(&x0).norm(), 0.0);
    }
}
