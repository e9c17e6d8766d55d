//! Steihaug truncated conjugate gradient for the trust-region subproblem
//! `min m(d) = g'd + d'Hd/2  s.t. ||d|| <= delta`.

use nalgebra::DVector;

use crate::penalty::PenaltyHessian;

#[derive(Clone, Debug)]
pub struct CgResult {
    pub step: DVector<f64>,
    /// The step was clipped to the trust-region boundary.
    pub boundary_hit: bool,
    /// A direction of non-positive curvature was followed to the boundary.
    pub negative_curvature: bool,
    /// Number of Hessian-vector products consumed by the CG loop.
    pub iterations: usize,
    /// Model decrease `m(0) - m(d) >= 0`.
    pub model_decrease: f64,
}

/// Positive root of `||z + sigma p|| = delta`.
fn boundary_sigma(z: &DVector<f64>, p: &DVector<f64>, delta: f64) -> f64 {
    let pp = p.norm_squared();
    let zp = z.dot(p);
    let zz = z.norm_squared();
    let disc = (zp * zp + pp * (delta * delta - zz)).max(0.0);
    (-zp + disc.sqrt()) / pp
}

/// Approximately minimizes the quadratic model within the radius.
///
/// Stops on residual `||r|| <= rel_tol·||g||`, on non-positive curvature
/// (following the direction to the boundary), or on boundary crossing.
/// The first CG iterate realizes the Cauchy point, so the returned step
/// always matches or beats the Cauchy decrease.
pub fn truncated_cg(h: &PenaltyHessian, g: &DVector<f64>, delta: f64, rel_tol: f64) -> CgResult {
    assert!(delta > 0.0, "trust-region radius must be positive");
    let n = g.len();
    let g_norm = g.norm();
    let mut z = DVector::zeros(n);
    if g_norm == 0.0 {
        return CgResult {
            step: z,
            boundary_hit: false,
            negative_curvature: false,
            iterations: 0,
            model_decrease: 0.0,
        };
    }
    let threshold = rel_tol * g_norm;
    let mut r = g.clone();
    let mut p = -g.clone();
    let mut rr = r.norm_squared();
    let mut boundary_hit = false;
    let mut negative_curvature = false;
    let mut iterations = 0;

    for _ in 0..2 * n {
        let pp = p.norm_squared();
        if pp < f64::MIN_POSITIVE {
            break;
        }
        let hp = h.apply(&p);
        iterations += 1;
        let php = p.dot(&hp);
        if php <= 0.0 {
            let sigma = boundary_sigma(&z, &p, delta);
            z += sigma * &p;
            boundary_hit = true;
            negative_curvature = true;
            break;
        }
        let alpha = rr / php;
        let z_next = &z + alpha * &p;
        if z_next.norm() >= delta {
            let sigma = boundary_sigma(&z, &p, delta);
            z += sigma * &p;
            boundary_hit = true;
            break;
        }
        r += alpha * &hp;
        z = z_next;
        let rr_next = r.norm_squared();
        if rr_next.sqrt() <= threshold {
            break;
        }
        p = (rr_next / rr) * p - &r;
        rr = rr_next;
    }

    let hd = h.apply(&z);
    let model_decrease = -(g.dot(&z) + 0.5 * z.dot(&hd));
    CgResult {
        step: z,
        boundary_hit,
        negative_curvature,
        iterations,
        model_decrease,
    }
}
