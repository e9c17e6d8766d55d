//! Sampling estimator for the PL constant of the constraint violation:
//! the minimum of `||J(x)'c(x)|| / ||c(x)||` over samples in the tube
//! `0 < ||c(x)|| <= R`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::core::ProblemSpec;

type AnchorFn = Arc<dyn Fn(&mut ChaCha8Rng) -> DVector<f64> + Send + Sync>;

/// How candidate points are drawn before rejection to the tube.
///
/// Uniform box sampling rarely lands in thin tubes for larger n, so each
/// built-in problem also registers a near-feasible sampler: an anchor on the
/// feasible set plus an isotropic perturbation of random length.
#[derive(Clone)]
pub enum PlSampler {
    SamplingBox { lo: f64, hi: f64 },
    NearFeasible { anchor: AnchorFn, noise: f64 },
}

impl PlSampler {
    pub fn sampling_box(lo: f64, hi: f64) -> Self {
        assert!(lo < hi);
        PlSampler::SamplingBox { lo, hi }
    }

    pub fn near_feasible<F>(anchor: F, noise: f64) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(noise > 0.0);
        PlSampler::NearFeasible {
            anchor: Arc::new(anchor),
            noise,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        match self {
            PlSampler::SamplingBox { lo, hi } => {
                DVector::from_fn(n, |_, _| rng.gen_range(*lo..*hi))
            }
            PlSampler::NearFeasible { anchor, noise } => {
                let base = anchor(rng);
                let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = dir.norm();
                if norm == 0.0 {
                    return base;
                }
                let radius = rng.gen_range(0.0..*noise);
                base + (radius / norm) * dir
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum PlError {
    #[error(
        "no sample landed in 0 < ||c(x)|| <= {r}; widen the sampling box or the noise scale"
    )]
    Starved { r: f64 },
    #[error("R must be positive, got {0}")]
    InvalidRadius(f64),
}

/// Result of one estimation run.
#[derive(Clone, Debug)]
pub struct PlEstimate {
    /// Minimum sampled ratio; an upper estimate of the true `sigma_min`.
    pub sigma_hat: f64,
    pub worst_point: DVector<f64>,
    /// Samples that landed in the tube.
    pub accepted: usize,
    pub examined: usize,
}

/// Estimates the PL constant on `C_R` by seeded sampling.
///
/// Deterministic for a given seed. Samples with `c(x) = 0` exactly are
/// skipped (the ratio is undefined there).
pub fn estimate_pl(
    problem: &ProblemSpec,
    r: f64,
    sampler: &PlSampler,
    n_samples: usize,
    seed: u64,
) -> Result<PlEstimate, PlError> {
    if !(r > 0.0) {
        return Err(PlError::InvalidRadius(r));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut accepted = 0usize;
    for _ in 0..n_samples {
        let x = sampler.draw(&mut rng, problem.n());
        let c = problem.constraint(&x);
        let c_norm = c.norm();
        if !(c_norm > 0.0 && c_norm <= r) || !c_norm.is_finite() {
            continue;
        }
        accepted += 1;
        let ratio = problem.constraint_jacobian(&x).tr_mul(&c).norm() / c_norm;
        if best.as_ref().map_or(true, |(b, _)| ratio < *b) {
            best = Some((ratio, x));
        }
    }
    match best {
        Some((sigma_hat, worst_point)) => Ok(PlEstimate {
            sigma_hat,
            worst_point,
            accepted,
            examined: n_samples,
        }),
        None => Err(PlError::Starved { r }),
    }
}
