//! Quadratic penalty method for smooth equality-constrained minimization.
//!
//! The solver replaces `min f(x) s.t. c(x) = 0` by a sequence of unconstrained
//! minimizations of the penalized objective `Q_beta(x) = f(x) + (beta/2)·||c(x)||^2`
//! with geometrically growing `beta`, and stops each subproblem with a
//! feasibility-aware tolerance that is loose far from the feasible set and
//! tightens to the target stationarity accuracy near it. Every run counts its
//! oracle calls (joint value, gradient/Jacobian, and Hessian evaluations), so
//! the practical cost of a configuration can be compared against the analytic
//! penalty-parameter and outer-iteration bounds produced by [`outer::compute_bounds`].
//!
//! Two inner solvers are provided: gradient descent with Armijo backtracking
//! ([`inner::gd_armijo`]) and a trust-region method with a Steihaug truncated-CG
//! subproblem solver and a hard radius cap ([`inner::tr_solve`]).
//!
//! # Quick start
//!
//! ```
//! use qpm::outer::{qpm_solve, QpmConfig, InnerConfig};
//! use qpm::penalty::ToleranceRule;
//! use qpm::inner::GdConfig;
//! use qpm::problems::{make_rosenbrock_sphere, make_x0_sphere};
//!
//! let (problem, _pl) = make_rosenbrock_sphere(2).unwrap();
//! let rule = ToleranceRule::adaptive(1e-4, 1e-4).unwrap();
//! let cfg = QpmConfig::new(1.0, 1.2, rule, InnerConfig::Gd(GdConfig::default())).unwrap();
//! let x0 = make_x0_sphere(2, 1e-4).unwrap();
//!
//! let solution = qpm_solve(&problem, x0, &cfg).unwrap();
//! assert!(solution.certificate.is_valid());
//! ```
//!
//! The `examples/` directory walks through every major capability; the `qpm`
//! binary exposes the same machinery as `solve`, `compare`, `sweep`,
//! `check-pl`, and `bounds` subcommands.

pub mod cli;
pub mod core;
pub mod inner;
pub mod outer;
pub mod penalty;
pub mod problems;

pub use crate::core::{CountingOracle, OracleCounters, ProblemSpec};
pub use crate::outer::{qpm_solve, KKTCertificate, QpmConfig, RunReport};
pub use crate::penalty::ToleranceRule;
