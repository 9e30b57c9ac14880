//! Gaussian-weighted Ornstein-Uhlenbeck Neumann problems `lam u - L u = f`
//! on convex domains of `R^n`, `L u = Laplacian u - <x, grad u>`.
//!
//! The crate bundles the pieces needed to solve the problem and to check the
//! dimension-free a-priori estimates its solutions obey:
//!
//! * [`domain`]: convex sets `{g < 0}` with analytic projections,
//! * [`measure`]: Gaussian interior and boundary quadrature,
//! * [`solver`]: flux-form finite volumes with Hermite-spectral free axes,
//!   matrix-free conjugate gradients and norm recovery,
//! * [`cylinder`]: cylindrical functions, lifting and dimension sweeps,
//! * [`oracle`]: a Feynman-Kac estimator over reflected OU paths,
//! * [`verify`]: integration by parts, Green, log-Sobolev and boundary checks,
//! * [`run`]: the configuration-driven experiment runner behind the CLI.

// `!(x > 0.0)` rejects NaN together with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cylinder;
pub mod domain;
pub mod error;
pub mod functions;
pub mod linalg;
pub mod measure;
pub mod oracle;
pub mod report;
pub mod run;
pub mod solver;
pub mod verify;

pub use domain::ConvexDomain;
pub use error::{Error, Result};
pub use functions::{apply_operator, Analytic, SmoothFunction};
pub use measure::{Quadrature, QuadratureSpec};
