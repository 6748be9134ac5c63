//! Simulation and identifiability diagnostics for first-order interacting-particle
//! systems on Riemannian manifolds.
//!
//! The systems have the form
//! `dx_i/dt = (1/N) * sum_j phi(d(x_i, x_j)) * log_{x_i}(x_j)`
//! where `phi` is a radial interaction kernel and `log` is the Riemannian
//! logarithm. Supported manifolds: round spheres S^n, hyperbolic spaces H^n
//! (hyperboloid model, half-space I/O supported) and Euclidean R^n.
//!
//! Modules mirror the pipeline: [`geometry`] (points, tangents, exp/log,
//! sampling), [`kernels`] (compactly supported radial kernels and spline
//! bases), [`dynamics`] (velocity fields, geodesic integrators, datasets),
//! [`measure`] (configuration distributions and the empirical pair-distance
//! measure rho), [`quadrature`] + [`operator`] (forward-operator Gram matrices,
//! coercivity bounds, cross terms and the coercivity-condition integrals) and
//! [`learning`] (regularized least-squares kernel recovery).

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod learning;
pub mod measure;
pub mod operator;
pub mod quadrature;
pub mod rng;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
