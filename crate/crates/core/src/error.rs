use crate::geometry::ManifoldSpec;

/// Errors surfaced by the library. Numerical routines that cannot fail
/// (given validated inputs) return plain values instead.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("manifold mismatch: {0} vs {1}")]
    ManifoldMismatch(ManifoldSpec, ManifoldSpec),

    #[error("dimension {dim} outside supported range {min}..={max} for {context}")]
    DimensionOutOfRange {
        dim: usize,
        min: usize,
        max: usize,
        context: &'static str,
    },

    #[error("ambient coordinate vector has length {got}, expected {expected}")]
    AmbientDimMismatch { expected: usize, got: usize },

    #[error("point fails the {0} constraint (residual {1:.3e})")]
    InvalidPoint(ManifoldSpec, f64),

    #[error("vector is not tangent at its base point (inner product {0:.3e})")]
    NotTangent(f64),

    #[error("tangent vectors are based at different points")]
    BaseMismatch,

    #[error("half-space coordinate must have positive last component, got {0}")]
    NonpositiveHeight(f64),

    #[error("sampling law {law} is incompatible with manifold {manifold}")]
    IncompatibleLaw { law: String, manifold: ManifoldSpec },

    #[error("radial argument {0} is negative")]
    NegativeRadius(f64),

    #[error("radial coordinate {r} outside [0, {max}]")]
    RadiusOutOfRange { r: f64, max: f64 },

    #[error("invalid kernel basis: {0}")]
    InvalidBasis(String),

    #[error("coefficient vector has length {got}, basis has {expected} elements")]
    CoeffLenMismatch { expected: usize, got: usize },

    #[error("configuration needs at least {min} particles, got {got}")]
    TooFewParticles { min: usize, got: usize },

    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("empty sample set")]
    EmptySamples,

    #[error("kernel support radius {support} exceeds measure radius {radius}")]
    SupportExceedsRadius { support: f64, radius: f64 },

    #[error("basis support radius {support} exceeds injectivity radius {injectivity}")]
    SupportExceedsInjectivity { support: f64, injectivity: f64 },

    #[error("mixture weights must be positive and sum to 1 (sum {0})")]
    BadMixtureWeights(f64),

    #[error(
        "rho-weighted Gram matrix is singular: basis elements {elements:?} receive \
         (almost) no pair-distance mass; shrink the support radius or coarsen the basis"
    )]
    SingularRhoGram { elements: Vec<usize> },

    #[error(
        "normal matrix is singular (relative pivot {pivot:.3e}); pass \
         Regularizer::Ridge or Regularizer::TruncatedSvd instead of Regularizer::None"
    )]
    SingularSystem { pivot: f64 },

    #[error("coercivity quadrature supports manifold dimensions 1..=3, got {0}")]
    UnsupportedQuadratureDim(usize),

    #[error("coercivity quadrature does not support density {law} on {manifold}")]
    UnsupportedDensity { law: String, manifold: ManifoldSpec },

    #[error("component index {i} out of range for dimension {dim}")]
    ComponentOutOfRange { i: usize, dim: usize },

    #[error("distribution variant {0} cannot be sampled as an i.i.d. point triple")]
    NotIidTriple(String),

    #[error("reference kernel has zero norm in the supplied measure")]
    ZeroNormReference,

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("serialization: {0}")]
    Serialization(String),
}
