use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Blaschke product: {0}")]
    InvalidProduct(String),

    #[error("evaluation within 1e-14 of a pole at z = {z}")]
    PoleProximity { z: Complex64 },

    #[error("root finder failed: {0}")]
    RootFinder(String),

    #[error("fiber at z = {z} has a near-multiple root (separation {separation:.3e}); z is too close to the branch locus")]
    NearBranchPoint { z: Complex64, separation: f64 },

    #[error("path violates clearance {clearance:.3e} near {witness}")]
    ClearanceViolation { witness: Complex64, clearance: f64 },

    #[error("fiber tracking stalled at t = {t:.6} (step {step:.3e}): {reason}")]
    TrackingFailure { t: f64, step: f64, reason: String },

    #[error("ambiguous root matching at t = {t:.6}: margin {margin:.3} below required {required:.3}")]
    MatchingAmbiguity { t: f64, margin: f64, required: f64 },

    #[error("no admissible base point: best candidate clears the branch locus by {best:.3e}, required {required:.3e}")]
    BasePointSearch { best: f64, required: f64 },

    #[error("no admissible sampling circle: best candidate radius clears the branch locus by {best:.3e}, required {required:.3e}")]
    CircleRadiusSearch { best: f64, required: f64 },

    #[error("composition table failure: {0}")]
    CompositionTable(String),

    #[error("Möbius fit for branch {branch}: residual {residual:.3e} exceeds {limit:.3e}")]
    MobiusFit { branch: usize, residual: f64, limit: f64 },

    #[error("automorphism group order {n_g} does not divide the product order {n}")]
    Divisibility { n_g: usize, n: usize },

    #[error("automorphism group structure failure: {0}")]
    Automorphism(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("orbit classes are not closed under branch inversion (branch {branch})")]
    InverseClassInconsistency { branch: usize },

    #[error("class sums did not close after a full circle: {0}")]
    ClassClosure(String),

    #[error("algebra closure failure at product ({j}, {k}): residual {residual:.3e} exceeds {limit:.3e}")]
    AlgebraClosure { j: usize, k: usize, residual: f64, limit: f64 },

    #[error("interior blocks of the class operators are linearly dependent: rank {rank}, expected {expected}")]
    LinearDependence { rank: usize, expected: usize },

    #[error("eigenvalue gap {gap:.3e} below {limit:.3e}; minimal projections not separable")]
    EigenGap { gap: f64, limit: f64 },

    #[error("projection {index} fails a projection check (deviation {deviation:.3e}, limit {limit:.3e})")]
    ProjectionFault { index: usize, deviation: f64, limit: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
