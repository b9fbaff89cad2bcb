//! Numerical analysis of finite Blaschke products: monodromy of the
//! multivalued map `φ⁻¹∘φ` over the unit disk, the class operators it
//! induces on the Bergman space, and the commutant algebra of the
//! multiplication operator `M_φ` together with its minimal reducing
//! subspaces.
//!
//! The crate is organized bottom-up:
//!
//! * [`blaschke`]: the product itself, its rational form, critical
//!   points, fibers, and the branch locus.
//! * [`continuation`]: clearance-respecting paths in the disk and
//!   predictor-corrector tracking of whole fibers along them.
//! * [`monodromy`]: loop permutations, orbit partition, composition
//!   table of the local inverses, and the automorphism subgroup.
//! * [`bergman`]: truncated matrices of `M_φ` and of the per-orbit
//!   class operators, kernel actions, and the area identity.
//! * [`algebra`]: structure constants, minimal projections, reducing
//!   subspaces, and the Γ-matrix of a commutant element.
//! * [`pipeline`]: configuration, the end-to-end run, and report
//!   emission used by the CLI.
//!
//! Branch indices are zero-based throughout; branch `0` is always the
//! identity branch `ρ₀(z) = z`.

pub mod algebra;
pub mod bergman;
pub mod blaschke;
pub mod c64;
pub mod continuation;
pub mod error;
pub mod linalg;
pub mod monodromy;
pub mod perm;
// pub mod pipeline;
pub mod poly;
pub mod quad;
pub mod tolerances;

pub use algebra::{
    AlgebraDecomposition, GammaMatrix, MinimalProjection, ReducingSubspace, StructureConstants,
};
pub use blaschke::{BlaschkeProduct, BranchLocus, DiskAutomorphism, RationalForm};
pub use continuation::{Engine, FiberTrack, LocalInverseValue, Path, Segment};
pub use error::{Error, Result};
pub use monodromy::{AutomorphismGroup, CompositionTable, MonodromyData};
pub use perm::Perm;
// pub use pipeline::{Report, RunConfig};
