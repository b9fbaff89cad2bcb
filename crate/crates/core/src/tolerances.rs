//! Every numeric threshold in the crate lives here, with the reasoning
//! that produced it. Tests pin against these constants; changing one is
//! a contract change, not a tuning knob.

/// `|φ(z)| = 1` on the unit circle up to rounding of an order-8 product.
pub const BOUNDARY_MODULUS: f64 = 1e-12;

/// Zeros must be strictly interior; factors with `1 - |a|` below this
/// are numerically indistinguishable from boundary points.
pub const ZERO_INTERIOR_GAP: f64 = 1e-12;

/// Front factors are renormalized to exact modulus one when within this
/// distance of the unit circle, and rejected otherwise.
pub const FRONT_UNIMODULAR: f64 = 1e-9;

/// Residual `|φ(w) - φ(z₀)|` accepted for a fiber root.
pub const FIBER_RESIDUAL: f64 = 1e-10;

/// One fiber root must reproduce the base point this closely.
pub const FIBER_CONTAINS_BASE: f64 = 1e-10;

/// Fiber roots closer than this are treated as a collision with the
/// branch locus and rejected for continuation purposes.
pub const NEAR_MULTIPLE_ROOT: f64 = 1e-8;

/// Newton corrector target on `φ(w) - φ(z(t))` during tracking.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: usize = 8;

/// Corrected roots must be this many times closer to their own previous
/// position than to any other branch's.
pub const MATCH_MARGIN: f64 = 3.0;

/// Adaptive step bounds in global path parameter.
pub const STEP_MIN: f64 = 1e-7;
pub const STEP_MAX: f64 = 0.05;

/// Consecutive accepted steps before the step size doubles.
pub const STEP_EASY_STREAK: usize = 4;

/// Closed-loop end fibers must match the base fiber this closely.
pub const END_MATCH: f64 = 1e-8;

/// Branch-locus points within this distance are merged.
pub const LOCUS_DEDUP: f64 = 1e-9;

/// Path clearance from the branch locus: default and admissible range.
pub const CLEARANCE_DEFAULT: f64 = 1e-3;
pub const CLEARANCE_MIN: f64 = 1e-6;
pub const CLEARANCE_MAX: f64 = 1e-2;

/// The base point must clear the locus by this multiple of clearance.
pub const BASE_POINT_FACTOR: f64 = 10.0;

/// Paths stay inside `|z| ≤ 1 - DISK_MARGIN`.
pub const DISK_MARGIN: f64 = 1e-4;

/// Möbius fits of singleton branches: expected residual and the hard
/// failure limit beyond which the branch is not an automorphism.
pub const MOBIUS_FIT_TARGET: f64 = 1e-9;
pub const MOBIUS_FIT_LIMIT: f64 = 1e-6;

/// Elliptic normal-form reconstruction of automorphism members.
pub const NORMAL_FORM_TOL: f64 = 1e-9;

/// `λ^{n_G} = 1` for the recovered multiplier.
pub const LAMBDA_ROOT_TOL: f64 = 1e-10;

/// Agreement of the common fixed point across members.
pub const ALPHA_AGREEMENT: f64 = 1e-8;

/// Recomposition `ψ∘φ_G = φ`: expected residual and hard limit.
pub const RECOMPOSITION_TOL: f64 = 1e-9;
pub const RECOMPOSITION_LIMIT: f64 = 1e-6;

/// `|φ'|` at a point accepted as critical.
pub const CRITICAL_DERIVATIVE: f64 = 1e-10;

/// Taylor coefficients of φ are exact convolutions; this only guards
/// the tail-index computation for the interior buffer.
pub const TAYLOR_TAIL: f64 = 1e-13;

/// Interior-block residuals of operator identities at default truncation.
pub const COMMUTATION_TOL: f64 = 1e-8;
pub const ADJOINT_TOL: f64 = 1e-8;
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Singular-value ratio below which interior blocks count as dependent.
pub const GRAM_SIGMA_RATIO: f64 = 1e-6;

/// Structure-constant fit: expected residual and closure-failure limit.
pub const STRUCTURE_RESIDUAL_TOL: f64 = 1e-6;
pub const STRUCTURE_RESIDUAL_LIMIT: f64 = 1e-4;

/// Max interior commutator accepted as abelian.
pub const ABELIAN_TOL: f64 = 1e-7;

/// Minimal separation of regular-representation eigenvalues.
pub const EIGEN_GAP: f64 = 1e-8;

/// Idempotency / self-adjointness of minimal projections.
pub const PROJECTION_TOL: f64 = 1e-7;

/// Rank cut for range extraction from a symmetrized projection.
pub const RANK_THRESHOLD: f64 = 1e-8;

/// Invariance of reducing subspaces under `M_φ` and its adjoint:
/// expected bound, and the limit past which a subspace is flagged.
pub const INVARIANCE_TOL: f64 = 1e-7;
pub const INVARIANCE_FLAG: f64 = 1e-6;

/// Area identity `Σ ∫|ρ'|² = n_k` at default quadrature settings.
pub const AREA_TOL: f64 = 1e-4;

/// Exclusion radius around branch-locus points inside which the area
/// integrand is dropped (the omitted mass is reported). Distinct from
/// the path clearance: quadrature nodes are evaluated by direct fiber
/// re-solve, which stays well-conditioned far closer to the locus than
/// tracked paths do.
pub const AREA_EXCLUSION: f64 = 1e-6;

/// Interior buffer added to the product order for operator matrices
/// built by circle extraction.
pub const BUFFER_EXTRA: usize = 16;

/// Samples per extraction circle. Power of two (the samples feed an
/// FFT) and ≥ 4N at the default truncation so aliased coefficients,
/// which carry an extra factor r^M, stay below rounding.
pub const CIRCLE_SAMPLES: usize = 2048;

/// Candidate extraction radii, tried in order. The DFT recovers the
/// coefficient of z^l with an r^{-l} noise amplification, so large
/// radii come first: at r = 0.9 the amplification at l = 100 is ~4e4,
/// at r = 0.6 it is ~1e22. The small tail radii only matter for locus
/// geometries that crowd every large circle, where high rows are
/// already conceded.
pub const CIRCLE_RADII: [f64; 15] = [
    0.90, 0.89, 0.88, 0.87, 0.86, 0.85, 0.84, 0.83, 0.82, 0.81, 0.80, 0.70, 0.60, 0.50, 0.40,
];

/// A candidate circle is accepted outright when every locus point is
/// radially this many clearances away from it; otherwise the best
/// candidate wins provided it clears one clearance.
pub const CIRCLE_CLEARANCE_FACTOR: f64 = 10.0;

/// Dense fiber walker: nearest/second-nearest ratio below which a
/// fresh companion solve is matched to the previous labels.
pub const WALK_MATCH_RATIO: f64 = 0.35;

/// Dense fiber walker: bisection depth cap. 2^-30 of a unit-scale
/// segment is ~1e-9, below which matching failures mean a genuine
/// collision with the locus rather than a step-size problem.
pub const WALK_MAX_DEPTH: usize = 30;

/// Singular patches around branch-locus points: radius cap, fraction
/// of the minimal locus separation (keeps patches disjoint), and
/// fraction of the distance to the integration boundary.
pub const PATCH_DELTA_MAX: f64 = 0.04;
pub const PATCH_SEP_FACTOR: f64 = 0.35;
pub const PATCH_BOUNDARY_FACTOR: f64 = 0.4;

/// Cap on the patch substitution exponent (the lcm of locus
/// multiplicities sharing a critical value). Beyond this the radial
/// substitution t^L underflows and the geometry is hopeless anyway.
pub const PATCH_LCM_CAP: usize = 60;

/// Γ-matrix unitarity for unitary commutant elements.
pub const GAMMA_UNITARY_TOL: f64 = 1e-9;

/// Additive floor of the kernel-action tail bound, covering coefficient
/// construction noise (DFT rounding amplified by r^{-l}, continuation
/// tolerances). Scaled by n_k·√N at use sites.
pub const KERNEL_NOISE_FLOOR: f64 = 1e-10;

/// Group closure cap multiplier: closure aborts past `10 · n!`.
pub const GROUP_CAP_FACTOR: usize = 10;

/// Evaluation refuses points this close to a pole `1/ā_j`.
pub const POLE_PROXIMITY: f64 = 1e-14;

/// Cluster width for grouping coincident fiber roots over a critical
/// value into one locus point with a multiplicity. Wider than
/// LOCUS_DEDUP because an e-fold root is only located to O(eps^(1/e))
/// by the eigensolver (~1e-8 for e = 2); the cluster mean cancels the
/// leading error term.
pub const LOCUS_CLUSTER: f64 = 1e-7;
