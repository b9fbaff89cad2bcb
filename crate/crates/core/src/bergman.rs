//! Operators on the Bergman space of the disk under area measure
//! normalized to total mass one, truncated to the orthonormal monomial
//! basis e_m(z) = √(m+1)·zᵐ.
//!
//! Three constructions live here. `mult_matrix` builds the (lower
//! triangular) matrix of M_φ from the Taylor coefficients of φ. The
//! class operators 𝓔_k f = Σ_{ρ∈G_k} ρ′·(f∘ρ) are built by sampling
//! their symbol sums on a circle and reading coefficients off a DFT:
//! each class sum is a single-valued analytic function on the disk
//! (the Puiseux-singular parts of a full branch cycle cancel in the
//! sum), so the circle samples determine the matrix columns. The area
//! identity integrates Σ|ρ′|² per class; its integrand is singular at
//! the branch locus, so each locus point gets a conforming polar patch
//! with a root substitution, and the global grid sees a smooth filler
//! inside the patch discs whose contribution the patch subtracts back.

use crate::blaschke::{BlaschkeProduct, BranchLocus};
use crate::c64;
use crate::continuation::Engine;
use crate::error::{Error, Result};
use crate::monodromy::MonodromyData;
use crate::tolerances as tol;
use crate::{linalg, poly, quad};
use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Fourier modes kept when fitting the smooth filler on the circles
/// around a locus point (plus conjugates), and the fixed sample count
/// of those circles.
const FILLER_MODES: usize = 32;
const FILLER_SAMPLES: usize = 256;

/// Relative radii of the four sampling circles the filler jet is
/// fitted on, as multiples of the patch radius.
const FILLER_RADII: [f64; 4] = [1.15, 1.10, 1.05, 1.00];

/// Backward-error scale entering the branch-cluster resolution
/// estimate: a fresh polynomial solve near an m-fold cluster locates
/// its roots no better than (RESOLVE_EPS/m)^{1/m}.
const RESOLVE_EPS: f64 = 1e-15;
/// Keep-out radii sit this far above the resolution scale; a walk
/// segment detours when it would dip below SPOT_TRIGGER of a radius.
const SPOT_SAFETY: f64 = 3.2;
const SPOT_TRIGGER: f64 = 0.8;
/// Patch grids stop descending at FLOOR_SAFETY times the resolution
/// scale of their own point (mates of valency 1 keep the global
/// exclusion radius instead; their clusters sit at the far critical
/// point with separations ~ τ^{1/m} ≫ τ).
const FLOOR_SAFETY: f64 = 3.0;
const ARC_STEP: f64 = PI / 3.0;
const ROUTE_DEPTH: usize = 10;

// ---------------------------------------------------------------------------
// Truncated operator matrices

/// A truncated operator matrix together with the band of rows and
/// columns near the truncation edge that the construction cannot
/// vouch for. Identity checks between matrices compare the interior
/// block of side `n - buffer` (the larger buffer when two matrices
/// are involved).
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: Array2<Complex64>,
    pub label: String,
    pub buffer: usize,
}

impl OperatorMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Side of the trustworthy interior block.
    pub fn interior_size(&self) -> usize {
        self.n().saturating_sub(self.buffer)
    }

    pub fn interior(&self) -> ArrayView2<'_, Complex64> {
        let k = self.interior_size();
        self.entries.slice(s![..k, ..k])
    }

    pub fn adjoint(&self) -> Array2<Complex64> {
        let n = self.n();
        Array2::from_shape_fn((n, n), |(l, m)| self.entries[[m, l]].conj())
    }

    /// Apply the adjoint to a coefficient vector.
    pub fn adjoint_apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        assert_eq!(v.len(), n);
        (0..n)
            .map(|m| (0..n).map(|l| self.entries[[l, m]].conj() * v[l]).sum())
            .collect()
    }

    /// Rows of `re, im` pairs, comma separated, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        for l in 0..n {
            for m in 0..n {
                if m > 0 {
                    out.push(',');
                }
                let e = self.entries[[l, m]];
                let _ = write!(out, "{:.17e},{:.17e}", e.re, e.im);
            }
            out.push('\n');
        }
        out
    }

    /// Little-endian layout: u64 dimension, u32 label length, label
    /// bytes, then row-major (re, im) f64 pairs.
    pub fn to_binary(&self) -> Vec<u8> {
        let n = self.n();
        let label = self.label.as_bytes();
        let mut out = Vec::with_capacity(12 + label.len() + 16 * n * n);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(label);
        for l in 0..n {
            for m in 0..n {
                let e = self.entries[[l, m]];
                out.extend_from_slice(&e.re.to_le_bytes());
                out.extend_from_slice(&e.im.to_le_bytes());
            }
        }
        out
    }
}

/// Largest interior block side on which two matrices can be compared.
pub fn joint_interior(a: &OperatorMatrix, b: &OperatorMatrix) -> usize {
    assert_eq!(a.n(), b.n());
    a.n().saturating_sub(a.buffer.max(b.buffer))
}

// ---------------------------------------------------------------------------
// Multiplication operator

/// Taylor coefficients of φ at 0, `count` of them, by power-series
/// division of its rational form (the denominator has constant term 1
/// and all roots outside the closed disk, so the recursion is stable).
pub fn taylor_coefficients(phi: &BlaschkeProduct, count: usize) -> Vec<Complex64> {
    let rf = phi.rational_form();
    let (p, q) = (&rf.p, &rf.q);
    let mut inv_q = vec![ZERO; count];
    if count == 0 {
        return inv_q;
    }
    inv_q[0] = ONE / q[0];
    for j in 1..count {
        let mut s = ZERO;
        for i in 1..=j.min(q.len() - 1) {
            s += q[i] * inv_q[j - i];
        }
        inv_q[j] = -s / q[0];
    }
    (0..count)
        .map(|j| {
            (0..=j.min(p.len().saturating_sub(1)))
                .map(|i| p[i] * inv_q[j - i])
                .sum()
        })
        .collect()
}

/// Matrix of M_φ on the truncated basis: entry (l, m) is
/// c_{l-m}·√((m+1)/(l+1)) with c the Taylor coefficients of φ. Lower
/// triangular because multiplying by φ never lowers degree. The buffer
/// marks columns whose image leaks past the truncation by more than
/// the Taylor tail threshold.
pub fn mult_matrix(phi: &BlaschkeProduct, n_basis: usize) -> Result<OperatorMatrix> {
    let order = phi.order();
    if n_basis < order + 4 {
        return Err(Error::Config(format!(
            "truncation {n_basis} below the minimum {} for an order-{order} product",
            order + 4
        )));
    }
    let coeffs = taylor_coefficients(phi, n_basis + 16);
    let tail = coeffs
        .iter()
        .rposition(|c| c.norm() > tol::TAYLOR_TAIL)
        .map_or(0, |j| j + 1);
    let mut entries = Array2::from_elem((n_basis, n_basis), ZERO);
    for l in 0..n_basis {
        for m in 0..=l {
            entries[[l, m]] = coeffs[l - m] * (((m + 1) as f64) / ((l + 1) as f64)).sqrt();
        }
    }
    Ok(OperatorMatrix {
        entries,
        label: "M_phi".to_string(),
        buffer: tail.max(order).min(n_basis),
    })
}

// ---------------------------------------------------------------------------
// Dense fiber walker

/// Fiber continuation tuned for dense, short steps on quadrature grids
/// and sampling circles. Labels are corrected by Newton from the
/// previous positions when the targets stay cleanly separated, and by
/// a fresh companion solve matched under a nearest/second-nearest
/// margin otherwise; ambiguous steps bisect. Downstream consumers only
/// use class-level labels, which any continuation path preserves:
/// branches can only be confused where they nearly collide, and
/// colliding branches belong to one local cycle, hence one class.
struct FiberSolver<'a> {
    phi: &'a BlaschkeProduct,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
    coeff_scale: f64,
}

impl<'a> FiberSolver<'a> {
    fn new(phi: &'a BlaschkeProduct) -> Self {
        let rf = phi.rational_form();
        let scale = rf.p.iter().chain(rf.q.iter()).map(|c| c.norm()).sum();
        FiberSolver {
            phi,
            p: rf.p.clone(),
            q: rf.q.clone(),
            coeff_scale: scale,
        }
    }

    fn fiber_poly(&self, y: Complex64) -> Vec<Complex64> {
        poly::sub(&self.p, &poly::scale(&self.q, y))
    }

    /// Newton on P(w) - y·Q(w) from w0. None when it fails to settle.
    fn newton_root(&self, y: Complex64, w0: Complex64) -> Option<Complex64> {
        let mut w = w0;
        for _ in 0..10 {
            let (pv, pd) = poly::eval_with_derivative(&self.p, w);
            let (qv, qd) = poly::eval_with_derivative(&self.q, w);
            let g = pv - y * qv;
            let dg = pd - y * qd;
            if dg.norm() < 1e-300 {
                return None;
            }
            let step = g / dg;
            w -= step;
            if step.norm() <= 1e-15 + 1e-14 * w.norm() {
                let (pv, _) = poly::eval_with_derivative(&self.p, w);
                let (qv, _) = poly::eval_with_derivative(&self.q, w);
                let res = (pv - y * qv).norm();
                return (res <= 1e-11 * self.coeff_scale).then_some(w);
            }
        }
        None
    }

    /// One labeled step: the fiber over `z`, labels carried from
    /// `prev`. The Newton fast path keeps labels only when every root
    /// converged and the targets are separated well past the largest
    /// move; otherwise a full solve is matched against `prev`.
    fn advance(&self, z: Complex64, prev: &[Complex64]) -> Result<Vec<Complex64>> {
        let y = self.phi.eval(z);
        let mut fast = Vec::with_capacity(prev.len());
        let mut max_move = 0.0f64;
        for &w0 in prev {
            match self.newton_root(y, w0) {
                Some(w) => {
                    max_move = max_move.max((w - w0).norm());
                    fast.push(w);
                }
                None => {
                    fast.clear();
                    break;
                }
            }
        }
        if fast.len() == prev.len() {
            let sep = c64::min_pairwise_distance(&fast);
            if sep > 6.0 * max_move.max(1e-13) {
                return Ok(fast);
            }
        }
        let roots = poly::roots(&self.fiber_poly(y))?;
        if roots.len() != prev.len() {
            return Err(Error::TrackingFailure {
                t: 0.0,
                step: 0.0,
                reason: format!(
                    "fiber over {z:.6} has {} roots, expected {}",
                    roots.len(),
                    prev.len()
                ),
            });
        }
        let mut out = vec![ZERO; prev.len()];
        let mut used = vec![false; prev.len()];
        for (i, &w0) in prev.iter().enumerate() {
            let (j, d1, d2) = c64::nearest(&roots, w0);
            if d1 > tol::WALK_MATCH_RATIO * d2 || used[j] {
                return Err(Error::MatchingAmbiguity {
                    t: 0.0,
                    margin: if d1 > 0.0 { d2 / d1 } else { f64::INFINITY },
                    required: 1.0 / tol::WALK_MATCH_RATIO,
                });
            }
            used[j] = true;
            out[i] = roots[j];
        }
        Ok(out)
    }

    /// Labeled fiber at `to`, continued from a labeled fiber at `from`
    /// along the straight segment, bisecting ambiguous steps.
    fn walk(
        &self,
        from: Complex64,
        fiber: &[Complex64],
        to: Complex64,
        depth: usize,
    ) -> Result<Vec<Complex64>> {
        if from == to {
            return Ok(fiber.to_vec());
        }
        match self.advance(to, fiber) {
            Ok(next) => Ok(next),
            Err(e) => {
                if depth >= tol::WALK_MAX_DEPTH {
                    return Err(Error::TrackingFailure {
                        t: 0.0,
                        step: (to - from).norm(),
                        reason: format!(
                            "fiber walk pinned near z = {:.6}+{:.6}i ({e})",
                            to.re, to.im
                        ),
                    });
                }
                let mid = 0.5 * (from + to);
                let half = self.walk(from, fiber, mid, depth + 1)?;
                self.walk(mid, &half, to, depth + 1)
            }
        }
    }
}

/// Distance below which an m-fold branch cluster cannot be split by a
/// fresh polynomial solve at machine precision: the colliding branches
/// over a point at distance d from an m-fold locus point sit ~d apart,
/// while the solve only locates them to ~eps/(m·d^{m-1}).
fn resolve_scale(m: usize) -> f64 {
    (RESOLVE_EPS / m as f64).powf(1.0 / m as f64)
}

/// Fiber walking with detours around the resolution-limited
/// neighborhoods of locus points of valency ≥ 2. Segments that would
/// pass through a keep-out circle are rerouted along arcs just outside
/// it; segments that *end* inside one (deliberate radial approaches
/// from patch grids, which keep τ above the matching floor) are left
/// alone.
struct Router<'a> {
    solver: &'a FiberSolver<'a>,
    /// (center, keep-out radius) per locus point of valency ≥ 2.
    spots: Vec<(Complex64, f64)>,
}

impl<'a> Router<'a> {
    fn new(solver: &'a FiberSolver<'a>, locus: &BranchLocus) -> Self {
        let spots = locus
            .points
            .iter()
            .zip(&locus.multiplicities)
            .filter(|&(_, &m)| m >= 2)
            .map(|(&f, &m)| (f, SPOT_SAFETY * resolve_scale(m)))
            .collect();
        Router { solver, spots }
    }

    /// Waypoints from `a` to `b`: straight when clear, otherwise around
    /// the first keep-out circle met, recursively.
    fn route(
        &self,
        a: Complex64,
        b: Complex64,
        depth: usize,
        out: &mut Vec<Complex64>,
    ) -> Result<()> {
        if depth >= ROUTE_DEPTH {
            return Err(Error::TrackingFailure {
                t: 0.0,
                step: (b - a).norm(),
                reason: format!(
                    "routing depth exhausted near z = {:.6}+{:.6}i",
                    b.re, b.im
                ),
            });
        }
        let ab = b - a;
        let len2 = ab.norm_sqr();
        let mut hit: Option<(f64, usize)> = None;
        if len2 > 0.0 {
            for (si, &(f, rad)) in self.spots.iter().enumerate() {
                if (a - f).norm() <= rad || (b - f).norm() <= rad {
                    continue;
                }
                let t = (((f - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
                if (a + t * ab - f).norm() < SPOT_TRIGGER * rad
                    && hit.map_or(true, |(tb, _)| t < tb)
                {
                    hit = Some((t, si));
                }
            }
        }
        let Some((_, si)) = hit else {
            out.push(b);
            return Ok(());
        };
        let (f, rad) = self.spots[si];
        let ta = (a - f).arg();
        let mut turn = (b - f).arg() - ta;
        if turn > PI {
            turn -= TAU;
        } else if turn <= -PI {
            turn += TAU;
        }
        let steps = ((turn.abs() / ARC_STEP).ceil() as usize).max(1);
        let mut prev = a;
        for s in 0..=steps {
            let wp = f + Complex64::from_polar(rad, ta + turn * s as f64 / steps as f64);
            self.route(prev, wp, depth + 1, out)?;
            prev = wp;
        }
        self.route(prev, b, depth + 1, out)
    }

    /// Labeled fiber at `to`, continued from `fiber` at `from` along
    /// the routed polyline.
    fn walk(&self, from: Complex64, fiber: &[Complex64], to: Complex64) -> Result<Vec<Complex64>> {
        let mut waypoints = Vec::new();
        self.route(from, to, 0, &mut waypoints)?;
        let mut cur = fiber.to_vec();
        let mut at = from;
        for wp in waypoints {
            cur = self.solver.walk(at, &cur, wp, 0)?;
            at = wp;
        }
        Ok(cur)
    }
}

/// Require the end fiber of a closed loop to occupy the same classes
/// as its start fiber (the loop may permute branches, but only within
/// classes; anything else is a walking fault).
fn class_closure(
    class_of: &[usize],
    start: &[Complex64],
    end: &[Complex64],
    what: &str,
) -> Result<()> {
    for (i, &w) in end.iter().enumerate() {
        let (j, d1, d2) = c64::nearest(start, w);
        if d1 > tol::WALK_MATCH_RATIO * d2 {
            return Err(Error::ClassClosure(format!(
                "{what}: return fiber matches its start ambiguously (d1 = {d1:.3e}, d2 = {d2:.3e})"
            )));
        }
        if class_of[j] != class_of[i] {
            return Err(Error::ClassClosure(format!(
                "{what}: branch {i} started in class {} but returned in class {}",
                class_of[i], class_of[j]
            )));
        }
    }
    Ok(())
}

/// Walk a closed ring of nodes, calling `visit` with each node index,
/// position, and labeled fiber, then walk back to the start node and
/// check class closure. The fiber passed in belongs to
/// `nodes[start_idx]`.
fn process_ring(
    router: &Router,
    class_of: &[usize],
    nodes: &[Complex64],
    start_idx: usize,
    fiber_at_start: &[Complex64],
    what: &str,
    mut visit: impl FnMut(usize, Complex64, &[Complex64]),
) -> Result<()> {
    let m = nodes.len();
    let mut fiber = fiber_at_start.to_vec();
    let mut prev = nodes[start_idx];
    visit(start_idx, prev, &fiber);
    for t in 1..m {
        let idx = (start_idx + t) % m;
        fiber = router.walk(prev, &fiber, nodes[idx])?;
        prev = nodes[idx];
        visit(idx, prev, &fiber);
    }
    let back = router.walk(prev, &fiber, nodes[start_idx])?;
    class_closure(class_of, fiber_at_start, &back, what)
}

// ---------------------------------------------------------------------------
// Class operators by circle extraction

/// Options for the coefficient-extraction circle.
#[derive(Debug, Clone, Copy)]
pub struct CircleOptions {
    /// Forced radius in [0.3, 0.9]; `None` sweeps the candidate list.
    pub radius: Option<f64>,
    /// Samples per circle; a power of two at least 4·N.
    pub samples: usize,
}

impl Default for CircleOptions {
    fn default() -> Self {
        CircleOptions {
            radius: None,
            samples: tol::CIRCLE_SAMPLES,
        }
    }
}

/// Pick a circle radius whose distance from every locus point's radius
/// clears the engine clearance. Candidates descend from 0.9 because
/// DFT noise on the coefficient of z^l grows like r^{-l}.
fn extraction_radius(engine: &Engine, requested: Option<f64>) -> Result<f64> {
    let locus = engine.locus();
    let clearance = engine.clearance();
    let radial_gap = |r: f64| {
        locus
            .points
            .iter()
            .map(|p| (p.norm() - r).abs())
            .fold(f64::INFINITY, f64::min)
    };
    if let Some(r) = requested {
        if !(0.3..=0.9).contains(&r) {
            return Err(Error::Config(format!(
                "extraction radius {r} outside [0.3, 0.9]"
            )));
        }
        let gap = radial_gap(r);
        if gap < clearance {
            return Err(Error::CircleRadiusSearch {
                best: gap,
                required: clearance,
            });
        }
        return Ok(r);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &r in tol::CIRCLE_RADII.iter() {
        let gap = radial_gap(r);
        if gap >= tol::CIRCLE_CLEARANCE_FACTOR * clearance {
            return Ok(r);
        }
        if gap > best.0 {
            best = (gap, r);
        }
    }
    if best.0 >= clearance {
        Ok(best.1)
    } else {
        Err(Error::CircleRadiusSearch {
            best: best.0,
            required: clearance,
        })
    }
}

fn validate_circle(n_basis: usize, samples: usize) -> Result<()> {
    if !samples.is_power_of_two() || samples < 4 * n_basis {
        return Err(Error::Config(format!(
            "circle sample count {samples} must be a power of two and at least 4N = {}",
            4 * n_basis
        )));
    }
    Ok(())
}

/// DFT the per-column sample buffers of one symbol sum into an N×N
/// matrix: entry (l, m) = √(m+1)/√(l+1) · X_l / (M·r^l) where X is the
/// forward DFT of column m's samples.
fn assemble_from_samples(
    mut buf: Vec<Complex64>,
    n_basis: usize,
    samples: usize,
    r: f64,
) -> Array2<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(samples);
    let inv_m = 1.0 / samples as f64;
    let r_scale: Vec<f64> = (0..n_basis).map(|l| r.powi(-(l as i32))).collect();
    let mut entries = Array2::from_elem((n_basis, n_basis), ZERO);
    for m in 0..n_basis {
        let col = &mut buf[m * samples..(m + 1) * samples];
        fft.process(col);
        let col_scale = ((m + 1) as f64).sqrt();
        for l in 0..n_basis {
            entries[[l, m]] = col[l] * (inv_m * r_scale[l] * col_scale / ((l + 1) as f64).sqrt());
        }
    }
    entries
}

/// All class-operator matrices 𝓔₁…𝓔_q in one sweep of the extraction
/// circle. For each sample z the labeled fiber contributes
/// ρ′(z)·ρ(z)^m to its branch's class accumulator, with
/// ρ′ = φ′(z)/φ′(ρ(z)); a full circle later the fiber must return to
/// the same classes or the build fails.
pub fn class_matrices(
    engine: &Engine,
    monodromy: &MonodromyData,
    n_basis: usize,
    opts: CircleOptions,
) -> Result<Vec<OperatorMatrix>> {
    validate_circle(n_basis, opts.samples)?;
    let r = extraction_radius(engine, opts.radius)?;
    let samples = opts.samples;
    let phi = engine.phi();
    let solver = FiberSolver::new(phi);
    let router = Router::new(&solver, engine.locus());
    let class_of = &monodromy.class_of;
    let q = monodromy.q;
    let nodes: Vec<Complex64> = (0..samples)
        .map(|s| Complex64::from_polar(r, TAU * s as f64 / samples as f64))
        .collect();
    let start = router.walk(engine.base_point(), engine.base_fiber(), nodes[0])?;
    let mut acc: Vec<Vec<Complex64>> = vec![vec![ZERO; n_basis * samples]; q];
    process_ring(
        &router,
        class_of,
        &nodes,
        0,
        &start,
        "extraction circle",
        |idx, z, fiber| {
            let dz = phi.derivative_eval(z);
            for (i, &w) in fiber.iter().enumerate() {
                let rho_d = dz / phi.derivative_eval(w);
                let buf = &mut acc[class_of[i]];
                let mut wp = rho_d;
                for m in 0..n_basis {
                    buf[m * samples + idx] += wp;
                    wp *= w;
                }
            }
        },
    )?;
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(k, buf)| OperatorMatrix {
            entries: assemble_from_samples(buf, n_basis, samples, r),
            label: format!("E_{}", k + 1),
            buffer: (phi.order() + tol::BUFFER_EXTRA).min(n_basis),
        })
        .collect())
}

/// Single class operator; `class` is zero-based.
pub fn ek_matrix(
    engine: &Engine,
    monodromy: &MonodromyData,
    class: usize,
    n_basis: usize,
    opts: CircleOptions,
) -> Result<OperatorMatrix> {
    if class >= monodromy.q {
        return Err(Error::Config(format!(
            "class index {class} out of range for q = {}",
            monodromy.q
        )));
    }
    Ok(class_matrices(engine, monodromy, n_basis, opts)?.swap_remove(class))
}

/// Matrix of the full fiber sum Σ_ρ ρ′·(f∘ρ) over every branch,
/// built from independent companion solves at each sample with no
/// labels and no continuation, as a cross-check target for
/// Σ_k 𝓔_k built from labeled walking.
pub fn full_fiber_matrix(
    engine: &Engine,
    n_basis: usize,
    opts: CircleOptions,
) -> Result<OperatorMatrix> {
    validate_circle(n_basis, opts.samples)?;
    let r = extraction_radius(engine, opts.radius)?;
    let samples = opts.samples;
    let phi = engine.phi();
    let solver = FiberSolver::new(phi);
    let mut buf = vec![ZERO; n_basis * samples];
    for idx in 0..samples {
        let z = Complex64::from_polar(r, TAU * idx as f64 / samples as f64);
        let roots = poly::roots(&solver.fiber_poly(phi.eval(z)))?;
        let dz = phi.derivative_eval(z);
        for &w in &roots {
            let rho_d = dz / phi.derivative_eval(w);
            let mut wp = rho_d;
            for m in 0..n_basis {
                buf[m * samples + idx] += wp;
                wp *= w;
            }
        }
    }
    Ok(OperatorMatrix {
        entries: assemble_from_samples(buf, n_basis, samples, r),
        label: "full_fiber_sum".to_string(),
        buffer: (phi.order() + tol::BUFFER_EXTRA).min(n_basis),
    })
}

// ---------------------------------------------------------------------------
// Reproducing kernel

/// Basis coefficients of the reproducing kernel k_α: entry m is
/// √(m+1)·conj(α)^m, so that ⟨f, k_α⟩ = f(α). Truncation is only
/// meaningful well inside the disk, hence the |α| ≤ 0.8 gate.
pub fn kernel_vector(alpha: Complex64, n_basis: usize) -> Result<Vec<Complex64>> {
    if alpha.norm() > 0.8 {
        return Err(Error::Config(format!(
            "kernel point |α| = {:.3} outside the supported radius 0.8",
            alpha.norm()
        )));
    }
    Ok(kernel_vector_raw(alpha, n_basis))
}

fn kernel_vector_raw(alpha: Complex64, n_basis: usize) -> Vec<Complex64> {
    let ac = alpha.conj();
    let mut out = Vec::with_capacity(n_basis);
    let mut p = ONE;
    for m in 0..n_basis {
        out.push(((m + 1) as f64).sqrt() * p);
        p *= ac;
    }
    out
}

/// ℓ² norm of the tail Σ_{l≥N}(m+1)·x^{2l} of a kernel vector:
/// Σ_{l≥N}(l+1)x^{2l} ≤ x^{2N}(N(1-x²)+1)/(1-x²)², returned as the
/// square root.
fn kernel_tail(x: f64, n_basis: usize) -> f64 {
    if x >= 1.0 {
        return f64::INFINITY;
    }
    let x2 = x * x;
    x.powi(n_basis as i32) * (n_basis as f64 * (1.0 - x2) + 1.0).sqrt() / (1.0 - x2)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelActionCheck {
    pub residual: f64,
    /// Analytic truncation bound plus the construction noise floor;
    /// the residual exceeding it marks a genuine fault.
    pub bound: f64,
}

/// Check 𝓔_k† k_α = Σ_{ρ∈G_k} conj(ρ′(α))·k_{ρ(α)} at the truncation:
/// the left side from the matrix, the right side from the continued
/// fiber at α (the sum over a class is the same for any continuation
/// path). Returns the ℓ² residual and its expected bound from the
/// basis tail at |α| and max|ρ(α)|.
pub fn kernel_action_residual(
    ek: &OperatorMatrix,
    engine: &Engine,
    monodromy: &MonodromyData,
    class: usize,
    alpha: Complex64,
) -> Result<KernelActionCheck> {
    let n_basis = ek.n();
    let v = kernel_vector(alpha, n_basis)?;
    let lhs = ek.adjoint_apply(&v);
    let phi = engine.phi();
    let solver = FiberSolver::new(phi);
    let router = Router::new(&solver, engine.locus());
    let fiber = router.walk(engine.base_point(), engine.base_fiber(), alpha)?;
    let d_alpha = phi.derivative_eval(alpha);
    let mut rhs = vec![ZERO; n_basis];
    let mut deriv_sum = 0.0;
    let mut max_image = alpha.norm();
    for &branch in &monodromy.orbits[class] {
        let w = fiber[branch];
        let rho_d = d_alpha / phi.derivative_eval(w);
        deriv_sum += rho_d.norm();
        max_image = max_image.max(w.norm());
        let kv = kernel_vector_raw(w, n_basis);
        let d = rho_d.conj();
        for (r, k) in rhs.iter_mut().zip(kv) {
            *r += d * k;
        }
    }
    let residual = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let n_k = monodromy.orbits[class].len() as f64;
    let bound = linalg::op_norm_2(ek.entries.view()) * kernel_tail(alpha.norm(), n_basis)
        + deriv_sum * kernel_tail(max_image, n_basis)
        + tol::KERNEL_NOISE_FLOOR * n_k * (n_basis as f64).sqrt();
    Ok(KernelActionCheck { residual, bound })
}

// ---------------------------------------------------------------------------
// Area identity

#[derive(Debug, Clone, Copy)]
pub struct AreaOptions {
    /// Gauss-Legendre nodes in radius² and angle for the coarse pass;
    /// the convergence pass doubles both.
    pub radial: usize,
    pub angular: usize,
}

impl Default for AreaOptions {
    fn default() -> Self {
        AreaOptions {
            radial: 128,
            angular: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AreaIdentity {
    pub class: usize,
    /// Branch count of the class; the identity says the integral
    /// equals this.
    pub n_k: usize,
    /// Value at the doubled grid.
    pub value: f64,
    pub coarse_value: f64,
    /// Whether doubling moved the value by at most the area tolerance.
    pub converged: bool,
    /// Bound on the mass omitted inside the exclusion radius around
    /// locus points.
    pub excluded_bound: f64,
}

/// One conforming polar patch around a branch-locus point. The filler
/// is a smooth stand-in for each class field inside the patch disc:
/// an angular Fourier series (mode j damped radially by (τ/δ)^j) whose
/// radial jet matches the true field at the disc edge to third order.
/// The global grid integrates the filler inside the disc; the patch
/// grid integrates field minus filler in (t, β) with τ = t^L, which
/// turns every Puiseux exponent of the local branch cycles into an
/// integer power of t.
struct Patch {
    center: Complex64,
    delta: f64,
    exponent: usize,
    /// Radius below which the patch grid stops walking: fiber labels
    /// are not resolvable closer to the point's own cluster. The mass
    /// left below it is bounded and reported, not integrated.
    tau_floor: f64,
    /// Per class, per mode 0..=FILLER_MODES: coefficients of the
    /// radial polynomial in x = τ - δ (already divided by the
    /// factorials), to be multiplied by (τ/δ)^j.
    filler: Vec<Vec<[Complex64; 4]>>,
}

impl Patch {
    fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.delta
    }

    /// Per-class, per-mode radial factors at one radius.
    fn radial_profile(&self, tau: f64) -> Vec<Complex64> {
        let x = tau - self.delta;
        let ratio = tau / self.delta;
        let q = self.filler.len();
        let mut out = vec![ZERO; q * (FILLER_MODES + 1)];
        let mut damp = 1.0f64;
        for j in 0..=FILLER_MODES {
            for (ci, modes) in self.filler.iter().enumerate() {
                let g = modes[j];
                let gv = ((g[3] * x + g[2]) * x + g[1]) * x + g[0];
                out[ci * (FILLER_MODES + 1) + j] = gv * damp;
            }
            damp *= ratio;
        }
        out
    }

    /// Filler values per class from a precomputed radial profile.
    fn eval_profile(&self, profile: &[Complex64], beta: f64, out: &mut [f64]) {
        let rot = Complex64::from_polar(1.0, beta);
        let mut phase = ONE;
        let q = self.filler.len();
        out.fill(0.0);
        for j in 0..=FILLER_MODES {
            let w = if j == 0 { 1.0 } else { 2.0 };
            for (ci, slot) in out.iter_mut().enumerate().take(q) {
                *slot += w * (profile[ci * (FILLER_MODES + 1) + j] * phase).re;
            }
            phase *= rot;
        }
    }

    fn eval_all(&self, z: Complex64, out: &mut [f64]) {
        let d = z - self.center;
        let profile = self.radial_profile(d.norm());
        self.eval_profile(&profile, d.arg(), out);
    }
}

/// Per-class values of the field Σ_{ρ∈class} |ρ′(z)|² from a labeled
/// fiber, using ρ′ = φ′(z)/φ′(ρ(z)).
fn field_values(
    phi: &BlaschkeProduct,
    class_of: &[usize],
    z: Complex64,
    fiber: &[Complex64],
    out: &mut [f64],
) {
    let dz2 = phi.derivative_eval(z).norm_sqr();
    out.fill(0.0);
    for (i, &w) in fiber.iter().enumerate() {
        out[class_of[i]] += dz2 / phi.derivative_eval(w).norm_sqr();
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Build the patch set: radius from the locus geometry, substitution
/// exponent from the lcm of multiplicities over the same critical
/// value (the fractional Puiseux exponents of every branch that
/// ramifies over that value have denominators dividing it), filler
/// jets fitted on four circles just outside each patch disc.
fn build_patches(
    engine: &Engine,
    monodromy: &MonodromyData,
    router: &Router,
) -> Result<Vec<Patch>> {
    let locus = engine.locus();
    if locus.points.is_empty() {
        return Ok(Vec::new());
    }
    let phi = engine.phi();
    let class_of = &monodromy.class_of;
    let q = monodromy.q;
    let min_sep = locus.min_separation();
    let values: Vec<Complex64> = locus.points.iter().map(|&f| phi.eval(f)).collect();
    let mut patches = Vec::with_capacity(locus.points.len());
    for (i, &f) in locus.points.iter().enumerate() {
        let mut exponent = 1usize;
        for (j, &v) in values.iter().enumerate() {
            if (v - values[i]).norm() < 1e-8 {
                exponent = lcm(exponent, locus.multiplicities[j]);
            }
        }
        if exponent > tol::PATCH_LCM_CAP {
            return Err(Error::Quadrature(format!(
                "patch substitution exponent {exponent} at locus point {f:.4} exceeds the cap {}",
                tol::PATCH_LCM_CAP
            )));
        }
        let delta = tol::PATCH_DELTA_MAX
            .min(tol::PATCH_SEP_FACTOR * min_sep)
            .min(tol::PATCH_BOUNDARY_FACTOR * (1.0 - tol::DISK_MARGIN - f.norm()));
        let floor = 100.0 * tol::AREA_EXCLUSION;
        if delta < floor {
            return Err(Error::Quadrature(format!(
                "locus geometry leaves no room for a singular patch at {f:.4} \
                 (radius {delta:.3e}, needs {floor:.3e})"
            )));
        }
        let own_mult = locus.multiplicities[i];
        let tau_floor = if own_mult >= 2 {
            tol::AREA_EXCLUSION.max(FLOOR_SAFETY * resolve_scale(own_mult))
        } else {
            tol::AREA_EXCLUSION
        };
        if tau_floor > 0.9 * delta {
            return Err(Error::Quadrature(format!(
                "patch at {f:.4} has no resolvable rings \
                 (walk floor {tau_floor:.3e} against radius {delta:.3e})"
            )));
        }
        // Class fields sampled on the four jet-fitting circles.
        let mut ring_samples: Vec<Vec<f64>> = Vec::with_capacity(FILLER_RADII.len());
        let mut prev: Option<(Complex64, Vec<Complex64>)> = None;
        for &rel in FILLER_RADII.iter() {
            let radius = rel * delta;
            let nodes: Vec<Complex64> = (0..FILLER_SAMPLES)
                .map(|s| f + Complex64::from_polar(radius, TAU * s as f64 / FILLER_SAMPLES as f64))
                .collect();
            let start = match &prev {
                None => router.walk(engine.base_point(), engine.base_fiber(), nodes[0])?,
                Some((z0, f0)) => router.walk(*z0, f0, nodes[0])?,
            };
            let mut samples = vec![0.0f64; q * FILLER_SAMPLES];
            let mut vals = vec![0.0f64; q];
            process_ring(
                router,
                class_of,
                &nodes,
                0,
                &start,
                "filler circle",
                |idx, z, fiber| {
                    field_values(phi, class_of, z, fiber, &mut vals);
                    for k in 0..q {
                        samples[k * FILLER_SAMPLES + idx] = vals[k];
                    }
                },
            )?;
            prev = Some((nodes[0], start));
            ring_samples.push(samples);
        }
        // Fourier modes per circle, then a cubic radial fit per mode.
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(FILLER_SAMPLES);
        let mut modes_per_ring: Vec<Vec<Complex64>> = Vec::with_capacity(FILLER_RADII.len());
        for samples in &ring_samples {
            let mut ring_modes = vec![ZERO; q * (FILLER_MODES + 1)];
            for k in 0..q {
                let mut buf: Vec<Complex64> = samples[k * FILLER_SAMPLES..(k + 1) * FILLER_SAMPLES]
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                fft.process(&mut buf);
                for j in 0..=FILLER_MODES {
                    ring_modes[k * (FILLER_MODES + 1) + j] = buf[j] / FILLER_SAMPLES as f64;
                }
            }
            modes_per_ring.push(ring_modes);
        }
        let xs: Vec<f64> = FILLER_RADII.iter().map(|rel| (rel - 1.0) * delta).collect();
        let mut filler = vec![vec![[ZERO; 4]; FILLER_MODES + 1]; q];
        for k in 0..q {
            for j in 0..=FILLER_MODES {
                let mut vmat = Array2::from_elem((4, 4), ZERO);
                let mut rhs = vec![ZERO; 4];
                for (row, &x) in xs.iter().enumerate() {
                    let mut p = 1.0;
                    for col in 0..4 {
                        vmat[[row, col]] = Complex64::new(p, 0.0);
                        p *= x;
                    }
                    rhs[row] = modes_per_ring[row][k * (FILLER_MODES + 1) + j];
                }
                let coef = linalg::solve(vmat, rhs)?;
                // Jet of the mode at the patch edge, then divide out
                // the harmonic damping (τ/δ)^j so the stored cubic is
                // in x = τ - δ.
                let (p0, p1, p2, p3) = (coef[0], coef[1], 2.0 * coef[2], 6.0 * coef[3]);
                let jf = j as f64;
                let b1 = jf / delta;
                let b2 = jf * (jf - 1.0) / (delta * delta);
                let b3 = jf * (jf - 1.0) * (jf - 2.0) / (delta * delta * delta);
                let g0 = p0;
                let g1 = p1 - b1 * g0;
                let g2 = p2 - b2 * g0 - 2.0 * b1 * g1;
                let g3 = p3 - b3 * g0 - 3.0 * b2 * g1 - 3.0 * b1 * g2;
                filler[k][j] = [g0, g1, g2 / 2.0, g3 / 6.0];
            }
        }
        patches.push(Patch {
            center: f,
            delta,
            exponent,
            tau_floor,
            filler,
        });
    }
    Ok(patches)
}

/// One full quadrature pass at the given grid: the global (u = s², θ)
/// tensor grid over the disk with filler values inside patch discs,
/// plus each patch's (t, β) grid integrating field minus filler.
/// Returns per-class totals and excluded-mass bounds.
fn area_pass(
    engine: &Engine,
    monodromy: &MonodromyData,
    router: &Router,
    patches: &[Patch],
    radial: usize,
    angular: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let phi = engine.phi();
    let class_of = &monodromy.class_of;
    let q = monodromy.q;
    let locus = engine.locus();
    let mut totals = vec![0.0f64; q];
    let mut excluded = vec![0.0f64; q];

    // Global grid. Rings are chained radially from a seed ring whose
    // radius stays clear of every locus radius; each ring is walked
    // around with per-ring class closure.
    let (unodes, uweights) = quad::gauss_legendre_on(radial, 0.0, 1.0);
    let (tnodes, tweights) = quad::gauss_legendre_on(angular, 0.0, TAU);
    let ring_r: Vec<f64> = unodes.iter().map(|&u| u.sqrt()).collect();
    let seed_ring = (0..radial)
        .filter(|&i| ring_r[i] <= 1.0 - tol::DISK_MARGIN - engine.clearance())
        .max_by(|&a, &b| {
            let gap = |i: usize| {
                locus
                    .points
                    .iter()
                    .map(|p| (p.norm() - ring_r[i]).abs())
                    .fold(f64::INFINITY, f64::min)
            };
            gap(a).total_cmp(&gap(b))
        })
        .ok_or_else(|| Error::Quadrature("no admissible seed ring".to_string()))?;
    let seed_angle = (0..angular)
        .max_by(|&a, &b| {
            let gap = |j: usize| {
                let z = Complex64::from_polar(ring_r[seed_ring], tnodes[j]);
                locus.distance_to(z)
            };
            gap(a).total_cmp(&gap(b))
        })
        .unwrap();
    let seed_fiber = router.walk(
        engine.base_point(),
        engine.base_fiber(),
        Complex64::from_polar(ring_r[seed_ring], tnodes[seed_angle]),
    )?;

    // A ring whose full circle lies inside one patch disc needs no
    // fiber at all (every node reads the filler profile), and walking
    // it would cross the unresolvable cluster zone; such rings form an
    // innermost block, so the inward chain stops above them.
    let ring_inside = |i: usize| {
        patches
            .iter()
            .any(|p| p.center.norm() + ring_r[i] < p.delta)
    };

    // Start fibers for every walked ring at the seed angle, chained
    // outward and inward from the seed ring.
    let mut ring_starts: Vec<Option<Vec<Complex64>>> = vec![None; radial];
    ring_starts[seed_ring] = Some(seed_fiber);
    for i in (0..seed_ring).rev() {
        if ring_inside(i) {
            break;
        }
        let from = Complex64::from_polar(ring_r[i + 1], tnodes[seed_angle]);
        let to = Complex64::from_polar(ring_r[i], tnodes[seed_angle]);
        let fiber = router.walk(from, ring_starts[i + 1].as_ref().unwrap(), to)?;
        ring_starts[i] = Some(fiber);
    }
    for i in seed_ring + 1..radial {
        let from = Complex64::from_polar(ring_r[i - 1], tnodes[seed_angle]);
        let to = Complex64::from_polar(ring_r[i], tnodes[seed_angle]);
        let fiber = router.walk(from, ring_starts[i - 1].as_ref().unwrap(), to)?;
        ring_starts[i] = Some(fiber);
    }

    let mut vals = vec![0.0f64; q];
    for i in 0..radial {
        let nodes: Vec<Complex64> = (0..angular)
            .map(|j| Complex64::from_polar(ring_r[i], tnodes[j]))
            .collect();
        let wu = uweights[i];
        if ring_starts[i].is_none() {
            for (idx, &z) in nodes.iter().enumerate() {
                let p = patches
                    .iter()
                    .find(|p| p.contains(z))
                    .expect("uncharted ring outside every patch");
                p.eval_all(z, &mut vals);
                let w = wu * tweights[idx] / TAU;
                for k in 0..q {
                    totals[k] += w * vals[k];
                }
            }
            continue;
        }
        process_ring(
            router,
            class_of,
            &nodes,
            seed_angle,
            ring_starts[i].as_ref().unwrap(),
            "area ring",
            |idx, z, fiber| {
                match patches.iter().find(|p| p.contains(z)) {
                    Some(p) => p.eval_all(z, &mut vals),
                    None => field_values(phi, class_of, z, fiber, &mut vals),
                }
                let w = wu * tweights[idx] / TAU;
                for k in 0..q {
                    totals[k] += w * vals[k];
                }
            },
        )?;
    }

    // Patch grids: field minus filler in (t, β) with τ = t^L, walked
    // ring by ring from the outside in, stopping at the exclusion
    // radius (the omitted mass is bounded from the innermost kept
    // ring).
    let nt = (radial / 4).max(16);
    let nb = (angular / 2).max(64);
    for patch in patches {
        let le = patch.exponent as f64;
        let t_max = patch.delta.powf(1.0 / le);
        let (t_nodes, t_weights) = quad::gauss_legendre_on(nt, 0.0, t_max);
        let (b_nodes, b_weights) = quad::gauss_legendre_on(nb, 0.0, TAU);
        let mut prev: Option<(Complex64, Vec<Complex64>)> = None;
        let mut last_ring_gmax = vec![0.0f64; q];
        let mut ring_gmax = vec![0.0f64; q];
        let mut skipped = false;
        let mut filler_vals = vec![0.0f64; q];
        for it in (0..nt).rev() {
            let t = t_nodes[it];
            let tau = t.powi(patch.exponent as i32);
            if tau < patch.tau_floor {
                skipped = true;
                break;
            }
            let nodes: Vec<Complex64> = (0..nb)
                .map(|j| patch.center + Complex64::from_polar(tau, b_nodes[j]))
                .collect();
            let start = match &prev {
                None => router.walk(engine.base_point(), engine.base_fiber(), nodes[0])?,
                Some((z0, f0)) => router.walk(*z0, f0, nodes[0])?,
            };
            let profile = patch.radial_profile(tau);
            let jac = le * t.powi(2 * patch.exponent as i32 - 1) / PI;
            ring_gmax.fill(0.0);
            process_ring(
                router,
                class_of,
                &nodes,
                0,
                &start,
                "patch ring",
                |idx, z, fiber| {
                    field_values(phi, class_of, z, fiber, &mut vals);
                    patch.eval_profile(&profile, b_nodes[idx], &mut filler_vals);
                    let w = t_weights[it] * b_weights[idx] * jac;
                    for k in 0..q {
                        let g = vals[k] - filler_vals[k];
                        totals[k] += w * g;
                        ring_gmax[k] = ring_gmax[k].max(tau * g.abs());
                    }
                },
            )?;
            last_ring_gmax.copy_from_slice(&ring_gmax);
            prev = Some((nodes[0], start));
        }
        if skipped {
            // The integrand below the walk floor is at worst ~ Â/τ
            // (its mass ≈ 2·Â·floor) with Â read off the innermost
            // kept ring; doubled for headroom.
            for k in 0..q {
                excluded[k] += 4.0 * last_ring_gmax[k] * patch.tau_floor;
            }
        }
    }
    Ok((totals, excluded))
}

/// Evaluate Σ_{ρ∈G_k} ∫|ρ′|² dA/π for every class at the configured
/// grid and at its doubling; the identity says class k integrates to
/// its branch count.
pub fn area_identities(
    engine: &Engine,
    monodromy: &MonodromyData,
    opts: AreaOptions,
) -> Result<Vec<AreaIdentity>> {
    if opts.radial < 16 || opts.angular < 32 {
        return Err(Error::Config(format!(
            "area grid {}x{} below the minimum 16x32",
            opts.radial, opts.angular
        )));
    }
    let solver = FiberSolver::new(engine.phi());
    let router = Router::new(&solver, engine.locus());
    let patches = build_patches(engine, monodromy, &router)?;
    let (coarse, _) = area_pass(engine, monodromy, &router, &patches, opts.radial, opts.angular)?;
    let (fine, excluded) = area_pass(
        engine,
        monodromy,
        &router,
        &patches,
        2 * opts.radial,
        2 * opts.angular,
    )?;
    Ok((0..monodromy.q)
        .map(|k| AreaIdentity {
            class: k,
            n_k: monodromy.orbits[k].len(),
            value: fine[k],
            coarse_value: coarse[k],
            converged: (fine[k] - coarse[k]).abs() <= tol::AREA_TOL,
            excluded_bound: excluded[k],
        })
        .collect())
}
