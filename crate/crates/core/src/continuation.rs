//! Analytic continuation of the n local inverses ρ_i along paths in
//! 𝔻∖F: clearance-respecting piecewise line/arc paths, an adaptive
//! Euler-predictor Newton-corrector fiber tracker, and the Engine that
//! owns a labeled base fiber and transports it on demand.

use crate::blaschke::{BlaschkeProduct, BranchLocus};
use crate::c64;
use crate::error::{Error, Result};
use crate::perm::Perm;
use crate::tolerances as tol;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::RwLock;

/// One path piece: a straight segment or a circular arc. Arc angles are
/// in radians; `theta1 > theta0` means counterclockwise traversal, and
/// spans up to a full turn are allowed.
#[derive(Debug, Clone, Serialize)]
pub enum Segment {
    Line {
        #[serde(with = "crate::c64::pair")]
        from: Complex64,
        #[serde(with = "crate::c64::pair")]
        to: Complex64,
    },
    Arc {
        #[serde(with = "crate::c64::pair")]
        center: Complex64,
        radius: f64,
        theta0: f64,
        theta1: f64,
    },
}

impl Segment {
    pub fn start(&self) -> Complex64 {
        match *self {
            Segment::Line { from, .. } => from,
            Segment::Arc {
                center,
                radius,
                theta0,
                ..
            } => center + Complex64::from_polar(radius, theta0),
        }
    }

    pub fn end(&self) -> Complex64 {
        match *self {
            Segment::Line { to, .. } => to,
            Segment::Arc {
                center,
                radius,
                theta1,
                ..
            } => center + Complex64::from_polar(radius, theta1),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc {
                radius,
                theta0,
                theta1,
                ..
            } => radius * (theta1 - theta0).abs(),
        }
    }

    /// Point at local parameter s ∈ [0, 1].
    pub fn at(&self, s: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => from + s * (to - from),
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => center + Complex64::from_polar(radius, theta0 + s * (theta1 - theta0)),
        }
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: to, to: from },
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => Segment::Arc {
                center,
                radius,
                theta0: theta1,
                theta1: theta0,
            },
        }
    }

    /// Minimum distance from p to this segment.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        match *self {
            Segment::Line { from, to } => {
                let u = to - from;
                let len2 = u.norm_sqr();
                if len2 == 0.0 {
                    return (p - from).norm();
                }
                let t = ((p - from).conj() * u).re / len2;
                let t = t.clamp(0.0, 1.0);
                (p - (from + t * u)).norm()
            }
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let d = p - center;
                let psi = d.im.atan2(d.re);
                if angle_in_span(psi, theta0, theta1) {
                    (d.norm() - radius).abs()
                } else {
                    (p - self.start()).norm().min((p - self.end()).norm())
                }
            }
        }
    }

    /// Maximum modulus along the segment.
    pub fn max_modulus(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => from.norm().max(to.norm()),
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let ends = self.start().norm().max(self.end().norm());
                // the far point of the circle sits at angle arg(center)
                let psi = center.im.atan2(center.re);
                if center.norm() > 0.0 && angle_in_span(psi, theta0, theta1) {
                    ends.max(center.norm() + radius)
                } else if center.norm() == 0.0 {
                    radius
                } else {
                    ends
                }
            }
        }
    }
}

/// Is angle ψ inside the (directed) arc span [θ0, θ1]?
fn angle_in_span(psi: f64, theta0: f64, theta1: f64) -> bool {
    let delta = theta1 - theta0;
    if delta >= 0.0 {
        let off = (psi - theta0).rem_euclid(TAU);
        off <= delta
    } else {
        let off = (theta0 - psi).rem_euclid(TAU);
        off <= -delta
    }
}

/// A piecewise path with arclength-proportional global parameter
/// t ∈ [0, 1].
#[derive(Debug, Clone, Serialize)]
pub struct Path {
    segments: Vec<Segment>,
    cumulative: Vec<f64>,
    total: f64,
}

impl Path {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("empty path".into()));
        }
        for w in segments.windows(2) {
            if (w[0].end() - w[1].start()).norm() > 1e-12 {
                return Err(Error::Config(format!(
                    "path is discontinuous: segment ends at {} but the next starts at {}",
                    w[0].end(),
                    w[1].start()
                )));
            }
        }
        let mut cumulative = Vec::with_capacity(segments.len());
        let mut total = 0.0;
        for s in &segments {
            total += s.length();
            cumulative.push(total);
        }
        Ok(Self {
            segments,
            cumulative,
            total,
        })
    }

    pub fn line(from: Complex64, to: Complex64) -> Result<Self> {
        Self::new(vec![Segment::Line { from, to }])
    }

    /// Full counterclockwise circle starting (and ending) at angle θ0.
    pub fn circle(center: Complex64, radius: f64, theta0: f64) -> Result<Self> {
        Self::new(vec![Segment::Arc {
            center,
            radius,
            theta0,
            theta1: theta0 + TAU,
        }])
    }

    /// Lasso at `p`: straight approach from z0 to the circle of radius r
    /// around p, one counterclockwise turn, and the reverse approach.
    pub fn lasso(z0: Complex64, p: Complex64, r: f64) -> Result<Self> {
        let dir = (z0 - p) / (z0 - p).norm();
        let a = p + r * dir;
        let theta0 = dir.im.atan2(dir.re);
        Self::new(vec![
            Segment::Line { from: z0, to: a },
            Segment::Arc {
                center: p,
                radius: r,
                theta0,
                theta1: theta0 + TAU,
            },
            Segment::Line { from: a, to: z0 },
        ])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> Complex64 {
        self.segments[0].start()
    }

    pub fn end(&self) -> Complex64 {
        self.segments.last().unwrap().end()
    }

    pub fn total_length(&self) -> f64 {
        self.total
    }

    pub fn is_closed(&self) -> bool {
        (self.start() - self.end()).norm() < 1e-12
    }

    /// Point at global parameter t ∈ [0, 1], arclength-proportional.
    pub fn at(&self, t: f64) -> Complex64 {
        let t = t.clamp(0.0, 1.0);
        if self.total == 0.0 {
            return self.start();
        }
        let target = t * self.total;
        let idx = self
            .cumulative
            .partition_point(|&c| c < target)
            .min(self.segments.len() - 1);
        let seg_start = if idx == 0 { 0.0 } else { self.cumulative[idx - 1] };
        let seg_len = self.segments[idx].length();
        let s = if seg_len == 0.0 {
            0.0
        } else {
            ((target - seg_start) / seg_len).clamp(0.0, 1.0)
        };
        self.segments[idx].at(s)
    }

    pub fn reversed(&self) -> Self {
        let segments: Vec<Segment> = self.segments.iter().rev().map(Segment::reversed).collect();
        Self::new(segments).expect("reversal preserves continuity")
    }

    /// self followed by other; endpoints must meet.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Self::new(segments)
    }

    /// Checks the clearance tube around the branch locus and the disk
    /// margin over every segment.
    pub fn validate(&self, locus: &BranchLocus, clearance: f64) -> Result<()> {
        for seg in &self.segments {
            let m = seg.max_modulus();
            if m > 1.0 - tol::DISK_MARGIN {
                return Err(Error::ClearanceViolation {
                    witness: seg.end(),
                    clearance: tol::DISK_MARGIN,
                });
            }
            for &f in &locus.points {
                let d = seg.distance_to(f);
                if d < clearance * (1.0 - 1e-9) {
                    return Err(Error::ClearanceViolation {
                        witness: f,
                        clearance,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Values of one local inverse at a point: ρ_i(z) and ρ_i′(z).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalInverseValue {
    #[serde(with = "crate::c64::pair")]
    pub value: Complex64,
    #[serde(with = "crate::c64::pair")]
    pub derivative: Complex64,
}

/// One accepted tracker step, for diagnostics.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub step: f64,
    pub fiber: Vec<Complex64>,
}

/// Result of tracking a whole fiber along a path.
#[derive(Debug, Clone)]
pub struct FiberTrack {
    pub base_point: Complex64,
    pub base_fiber: Vec<Complex64>,
    pub path: Path,
    pub end_fiber: Vec<Complex64>,
    /// For closed paths: σ with end_fiber[i] = base_fiber[σ(i)].
    pub permutation: Option<Perm>,
    pub trace: Vec<TraceRow>,
}

impl FiberTrack {
    /// Diagnostic dump: one row per accepted step.
    pub fn trace_csv(&self) -> String {
        let n = self.base_fiber.len();
        let mut out = String::from("t,step");
        for i in 0..n {
            out.push_str(&format!(",w{i}_re,w{i}_im"));
        }
        out.push('\n');
        for row in &self.trace {
            out.push_str(&format!("{:.12},{:.3e}", row.t, row.step));
            for w in &row.fiber {
                out.push_str(&format!(",{:.17},{:.17}", w.re, w.im));
            }
            out.push('\n');
        }
        out
    }
}

fn key_of(z: Complex64) -> u128 {
    ((z.re.to_bits() as u128) << 64) | z.im.to_bits() as u128
}

/// Continuation engine: owns φ, its branch locus, a deterministic base
/// point with labeled fiber (branch 0 = the base point itself, branches
/// 1..n−1 lexicographic), and a cache of transported fibers.
pub struct Engine {
    phi: BlaschkeProduct,
    locus: BranchLocus,
    clearance: f64,
    base_point: Complex64,
    base_fiber: Vec<Complex64>,
    cache: RwLock<HashMap<u128, Vec<Complex64>>>,
}

/// Radius around an m-fold locus point inside which tracking is
/// hopeless: the corrector's derivative guard fires once
/// |φ′| ≈ c·d^{m-1} drops toward CRITICAL_DERIVATIVE on the branches
/// colliding there. The local scale c is read off probes one
/// hundredth away from the point.
fn guard_radius(phi: &BlaschkeProduct, p: Complex64, mult: usize) -> f64 {
    if mult < 2 {
        return 0.0;
    }
    let h = 1e-2;
    let mut dmin = f64::INFINITY;
    for k in 0..4 {
        let probe = p + Complex64::from_polar(h, 0.3 + PI * 0.5 * k as f64);
        dmin = dmin.min(phi.derivative_eval(probe).norm());
    }
    let c = dmin / h.powi(mult as i32 - 1);
    if !c.is_finite() || c <= 0.0 {
        return 0.0;
    }
    1.3 * (20.0 * tol::CRITICAL_DERIVATIVE / c).powf(1.0 / (mult as f64 - 1.0))
}

/// The working clearance: loops, routes, and detour arcs all keep at
/// least two clearances from every locus point, so half the widest
/// guard radius is the smallest margin the tracker can survive. Only
/// points of valency five and up widen the default.
fn widen_clearance(phi: &BlaschkeProduct, locus: &BranchLocus, clearance: f64) -> f64 {
    locus
        .points
        .iter()
        .zip(&locus.multiplicities)
        .map(|(&p, &m)| 0.5 * guard_radius(phi, p, m))
        .fold(clearance, f64::max)
}

impl Engine {
    pub fn new(phi: BlaschkeProduct, clearance: f64) -> Result<Self> {
        let locus = phi.branch_locus()?;
        let clearance = widen_clearance(&phi, &locus, clearance);
        let base_point = choose_base_point(&phi, &locus, clearance)?;
        Self::assemble(phi, locus, clearance, base_point)
    }

    /// Engine pinned to a caller-chosen base point (used by the
    /// base-point independence checks).
    pub fn with_base_point(
        phi: BlaschkeProduct,
        clearance: f64,
        base_point: Complex64,
    ) -> Result<Self> {
        let locus = phi.branch_locus()?;
        let clearance = widen_clearance(&phi, &locus, clearance);
        let d = locus.distance_to(base_point);
        if d < tol::BASE_POINT_FACTOR * clearance {
            return Err(Error::BasePointSearch {
                best: d,
                required: tol::BASE_POINT_FACTOR * clearance,
            });
        }
        Self::assemble(phi, locus, clearance, base_point)
    }

    fn assemble(
        phi: BlaschkeProduct,
        locus: BranchLocus,
        clearance: f64,
        base_point: Complex64,
    ) -> Result<Self> {
        let sorted = phi.fiber(base_point)?;
        let mut base_fiber = Vec::with_capacity(sorted.len());
        base_fiber.push(base_point);
        base_fiber.extend(sorted.into_iter().filter(|&w| w != base_point));
        if base_fiber.len() != phi.order() {
            return Err(Error::RootFinder(
                "base fiber does not contain the base point exactly once".into(),
            ));
        }
        Ok(Self {
            phi,
            locus,
            clearance,
            base_point,
            base_fiber,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn phi(&self) -> &BlaschkeProduct {
        &self.phi
    }

    pub fn locus(&self) -> &BranchLocus {
        &self.locus
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn base_point(&self) -> Complex64 {
        self.base_point
    }

    pub fn base_fiber(&self) -> &[Complex64] {
        &self.base_fiber
    }

    pub fn order(&self) -> usize {
        self.phi.order()
    }

    /// Tracks `start_fiber` along `path` with the adaptive
    /// predictor-corrector. The path is validated first.
    pub fn track(&self, path: &Path, start_fiber: &[Complex64]) -> Result<FiberTrack> {
        path.validate(&self.locus, self.clearance)?;
        let n = start_fiber.len();
        assert_eq!(n, self.phi.order(), "start fiber has wrong size");
        let y0 = self.phi.eval(path.start());
        for &w in start_fiber {
            if (self.phi.eval(w) - y0).norm() > tol::FIBER_RESIDUAL {
                return Err(Error::TrackingFailure {
                    t: 0.0,
                    step: 0.0,
                    reason: "start fiber does not lie over the path start".into(),
                });
            }
        }

        let mut fiber: Vec<Complex64> = start_fiber.to_vec();
        let mut trace = vec![TraceRow {
            t: 0.0,
            step: 0.0,
            fiber: fiber.clone(),
        }];
        // steps never cross segment boundaries: a lasso's small circle
        // must be resolved even though it is a sliver of the total
        // arclength, so the adaptive parameter is per segment
        let mut len_before = 0.0;
        for seg in path.segments() {
            self.track_segment(seg, &mut fiber, &mut trace, len_before, path.total_length())?;
            len_before += seg.length();
        }

        // snap to an exact fiber at the endpoint
        let end_point = path.end();
        let exact = self.phi.fiber(end_point)?;
        let mut end_fiber = Vec::with_capacity(n);
        let mut used = vec![false; n];
        for (i, &w) in fiber.iter().enumerate() {
            let (idx, d1, d2) = c64::nearest(&exact, w);
            if d1 > tol::END_MATCH {
                return Err(Error::TrackingFailure {
                    t: 1.0,
                    step: 0.0,
                    reason: format!("tracked branch {i} is {d1:.3e} from every exact root"),
                });
            }
            if d1 > 0.0 && d2 < tol::MATCH_MARGIN * d1 {
                return Err(Error::MatchingAmbiguity {
                    t: 1.0,
                    margin: d2 / d1,
                    required: tol::MATCH_MARGIN,
                });
            }
            if used[idx] {
                return Err(Error::MatchingAmbiguity {
                    t: 1.0,
                    margin: 0.0,
                    required: tol::MATCH_MARGIN,
                });
            }
            used[idx] = true;
            end_fiber.push(exact[idx]);
        }

        let permutation = if path.is_closed() {
            let mut sigma = Vec::with_capacity(n);
            for (i, &w) in end_fiber.iter().enumerate() {
                let (idx, d1, _) = c64::nearest(start_fiber, w);
                if d1 > tol::END_MATCH {
                    return Err(Error::TrackingFailure {
                        t: 1.0,
                        step: 0.0,
                        reason: format!(
                            "closed-path end fiber entry {i} is {d1:.3e} from the base fiber"
                        ),
                    });
                }
                sigma.push(idx);
            }
            Some(Perm::new(sigma).map_err(|_| Error::MatchingAmbiguity {
                t: 1.0,
                margin: 0.0,
                required: tol::MATCH_MARGIN,
            })?)
        } else {
            None
        };

        Ok(FiberTrack {
            base_point: path.start(),
            base_fiber: start_fiber.to_vec(),
            path: path.clone(),
            end_fiber,
            permutation,
            trace,
        })
    }

    /// Adaptive predictor-corrector sweep over one segment.
    fn track_segment(
        &self,
        seg: &Segment,
        fiber: &mut Vec<Complex64>,
        trace: &mut Vec<TraceRow>,
        len_before: f64,
        total_len: f64,
    ) -> Result<()> {
        let seg_len = seg.length();
        if seg_len == 0.0 {
            return Ok(());
        }
        let global_t = |s: f64| (len_before + s * seg_len) / total_len;
        let mut s = 0.0f64;
        let mut h = 0.01f64.min(tol::STEP_MAX);
        let mut easy_streak = 0usize;
        while s < 1.0 {
            let h_eff = h.min(1.0 - s);
            let z_old = seg.at(s);
            let z_new = seg.at(s + h_eff);
            match self.step_fiber(fiber, z_old, z_new) {
                Ok(new_fiber) => {
                    s += h_eff;
                    *fiber = new_fiber;
                    trace.push(TraceRow {
                        t: global_t(s),
                        step: h_eff,
                        fiber: fiber.clone(),
                    });
                    easy_streak += 1;
                    if easy_streak >= tol::STEP_EASY_STREAK {
                        h = (h * 2.0).min(tol::STEP_MAX);
                        easy_streak = 0;
                    }
                }
                Err(reason) => {
                    easy_streak = 0;
                    h *= 0.5;
                    if h < tol::STEP_MIN {
                        return Err(Error::TrackingFailure {
                            t: global_t(s),
                            step: h,
                            reason,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// One predictor-corrector step of the whole fiber from z_old to
    /// z_new. Returns a plain-String reason on failure so the caller
    /// can halve the step.
    fn step_fiber(
        &self,
        fiber: &[Complex64],
        z_old: Complex64,
        z_new: Complex64,
    ) -> std::result::Result<Vec<Complex64>, String> {
        let n = fiber.len();
        let dz = z_new - z_old;
        let (_, dphi_old) = self.phi.eval_both(z_old);
        let (y_new, _) = self.phi.eval_both(z_new);
        let min_sep = c64::min_pairwise_distance(fiber);
        let move_cap = if n > 1 { min_sep / 4.0 } else { f64::INFINITY };

        let mut out = Vec::with_capacity(n);
        for &w0 in fiber {
            // Euler predictor along dw/dz = φ′(z)/φ′(w)
            let (_, dphi_w) = self.phi.eval_both(w0);
            if dphi_w.norm() < tol::CRITICAL_DERIVATIVE {
                return Err(format!("branch derivative vanished near w = {w0}"));
            }
            let mut w = w0 + dphi_old / dphi_w * dz;
            // Newton corrector on φ(w) = φ(z_new)
            let mut converged = false;
            for _ in 0..tol::NEWTON_MAX_ITERS {
                let (val, der) = self.phi.eval_both(w);
                let g = val - y_new;
                if g.norm() <= tol::NEWTON_TOL {
                    converged = true;
                    break;
                }
                if der.norm() < tol::CRITICAL_DERIVATIVE {
                    return Err(format!("Newton derivative vanished near w = {w}"));
                }
                w -= g / der;
                if w.norm() > 1.0 {
                    return Err(format!("corrector left the disk at w = {w}"));
                }
            }
            if !converged {
                let (val, _) = self.phi.eval_both(w);
                // accept late convergence discovered on the last update
                if (val - y_new).norm() > tol::NEWTON_TOL {
                    return Err("Newton corrector did not converge".into());
                }
            }
            if (w - w0).norm() > move_cap {
                return Err("step moved a branch more than a quarter of the fiber separation".into());
            }
            out.push(w);
        }

        // each new point must unambiguously belong to its own old point
        for (i, &w) in out.iter().enumerate() {
            let d_self = (w - fiber[i]).norm();
            let mut d_other = f64::INFINITY;
            for (j, &v) in fiber.iter().enumerate() {
                if j != i {
                    d_other = d_other.min((w - v).norm());
                }
            }
            if n > 1 && d_other < tol::MATCH_MARGIN * d_self {
                return Err(format!(
                    "matching margin {:.3} below {} for branch {i}",
                    d_other / d_self,
                    tol::MATCH_MARGIN
                ));
            }
        }
        Ok(out)
    }

    /// Straight segment from `from` to `to`, with counterclockwise
    /// detour arcs spliced in wherever the segment enters the clearance
    /// tube of a locus point.
    pub fn straight_with_detours(&self, from: Complex64, to: Complex64) -> Result<Path> {
        let u = to - from;
        let len = u.norm();
        if len < 1e-15 {
            return Err(Error::Config("degenerate transport path".into()));
        }
        // collect detour intervals per offending locus point
        let mut detours: Vec<(f64, f64, Complex64, f64)> = Vec::new(); // (t_in, t_out, p, radius)
        for &p in &self.locus.points {
            let seg = Segment::Line { from, to };
            if seg.distance_to(p) >= self.clearance {
                continue;
            }
            let r_p = (2.0 * self.clearance).min(0.98 * (from - p).norm().min((to - p).norm()));
            if r_p < self.clearance {
                return Err(Error::ClearanceViolation {
                    witness: p,
                    clearance: self.clearance,
                });
            }
            // intersections of the segment with |z − p| = r_p
            let v = from - p;
            let b = (u.conj() * v).re / len.powi(2);
            let cterm = (v.norm_sqr() - r_p * r_p) / len.powi(2);
            let disc = b * b - cterm;
            if disc <= 0.0 {
                // tube grazing without entering the detour ball; the
                // segment clears r_p ≥ clearance, so nothing to do
                continue;
            }
            let root = disc.sqrt();
            let t_in = -b - root;
            let t_out = -b + root;
            if t_out <= 0.0 || t_in >= 1.0 {
                continue;
            }
            detours.push((t_in, t_out, p, r_p));
        }
        if detours.is_empty() {
            return Path::line(from, to);
        }
        detours.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in detours.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::ClearanceViolation {
                    witness: w[1].2,
                    clearance: self.clearance,
                });
            }
        }

        let mut segments = Vec::new();
        let mut cursor = from;
        for &(t_in, t_out, p, r_p) in &detours {
            let z_in = from + t_in * u;
            let z_out = from + t_out * u;
            if (z_in - cursor).norm() > 1e-13 {
                segments.push(Segment::Line {
                    from: cursor,
                    to: z_in,
                });
            }
            let th_in = (z_in - p).im.atan2((z_in - p).re);
            let mut th_out = (z_out - p).im.atan2((z_out - p).re);
            if th_out < th_in {
                th_out += TAU;
            }
            segments.push(Segment::Arc {
                center: p,
                radius: r_p,
                theta0: th_in,
                theta1: th_out,
            });
            cursor = z_out;
        }
        if (to - cursor).norm() > 1e-13 {
            segments.push(Segment::Line { from: cursor, to });
        }
        Path::new(segments)
    }

    /// The labeled fiber at `target`, transported from the base point
    /// (entry i = ρ_i(target)). Cached per target.
    pub fn transport(&self, target: Complex64) -> Result<Vec<Complex64>> {
        if target == self.base_point {
            return Ok(self.base_fiber.clone());
        }
        let key = key_of(target);
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let path = self.straight_with_detours(self.base_point, target)?;
        let track = self.track(&path, &self.base_fiber)?;
        let fiber = track.end_fiber;
        self.cache.write().unwrap().insert(key, fiber.clone());
        Ok(fiber)
    }

    /// ρ_i(z) and its derivative by the chain rule
    /// ρ_i′(z) = φ′(z)/φ′(ρ_i(z)).
    pub fn local_inverse(&self, branch: usize, z: Complex64) -> Result<LocalInverseValue> {
        let fiber = self.transport(z)?;
        let value = fiber[branch];
        let dz = self.phi.derivative_eval(z);
        let dw = self.phi.derivative_eval(value);
        if dw.norm() < tol::CRITICAL_DERIVATIVE {
            return Err(Error::NearBranchPoint {
                z,
                separation: dw.norm(),
            });
        }
        Ok(LocalInverseValue {
            value,
            derivative: dz / dw,
        })
    }

    /// Permutation of a closed loop based at the engine's base point:
    /// σ with end_fiber[i] = base_fiber[σ(i)].
    pub fn permutation_of_loop(&self, path: &Path) -> Result<Perm> {
        if (path.start() - self.base_point).norm() > 1e-12 || !path.is_closed() {
            return Err(Error::Config(
                "loop must start and end at the engine base point".into(),
            ));
        }
        let track = self.track(path, &self.base_fiber)?;
        let sigma = track.permutation.expect("closed path yields a permutation");
        if sigma.apply(0) != 0 {
            return Err(Error::CompositionTable(
                "identity branch did not return to itself around a loop".into(),
            ));
        }
        Ok(sigma)
    }
}

/// Deterministic base point: 64 candidates on the |z| = 0.5 ring, pick
/// the first candidate maximizing distance to the locus (strictly
/// greater comparison), require 10× clearance, and require a separated
/// fiber there.
pub fn choose_base_point(
    phi: &BlaschkeProduct,
    locus: &BranchLocus,
    clearance: f64,
) -> Result<Complex64> {
    let mut candidates: Vec<(Complex64, f64)> = (0..64)
        .map(|k| {
            let z = Complex64::from_polar(0.5, TAU * k as f64 / 64.0);
            (z, locus.distance_to(z))
        })
        .collect();
    // stable sort: ties keep grid order, so the first maximizer wins
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let required = tol::BASE_POINT_FACTOR * clearance;
    let best = candidates[0].1;
    if best < required {
        return Err(Error::BasePointSearch { best, required });
    }
    for &(z, d) in &candidates {
        if d < required {
            break;
        }
        if phi.fiber(z).is_ok() {
            return Ok(z);
        }
    }
    Err(Error::BasePointSearch { best, required })
}
