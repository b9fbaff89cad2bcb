//! Monodromy of the branched cover φ: loop generators around the branch
//! locus, the orbit partition of the local inverses (q classes), the
//! branch composition table, inverse classes, and the subgroup of
//! branches that extend to disk automorphisms, in elliptic normal form.

use crate::blaschke::DiskAutomorphism;
use crate::c64::{self, c64, DetRng};
use crate::continuation::{Engine, Path, Segment};
use crate::error::{Error, Result};
use crate::perm::{self, Perm};
use crate::tolerances as tol;
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

/// Branch composition table: `table[i][k]` is the label j with
/// ρ_k∘ρ_i = ρ_j near the base point. Branch labels are zero-based and
/// branch 0 is the identity, so row 0 and column 0 are the identity row
/// and column.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct CompositionTable {
    pub table: Vec<Vec<usize>>,
}

impl CompositionTable {
    pub fn n(&self) -> usize {
        self.table.len()
    }

    /// Label of ρ_k∘ρ_i.
    pub fn compose_labels(&self, i: usize, k: usize) -> usize {
        self.table[i][k]
    }

    /// The unique k with ρ_k∘ρ_j = ρ_0. Valid only after `validate`.
    pub fn inverse_branch(&self, j: usize) -> usize {
        self.table[j]
            .iter()
            .position(|&v| v == 0)
            .expect("validated table row has an inverse entry")
    }

    /// Rows and columns must be permutations, row 0 the identity, and
    /// the induced label composition associative.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for (i, row) in self.table.iter().enumerate() {
            Perm::new(row.clone()).map_err(|_| {
                Error::CompositionTable(format!("row {i} is not a permutation: {row:?}"))
            })?;
        }
        for k in 0..n {
            let col: Vec<usize> = (0..n).map(|i| self.table[i][k]).collect();
            Perm::new(col.clone()).map_err(|_| {
                Error::CompositionTable(format!("column {k} is not a permutation: {col:?}"))
            })?;
        }
        if (0..n).any(|k| self.table[0][k] != k) {
            return Err(Error::CompositionTable(
                "row 0 is not the identity".into(),
            ));
        }
        // (ρ_l∘ρ_k)∘ρ_i = ρ_l∘(ρ_k∘ρ_i) on labels, exhaustively
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if self.table[self.table[i][k]][l] != self.table[i][self.table[k][l]] {
                        return Err(Error::CompositionTable(format!(
                            "label composition is not associative at ({i}, {k}, {l})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Branches living in singleton orbits extend to automorphisms of the
/// disk and form a finite cyclic group: each member is
/// φ_α(λᵏ·φ_α(z)) for the common fixed point α and a primitive n_G-th
/// root of unity λ. `alpha` and `lambda` are None when the group is
/// trivial (only the identity branch).
#[derive(Debug, Clone, Serialize)]
pub struct AutomorphismGroup {
    pub member_indices: Vec<usize>,
    pub members: Vec<DiskAutomorphism>,
    #[serde(with = "crate::c64::pair_opt")]
    pub alpha: Option<Complex64>,
    #[serde(with = "crate::c64::pair_opt")]
    pub lambda: Option<Complex64>,
    pub n_g: usize,
    pub max_fit_residual: f64,
}

/// Everything the rest of the library needs to know about the covering:
/// generators, the orbit partition (q classes), the composition table,
/// inverse classes, and the automorphism subgroup.
#[derive(Debug, Clone, Serialize)]
pub struct MonodromyData {
    #[serde(with = "crate::c64::pair")]
    pub base_point: Complex64,
    pub generators: Vec<Perm>,
    pub group_order: usize,
    #[serde(skip)]
    pub group_elements: Vec<Perm>,
    pub orbits: Vec<Vec<usize>>,
    pub q: usize,
    pub class_of: Vec<usize>,
    pub table: CompositionTable,
    pub inverse_classes: Vec<usize>,
    pub automorphisms: AutomorphismGroup,
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// A lasso around the locus point p: detour-aware approach from the base
/// point, a full counterclockwise circle of radius r, and the approach
/// reversed. Deterministic by construction.
fn lasso_path(engine: &Engine, p: Complex64, r: f64) -> Result<Path> {
    let z0 = engine.base_point();
    let dir = (z0 - p) / (z0 - p).norm();
    let a = p + r * dir;
    let approach = engine.straight_with_detours(z0, a)?;
    let circle = Path::circle(p, r, (a - p).arg())?;
    approach.concat(&circle)?.concat(&approach.reversed())
}

/// One permutation per locus point, in locus order. The circle radius is
/// min(2·clearance, half the distance to the nearest other locus point)
/// and must itself respect the clearance.
pub fn monodromy_generators(engine: &Engine) -> Result<Vec<Perm>> {
    let locus = engine.locus().clone();
    let clearance = engine.clearance();
    let mut generators = Vec::with_capacity(locus.points.len());
    for (idx, &p) in locus.points.iter().enumerate() {
        let nearest_other = locus
            .points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != idx)
            .map(|(_, &o)| (o - p).norm())
            .fold(f64::INFINITY, f64::min);
        let r = (2.0 * clearance).min(0.5 * nearest_other);
        if r < clearance {
            return Err(Error::CircleRadiusSearch {
                best: r,
                required: clearance,
            });
        }
        let path = lasso_path(engine, p, r)?;
        let track = engine.track(&path, engine.base_fiber())?;
        generators.push(track.permutation.expect("lasso is closed"));
    }
    Ok(generators)
}

/// Slit frame behind the composition table: straight spokes from an
/// interior center through every locus point plus one outward ray from
/// the farthest locus point to the boundary circle. The union is
/// connected and touches the boundary, so its complement in the disk
/// is simply connected: branch germs continued there along any two
/// slit-avoiding routes agree, which is what makes the table entries
/// well defined. Row permutations survive any routing; the column and
/// associativity laws do not, so every transport the table uses must
/// avoid one common slit. Spokes and ray are radial about the center,
/// hence radial legs and centered arcs can never cross them silently.
struct SlitFrame {
    center: Complex64,
    /// (locus point, polar angle, polar radius), sorted by angle.
    spokes: Vec<(Complex64, f64, f64)>,
    ray_angle: f64,
    ray_start: f64,
    #[allow(dead_code)]
    ray_end: Complex64,
    orbit_radius: f64,
}

const SLIT_CENTER_SEED: u64 = 0x736c_6974;
const SLIT_CENTER_TRIES: usize = 400;

/// Angular half-width a jog needs to clear a locus point at polar
/// radius s by 4 clearances.
fn jog_halfwidth(s: f64, clearance: f64) -> f64 {
    (4.0 * clearance / s).min(1.0).asin()
}

/// Signed angular difference a − b wrapped to (−π, π].
fn circ_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

fn orient(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let u = b - a;
    let v = p - a;
    u.re * v.im - u.im * v.re
}

/// Minimum distance between two segments; zero on a proper crossing.
fn segment_gap(a0: Complex64, a1: Complex64, b0: Complex64, b1: Complex64) -> f64 {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) {
        return 0.0;
    }
    let sa = Segment::Line { from: a0, to: a1 };
    let sb = Segment::Line { from: b0, to: b1 };
    sa.distance_to(b0)
        .min(sa.distance_to(b1))
        .min(sb.distance_to(a0))
        .min(sb.distance_to(a1))
}

/// Finds a center whose star of spokes keeps 3 clearances away from
/// every base fiber point, fits inside the disk with orbit room, and
/// leaves angular space between adjacent spokes for avoidance jogs.
/// Candidates come from a fixed deterministic stream, so the frame and
/// everything downstream of it are reproducible.
fn build_slit_frame(engine: &Engine) -> Result<SlitFrame> {
    let locus = &engine.locus().points;
    let d = engine.clearance();
    let protected = engine.base_fiber();
    let mut rng = DetRng::new(SLIT_CENTER_SEED);
    let mut candidates = Vec::with_capacity(SLIT_CENTER_TRIES);
    candidates.push(c64(0.0, 0.0));
    while candidates.len() < SLIT_CENTER_TRIES {
        candidates.push(rng.sample_disk(0.3));
    }
    'candidates: for &center in &candidates {
        let mut spokes: Vec<(Complex64, f64, f64)> = Vec::with_capacity(locus.len());
        for &p in locus {
            let rel = p - center;
            let s = rel.norm();
            if s < 0.04 {
                continue 'candidates;
            }
            spokes.push((p, rel.arg(), s));
        }
        let r_max = spokes.iter().map(|sp| sp.2).fold(0.0, f64::max);
        let orbit_radius = r_max + 6.0 * d;
        if center.norm() + orbit_radius > 1.0 - tol::DISK_MARGIN - 2.0 * d {
            continue 'candidates;
        }
        let &(far_p, ray_angle, ray_start) = spokes
            .iter()
            .max_by(|a, b| {
                a.2.partial_cmp(&b.2)
                    .unwrap()
                    .then(c64::cmp_lex(&a.0, &b.0))
            })
            .expect("order ≥ 2 covers have a nonempty locus");
        // exact exit: |center + t·e^{iθ}| = 1
        let u = Complex64::from_polar(1.0, ray_angle);
        let b = (center * u.conj()).re;
        let t_exit = -b + (b * b + 1.0 - center.norm_sqr()).sqrt();
        let ray_end = center + t_exit * u;
        for &x in protected {
            let clear = spokes.iter().all(|&(p, _, _)| {
                (Segment::Line { from: center, to: p }).distance_to(x) >= 3.0 * d
            }) && (Segment::Line {
                from: far_p,
                to: ray_end,
            })
            .distance_to(x)
                >= 3.0 * d;
            if !clear {
                continue 'candidates;
            }
        }
        spokes.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let m = spokes.len();
        if m > 1 {
            for i in 0..m {
                let (_, t0, s0) = spokes[i];
                let (_, t1, s1) = spokes[(i + 1) % m];
                let gap = if i + 1 == m { t1 + TAU - t0 } else { t1 - t0 };
                if gap < jog_halfwidth(s0, d) + jog_halfwidth(s1, d) + 0.02 {
                    continue 'candidates;
                }
            }
        }
        return Ok(SlitFrame {
            center,
            spokes,
            ray_angle,
            ray_start,
            ray_end,
            orbit_radius,
        });
    }
    Err(Error::CompositionTable(
        "no admissible slit center for the composition table".into(),
    ))
}

/// One radial piece of an orbit route, from radius r_from to r_to at
/// polar angle beta about the frame center, jogging around at most one
/// locus point. For a frame that passed the angular-gap check, a leg
/// can meet at most one blocker: a second one would force two spokes
/// closer than the jog widths the check reserved. Exact endpoints can
/// be pinned so the assembled path is continuous to the last bit.
fn radial_leg(
    frame: &SlitFrame,
    clearance: f64,
    beta: f64,
    r_from: f64,
    r_to: f64,
    pin_start: Option<Complex64>,
    pin_end: Option<Complex64>,
) -> Result<Vec<Segment>> {
    let c = frame.center;
    let at = |r: f64, th: f64| c + Complex64::from_polar(r, th);
    let start = pin_start.unwrap_or_else(|| at(r_from, beta));
    let end = pin_end.unwrap_or_else(|| at(r_to, beta));
    let nominal = Segment::Line { from: start, to: end };
    let blockers: Vec<(Complex64, f64, f64)> = frame
        .spokes
        .iter()
        .copied()
        .filter(|&(p, _, _)| nominal.distance_to(p) < 2.0 * clearance)
        .collect();
    if blockers.is_empty() {
        return Ok(vec![nominal]);
    }
    if blockers.len() > 1 {
        return Err(Error::CompositionTable(format!(
            "transport leg at angle {beta:.6} is blocked by {} locus points at once",
            blockers.len()
        )));
    }
    let (p, theta_p, s_p) = blockers[0];
    let lo = r_from.min(r_to);
    let hi = r_from.max(r_to);
    if s_p - 4.5 * clearance < lo || s_p + 4.5 * clearance > hi {
        return Err(Error::CompositionTable(format!(
            "locus point {p} sits too close to a transport endpoint for a jog"
        )));
    }
    let diff = circ_diff(beta, theta_p);
    if diff == 0.0 {
        return Err(Error::CompositionTable(format!(
            "transport leg at angle {beta:.6} runs along the spoke through {p}"
        )));
    }
    // push aside past the spoke's jog width, on the side the leg
    // already leans to; the sweep stays on that side, so the jog arcs
    // cannot cross the jogged spoke, and the gap check keeps them short
    // of the neighbors
    let beta_j = theta_p + diff.signum() * jog_halfwidth(s_p, clearance);
    let (r_near, r_far) = if r_from < r_to {
        (s_p - 4.0 * clearance, s_p + 4.0 * clearance)
    } else {
        (s_p + 4.0 * clearance, s_p - 4.0 * clearance)
    };
    Ok(vec![
        Segment::Line {
            from: start,
            to: at(r_near, beta),
        },
        Segment::Arc {
            center: c,
            radius: r_near,
            theta0: beta,
            theta1: beta_j,
        },
        Segment::Line {
            from: at(r_near, beta_j),
            to: at(r_far, beta_j),
        },
        Segment::Arc {
            center: c,
            radius: r_far,
            theta0: beta_j,
            theta1: beta,
        },
        Segment::Line {
            from: at(r_far, beta),
            to: end,
        },
    ])
}

/// Slit-avoiding route between two points that are 3 clearances off
/// the slit. A straight chord is used when it provably misses the
/// slit; otherwise the route runs radially out to the orbit circle,
/// around it on the side away from the ray, and radially back in.
fn route_around_slit(
    frame: &SlitFrame,
    clearance: f64,
    from: Complex64,
    to: Complex64,
) -> Result<Vec<Segment>> {
    let chord = Segment::Line { from, to };
    let clears_locus = frame
        .spokes
        .iter()
        .all(|&(p, _, _)| chord.distance_to(p) >= 2.0 * clearance);
    if clears_locus {
        let c = frame.center;
        let ray_from = c + Complex64::from_polar(frame.ray_start, frame.ray_angle);
        let hits = frame
            .spokes
            .iter()
            .map(|&(p, _, _)| (c, p))
            .chain(std::iter::once((ray_from, frame.ray_end)))
            .any(|(b0, b1)| segment_gap(from, to, b0, b1) < clearance);
        if !hits {
            return Ok(vec![chord]);
        }
    }
    let c = frame.center;
    let rel0 = from - c;
    let rel1 = to - c;
    let (r0, a0) = (rel0.norm(), rel0.arg());
    let (r1, a1) = (rel1.norm(), rel1.arg());
    let rr = frame.orbit_radius;
    let mut segs = radial_leg(frame, clearance, a0, r0, rr, Some(from), None)?;
    let ccw = (a1 - a0).rem_euclid(TAU);
    let ray_off = (frame.ray_angle - a0).rem_euclid(TAU);
    let sweep = if ray_off < ccw { ccw - TAU } else { ccw };
    if sweep != 0.0 {
        segs.push(Segment::Arc {
            center: c,
            radius: rr,
            theta0: a0,
            theta1: a0 + sweep,
        });
    }
    segs.extend(radial_leg(frame, clearance, a1, rr, r1, None, Some(to))?);
    Ok(segs)
}

/// Routes from the base point to every base fiber point, all avoiding
/// one common slit. Entry 0 is None: the base point needs no
/// transport. These are the only transports that demand a shared slit;
/// orbits, q and the automorphism fits read path-independent data.
fn coherent_transport_paths(engine: &Engine) -> Result<Vec<Option<Path>>> {
    let base = engine.base_fiber();
    if engine.locus().points.is_empty() {
        return Ok(vec![None; base.len()]);
    }
    let frame = build_slit_frame(engine)?;
    let z0 = engine.base_point();
    let mut paths = Vec::with_capacity(base.len());
    paths.push(None);
    for &y in &base[1..] {
        let segs = route_around_slit(&frame, engine.clearance(), z0, y)?;
        paths.push(Some(Path::new(segs)?));
    }
    Ok(paths)
}

/// π_i(k): continue the whole fiber from the base point to
/// y_i = ρ_i(z0) along a slit-coherent route; the transported branch k
/// sits at ρ_k(ρ_i(z0)), a point of the base fiber, and its label
/// there is π_i(k).
pub fn composition_table(engine: &Engine) -> Result<CompositionTable> {
    let n = engine.order();
    let base: Vec<Complex64> = engine.base_fiber().to_vec();
    let paths = coherent_transport_paths(engine)?;
    let mut table = vec![vec![0usize; n]; n];
    table[0] = (0..n).collect();
    for (i, path) in paths.iter().enumerate().skip(1) {
        let path = path.as_ref().expect("non-base fiber points get a route");
        let track = engine.track(path, engine.base_fiber())?;
        for (k, &w) in track.end_fiber.iter().enumerate() {
            let (j, d1, d2) = c64::nearest(&base, w);
            if d1 > tol::END_MATCH {
                return Err(Error::CompositionTable(format!(
                    "composite branch ({i}, {k}) is {d1:.3e} from every base fiber point"
                )));
            }
            if d1 > 0.0 && d2 < tol::MATCH_MARGIN * d1 {
                return Err(Error::MatchingAmbiguity {
                    t: 1.0,
                    margin: d2 / d1,
                    required: tol::MATCH_MARGIN,
                });
            }
            table[i][k] = j;
        }
    }
    let table = CompositionTable { table };
    table.validate()?;
    Ok(table)
}

fn class_index_map(orbits: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut class_of = vec![usize::MAX; n];
    for (c, orbit) in orbits.iter().enumerate() {
        for &j in orbit {
            class_of[j] = c;
        }
    }
    debug_assert!(class_of.iter().all(|&c| c != usize::MAX));
    class_of
}

/// Class-level inverse map: the branch inverses of one orbit must all
/// land in a single orbit, and the induced map on classes must be an
/// involution.
pub fn inverse_class_map(
    orbits: &[Vec<usize>],
    class_of: &[usize],
    table: &CompositionTable,
) -> Result<Vec<usize>> {
    let q = orbits.len();
    let mut map = vec![usize::MAX; q];
    for (c, orbit) in orbits.iter().enumerate() {
        for &j in orbit {
            let inv = table.inverse_branch(j);
            let ci = class_of[inv];
            if map[c] == usize::MAX {
                map[c] = ci;
            } else if map[c] != ci {
                return Err(Error::InverseClassInconsistency { branch: j });
            }
        }
    }
    for c in 0..q {
        if map[map[c]] != c {
            return Err(Error::InverseClassInconsistency {
                branch: orbits[c][0],
            });
        }
    }
    Ok(map)
}

/// Deterministic probe points for Möbius fitting and validation, kept
/// away from the branch locus. The base point itself is always the
/// first entry (its fiber is already known).
fn probe_pool(engine: &Engine) -> Vec<Complex64> {
    let mut pool = vec![engine.base_point()];
    for (ring, &(radius, offset)) in [(0.45, 0.137), (0.58, 0.71), (0.33, 1.9)].iter().enumerate() {
        for k in 0..16 {
            let theta = offset + std::f64::consts::TAU * (k as f64 + 0.5 * ring as f64) / 16.0;
            pool.push(Complex64::from_polar(radius, theta));
        }
    }
    pool
}

const FIT_POINTS: usize = 3;
const VALIDATION_POINTS: usize = 20;

/// Fit (a z + b)/(c z + 1) through three (z, w) samples: each sample is
/// one row of the linear system a·z + b − c·z·w = w.
fn fit_mobius(samples: &[(Complex64, Complex64)], branch: usize) -> Result<DiskAutomorphism> {
    let mut m = Array2::zeros((3, 3));
    let mut rhs = Vec::with_capacity(3);
    for (row, &(z, w)) in samples.iter().enumerate() {
        m[(row, 0)] = z;
        m[(row, 1)] = c64(1.0, 0.0);
        m[(row, 2)] = -z * w;
        rhs.push(w);
    }
    let bad_fit = |_| Error::MobiusFit {
        branch,
        residual: f64::INFINITY,
        limit: tol::MOBIUS_FIT_LIMIT,
    };
    let sol = crate::linalg::solve(m, rhs).map_err(bad_fit)?;
    DiskAutomorphism::new(sol[0], sol[1], sol[2], c64(1.0, 0.0)).map_err(bad_fit)
}

fn positive_angle(mu: Complex64) -> f64 {
    let a = mu.arg();
    if a > 1e-12 {
        a
    } else {
        a + std::f64::consts::TAU
    }
}

/// Fit every singleton-orbit branch as a disk automorphism, recover the
/// common fixed point α and the primitive multiplier λ, and verify the
/// elliptic normal form φ_α∘(λᵏ·)∘φ_α member by member.
pub fn automorphism_subgroup(engine: &Engine, orbits: &[Vec<usize>]) -> Result<AutomorphismGroup> {
    let mut member_indices: Vec<usize> = orbits
        .iter()
        .filter(|o| o.len() == 1)
        .map(|o| o[0])
        .collect();
    member_indices.sort_unstable();
    let n_g = member_indices.len();
    debug_assert_eq!(member_indices.first(), Some(&0));
    if n_g == 1 {
        return Ok(AutomorphismGroup {
            member_indices,
            members: vec![DiskAutomorphism::identity()],
            alpha: None,
            lambda: None,
            n_g: 1,
            max_fit_residual: 0.0,
        });
    }

    // transported fibers at enough probe points for fit + validation
    let needed = FIT_POINTS + VALIDATION_POINTS;
    let mut probes: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(needed);
    for z in probe_pool(engine) {
        if engine.locus().distance_to(z) < 2.0 * engine.clearance() {
            continue;
        }
        if let Ok(fiber) = engine.transport(z) {
            probes.push((z, fiber));
            if probes.len() == needed {
                break;
            }
        }
    }
    if probes.len() < needed {
        return Err(Error::Automorphism(format!(
            "only {} of {} probe points admit transported fibers",
            probes.len(),
            needed
        )));
    }
    let (fit_probes, check_probes) = probes.split_at(FIT_POINTS);

    let mut members = Vec::with_capacity(n_g);
    let mut max_fit_residual: f64 = 0.0;
    for &j in &member_indices {
        if j == 0 {
            members.push(DiskAutomorphism::identity());
            continue;
        }
        let samples: Vec<(Complex64, Complex64)> =
            fit_probes.iter().map(|(z, f)| (*z, f[j])).collect();
        let g = fit_mobius(&samples, j)?;
        let residual = check_probes
            .iter()
            .map(|(z, f)| (g.apply(*z) - f[j]).norm())
            .fold(0.0, f64::max);
        if residual > tol::MOBIUS_FIT_LIMIT {
            return Err(Error::MobiusFit {
                branch: j,
                residual,
                limit: tol::MOBIUS_FIT_LIMIT,
            });
        }
        max_fit_residual = max_fit_residual.max(residual);
        members.push(g);
    }

    // common fixed point: all non-identity members must agree
    let mut fixed_points: Vec<Complex64> = Vec::new();
    for (&j, g) in member_indices.iter().zip(&members) {
        if j == 0 {
            continue;
        }
        let fp = g.interior_fixed_point()?;
        if let Some(&first) = fixed_points.first() {
            let dist: f64 = (fp - first).norm();
            if dist > tol::ALPHA_AGREEMENT {
                return Err(Error::Automorphism(format!(
                    "fixed points of members disagree by {dist:.3e} (branch {j})"
                )));
            }
        }
        fixed_points.push(fp);
    }
    let alpha = fixed_points.iter().sum::<Complex64>() / fixed_points.len() as f64;

    // multipliers at α form the n_G-th roots of unity; the primitive one
    // has the smallest positive angle
    let multipliers: Vec<Complex64> = members.iter().map(|g| g.derivative(alpha)).collect();
    let lambda = multipliers
        .iter()
        .copied()
        .min_by(|x, y| positive_angle(*x).total_cmp(&positive_angle(*y)))
        .expect("non-trivial group has a multiplier");
    let root_defect = (lambda.powu(n_g as u32) - 1.0).norm();
    if root_defect > tol::LAMBDA_ROOT_TOL {
        return Err(Error::Automorphism(format!(
            "multiplier is not an n_G-th root of unity: |λ^{n_g} − 1| = {root_defect:.3e}"
        )));
    }

    // normal form: every member is φ_α∘(λᵏ·)∘φ_α for a distinct power k
    let inv_alpha = DiskAutomorphism::involution(alpha);
    let mut used_powers = vec![false; n_g];
    for (&j, (g, &mu)) in member_indices.iter().zip(members.iter().zip(&multipliers)) {
        let k = (0..n_g)
            .min_by(|&x, &y| {
                (lambda.powu(x as u32) - mu)
                    .norm()
                    .total_cmp(&(lambda.powu(y as u32) - mu).norm())
            })
            .unwrap();
        if used_powers[k] {
            return Err(Error::Automorphism(format!(
                "two members share the multiplier power {k}"
            )));
        }
        used_powers[k] = true;
        let candidate = inv_alpha
            .compose(&DiskAutomorphism::rotation(lambda.powu(k as u32)))?
            .compose(&inv_alpha)?;
        let deviation = check_probes
            .iter()
            .map(|(z, _)| (candidate.apply(*z) - g.apply(*z)).norm())
            .fold(0.0, f64::max);
        if deviation > tol::NORMAL_FORM_TOL {
            return Err(Error::Automorphism(format!(
                "member {j} deviates from its elliptic normal form by {deviation:.3e}"
            )));
        }
    }

    // Möbius parameters β_j = g_j⁻¹(0) are pairwise distinct when α ≠ 0
    if alpha.norm() > 1e-9 {
        let betas: Vec<Complex64> = members.iter().map(|g| -g.b / g.a).collect();
        for x in 0..betas.len() {
            for y in x + 1..betas.len() {
                if (betas[x] - betas[y]).norm() <= 1e-9 {
                    return Err(Error::Automorphism(format!(
                        "members {} and {} have coincident Möbius parameters",
                        member_indices[x], member_indices[y]
                    )));
                }
            }
        }
    }

    Ok(AutomorphismGroup {
        member_indices,
        members,
        alpha: Some(alpha),
        lambda: Some(lambda),
        n_g,
        max_fit_residual,
    })
}

/// Full monodromy analysis at the engine's base point.
pub fn analyze(engine: &Engine) -> Result<MonodromyData> {
    let n = engine.order();
    let generators = monodromy_generators(engine)?;
    let orbits = perm::orbits(&generators, n);
    let q = orbits.len();
    let class_of = class_index_map(&orbits, n);
    let group_elements = perm::closure(&generators, n, tol::GROUP_CAP_FACTOR * factorial(n))?;

    // every group element must preserve the orbit partition
    for g in &group_elements {
        for i in 0..n {
            if class_of[g.apply(i)] != class_of[i] {
                return Err(Error::CompositionTable(format!(
                    "group element {g} maps branch {i} out of its orbit"
                )));
            }
        }
    }

    let table = composition_table(engine)?;
    let inverse_classes = inverse_class_map(&orbits, &class_of, &table)?;
    let automorphisms = automorphism_subgroup(engine, &orbits)?;
    if automorphisms.n_g > 1 && n % automorphisms.n_g != 0 {
        return Err(Error::Divisibility {
            n_g: automorphisms.n_g,
            n,
        });
    }

    Ok(MonodromyData {
        base_point: engine.base_point(),
        generators,
        group_order: group_elements.len(),
        group_elements,
        orbits,
        q,
        class_of,
        table,
        inverse_classes,
        automorphisms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blaschke::{compose, BlaschkeProduct};
    use crate::c64::c64;
    use crate::tolerances as tol;
    use num_complex::Complex64;

    fn engine_for(zeros: Vec<Complex64>) -> Engine {
        let phi = BlaschkeProduct::new(zeros, c64(1.0, 0.0)).unwrap();
        Engine::new(phi, tol::CLEARANCE_DEFAULT).unwrap()
    }

    /// Dense-resample oracle: follow the same path with 2000 plain
    /// nearest-point fiber re-solves and no corrector, then read off the
    /// permutation. Independent of the tracking engine's stepping.
    fn dense_loop_permutation(engine: &Engine, path: &Path) -> Vec<usize> {
        let phi = engine.phi();
        let mut fiber = engine.base_fiber().to_vec();
        let m = 2000;
        for k in 1..=m {
            let z = path.at(k as f64 / m as f64);
            let exact = phi.fiber_of_value(phi.eval(z)).unwrap();
            let mut next = Vec::with_capacity(fiber.len());
            for &w in &fiber {
                let (j, _, _) = c64::nearest(&exact, w);
                next.push(exact[j]);
            }
            fiber = next;
        }
        fiber
            .iter()
            .map(|&w| c64::nearest(engine.base_fiber(), w).0)
            .collect()
    }

    #[test]
    fn cube_has_trivial_generators_and_full_q() {
        let engine = engine_for(vec![c64(0.0, 0.0); 3]);
        let data = analyze(&engine).unwrap();
        assert_eq!(data.generators.len(), 1);
        assert!(data.generators[0].is_identity());
        assert_eq!(data.q, 3);
        assert_eq!(data.orbits, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(data.group_order, 1);
    }

    #[test]
    fn cube_composition_table_is_the_rotation_group() {
        let engine = engine_for(vec![c64(0.0, 0.0); 3]);
        let data = analyze(&engine).unwrap();
        let n = 3;
        // identify each branch's rotation power from its fiber value
        let z0 = engine.base_point();
        let exponent: Vec<usize> = engine
            .base_fiber()
            .iter()
            .map(|&w| {
                let turns = (w / z0).arg() / std::f64::consts::TAU;
                ((turns * n as f64).round() as i64).rem_euclid(n as i64) as usize
            })
            .collect();
        for i in 0..n {
            for k in 0..n {
                let j = data.table.compose_labels(i, k);
                assert_eq!(exponent[j], (exponent[i] + exponent[k]) % n);
            }
        }
    }

    #[test]
    fn cube_automorphisms_are_rotations_about_zero() {
        let engine = engine_for(vec![c64(0.0, 0.0); 3]);
        let data = analyze(&engine).unwrap();
        let g = &data.automorphisms;
        assert_eq!(g.n_g, 3);
        assert_eq!(g.member_indices, vec![0, 1, 2]);
        assert!(g.alpha.unwrap().norm() < 1e-10);
        let lambda = g.lambda.unwrap();
        assert!((lambda - Complex64::from_polar(1.0, std::f64::consts::TAU / 3.0)).norm() < 1e-10);
        assert!(g.max_fit_residual < tol::MOBIUS_FIT_TARGET);
    }

    #[test]
    fn quartic_q_equals_four_with_cyclic_inverses() {
        let engine = engine_for(vec![c64(0.0, 0.0); 4]);
        let data = analyze(&engine).unwrap();
        assert_eq!(data.q, 4);
        // classes are singletons; the inverse map pairs rotation k with
        // rotation n−k, so exactly two classes are self-inverse
        let self_inverse = data
            .inverse_classes
            .iter()
            .enumerate()
            .filter(|&(c, &ci)| c == ci)
            .count();
        assert_eq!(self_inverse, 2);
        for c in 0..data.q {
            assert_eq!(data.inverse_classes[data.inverse_classes[c]], c);
        }
    }

    #[test]
    fn mixed_cubic_has_the_known_orbit_split() {
        let engine = engine_for(vec![c64(0.0, 0.0), c64(0.0, 0.0), c64(0.5, 0.0)]);
        let data = analyze(&engine).unwrap();
        assert_eq!(data.q, 2);
        assert_eq!(data.orbits, vec![vec![0], vec![1, 2]]);
        assert!(data.generators.iter().any(|g| !g.is_identity()));
        assert_eq!(data.automorphisms.n_g, 1);
        assert!(data.automorphisms.alpha.is_none());
        // both classes are their own inverse class
        assert_eq!(data.inverse_classes, vec![0, 1]);
        assert_eq!(data.group_order, 2);
        // the only 3×3 table with identity row 0 and identity column 0:
        // label composition is cyclic even though the cover is not Galois
        assert_eq!(
            data.table.table,
            vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]
        );
    }

    #[test]
    fn mixed_cubic_generators_match_dense_resampling() {
        let engine = engine_for(vec![c64(0.0, 0.0), c64(0.0, 0.0), c64(0.5, 0.0)]);
        let locus = engine.locus().clone();
        let generators = monodromy_generators(&engine).unwrap();
        for (idx, (&p, sigma)) in locus.points.iter().zip(&generators).enumerate() {
            let nearest_other = locus
                .points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != idx)
                .map(|(_, &o)| (o - p).norm())
                .fold(f64::INFINITY, f64::min);
            let r = (2.0 * engine.clearance()).min(0.5 * nearest_other);
            let path = lasso_path(&engine, p, r).unwrap();
            let oracle = dense_loop_permutation(&engine, &path);
            assert_eq!(sigma.images(), &oracle[..], "generator {idx}");
        }
    }

    #[test]
    fn mixed_cubic_table_matches_direct_composition() {
        let engine = engine_for(vec![c64(0.0, 0.0), c64(0.0, 0.0), c64(0.5, 0.0)]);
        let data = analyze(&engine).unwrap();
        let base = engine.base_fiber();
        // independent transport: dense re-solve along the same routes
        let paths = coherent_transport_paths(&engine).unwrap();
        for (i, path) in paths.iter().enumerate() {
            let Some(path) = path else {
                continue; // row 0 is the identity, no transport
            };
            let phi = engine.phi();
            let mut fiber = engine.base_fiber().to_vec();
            let m = ((path.total_length() / 5e-4).ceil() as usize).clamp(2000, 20_000);
            for s in 1..=m {
                let z = path.at(s as f64 / m as f64);
                let exact = phi.fiber_of_value(phi.eval(z)).unwrap();
                let mut next = Vec::with_capacity(fiber.len());
                for &w in &fiber {
                    let (j, _, _) = c64::nearest(&exact, w);
                    next.push(exact[j]);
                }
                fiber = next;
            }
            for (k, &w) in fiber.iter().enumerate() {
                let (j, _, _) = c64::nearest(base, w);
                assert_eq!(data.table.compose_labels(i, k), j, "entry ({i}, {k})");
            }
        }
    }

    #[test]
    fn conjugated_cube_recovers_alpha_and_lambda() {
        let outer = BlaschkeProduct::new(vec![c64(0.0, 0.0); 3], c64(1.0, 0.0)).unwrap();
        let inner = BlaschkeProduct::mobius(c64(0.3, 0.0)).unwrap();
        let phi = compose(&outer, &inner).unwrap();
        let engine = Engine::new(phi, tol::CLEARANCE_DEFAULT).unwrap();
        let data = analyze(&engine).unwrap();
        assert_eq!(data.q, 3);
        assert_eq!(data.automorphisms.n_g, 3);
        let alpha = data.automorphisms.alpha.unwrap();
        assert!((alpha - c64(0.3, 0.0)).norm() < tol::ALPHA_AGREEMENT);
        let lambda = data.automorphisms.lambda.unwrap();
        assert!((lambda.powu(3) - 1.0).norm() < tol::LAMBDA_ROOT_TOL);
        assert!(data.automorphisms.max_fit_residual < tol::MOBIUS_FIT_TARGET);
    }

    #[test]
    fn generic_cubic_has_q_two_and_trivial_automorphisms() {
        let engine = engine_for(vec![c64(0.3, 0.1), c64(-0.2, 0.25), c64(0.1, -0.4)]);
        let data = analyze(&engine).unwrap();
        assert_eq!(data.q, 2);
        assert_eq!(data.orbits.len(), 2);
        assert_eq!(data.orbits[0], vec![0]);
        assert_eq!(data.orbits[1].len(), 2);
        assert_eq!(data.automorphisms.n_g, 1);
    }

    #[test]
    fn order_two_second_branch_is_a_mobius_map() {
        let engine = engine_for(vec![c64(0.3, 0.0), c64(-0.1, 0.2)]);
        let data = analyze(&engine).unwrap();
        assert_eq!(data.q, 2);
        assert_eq!(data.automorphisms.n_g, 2);
        let lambda = data.automorphisms.lambda.unwrap();
        assert!((lambda + 1.0).norm() < 1e-9, "involution multiplier, got {lambda}");
        // the non-identity member must reproduce the tracked branch
        let g = &data.automorphisms.members[1];
        let z = engine.base_point();
        assert!((g.apply(z) - engine.base_fiber()[1]).norm() < 1e-9);
    }

    #[test]
    fn orbit_data_is_base_point_independent() {
        let zeros = vec![c64(0.0, 0.0), c64(0.0, 0.0), c64(0.5, 0.0)];
        let phi = BlaschkeProduct::new(zeros, c64(1.0, 0.0)).unwrap();
        let reference = analyze(&Engine::new(phi.clone(), tol::CLEARANCE_DEFAULT).unwrap()).unwrap();
        for z0 in [c64(0.0, 0.45), c64(-0.35, -0.25), c64(0.2, -0.4)] {
            let engine =
                Engine::with_base_point(phi.clone(), tol::CLEARANCE_DEFAULT, z0).unwrap();
            let data = analyze(&engine).unwrap();
            assert_eq!(data.q, reference.q, "base point {z0}");
            let sizes: Vec<usize> = data.orbits.iter().map(Vec::len).collect();
            let ref_sizes: Vec<usize> = reference.orbits.iter().map(Vec::len).collect();
            assert_eq!(sizes, ref_sizes, "base point {z0}");
        }
    }

    #[test]
    fn serialization_has_the_expected_fields() {
        let engine = engine_for(vec![c64(0.0, 0.0), c64(0.0, 0.0)]);
        let data = analyze(&engine).unwrap();
        let json = serde_json::to_value(&data).unwrap();
        assert_eq!(json["q"], 2);
        assert!(json["orbits"].is_array());
        assert!(json["generators"].is_array());
        assert!(json["table"].is_array());
        assert!(json.get("group_elements").is_none());
        assert_eq!(json["automorphisms"]["n_g"], 2);
    }

    #[test]
    fn table_validation_rejects_broken_tables() {
        let bad_row = CompositionTable {
            table: vec![vec![0, 1], vec![1, 1]],
        };
        assert!(bad_row.validate().is_err());
        // rows and columns are fine but row 0 is not the identity
        let bad_identity = CompositionTable {
            table: vec![vec![1, 0], vec![0, 1]],
        };
        assert!(bad_identity.validate().is_err());
    }
}

