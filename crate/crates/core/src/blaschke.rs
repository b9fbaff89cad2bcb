//! Finite Blaschke products on the unit disk, their rational form
//! P/Q, critical points, fibers, and the branch locus F = φ⁻¹(φ(C)).
//! Also the Möbius (disk automorphism) type and the composition and
//! G-decomposition operations the reducibility analysis rests on.

use crate::c64::{self, cluster_points, sort_lex, DetRng};
use crate::error::{Error, Result};
use crate::poly;
use crate::tolerances as tol;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// φ = P/Q with P(z) = front·Π(z−a_j) and Q(z) = Π(1−ā_j z), ascending
/// coefficients. P and Q are automatically coprime: roots of P lie in
/// 𝔻, roots of Q are the reflections 1/ā_j outside 𝔻̄.
#[derive(Debug, Clone, Serialize)]
pub struct RationalForm {
    #[serde(with = "crate::c64::pair_vec")]
    pub p: Vec<Complex64>,
    #[serde(with = "crate::c64::pair_vec")]
    pub q: Vec<Complex64>,
}

impl RationalForm {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        poly::eval(&self.p, z) / poly::eval(&self.q, z)
    }
}

/// A finite Blaschke product φ(z) = front·Π_{j=1}^{n} (z−a_j)/(1−ā_j z)
/// with all |a_j| < 1 and |front| = 1. Immutable after construction;
/// the rational form and the numerator of φ′ are precomputed.
#[derive(Debug, Clone)]
pub struct BlaschkeProduct {
    zeros: Vec<Complex64>,
    front: Complex64,
    rational: RationalForm,
    deriv_num: Vec<Complex64>,
}

impl BlaschkeProduct {
    pub fn new(zeros: Vec<Complex64>, front_factor: Complex64) -> Result<Self> {
        if zeros.is_empty() {
            return Err(Error::InvalidProduct(
                "a finite Blaschke product needs at least one zero".into(),
            ));
        }
        for (j, a) in zeros.iter().enumerate() {
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(Error::InvalidProduct(format!("zero {j} is not finite")));
            }
            if a.norm() >= 1.0 - tol::ZERO_INTERIOR_GAP {
                return Err(Error::InvalidProduct(format!(
                    "zero {j} has modulus {} which is not strictly inside the disk",
                    a.norm()
                )));
            }
        }
        let mag = front_factor.norm();
        if (mag - 1.0).abs() > tol::FRONT_UNIMODULAR {
            return Err(Error::InvalidProduct(format!(
                "front factor has modulus {mag}, expected 1"
            )));
        }
        let front = front_factor / mag;
        let mut p = vec![front];
        let mut q = vec![ONE];
        for &a in &zeros {
            p = poly::mul(&p, &[-a, ONE]);
            if a != ZERO {
                q = poly::mul(&q, &[ONE, -a.conj()]);
            }
        }
        let dp = poly::derivative(&p);
        let dq = poly::derivative(&q);
        let deriv_num = poly::trim(&poly::sub(&poly::mul(&dp, &q), &poly::mul(&p, &dq))).to_vec();
        Ok(Self {
            zeros,
            front,
            rational: RationalForm { p, q },
            deriv_num,
        })
    }

    /// The standard involution φ_a(z) = (a−z)/(1−āz), i.e. zero list [a]
    /// and front factor −1.
    pub fn mobius(a: Complex64) -> Result<Self> {
        Self::new(vec![a], -ONE)
    }

    pub fn order(&self) -> usize {
        self.zeros.len()
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn front_factor(&self) -> Complex64 {
        self.front
    }

    pub fn rational_form(&self) -> &RationalForm {
        &self.rational
    }

    /// Product-form evaluation. Total on 𝔻̄; poles all lie outside.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = self.front;
        for &a in &self.zeros {
            acc *= (z - a) / (ONE - a.conj() * z);
        }
        acc
    }

    /// Evaluation with an explicit pole-proximity guard, for caller
    /// supplied points that may lie outside 𝔻̄.
    pub fn checked_eval(&self, z: Complex64) -> Result<Complex64> {
        for &a in &self.zeros {
            if (ONE - a.conj() * z).norm() < tol::POLE_PROXIMITY {
                return Err(Error::PoleProximity { z });
            }
        }
        Ok(self.eval(z))
    }

    pub fn derivative_eval(&self, z: Complex64) -> Complex64 {
        let qv = poly::eval(&self.rational.q, z);
        poly::eval(&self.deriv_num, z) / (qv * qv)
    }

    /// (φ(z), φ′(z)) in one pass, for tracking loops.
    pub fn eval_both(&self, z: Complex64) -> (Complex64, Complex64) {
        let pv = poly::eval(&self.rational.p, z);
        let qv = poly::eval(&self.rational.q, z);
        let rv = poly::eval(&self.deriv_num, z);
        (pv / qv, rv / (qv * qv))
    }

    /// Coefficient matrix of f(w,z) = P(w)Q(z) − P(z)Q(w); entry (i,j)
    /// multiplies wⁱzʲ. Antisymmetric by construction.
    pub fn bivariate_f(&self) -> Array2<Complex64> {
        let n = self.order();
        let mut p = self.rational.p.clone();
        let mut q = self.rational.q.clone();
        p.resize(n + 1, ZERO);
        q.resize(n + 1, ZERO);
        let mut m = Array2::from_elem((n + 1, n + 1), ZERO);
        for i in 0..=n {
            for j in 0..=n {
                m[[i, j]] = p[i] * q[j] - q[i] * p[j];
            }
        }
        m
    }

    /// Critical points of φ in 𝔻, with multiplicity; always n−1 of them.
    pub fn critical_points(&self) -> Result<Vec<Complex64>> {
        if self.order() == 1 {
            return Ok(Vec::new());
        }
        let mut inside: Vec<Complex64> = poly::roots(&self.deriv_num)?
            .into_iter()
            .filter(|r| r.norm() < 1.0)
            .collect();
        if inside.len() != self.order() - 1 {
            return Err(Error::RootFinder(format!(
                "found {} interior critical points for an order-{} product, expected {}",
                inside.len(),
                self.order(),
                self.order() - 1
            )));
        }
        sort_lex(&mut inside);
        Ok(inside)
    }

    /// Coefficients of P(w) − y·Q(w); degree exactly n since
    /// |front| = 1 > |y|·Π|a_j|.
    fn fiber_polynomial(&self, y: Complex64) -> Vec<Complex64> {
        poly::sub(&self.rational.p, &poly::scale(&self.rational.q, y))
    }

    /// The n solutions w of φ(w) = y for |y| < 1, lexicographically
    /// sorted. Coincident roots are returned as-is; callers that need
    /// separated fibers must use `fiber`.
    pub fn fiber_of_value(&self, y: Complex64) -> Result<Vec<Complex64>> {
        if y.norm() >= 1.0 {
            return Err(Error::InvalidProduct(format!(
                "fiber requested over a value of modulus {} ≥ 1",
                y.norm()
            )));
        }
        let coeffs = self.fiber_polynomial(y);
        let mut roots = poly::roots(&coeffs)?;
        if roots.len() != self.order() {
            return Err(Error::RootFinder(format!(
                "fiber over {y} produced {} roots, expected {}",
                roots.len(),
                self.order()
            )));
        }
        sort_lex(&mut roots);
        Ok(roots)
    }

    /// The fiber through z₀: n separated roots with z₀ itself among
    /// them (snapped to exactly z₀).
    pub fn fiber(&self, z0: Complex64) -> Result<Vec<Complex64>> {
        let y = self.eval(z0);
        let mut roots = self.fiber_of_value(y)?;
        let (idx, dist, _) = c64::nearest(&roots, z0);
        if dist > tol::FIBER_CONTAINS_BASE {
            return Err(Error::RootFinder(format!(
                "fiber over {z0} misses the point itself by {dist:.3e}"
            )));
        }
        roots[idx] = z0;
        for &w in &roots {
            let r = (self.eval(w) - y).norm();
            if r > tol::FIBER_RESIDUAL {
                return Err(Error::RootFinder(format!(
                    "fiber root {w} has residual {r:.3e}"
                )));
            }
        }
        let sep = c64::min_pairwise_distance(&roots);
        if sep < tol::NEAR_MULTIPLE_ROOT {
            return Err(Error::NearBranchPoint {
                z: z0,
                separation: sep,
            });
        }
        sort_lex(&mut roots);
        Ok(roots)
    }

    /// F = φ⁻¹(φ(C)) with a ramification multiplicity per point.
    pub fn branch_locus(&self) -> Result<BranchLocus> {
        let critical = self.critical_points()?;
        let values: Vec<Complex64> = critical.iter().map(|&c| self.eval(c)).collect();
        let mut raw: Vec<(Complex64, usize)> = Vec::new();
        for (v, _) in cluster_points(&values, tol::LOCUS_DEDUP) {
            // a ramified fiber point of local degree m is a
            // multiplicity-m root whose numerical copies scatter like
            // eps^(1/m), far beyond any fixed proximity tolerance, so
            // the fiber is clustered with multiplicity verification
            let merged = poly::clustered_roots(&self.fiber_polynomial(v), poly::MULTIPLE_ROOT_LINK)?;
            let count: usize = merged.iter().map(|&(_, m)| m).sum();
            if count != self.order() {
                return Err(Error::RootFinder(format!(
                    "fiber over {v} produced {count} roots with multiplicity, expected {}",
                    self.order()
                )));
            }
            raw.extend(merged);
        }
        // distinct critical values have disjoint fibers, so this merge
        // is normally a no-op; it guards against a value cluster split
        let flat: Vec<Complex64> = raw.iter().map(|&(p, _)| p).collect();
        let mut points = Vec::new();
        let mut multiplicities = Vec::new();
        for (mean, _) in cluster_points(&flat, tol::LOCUS_DEDUP) {
            let mult = raw
                .iter()
                .filter(|&&(p, _)| (p - mean).norm() <= tol::LOCUS_DEDUP)
                .map(|&(_, m)| m)
                .max()
                .unwrap_or(1);
            points.push(mean);
            multiplicities.push(mult);
        }
        Ok(BranchLocus {
            critical_points: critical,
            points,
            multiplicities,
        })
    }
}

impl PartialEq for BlaschkeProduct {
    fn eq(&self, other: &Self) -> bool {
        self.zeros == other.zeros && self.front == other.front
    }
}

#[derive(Serialize, Deserialize)]
struct BlaschkeWire {
    #[serde(with = "crate::c64::pair_vec")]
    zeros: Vec<Complex64>,
    #[serde(with = "crate::c64::pair", default = "default_front")]
    front_factor: Complex64,
}

fn default_front() -> Complex64 {
    ONE
}

impl Serialize for BlaschkeProduct {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BlaschkeWire {
            zeros: self.zeros.clone(),
            front_factor: self.front,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlaschkeProduct {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = BlaschkeWire::deserialize(d)?;
        Self::new(wire.zeros, wire.front_factor).map_err(serde::de::Error::custom)
    }
}

/// Critical points C (with multiplicity, as repeats) and the branch
/// locus F = φ⁻¹(φ(C)), each F point with its ramification count.
#[derive(Debug, Clone, Serialize)]
pub struct BranchLocus {
    #[serde(with = "crate::c64::pair_vec")]
    pub critical_points: Vec<Complex64>,
    #[serde(with = "crate::c64::pair_vec")]
    pub points: Vec<Complex64>,
    pub multiplicities: Vec<usize>,
}

impl BranchLocus {
    pub fn distance_to(&self, z: Complex64) -> f64 {
        self.points
            .iter()
            .map(|&f| (z - f).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_separation(&self) -> f64 {
        c64::min_pairwise_distance(&self.points)
    }
}

/// A Möbius transformation (az+b)/(cz+d) preserving the unit disk,
/// normalized to d = 1 (valid because |d| > |c| for disk automorphisms,
/// so d ≠ 0).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiskAutomorphism {
    #[serde(with = "crate::c64::pair")]
    pub a: Complex64,
    #[serde(with = "crate::c64::pair")]
    pub b: Complex64,
    #[serde(with = "crate::c64::pair")]
    pub c: Complex64,
    #[serde(with = "crate::c64::pair")]
    pub d: Complex64,
}

impl DiskAutomorphism {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        if (a * d - b * c).norm() < 1e-14 {
            return Err(Error::InvalidProduct(
                "degenerate Möbius map (zero determinant)".into(),
            ));
        }
        if d.norm() <= c.norm() {
            return Err(Error::InvalidProduct(
                "Möbius map has a pole in the closed disk".into(),
            ));
        }
        Ok(Self {
            a: a / d,
            b: b / d,
            c: c / d,
            d: ONE,
        })
    }

    pub fn identity() -> Self {
        Self {
            a: ONE,
            b: ZERO,
            c: ZERO,
            d: ONE,
        }
    }

    /// The involution φ_α(z) = (α−z)/(1−ᾱz).
    pub fn involution(alpha: Complex64) -> Self {
        Self {
            a: -ONE,
            b: alpha,
            c: -alpha.conj(),
            d: ONE,
        }
    }

    /// z ↦ e^{iθ}·z as an automorphism, θ given by the unimodular λ.
    pub fn rotation(lambda: Complex64) -> Self {
        Self {
            a: lambda,
            b: ZERO,
            c: ZERO,
            d: ONE,
        }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let den = self.c * z + self.d;
        (self.a * self.d - self.b * self.c) / (den * den)
    }

    /// self ∘ other as matrix product, renormalized to d = 1.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::new(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.d, -self.b, -self.c, self.a)
    }

    /// The fixed point inside 𝔻 (root of cz² + (d−a)z − b). Elliptic
    /// automorphisms have exactly one; otherwise this errors.
    pub fn interior_fixed_point(&self) -> Result<Complex64> {
        let roots = if self.c.norm() < 1e-14 {
            if (self.d - self.a).norm() < 1e-14 {
                return Err(Error::CompositionTable(
                    "identity map has no isolated fixed point".into(),
                ));
            }
            vec![self.b / (self.a - self.d)]
        } else {
            poly::roots(&[-self.b, self.d - self.a, self.c])?
        };
        let interior: Vec<Complex64> = roots.into_iter().filter(|z| z.norm() < 1.0).collect();
        match interior.len() {
            1 => Ok(interior[0]),
            k => Err(Error::CompositionTable(format!(
                "automorphism has {k} interior fixed points, expected 1 (not elliptic?)"
            ))),
        }
    }

    pub fn is_identity(&self, tolerance: f64) -> bool {
        (self.a - ONE).norm() <= tolerance
            && self.b.norm() <= tolerance
            && self.c.norm() <= tolerance
    }
}

/// Deterministic probe points for front-factor fitting: spread around a
/// mid-radius ring so at least one avoids all zeros of the products in
/// play.
fn probe_points() -> impl Iterator<Item = Complex64> {
    (0..16).map(|k| Complex64::from_polar(0.43 + 0.02 * (k % 5) as f64, 0.39 * k as f64 + 0.21))
}

/// Fits a unimodular front factor so that `front·base(z) = target(z)`,
/// probing points where `base` is well away from zero.
fn fit_front(
    base: impl Fn(Complex64) -> Complex64,
    target: impl Fn(Complex64) -> Complex64,
) -> Result<Complex64> {
    for z in probe_points() {
        let b = base(z);
        if b.norm() < 1e-3 {
            continue;
        }
        let front = target(z) / b;
        if (front.norm() - 1.0).abs() > tol::FRONT_UNIMODULAR {
            return Err(Error::Decomposition(format!(
                "front-factor fit produced modulus {}, expected 1",
                front.norm()
            )));
        }
        return Ok(front / front.norm());
    }
    Err(Error::Decomposition(
        "no probe point avoided the zero set during front-factor fitting".into(),
    ))
}

/// outer ∘ inner as a Blaschke product of order n_outer·n_inner; the
/// zeros are the inner-preimages of the outer zeros.
pub fn compose(outer: &BlaschkeProduct, inner: &BlaschkeProduct) -> Result<BlaschkeProduct> {
    let mut zeros = Vec::with_capacity(outer.order() * inner.order());
    for &a in outer.zeros() {
        zeros.extend(inner.fiber_of_value(a)?);
    }
    let zs = zeros.clone();
    let front = fit_front(
        move |z| {
            zs.iter()
                .map(|&b| (z - b) / (ONE - b.conj() * z))
                .product()
        },
        |z| outer.eval(inner.eval(z)),
    )?;
    BlaschkeProduct::new(zeros, front)
}

/// A factorization φ = ψ ∘ φ_G through the invariant product of an
/// automorphism subgroup G.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub psi: BlaschkeProduct,
    pub phi_g: BlaschkeProduct,
    /// max |φ(z) − ψ(φ_G(z))| over the 50 validation points
    pub recomposition_residual: f64,
}

/// Factors φ through φ_G(z) = Π_{g∈G} g(z), the order-|G| invariant
/// product of the automorphism subgroup. G must contain the identity.
pub fn decompose_by_g(
    phi: &BlaschkeProduct,
    group: &[DiskAutomorphism],
) -> Result<Decomposition> {
    let n_g = group.len();
    let n = phi.order();
    if n_g <= 1 {
        return Err(Error::Decomposition(
            "automorphism group is trivial; nothing to factor through".into(),
        ));
    }
    if n % n_g != 0 {
        return Err(Error::Divisibility { n_g, n });
    }
    // zeros of Π g(z): each g kills its own preimage of 0
    let mut g_zeros = Vec::with_capacity(n_g);
    for g in group {
        if g.a.norm() < 1e-14 {
            return Err(Error::Decomposition(
                "group member is not a disk automorphism (a = 0)".into(),
            ));
        }
        g_zeros.push(-g.b / g.a);
    }
    let gz = g_zeros.clone();
    let group_owned = group.to_vec();
    let g_front = fit_front(
        move |z| {
            gz.iter()
                .map(|&b| (z - b) / (ONE - b.conj() * z))
                .product()
        },
        move |z| group_owned.iter().map(|g| g.apply(z)).product(),
    )?;
    let phi_g = BlaschkeProduct::new(g_zeros, g_front)?;

    // ψ zeros: each G-orbit of φ zeros lands on one φ_G image, n_g at a time
    let images: Vec<Complex64> = phi.zeros().iter().map(|&a| phi_g.eval(a)).collect();
    let mut psi_zeros = Vec::with_capacity(n / n_g);
    for (mean, size) in cluster_points(&images, tol::LOCUS_CLUSTER) {
        if size % n_g != 0 {
            return Err(Error::Decomposition(format!(
                "φ_G collapses {size} zeros onto one point, not a multiple of |G| = {n_g}"
            )));
        }
        for _ in 0..size / n_g {
            psi_zeros.push(mean);
        }
    }
    let pz = psi_zeros.clone();
    let phi_g2 = phi_g.clone();
    let psi_front = fit_front(
        move |z| {
            let w = phi_g2.eval(z);
            pz.iter()
                .map(|&b| (w - b) / (ONE - b.conj() * w))
                .product()
        },
        |z| phi.eval(z),
    )?;
    let psi = BlaschkeProduct::new(psi_zeros, psi_front)?;

    let mut rng = DetRng::new(0x7fb5_d329_728e_a185);
    let mut residual = 0.0f64;
    for _ in 0..50 {
        let z = rng.sample_disk(0.9);
        residual = residual.max((phi.eval(z) - psi.eval(phi_g.eval(z))).norm());
    }
    if residual > tol::RECOMPOSITION_LIMIT {
        return Err(Error::Decomposition(format!(
            "recomposition residual {residual:.3e} exceeds {:.0e}",
            tol::RECOMPOSITION_LIMIT
        )));
    }
    Ok(Decomposition {
        psi,
        phi_g,
        recomposition_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64::{c64, cmp_lex};

    fn bp(zeros: &[Complex64]) -> BlaschkeProduct {
        BlaschkeProduct::new(zeros.to_vec(), ONE).unwrap()
    }

    #[test]
    fn construction_validates_inputs() {
        assert!(BlaschkeProduct::new(vec![], ONE).is_err());
        assert!(BlaschkeProduct::new(vec![c64(1.0, 0.0)], ONE).is_err());
        assert!(BlaschkeProduct::new(vec![c64(0.3, 0.0)], c64(2.0, 0.0)).is_err());
        assert_eq!(bp(&[ZERO]).order(), 1);
        assert_eq!(bp(&[ZERO, ZERO]).order(), 2);
        // |0.9i| < 1, so this is accepted
        assert_eq!(bp(&[c64(0.5, 0.0), c64(0.0, 0.9)]).order(), 2);
    }

    #[test]
    fn eval_matches_closed_forms() {
        let sq = bp(&[ZERO, ZERO]);
        assert!((sq.eval(c64(0.5, 0.0)) - c64(0.25, 0.0)).norm() < 1e-15);
        let m = bp(&[c64(0.5, 0.0)]);
        assert!((m.eval(ZERO) - c64(-0.5, 0.0)).norm() < 1e-15);
        // boundary: z² at e^{iπ/4} is e^{iπ/2}
        let z = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let w = sq.eval(z);
        assert!((w - c64(0.0, 1.0)).norm() < 1e-14);
        assert!((w.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_closed_forms() {
        let sq = bp(&[ZERO, ZERO]);
        assert!((sq.derivative_eval(c64(0.5, 0.0)) - ONE).norm() < 1e-14);
        let m = bp(&[c64(0.5, 0.0)]);
        assert!((m.derivative_eval(ZERO) - c64(0.75, 0.0)).norm() < 1e-14);
        let cube = bp(&[ZERO, ZERO, ZERO]);
        assert!(cube.derivative_eval(ZERO).norm() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = DetRng::new(11);
        for _ in 0..20 {
            let phi = bp(&[rng.sample_disk(0.8), rng.sample_disk(0.8), rng.sample_disk(0.8)]);
            let z = rng.sample_disk(0.7);
            let h = 1e-6;
            let fd = (phi.eval(z + c64(h, 0.0)) - phi.eval(z - c64(h, 0.0))) / (2.0 * h);
            let d = phi.derivative_eval(z);
            assert!((fd - d).norm() <= 1e-7 * d.norm().max(1.0));
        }
    }

    #[test]
    fn rational_form_coefficients() {
        let sq = bp(&[ZERO, ZERO]);
        assert_eq!(sq.rational_form().p.len(), 3);
        assert!((sq.rational_form().p[2] - ONE).norm() < 1e-15);
        assert_eq!(sq.rational_form().q.len(), 1);
        let m = bp(&[c64(0.5, 0.0)]);
        let rf = m.rational_form();
        assert!((rf.p[0] - c64(-0.5, 0.0)).norm() < 1e-15);
        assert!((rf.p[1] - ONE).norm() < 1e-15);
        assert!((rf.q[0] - ONE).norm() < 1e-15);
        assert!((rf.q[1] - c64(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rational_form_round_trips_against_product_eval() {
        let mut rng = DetRng::new(23);
        let phi = bp(&[rng.sample_disk(0.9), rng.sample_disk(0.9), rng.sample_disk(0.9)]);
        for _ in 0..20 {
            let z = rng.sample_disk(0.99);
            let direct = phi.eval(z);
            let viapq = phi.rational_form().eval(z);
            assert!((direct - viapq).norm() <= 1e-12 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn bivariate_matrix_is_antisymmetric_and_matches_z2() {
        let sq = bp(&[ZERO, ZERO]);
        let m = sq.bivariate_f();
        assert!((m[[2, 0]] - ONE).norm() < 1e-15);
        assert!((m[[0, 2]] + ONE).norm() < 1e-15);
        let mut others = 0;
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (2, 0) && (i, j) != (0, 2) && m[[i, j]].norm() > 1e-15 {
                    others += 1;
                }
            }
        }
        assert_eq!(others, 0);

        let mut rng = DetRng::new(5);
        let phi = bp(&[rng.sample_disk(0.8), rng.sample_disk(0.8), rng.sample_disk(0.8)]);
        let f = phi.bivariate_f();
        for i in 0..4 {
            for j in 0..4 {
                assert!((f[[i, j]] + f[[j, i]]).norm() < 1e-13);
            }
        }
        // f(w,w) = 0 identically
        for _ in 0..20 {
            let w = rng.sample_disk(0.95);
            let mut acc = ZERO;
            for i in 0..4 {
                for j in 0..4 {
                    acc += f[[i, j]] * w.powu(i as u32) * w.powu(j as u32);
                }
            }
            assert!(acc.norm() < 1e-12);
        }
    }

    #[test]
    fn critical_points_of_model_products() {
        let sq = bp(&[ZERO, ZERO]);
        let c = sq.critical_points().unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].norm() < 1e-12);

        let m = bp(&[c64(0.4, 0.2)]);
        assert!(m.critical_points().unwrap().is_empty());

        // φ = z²(z−0.5)/(1−0.5z): numerator of φ′ works out by hand to
        // −z(z² − 3.25z + 1), interior roots 0 and (3.25 − √6.5625)/2
        let phi = bp(&[ZERO, ZERO, c64(0.5, 0.0)]);
        let mut c = phi.critical_points().unwrap();
        c.sort_by(cmp_lex);
        assert_eq!(c.len(), 2);
        assert!(c[0].norm() < 1e-10);
        let expect = (3.25 - 6.5625f64.sqrt()) / 2.0;
        assert!((c[1] - c64(expect, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn critical_points_satisfy_derivative_zero() {
        let mut rng = DetRng::new(77);
        for _ in 0..5 {
            let phi = bp(&[
                rng.sample_disk(0.8),
                rng.sample_disk(0.8),
                rng.sample_disk(0.8),
                rng.sample_disk(0.8),
            ]);
            let c = phi.critical_points().unwrap();
            assert_eq!(c.len(), 3);
            for &p in &c {
                assert!(phi.derivative_eval(p).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn fiber_of_rotations() {
        let cube = bp(&[ZERO, ZERO, ZERO]);
        let f = cube.fiber(c64(0.5, 0.0)).unwrap();
        let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let mut want = vec![c64(0.5, 0.0), 0.5 * omega, 0.5 * omega * omega];
        want.sort_by(cmp_lex);
        assert_eq!(f.len(), 3);
        for (got, expect) in f.iter().zip(&want) {
            assert!((got - expect).norm() < 1e-10);
        }

        let sq = bp(&[ZERO, ZERO]);
        let f = sq.fiber(c64(0.5, 0.0)).unwrap();
        assert!((f[0] - c64(-0.5, 0.0)).norm() < 1e-12);
        assert!((f[1] - c64(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fiber_contains_base_and_has_small_residuals() {
        let mut rng = DetRng::new(99);
        for _ in 0..10 {
            let phi = bp(&[rng.sample_disk(0.7), rng.sample_disk(0.7), rng.sample_disk(0.7)]);
            let z0 = rng.sample_disk(0.6);
            match phi.fiber(z0) {
                Ok(f) => {
                    assert_eq!(f.len(), 3);
                    assert!(f.iter().any(|&w| w == z0));
                    let y = phi.eval(z0);
                    for &w in &f {
                        assert!(w.norm() < 1.0);
                        assert!((phi.eval(w) - y).norm() < 1e-10);
                    }
                }
                Err(Error::NearBranchPoint { .. }) => {} // legitimate for unlucky z0
                Err(e) => panic!("unexpected fiber error: {e}"),
            }
        }
    }

    #[test]
    fn fiber_near_branch_point_is_rejected() {
        let sq = bp(&[ZERO, ZERO]);
        let err = sq.fiber(c64(1e-9, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NearBranchPoint { .. }));
    }

    #[test]
    fn branch_locus_of_power_maps_is_origin() {
        for n in 2..=6 {
            let phi = bp(&vec![ZERO; n]);
            let locus = phi.branch_locus().unwrap();
            assert_eq!(locus.points.len(), 1);
            assert!(locus.points[0].norm() < 1e-12);
            assert_eq!(locus.multiplicities[0], n);
            assert_eq!(locus.critical_points.len(), n - 1);
        }
    }

    #[test]
    fn branch_locus_of_conjugated_cube_is_one_triple_point() {
        // phi = m_a^{-1} . z^3 . m_a has a single branch point at a with the
        // full multiplicity; the fiber polynomial there carries a triple root
        // whose numerical copies scatter like eps^(1/3), so this exercises
        // the multiplicity-verified clustering path.
        let a = c64(0.3, 0.0);
        let outer = bp(&[ZERO, ZERO, ZERO]);
        let inner = BlaschkeProduct::mobius(a).unwrap();
        let phi = compose(&outer, &inner).unwrap();
        let locus = phi.branch_locus().unwrap();
        assert_eq!(locus.points.len(), 1);
        assert!((locus.points[0] - a).norm() < 1e-7);
        assert_eq!(locus.multiplicities[0], 3);
    }

    #[test]
    fn branch_locus_size_bound_generic_order3() {
        let mut rng = DetRng::new(2024);
        for _ in 0..5 {
            let phi = bp(&[rng.sample_disk(0.8), rng.sample_disk(0.8), rng.sample_disk(0.8)]);
            let locus = phi.branch_locus().unwrap();
            assert!(locus.points.len() <= 6, "|F| = {} > n(n-1)", locus.points.len());
            // every critical point is in F
            for &c in &locus.critical_points {
                assert!(locus.distance_to(c) < 1e-6);
            }
            // φ maps F into φ(C)
            let cvals: Vec<Complex64> =
                locus.critical_points.iter().map(|&c| phi.eval(c)).collect();
            for &f in &locus.points {
                let v = phi.eval(f);
                let d = cvals.iter().map(|&cv| (v - cv).norm()).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-10);
            }
        }
    }

    #[test]
    fn compose_power_maps() {
        let sq = bp(&[ZERO, ZERO]);
        let quartic = compose(&sq, &sq).unwrap();
        assert_eq!(quartic.order(), 4);
        for &z in &[c64(0.3, 0.1), c64(-0.2, 0.4), c64(0.0, -0.6)] {
            assert!((quartic.eval(z) - z.powu(4)).norm() < 1e-12);
        }
    }

    #[test]
    fn compose_involution_with_itself_is_identity() {
        let a = c64(0.4, -0.3);
        let m = BlaschkeProduct::mobius(a).unwrap();
        let id = compose(&m, &m).unwrap();
        assert_eq!(id.order(), 1);
        let mut rng = DetRng::new(8);
        for _ in 0..20 {
            let z = rng.sample_disk(0.9);
            assert!((id.eval(z) - z).norm() < 1e-12);
        }
    }

    #[test]
    fn compose_agrees_pointwise() {
        let mut rng = DetRng::new(31);
        let outer = bp(&[rng.sample_disk(0.7), rng.sample_disk(0.7)]);
        let inner = bp(&[c64(0.3, 0.0)]);
        let comp = compose(&outer, &inner).unwrap();
        assert_eq!(comp.order(), 2);
        for _ in 0..20 {
            let z = rng.sample_disk(0.9);
            assert!((comp.eval(z) - outer.eval(inner.eval(z))).norm() < 1e-11);
        }
    }

    #[test]
    fn decompose_z2_by_sign_flip() {
        let sq = bp(&[ZERO, ZERO]);
        let group = vec![
            DiskAutomorphism::identity(),
            DiskAutomorphism::rotation(-ONE),
        ];
        let d = decompose_by_g(&sq, &group).unwrap();
        // φ_G = z·(−z) = −z²
        assert_eq!(d.phi_g.order(), 2);
        assert!((d.phi_g.eval(c64(0.5, 0.0)) - c64(-0.25, 0.0)).norm() < 1e-13);
        // ψ(w) = −w
        assert_eq!(d.psi.order(), 1);
        assert!((d.psi.eval(c64(0.25, 0.0)) - c64(-0.25, 0.0)).norm() < 1e-13);
        assert!(d.recomposition_residual < 1e-12);
    }

    #[test]
    fn decompose_z4_by_quarter_rotations() {
        let quartic = bp(&[ZERO, ZERO, ZERO, ZERO]);
        let i = c64(0.0, 1.0);
        let group = vec![
            DiskAutomorphism::identity(),
            DiskAutomorphism::rotation(i),
            DiskAutomorphism::rotation(-ONE),
            DiskAutomorphism::rotation(-i),
        ];
        let d = decompose_by_g(&quartic, &group).unwrap();
        assert_eq!(d.phi_g.order(), 4);
        // Π rotations: z·iz·(−z)·(−iz) = −z⁴
        assert!((d.phi_g.eval(c64(0.5, 0.0)) + c64(0.0625, 0.0)).norm() < 1e-13);
        assert_eq!(d.psi.order(), 1);
        assert!(d.recomposition_residual < 1e-12);
    }

    #[test]
    fn decompose_conjugated_cube() {
        // φ = ((z−0.3)/(1−0.3z))³ is G-invariant for the order-3 elliptic
        // group fixing 0.3
        let a = c64(0.3, 0.0);
        let cube_of_mobius = {
            let m = bp(&[a]);
            let zeros = vec![a, a, a];
            let front = m.front_factor().powu(3);
            BlaschkeProduct::new(zeros, front).unwrap()
        };
        let inv = DiskAutomorphism::involution(a);
        let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let g1 = inv
            .compose(&DiskAutomorphism::rotation(omega))
            .unwrap()
            .compose(&inv)
            .unwrap();
        let g2 = g1.compose(&g1).unwrap();
        let group = vec![DiskAutomorphism::identity(), g1, g2];
        let d = decompose_by_g(&cube_of_mobius, &group).unwrap();
        assert_eq!(d.psi.order(), 1);
        assert_eq!(d.phi_g.order(), 3);
        assert!(d.recomposition_residual < 1e-9);
    }

    #[test]
    fn divisibility_violation_is_reported() {
        let cube = bp(&[ZERO, ZERO, ZERO]);
        let group = vec![
            DiskAutomorphism::identity(),
            DiskAutomorphism::rotation(-ONE),
        ];
        assert!(matches!(
            decompose_by_g(&cube, &group),
            Err(Error::Divisibility { n_g: 2, n: 3 })
        ));
    }

    #[test]
    fn automorphism_fixed_point_and_multiplier() {
        let a = c64(0.3, 0.0);
        let inv = DiskAutomorphism::involution(a);
        let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let g = inv
            .compose(&DiskAutomorphism::rotation(omega))
            .unwrap()
            .compose(&inv)
            .unwrap();
        let fp = g.interior_fixed_point().unwrap();
        assert!((fp - a).norm() < 1e-12);
        assert!((g.derivative(fp) - omega).norm() < 1e-12);
        // applying g three times is the identity
        let id = g.compose(&g).unwrap().compose(&g).unwrap();
        assert!(id.is_identity(1e-12));
    }

    #[test]
    fn serde_round_trip() {
        let phi = BlaschkeProduct::new(
            vec![c64(0.5, 0.0), c64(0.0, 0.9)],
            c64(0.0, 1.0),
        )
        .unwrap();
        let json = serde_json::to_string(&phi).unwrap();
        let back: BlaschkeProduct = serde_json::from_str(&json).unwrap();
        assert_eq!(phi, back);
        // front factor defaults to 1
        let bare: BlaschkeProduct =
            serde_json::from_str(r#"{"zeros": [[0.5, 0.0]]}"#).unwrap();
        assert!((bare.front_factor() - ONE).norm() < 1e-15);
        // invalid input is rejected at parse time
        assert!(serde_json::from_str::<BlaschkeProduct>(r#"{"zeros": [[1.5, 0.0]]}"#).is_err());
    }
}
