//! Dense univariate polynomials over ℂ in ascending coefficient order:
//! `coeffs[k]` multiplies `z^k`. Root finding goes through the companion
//! matrix (already upper Hessenberg) followed by one guarded Newton
//! polish per root.

use crate::error::{Error, Result};
use crate::linalg;
use ndarray::Array2;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Drops trailing coefficients that are negligible relative to the
/// largest coefficient. Returns the empty slice for the zero polynomial.
pub fn trim(coeffs: &[Complex64]) -> &[Complex64] {
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if max == 0.0 {
        return &coeffs[..0];
    }
    let tol = 1e-14 * max;
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() <= tol {
        hi -= 1;
    }
    &coeffs[..hi]
}

pub fn eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = ZERO;
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Horner evaluation of the polynomial and its derivative in one pass.
pub fn eval_with_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

pub fn derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    if coeffs.len() <= 1 {
        return Vec::new();
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

pub fn mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == ZERO {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

pub fn add(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| {
            a.get(k).copied().unwrap_or(ZERO) + b.get(k).copied().unwrap_or(ZERO)
        })
        .collect()
}

pub fn sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| {
            a.get(k).copied().unwrap_or(ZERO) - b.get(k).copied().unwrap_or(ZERO)
        })
        .collect()
}

pub fn scale(a: &[Complex64], s: Complex64) -> Vec<Complex64> {
    a.iter().map(|&c| c * s).collect()
}

/// One Newton step, accepted only when it reduces |p|.
fn polish(coeffs: &[Complex64], root: Complex64) -> Complex64 {
    let (p, dp) = eval_with_derivative(coeffs, root);
    if dp.norm() < 1e-300 {
        return root;
    }
    let candidate = root - p / dp;
    if eval(coeffs, candidate).norm() < p.norm() {
        candidate
    } else {
        root
    }
}

fn roots_quadratic(c0: Complex64, c1: Complex64, c2: Complex64) -> Vec<Complex64> {
    if c0 == ZERO {
        return vec![ZERO, -c1 / c2];
    }
    let disc = (c1 * c1 - 4.0 * c2 * c0).sqrt();
    // pick the sign that avoids cancellation in c1 + s·disc
    let s = if (c1.conj() * disc).re >= 0.0 { 1.0 } else { -1.0 };
    let q = -(c1 + s * disc) * 0.5;
    if q.norm() < 1e-300 {
        // c1 ≈ 0 and disc ≈ 0: double root at the vertex
        let r = -c1 / (2.0 * c2);
        return vec![r, r];
    }
    vec![q / c2, c0 / q]
}

/// All complex roots with multiplicity. Trailing negligible coefficients
/// are trimmed first, so the reported count equals the numerical degree.
pub fn roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let c = trim(coeffs);
    if c.is_empty() {
        return Err(Error::RootFinder(
            "root finding on the zero polynomial".into(),
        ));
    }
    let n = c.len() - 1;
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![-c[0] / c[1]]),
        2 => Ok(roots_quadratic(c[0], c[1], c[2])),
        _ => {
            let top = c[n];
            let mut companion = Array2::from_elem((n, n), ZERO);
            for i in 0..n - 1 {
                companion[[i + 1, i]] = Complex64::new(1.0, 0.0);
            }
            for i in 0..n {
                companion[[i, n - 1]] = -c[i] / top;
            }
            let eigs = linalg::eigenvalues_hessenberg(companion)?;
            Ok(eigs.into_iter().map(|r| polish(c, r)).collect())
        }
    }
}

/// Synthetic division by (x − z): quotient and remainder.
fn divide_linear(a: &[Complex64], z: Complex64) -> (Vec<Complex64>, Complex64) {
    let n = a.len();
    if n <= 1 {
        return (Vec::new(), a.first().copied().unwrap_or(ZERO));
    }
    let mut q = vec![ZERO; n - 1];
    let mut b = a[n - 1];
    for i in (0..n - 1).rev() {
        q[i] = b;
        b = a[i] + z * b;
    }
    (q, b)
}

/// p⁽ʲ⁾(z)/j! for j = 0..=m, by repeated synthetic division.
pub fn scaled_derivatives_at(coeffs: &[Complex64], z: Complex64, m: usize) -> Vec<Complex64> {
    let mut work: Vec<Complex64> = trim(coeffs).to_vec();
    let mut out = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        if work.is_empty() {
            out.push(ZERO);
            continue;
        }
        let (q, r) = divide_linear(&work, z);
        out.push(r);
        work = q;
    }
    out
}

/// Link radius for candidate multiple-root clusters. Deliberately
/// generous: a numerical copy cloud of a multiplicity-m root has
/// radius ~eps^(1/m), up to ~1e-2 for m = 8, and over-linked clusters
/// come apart again because the verification step refuses them.
pub const MULTIPLE_ROOT_LINK: f64 = 0.02;

const VERIFY_TOL: f64 = 1e-4;

fn link_clusters(points: &[Complex64], radius: f64) -> Vec<Vec<Complex64>> {
    crate::c64::cluster_groups(points, radius)
}

/// Is the cluster a single multiplicity-m root? Refines the center by
/// Newton on p⁽ᵐ⁻¹⁾ (a simple root there if the claim is true), then
/// demands that every lower Taylor term is negligible against the m-th
/// on a test circle. The circle radius sits above the coefficient
/// noise floor and below the cluster's isolation distance; when those
/// bounds cross, the coefficients genuinely cannot resolve the cluster
/// and no merge is claimed.
fn verify_multiple_root(
    coeffs: &[Complex64],
    pts: &[Complex64],
    others: &[Complex64],
) -> Option<Complex64> {
    let m = pts.len();
    let mean = pts.iter().sum::<Complex64>() / m as f64;
    let mut z = mean;
    for _ in 0..3 {
        let d = scaled_derivatives_at(coeffs, z, m);
        if d[m].norm() == 0.0 {
            return None;
        }
        z -= d[m - 1] / (m as f64 * d[m]);
    }
    if (z - mean).norm() > 0.01 {
        return None;
    }
    let d = scaled_derivatives_at(coeffs, z, m);
    let dm = d[m].norm();
    if dm == 0.0 {
        return None;
    }
    let spread = pts.iter().map(|p| (p - z).norm()).fold(0.0, f64::max);
    let noise = f64::EPSILON * coeffs.iter().map(|c| c.norm()).sum::<f64>();
    let rho = ((10.0 * noise) / (VERIFY_TOL * dm))
        .powf(1.0 / m as f64)
        .max(1.5 * spread);
    let isolation = others
        .iter()
        .map(|&o| (o - z).norm())
        .fold(f64::INFINITY, f64::min);
    let cap = (0.4 * isolation).min(0.08);
    if rho > cap {
        return None;
    }
    let lead = dm * rho.powi(m as i32);
    for (j, dj) in d.iter().enumerate().take(m) {
        if dj.norm() * rho.powi(j as i32) > VERIFY_TOL * lead {
            return None;
        }
    }
    Some(z)
}

fn resolve_cluster(
    coeffs: &[Complex64],
    pts: &[Complex64],
    others: &[Complex64],
    link: f64,
    out: &mut Vec<(Complex64, usize)>,
) {
    if pts.len() == 1 {
        out.push((pts[0], 1));
        return;
    }
    if let Some(center) = verify_multiple_root(coeffs, pts, others) {
        out.push((center, pts.len()));
        return;
    }
    let finer = link / 4.0;
    let sub = link_clusters(pts, finer);
    if sub.len() == 1 || finer < 1e-12 {
        for &p in pts {
            out.push((p, 1));
        }
        return;
    }
    for (gi, g) in sub.iter().enumerate() {
        let mut rest: Vec<Complex64> = others.to_vec();
        for (gj, h) in sub.iter().enumerate() {
            if gj != gi {
                rest.extend_from_slice(h);
            }
        }
        resolve_cluster(coeffs, g, &rest, finer, out);
    }
}

/// Roots with verified multiplicities: copy clouds that provably
/// behave like one multiplicity-m root at their own scale collapse to
/// a single refined point; everything else stays separate. A plain
/// proximity merge cannot do this job, because the cloud radius grows
/// like eps^(1/m) while genuinely distinct roots may sit closer than
/// that.
pub fn clustered_roots(coeffs: &[Complex64], link: f64) -> Result<Vec<(Complex64, usize)>> {
    let rs = roots(coeffs)?;
    let groups = link_clusters(&rs, link);
    let mut out = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let mut others: Vec<Complex64> = Vec::new();
        for (gj, h) in groups.iter().enumerate() {
            if gj != gi {
                others.extend_from_slice(h);
            }
        }
        resolve_cluster(coeffs, g, &others, link, &mut out);
    }
    out.sort_by(|a, b| crate::c64::cmp_lex(&a.0, &b.0));
    Ok(out)
}
