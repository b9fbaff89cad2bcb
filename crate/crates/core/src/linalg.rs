//! Dense complex linear algebra sized for this crate's needs: QR
//! eigenvalues of small matrices (companion matrices, regular
//! representations), LU solves of fitting systems, and norms and
//! orthonormalization on operator blocks.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Complex Givens pair (c real, s) with
/// `[[c, s], [-s̄, c]] · [x, y]ᵀ = [r, 0]ᵀ`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let nx = x.norm();
    let ny = y.norm();
    if ny == 0.0 {
        return (1.0, ZERO);
    }
    if nx == 0.0 {
        return (0.0, y.conj() / ny);
    }
    let r = nx.hypot(ny);
    (nx / r, (x / nx) * y.conj() / r)
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let m1 = (tr + disc) * 0.5;
    let m2 = (tr - disc) * 0.5;
    if (m1 - d).norm() <= (m2 - d).norm() {
        m1
    } else {
        m2
    }
}

/// One explicit shifted QR sweep on the active block `[lo, hi)` of an
/// upper Hessenberg matrix.
fn qr_step(h: &mut Array2<Complex64>, lo: usize, hi: usize, shift: Complex64) {
    for k in lo..hi {
        h[[k, k]] -= shift;
    }
    let mut rots: Vec<(f64, Complex64)> = Vec::with_capacity(hi - lo);
    for k in lo..hi - 1 {
        let (cc, ss) = givens(h[[k, k]], h[[k + 1, k]]);
        for j in k..hi {
            let a = h[[k, j]];
            let b = h[[k + 1, j]];
            h[[k, j]] = cc * a + ss * b;
            h[[k + 1, j]] = -ss.conj() * a + cc * b;
        }
        h[[k + 1, k]] = ZERO;
        rots.push((cc, ss));
    }
    for (idx, k) in (lo..hi - 1).enumerate() {
        let (cc, ss) = rots[idx];
        let rmax = (k + 2).min(hi);
        for i in lo..rmax {
            let a = h[[i, k]];
            let b = h[[i, k + 1]];
            h[[i, k]] = cc * a + ss.conj() * b;
            h[[i, k + 1]] = -ss * a + cc * b;
        }
    }
    for k in lo..hi {
        h[[k, k]] += shift;
    }
}

/// Eigenvalues of an upper Hessenberg matrix by shifted QR iteration
/// with deflation. Entries below the subdiagonal are ignored.
pub fn eigenvalues_hessenberg(mut h: Array2<Complex64>) -> Result<Vec<Complex64>> {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "matrix must be square");
    let mut eigs = vec![ZERO; n];
    let mut hi = n;
    let mut sweeps = 0usize;
    let mut stall = 0usize;
    let max_sweeps = 60 * n.max(4);
    while hi > 0 {
        for k in 1..hi {
            let scale = h[[k - 1, k - 1]].norm() + h[[k, k]].norm();
            if h[[k, k - 1]].norm() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                h[[k, k - 1]] = ZERO;
            }
        }
        if hi == 1 || h[[hi - 1, hi - 2]] == ZERO {
            eigs[hi - 1] = h[[hi - 1, hi - 1]];
            hi -= 1;
            stall = 0;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && h[[lo, lo - 1]] != ZERO {
            lo -= 1;
        }
        sweeps += 1;
        stall += 1;
        if sweeps > max_sweeps {
            return Err(Error::RootFinder(format!(
                "QR iteration did not converge after {sweeps} sweeps"
            )));
        }
        let shift = if stall % 16 == 0 {
            h[[hi - 1, hi - 1]] + Complex64::new(1.5 * h[[hi - 1, hi - 2]].norm(), 0.0)
        } else {
            wilkinson_shift(
                h[[hi - 2, hi - 2]],
                h[[hi - 2, hi - 1]],
                h[[hi - 1, hi - 2]],
                h[[hi - 1, hi - 1]],
            )
        };
        qr_step(&mut h, lo, hi, shift);
    }
    Ok(eigs)
}

/// Householder reduction to upper Hessenberg form (in place copy).
pub fn to_hessenberg(mut a: Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    if n < 3 {
        return a;
    }
    for k in 0..n - 2 {
        let norm_x: f64 = (k + 1..n).map(|i| a[[i, k]].norm_sqr()).sum::<f64>().sqrt();
        if norm_x < 1e-300 {
            continue;
        }
        let x0 = a[[k + 1, k]];
        let phase = if x0.norm() < 1e-300 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm_x;
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| a[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 < 1e-300 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // left: A ← (I - β v v†) A on rows k+1.., columns k..
        for j in k..n {
            let mut w = ZERO;
            for (vi, i) in (k + 1..n).enumerate() {
                w += v[vi].conj() * a[[i, j]];
            }
            w *= beta;
            for (vi, i) in (k + 1..n).enumerate() {
                let delta = w * v[vi];
                a[[i, j]] -= delta;
            }
        }
        // right: A ← A (I - β v v†)
        for i in 0..n {
            let mut w = ZERO;
            for (vj, j) in (k + 1..n).enumerate() {
                w += a[[i, j]] * v[vj];
            }
            w *= beta;
            for (vj, j) in (k + 1..n).enumerate() {
                let delta = w * v[vj].conj();
                a[[i, j]] -= delta;
            }
        }
        for i in k + 2..n {
            a[[i, k]] = ZERO;
        }
    }
    a
}

/// Eigenvalues of a general square complex matrix.
pub fn eigenvalues(a: ArrayView2<Complex64>) -> Result<Vec<Complex64>> {
    eigenvalues_hessenberg(to_hessenberg(a.to_owned()))
}

/// LU solve with partial pivoting; consumes its inputs.
pub fn solve(mut a: Array2<Complex64>, mut b: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    for k in 0..n {
        let (mut piv, mut best) = (k, a[[k, k]].norm());
        for i in k + 1..n {
            let v = a[[i, k]].norm();
            if v > best {
                piv = i;
                best = v;
            }
        }
        if best < 1e-300 {
            return Err(Error::RootFinder("singular linear system".into()));
        }
        if piv != k {
            for j in 0..n {
                let t = a[[k, j]];
                a[[k, j]] = a[[piv, j]];
                a[[piv, j]] = t;
            }
            b.swap(k, piv);
        }
        let pivot = a[[k, k]];
        for i in k + 1..n {
            let f = a[[i, k]] / pivot;
            if f == ZERO {
                continue;
            }
            for j in k + 1..n {
                let delta = f * a[[k, j]];
                a[[i, j]] -= delta;
            }
            let delta = f * b[k];
            b[i] -= delta;
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[[k, j]] * b[j];
        }
        b[k] = s / a[[k, k]];
    }
    Ok(b)
}

pub fn norm_fro(a: ArrayView2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Operator 2-norm by power iteration on A†A with a fixed start vector.
pub fn op_norm_2(a: ArrayView2<Complex64>) -> f64 {
    let (rows, cols) = (a.nrows(), a.ncols());
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut v: Vec<Complex64> = (0..cols)
        .map(|i| Complex64::from_polar(1.0 + 0.25 * (i as f64 * 0.7).sin(), 0.9 * i as f64))
        .collect();
    let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= nv);
    let mut sigma = 0.0f64;
    let mut av = vec![ZERO; rows];
    for _ in 0..200 {
        for (i, slot) in av.iter_mut().enumerate() {
            let mut s = ZERO;
            for j in 0..cols {
                s += a[[i, j]] * v[j];
            }
            *slot = s;
        }
        let mut w = vec![ZERO; cols];
        for (j, slot) in w.iter_mut().enumerate() {
            let mut s = ZERO;
            for i in 0..rows {
                s += a[[i, j]].conj() * av[i];
            }
            *slot = s;
        }
        let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nw < 1e-300 {
            return 0.0;
        }
        let new_sigma = nw.sqrt();
        let done = (new_sigma - sigma).abs() <= 1e-12 * new_sigma.max(1e-300);
        sigma = new_sigma;
        w.iter_mut().for_each(|z| *z /= nw);
        v = w;
        if done {
            break;
        }
    }
    sigma
}

/// Rank-revealing orthonormalization with greedy column pivoting: each
/// step takes the column with the largest remaining norm and stops when
/// none is above `drop_tol`. Near-dependent inputs cannot inflate the
/// count the way a fixed sweep order lets roundoff do.
pub fn orthonormalize_columns_pivoted(cols: &mut Vec<Array1<Complex64>>, drop_tol: f64) {
    let mut work: Vec<Array1<Complex64>> = std::mem::take(cols);
    let mut kept: Vec<Array1<Complex64>> = Vec::new();
    while !work.is_empty() {
        let mut best = 0;
        let mut best_norm = 0.0;
        for (i, v) in work.iter().enumerate() {
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > best_norm {
                best = i;
                best_norm = n;
            }
        }
        if best_norm <= drop_tol {
            break;
        }
        let mut u = work.swap_remove(best);
        for q in &kept {
            let proj: Complex64 = q.iter().zip(u.iter()).map(|(a, b)| a.conj() * b).sum();
            ndarray::Zip::from(&mut u).and(q).for_each(|x, &y| *x -= proj * y);
        }
        let n = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n <= drop_tol {
            continue;
        }
        u.mapv_inplace(|z| z / n);
        for v in work.iter_mut() {
            let proj: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            ndarray::Zip::from(v).and(&u).for_each(|x, &y| *x -= proj * y);
        }
        kept.push(u);
    }
    *cols = kept;
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns with
/// remaining norm below `drop_tol` are dropped.
pub fn orthonormalize_columns(cols: &mut Vec<Array1<Complex64>>, drop_tol: f64) {
    let mut kept: Vec<Array1<Complex64>> = Vec::with_capacity(cols.len());
    for col in cols.drain(..) {
        let mut v = col;
        for _ in 0..2 {
            for u in &kept {
                let proj: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                ndarray::Zip::from(&mut v).and(u).for_each(|x, &y| *x -= proj * y);
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > drop_tol {
            v.mapv_inplace(|z| z / n);
            kept.push(v);
        }
    }
    *cols = kept;
}
