//! Complex-number helpers: deterministic orderings, point clustering,
//! `[re, im]` serde adapters, and a seeded sample-point generator used
//! by internal validation checks.

use num_complex::Complex64;
use std::cmp::Ordering;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Lexicographic order by (re, im). Total because values are finite.
pub fn cmp_lex(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.partial_cmp(&b.re)
        .unwrap()
        .then(a.im.partial_cmp(&b.im).unwrap())
}

pub fn sort_lex(points: &mut [Complex64]) {
    points.sort_by(cmp_lex);
}

/// Index of the entry of `points` nearest to `z`, with the nearest and
/// second-nearest distances.
pub fn nearest(points: &[Complex64], z: Complex64) -> (usize, f64, f64) {
    assert!(!points.is_empty());
    let mut best = (0usize, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = (p - z).norm();
        if d < best.1 {
            second = best.1;
            best = (i, d);
        } else if d < second {
            second = d;
        }
    }
    (best.0, best.1, second)
}

pub fn min_pairwise_distance(points: &[Complex64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            m = m.min((points[i] - points[j]).norm());
        }
    }
    m
}

/// Merge points within `tol` of each other (single-linkage), returning
/// cluster means with their sizes, sorted lexicographically.
pub fn cluster_points(points: &[Complex64], tol: f64) -> Vec<(Complex64, usize)> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut acc: std::collections::HashMap<usize, (Complex64, usize)> =
        std::collections::HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let e = acc.entry(r).or_insert((Complex64::new(0.0, 0.0), 0));
        e.0 += points[i];
        e.1 += 1;
    }
    let mut out: Vec<(Complex64, usize)> = acc
        .into_values()
        .map(|(s, k)| (s / k as f64, k))
        .collect();
    out.sort_by(|a, b| cmp_lex(&a.0, &b.0));
    out
}

/// Single-linkage clustering as in `cluster_points`, but returning the
/// member points of each cluster instead of the means. Clusters are
/// ordered by their lexicographically smallest member.
pub fn cluster_groups(points: &[Complex64], tol: f64) -> Vec<Vec<Complex64>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut acc: std::collections::HashMap<usize, Vec<Complex64>> =
        std::collections::HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        acc.entry(r).or_default().push(points[i]);
    }
    let mut out: Vec<Vec<Complex64>> = acc.into_values().collect();
    for g in &mut out {
        g.sort_by(cmp_lex);
    }
    out.sort_by(|a, b| cmp_lex(&a[0], &b[0]));
    out
}

/// splitmix64-driven deterministic point stream for validation samples.
/// Not a statistical RNG; only reproducibility matters here.
pub struct DetRng(u64);

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Area-uniform sample of the disk of the given radius.
    pub fn sample_disk(&mut self, radius: f64) -> Complex64 {
        let r = radius * self.next_f64().sqrt();
        let t = 2.0 * std::f64::consts::PI * self.next_f64();
        Complex64::from_polar(r, t)
    }
}

/// Serde adapter: one complex value as `[re, im]`.
pub mod pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Serde adapter: `Option<Complex64>` as `[re, im]` or `null`.
pub mod pair_opt {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|z| [z.re, z.im]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Complex64>, D::Error> {
        Ok(<Option<[f64; 2]>>::deserialize(d)?.map(|[re, im]| Complex64::new(re, im)))
    }
}

/// Serde adapter: `Vec<Complex64>` as `[[re, im], ...]`.
pub mod pair_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(<Vec<[f64; 2]>>::deserialize(d)?
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect())
    }
}

/// Serde adapter: `Vec<Vec<Complex64>>`.
pub mod pair_vec_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Complex64>>, D::Error> {
        Ok(<Vec<Vec<[f64; 2]>>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
            .collect())
    }
}

/// Serde adapter: `Vec<Vec<Vec<Complex64>>>` (structure constants).
pub mod pair_vec3 {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[allow(clippy::type_complexity)]
    pub fn serialize<S: Serializer>(v: &[Vec<Vec<Complex64>>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|a| {
                a.iter()
                    .map(|row| row.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    #[allow(clippy::type_complexity)]
    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<Vec<Vec<Complex64>>>, D::Error> {
        Ok(<Vec<Vec<Vec<[f64; 2]>>>>::deserialize(d)?
            .into_iter()
            .map(|a| {
                a.into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|[re, im]| Complex64::new(re, im))
                            .collect()
                    })
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_merges_within_tolerance() {
        let pts = vec![
            c64(0.0, 0.0),
            c64(1e-12, 0.0),
            c64(0.5, 0.5),
            c64(0.5, 0.5 + 1e-11),
            c64(-0.3, 0.0),
        ];
        let clusters = cluster_points(&pts, 1e-9);
        assert_eq!(clusters.len(), 3);
        assert_eq!(clusters[0].1, 1); // -0.3 first lexicographically
        assert_eq!(clusters[1].1, 2);
        assert_eq!(clusters[2].1, 2);
    }

    #[test]
    fn detrng_is_reproducible_and_in_disk() {
        let mut a = DetRng::new(7);
        let mut b = DetRng::new(7);
        for _ in 0..100 {
            let za = a.sample_disk(0.8);
            let zb = b.sample_disk(0.8);
            assert_eq!(za, zb);
            assert!(za.norm() < 0.8);
        }
    }

    #[test]
    fn nearest_reports_margin() {
        let pts = vec![c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 1.0)];
        let (i, d1, d2) = nearest(&pts, c64(0.1, 0.0));
        assert_eq!(i, 0);
        assert!((d1 - 0.1).abs() < 1e-15);
        assert!((d2 - 0.9).abs() < 1e-15);
    }
}
