//! Gauss-Legendre quadrature rules, computed once per node count by
//! Newton iteration on the Legendre recurrence.

/// Nodes and weights for n-point Gauss-Legendre on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-style initial guess for the i-th positive root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// The same rule affinely mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [1, 2, 5, 16, 48, 128] {
            let (_, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n = {n}: weight sum {s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let n = 6;
        let (x, w) = gauss_legendre(n);
        for d in 0..2 * n {
            let got: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(d as i32)).sum();
            let want = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
            assert!((got - want).abs() < 1e-13, "degree {d}: {got} vs {want}");
        }
    }

    #[test]
    fn mapped_rule_integrates_on_shifted_interval() {
        // ∫₀¹ u³ du = 1/4
        let (x, w) = gauss_legendre_on(4, 0.0, 1.0);
        let got: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi * xi * xi).sum();
        assert!((got - 0.25).abs() < 1e-14);
    }

    #[test]
    fn large_rule_integrates_oscillatory_function() {
        // ∫_{-1}^{1} cos(10x) dx = 2 sin(10)/10
        let (x, w) = gauss_legendre(64);
        let got: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * (10.0 * xi).cos()).sum();
        let want = 2.0 * f64::sin(10.0) / 10.0;
        assert!((got - want).abs() < 1e-12);
    }
}
