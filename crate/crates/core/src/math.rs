//! Small numeric helpers shared by the modules: normal CDF, pairwise
//! summation, grids and least-squares slopes.

use alloc::vec::Vec;

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Pairwise (cascade) summation. The summation tree depends only on the
/// length of the slice, so the result is reproducible bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += *v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `n` points from `lo` to `hi` (inclusive) equally spaced in log scale.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo, "geometric grid needs 0 < lo <= hi");
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let (llo, lhi) = (libm::log(lo), libm::log(hi));
            let mut out: Vec<f64> = (0..n)
                .map(|i| libm::exp(llo + (lhi - llo) * i as f64 / (n - 1) as f64))
                .collect();
            out[0] = lo;
            out[n - 1] = hi;
            out
        }
    }
}

/// Ordinary least squares fit `y ≈ a + b x`; returns `(a, b, rms residual)`.
/// Needs at least two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    Some((intercept, slope, libm::sqrt(ss / n as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        // 2Φ(1) − 1, the one-sigma mass
        assert!((2.0 * norm_cdf(1.0) - 1.0 - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert!((norm_cdf(-2.0) - 0.022_750_131_948_179_2).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn geometric_grid_endpoints_exact() {
        let g = geometric_grid(0.01, 1e6, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[199], 1e6);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (a, b, rms) = linear_fit(&xs, &ys).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && rms < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
