//! Thomas algorithm for tridiagonal systems.

use alloc::vec::Vec;

/// Solves `lower[i]·u[i−1] + diag[i]·u[i] + upper[i]·u[i+1] = rhs[i]`
/// (`lower[0]` and `upper[n−1]` are ignored).
///
/// No pivoting, so the matrix should be diagonally dominant; returns `None`
/// when a pivot vanishes or becomes non-finite.
pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return None;
    }
    c.push(upper[0] / pivot);
    d.push(rhs[0] / pivot);
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        c.push(upper[i] / pivot);
        d.push((rhs[i] - lower[i] * d[i - 1]) / pivot);
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_poisson_matrix() {
        // -u'' = 2 with zero Dirichlet data at 0 and 1 → u = x(1 − x); exact for quadratics
        let n = 9;
        let h = 0.1;
        let lower = alloc::vec![-1.0; n];
        let upper = alloc::vec![-1.0; n];
        let diag = alloc::vec![2.0; n];
        let rhs = alloc::vec![2.0 * h * h; n];
        let u = solve(&lower, &diag, &upper, &rhs).unwrap();
        for (i, ui) in u.iter().enumerate() {
            let x = (i + 1) as f64 * h;
            assert!((ui - x * (1.0 - x)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_reported() {
        assert!(solve(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_none());
    }
}
