//! Small dense least-squares solver (Householder QR).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Solves `min ||X b - y||` for a row-major `n x k` design matrix.
///
/// Returns [`Error::SingularFit`] when a column is (numerically) a linear
/// combination of the others.
pub fn least_squares(x: &[f64], y: &[f64], n: usize, k: usize) -> Result<Vec<f64>> {
    if x.len() != n * k || y.len() != n || n < k || k == 0 {
        return Err(Error::Shape(alloc::format!("least_squares: {}x{} design, {} targets", n, k, y.len())));
    }
    // Column-major working copy.
    let mut a: Vec<f64> = (0..k).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| x[i * k + j]).collect();
    let mut rhs = y.to_vec();
    let col_norms: Vec<f64> = (0..k).map(|j| math::sqrt(a[j * n..(j + 1) * n].iter().map(|v| v * v).sum())).collect();
    let mut diag = Vec::with_capacity(k);

    for j in 0..k {
        let col = &mut a[j * n..(j + 1) * n];
        let norm = math::sqrt(col[j..].iter().map(|v| v * v).sum());
        if norm <= 1e-10 * col_norms[j].max(f64::MIN_POSITIVE) || col_norms[j] == 0.0 {
            return Err(Error::SingularFit);
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        // Householder vector v = x - alpha e_j, stored in place.
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        diag.push(alpha);
        let v: Vec<f64> = col[j..].to_vec();
        for jj in j + 1..k {
            let other = &mut a[jj * n..(jj + 1) * n];
            let dot: f64 = v.iter().zip(&other[j..]).map(|(p, q)| p * q).sum();
            let s = 2.0 * dot / vnorm2;
            for (o, vi) in other[j..].iter_mut().zip(&v) {
                *o -= s * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[j..]).map(|(p, q)| p * q).sum();
        let s = 2.0 * dot / vnorm2;
        for (r, vi) in rhs[j..].iter_mut().zip(&v) {
            *r -= s * vi;
        }
    }

    let mut beta = alloc::vec![0.0; k];
    for j in (0..k).rev() {
        let mut acc = rhs[j];
        for jj in j + 1..k {
            acc -= a[jj * n + j] * beta[jj];
        }
        beta[j] = acc / diag[j];
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..10).flat_map(|i| [1.0, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
        let b = least_squares(&xs, &ys, 10, 2).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_is_singular() {
        let xs = vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert_eq!(least_squares(&xs, &[1.0, 2.0, 3.0], 3, 2), Err(Error::SingularFit));
    }
}
