use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::error::{Error, Result};
use crate::seed;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

const MAX_POWER_ITERS: usize = 100_000;

/// Largest singular value of `m` by power iteration on `mᵀm`.
///
/// The start vector is drawn from `seed`; iteration stops once successive
/// estimates differ by less than `tol` relative to the current estimate.
/// An all-zero matrix has norm 0.
pub fn operator_norm(m: &Matrix, tol: f64, seed: u64) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::invalid("operator_norm of an empty matrix"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("operator_norm tolerance must be positive"));
    }
    if m.as_slice().iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut rng = seed::rng(seed);
    let mut v: Vec<f64> = (0..m.cols())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut estimate = norm(&m.matvec(&v)?);
    for _ in 0..MAX_POWER_ITERS {
        let mv = m.matvec(&v)?;
        let w = m.t_matvec(&mv)?;
        let nw = norm(&w);
        if nw == 0.0 {
            // start vector fell in the null space; estimate stays at zero
            break;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let next = norm(&m.matvec(&v)?);
        let converged = (next - estimate).abs() < tol * next;
        estimate = next;
        if converged {
            break;
        }
    }
    Ok(estimate)
}
