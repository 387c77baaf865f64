//! Central-finite-difference gradient verification. This is the independent
//! oracle every analytic gradient in the crate is held against; it must not
//! share code with any backward pass.

use crate::num::Scalar;

/// Central-difference gradient of a scalar function of a flat parameter
/// vector.
pub fn central_difference<T: Scalar, F>(mut f: F, params: &[T], h: f64) -> Vec<T>
where
    F: FnMut(&[T]) -> T,
{
    let h = T::of(h);
    let two_h = h + h;
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = f(&work);
        work[i] = orig - h;
        let minus = f(&work);
        work[i] = orig;
        grad.push((plus - minus) / two_h);
    }
    grad
}

/// Worst relative disagreement between two gradient vectors.
/// Denominator floored to keep near-zero entries from blowing up the ratio.
pub fn max_rel_error<T: Scalar>(analytic: &[T], numeric: &[T], floor: f64) -> T {
    let floor = T::of(floor);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
        .fold(T::zero(), |acc, e| acc.max(e))
}

/// Comparison report for a single gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport<T: Scalar> {
    pub max_rel_error: T,
    pub worst_index: usize,
    pub passed: bool,
}

/// Compare an analytic gradient against central differences of `f`.
pub fn grad_check<T: Scalar, F>(
    f: F,
    params: &[T],
    analytic: &[T],
    h: f64,
    tolerance: f64,
) -> GradCheckReport<T>
where
    F: FnMut(&[T]) -> T,
{
    let numeric = central_difference(f, params, h);
    let floor = T::of(1e-8);
    let mut worst = T::zero();
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs() / (a.abs() + n.abs()).max(floor);
        if e > worst {
            worst = e;
            worst_index = i;
        }
    }
    GradCheckReport {
        max_rel_error: worst,
        worst_index,
        passed: worst.real() < tolerance,
    }
}
