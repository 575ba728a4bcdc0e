use crate::error::{Error, Result};
use crate::numkern::array::DenseArray;
use crate::scalar::Real;

/// Default central-difference step.
pub const FD_EPS: f64 = 1e-5;

/// Central differences `(f(x + εe) − f(x − εe)) / 2ε` for every coordinate.
pub fn finite_diff_grad<T: Real>(
    mut f: impl FnMut(&DenseArray<T>) -> Result<T>,
    x: &DenseArray<T>,
    eps: T,
) -> Result<DenseArray<T>> {
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for index in 0..x.len() {
        let orig = probe.data()[index];
        probe.data_mut()[index] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[index] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[index] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: "finite_diff_grad".into(),
                index,
            });
        }
        grad.push((plus - minus) / (eps + eps));
    }
    Ok(DenseArray::from_raw(x.shape().to_vec(), grad))
}

/// `max |analytic − numeric| / max(1, |numeric|)`.
pub fn relative_discrepancy<T: Real>(
    analytic: &DenseArray<T>,
    numeric: &DenseArray<T>,
) -> Result<T> {
    analytic.require_same_shape(numeric, "relative_discrepancy")?;
    Ok(analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(T::zero(), |acc, (&a, &n)| {
            acc.max((a - n).abs() / T::one().max(n.abs()))
        }))
}
