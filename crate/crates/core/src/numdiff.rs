//! Central finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative step used by the finite-difference Jacobians.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference Jacobian of `f` at `x`.
///
/// Coordinate `j` is perturbed by `h * max(1, |x_j|)`. The denominator is the
/// distance between the two perturbed points as actually represented, which
/// removes the representation error of `x_j ± step` for linear maps.
pub fn finite_diff_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
    }
    let n = x.len();
    let mut probe = x.clone();
    let mut jac: Option<DMatrix<f64>> = None;
    for j in 0..n {
        let step = h * x[j].abs().max(1.0);
        let plus = x[j] + step;
        let minus = x[j] - step;

        probe[j] = plus;
        let f_plus = f(&probe);
        probe[j] = minus;
        let f_minus = f(&probe);
        probe[j] = x[j];

        if f_plus.iter().chain(f_minus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { coordinate: j });
        }
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(f_plus.len(), n));
        if f_plus.len() != jac.nrows() || f_minus.len() != jac.nrows() {
            return Err(Error::DimensionMismatch {
                context: "finite_diff_jacobian output",
                expected: jac.nrows(),
                found: f_plus.len(),
            });
        }
        let denom = plus - minus;
        jac.set_column(j, &((f_plus - f_minus) / denom));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(f(x).len(), 0)))
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let jac = finite_diff_jacobian(|p| DVector::from_element(1, f(p)), x, h)?;
    Ok(jac.row(0).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn identity_map() {
        let x = dvector![0.3, -12.0, 4.5e2];
        let jac = finite_diff_jacobian(|v| v.clone(), &x, 1e-5).unwrap();
        assert_abs_diff_eq!(jac, DMatrix::identity(3, 3), epsilon = 1e-10);
    }

    #[test]
    fn quadratic_map() {
        let x = dvector![2.0, 3.0];
        let jac = finite_diff_jacobian(|v| dvector![v[0] * v[0], v[0] * v[1]], &x, 1e-5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 3.0, 2.0]);
        assert_abs_diff_eq!(jac, expected, epsilon = 1e-6);
    }

    #[test]
    fn non_finite_reports_coordinate() {
        let x = dvector![1.0, 1e-7];
        let err = finite_diff_jacobian(|v| dvector![v[0], v[1].ln()], &x, 1e-5).unwrap_err();
        assert_eq!(err, Error::NonFinite { coordinate: 1 });
    }

    #[test]
    fn rejects_bad_step() {
        assert!(finite_diff_jacobian(|v| v.clone(), &dvector![1.0], 0.0).is_err());
    }
}
