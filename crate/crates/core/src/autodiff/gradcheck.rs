use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares analytic gradients with central finite differences.
///
/// Returns the maximum over all coordinates of
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
/// `loss_fn` is called twice per coordinate with one entry perturbed by `±eps`.
pub fn finite_difference_check<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    mut loss_fn: F,
) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::invalid("finite difference step must be positive"));
    }
    if params.len() != analytic.len() {
        return Err(Error::shape("gradient list does not match parameters"));
    }
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        if !grad.same_shape(&params[p]) {
            return Err(Error::shape(format!("gradient {p} has the wrong shape")));
        }
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let plus = loss_fn(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let minus = loss_fn(&work)?;
            work[p].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss while perturbing parameter {p}[{k}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[k];
            let denom = 1.0f64.max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[Tensor]) -> Result<f64> {
        Ok(p[0]
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| (i as f64 + 1.0) * x * x + 3.0 * x)
            .sum())
    }

    fn quadratic_grad(p: &Tensor) -> Tensor {
        let d = p
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * (i as f64 + 1.0) * x + 3.0)
            .collect();
        Tensor::vector(d).unwrap()
    }

    #[test]
    fn quadratic_is_exact() {
        let p = vec![Tensor::vector(vec![0.5, -2.0, 4.0]).unwrap()];
        let g = vec![quadratic_grad(&p[0])];
        let err = finite_difference_check(&p, &g, 1e-5, quadratic).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let p = vec![Tensor::vector(vec![0.5, -2.0, 4.0]).unwrap()];
        let g = vec![quadratic_grad(&p[0]).map(|x| 2.0 * x)];
        let err = finite_difference_check(&p, &g, 1e-5, quadratic).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "err = {err}");
        assert!(err >= 1e-4);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let p = vec![Tensor::scalar(1.0)];
        let g = vec![Tensor::scalar(0.0)];
        let r = finite_difference_check(&p, &g, 1e-5, |_| Ok(f64::NAN));
        assert!(matches!(r, Err(Error::Numerical(_))));
        assert!(finite_difference_check(&p, &g, 0.0, |_| Ok(0.0)).is_err());
    }
}
