use super::KernelError;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the gradient returned by `f` against central finite differences.
///
/// `f` maps a flat parameter vector to `(loss, gradient)`. The numeric
/// derivative uses the fourth-order central stencil
/// `(-L(x+2h) + 8L(x+h) - 8L(x-h) + L(x-2h)) / 12h`, which keeps truncation
/// error far below the relative-error floor for step sizes around `1e-3`.
pub fn grad_check<F>(mut f: F, params: &[f64], eps: f64) -> Result<GradCheckReport, KernelError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(KernelError::Invalid(format!("step size {eps} must be positive")));
    }
    let (loss, analytic) = f(params);
    if !loss.is_finite() {
        return Err(KernelError::NonFinite(format!("loss {loss} at base point")));
    }
    if analytic.len() != params.len() {
        return Err(KernelError::Shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut theta = params.to_vec();
    let mut eval = |theta: &mut Vec<f64>, i: usize, delta: f64| -> Result<f64, KernelError> {
        let orig = theta[i];
        theta[i] = orig + delta;
        let (l, _) = f(theta);
        theta[i] = orig;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(KernelError::NonFinite(format!("loss {l} at parameter {i}")))
        }
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
    };
    for i in 0..params.len() {
        let lp2 = eval(&mut theta, i, 2.0 * eps)?;
        let lp1 = eval(&mut theta, i, eps)?;
        let lm1 = eval(&mut theta, i, -eps)?;
        let lm2 = eval(&mut theta, i, -2.0 * eps)?;
        // differences first, so equal losses give exactly zero
        let numeric = (8.0 * (lp1 - lm1) - (lp2 - lm2)) / (12.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if i == 0 || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = grad_check(|x| (0.5 * x[0] * x[0], vec![x[0]]), &[3.0], 1e-3).unwrap();
        assert!(r.max_rel_error < 1e-12);
        assert!((r.numeric - 3.0).abs() < 1e-10);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let r = grad_check(|x| (0.5 * x[0] * x[0], vec![2.0 * x[0]]), &[3.0], 1e-3).unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-9);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let r = grad_check(|x| (x[0].ln(), vec![1.0 / x[0]]), &[0.0], 1e-3);
        assert!(matches!(r, Err(KernelError::NonFinite(_))));
        let r = grad_check(|x| (1.0 / x[0].abs().min(1e-3), vec![0.0]), &[0.0], 1e-3);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_bad_step() {
        assert!(grad_check(|x| (x[0], vec![1.0]), &[0.0], 0.0).is_err());
    }
}
