use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` around `params`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::shape("grad_check", params.len(), analytic.len()));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: params.len(),
        tolerance: tol,
    };
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = f(&theta);
        theta[i] = orig - h;
        let minus = f(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || i == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(theta: &[f64]) -> f64 {
        theta.iter().map(|v| v * v).sum()
    }

    #[test]
    fn quadratic_is_exact() {
        let theta = [0.3, -1.2, 2.5, 0.0];
        let grad: Vec<f64> = theta.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(sq, &theta, &grad, 1e-4, 1e-8).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn wrong_gradient_flagged() {
        let theta = [0.3, -1.2, 2.5];
        let wrong: Vec<f64> = theta.to_vec();
        let r = grad_check(sq, &theta, &wrong, 1e-4, 1e-3).unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-6);
        assert!(!r.passed());
    }

    #[test]
    fn non_finite_objective() {
        let r = grad_check(|_| f64::NAN, &[1.0], &[0.0], 1e-4, 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
