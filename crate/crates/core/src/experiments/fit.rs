//! Least-squares power laws in log-log coordinates.

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Fits `log e = intercept + slope log x`. Needs two distinct abscissae and
/// strictly positive values.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if let Some(&(x, e)) = points.iter().find(|&&(x, e)| !(x > 0.0 && e > 0.0) || !x.is_finite() || !e.is_finite()) {
        return Err(Error::DegenerateFit(format!("non-positive or non-finite point ({x:e}, {e:e})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, e)| (x.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("fewer than two distinct abscissae".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared, points: points.to_vec() })
}

/// Observed order of a refinement study where each entry halves the mesh
/// width of the previous one.
pub fn refinement_order(errors: &[f64]) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = errors.iter().enumerate().map(|(k, &e)| (0.5f64.powi(k as i32), e)).collect();
    fit_rate(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_square_root() {
        let f = fit_rate(&[(1e-2, 1e-1), (1e-4, 1e-2)]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_data_has_zero_slope() {
        let f = fit_rate(&[(1e-2, 3.0), (1e-4, 3.0)]).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn linear_data_is_exact() {
        let f = fit_rate(&[(1e-2, 1e-2), (1e-3, 1e-3), (1e-4, 1e-4)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_rate(&[(1e-2, 0.0), (1e-3, 1.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_rate(&[(-1.0, 1.0), (1e-3, 1.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_rate(&[(1e-2, 1.0), (1e-2, 2.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_rate(&[(1e-2, 1.0)]), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn refinement_order_of_quadratic_errors() {
        let f = refinement_order(&[1.0, 0.25, 0.0625]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
    }
}
