//! Least-squares fits and interpolated percentiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionStats {
    /// Slope.
    pub a: f64,
    /// Intercept.
    pub b: f64,
    /// Coefficient of determination; 0 when the responses are constant.
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<RegressionStats> {
    if points.len() < 2 {
        return Err(Error::UndefinedFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::UndefinedFit("x has zero variance".into()));
    }
    let a = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 0.0 };
    Ok(RegressionStats {
        a,
        b: y_mean - a * x_mean,
        r2,
    })
}

/// Linear-interpolation percentiles: rank `q/100 * (n-1)` between the
/// neighbouring order statistics.
pub fn percentiles(values: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("percentiles of an empty set"));
    }
    if let Some(q) = qs.iter().find(|q| !(0.0..=100.0).contains(*q)) {
        return Err(Error::invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(qs.iter().map(|q| interpolate(&sorted, *q)).collect())
}

pub(crate) fn interpolate(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_line() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let s = least_squares(&pts).unwrap();
        assert!((s.a - 2.0).abs() < 1e-14);
        assert!((s.b - 1.0).abs() < 1e-14);
        assert!((s.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn three_point_fit() {
        // exact fractions: a = 3/2, b = 1/3, r2 = 27/28
        let s = least_squares(&[(1.0, 2.0), (2.0, 3.0), (3.0, 5.0)]).unwrap();
        assert!((s.a - 1.5).abs() < 1e-15);
        assert!((s.b - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.r2 - 27.0 / 28.0).abs() < 1e-15);
    }

    #[test]
    fn flat_data_convention() {
        let s = least_squares(&[(1.0, 4.0), (2.0, 4.0), (5.0, 4.0)]).unwrap();
        assert_eq!((s.a, s.b, s.r2), (0.0, 4.0, 0.0));
    }

    #[test]
    fn undefined_fits() {
        assert!(matches!(least_squares(&[(1.0, 1.0)]), Err(Error::UndefinedFit(_))));
        assert!(matches!(
            least_squares(&[(1.0, 1.0), (1.0, 2.0)]),
            Err(Error::UndefinedFit(_))
        ));
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentiles(&[3.5; 7], &[5.0, 50.0, 95.0]).unwrap(), vec![3.5; 3]);
        let ramp: Vec<f64> = (0..=100).map(f64::from).collect();
        let p = percentiles(&ramp, &[5.0, 95.0]).unwrap();
        assert!((p[0] - 5.0).abs() < 1e-12 && (p[1] - 95.0).abs() < 1e-12);
        assert!(percentiles(&[], &[50.0]).is_err());
        assert!(percentiles(&[1.0], &[101.0]).is_err());
    }
}
