use serde::Serialize;

/// Unweighted least-squares line through `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x.iter().zip(y).map(|(a, b)| b - (intercept + slope * a)).collect();
    Some(LineFit {
        slope,
        intercept,
        residuals,
    })
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<LineFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    least_squares(&lx, &ly)
}

/// Least-squares `c` in `y ≈ c·x`.
pub fn through_origin(x: &[f64], y: &[f64]) -> Option<f64> {
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if x.is_empty() || x.len() != y.len() || sxx == 0.0 {
        return None;
    }
    Some(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_law_slope() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let f = log_log_slope(&h, &e).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(least_squares(&[1.0], &[2.0]).is_none());
        assert!(least_squares(&[1.0, 1.0], &[2.0, 3.0]).is_none());
        assert!(log_log_slope(&[0.1, 0.2], &[0.0, 1.0]).is_none());
        assert!(through_origin(&[], &[]).is_none());
        assert_eq!(through_origin(&[1.0, 2.0], &[2.0, 4.0]), Some(2.0));
    }

    proptest! {
        #[test]
        fn residuals_sum_to_zero(y in proptest::collection::vec(-10.0f64..10.0, 3..8)) {
            let x: Vec<f64> = (0..y.len()).map(|k| k as f64).collect();
            let f = least_squares(&x, &y).unwrap();
            prop_assert!(f.residuals.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
