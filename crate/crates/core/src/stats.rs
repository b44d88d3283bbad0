//! Small estimation helpers: confidence intervals and least-squares fits.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for a proportion `p_hat` estimated from `n` trials.
pub fn wilson(p_hat: f64, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the interval always contains p_hat; clamp away rounding at the edges
    (
        (centre - half).clamp(0.0, p_hat),
        (centre + half).clamp(p_hat, 1.0),
    )
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Half-width of the normal-approximation 95% interval for a mean.
pub fn mean_ci_half_width(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    Z95 * std_dev(xs) / (xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Standard error of the OLS slope when each `y_i` carries an independent
/// standard error `se_i` (the slope is linear in the `y_i`).
pub fn slope_standard_error(xs: &[f64], se: &[f64]) -> f64 {
    let mx = mean(xs);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    xs.iter()
        .zip(se)
        .map(|(x, s)| {
            let w = (x - mx) / sxx;
            w * w * s * s
        })
        .sum::<f64>()
        .sqrt()
}

/// Linear interpolation of `y(x)` on a curve sorted by increasing `x`;
/// `None` outside the curve's range.
pub fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    if curve.is_empty() || x < curve[0].0 || x > curve[curve.len() - 1].0 {
        return None;
    }
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x >= x0 && x <= x1 {
            if x1 == x0 {
                return Some(y0.max(y1));
            }
            return Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
        }
    }
    Some(curve[0].1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // p = 0.5, n = 100: centre 0.5, half-width z*sqrt(.25/100 + z^2/40000)/(1+z^2/100)
        let (lo, hi) = wilson(0.5, 100, Z95);
        assert!((lo - 0.4038).abs() < 1e-4);
        assert!((hi - 0.5962).abs() < 1e-4);
        let (lo, hi) = wilson(0.0, 50, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.08);
    }

    #[test]
    fn exact_line_fits_perfectly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn slope_se_for_two_points() {
        // slope = (y2 - y1) / (x2 - x1) => se = sqrt(s1^2 + s2^2) / |dx|
        let se = slope_standard_error(&[0.0, 2.0], &[0.3, 0.4]);
        assert!((se - 0.25).abs() < 1e-12);
    }

    #[test]
    fn interpolation() {
        let c = [(0.0, 1.0), (2.0, 3.0), (4.0, 3.0)];
        assert_eq!(interpolate(&c, 1.0), Some(2.0));
        assert_eq!(interpolate(&c, 3.0), Some(3.0));
        assert_eq!(interpolate(&c, 5.0), None);
    }
}
