//! Log–log rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceptance band `center ± half_width` on a fitted slope, or only the
/// lower edge when the prediction is an upper bound on the norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center: f64,
    pub half_width: f64,
    #[serde(default)]
    pub one_sided: bool,
}

impl Band {
    pub fn new(center: f64, half_width: f64) -> Self {
        Band { center, half_width, one_sided: false }
    }

    pub fn at_least(center: f64, half_width: f64) -> Self {
        Band { center, half_width, one_sided: true }
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.one_sided {
            x >= self.center - self.half_width
        } else {
            (x - self.center).abs() <= self.half_width
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `(ε, value)` pairs.
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Set when all values coincide; `r_squared` is then reported as 1.
    pub zero_variance: bool,
    pub band: Option<Band>,
    pub pass: Option<bool>,
}

impl RateReport {
    pub fn with_band(mut self, band: Band) -> Self {
        self.pass = Some(band.contains(self.slope));
        self.band = Some(band);
        self
    }
}

/// Least-squares fit of `log value = intercept + slope·log ε`.
pub fn fit_rate(rows: &[(f64, f64)]) -> Result<RateReport> {
    if rows.len() < 3 {
        return Err(Error::TooFewPoints(rows.len()));
    }
    for &(e, v) in rows {
        if !(e.is_finite() && v.is_finite()) {
            return Err(Error::NonFinite(format!("rate row ({e}, {v})")));
        }
        if e <= 0.0 {
            return Err(Error::NonPositive(e));
        }
        if v <= 0.0 {
            return Err(Error::NonPositive(v));
        }
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("rate fit needs distinct ε values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // relative threshold: values equal up to round-off count as constant
    let zero_variance = syy <= 1e-24 * (1.0 + my * my) * n;
    let r_squared = if zero_variance {
        1.0
    } else {
        let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        1.0 - ss_res / syy
    };
    Ok(RateReport {
        rows: rows.to_vec(),
        slope: if zero_variance { 0.0 } else { slope },
        intercept,
        r_squared,
        zero_variance,
        band: None,
        pass: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let r = fit_rate(&[(0.5, 0.25), (0.25, 1.0 / 16.0), (0.125, 1.0 / 64.0)]).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!(!r.zero_variance);
    }

    #[test]
    fn constant_values_flag_zero_variance() {
        let r = fit_rate(&[(0.5, 3.0), (0.25, 3.0), (0.125, 3.0)]).unwrap();
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.r_squared, 1.0);
        assert!(r.zero_variance);
    }

    #[test]
    fn two_rows_are_rejected() {
        let e = fit_rate(&[(0.5, 1.0), (0.25, 2.0)]).unwrap_err();
        assert!(e.to_string().contains("need ≥ 3 points"));
        assert!(matches!(fit_rate(&[(0.5, 1.0), (0.25, -2.0), (0.1, 1.0)]), Err(Error::NonPositive(_))));
    }
}
