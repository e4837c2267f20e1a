//! Log-log rate fits of gap curves.

use crate::error::{CliError, CliResult};

/// Ordinary least squares of `ln gap` on `ln T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// `(ln T, ln gap)` pairs used by the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Input points dropped because their gap was not positive.
    pub skipped: usize,
}

/// Fits `(T, gap)` points. Errors on a non-positive gap, fewer than three
/// points, or fewer than two distinct `T`.
pub fn fit_rate(points: &[(f64, f64)]) -> CliResult<RateFit> {
    if let Some(&(t, g)) = points.iter().find(|(_, g)| g.is_nan() || *g <= 0.0) {
        return Err(CliError::Numeric(format!("non-positive gap {g} at T={t}")));
    }
    fit_positive(points, 0)
}

/// As [`fit_rate`] but drops points with a non-positive gap and reports how
/// many were dropped.
pub fn fit_rate_skipping(points: &[(f64, f64)]) -> CliResult<RateFit> {
    let kept: Vec<(f64, f64)> = points.iter().copied().filter(|(_, g)| *g > 0.0).collect();
    fit_positive(&kept, points.len() - kept.len())
}

fn fit_positive(points: &[(f64, f64)], skipped: usize) -> CliResult<RateFit> {
    if points.len() < 3 {
        return Err(CliError::Numeric(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(t, _)| !(*t > 0.0 && t.is_finite())) {
        return Err(CliError::Numeric("rate fit needs positive finite T".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(t, g)| (t.ln(), g.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(CliError::Numeric(
            "rate fit needs at least two distinct T".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    // a flat, exactly fitted line counts as a perfect fit
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    if !slope.is_finite() {
        return Err(CliError::Numeric("rate fit slope is not finite".into()));
    }
    Ok(RateFit {
        points: logs,
        slope,
        intercept,
        r_squared,
        skipped,
    })
}
