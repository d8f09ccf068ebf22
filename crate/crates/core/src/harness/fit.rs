//! Scale constants of measured stopping times against bound shapes.

use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleSummary;
use crate::bounds::BoundCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub n: u64,
    pub mean: f64,
    pub shape: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub stopping_time: String,
    pub curve: BoundCurve,
    /// Smallest `C` with `mean(N) <= C * shape(N)` on every used point.
    pub scale_constant: f64,
    pub rows: Vec<FitRow>,
    /// Means strictly decrease in `N`.
    pub monotone: bool,
    /// `max ratio / min ratio`, absent when a ratio is zero.
    pub ratio_spread: Option<f64>,
    /// Grid points left out because of censoring or missing hits.
    pub excluded: Vec<u64>,
    pub warnings: Vec<String>,
}

/// Fits `mean(N) ≈ C · shape(N)` for one stopping-time key.
///
/// Needs at least three grid points in the summary. Points with any
/// censored replica are excluded, with a warning, since their mean is
/// biased low.
pub fn fit_scaling(summary: &EnsembleSummary, key: &str, curve: &BoundCurve) -> Result<FitResult> {
    curve.validate()?;
    if summary.points.len() < 3 {
        return Err(Error::domain(format!(
            "fit needs at least 3 grid points, got {}",
            summary.points.len()
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    let mut pts: Vec<_> = summary.points.iter().collect();
    pts.sort_by_key(|p| p.n);
    for p in pts {
        let Some(stats) = p.hit_stats.get(key) else {
            return Err(Error::domain(format!("stopping time '{key}' not in summary")));
        };
        match stats.mean {
            Some(mean) if stats.censoring_rate == 0.0 => {
                let shape = curve.shape(p.n)?;
                rows.push(FitRow {
                    n: p.n,
                    mean,
                    shape,
                    ratio: mean / shape,
                });
            }
            _ => {
                excluded.push(p.n);
                warnings.push(format!(
                    "N={}: censoring rate {} for {key}, excluded",
                    p.n, stats.censoring_rate
                ));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::domain(format!("no uncensored grid points for '{key}'")));
    }
    let scale_constant = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let monotone = rows.windows(2).all(|w| w[1].mean < w[0].mean);
    if !monotone {
        warnings.push(format!("means of {key} are not strictly decreasing in N"));
    }
    Ok(FitResult {
        stopping_time: key.to_string(),
        curve: *curve,
        scale_constant,
        monotone,
        ratio_spread: (min_ratio > 0.0).then(|| scale_constant / min_ratio),
        rows,
        excluded,
        warnings,
    })
}
