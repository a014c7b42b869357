//! Least-absolute-deviation (median) regression of height on year.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::rng;

/// Median trends on fewer points are refused.
pub const MIN_MEDIAN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadFit {
    pub intercept: f64,
    pub slope: f64,
    /// `sum |y - intercept - slope x|`.
    pub objective: f64,
}

pub fn lad_objective(x: &[f64], y: &[f64], intercept: f64, slope: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - intercept - slope * xi).abs())
        .sum()
}

/// Exact LAD line by direct descent over lines through data points.
///
/// Each step fixes a pivot point and picks the optimal slope through it,
/// a weighted median of the slopes to the other points. The new line also
/// passes through a second point, which becomes the next pivot.
pub fn lad_fit(x: &[f64], y: &[f64]) -> Result<LadFit> {
    if x.len() != y.len() {
        return Err(Error::Argument("x and y lengths differ".into()));
    }
    if x.len() < 2 {
        return Err(Error::Data("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in regression data".into()));
    }
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let xc: Vec<f64> = x.iter().map(|v| v - xbar).collect();
    let sxx: f64 = xc.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::Data("all x values are equal".into()));
    }
    let ybar = y.iter().sum::<f64>() / n;
    let b0 = xc.iter().zip(y).map(|(a, b)| a * (b - ybar)).sum::<f64>() / sxx;
    let mut pivot = (0..x.len())
        .min_by(|&i, &j| {
            let ri = (y[i] - ybar - b0 * xc[i]).abs();
            let rj = (y[j] - ybar - b0 * xc[j]).abs();
            ri.total_cmp(&rj)
        })
        .unwrap_or(0);

    let mut best: Option<(f64, f64, f64)> = None;
    let mut tried = Vec::new();
    for _ in 0..10 * x.len() + 10 {
        tried.push(pivot);
        let (b, next) = best_slope_through(&xc, y, pivot);
        let a = y[pivot] - b * xc[pivot];
        let obj = lad_objective(&xc, y, a, b);
        let improved = best.is_none_or(|(_, _, o)| obj < o - 1e-12 * o.max(1.0));
        if improved {
            best = Some((a, b, obj));
            tried.clear();
            tried.push(pivot);
            pivot = next;
            continue;
        }
        // No gain rotating about this pivot: try any other point on the
        // current best line before stopping.
        let (ba, bb, _) = best.unwrap_or((a, b, obj));
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
        match (0..x.len())
            .find(|&i| !tried.contains(&i) && (y[i] - ba - bb * xc[i]).abs() <= 1e-12 * scale)
        {
            Some(i) => pivot = i,
            None => break,
        }
    }
    let (a, b, obj) = best.ok_or_else(|| Error::Numeric("LAD descent made no progress".into()))?;
    Ok(LadFit {
        intercept: a - b * xbar,
        slope: b,
        objective: obj,
    })
}

/// Optimal slope for lines through point `k`, with the index of the
/// point the optimal line also passes through.
fn best_slope_through(x: &[f64], y: &[f64], k: usize) -> (f64, usize) {
    let mut cand: Vec<(f64, f64, usize)> = (0..x.len())
        .filter(|&i| x[i] != x[k])
        .map(|i| ((y[i] - y[k]) / (x[i] - x[k]), (x[i] - x[k]).abs(), i))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let total: f64 = cand.iter().map(|c| c.1).sum();
    let mut acc = 0.0;
    for c in &cand {
        acc += c.1;
        if acc >= 0.5 * total {
            return (c.0, c.2);
        }
    }
    let last = cand[cand.len() - 1];
    (last.0, last.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianTrendFit {
    pub threshold: f64,
    pub intercept: f64,
    /// Metres per year.
    pub slope: f64,
    /// Standard deviation of the bootstrap slopes.
    pub slope_se: f64,
    /// Two-sided bootstrap p-value for a zero slope.
    pub p_value: f64,
    pub n: usize,
    pub boot_reps: usize,
}

/// Median regression of height on completion year for buildings taller
/// than `threshold`, with a case-resampling bootstrap.
pub fn fit_median_trend(
    catalog: &Catalog,
    threshold: f64,
    boot_reps: usize,
    seed: u64,
) -> Result<MedianTrendFit> {
    let tall = catalog.taller_than(threshold);
    if tall.len() < MIN_MEDIAN_POINTS {
        return Err(Error::Data(format!(
            "{} buildings above {threshold} m; at least {MIN_MEDIAN_POINTS} required",
            tall.len()
        )));
    }
    if boot_reps == 0 {
        return Err(Error::Argument(
            "need at least one bootstrap replicate".into(),
        ));
    }
    let x: Vec<f64> = tall.iter().map(|r| r.year as f64).collect();
    let y: Vec<f64> = tall.iter().map(|r| r.height).collect();
    let fit = lad_fit(&x, &y)?;

    let slopes: Vec<f64> = (0..boot_reps)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let idx: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            let bx: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let by: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            // Resamples with a single distinct year carry no slope.
            lad_fit(&bx, &by).ok().map(|f| f.slope)
        })
        .collect();
    if slopes.len() < 2 {
        return Err(Error::Data(
            "bootstrap produced too few usable replicates".into(),
        ));
    }
    let m = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / m;
    let sd = (slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let le = slopes.iter().filter(|&&s| s <= 0.0).count() as f64;
    let ge = slopes.iter().filter(|&&s| s >= 0.0).count() as f64;
    let p = (2.0 * ((le + 1.0) / (m + 1.0)).min((ge + 1.0) / (m + 1.0))).min(1.0);
    Ok(MedianTrendFit {
        threshold,
        intercept: fit.intercept,
        slope: fit.slope,
        slope_se: sd,
        p_value: p,
        n: x.len(),
        boot_reps,
    })
}
