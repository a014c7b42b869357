use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_gpd_with, FitMode, GpdFit, GpdFitOptions, MIN_EXCEEDANCES};
use crate::error::{Error, Result};
use crate::optim::OptimOptions;

/// Normal quantiles for two-sided 50% and 95% intervals.
const Z50: f64 = 0.674_489_750_196_081_7;
const Z95: f64 = 1.959_963_984_540_054;

/// 150 m to 350 m in 25 m steps.
pub const DEFAULT_SCAN_GRID: [f64; 9] = [
    150.0, 175.0, 200.0, 225.0, 250.0, 275.0, 300.0, 325.0, 350.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScanRow {
    pub u: f64,
    pub xi_hat: f64,
    pub xi_lo50: f64,
    pub xi_hi50: f64,
    pub xi_lo95: f64,
    pub xi_hi95: f64,
    pub sigma_hat: f64,
    pub sigma_lo95: f64,
    pub sigma_hi95: f64,
    pub n_exceed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub rows: Vec<ThresholdScanRow>,
    /// Thresholds left with too few exceedances to fit.
    pub skipped: Vec<f64>,
}

impl ThresholdScanRow {
    fn from_fit(fit: &GpdFit) -> Self {
        let (xi, se_xi) = (fit.params.xi, fit.se.xi);
        let (sigma, se_sigma) = (fit.params.sigma, fit.se.sigma);
        Self {
            u: fit.threshold,
            xi_hat: xi,
            xi_lo50: xi - Z50 * se_xi,
            xi_hi50: xi + Z50 * se_xi,
            xi_lo95: xi - Z95 * se_xi,
            xi_hi95: xi + Z95 * se_xi,
            sigma_hat: sigma,
            sigma_lo95: sigma - Z95 * se_sigma,
            sigma_hi95: sigma + Z95 * se_sigma,
            n_exceed: fit.n_exceed,
        }
    }
}

/// Fixed-location GPD fits above each threshold in `u_grid`, with Wald
/// intervals.
pub fn threshold_scan(
    heights: &[f64],
    u_grid: &[f64],
    optim: &OptimOptions,
) -> Result<ThresholdScan> {
    if u_grid.is_empty() {
        return Err(Error::Argument("threshold grid is empty".into()));
    }
    if u_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument(
            "threshold grid must be strictly ascending".into(),
        ));
    }
    let opts = GpdFitOptions {
        mode: FitMode::FixedLocation,
        optim: *optim,
    };
    let fits: Vec<Option<Result<GpdFit>>> = u_grid
        .par_iter()
        .map(|&u| {
            let exceed: Vec<f64> = heights.iter().copied().filter(|&h| h > u).collect();
            (exceed.len() >= MIN_EXCEEDANCES).then(|| fit_gpd_with(&exceed, u, &opts))
        })
        .collect();
    let mut scan = ThresholdScan {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for (&u, fit) in u_grid.iter().zip(fits) {
        match fit {
            Some(f) => scan.rows.push(ThresholdScanRow::from_fit(&f?)),
            None => scan.skipped.push(u),
        }
    }
    Ok(scan)
}

/// Hill estimates of the shape over the `k` largest order statistics.
pub fn hill_estimates(heights: &[f64], ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    if heights.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Domain("Hill estimator needs positive data".into()));
    }
    let n = heights.len();
    let mut desc = heights.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let logs: Vec<f64> = desc.iter().map(|x| x.ln()).collect();
    ks.iter()
        .map(|&k| {
            if k == 0 || k >= n {
                return Err(Error::Argument(format!("k = {k} must lie in 1..{n}")));
            }
            let excess: f64 = logs[..k].iter().map(|l| l - logs[k]).sum();
            Ok((k, excess / k as f64))
        })
        .collect()
}

/// One point of a probability-probability plot on the uniform scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    /// Plotting position `(i - 0.5) / n`.
    pub emp: f64,
    /// Fitted cdf at the i-th smallest observation.
    pub theo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqResult {
    pub points: Vec<QqPoint>,
    pub ks_stat: f64,
    pub ks_p_value: f64,
}

/// Transforms heights by the fitted cdf; under the model the values are
/// standard uniform.
pub fn uniform_qq(heights: &[f64], fit: &GpdFit) -> Result<QqResult> {
    if heights.is_empty() {
        return Err(Error::Argument("no heights to transform".into()));
    }
    let mut u: Vec<f64> = heights.iter().map(|&h| fit.params.cdf(h)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let points = u
        .iter()
        .enumerate()
        .map(|(i, &theo)| QqPoint {
            emp: (i as f64 + 0.5) / n,
            theo,
        })
        .collect();
    let ks_stat = ks_statistic_uniform(&u);
    Ok(QqResult {
        points,
        ks_stat,
        ks_p_value: kolmogorov_p_value(ks_stat, u.len()),
    })
}

/// Kolmogorov-Smirnov distance between sorted values in [0, 1] and the
/// uniform cdf.
pub fn ks_statistic_uniform(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &u)| {
        let i = i as f64;
        d.max((i + 1.0) / n - u).max(u - i / n)
    })
}

/// Asymptotic p-value of the one-sample KS statistic, with Stephens'
/// finite-sample correction.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
