//! Completion-count trend: a Poisson log-linear model in the year, its
//! parametric-bootstrap forecast, and a historical backtest.

mod lad;

pub use lad::{
    fit_median_trend, lad_fit, lad_objective, LadFit, MedianTrendFit, MIN_MEDIAN_POINTS,
};

use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{counts_by_year, Catalog};
use crate::error::{Error, Result};
use crate::optim::{self, OptimOptions, ParamTransform};
use crate::rng;

/// First year of the post-war series.
pub const DEFAULT_START_YEAR: i32 = 1950;

/// `E[N_t] = exp(alpha + beta * t)` fitted by maximum likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonTrendFit {
    pub alpha: f64,
    pub beta: f64,
    /// Covariance of `(alpha, beta)`.
    pub cov: [[f64; 2]; 2],
    /// `sum n_t (alpha + beta t) - exp(alpha + beta t)`.
    pub loglik: f64,
    pub years_used: (i32, i32),
}

impl PoissonTrendFit {
    /// A fit with known parameters and no estimation uncertainty.
    pub fn exact(alpha: f64, beta: f64, years_used: (i32, i32)) -> Self {
        Self {
            alpha,
            beta,
            cov: [[0.0; 2]; 2],
            loglik: f64::NAN,
            years_used,
        }
    }

    pub fn mean(&self, year: i32) -> f64 {
        (self.alpha + self.beta * year as f64).exp()
    }

    pub fn se_alpha(&self) -> f64 {
        self.cov[0][0].max(0.0).sqrt()
    }

    pub fn se_beta(&self) -> f64 {
        self.cov[1][1].max(0.0).sqrt()
    }

    /// `exp(beta) - 1`.
    pub fn annual_growth(&self) -> f64 {
        self.beta.exp_m1()
    }

    /// Sum of expected counts over `[from, to]`.
    pub fn expected_total(&self, from: i32, to: i32) -> f64 {
        (from..=to).map(|t| self.mean(t)).sum()
    }

    /// Draws `(alpha, beta)` from the normal approximation.
    fn draw_params<R: rand::Rng>(&self, rng: &mut R) -> (f64, f64) {
        let [[c11, c12], [_, c22]] = self.cov;
        let l11 = c11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { c12 / l11 } else { 0.0 };
        let l22 = (c22 - l21 * l21).max(0.0).sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        (self.alpha + l11 * z1, self.beta + l21 * z1 + l22 * z2)
    }
}

/// Maximum likelihood fit of the log-linear Poisson trend.
///
/// Years are centered at the midpoint of their range while fitting.
pub fn fit_poisson_trend(counts: &[(i32, u64)]) -> Result<PoissonTrendFit> {
    let years: Vec<i32> = counts.iter().map(|c| c.0).collect();
    let (lo, hi) = match (years.iter().min(), years.iter().max()) {
        (Some(&lo), Some(&hi)) if lo < hi => (lo, hi),
        _ => return Err(Error::Data("need at least two distinct years".into())),
    };
    if counts.iter().all(|c| c.1 == 0) {
        return Err(Error::Data("all counts are zero".into()));
    }
    let center = 0.5 * (lo as f64 + hi as f64);
    let data: Vec<(f64, f64)> = counts
        .iter()
        .map(|&(t, n)| (t as f64 - center, n as f64))
        .collect();
    let loglik = |a: f64, b: f64| {
        data.iter()
            .map(|&(t, n)| {
                let eta = a + b * t;
                n * eta - eta.exp()
            })
            .sum::<f64>()
    };

    let (a0, b0) = log_linear_start(&data);
    let r = optim::maximize(
        |p| loglik(p[0], p[1]),
        &[a0, b0],
        &[ParamTransform::Identity, ParamTransform::Identity],
        &OptimOptions::default(),
    )?;
    if !r.converged {
        return Err(Error::Optimization(format!(
            "Poisson trend did not converge (gradient {:.3e})",
            r.gradient_norm
        )));
    }

    // Newton polish with the analytic score and information.
    let (mut a, mut b) = (r.argmax[0], r.argmax[1]);
    let mut info = [[0.0; 2]; 2];
    for _ in 0..50 {
        let (mut g0, mut g1) = (0.0, 0.0);
        info = [[0.0; 2]; 2];
        for &(t, n) in &data {
            let m = (a + b * t).exp();
            g0 += n - m;
            g1 += (n - m) * t;
            info[0][0] += m;
            info[0][1] += m * t;
            info[1][1] += m * t * t;
        }
        info[1][0] = info[0][1];
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        if !(det > 0.0) {
            return Err(Error::Numeric(
                "singular information in Poisson trend".into(),
            ));
        }
        let da = (info[1][1] * g0 - info[0][1] * g1) / det;
        let db = (info[0][0] * g1 - info[1][0] * g0) / det;
        a += da;
        b += db;
        if da.abs() < 1e-14 * a.abs().max(1.0) && db.abs() < 1e-15 {
            break;
        }
    }
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    let centered = [
        [info[1][1] / det, -info[0][1] / det],
        [-info[1][0] / det, info[0][0] / det],
    ];
    // alpha = a - beta * center.
    let c = center;
    let v_aa = centered[0][0] - 2.0 * c * centered[0][1] + c * c * centered[1][1];
    let v_ab = centered[0][1] - c * centered[1][1];
    Ok(PoissonTrendFit {
        alpha: a - b * c,
        beta: b,
        cov: [[v_aa, v_ab], [v_ab, centered[1][1]]],
        loglik: loglik(a, b),
        years_used: (lo, hi),
    })
}

/// Least-squares line through `log(n + 0.5)`.
fn log_linear_start(data: &[(f64, f64)]) -> (f64, f64) {
    let k = data.len() as f64;
    let mt = data.iter().map(|d| d.0).sum::<f64>() / k;
    let ys: Vec<f64> = data.iter().map(|d| (d.1 + 0.5).ln()).collect();
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = data.iter().map(|d| (d.0 - mt).powi(2)).sum();
    let sxy: f64 = data
        .iter()
        .zip(&ys)
        .map(|(d, y)| (d.0 - mt) * (y - my))
        .sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mt, b)
}

/// Predictive band for one year's count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBand {
    pub year: i32,
    /// Plug-in expectation `exp(alpha + beta t)`.
    pub mean: f64,
    pub lo95: u64,
    pub hi95: u64,
}

/// Simulated counts, one row per replicate.
fn simulate_counts(
    fit: &PoissonTrendFit,
    from: i32,
    to: i32,
    reps: usize,
    seed: u64,
) -> Vec<Vec<u64>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let (a, b) = fit.draw_params(&mut rng);
            (from..=to)
                .map(|t| poisson_draw((a + b * t as f64).exp(), &mut rng))
                .collect()
        })
        .collect()
}

fn poisson_draw<R: rand::Rng>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => lambda.round() as u64,
    }
}

/// Inverse empirical cdf (smallest value with at least `p` of the mass).
fn empirical_quantile(sorted: &[u64], p: f64) -> u64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

fn check_years(from: i32, to: i32) -> Result<()> {
    if from > to {
        return Err(Error::Argument(format!("year range {from}..{to} is empty")));
    }
    Ok(())
}

/// Central predictive interval of the yearly count at `level`.
pub fn predictive_interval(
    fit: &PoissonTrendFit,
    from: i32,
    to: i32,
    reps: usize,
    seed: u64,
    level: f64,
) -> Result<Vec<(i32, u64, u64)>> {
    check_years(from, to)?;
    if reps < 100 {
        return Err(Error::Argument(format!(
            "{reps} replicates; at least 100 required"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("level {level} outside (0, 1)")));
    }
    let sims = simulate_counts(fit, from, to, reps, seed);
    let tail = 0.5 * (1.0 - level);
    Ok((from..=to)
        .enumerate()
        .map(|(j, year)| {
            let mut col: Vec<u64> = sims.iter().map(|row| row[j]).collect();
            col.sort_unstable();
            (
                year,
                empirical_quantile(&col, tail),
                empirical_quantile(&col, 1.0 - tail),
            )
        })
        .collect())
}

/// Yearly 95% predictive bands with parameter and Poisson uncertainty.
pub fn predict_counts(
    fit: &PoissonTrendFit,
    from: i32,
    to: i32,
    reps: usize,
    seed: u64,
) -> Result<Vec<ForecastBand>> {
    Ok(predictive_interval(fit, from, to, reps, seed, 0.95)?
        .into_iter()
        .map(|(year, lo95, hi95)| ForecastBand {
            year,
            mean: fit.mean(year),
            lo95,
            hi95,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeForecast {
    pub from: i32,
    pub to: i32,
    /// Monte Carlo mean of the total count.
    pub mean: f64,
    /// Standard deviation of the simulated totals.
    pub se: f64,
    pub reps: usize,
}

/// Distribution of the total count over `[from, to]`, simulating parameter
/// draws and then Poisson counts.
pub fn cumulative_forecast(
    fit: &PoissonTrendFit,
    from: i32,
    to: i32,
    reps: usize,
    seed: u64,
) -> Result<CumulativeForecast> {
    check_years(from, to)?;
    if reps < 2 {
        return Err(Error::Argument("need at least 2 replicates".into()));
    }
    let totals: Vec<f64> = simulate_counts(fit, from, to, reps, seed)
        .iter()
        .map(|row| row.iter().sum::<u64>() as f64)
        .collect();
    let n = reps as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CumulativeForecast {
        from,
        to,
        mean,
        se: var.sqrt(),
        reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub start: i32,
    pub cutoff: i32,
    pub horizon_end: i32,
    /// Expected completions over `[start, horizon_end]` from the fit on
    /// `[start, cutoff]`.
    pub predicted_total: f64,
    pub actual_total: u64,
    /// `(predicted - actual) / actual`.
    pub pct_error: f64,
    pub fit: PoissonTrendFit,
}

/// Fits on `[start, cutoff]` and compares the extrapolated cumulative count
/// through `horizon_end` with what the catalog records.
pub fn backtest(catalog: &Catalog, start: i32, cutoff: i32, horizon_end: i32) -> Result<Backtest> {
    let (first, last) = match (catalog.records().first(), catalog.records().last()) {
        (Some(f), Some(l)) => (f.year, l.year),
        _ => return Err(Error::Data("empty catalog".into())),
    };
    if cutoff < first || cutoff > last {
        return Err(Error::Argument(format!(
            "cutoff {cutoff} outside catalog years {first}..{last}"
        )));
    }
    if !(start <= cutoff && cutoff <= horizon_end) {
        return Err(Error::Argument(format!(
            "need start {start} <= cutoff {cutoff} <= horizon {horizon_end}"
        )));
    }
    let fit = fit_poisson_trend(&counts_by_year(catalog, start, cutoff)?)?;
    let predicted_total = fit.expected_total(start, horizon_end);
    let actual_total = catalog.years(start, horizon_end).len() as u64;
    if actual_total == 0 {
        return Err(Error::Data(
            "no completions in the comparison window".into(),
        ));
    }
    Ok(Backtest {
        start,
        cutoff,
        horizon_end,
        predicted_total,
        actual_total,
        pct_error: (predicted_total - actual_total as f64) / actual_total as f64,
        fit,
    })
}
