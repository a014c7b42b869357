//! Generalized Pareto distribution: kernel, sampling, fitting and the
//! threshold diagnostics used to pick a modeling threshold.

mod diagnostics;
mod fit;

pub use diagnostics::{
    hill_estimates, kolmogorov_p_value, ks_statistic_uniform, threshold_scan, uniform_qq, QqPoint,
    QqResult, ThresholdScan, ThresholdScanRow, DEFAULT_SCAN_GRID,
};
pub use fit::{fit_gpd, fit_gpd_with, FitMode, GpdFit, GpdFitOptions, GpdSe, MIN_EXCEEDANCES};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Below this |xi| the exponential limit is used.
pub const XI_ZERO: f64 = 1e-9;

/// Location, scale and shape of a generalized Pareto distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Cdf,
    Pdf,
    LogPdf,
    Survival,
}

impl GpdParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        let p = Self { mu, sigma, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.xi.is_finite()) {
            return Err(Error::Argument("mu and xi must be finite".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Argument(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Finite upper end of the support when xi < 0.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.xi < -XI_ZERO).then(|| self.mu - self.sigma / self.xi)
    }

    pub fn in_support(&self, x: f64) -> bool {
        x >= self.mu && self.upper_endpoint().is_none_or(|top| x <= top)
    }

    /// `-log survival(x)` for `x` at or above `mu`; `+inf` past a finite
    /// upper endpoint.
    ///
    /// This is the standard-exponential transform of the margin.
    pub(crate) fn exp_scale(&self, x: f64) -> f64 {
        let y = (x - self.mu) / self.sigma;
        if self.xi.abs() < XI_ZERO {
            y
        } else {
            let a = self.xi * y;
            if a <= -1.0 {
                f64::INFINITY
            } else {
                a.ln_1p() / self.xi
            }
        }
    }

    /// Inverse of [`exp_scale`](Self::exp_scale).
    pub(crate) fn from_exp_scale(&self, t: f64) -> f64 {
        if self.xi.abs() < XI_ZERO {
            self.mu + self.sigma * t
        } else {
            self.mu + self.sigma * (self.xi * t).exp_m1() / self.xi
        }
    }

    /// Log density, `-inf` outside the support.
    pub(crate) fn log_density(&self, x: f64) -> f64 {
        if x < self.mu {
            return f64::NEG_INFINITY;
        }
        let t = self.exp_scale(x);
        if !t.is_finite() {
            return f64::NEG_INFINITY;
        }
        -self.sigma.ln() - (1.0 + self.xi) * t
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.mu {
            return 0.0;
        }
        -(-self.exp_scale(x)).exp_m1()
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.mu {
            return 1.0;
        }
        (-self.exp_scale(x)).exp()
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        if !self.in_support(x) {
            return Err(Error::Domain(format!("{x} outside GPD support")));
        }
        Ok(self.log_density(x))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.log_pdf(x).map(f64::exp)
    }

    pub fn eval(&self, x: f64, kind: EvalKind) -> Result<f64> {
        match kind {
            EvalKind::Cdf => Ok(self.cdf(x)),
            EvalKind::Survival => Ok(self.survival(x)),
            EvalKind::Pdf => self.pdf(x),
            EvalKind::LogPdf => self.log_pdf(x),
        }
    }

    /// Exact inverse of the cdf.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Argument(format!("probability {p} outside (0, 1)")));
        }
        Ok(self.from_exp_scale(-(-p).ln_1p()))
    }

    /// Value with the given upper-tail probability, accurate for tiny `s`.
    pub fn quantile_upper(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Argument(format!(
                "tail probability {s} outside (0, 1)"
            )));
        }
        Ok(self.from_exp_scale(-s.ln()))
    }

    /// Inverse-cdf draws from an arbitrary generator.
    pub fn sample_with<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.from_exp_scale(-rng::open_unit(rng).ln()))
            .collect()
    }
}

const SAMPLE_CHUNK: usize = 4096;

/// `n` seeded draws. Chunks use independent streams, so the sequence is the
/// same for any thread count.
pub fn gpd_sample(params: &GpdParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            params.sample_with(&mut rng::stream(seed, c as u64), len)
        })
        .collect();
    Ok(chunks.concat())
}
