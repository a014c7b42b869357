use serde::{Deserialize, Serialize};

use super::GpdParams;
use crate::error::{Error, Result};
use crate::optim::{self, OptimOptions, ParamTransform};

/// Fits on fewer exceedances are refused.
pub const MIN_EXCEEDANCES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Location free on `(0, min x)`.
    #[default]
    FreeLocation,
    /// Location pinned to the threshold.
    FixedLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdSe {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub params: GpdParams,
    pub se: GpdSe,
    pub loglik: f64,
    pub threshold: f64,
    pub n_exceed: usize,
    pub mode: FitMode,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GpdFitOptions {
    pub mode: FitMode,
    pub optim: OptimOptions,
}

/// Maximum likelihood fit with a free location.
pub fn fit_gpd(exceedances: &[f64], u: f64) -> Result<GpdFit> {
    fit_gpd_with(exceedances, u, &GpdFitOptions::default())
}

pub fn fit_gpd_with(exceedances: &[f64], u: f64, opts: &GpdFitOptions) -> Result<GpdFit> {
    let n = exceedances.len();
    if n < MIN_EXCEEDANCES {
        return Err(Error::Data(format!(
            "{n} exceedances of {u}; at least {MIN_EXCEEDANCES} required"
        )));
    }
    if let Some(x) = exceedances.iter().find(|&&x| !(x > u) || !x.is_finite()) {
        return Err(Error::Argument(format!(
            "value {x} does not exceed threshold {u}"
        )));
    }
    let min_x = exceedances.iter().copied().fold(f64::INFINITY, f64::min);

    let loglik = |p: &GpdParams| exceedances.iter().map(|&x| p.log_density(x)).sum::<f64>();

    let (params, se, result) = match opts.mode {
        FitMode::FixedLocation => {
            let (s0, x0) = moment_start(exceedances, u);
            let transforms = [ParamTransform::Log, ParamTransform::Identity];
            let r = optim::maximize(
                |v| {
                    loglik(&GpdParams {
                        mu: u,
                        sigma: v[0],
                        xi: v[1],
                    })
                },
                &[s0, x0],
                &transforms,
                &opts.optim,
            )?;
            let se = r.standard_errors(&transforms)?;
            let params = GpdParams {
                mu: u,
                sigma: r.argmax[0],
                xi: r.argmax[1],
            };
            (
                params,
                GpdSe {
                    mu: 0.0,
                    sigma: se[0],
                    xi: se[1],
                },
                r,
            )
        }
        FitMode::FreeLocation => {
            if min_x <= 0.0 {
                return Err(Error::Domain(
                    "free-location fit needs positive data".into(),
                ));
            }
            let mu0 = if u > 0.0 { u } else { 0.5 * min_x };
            let (s0, x0) = moment_start(exceedances, mu0);
            let transforms = [
                ParamTransform::LogitInterval { lo: 0.0, hi: min_x },
                ParamTransform::Log,
                ParamTransform::Identity,
            ];
            let r = optim::maximize(
                |v| {
                    loglik(&GpdParams {
                        mu: v[0],
                        sigma: v[1],
                        xi: v[2],
                    })
                },
                &[mu0, s0, x0],
                &transforms,
                &opts.optim,
            )?;
            let se = r.standard_errors(&transforms)?;
            let params = GpdParams {
                mu: r.argmax[0],
                sigma: r.argmax[1],
                xi: r.argmax[2],
            };
            (
                params,
                GpdSe {
                    mu: se[0],
                    sigma: se[1],
                    xi: se[2],
                },
                r,
            )
        }
    };
    if !result.converged {
        return Err(Error::Optimization(format!(
            "GPD fit above {u} did not converge after {} iterations (gradient {:.3e}, loglik {})",
            result.iterations, result.gradient_norm, result.loglik
        )));
    }
    Ok(GpdFit {
        params,
        se,
        loglik: result.loglik,
        threshold: u,
        n_exceed: n,
        mode: opts.mode,
        iterations: result.iterations,
    })
}

/// Method-of-moments start for (sigma, xi) of the excesses over `mu`.
fn moment_start(x: &[f64], mu: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v - mu).sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0 && mean > 0.0) {
        return (mean.abs().max(1e-3), 0.1);
    }
    let ratio = mean * mean / var;
    let xi = (0.5 * (1.0 - ratio)).clamp(-0.4, 0.8);
    let sigma = (mean * (1.0 - xi)).max(1e-3 * mean);
    (sigma, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evt::gpd_sample;
    use approx::assert_relative_eq;

    #[test]
    fn too_few_or_invalid_points() {
        assert!(matches!(fit_gpd(&[300.0; 9], 225.0), Err(Error::Data(_))));
        let mut bad = vec![300.0; 12];
        bad[3] = 225.0;
        assert!(matches!(fit_gpd(&bad, 225.0), Err(Error::Argument(_))));
    }

    #[test]
    fn scale_equivariance() {
        let g = GpdParams::new(225.0, 31.5, 0.2).unwrap();
        let x = gpd_sample(&g, 200, 5).unwrap();
        let u = 224.9;
        let c = 3.8;
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        for mode in [FitMode::FixedLocation, FitMode::FreeLocation] {
            let o = GpdFitOptions {
                mode,
                ..Default::default()
            };
            let a = fit_gpd_with(&x, u, &o).unwrap();
            let b = fit_gpd_with(&scaled, u * c, &o).unwrap();
            assert_relative_eq!(a.params.xi, b.params.xi, epsilon = 1e-6);
            assert_relative_eq!(a.params.sigma * c, b.params.sigma, max_relative = 1e-6);
        }
    }

    #[test]
    fn free_location_runs_to_the_sample_minimum() {
        let g = GpdParams::new(225.0, 31.5, 0.2).unwrap();
        let x = gpd_sample(&g, 325, 77).unwrap();
        let fit = fit_gpd(&x, 225.0).unwrap();
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(fit.params.mu < min && fit.params.mu > min - 1e-3);
        let fixed = fit_gpd_with(
            &x,
            225.0,
            &GpdFitOptions {
                mode: FitMode::FixedLocation,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fit.loglik >= fixed.loglik);
        assert!(fit.se.xi > 0.0 && fit.se.sigma > 0.0);
    }
}
