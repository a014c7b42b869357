use serde::{Deserialize, Serialize};

use super::{AsymLogisticParams, BivParams, CensoringSpec};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::evt::{fit_gpd_with, FitMode, GpdFitOptions, GpdParams, MIN_EXCEEDANCES};
use crate::optim::{self, OptimOptions, ParamTransform};

/// Fits on fewer records in the sampling region are refused.
pub const MIN_CONTRIBUTING: usize = 30;
/// Fits need at least this many records exceeding both thresholds.
pub const MIN_BOTH_EXCEED: usize = 5;

/// Where a record falls relative to the two thresholds (both strict).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Both,
    /// Height above `u`, floors at or below `v`.
    HeightOnly,
    /// Floors above `v`, height at or below `u`.
    FloorsOnly,
    /// At or below both; carries no likelihood contribution.
    Below,
}

pub fn classify(height: f64, floors: f64, spec: &CensoringSpec) -> Region {
    match (height > spec.u, floors > spec.v) {
        (true, true) => Region::Both,
        (true, false) => Region::HeightOnly,
        (false, true) => Region::FloorsOnly,
        (false, false) => Region::Below,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodForm {
    /// Censored contributions divided by the probability of the sampling
    /// region, so each record has a proper conditional law.
    #[default]
    Conditioned,
    /// Censored contributions without the region normalization.
    Unconditioned,
    /// Density times region mass, taken literally: `f(x,y) P(X>u,Y>v)`,
    /// `f_Y(y) P(X<=u)` and `f_X(x) P(Y<=v)`.
    Displayed,
}

/// Model probabilities of the three contributing regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMasses {
    pub both: f64,
    pub height_only: f64,
    pub floors_only: f64,
}

impl RegionMasses {
    pub fn total(&self) -> f64 {
        self.both + self.height_only + self.floors_only
    }
}

/// Exponential-scale thresholds, if both lie in their margins' supports.
fn exp_thresholds(p: &BivParams, spec: &CensoringSpec) -> Option<(f64, f64)> {
    let v = spec.scaled_v();
    if !(p.margin_x.mu <= spec.u && p.margin_y.mu <= v) {
        return None;
    }
    Some((p.margin_x.exp_scale(spec.u), p.margin_y.exp_scale(v)))
}

pub fn region_masses(params: &BivParams, spec: &CensoringSpec) -> Result<RegionMasses> {
    params.validate()?;
    spec.validate()?;
    let (ut, vt) = exp_thresholds(params, spec)
        .ok_or_else(|| Error::Domain("thresholds below the margin locations".into()))?;
    let s = (-params.dep.exponent(ut, vt).v).exp();
    Ok(RegionMasses {
        both: s,
        height_only: (-ut).exp() - s,
        floors_only: (-vt).exp() - s,
    })
}

/// A contributing record with floors in metres.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Point {
    pub region: Region,
    pub x: f64,
    pub y: f64,
}

pub(crate) fn points(catalog: &Catalog, spec: &CensoringSpec) -> Vec<Point> {
    catalog
        .iter()
        .filter_map(|r| {
            let region = classify(r.height, r.floors as f64, spec);
            (region != Region::Below).then_some(Point {
                region,
                x: r.height,
                y: r.floors as f64 * spec.floor_scale,
            })
        })
        .collect()
}

fn contribution(
    p: &BivParams,
    spec: &CensoringSpec,
    ut: f64,
    vt: f64,
    pt: &Point,
    form: LikelihoodForm,
) -> f64 {
    let log_scale = spec.floor_scale.ln();
    let displayed = form == LikelihoodForm::Displayed;
    match pt.region {
        Region::Both => {
            let l = p.log_density_scaled(pt.x, pt.y) + log_scale;
            if displayed {
                l - p.dep.exponent(ut, vt).v
            } else {
                l
            }
        }
        Region::HeightOnly => {
            let lx = p.margin_x.log_density(pt.x);
            if !lx.is_finite() {
                return f64::NEG_INFINITY;
            }
            if displayed {
                lx + (-(-vt).exp_m1()).ln()
            } else {
                lx + p.dep.conditional_cdf_y(p.margin_x.exp_scale(pt.x), vt).ln()
            }
        }
        Region::FloorsOnly => {
            let ly = p.margin_y.log_density(pt.y);
            if !ly.is_finite() {
                return f64::NEG_INFINITY;
            }
            if displayed {
                ly + log_scale + (-(-ut).exp_m1()).ln()
            } else {
                ly + log_scale + p.dep.conditional_cdf_x(ut, p.margin_y.exp_scale(pt.y)).ln()
            }
        }
        Region::Below => 0.0,
    }
}

/// Log-likelihood of contributing points; `-inf` for inadmissible
/// parameters.
pub(crate) fn loglik_points(
    pts: &[Point],
    p: &BivParams,
    spec: &CensoringSpec,
    form: LikelihoodForm,
) -> f64 {
    if p.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    let Some((ut, vt)) = exp_thresholds(p, spec) else {
        return f64::NEG_INFINITY;
    };
    let mut total = 0.0;
    for pt in pts {
        total += contribution(p, spec, ut, vt, pt, form);
    }
    if form == LikelihoodForm::Conditioned {
        let region = (-ut).exp() + (-vt).exp() - (-p.dep.exponent(ut, vt).v).exp();
        total -= pts.len() as f64 * region.ln();
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

/// Unnormalized log contribution of one record: the joint density, or
/// the density of the exceeding coordinate times the conditional mass of
/// the other one below its threshold.
pub fn record_log_contribution(
    height: f64,
    floors: f64,
    params: &BivParams,
    spec: &CensoringSpec,
) -> Result<f64> {
    params.validate()?;
    spec.validate()?;
    let region = classify(height, floors, spec);
    if region == Region::Below {
        return Err(Error::Argument(format!(
            "record ({height}, {floors}) is below both thresholds"
        )));
    }
    let (ut, vt) = exp_thresholds(params, spec)
        .ok_or_else(|| Error::Domain("thresholds below the margin locations".into()))?;
    let pt = Point {
        region,
        x: height,
        y: floors * spec.floor_scale,
    };
    let c = contribution(params, spec, ut, vt, &pt, LikelihoodForm::Unconditioned);
    if !c.is_finite() {
        return Err(Error::Domain(format!(
            "record ({height}, {floors}) outside the model support"
        )));
    }
    Ok(c)
}

pub fn censored_loglik(catalog: &Catalog, params: &BivParams, spec: &CensoringSpec) -> Result<f64> {
    censored_loglik_with(catalog, params, spec, LikelihoodForm::default())
}

pub fn censored_loglik_with(
    catalog: &Catalog,
    params: &BivParams,
    spec: &CensoringSpec,
    form: LikelihoodForm,
) -> Result<f64> {
    params.validate()?;
    spec.validate()?;
    let pts = points(catalog, spec);
    if pts.is_empty() {
        return Err(Error::Data("no record exceeds either threshold".into()));
    }
    if exp_thresholds(params, spec).is_none() {
        return Err(Error::Domain(
            "thresholds below the margin locations".into(),
        ));
    }
    let l = loglik_points(&pts, params, spec, form);
    if !l.is_finite() {
        return Err(Error::Domain(
            "a contributing record lies outside the model support".into(),
        ));
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivSe {
    pub mu_x: f64,
    pub sigma_x: f64,
    pub xi_x: f64,
    pub mu_y: f64,
    pub sigma_y: f64,
    pub xi_y: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    /// Infinite, written as null, when `r` is pinned at [`MAX_FITTED_R`]:
    /// the likelihood is flat there and carries no curvature for `r`.
    pub r: f64,
}

impl BivSe {
    fn from_slice(s: &[f64]) -> Self {
        Self {
            mu_x: s[0],
            sigma_x: s[1],
            xi_x: s[2],
            mu_y: s[3],
            sigma_y: s[4],
            xi_y: s[5],
            theta_x: s[6],
            theta_y: s[7],
            r: s[8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivFit {
    pub margin_x: GpdParams,
    /// On scaled floors.
    pub margin_y: GpdParams,
    pub dep: AsymLogisticParams,
    pub se: BivSe,
    pub loglik: f64,
    pub spec: CensoringSpec,
    pub form: LikelihoodForm,
    pub n_full: usize,
    /// Records with the height censored (floors-only class).
    pub n_cens_x: usize,
    /// Records with the floors censored (height-only class).
    pub n_cens_y: usize,
    pub iterations: usize,
    pub rank_deficient: bool,
}

impl BivFit {
    pub fn params(&self) -> BivParams {
        BivParams {
            margin_x: self.margin_x,
            margin_y: self.margin_y,
            dep: self.dep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BivFitOptions {
    pub form: LikelihoodForm,
    pub optim: OptimOptions,
    /// Starting point; derived from marginal fits when absent.
    pub init: Option<BivParams>,
}

/// Parameter order: mu_x, sigma_x, xi_x, mu_y, sigma_y, xi_y, theta_x,
/// theta_y, r.
/// Upper bound on fitted `r`. Beyond it the shared component is already
/// within 1% of complete dependence, and likelihood gradients there are
/// mostly rounding noise.
pub const MAX_FITTED_R: f64 = 100.0;

pub(crate) fn transforms(spec: &CensoringSpec) -> [ParamTransform; 9] {
    use ParamTransform::*;
    [
        LogitInterval {
            lo: 0.0,
            hi: spec.u,
        },
        Log,
        Identity,
        LogitInterval {
            lo: 0.0,
            hi: spec.scaled_v(),
        },
        Log,
        Identity,
        ParamTransform::UNIT,
        ParamTransform::UNIT,
        LogitInterval {
            lo: 1.0,
            hi: MAX_FITTED_R,
        },
    ]
}

pub(crate) fn to_vec(p: &BivParams) -> [f64; 9] {
    [
        p.margin_x.mu,
        p.margin_x.sigma,
        p.margin_x.xi,
        p.margin_y.mu,
        p.margin_y.sigma,
        p.margin_y.xi,
        p.dep.theta_x,
        p.dep.theta_y,
        p.dep.r,
    ]
}

pub(crate) fn from_slice(v: &[f64]) -> BivParams {
    BivParams {
        margin_x: GpdParams {
            mu: v[0],
            sigma: v[1],
            xi: v[2],
        },
        margin_y: GpdParams {
            mu: v[3],
            sigma: v[4],
            xi: v[5],
        },
        dep: AsymLogisticParams {
            theta_x: v[6],
            theta_y: v[7],
            r: v[8],
        },
    }
}

/// Margin start strictly inside `(0, threshold)`: the excess distribution
/// above the threshold is kept and the location moved down.
fn margin_start(exceed: &[f64], threshold: f64) -> GpdParams {
    let (sigma_u, xi) = if exceed.len() >= MIN_EXCEEDANCES {
        let o = GpdFitOptions {
            mode: FitMode::FixedLocation,
            ..Default::default()
        };
        fit_gpd_with(exceed, threshold, &o)
            .map(|f| (f.params.sigma, f.params.xi.clamp(-0.3, 0.6)))
            .unwrap_or((0.1 * threshold, 0.1))
    } else {
        (0.1 * threshold, 0.1)
    };
    let mut d = 0.2 * threshold;
    if xi > 0.0 {
        d = d.min(0.5 * sigma_u / xi);
    }
    GpdParams {
        mu: threshold - d,
        sigma: sigma_u - xi * d,
        xi,
    }
}

/// Dependence starting points, tried best-first by initial likelihood until
/// one run converges.
const DEP_STARTS: [(f64, f64, f64); 3] = [(0.5, 0.5, 2.0), (0.9, 0.9, 3.0), (0.9, 0.9, 1.5)];

pub fn fit_bivariate(catalog: &Catalog, spec: &CensoringSpec) -> Result<BivFit> {
    fit_bivariate_with(catalog, spec, &BivFitOptions::default())
}

pub fn fit_bivariate_with(
    catalog: &Catalog,
    spec: &CensoringSpec,
    opts: &BivFitOptions,
) -> Result<BivFit> {
    spec.validate()?;
    fit_points(&points(catalog, spec), spec, opts)
}

pub(crate) fn fit_points(
    pts: &[Point],
    spec: &CensoringSpec,
    opts: &BivFitOptions,
) -> Result<BivFit> {
    let count = |r: Region| pts.iter().filter(|p| p.region == r).count();
    let (n_full, n_cens_y, n_cens_x) = (
        count(Region::Both),
        count(Region::HeightOnly),
        count(Region::FloorsOnly),
    );
    if pts.len() < MIN_CONTRIBUTING || n_full < MIN_BOTH_EXCEED {
        return Err(Error::Data(format!(
            "{} contributing records ({n_full} exceeding both); need {MIN_CONTRIBUTING} ({MIN_BOTH_EXCEED})",
            pts.len()
        )));
    }

    let starts: Vec<BivParams> = match opts.init {
        Some(p) => vec![p],
        None => {
            let xs: Vec<f64> = pts
                .iter()
                .filter(|p| p.region != Region::FloorsOnly)
                .map(|p| p.x)
                .collect();
            let ys: Vec<f64> = pts
                .iter()
                .filter(|p| p.region != Region::HeightOnly)
                .map(|p| p.y)
                .collect();
            let (mx, my) = (
                margin_start(&xs, spec.u),
                margin_start(&ys, spec.scaled_v()),
            );
            let mut starts: Vec<BivParams> = DEP_STARTS
                .iter()
                .map(|&(theta_x, theta_y, r)| BivParams {
                    margin_x: mx,
                    margin_y: my,
                    dep: AsymLogisticParams {
                        theta_x,
                        theta_y,
                        r,
                    },
                })
                .collect();
            let ll = |p: &BivParams| loglik_points(pts, p, spec, opts.form);
            starts.sort_by(|a, b| ll(b).total_cmp(&ll(a)));
            starts
        }
    };
    let tr = transforms(spec);
    let form = opts.form;
    let mut best: Option<optim::OptimResult> = None;
    for start in &starts {
        let r = optim::maximize(
            |v| loglik_points(pts, &from_slice(v), spec, form),
            &to_vec(start),
            &tr,
            &opts.optim,
        )?;
        let better = best.as_ref().is_none_or(|b| {
            (r.converged && !b.converged) || (r.converged == b.converged && r.loglik > b.loglik)
        });
        if better {
            best = Some(r);
        }
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
    }
    let r =
        best.ok_or_else(|| Error::Optimization("no starting point for the bivariate fit".into()))?;
    if !r.converged {
        return Err(Error::Optimization(format!(
            "bivariate fit did not converge after {} iterations (gradient {:.3e}, loglik {})",
            r.iterations, r.gradient_norm, r.loglik
        )));
    }
    let p = from_slice(&r.argmax);
    let mut se = BivSe::from_slice(&r.standard_errors(&tr)?);
    // The delta method through the saturated logit would report ~0 here.
    let pinned = MAX_FITTED_R - p.dep.r < 1e-6 * MAX_FITTED_R;
    if pinned {
        se.r = f64::INFINITY;
    }
    Ok(BivFit {
        margin_x: p.margin_x,
        margin_y: p.margin_y,
        dep: p.dep,
        se,
        loglik: r.loglik,
        spec: *spec,
        form,
        n_full,
        n_cens_x,
        n_cens_y,
        iterations: r.iterations,
        rank_deficient: r.rank_deficient || pinned,
    })
}
