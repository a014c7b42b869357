//! Joint (height, floors) tail model: GPD margins moved to the standard
//! exponential scale and coupled by an asymmetric logistic dependence.
//!
//! Floors enter the margin model scaled to metres by
//! [`CensoringSpec::floor_scale`]. Public densities are per raw floor.

mod conditional;
pub(crate) mod likelihood;

pub(crate) use conditional::floors_at as floors_at_exp;

pub use conditional::{
    conditional_floor_density, conditional_quantile, DEFAULT_FLOOR_GRID, MIN_GRID_COVERAGE,
};
pub use likelihood::{
    censored_loglik, censored_loglik_with, classify, fit_bivariate, fit_bivariate_with,
    record_log_contribution, region_masses, BivFit, BivFitOptions, BivSe, LikelihoodForm, Region,
    RegionMasses, MAX_FITTED_R, MIN_BOTH_EXCEED, MIN_CONTRIBUTING,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::GpdParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymLogisticParams {
    pub theta_x: f64,
    pub theta_y: f64,
    pub r: f64,
}

/// Partial derivatives of the exponent `V` with `S = exp(-V)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Exponent {
    pub v: f64,
    pub vx: f64,
    pub vy: f64,
    pub vxy: f64,
}

impl AsymLogisticParams {
    /// `theta_x = theta_y = 1, r = 1`.
    pub const INDEPENDENCE: Self = Self {
        theta_x: 1.0,
        theta_y: 1.0,
        r: 1.0,
    };

    pub fn new(theta_x: f64, theta_y: f64, r: f64) -> Result<Self> {
        let p = Self {
            theta_x,
            theta_y,
            r,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |t: f64| (0.0..=1.0).contains(&t);
        if !(unit(self.theta_x) && unit(self.theta_y)) {
            return Err(Error::Domain(format!(
                "theta ({}, {}) outside [0, 1]",
                self.theta_x, self.theta_y
            )));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::Domain(format!("r = {} must be at least 1", self.r)));
        }
        Ok(())
    }

    /// `V(x, y) = (1 - tx) x + (1 - ty) y + ((tx x)^r + (ty y)^r)^(1/r)` and
    /// its derivatives, evaluated after scaling by the larger term.
    pub(crate) fn exponent(&self, x: f64, y: f64) -> Exponent {
        let (tx, ty, r) = (self.theta_x, self.theta_y, self.r);
        let (px, py) = (tx * x, ty * y);
        let m = px.max(py);
        let (w, wx, wy, wxy) = if m > 0.0 && m.is_finite() {
            let (a, b) = (px / m, py / m);
            let s = a.powf(r) + b.powf(r);
            let inv = 1.0 / r;
            let w = m * s.powf(inv);
            let base = s.powf(inv - 1.0);
            let wx = tx * base * a.powf(r - 1.0);
            let wy = ty * base * b.powf(r - 1.0);
            let wxy = if r > 1.0 {
                (1.0 - r) * tx * ty * s.powf(inv - 2.0) * (a * b).powf(r - 1.0) / m
            } else {
                0.0
            };
            (w, wx, wy, wxy)
        } else if m == 0.0 {
            (0.0, tx, ty, 0.0)
        } else {
            (f64::INFINITY, tx, ty, 0.0)
        };
        Exponent {
            v: (1.0 - tx) * x + (1.0 - ty) * y + w,
            vx: 1.0 - tx + wx,
            vy: 1.0 - ty + wy,
            vxy: wxy,
        }
    }

    /// `P(Y~ <= yt | X~ = xt)` on the exponential scale.
    pub(crate) fn conditional_cdf_y(&self, xt: f64, yt: f64) -> f64 {
        let e = self.exponent(xt, yt);
        -(e.vx.ln() + xt - e.v).exp_m1()
    }

    /// Conditional cdf of the first coordinate given the second.
    pub(crate) fn conditional_cdf_x(&self, xt: f64, yt: f64) -> f64 {
        self.swapped().conditional_cdf_y(yt, xt)
    }

    fn swapped(&self) -> Self {
        Self {
            theta_x: self.theta_y,
            theta_y: self.theta_x,
            r: self.r,
        }
    }

    /// Log density of the exponential-scale pair.
    pub(crate) fn log_density_exp(&self, xt: f64, yt: f64) -> f64 {
        let e = self.exponent(xt, yt);
        (e.vx * e.vy - e.vxy).ln() - e.v
    }

    /// Value `yt` with `conditional_cdf_y(xt, yt) = p`, by bisection.
    pub(crate) fn conditional_quantile_y(&self, xt: f64, p: f64) -> f64 {
        let mut hi = 1.0;
        while self.conditional_cdf_y(xt, hi) < p && hi < 1e6 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.conditional_cdf_y(xt, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Thresholds for the censored likelihood and the floor-to-metre scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoringSpec {
    /// Height threshold in metres.
    pub u: f64,
    /// Floor threshold on the raw floor count.
    pub v: f64,
    /// Metres per floor.
    pub floor_scale: f64,
}

impl Default for CensoringSpec {
    fn default() -> Self {
        Self {
            u: 225.0,
            v: 59.0,
            floor_scale: 3.8,
        }
    }
}

impl CensoringSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0 && self.v > 0.0 && self.floor_scale > 0.0)
            || !(self.u.is_finite() && self.v.is_finite() && self.floor_scale.is_finite())
        {
            return Err(Error::Argument(format!(
                "censoring thresholds must be positive: u={}, v={}, floor_scale={}",
                self.u, self.v, self.floor_scale
            )));
        }
        Ok(())
    }

    /// Floor threshold in metres.
    pub fn scaled_v(&self) -> f64 {
        self.v * self.floor_scale
    }
}

/// Both margins and the dependence. `margin_y` is on scaled floors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivParams {
    pub margin_x: GpdParams,
    pub margin_y: GpdParams,
    pub dep: AsymLogisticParams,
}

impl BivParams {
    pub fn validate(&self) -> Result<()> {
        self.margin_x.validate()?;
        self.margin_y.validate()?;
        self.dep.validate()
    }

    /// Log density of (height, scaled floors), `-inf` off the support.
    pub(crate) fn log_density_scaled(&self, x: f64, y: f64) -> f64 {
        let (lx, ly) = (self.margin_x.log_density(x), self.margin_y.log_density(y));
        if !(lx.is_finite() && ly.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let (xt, yt) = (self.margin_x.exp_scale(x), self.margin_y.exp_scale(y));
        self.dep.log_density_exp(xt, yt) + lx + xt + ly + yt
    }
}

/// `-log survival` of the margin: standard exponential under the model.
pub fn to_exp_margin(value: f64, margin: &GpdParams) -> Result<f64> {
    if !margin.in_support(value) {
        return Err(Error::Domain(format!("{value} outside margin support")));
    }
    let t = margin.exp_scale(value);
    if !t.is_finite() {
        return Err(Error::Domain(format!(
            "{value} at the margin's upper endpoint"
        )));
    }
    Ok(t)
}

/// Inverse of [`to_exp_margin`].
pub fn from_exp_margin(t: f64, margin: &GpdParams) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!(
            "exponential-scale value {t} must be finite and >= 0"
        )));
    }
    Ok(margin.from_exp_scale(t))
}

/// `exp(-V(x, y))`, equal to 1 at the origin.
pub fn joint_survival(x_tilde: f64, y_tilde: f64, dep: &AsymLogisticParams) -> f64 {
    (-dep.exponent(x_tilde.max(0.0), y_tilde.max(0.0)).v).exp()
}

/// Log joint density of (height, floors), per metre and per raw floor.
pub fn joint_log_density(
    height: f64,
    floors: f64,
    params: &BivParams,
    spec: &CensoringSpec,
) -> Result<f64> {
    let y = floors * spec.floor_scale;
    if !params.margin_x.in_support(height) || !params.margin_y.in_support(y) {
        return Err(Error::Domain(format!(
            "({height}, {floors}) outside the model support"
        )));
    }
    let l = params.log_density_scaled(height, y);
    if !l.is_finite() {
        return Err(Error::Domain(format!(
            "({height}, {floors}) outside the model support"
        )));
    }
    Ok(l + spec.floor_scale.ln())
}
