//! Independent numerical oracles for the bivariate model.

use skyline_evt::bivariate::{joint_log_density, joint_survival, BivParams, CensoringSpec};
use skyline_evt::evt::GpdParams;

use super::quad::{integrate, integrate_to_inf};

/// `log(1 + xi z / sigma) / xi`, the exponential-scale value, written out.
pub fn exp_scale(g: &GpdParams, x: f64) -> f64 {
    let z = (x - g.mu) / g.sigma;
    if g.xi.abs() < 1e-12 {
        z
    } else {
        (g.xi * z).ln_1p() / g.xi
    }
}

/// `d exp_scale / dx`.
pub fn exp_scale_slope(g: &GpdParams, x: f64) -> f64 {
    1.0 / (g.sigma + g.xi * (x - g.mu))
}

/// Log joint density per metre and raw floor, from a central mixed
/// difference of the survival kernel in exponential margins and the
/// analytic margin Jacobians.
pub fn fd_log_density(p: &BivParams, spec: &CensoringSpec, height: f64, floors: f64) -> f64 {
    let y = floors * spec.floor_scale;
    let (xt, yt) = (exp_scale(&p.margin_x, height), exp_scale(&p.margin_y, y));
    let h = 1e-4;
    let s = |a: f64, b: f64| joint_survival(a, b, &p.dep);
    let mixed = (s(xt + h, yt + h) - s(xt + h, yt - h) - s(xt - h, yt + h) + s(xt - h, yt - h))
        / (4.0 * h * h);
    mixed.ln()
        + exp_scale_slope(&p.margin_x, height).ln()
        + exp_scale_slope(&p.margin_y, y).ln()
        + spec.floor_scale.ln()
}

pub fn density(p: &BivParams, spec: &CensoringSpec, height: f64, floors: f64) -> f64 {
    joint_log_density(height, floors, p, spec).map_or(0.0, f64::exp)
}

/// Floors at the bottom of the floor margin.
pub fn floor_origin(p: &BivParams, spec: &CensoringSpec) -> f64 {
    p.margin_y.mu / spec.floor_scale
}

/// `int_{x0}^{x1} int_{y0}^{y1} f`, where an infinite bound means the
/// upper tail.
pub fn box_mass(
    p: &BivParams,
    spec: &CensoringSpec,
    x: (f64, f64),
    y: (f64, f64),
    tol: f64,
) -> f64 {
    let inner = |h: f64| {
        let f = |fl: f64| density(p, spec, h, fl);
        if y.1.is_infinite() {
            integrate_to_inf(&f, y.0, tol)
        } else {
            integrate(&f, y.0, y.1, tol)
        }
    };
    if x.1.is_infinite() {
        integrate_to_inf(&inner, x.0, tol)
    } else {
        integrate(&inner, x.0, x.1, tol)
    }
}

/// Probability of the region at or below both thresholds.
pub fn below_mass(p: &BivParams, spec: &CensoringSpec) -> f64 {
    box_mass(
        p,
        spec,
        (p.margin_x.mu, spec.u),
        (floor_origin(p, spec), spec.v),
        1e-10,
    )
}
