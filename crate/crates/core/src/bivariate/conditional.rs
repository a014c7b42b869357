use std::ops::RangeInclusive;

use super::{BivFit, BivParams, CensoringSpec};
use crate::error::{Error, Result};

/// One-floor steps from 1 to 1000.
pub const DEFAULT_FLOOR_GRID: RangeInclusive<u32> = 1..=1000;

/// Share of the conditional mass a floor grid must span.
pub const MIN_GRID_COVERAGE: f64 = 0.999;

fn height_exp(params: &BivParams, height: f64) -> Result<f64> {
    params.validate()?;
    if !params.margin_x.in_support(height) {
        return Err(Error::Domain(format!(
            "height {height} outside the height margin"
        )));
    }
    let t = params.margin_x.exp_scale(height);
    if !t.is_finite() {
        return Err(Error::Domain(format!(
            "height {height} at the margin's upper endpoint"
        )));
    }
    Ok(t)
}

/// `P(floors <= f | height)` given the exponential-scale height.
fn conditional_cdf(params: &BivParams, spec: &CensoringSpec, xt: f64, floors: f64) -> f64 {
    let y = floors * spec.floor_scale;
    if y <= params.margin_y.mu {
        return 0.0;
    }
    let yt = params.margin_y.exp_scale(y);
    if !yt.is_finite() {
        return 1.0;
    }
    params.dep.conditional_cdf_y(xt, yt)
}

/// Density of floors given an exact height, on an integer floor grid,
/// normalized to unit trapezoid integral.
pub fn conditional_floor_density(
    params: &BivParams,
    spec: &CensoringSpec,
    height: f64,
    grid: RangeInclusive<u32>,
) -> Result<Vec<(u32, f64)>> {
    spec.validate()?;
    let xt = height_exp(params, height)?;
    let (lo, hi) = (*grid.start(), *grid.end());
    if hi <= lo {
        return Err(Error::Argument(format!(
            "floor grid {lo}..={hi} needs at least two points"
        )));
    }
    let covered =
        conditional_cdf(params, spec, xt, hi as f64) - conditional_cdf(params, spec, xt, lo as f64);
    if !(covered >= MIN_GRID_COVERAGE) {
        return Err(Error::Coverage { covered });
    }
    let s = spec.floor_scale;
    let dens: Vec<(u32, f64)> = grid
        .map(|f| {
            let y = f as f64 * s;
            let ly = params.margin_y.log_density(y);
            let d = if y > params.margin_y.mu && ly.is_finite() {
                let yt = params.margin_y.exp_scale(y);
                (params.dep.log_density_exp(xt, yt) + xt + ly + yt).exp() * s
            } else {
                0.0
            };
            (f, d)
        })
        .collect();
    let total: f64 =
        dens.iter().map(|d| d.1).sum::<f64>() - 0.5 * (dens[0].1 + dens[dens.len() - 1].1);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numeric(format!(
            "conditional density at {height} m has no mass on the grid"
        )));
    }
    Ok(dens.into_iter().map(|(f, d)| (f, d / total)).collect())
}

/// Floors (continuous, unscaled) at conditional probability `p` given the
/// exponential-scale height.
pub(crate) fn floors_at(params: &BivParams, spec: &CensoringSpec, xt: f64, p: f64) -> f64 {
    let yt = params.dep.conditional_quantile_y(xt, p);
    params.margin_y.from_exp_scale(yt) / spec.floor_scale
}

/// Quantile of floors given an exact height, by monotone inversion of the
/// conditional cdf.
pub fn conditional_quantile(
    params: &BivParams,
    spec: &CensoringSpec,
    height: f64,
    p: f64,
) -> Result<f64> {
    spec.validate()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("probability {p} outside (0, 1)")));
    }
    let xt = height_exp(params, height)?;
    Ok(floors_at(params, spec, xt, p))
}

impl BivFit {
    pub fn conditional_floor_density(
        &self,
        height: f64,
        grid: RangeInclusive<u32>,
    ) -> Result<Vec<(u32, f64)>> {
        conditional_floor_density(&self.params(), &self.spec, height, grid)
    }

    pub fn conditional_quantile(&self, height: f64, p: f64) -> Result<f64> {
        conditional_quantile(&self.params(), &self.spec, height, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bivariate::AsymLogisticParams;
    use crate::evt::GpdParams;
    use approx::assert_abs_diff_eq;

    fn params(dep: AsymLogisticParams) -> BivParams {
        BivParams {
            margin_x: GpdParams::new(150.0, 25.65, 0.2).unwrap(),
            margin_y: GpdParams::new(152.0, 28.0, 0.1).unwrap(),
            dep,
        }
    }

    #[test]
    fn independence_gives_marginal_floors() {
        let p = params(AsymLogisticParams::INDEPENDENCE);
        let s = CensoringSpec::default();
        let a = conditional_floor_density(&p, &s, 300.0, 1..=400).unwrap();
        let b = conditional_floor_density(&p, &s, 900.0, 1..=400).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x.1, y.1, epsilon = 1e-12);
        }
        let m = conditional_quantile(&p, &s, 300.0, 0.5).unwrap();
        assert_abs_diff_eq!(m * 3.8, p.margin_y.quantile(0.5).unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn grid_integrates_to_one() {
        let p = params(AsymLogisticParams::new(0.7, 0.5, 2.0).unwrap());
        let d =
            conditional_floor_density(&p, &CensoringSpec::default(), 1000.0, DEFAULT_FLOOR_GRID)
                .unwrap();
        let trap: f64 = d.iter().map(|v| v.1).sum::<f64>() - 0.5 * (d[0].1 + d[d.len() - 1].1);
        assert_abs_diff_eq!(trap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn narrow_grid_is_a_coverage_error() {
        let p = params(AsymLogisticParams::new(0.7, 0.5, 2.0).unwrap());
        let e =
            conditional_floor_density(&p, &CensoringSpec::default(), 1000.0, 1..=60).unwrap_err();
        assert!(matches!(e, Error::Coverage { covered } if covered < MIN_GRID_COVERAGE));
    }

    #[test]
    fn quantiles_are_monotone() {
        let p = params(AsymLogisticParams::new(0.7, 0.5, 2.0).unwrap());
        let s = CensoringSpec::default();
        let mut last = 0.0;
        for k in 1..=20 {
            let q = conditional_quantile(&p, &s, 828.0, k as f64 / 21.0).unwrap();
            assert!(q >= last);
            last = q;
        }
        let mut last = 0.0;
        for h in [230.0, 300.0, 500.0, 828.0, 1609.34] {
            let q = conditional_quantile(&p, &s, h, 0.5).unwrap();
            assert!(q >= last, "{h}: {q} < {last}");
            last = q;
        }
    }
}
