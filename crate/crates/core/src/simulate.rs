//! Monte Carlo maxima, their closed-form law, and synthetic catalogs.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bivariate::{classify, AsymLogisticParams, BivParams, CensoringSpec, Region};
use crate::catalog::{BuildingRecord, Catalog};
use crate::error::{Error, Result};
use crate::evt::GpdParams;
use crate::rng;
use crate::trend::PoissonTrendFit;

/// Burj Khalifa, Jeddah Tower, one mile.
pub const DEFAULT_LANDMARKS: [f64; 3] = [828.0, 1000.0, 1609.34];

/// Percentiles reported for the simulated maxima.
pub const DEFAULT_PERCENTILES: [f64; 5] = [0.025, 0.5, 0.9, 0.95, 0.975];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSimSpec {
    pub n_buildings: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Index of the first replicate stream. Two runs with offsets 0 and
    /// `R1` concatenate to one run of `R1 + R2` replicates.
    pub replicate_offset: u64,
    /// Draw the building count per replicate from Poisson(`n_buildings`).
    pub poisson_n: bool,
}

impl MaxSimSpec {
    pub fn new(n_buildings: usize, replicates: usize, seed: u64) -> Self {
        Self {
            n_buildings,
            replicates,
            seed,
            replicate_offset: 0,
            poisson_n: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub height: f64,
    /// Share of replicate maxima strictly above `height`.
    pub prob: f64,
    /// Binomial Monte Carlo standard error.
    pub mc_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentile {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxSimResult {
    pub maxima: Vec<f64>,
    pub quantiles: Vec<Percentile>,
    pub exceedance: Vec<Exceedance>,
}

impl MaxSimResult {
    /// Empirical quantile of the maxima (linear interpolation).
    pub fn quantile(&self, p: f64) -> f64 {
        let mut sorted = self.maxima.clone();
        sorted.sort_by(f64::total_cmp);
        interpolated_quantile(&sorted, p)
    }
}

fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `round(expected total over [from, to] * frac_extreme)`.
pub fn expected_extreme_count(
    trend: &PoissonTrendFit,
    from: i32,
    to: i32,
    frac_extreme: f64,
) -> Result<u64> {
    if !(frac_extreme > 0.0 && frac_extreme <= 1.0) {
        return Err(Error::Argument(format!(
            "fraction {frac_extreme} outside (0, 1]"
        )));
    }
    if from > to {
        return Err(Error::Argument(format!("year range {from}..{to} is empty")));
    }
    Ok((trend.expected_total(from, to) * frac_extreme).round() as u64)
}

/// Simulates replicate maxima of `n_buildings` iid GPD heights.
pub fn simulate_max(
    params: &GpdParams,
    spec: &MaxSimSpec,
    landmarks: &[f64],
) -> Result<MaxSimResult> {
    simulate_max_with(params, spec, landmarks, &DEFAULT_PERCENTILES)
}

pub fn simulate_max_with(
    params: &GpdParams,
    spec: &MaxSimSpec,
    landmarks: &[f64],
    percentiles: &[f64],
) -> Result<MaxSimResult> {
    params.validate()?;
    if spec.n_buildings == 0 || spec.replicates == 0 {
        return Err(Error::Argument(
            "need at least one building and one replicate".into(),
        ));
    }
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Argument(format!("percentile {p} outside [0, 1]")));
    }
    let maxima: Vec<f64> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(spec.seed, spec.replicate_offset + r);
            let n = if spec.poisson_n {
                Poisson::new(spec.n_buildings as f64)
                    .map(|d| d.sample(&mut rng) as usize)
                    .unwrap_or(spec.n_buildings)
            } else {
                spec.n_buildings
            };
            // With no buildings the maximum sits at the lower support bound.
            (0..n)
                .map(|_| params.from_exp_scale(-rng::open_unit(&mut rng).ln()))
                .fold(params.mu, f64::max)
        })
        .collect();

    let mut sorted = maxima.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ps = percentiles.to_vec();
    ps.sort_by(f64::total_cmp);
    let quantiles = ps
        .into_iter()
        .map(|p| Percentile {
            p,
            value: interpolated_quantile(&sorted, p),
        })
        .collect();
    let reps = maxima.len() as f64;
    let exceedance = landmarks
        .iter()
        .map(|&z| {
            let prob = maxima.iter().filter(|&&m| m > z).count() as f64 / reps;
            Exceedance {
                height: z,
                prob,
                mc_se: (prob * (1.0 - prob) / reps).sqrt(),
            }
        })
        .collect();
    Ok(MaxSimResult {
        maxima,
        quantiles,
        exceedance,
    })
}

/// Exact `p`-quantile of the maximum of `n` iid draws.
pub fn max_quantile_analytic(params: &GpdParams, n: usize, p: f64) -> Result<f64> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("probability {p} outside (0, 1)")));
    }
    // Upper tail of a single draw: 1 - p^(1/n).
    params.quantile_upper(-(p.ln() / n as f64).exp_m1())
}

/// `P(max of n draws > z) = 1 - F(z)^n`.
pub fn max_exceedance_analytic(params: &GpdParams, n: usize, z: f64) -> f64 {
    let f = params.cdf(z);
    if f <= 0.0 {
        return 1.0;
    }
    -(n as f64 * f.ln()).exp_m1()
}

/// Ingredients of a synthetic catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Yearly counts are Poisson(`exp(alpha + beta * year)`).
    pub alpha: f64,
    pub beta: f64,
    pub params: BivParams,
    pub censoring: CensoringSpec,
    pub years: (i32, i32),
    /// Assigned round-robin in record order.
    pub cities: Vec<String>,
}

impl SynthSpec {
    /// 8% yearly growth with 3,251 expected completions over 1950-2017, one
    /// in ten taller than 225 m, and every record tall by the default filter
    /// (heights above 150 m, at least 41 floors).
    pub fn calibrated(cities: Vec<String>) -> Self {
        let beta = 1.08f64.ln();
        let years = (1950, 2017);
        let alpha = 3251f64.ln()
            - (years.0..=years.1)
                .map(|t| (beta * t as f64).exp())
                .sum::<f64>()
                .ln();
        Self {
            alpha,
            beta,
            params: BivParams {
                // P(X > 225) = (1 + 0.2 * 75 / 25.65)^(-5) = 0.1.
                margin_x: GpdParams {
                    mu: 150.0,
                    sigma: 25.65,
                    xi: 0.2,
                },
                // Floors from 41 upward once rounded.
                margin_y: GpdParams {
                    mu: 157.0,
                    sigma: 28.0,
                    xi: 0.1,
                },
                dep: AsymLogisticParams {
                    theta_x: 0.9,
                    theta_y: 0.8,
                    r: 2.5,
                },
            },
            censoring: CensoringSpec::default(),
            years,
            cities,
        }
    }
}

/// One building from the joint model: height from the height margin, then
/// floors by inverting the conditional cdf given that height.
fn draw_building<R: rand::RngCore>(p: &BivParams, c: &CensoringSpec, rng: &mut R) -> (f64, u32) {
    let xt = -rng::open_unit(rng).ln();
    let height = p.margin_x.from_exp_scale(xt);
    let u = rng::open_unit(rng);
    let floors = crate::bivariate::floors_at_exp(p, c, xt, u);
    (height, floors.round().max(1.0).min(u32::MAX as f64) as u32)
}

/// Yearly Poisson counts of buildings drawn from the joint model.
pub fn synth_catalog(spec: &SynthSpec, seed: u64) -> Result<Catalog> {
    spec.params.validate()?;
    spec.censoring.validate()?;
    let (from, to) = spec.years;
    if from > to {
        return Err(Error::Argument(format!("year range {from}..{to} is empty")));
    }
    if spec.cities.is_empty() {
        return Err(Error::Argument("need at least one city".into()));
    }
    let per_year: Vec<Vec<(f64, u32)>> = (from..=to)
        .into_par_iter()
        .map(|year| {
            let mut rng = rng::stream(seed, (year - from) as u64);
            let lambda = (spec.alpha + spec.beta * year as f64).exp();
            let n = if lambda > 0.0 {
                Poisson::new(lambda)
                    .map(|d| d.sample(&mut rng) as usize)
                    .unwrap_or(0)
            } else {
                0
            };
            (0..n)
                .map(|_| draw_building(&spec.params, &spec.censoring, &mut rng))
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for (year, buildings) in (from..=to).zip(per_year) {
        for (height, floors) in buildings {
            let i = records.len();
            records.push(BuildingRecord {
                id: format!("syn{i:07}"),
                name: None,
                city: spec.cities[i % spec.cities.len()].clone(),
                height,
                floors,
                year,
            });
        }
    }
    Catalog::new(records, format!("synthetic seed {seed}"))
}

const DRAW_CHUNK: usize = 256;

/// Buildings from the joint model, drawn until `n_region` of them exceed
/// the height or floor threshold. All draws up to that point are kept.
pub fn synth_region_catalog(
    params: &BivParams,
    censoring: &CensoringSpec,
    n_region: usize,
    city: &str,
    year: i32,
    seed: u64,
) -> Result<Catalog> {
    params.validate()?;
    censoring.validate()?;
    let mut records = Vec::new();
    let mut in_region = 0;
    let mut chunk = 0u64;
    while in_region < n_region {
        if chunk > 1_000_000 {
            return Err(Error::Numeric(
                "sampling region has negligible probability".into(),
            ));
        }
        let mut rng = rng::stream(seed, chunk);
        chunk += 1;
        for _ in 0..DRAW_CHUNK {
            let (height, floors) = draw_building(params, censoring, &mut rng);
            let i = records.len();
            records.push(BuildingRecord {
                id: format!("{city}-{i:07}"),
                name: None,
                city: city.to_string(),
                height,
                floors,
                year,
            });
            if classify(height, floors as f64, censoring) != Region::Below {
                in_region += 1;
                if in_region == n_region {
                    break;
                }
            }
        }
    }
    Catalog::new(records, format!("synthetic seed {seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{filter, FilterSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn calibrated_spec_targets() {
        let s = SynthSpec::calibrated(vec!["a".into()]);
        let t = PoissonTrendFit::exact(s.alpha, s.beta, s.years);
        assert_abs_diff_eq!(t.expected_total(1950, 2017), 3251.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.params.margin_x.survival(225.0), 0.1, epsilon = 1e-3);
        let cat = synth_catalog(&s, 3).unwrap();
        assert_eq!(filter(&cat, &FilterSpec::TALL).len(), cat.len());
        assert!(cat.iter().all(|r| r.floors >= 41));
    }

    fn g() -> GpdParams {
        GpdParams::new(225.0, 31.5, 0.2).unwrap()
    }

    #[test]
    fn extreme_count_arithmetic() {
        let t = PoissonTrendFit::exact((1000.0f64).ln(), 0.0, (1950, 2017));
        assert_eq!(expected_extreme_count(&t, 2018, 2055, 0.22).unwrap(), 8360);
        assert_eq!(expected_extreme_count(&t, 2018, 2020, 1.0).unwrap(), 3000);
        assert!(expected_extreme_count(&t, 2018, 2020, 0.0).is_err());
    }

    #[test]
    fn analytic_quantile_cases() {
        assert_abs_diff_eq!(
            max_quantile_analytic(&g(), 1, 0.3).unwrap(),
            g().quantile(0.3).unwrap(),
            epsilon = 1e-9
        );
        let e = GpdParams::new(0.0, 1.0, 0.0).unwrap();
        let n = 1000;
        // Exact exponential case: -log(1 - 0.5^(1/n)).
        let exact = -(1.0 - 0.5f64.powf(1.0 / n as f64)).ln();
        assert_abs_diff_eq!(
            max_quantile_analytic(&e, n, 0.5).unwrap(),
            exact,
            epsilon = 1e-9
        );
        assert!((exact - (n as f64 / 2f64.ln()).ln()).abs() < 1e-3);
    }

    #[test]
    fn single_building_matches_survival() {
        let r = simulate_max(&g(), &MaxSimSpec::new(1, 40_000, 9), &[250.0, 300.0]).unwrap();
        for e in &r.exceedance {
            assert!((e.prob - g().survival(e.height)).abs() < 3.0 * e.mc_se.max(1e-4));
        }
    }

    #[test]
    fn split_runs_concatenate() {
        let whole = simulate_max(&g(), &MaxSimSpec::new(50, 30, 4), &[]).unwrap();
        let a = simulate_max(&g(), &MaxSimSpec::new(50, 12, 4), &[]).unwrap();
        let mut s = MaxSimSpec::new(50, 18, 4);
        s.replicate_offset = 12;
        let b = simulate_max(&g(), &s, &[]).unwrap();
        let joined: Vec<f64> = a.maxima.into_iter().chain(b.maxima).collect();
        assert_eq!(whole.maxima, joined);
    }

    #[test]
    fn synthetic_catalog_is_deterministic() {
        let spec = SynthSpec {
            alpha: (5.0f64).ln() - 0.05 * 2000.0,
            beta: 0.05,
            params: BivParams {
                margin_x: GpdParams::new(150.0, 25.65, 0.2).unwrap(),
                margin_y: GpdParams::new(152.0, 28.0, 0.1).unwrap(),
                dep: AsymLogisticParams::new(0.7, 0.5, 2.0).unwrap(),
            },
            censoring: CensoringSpec::default(),
            years: (1990, 2010),
            cities: vec!["A".into(), "B".into()],
        };
        let a = synth_catalog(&spec, 8).unwrap();
        let b = synth_catalog(&spec, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.height >= 150.0 && r.floors >= 1));
    }
}
