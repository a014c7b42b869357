use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::bivariate::{fit_bivariate_with, region_masses, BivFit, BivFitOptions, RegionMasses};
use crate::catalog::{
    counts_by_year, filter, group_by_city, parse_catalog, partition_sextiles, Catalog, Diagnostics,
};
use crate::error::{Error, Result};
use crate::evt::{
    fit_gpd, hill_estimates, threshold_scan, uniform_qq, GpdFit, GpdParams, ThresholdScanRow,
};
use crate::hier::{fit_hierarchical, shrinkage_report, HierConfig, Hyper, ShrinkageRow};
use crate::optim::OptimOptions;
use crate::report::{write_csv, write_csv_header, write_json};
use crate::rng::derive_seed;
use crate::simulate::{
    expected_extreme_count, max_exceedance_analytic, max_quantile_analytic, simulate_max_with,
    MaxSimSpec, Percentile, DEFAULT_PERCENTILES,
};
use crate::trend::{
    backtest, cumulative_forecast, fit_median_trend, fit_poisson_trend, predict_counts,
    CumulativeForecast, PoissonTrendFit,
};

// Purposes for seeds derived from the user seed.
const SEED_BANDS: u64 = 1;
const SEED_CUMULATIVE: u64 = 2;
const SEED_BOOTSTRAP: u64 = 3;
const SEED_OPTIM: u64 = 4;
const SEED_SIMULATE: u64 = 5;

fn load_catalog(cfg: &RunConfig) -> Result<(Catalog, Diagnostics)> {
    let path = cfg.input()?;
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_catalog(file, &cfg.columns)
}

/// Records passing the skyscraper filter.
fn load_tall(cfg: &RunConfig) -> Result<Catalog> {
    cfg.tall.validate()?;
    let (all, _) = load_catalog(cfg)?;
    let tall = filter(&all, &cfg.tall);
    if tall.is_empty() {
        return Err(Error::Data("no record passes the skyscraper filter".into()));
    }
    Ok(tall)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out()?.to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

/// Writes into `dir` and records the path.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            written: Vec::new(),
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.dir.join(name);
        write_json(&p, value)?;
        self.written.push(p);
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T], header: &[&str]) -> Result<()> {
        let p = self.dir.join(name);
        if rows.is_empty() {
            write_csv_header(&p, header)?;
        } else {
            write_csv(&p, rows)?;
        }
        self.written.push(p);
        Ok(())
    }
}

fn last_year(c: &Catalog) -> i32 {
    c.iter().map(|r| r.year).max().unwrap_or(i32::MIN)
}

fn trend_fit(cfg: &RunConfig, tall: &Catalog) -> Result<(PoissonTrendFit, i32)> {
    let end = cfg.trend.end_year.unwrap_or_else(|| last_year(tall));
    let counts = counts_by_year(tall, cfg.trend.start_year, end)?;
    Ok((fit_poisson_trend(&counts)?, end))
}

#[derive(Debug, Serialize)]
struct TrendReport {
    start_year: i32,
    end_year: i32,
    alpha: f64,
    beta: f64,
    se_alpha: f64,
    se_beta: f64,
    cov: [[f64; 2]; 2],
    loglik: f64,
    annual_growth: f64,
    cumulative: CumulativeForecast,
    /// Skyscrapers in the catalog.
    existing: usize,
    population: f64,
    /// `(existing + cumulative mean) / population`, per billion residents.
    per_billion: f64,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct CountRow {
    year: i32,
    count: u64,
}

/// Count trend, forecast bands and, with a cutoff, the backtest.
pub fn fit_counts(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.seed()?;
    let t = &cfg.trend;
    if !(t.population > 0.0 && t.population.is_finite()) {
        return Err(Error::Argument(format!(
            "population {} must be positive",
            t.population
        )));
    }
    let tall = load_tall(cfg)?;
    let mut out = Outputs::new(out_dir(cfg)?);
    let (fit, end) = trend_fit(cfg, &tall)?;
    let cumulative = cumulative_forecast(
        &fit,
        t.forecast_from,
        t.forecast_to,
        t.reps,
        derive_seed(seed, SEED_CUMULATIVE),
    )?;
    let bands = predict_counts(
        &fit,
        t.start_year,
        t.forecast_to,
        t.reps,
        derive_seed(seed, SEED_BANDS),
    )?;
    let report = TrendReport {
        start_year: t.start_year,
        end_year: end,
        alpha: fit.alpha,
        beta: fit.beta,
        se_alpha: fit.se_alpha(),
        se_beta: fit.se_beta(),
        cov: fit.cov,
        loglik: fit.loglik,
        annual_growth: fit.annual_growth(),
        cumulative,
        existing: tall.len(),
        population: t.population,
        per_billion: (tall.len() as f64 + cumulative.mean) / (t.population / 1e9),
        seed,
    };
    out.json("trend.json", &report)?;
    out.csv("forecast.csv", &bands, &["year", "mean", "lo95", "hi95"])?;
    let counts: Vec<CountRow> = counts_by_year(&tall, t.start_year, end)?
        .into_iter()
        .map(|(year, count)| CountRow { year, count })
        .collect();
    out.csv("counts.csv", &counts, &["year", "count"])?;
    if let Some(cutoff) = t.cutoff {
        let bt = backtest(&tall, t.start_year, cutoff, end)?;
        out.json("backtest.json", &bt)?;
    }
    Ok(out.written)
}

/// GPD fit summary; `simulate-max` reads `fit.params` back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpdReport {
    pub fit: GpdFit,
    /// Skyscrapers in the catalog.
    pub n_tall: usize,
    /// Share of skyscrapers above the threshold.
    pub frac_extreme: f64,
    /// Scan thresholds left with too few exceedances.
    pub scan_skipped: Vec<f64>,
    /// Kolmogorov-Smirnov statistic and p-value of each sextile's q-q set.
    pub qq_ks: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Serialize)]
struct ScanCsvRow {
    u: f64,
    xi: f64,
    lo50: f64,
    hi50: f64,
    lo95: f64,
    hi95: f64,
    sigma: f64,
    n: usize,
}

impl From<&ThresholdScanRow> for ScanCsvRow {
    fn from(r: &ThresholdScanRow) -> Self {
        Self {
            u: r.u,
            xi: r.xi_hat,
            lo50: r.xi_lo50,
            hi50: r.xi_hi50,
            lo95: r.xi_lo95,
            hi95: r.xi_hi95,
            sigma: r.sigma_hat,
            n: r.n_exceed,
        }
    }
}

#[derive(Debug, Serialize)]
struct HillRow {
    k: usize,
    xi: f64,
}

/// Threshold fit, stability scan, sextile q-q sets, Hill estimates and
/// the median-height trend.
pub fn fit_gpd_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.seed()?;
    let g = &cfg.gpd;
    let tall = load_tall(cfg)?;
    let mut out = Outputs::new(out_dir(cfg)?);
    let heights = tall.heights();
    let exceed: Vec<f64> = heights
        .iter()
        .copied()
        .filter(|&h| h > g.threshold)
        .collect();
    let fit = fit_gpd(&exceed, g.threshold)?;

    let scan = threshold_scan(&heights, &g.grid, &OptimOptions::with_seed(seed))?;
    let rows: Vec<ScanCsvRow> = scan.rows.iter().map(ScanCsvRow::from).collect();
    out.csv(
        "scan.csv",
        &rows,
        &["u", "xi", "lo50", "hi50", "lo95", "hi95", "sigma", "n"],
    )?;

    let sextiles = partition_sextiles(&tall, g.sextile_from)?;
    let mut qq_ks = Vec::with_capacity(6);
    for (i, group) in sextiles.iter().enumerate() {
        let h: Vec<f64> = group
            .heights()
            .into_iter()
            .filter(|&h| h > g.threshold)
            .collect();
        let name = format!("qq_sextile_{}.csv", i + 1);
        if h.is_empty() {
            qq_ks.push(None);
            out.csv::<crate::evt::QqPoint>(&name, &[], &["emp", "theo"])?;
        } else {
            let qq = uniform_qq(&h, &fit)?;
            qq_ks.push(Some((qq.ks_stat, qq.ks_p_value)));
            out.csv(&name, &qq.points, &["emp", "theo"])?;
        }
    }

    let max_k = g.hill_max_k.min(heights.len().saturating_sub(1));
    let ks: Vec<usize> = (1..=max_k).collect();
    let hill: Vec<HillRow> = hill_estimates(&heights, &ks)?
        .into_iter()
        .map(|(k, xi)| HillRow { k, xi })
        .collect();
    out.csv("hill.csv", &hill, &["k", "xi"])?;

    let median = fit_median_trend(
        &tall,
        g.threshold,
        g.boot_reps,
        derive_seed(seed, SEED_BOOTSTRAP),
    )?;
    out.json("median_trend.json", &median)?;

    let report = GpdReport {
        frac_extreme: exceed.len() as f64 / tall.len() as f64,
        n_tall: tall.len(),
        fit,
        scan_skipped: scan.skipped,
        qq_ks,
    };
    out.json("gpd.json", &report)?;
    Ok(out.written)
}

fn read_gpd_report(path: &Path) -> Result<GpdReport> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn simulation_params(cfg: &RunConfig) -> Result<GpdParams> {
    let s = &cfg.simulate;
    let from_file = s.gpd_json.as_deref().map(read_gpd_report).transpose()?;
    let base = from_file.map(|r| r.fit.params);
    let mu = s.mu.or(base.map(|p| p.mu));
    let sigma = s.sigma.or(base.map(|p| p.sigma));
    let xi = s.xi.or(base.map(|p| p.xi));
    match (mu, sigma, xi) {
        (Some(mu), Some(sigma), Some(xi)) => GpdParams::new(mu, sigma, xi),
        _ => Err(Error::Argument(
            "GPD parameters needed: --gpd-json or all of --mu, --sigma, --xi".into(),
        )),
    }
}

#[derive(Debug, Serialize)]
struct ExceedanceRow {
    height: f64,
    prob: f64,
    mc_se: f64,
    analytic: f64,
}

#[derive(Debug, Serialize)]
struct ExceedanceReport {
    params: GpdParams,
    n_buildings: usize,
    replicates: usize,
    poisson_n: bool,
    seed: u64,
    exceedance: Vec<ExceedanceRow>,
    quantiles: Vec<Percentile>,
    /// Right-sided 95% predictive interval `[mu, upper95]` for the maximum.
    upper95: f64,
    upper95_analytic: f64,
    /// How `n_buildings` was obtained when derived from the catalog.
    auto_n: Option<AutoN>,
}

#[derive(Debug, Clone, Serialize)]
struct AutoN {
    from: i32,
    to: i32,
    expected_total: f64,
    frac_extreme: f64,
}

#[derive(Debug, Serialize)]
struct MaxRow {
    max_height: f64,
}

/// Monte Carlo maxima and exceedance probabilities for the landmarks.
pub fn simulate_max_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.seed()?;
    let s = &cfg.simulate;
    let params = simulation_params(cfg)?;
    let (n, auto) = if s.auto_n {
        let tall = load_tall(cfg)?;
        let (trend, _) = trend_fit(cfg, &tall)?;
        let frac = match s.frac_extreme {
            Some(f) => f,
            None => {
                tall.iter().filter(|r| r.height > cfg.gpd.threshold).count() as f64
                    / tall.len() as f64
            }
        };
        let (from, to) = (cfg.trend.forecast_from, cfg.trend.forecast_to);
        let n = expected_extreme_count(&trend, from, to, frac)? as usize;
        let info = AutoN {
            from,
            to,
            expected_total: trend.expected_total(from, to),
            frac_extreme: frac,
        };
        (n, Some(info))
    } else {
        let n = s.n_buildings.ok_or_else(|| {
            Error::Argument("--n-buildings is required unless --auto-n is set".into())
        })?;
        (n, None)
    };
    if n == 0 {
        return Err(Error::Data(
            "expected number of buildings rounds to zero".into(),
        ));
    }
    let mut out = Outputs::new(out_dir(cfg)?);
    let spec = MaxSimSpec {
        poisson_n: s.poisson_n,
        ..MaxSimSpec::new(n, s.replicates, derive_seed(seed, SEED_SIMULATE))
    };
    let mut percentiles = DEFAULT_PERCENTILES.to_vec();
    if !percentiles.contains(&0.95) {
        percentiles.push(0.95);
    }
    let res = simulate_max_with(&params, &spec, &s.landmarks, &percentiles)?;
    let rows: Vec<MaxRow> = res
        .maxima
        .iter()
        .map(|&m| MaxRow { max_height: m })
        .collect();
    out.csv("maxima.csv", &rows, &["max_height"])?;
    let exceedance = res
        .exceedance
        .iter()
        .map(|e| ExceedanceRow {
            height: e.height,
            prob: e.prob,
            mc_se: e.mc_se,
            analytic: max_exceedance_analytic(&params, n, e.height),
        })
        .collect();
    let report = ExceedanceReport {
        params,
        n_buildings: n,
        replicates: s.replicates,
        poisson_n: s.poisson_n,
        seed,
        exceedance,
        upper95: res.quantile(0.95),
        upper95_analytic: max_quantile_analytic(&params, n, 0.95)?,
        quantiles: res.quantiles,
        auto_n: auto,
    };
    out.json("exceedance.json", &report)?;
    Ok(out.written)
}

#[derive(Debug, Serialize)]
struct BivariateReport {
    fit: BivFit,
    /// Floors margin in raw floors rather than scaled metres.
    margin_y_floors: GpdParams,
    region_masses: RegionMasses,
    n_records: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct DensityRow {
    floors: u32,
    density: f64,
}

#[derive(Debug, Serialize)]
struct HierReport {
    hyper: Vec<Hyper>,
    dep: crate::bivariate::AsymLogisticParams,
    loglik: f64,
    n_cities: usize,
    /// Cities without a record above either threshold, left out of the fit.
    cities_dropped: usize,
    iterations: usize,
    trace: Vec<f64>,
}

/// Name of the conditional density file for `height`.
pub fn conditional_file_name(height: f64) -> String {
    format!("conditional_{height}.csv")
}

/// Joint (height, floors) fit, conditional floor densities and, with
/// `hier`, the per-city shrinkage report.
pub fn fit_bivariate_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.seed()?;
    let b = &cfg.bivariate;
    let spec = cfg.censoring;
    spec.validate()?;
    if b.floor_max <= b.floor_min {
        return Err(Error::Argument(format!(
            "floor grid {}..{} needs at least two points",
            b.floor_min, b.floor_max
        )));
    }
    let tall = load_tall(cfg)?;
    let mut out = Outputs::new(out_dir(cfg)?);
    let opts = BivFitOptions {
        form: b.form,
        optim: OptimOptions::with_seed(derive_seed(seed, SEED_OPTIM)),
        init: None,
    };
    let fit = fit_bivariate_with(&tall, &spec, &opts)?;
    let p = fit.params();
    for &h in &b.heights {
        let dens = fit.conditional_floor_density(h, b.floor_min..=b.floor_max)?;
        let rows: Vec<DensityRow> = dens
            .into_iter()
            .map(|(floors, density)| DensityRow { floors, density })
            .collect();
        out.csv(&conditional_file_name(h), &rows, &["floors", "density"])?;
    }
    let s = spec.floor_scale;
    let report = BivariateReport {
        margin_y_floors: GpdParams::new(p.margin_y.mu / s, p.margin_y.sigma / s, p.margin_y.xi)?,
        region_masses: region_masses(&p, &spec)?,
        n_records: tall.len(),
        fit,
        seed,
    };
    out.json("bivariate.json", &report)?;

    if b.hier {
        let all = group_by_city(&tall);
        let n_all = all.len();
        let groups: std::collections::BTreeMap<String, Catalog> = all
            .into_iter()
            .filter(|(_, c)| {
                c.iter().any(|r| {
                    crate::bivariate::classify(r.height, r.floors as f64, &spec)
                        != crate::bivariate::Region::Below
                })
            })
            .collect();
        let config = HierConfig {
            varying: b.varying.clone(),
            fixed_sd: b.fixed_sd,
            max_iter: b.max_iter,
            form: b.form,
            seed: derive_seed(seed, SEED_OPTIM),
            ..HierConfig::default()
        };
        let hfit = fit_hierarchical(&groups, &spec, &config)?;
        let rows: Vec<ShrinkageRow> = shrinkage_report(&hfit, &groups)?;
        out.csv(
            "cities.csv",
            &rows,
            &[
                "city", "n", "strat_h", "hier_h", "pooled_h", "strat_f", "hier_f", "pooled_f",
            ],
        )?;
        let report = HierReport {
            cities_dropped: n_all - groups.len(),
            hyper: hfit.hyper,
            dep: hfit.dep,
            loglik: hfit.loglik,
            n_cities: hfit.n_cities,
            iterations: hfit.iterations,
            trace: hfit.trace,
        };
        out.json("hier.json", &report)?;
    }
    Ok(out.written)
}
