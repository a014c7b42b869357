//! City-level margins drawn from normal populations on the transformed
//! parameter scale, with shared dependence.
//!
//! Hyperparameters are estimated by maximizing a Laplace approximation of
//! the marginal likelihood. Each outer iteration updates the population
//! means (Newton), the population sds (EM) and the dependence, and keeps a
//! step only when the objective improves.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bivariate::likelihood::{
    fit_points, from_slice, loglik_points, points, to_vec, transforms, Point,
};
use crate::bivariate::{
    AsymLogisticParams, BivFit, BivFitOptions, BivParams, CensoringSpec, LikelihoodForm,
};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::evt::GpdParams;
use crate::optim::{self, OptimOptions, ParamTransform};

/// A margin parameter that may vary by city.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaryingParam {
    MuX,
    SigmaX,
    XiX,
    MuY,
    SigmaY,
    XiY,
}

impl VaryingParam {
    /// Position in the nine-parameter vector.
    fn index(self) -> usize {
        match self {
            Self::MuX => 0,
            Self::SigmaX => 1,
            Self::XiX => 2,
            Self::MuY => 3,
            Self::SigmaY => 4,
            Self::XiY => 5,
        }
    }

    /// Transform to the scale carrying the population normal.
    pub fn transform(self, spec: &CensoringSpec) -> ParamTransform {
        transforms(spec)[self.index()]
    }
}

/// `(log sigma, xi)` of both margins.
pub const DEFAULT_VARYING: [VaryingParam; 4] = [
    VaryingParam::SigmaX,
    VaryingParam::XiX,
    VaryingParam::SigmaY,
    VaryingParam::XiY,
];

/// Population sds are kept at or above this value.
pub const SD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierConfig {
    pub varying: Vec<VaryingParam>,
    /// Holds every population sd at this value instead of estimating it.
    pub fixed_sd: Option<f64>,
    /// Stop when an outer iteration improves the objective by less.
    pub tol: f64,
    pub max_iter: usize,
    pub form: LikelihoodForm,
    pub seed: u64,
}

impl Default for HierConfig {
    fn default() -> Self {
        Self {
            varying: DEFAULT_VARYING.to_vec(),
            fixed_sd: None,
            tol: 1e-6,
            max_iter: 200,
            form: LikelihoodForm::default(),
            seed: 0,
        }
    }
}

/// Population normal of one varying parameter, on the transformed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub param: VaryingParam,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CityParams {
    pub margin_x: GpdParams,
    pub margin_y: GpdParams,
    /// Records in the sampling region.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierFit {
    pub hyper: Vec<Hyper>,
    pub city_params: BTreeMap<String, CityParams>,
    pub dep: AsymLogisticParams,
    /// Laplace-approximate marginal log-likelihood.
    pub loglik: f64,
    pub n_cities: usize,
    pub iterations: usize,
    /// Objective after each outer iteration, starting from the pooled fit.
    pub trace: Vec<f64>,
    /// Pooled fit supplying the non-varying parameters.
    pub pooled: BivFit,
    pub spec: CensoringSpec,
    pub config: HierConfig,
}

impl HierFit {
    /// Parameters for `city`, with shared dependence.
    pub fn city(&self, city: &str) -> Result<BivParams> {
        let c = self
            .city_params
            .get(city)
            .ok_or_else(|| Error::Lookup(format!("city {city:?} is not in the fit")))?;
        Ok(BivParams {
            margin_x: c.margin_x,
            margin_y: c.margin_y,
            dep: self.dep,
        })
    }
}

/// Medians of the height margin and of floors for one parameter set.
fn medians(p: &BivParams, spec: &CensoringSpec) -> Result<(f64, f64)> {
    Ok((
        p.margin_x.quantile(0.5)?,
        p.margin_y.quantile(0.5)? / spec.floor_scale,
    ))
}

/// Marginal medians of a city's fitted height and floors.
pub fn city_median(fit: &HierFit, city: &str) -> Result<(f64, f64)> {
    medians(&fit.city(city)?, &fit.spec)
}

/// State of one city at its penalized mode.
#[derive(Debug, Clone)]
struct CityMode {
    /// Transformed varying parameters at the mode.
    p: DVector<f64>,
    /// Standardized offsets used as optimization variables.
    z: Vec<f64>,
    /// Negative Hessian of the city log-likelihood at the mode.
    a: DMatrix<f64>,
    loglik: f64,
}

/// Fixed ingredients of the outer iteration.
struct Problem<'a> {
    cities: Vec<Vec<Point>>,
    base: [f64; 9],
    idx: Vec<usize>,
    tr: [ParamTransform; 9],
    spec: &'a CensoringSpec,
    form: LikelihoodForm,
    optim: OptimOptions,
}

#[derive(Debug, Clone)]
struct State {
    m: DVector<f64>,
    sd: DVector<f64>,
    dep: AsymLogisticParams,
    modes: Vec<CityMode>,
    objective: f64,
}

impl Problem<'_> {
    fn k(&self) -> usize {
        self.idx.len()
    }

    /// Nine-parameter vector with the varying entries set from `p`.
    fn params(&self, p: &[f64], dep: &AsymLogisticParams) -> BivParams {
        let mut v = self.base;
        for (j, &i) in self.idx.iter().enumerate() {
            v[i] = self.tr[i].inverse(p[j]);
        }
        let mut out = from_slice(&v);
        out.dep = *dep;
        out
    }

    fn city_loglik(&self, c: usize, p: &[f64], dep: &AsymLogisticParams) -> f64 {
        loglik_points(&self.cities[c], &self.params(p, dep), self.spec, self.form)
    }

    /// Variable scale: the population sd, capped at 1.
    fn scale(sd: &DVector<f64>) -> DVector<f64> {
        sd.map(|s| s.min(1.0))
    }

    fn mode(
        &self,
        c: usize,
        m: &DVector<f64>,
        sd: &DVector<f64>,
        dep: &AsymLogisticParams,
        z0: &[f64],
    ) -> Result<CityMode> {
        let k = self.k();
        let scale = Self::scale(sd);
        let to_p = |z: &[f64]| -> Vec<f64> { (0..k).map(|j| m[j] + scale[j] * z[j]).collect() };
        let pen = |z: &[f64]| {
            let l = self.city_loglik(c, &to_p(z), dep);
            let q: f64 = (0..k).map(|j| (scale[j] * z[j] / sd[j]).powi(2)).sum();
            l - 0.5 * q
        };
        let r = optim::maximize(pen, z0, &vec![ParamTransform::Identity; k], &self.optim)?;
        let p = to_p(&r.argmax);
        let a = optim::observed_info(&|q: &[f64]| self.city_loglik(c, q, dep), &p)?;
        Ok(CityMode {
            loglik: self.city_loglik(c, &p, dep),
            p: DVector::from_vec(p),
            z: r.argmax,
            a,
        })
    }

    fn modes(
        &self,
        m: &DVector<f64>,
        sd: &DVector<f64>,
        dep: &AsymLogisticParams,
        prev: Option<&[CityMode]>,
    ) -> Result<Vec<CityMode>> {
        (0..self.cities.len())
            .into_par_iter()
            .map(|c| {
                let z0 = prev.map_or_else(|| vec![0.0; self.k()], |p| p[c].z.clone());
                self.mode(c, m, sd, dep, &z0)
            })
            .collect()
    }

    /// `l_c(p) - |(p - m) / sd|^2 / 2 - logdet(D A D + I) / 2`, summed over
    /// cities, with `D = diag(sd)`.
    fn objective(&self, modes: &[CityMode], m: &DVector<f64>, sd: &DVector<f64>) -> f64 {
        let d = DMatrix::from_diagonal(sd);
        modes
            .iter()
            .map(|cm| {
                let q: f64 =
                    cm.p.iter()
                        .zip(m.iter())
                        .zip(sd.iter())
                        .map(|((p, m), s)| ((p - m) / s).powi(2))
                        .sum();
                let mmat = &d * &cm.a * &d + DMatrix::identity(self.k(), self.k());
                cm.loglik - 0.5 * q - 0.5 * logdet_psd(&mmat)
            })
            .sum()
    }

    fn state(
        &self,
        m: DVector<f64>,
        sd: DVector<f64>,
        dep: AsymLogisticParams,
        prev: Option<&[CityMode]>,
    ) -> Result<State> {
        let modes = self.modes(&m, &sd, &dep, prev)?;
        let objective = self.objective(&modes, &m, &sd);
        Ok(State {
            m,
            sd,
            dep,
            modes,
            objective,
        })
    }
}

fn logdet_psd(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|l| l.max(1e-12).ln())
        .sum()
}

fn inverse_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let inv = e.eigenvalues.map(|l| 1.0 / l.max(1e-12));
    &e.eigenvectors * DMatrix::from_diagonal(&inv) * e.eigenvectors.transpose()
}

/// Tries `propose(step)` for halving steps and keeps the first improvement.
/// With `extrapolate`, a full step that improves is doubled while it keeps
/// improving.
fn line_search<F>(current: &State, extrapolate: bool, mut propose: F) -> Result<Option<State>>
where
    F: FnMut(f64) -> Result<State>,
{
    let better = |s: &State, than: f64| s.objective.is_finite() && s.objective > than;
    let mut step = 1.0;
    for _ in 0..8 {
        let s = propose(step)?;
        if better(&s, current.objective) {
            if !extrapolate || step < 1.0 {
                return Ok(Some(s));
            }
            let mut best = s;
            for _ in 0..6 {
                step *= 2.0;
                let next = propose(step)?;
                if !better(&next, best.objective) {
                    break;
                }
                best = next;
            }
            return Ok(Some(best));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Contributing points of each city, ordered by value within a city and
/// cities ordered by their points, so that relabeling cities or reordering
/// records leaves every floating-point sum unchanged.
fn canonical_cities<'a>(
    groups: &'a BTreeMap<String, Catalog>,
    spec: &CensoringSpec,
) -> (Vec<&'a String>, Vec<Vec<Point>>) {
    let key = |p: &Point| (p.x, p.y);
    let cmp_pts = |a: &Point, b: &Point| {
        key(a)
            .0
            .total_cmp(&key(b).0)
            .then(key(a).1.total_cmp(&key(b).1))
    };
    let mut all: Vec<(&String, Vec<Point>)> = groups
        .iter()
        .map(|(name, c)| {
            let mut pts = points(c, spec);
            pts.sort_by(cmp_pts);
            (name, pts)
        })
        .collect();
    all.sort_by(|a, b| {
        a.1.len().cmp(&b.1.len()).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(p, q)| cmp_pts(p, q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    all.into_iter().unzip()
}

/// Penalized fit of city-varying margins with shared dependence.
pub fn fit_hierarchical(
    groups: &BTreeMap<String, Catalog>,
    spec: &CensoringSpec,
    config: &HierConfig,
) -> Result<HierFit> {
    spec.validate()?;
    if groups.len() < 3 {
        return Err(Error::Data(format!(
            "{} cities; at least 3 are needed to estimate a population sd",
            groups.len()
        )));
    }
    if config.varying.is_empty() {
        return Err(Error::Argument("no varying parameters configured".into()));
    }
    let mut varying = config.varying.clone();
    varying.sort();
    varying.dedup();
    if let Some(sd) = config.fixed_sd {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::Argument(format!("fixed sd {sd} must be positive")));
        }
    }
    let (names, cities) = canonical_cities(groups, spec);
    if let Some((name, _)) = names.iter().zip(&cities).find(|(_, p)| p.is_empty()) {
        return Err(Error::Data(format!(
            "city {name:?} has no record above either threshold"
        )));
    }

    let optim = OptimOptions::with_seed(config.seed);
    let pooled = fit_points(
        &cities.concat(),
        spec,
        &BivFitOptions {
            form: config.form,
            optim,
            init: None,
        },
    )?;
    let tr = transforms(spec);
    let base = to_vec(&pooled.params());
    let idx: Vec<usize> = varying.iter().map(|v| v.index()).collect();
    let problem = Problem {
        cities,
        base,
        idx: idx.clone(),
        tr,
        spec,
        form: config.form,
        optim,
    };
    let k = idx.len();
    let m0 = DVector::from_iterator(k, idx.iter().map(|&i| tr[i].forward(base[i])));
    let sd0 = DVector::from_element(k, config.fixed_sd.unwrap_or(0.1));
    let mut state = problem.state(m0, sd0, pooled.dep, None)?;
    let mut trace = vec![state.objective];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        let start = state.objective;

        // Population means: Newton on the marginal objective.
        {
            let d = DMatrix::from_diagonal(&state.sd);
            let d_inv = DMatrix::from_diagonal(&state.sd.map(|s| 1.0 / s));
            let scale = Problem::scale(&state.sd);
            let mut g = DVector::zeros(k);
            let mut b = DMatrix::zeros(k, k);
            for cm in &state.modes {
                for j in 0..k {
                    g[j] += scale[j] * cm.z[j] / (state.sd[j] * state.sd[j]);
                }
                let mmat = &d * &cm.a * &d + DMatrix::identity(k, k);
                b += &d_inv * inverse_psd(&mmat) * &d * &cm.a;
            }
            let b = (&b + b.transpose()) * 0.5;
            let delta = match b.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    let n = state.modes.len() as f64;
                    state
                        .modes
                        .iter()
                        .fold(DVector::zeros(k), |acc, cm| acc + (&cm.p - &state.m) / n)
                }
            };
            let cur = state.clone();
            if let Some(s) = line_search(&cur, false, |step| {
                problem.state(
                    &cur.m + &delta * step,
                    cur.sd.clone(),
                    cur.dep,
                    Some(&cur.modes),
                )
            })? {
                state = s;
            }
        }

        // Population sds: EM update with Laplace posterior variances.
        if config.fixed_sd.is_none() {
            let d = DMatrix::from_diagonal(&state.sd);
            let n = state.modes.len() as f64;
            let mut target: DVector<f64> = DVector::zeros(k);
            for cm in &state.modes {
                let mmat = &d * &cm.a * &d + DMatrix::identity(k, k);
                let post = &d * inverse_psd(&mmat) * &d;
                for j in 0..k {
                    target[j] += ((cm.p[j] - state.m[j]).powi(2) + post[(j, j)]) / n;
                }
            }
            let target = target.map(|v| v.sqrt().max(SD_FLOOR));
            let cur = state.clone();
            if let Some(s) = line_search(&cur, true, |step| {
                let sd = cur.sd.zip_map(&target, |a, b| {
                    let v = (a.ln() + step * (b.ln() - a.ln())).exp();
                    // Snap log round-off back onto the floor.
                    if v < SD_FLOOR * (1.0 + 1e-12) {
                        SD_FLOOR
                    } else {
                        v
                    }
                });
                problem.state(cur.m.clone(), sd, cur.dep, Some(&cur.modes))
            })? {
                state = s;
            }
        }

        // Shared dependence given the city modes.
        {
            let dep_tr = [tr[6], tr[7], tr[8]];
            let modes = &state.modes;
            let r = optim::maximize(
                |v| {
                    let dep = AsymLogisticParams {
                        theta_x: v[0],
                        theta_y: v[1],
                        r: v[2],
                    };
                    (0..modes.len())
                        .map(|c| problem.city_loglik(c, modes[c].p.as_slice(), &dep))
                        .sum()
                },
                &[state.dep.theta_x, state.dep.theta_y, state.dep.r],
                &dep_tr,
                &optim,
            )?;
            let from = optim::to_unconstrained(
                &dep_tr,
                &[state.dep.theta_x, state.dep.theta_y, state.dep.r],
            );
            let to = r.argmax_unconstrained.clone();
            let cur = state.clone();
            if let Some(s) = line_search(&cur, false, |step| {
                let z: Vec<f64> = from
                    .iter()
                    .zip(&to)
                    .map(|(a, b)| a + step * (b - a))
                    .collect();
                let v = optim::to_constrained(&dep_tr, &z);
                let dep = AsymLogisticParams {
                    theta_x: v[0],
                    theta_y: v[1],
                    r: v[2],
                };
                problem.state(cur.m.clone(), cur.sd.clone(), dep, Some(&cur.modes))
            })? {
                state = s;
            }
        }

        trace.push(state.objective);
        if state.objective - start < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Optimization(format!(
            "hierarchical fit still improving after {iterations} iterations"
        )));
    }

    let hyper = varying
        .iter()
        .enumerate()
        .map(|(j, &param)| Hyper {
            param,
            mean: state.m[j],
            sd: state.sd[j],
        })
        .collect();
    let city_params = names
        .iter()
        .zip(&state.modes)
        .zip(&problem.cities)
        .map(|((name, cm), pts)| {
            let p = problem.params(cm.p.as_slice(), &state.dep);
            (
                (*name).clone(),
                CityParams {
                    margin_x: p.margin_x,
                    margin_y: p.margin_y,
                    n: pts.len(),
                },
            )
        })
        .collect();
    Ok(HierFit {
        hyper,
        city_params,
        dep: state.dep,
        loglik: state.objective,
        n_cities: groups.len(),
        iterations,
        trace,
        pooled,
        spec: *spec,
        config: HierConfig {
            varying,
            ..config.clone()
        },
    })
}

/// Per-city MLE of the varying parameters with everything else held at
/// the hierarchical fit's shared values.
pub fn stratified_params(fit: &HierFit, city: &str, catalog: &Catalog) -> Result<BivParams> {
    let spec = &fit.spec;
    let tr = transforms(spec);
    let idx: Vec<usize> = fit.config.varying.iter().map(|v| v.index()).collect();
    let pts = points(catalog, spec);
    if pts.is_empty() {
        return Err(Error::Data(format!(
            "city {city:?} has no record above either threshold"
        )));
    }
    let start = fit.city(city).unwrap_or_else(|_| fit.pooled.params());
    let base = to_vec(&BivParams {
        dep: fit.dep,
        ..fit.pooled.params()
    });
    let build = |v: &[f64]| {
        let mut all = base;
        for (j, &i) in idx.iter().enumerate() {
            all[i] = v[j];
        }
        from_slice(&all)
    };
    let init: Vec<f64> = idx.iter().map(|&i| to_vec(&start)[i]).collect();
    let local_tr: Vec<ParamTransform> = idx.iter().map(|&i| tr[i]).collect();
    let r = optim::maximize(
        |v| loglik_points(&pts, &build(v), spec, fit.config.form),
        &init,
        &local_tr,
        &OptimOptions::with_seed(fit.config.seed),
    )?;
    if !r.converged {
        return Err(Error::Optimization(format!(
            "stratified fit for {city:?} did not converge"
        )));
    }
    Ok(build(&r.argmax))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub city: String,
    pub n: usize,
    /// Absent when the city's own data cannot support a fit.
    pub strat_h: Option<f64>,
    pub hier_h: f64,
    pub pooled_h: f64,
    pub strat_f: Option<f64>,
    pub hier_f: f64,
    pub pooled_f: f64,
}

/// Stratified, hierarchical and pooled medians for every city.
pub fn shrinkage_report(
    fit: &HierFit,
    groups: &BTreeMap<String, Catalog>,
) -> Result<Vec<ShrinkageRow>> {
    let (pooled_h, pooled_f) = medians(&fit.pooled.params(), &fit.spec)?;
    groups
        .par_iter()
        .map(|(city, catalog)| {
            let (hier_h, hier_f) = city_median(fit, city)?;
            let strat = stratified_params(fit, city, catalog)
                .ok()
                .and_then(|p| medians(&p, &fit.spec).ok());
            Ok(ShrinkageRow {
                city: city.clone(),
                n: fit.city_params[city].n,
                strat_h: strat.map(|s| s.0),
                hier_h,
                pooled_h,
                strat_f: strat.map(|s| s.1),
                hier_f,
                pooled_f,
            })
        })
        .collect()
}
