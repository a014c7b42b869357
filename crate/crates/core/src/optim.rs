//! Maximum likelihood machinery.
//!
//! Parameters are mapped to an unconstrained scale, maximized there with a
//! BFGS ascent driven by finite-difference gradients, and their standard
//! errors are recovered from the observed information through the delta
//! method.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Map between a constrained parameter and the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamTransform {
    Identity,
    /// `x = exp(z)`, for scales.
    Log,
    /// `x = lo + (hi - lo) * logistic(z)`.
    LogitInterval {
        lo: f64,
        hi: f64,
    },
    /// `x = lo + exp(z)`.
    ShiftedLog {
        lo: f64,
    },
}

impl ParamTransform {
    pub const UNIT: ParamTransform = ParamTransform::LogitInterval { lo: 0.0, hi: 1.0 };

    /// Constrained value to unconstrained coordinate.
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            ParamTransform::Identity => x,
            ParamTransform::Log => x.ln(),
            ParamTransform::LogitInterval { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                p.ln() - (-p).ln_1p()
            }
            ParamTransform::ShiftedLog { lo } => (x - lo).ln(),
        }
    }

    /// Unconstrained coordinate to constrained value.
    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            ParamTransform::Identity => z,
            ParamTransform::Log => z.exp(),
            ParamTransform::LogitInterval { lo, hi } => lo + (hi - lo) * logistic(z),
            ParamTransform::ShiftedLog { lo } => lo + z.exp(),
        }
    }

    /// `d inverse / dz`.
    pub fn inverse_derivative(&self, z: f64) -> f64 {
        match *self {
            ParamTransform::Identity => 1.0,
            ParamTransform::Log => z.exp(),
            ParamTransform::LogitInterval { lo, hi } => {
                let s = logistic(z);
                let c = logistic(-z);
                (hi - lo) * s * c
            }
            ParamTransform::ShiftedLog { .. } => z.exp(),
        }
    }

    /// True when `x` lies in the open domain.
    pub fn admits(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match *self {
            ParamTransform::Identity => true,
            ParamTransform::Log => x > 0.0,
            ParamTransform::LogitInterval { lo, hi } => x > lo && x < hi,
            ParamTransform::ShiftedLog { lo } => x > lo,
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn to_unconstrained(transforms: &[ParamTransform], x: &[f64]) -> Vec<f64> {
    transforms
        .iter()
        .zip(x)
        .map(|(t, &v)| t.forward(v))
        .collect()
}

pub fn to_constrained(transforms: &[ParamTransform], z: &[f64]) -> Vec<f64> {
    transforms
        .iter()
        .zip(z)
        .map(|(t, &v)| t.inverse(v))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Gradient max-norm tolerance on the unconstrained scale, relative to
    /// `max(1, |objective|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Jittered restarts tried when the first run does not converge.
    pub restarts: usize,
    pub jitter_sd: f64,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            restarts: 5,
            jitter_sd: 0.5,
            seed: 0,
        }
    }
}

impl OptimOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    /// Maximizer on the constrained scale.
    pub argmax: Vec<f64>,
    pub argmax_unconstrained: Vec<f64>,
    pub loglik: f64,
    /// Inverse observed information on the unconstrained scale.
    pub unconstrained_cov: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// True when some information direction was numerically null, e.g. a
    /// parameter driven against a transform bound.
    pub rank_deficient: bool,
}

impl OptimResult {
    pub fn standard_errors(&self, transforms: &[ParamTransform]) -> Result<Vec<f64>> {
        delta_method_se(
            transforms,
            &self.argmax_unconstrained,
            &self.unconstrained_cov,
        )
    }
}

/// Maximizes `objective` over the constrained parameter vector.
pub fn maximize<F>(
    objective: F,
    init: &[f64],
    transforms: &[ParamTransform],
    opts: &OptimOptions,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64,
{
    if init.len() != transforms.len() {
        return Err(Error::Argument(format!(
            "{} initial values for {} transforms",
            init.len(),
            transforms.len()
        )));
    }
    if let Some(i) = (0..init.len()).find(|&i| !transforms[i].admits(init[i])) {
        return Err(Error::Argument(format!(
            "initial value {} of parameter {i} outside its domain",
            init[i]
        )));
    }
    let f = |z: &[f64]| {
        let x = to_constrained(transforms, z);
        let v = objective(&x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let z0 = to_unconstrained(transforms, init);
    let normal = Normal::new(0.0, opts.jitter_sd).expect("jitter sd must be finite");
    let mut rng = rng::substream(opts.seed, 0, 0x0971);

    let mut best: Option<Run> = None;
    for attempt in 0..=opts.restarts {
        let start: Vec<f64> = if attempt == 0 {
            z0.clone()
        } else {
            z0.iter().map(|&z| z + normal.sample(&mut rng)).collect()
        };
        if !f(&start).is_finite() {
            continue;
        }
        let run = bfgs(&f, start, opts);
        let better = best.as_ref().is_none_or(|b| {
            (run.converged && !b.converged) || (run.converged == b.converged && run.value > b.value)
        });
        if better {
            best = Some(run);
        }
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
    }
    let run = best.ok_or_else(|| {
        Error::Optimization("objective is not finite at any starting point".into())
    })?;

    let info = observed_info(&f, &run.z)?;
    let (cov, rank_deficient) = covariance_from_info(&info);
    Ok(OptimResult {
        argmax: to_constrained(transforms, &run.z),
        argmax_unconstrained: run.z,
        loglik: run.value,
        unconstrained_cov: cov,
        converged: run.converged,
        iterations: run.iterations,
        gradient_norm: run.gradient_norm,
        rank_deficient,
    })
}

struct Run {
    z: Vec<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS ascent on the unconstrained scale with Armijo backtracking.
fn bfgs<F: Fn(&[f64]) -> f64>(f: &F, z0: Vec<f64>, opts: &OptimOptions) -> Run {
    let n = z0.len();
    let mut z = DVector::from_vec(z0);
    let mut value = f(z.as_slice());
    let mut grad = DVector::from_vec(gradient(f, z.as_slice()));
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut stalls = 0;
    let mut iterations = 0;
    let tolerance = |v: f64| opts.tol * v.abs().max(1.0);

    while iterations < opts.max_iter {
        let gnorm = max_norm(&grad);
        if !gnorm.is_finite() {
            break;
        }
        if gnorm <= tolerance(value) {
            return Run {
                z: z.data.into(),
                value,
                converged: true,
                iterations,
                gradient_norm: gnorm,
            };
        }
        iterations += 1;

        let mut dir = &h * &grad;
        if dir.dot(&grad) <= 0.0 || !dir.iter().all(|d| d.is_finite()) {
            h = DMatrix::identity(n, n);
            fresh = true;
            dir = grad.clone();
        }
        if fresh {
            dir /= gnorm.max(1.0);
        }
        let longest = max_norm(&dir);
        if longest > 10.0 {
            dir *= 10.0 / longest;
        }

        let slope = dir.dot(&grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &z + step * &dir;
            let v = f(trial.as_slice());
            if v.is_finite() && v >= value + 1e-4 * step * slope {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        let Some((z_new, v_new)) = accepted else {
            if fresh {
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        let g_new = DVector::from_vec(gradient(f, z_new.as_slice()));
        // Ascent on f is descent on -f; update the inverse Hessian of -f.
        let s = &z_new - &z;
        let y = &grad - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && y.iter().all(|v| v.is_finite()) {
            if fresh {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        if (v_new - value).abs() <= 1e-15 * value.abs().max(1.0) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        z = z_new;
        value = v_new;
        grad = g_new;
        if stalls >= 5 {
            break;
        }
    }
    let gnorm = max_norm(&grad);
    Run {
        converged: gnorm.is_finite() && gnorm <= tolerance(value),
        z: z.data.into(),
        value,
        iterations,
        gradient_norm: gnorm,
    }
}

/// Five-point central-difference gradient.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, at: &[f64]) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..at.len())
        .map(|i| {
            let mut h = 1e-4 * at[i].abs().max(1.0);
            for _ in 0..12 {
                let mut eval = |d: f64| {
                    x[i] = at[i] + d;
                    let v = f(&x);
                    x[i] = at[i];
                    v
                };
                let (p1, m1, p2, m2) = (eval(h), eval(-h), eval(2.0 * h), eval(-2.0 * h));
                let d = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
                if d.is_finite() {
                    return d;
                }
                h *= 0.25;
            }
            f64::NAN
        })
        .collect()
}

/// Negated Hessian of `objective` at `at` by central second differences.
///
/// Step per coordinate is `max(1e-5, 1e-5 * |at_i|)`; the result is
/// symmetrized.
pub fn observed_info<F: Fn(&[f64]) -> f64>(objective: &F, at: &[f64]) -> Result<DMatrix<f64>> {
    let n = at.len();
    let h: Vec<f64> = at.iter().map(|a| (1e-5 * a.abs()).max(1e-5)).collect();
    let mut x = at.to_vec();
    let f0 = objective(&x);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        x[i] = at[i] + h[i];
        let fp = objective(&x);
        x[i] = at[i] - h[i];
        let fm = objective(&x);
        x[i] = at[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                x[i] = at[i] + si * h[i];
                x[j] = at[j] + sj * h[j];
                let v = objective(&x);
                x[i] = at[i];
                x[j] = at[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    for i in 0..n {
        for j in 0..=i {
            if !hess[(i, j)].is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite second difference at coordinates ({i}, {j})"
                )));
            }
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(-sym)
}

/// Pseudo-inverse of a symmetric information matrix.
///
/// Eigen-directions whose eigenvalue is nonpositive or below `1e-10` of the
/// largest carry no information and receive zero variance. The returned flag
/// reports whether any direction was dropped.
pub fn covariance_from_info(info: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = info.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let eig = SymmetricEigen::new(info.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let cutoff = 1e-10 * top;
    let mut cov = DMatrix::zeros(n, n);
    let mut dropped = false;
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        if lambda > cutoff && lambda > 0.0 {
            let v = eig.eigenvectors.column(k);
            cov += (v * v.transpose()) / lambda;
        } else {
            dropped = true;
        }
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    (cov, dropped)
}

/// Standard errors on the constrained scale: `|g_i'(z_i)| * sqrt(cov_ii)`.
pub fn delta_method_se(
    transforms: &[ParamTransform],
    at_unconstrained: &[f64],
    unconstrained_cov: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = transforms.len();
    if at_unconstrained.len() != n
        || unconstrained_cov.nrows() != n
        || unconstrained_cov.ncols() != n
    {
        return Err(Error::Argument(
            "covariance dimension does not match transforms".into(),
        ));
    }
    (0..n)
        .map(|i| {
            let var = unconstrained_cov[(i, i)];
            if var < 0.0 || var.is_nan() {
                return Err(Error::Numeric(format!(
                    "negative variance {var} for parameter {i}"
                )));
            }
            Ok(transforms[i].inverse_derivative(at_unconstrained[i]).abs() * var.sqrt())
        })
        .collect()
}
