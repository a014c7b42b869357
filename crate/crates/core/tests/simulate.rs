mod common;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyline_evt::bivariate::{to_exp_margin, AsymLogisticParams, CensoringSpec};
use skyline_evt::evt::GpdParams;
use skyline_evt::simulate::{
    max_exceedance_analytic, max_quantile_analytic, simulate_max, simulate_max_with, synth_catalog,
    MaxSimSpec, SynthSpec, DEFAULT_LANDMARKS,
};

fn calibrated() -> GpdParams {
    GpdParams::new(225.0, 31.5, 0.2).unwrap()
}

#[test]
fn exceedance_follows_the_maximum_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for draw in 0..20u64 {
        let g = GpdParams::new(
            225.0,
            rng.random_range(20.0..45.0),
            rng.random_range(0.05..0.3),
        )
        .unwrap();
        let n = rng.random_range(500..5000);
        let res = simulate_max(&g, &MaxSimSpec::new(n, 2000, draw), &DEFAULT_LANDMARKS).unwrap();
        for e in &res.exceedance {
            let exact = max_exceedance_analytic(&g, n, e.height);
            let se = (exact * (1.0 - exact) / 2000.0).sqrt().max(1e-12);
            assert!(
                (e.prob - exact).abs() <= 3.0 * se,
                "{g:?} n={n} at {}: {} vs {exact}",
                e.height,
                e.prob
            );
        }
    }
}

#[test]
fn maxima_grow_with_the_number_of_buildings() {
    let g = calibrated();
    let runs: Vec<_> = [100, 1000, 10_000]
        .iter()
        .map(|&n| simulate_max(&g, &MaxSimSpec::new(n, 500, 4), &DEFAULT_LANDMARKS).unwrap())
        .collect();
    for w in runs.windows(2) {
        // Shared streams: each replicate's larger run extends the smaller one.
        for (a, b) in w[0].maxima.iter().zip(&w[1].maxima) {
            assert!(b >= a);
        }
        for (a, b) in w[0].exceedance.iter().zip(&w[1].exceedance) {
            assert!(b.prob >= a.prob);
        }
    }
}

#[test]
fn doubling_replicates_shrinks_the_error_by_root_two() {
    let g = calibrated();
    let spread = |reps: usize| {
        let p: Vec<f64> = (0..100u64)
            .map(|s| {
                simulate_max(&g, &MaxSimSpec::new(300, reps, 500 + s), &[1000.0])
                    .unwrap()
                    .exceedance[0]
                    .prob
            })
            .collect();
        let m = p.iter().sum::<f64>() / p.len() as f64;
        (p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (p.len() - 1) as f64).sqrt()
    };
    let ratio = spread(400) / spread(800);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");

    let r1 = simulate_max(&g, &MaxSimSpec::new(300, 4000, 1), &[1000.0]).unwrap();
    let r2 = simulate_max(&g, &MaxSimSpec::new(300, 8000, 1), &[1000.0]).unwrap();
    let reported = r1.exceedance[0].mc_se / r2.exceedance[0].mc_se;
    assert!(
        (reported / 2f64.sqrt() - 1.0).abs() < 0.2,
        "reported {reported}"
    );
}

#[test]
fn upper_quantile_matches_the_exact_law() {
    let g = calibrated();
    let n = 2000;
    let reps = 4000;
    let q = max_quantile_analytic(&g, n, 0.975).unwrap();
    let res = simulate_max_with(&g, &MaxSimSpec::new(n, reps, 8), &[q], &[0.975]).unwrap();
    let below = 1.0 - res.exceedance[0].prob;
    let se = (0.975 * 0.025 / reps as f64).sqrt();
    assert!((below - 0.975).abs() <= 3.0 * se, "{below}");
}

#[test]
fn exponential_median_of_the_maximum() {
    let g = GpdParams::new(100.0, 20.0, 0.0).unwrap();
    for n in [1usize, 10, 10_000] {
        let exact = 100.0 - 20.0 * (-(0.5f64.powf(1.0 / n as f64))).ln_1p();
        assert_abs_diff_eq!(
            max_quantile_analytic(&g, n, 0.5).unwrap(),
            exact,
            epsilon = 1e-9
        );
    }
    let asymptotic = 100.0 + 20.0 * (10_000f64 / 2f64.ln()).ln();
    assert_abs_diff_eq!(
        max_quantile_analytic(&g, 10_000, 0.5).unwrap(),
        asymptotic,
        epsilon = 1e-2
    );
}

#[test]
fn independent_synthetic_margins_are_uncorrelated() {
    let mut spec = SynthSpec::calibrated(vec!["a".into()]);
    spec.params.dep = AsymLogisticParams::INDEPENDENCE;
    spec.years = (2000, 2004);
    spec.alpha = 2000f64.ln() - spec.beta * 2002.0;
    let cat = synth_catalog(&spec, 72).unwrap();
    assert!(cat.len() > 9000, "{}", cat.len());
    let c = CensoringSpec::default();
    let pairs: Vec<(f64, f64)> = cat
        .iter()
        .map(|r| {
            let x = to_exp_margin(r.height, &spec.params.margin_x).unwrap();
            // Rounding can put floors just below the margin location.
            let y = (r.floors as f64 * c.floor_scale).max(spec.params.margin_y.mu);
            (x, to_exp_margin(y, &spec.params.margin_y).unwrap())
        })
        .collect();
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let rho = sxy / (sxx * syy).sqrt();
    assert!(rho.abs() < 0.05, "rho {rho}");
}

#[test]
fn synthetic_catalog_ignores_thread_count() {
    let spec = SynthSpec::calibrated(vec!["a".into(), "b".into()]);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| synth_catalog(&spec, 73).unwrap());
    let b = four.install(|| synth_catalog(&spec, 73).unwrap());
    assert_eq!(a, b);
    let g = calibrated();
    let s = MaxSimSpec::new(1000, 300, 74);
    assert_eq!(
        one.install(|| simulate_max(&g, &s, &DEFAULT_LANDMARKS).unwrap())
            .maxima,
        four.install(|| simulate_max(&g, &s, &DEFAULT_LANDMARKS).unwrap())
            .maxima
    );
}
