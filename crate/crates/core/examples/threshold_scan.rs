//! Shape estimates across thresholds, the fit at 225 m and Hill estimates.
//!
//! cargo run --release --example threshold_scan -- [seed]

use skyline_evt::evt::{fit_gpd, hill_estimates, threshold_scan, DEFAULT_SCAN_GRID};
use skyline_evt::optim::OptimOptions;
use skyline_evt::simulate::{synth_catalog, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(4);
    let heights = synth_catalog(&SynthSpec::calibrated(vec!["Anywhere".into()]), seed)?.heights();

    let scan = threshold_scan(&heights, &DEFAULT_SCAN_GRID, &OptimOptions::with_seed(seed))?;
    println!("   u   n     xi   95% interval");
    for r in &scan.rows {
        println!(
            "{:4.0} {:4} {:6.3}  [{:.3}, {:.3}]",
            r.u, r.n_exceed, r.xi_hat, r.xi_lo95, r.xi_hi95
        );
    }

    let exceed: Vec<f64> = heights.iter().copied().filter(|&h| h > 225.0).collect();
    let fit = fit_gpd(&exceed, 225.0)?;
    println!(
        "above 225 m: sigma {:.2}, xi {:.3} (se {:.3})",
        fit.params.sigma, fit.params.xi, fit.se.xi
    );

    for (k, xi) in hill_estimates(&heights, &[50, 100, 200, 300])? {
        println!("Hill k={k}: {xi:.3}");
    }
    Ok(())
}
