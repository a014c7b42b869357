//! Poisson trend in yearly completions and the 2018-2050 forecast.
//!
//! cargo run --release --example fit_counts -- [seed]

use skyline_evt::catalog::counts_by_year;
use skyline_evt::simulate::{synth_catalog, SynthSpec};
use skyline_evt::trend::{cumulative_forecast, fit_poisson_trend, predict_counts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1);
    let catalog = synth_catalog(&SynthSpec::calibrated(vec!["Anywhere".into()]), seed)?;
    let counts = counts_by_year(&catalog, 1950, 2017)?;
    let fit = fit_poisson_trend(&counts)?;
    println!(
        "beta {:.4} (se {:.4}), growth {:.1}% a year",
        fit.beta,
        fit.se_beta(),
        100.0 * fit.annual_growth()
    );

    for band in predict_counts(&fit, 2018, 2050, 5000, seed)?
        .iter()
        .step_by(8)
    {
        println!(
            "{}: {:.0} [{}, {}]",
            band.year, band.mean, band.lo95, band.hi95
        );
    }
    let total = cumulative_forecast(&fit, 2018, 2050, 10_000, seed)?;
    println!("2018-2050 total: {:.0} +/- {:.0}", total.mean, total.se);
    Ok(())
}
