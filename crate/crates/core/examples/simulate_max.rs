//! Distribution of the tallest of n future buildings, by simulation and in
//! closed form.
//!
//! cargo run --release --example simulate_max -- [n_buildings] [seed]

use skyline_evt::evt::GpdParams;
use skyline_evt::simulate::{
    max_exceedance_analytic, max_quantile_analytic, simulate_max_with, MaxSimSpec,
    DEFAULT_LANDMARKS,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8400);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2050);

    let params = GpdParams::new(225.0, 31.5, 0.2)?;
    let res = simulate_max_with(
        &params,
        &MaxSimSpec::new(n, 10_000, seed),
        &DEFAULT_LANDMARKS,
        &[0.5, 0.95],
    )?;
    for e in &res.exceedance {
        println!(
            "P(max > {:7.2} m) = {:.3} +/- {:.3}, exact {:.3}",
            e.height,
            e.prob,
            e.mc_se,
            max_exceedance_analytic(&params, n, e.height)
        );
    }
    println!(
        "95% of maxima below {:.0} m (exact {:.0} m)",
        res.quantile(0.95),
        max_quantile_analytic(&params, n, 0.95)?
    );
    Ok(())
}
