//! Fits the count trend through 1984 and checks the prediction against the
//! completions recorded afterwards, for several synthetic catalogs.
//!
//! cargo run --release --example backtest -- [cutoff]

use skyline_evt::simulate::{synth_catalog, SynthSpec};
use skyline_evt::trend::backtest;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cutoff: i32 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1984);
    let spec = SynthSpec::calibrated(vec!["Anywhere".into()]);
    for seed in 1..=5 {
        let catalog = synth_catalog(&spec, seed)?;
        let bt = backtest(&catalog, 1950, cutoff, 2017)?;
        println!(
            "seed {seed}: predicted {:.0}, actual {}, error {:+.1}%",
            bt.predicted_total,
            bt.actual_total,
            100.0 * bt.pct_error
        );
    }
    Ok(())
}
