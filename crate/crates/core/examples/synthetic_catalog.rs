//! Writes a calibrated synthetic catalog as CSV, usable as CLI input.
//!
//! cargo run --release --example synthetic_catalog -- out.csv [seed]

use std::fs::File;
use std::io::BufWriter;

use skyline_evt::catalog::{write_catalog, ColumnMap};
use skyline_evt::simulate::{synth_catalog, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "synthetic.csv".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2018);

    let cities = [
        "Dubai",
        "Hong Kong",
        "New York",
        "Shanghai",
        "Shenzhen",
        "Chicago",
    ]
    .map(String::from)
    .to_vec();
    let catalog = synth_catalog(&SynthSpec::calibrated(cities), seed)?;
    let schema = ColumnMap {
        id: Some("id".into()),
        ..ColumnMap::default()
    };
    write_catalog(&catalog, BufWriter::new(File::create(&path)?), &schema)?;
    println!("{} records written to {path}", catalog.len());
    Ok(())
}
