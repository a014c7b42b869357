//! Joint model of height and floors, then the floors expected of a
//! 1,000 m and a one-mile building.
//!
//! cargo run --release --example bivariate_floors -- [seed]

use skyline_evt::bivariate::{fit_bivariate, DEFAULT_FLOOR_GRID};
use skyline_evt::simulate::{synth_catalog, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(6);
    let spec = SynthSpec::calibrated(vec!["Anywhere".into()]);
    let catalog = synth_catalog(&spec, seed)?;
    let fit = fit_bivariate(&catalog, &spec.censoring)?;
    let d = fit.dep;
    println!(
        "dependence: theta_x {:.2}, theta_y {:.2}, r {:.2} (truth {}, {}, {})",
        d.theta_x,
        d.theta_y,
        d.r,
        spec.params.dep.theta_x,
        spec.params.dep.theta_y,
        spec.params.dep.r
    );

    for height in [828.0, 1000.0, 1609.34] {
        let q = |p| fit.conditional_quantile(height, p);
        let density = fit.conditional_floor_density(height, DEFAULT_FLOOR_GRID)?;
        let (mode, _) =
            density.iter().copied().fold(
                (0, 0.0),
                |best, (f, v)| if v > best.1 { (f, v) } else { best },
            );
        println!(
            "{height:7.2} m: median {:.0} floors, 90% below {:.0}, mode {mode}",
            q(0.5)?,
            q(0.9)?
        );
    }
    Ok(())
}
