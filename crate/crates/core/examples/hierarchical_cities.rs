//! City-varying margins: stratified, hierarchical and pooled medians of
//! the extremely tall buildings in each city.
//!
//! cargo run --release --example hierarchical_cities -- [seed]

use skyline_evt::bivariate::CensoringSpec;
use skyline_evt::catalog::group_by_city;
use skyline_evt::hier::{fit_hierarchical, shrinkage_report, HierConfig};
use skyline_evt::simulate::{synth_catalog, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(5);
    let cities = ["Dubai", "Hong Kong", "New York", "Shanghai", "Shenzhen"]
        .map(String::from)
        .to_vec();
    let catalog = synth_catalog(&SynthSpec::calibrated(cities), seed)?;
    let groups = group_by_city(&catalog);
    let spec = CensoringSpec::default();
    let fit = fit_hierarchical(&groups, &spec, &HierConfig::default())?;

    for h in &fit.hyper {
        println!("{:?}: mean {:.3}, sd {:.4}", h.param, h.mean, h.sd);
    }
    println!(
        "{:<10} {:>4} {:>15} {:>15} {:>15}",
        "city", "n", "stratified", "hierarchical", "pooled"
    );
    let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.0}"));
    for r in shrinkage_report(&fit, &groups)? {
        println!(
            "{:<10} {:>4} {:>7} m {:>4} fl {:>7.0} m {:>4.0} fl {:>7.0} m {:>4.0} fl",
            r.city,
            r.n,
            show(r.strat_h),
            show(r.strat_f),
            r.hier_h,
            r.hier_f,
            r.pooled_h,
            r.pooled_f
        );
    }
    Ok(())
}
