mod common;

use std::path::Path;

use common::{calibrated_csv, cli_ok, read_json, s};

fn validator(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    jsonschema::validator_for(&read_json(&path)).unwrap()
}

fn check(out: &Path, name: &str) {
    let doc = read_json(&out.join(format!("{name}.json")));
    let v = validator(name);
    let errors: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}.json: {errors:#?}");

    // Every schema pins its fields, so dropping one must fail.
    let mut broken = doc.clone();
    let key = broken.as_object().unwrap().keys().next().unwrap().clone();
    broken.as_object_mut().unwrap().remove(&key);
    assert!(
        !v.is_valid(&broken),
        "{name}.json without {key} still validates"
    );
}

#[test]
fn command_outputs_match_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 3, 21);
    let out = dir.path().join("out");
    let common = ["--input", s(&input), "--seed", "2", "--out", s(&out)];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend_from_slice(&common);
        args.extend_from_slice(extra);
        cli_ok(&args);
    };
    with("fit-counts", &["--cutoff", "1984", "--reps", "500"]);
    with("fit-gpd", &["--boot-reps", "100"]);
    let gpd_json = out.join("gpd.json");
    with(
        "simulate-max",
        &[
            "--gpd-json",
            s(&gpd_json),
            "--auto-n",
            "--replicates",
            "200",
        ],
    );
    with("fit-bivariate", &["--hier"]);
    for name in [
        "trend",
        "backtest",
        "gpd",
        "median_trend",
        "exceedance",
        "bivariate",
        "hier",
    ] {
        check(&out, name);
    }
}

#[test]
fn explicit_parameters_leave_auto_n_null() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    cli_ok(&[
        "simulate-max",
        "--mu",
        "225",
        "--sigma",
        "31.5",
        "--xi",
        "0.2",
        "--n-buildings",
        "100",
        "--replicates",
        "50",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(read_json(&out.join("exceedance.json"))["auto_n"].is_null());
    check(&out, "exceedance");
}
