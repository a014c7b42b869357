mod common;

use common::{calibrated_csv, cli, cli_ok, csv_header, csv_rows, dir_contents, read_json, s};

#[test]
fn fit_counts_recovers_growth_and_backtests() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 4, 11);
    let out = dir.path().join("out");
    cli_ok(&[
        "fit-counts",
        "--input",
        s(&input),
        "--seed",
        "3",
        "--out",
        s(&out),
        "--cutoff",
        "1984",
    ]);
    let trend = read_json(&out.join("trend.json"));
    let growth = trend["annual_growth"].as_f64().unwrap();
    assert!((0.07..=0.09).contains(&growth), "growth {growth}");
    for key in ["alpha", "beta", "se_alpha", "se_beta", "per_billion"] {
        assert!(trend[key].is_f64(), "{key}");
    }
    assert!(trend["cumulative"]["mean"].as_f64().unwrap() > 0.0);

    let bt = read_json(&out.join("backtest.json"));
    for key in ["predicted_total", "actual_total", "pct_error"] {
        assert!(bt[key].is_number(), "{key}");
    }
    assert_eq!(bt["cutoff"], 1984);

    assert_eq!(
        csv_header(&out.join("forecast.csv")),
        ["year", "mean", "lo95", "hi95"]
    );
    let rows = csv_rows(&out.join("forecast.csv"));
    assert_eq!(rows.first().unwrap()[0], "1950");
    assert_eq!(rows.last().unwrap()[0], "2050");
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let o = cli(&[
        "fit-counts",
        "--input",
        s(&missing),
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["exit_code"], 2);
    assert_eq!(err["path"], s(&missing));
    assert!(err["message"].as_str().unwrap().contains("nowhere.csv"));
}

#[test]
fn every_command_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 3, 1);
    let out = dir.path().join("out");
    for cmd in ["fit-counts", "fit-gpd", "fit-bivariate"] {
        let o = cli(&[cmd, "--input", s(&input), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert!(err["message"].as_str().unwrap().contains("seed"));
    }
    let o = cli(&[
        "simulate-max",
        "--mu",
        "225",
        "--sigma",
        "31.5",
        "--xi",
        "0.2",
        "--n-buildings",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("maxima.csv").exists());
}

#[test]
fn fit_gpd_honours_the_grid_and_recovers_the_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 4, 12);
    let out = dir.path().join("out");
    cli_ok(&[
        "fit-gpd",
        "--input",
        s(&input),
        "--seed",
        "5",
        "--out",
        s(&out),
        "--grid",
        "150:350:25",
        "--boot-reps",
        "200",
    ]);
    let scan = csv_rows(&out.join("scan.csv"));
    let us: Vec<f64> = scan.iter().map(|r| r[0].parse().unwrap()).collect();
    let want: Vec<f64> = (0..9).map(|i| 150.0 + 25.0 * i as f64).collect();
    assert_eq!(us, want);

    let gpd = read_json(&out.join("gpd.json"));
    let xi = gpd["fit"]["params"]["xi"].as_f64().unwrap();
    let se = gpd["fit"]["se"]["xi"].as_f64().unwrap();
    assert!((xi - 0.2).abs() <= 1.96 * se, "xi {xi} se {se}");

    let mt = read_json(&out.join("median_trend.json"));
    assert!(mt["slope"].is_f64());
    let p = mt["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    for k in 1..=6 {
        assert_eq!(
            csv_header(&out.join(format!("qq_sextile_{k}.csv"))),
            ["emp", "theo"]
        );
    }
}

#[test]
fn simulate_max_calibrated_band() {
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
        "8400",
        "--replicates",
        "1000",
        "--seed",
        "2050",
        "--out",
        s(&out),
    ]);
    let ex = read_json(&out.join("exceedance.json"));
    let prob = |h: f64| {
        ex["exceedance"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["height"].as_f64() == Some(h))
            .unwrap()["prob"]
            .as_f64()
            .unwrap()
    };
    assert!(prob(828.0) > 0.9);
    assert!((0.03..=0.2).contains(&prob(1609.34)));
    assert_eq!(csv_rows(&out.join("maxima.csv")).len(), 1000);
    assert!(ex["upper95"].as_f64().unwrap() > 828.0);
}

#[test]
fn auto_n_comes_from_the_count_trend() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 3, 13);
    let out = dir.path().join("out");
    cli_ok(&[
        "simulate-max",
        "--input",
        s(&input),
        "--mu",
        "225",
        "--sigma",
        "31.5",
        "--xi",
        "0.2",
        "--auto-n",
        "--replicates",
        "200",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    let ex = read_json(&out.join("exceedance.json"));
    let auto = &ex["auto_n"];
    let expected =
        auto["expected_total"].as_f64().unwrap() * auto["frac_extreme"].as_f64().unwrap();
    assert_eq!(ex["n_buildings"].as_u64().unwrap(), expected.round() as u64);
    assert!((0.05..0.15).contains(&auto["frac_extreme"].as_f64().unwrap()));
}

#[test]
fn simulate_max_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        cli_ok(&[
            "simulate-max",
            "--mu",
            "225",
            "--sigma",
            "31.5",
            "--xi",
            "0.2",
            "--n-buildings",
            "500",
            "--replicates",
            "300",
            "--seed",
            "9",
            "--threads",
            threads,
            "--out",
            s(&out),
        ]);
        dir_contents(&out)
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
}

#[test]
fn fit_bivariate_writes_normalized_curves_and_city_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 3, 14);
    let out = dir.path().join("out");
    cli_ok(&[
        "fit-bivariate",
        "--input",
        s(&input),
        "--seed",
        "8",
        "--out",
        s(&out),
        "--hier",
    ]);
    for h in ["1000", "1609.34"] {
        let p = out.join(format!("conditional_{h}.csv"));
        assert_eq!(csv_header(&p), ["floors", "density"]);
        let total: f64 = csv_rows(&p)
            .iter()
            .map(|r| r[1].parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() <= 1e-6, "{h}: {total}");
    }
    let biv = read_json(&out.join("bivariate.json"));
    for k in ["theta_x", "theta_y", "r"] {
        assert!(biv["fit"]["dep"][k].is_f64(), "{k}");
    }
    let masses = &biv["region_masses"];
    let sum: f64 = ["both", "height_only", "floors_only"]
        .iter()
        .map(|k| masses[*k].as_f64().unwrap())
        .sum();
    // The rest of the mass lies below both thresholds.
    assert!(sum > 0.0 && sum <= 1.0, "{sum}");

    let cities = out.join("cities.csv");
    assert_eq!(
        csv_header(&cities),
        ["city", "n", "strat_h", "hier_h", "pooled_h", "strat_f", "hier_f", "pooled_f"]
    );
    assert_eq!(csv_rows(&cities).len(), 3);
    let trace = read_json(&out.join("hier.json"))["trace"]
        .as_array()
        .unwrap()
        .clone();
    for w in trace.windows(2) {
        assert!(w[1].as_f64() >= w[0].as_f64());
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let input = calibrated_csv(dir.path(), 3, 15);
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "input = {:?}\nout = {:?}\nseed = 4\n[trend]\nreps = 500\nforecast_to = 2030\n",
            s(&input),
            s(&out)
        ),
    )
    .unwrap();
    cli_ok(&["fit-counts", "--config", s(&cfg)]);
    let rows = csv_rows(&out.join("forecast.csv"));
    assert_eq!(rows.last().unwrap()[0], "2030");
    assert_eq!(read_json(&out.join("trend.json"))["seed"], 4);

    std::fs::write(&cfg, "sed = 4\n").unwrap();
    assert_eq!(
        cli(&["fit-counts", "--config", s(&cfg)]).status.code(),
        Some(2)
    );
}
