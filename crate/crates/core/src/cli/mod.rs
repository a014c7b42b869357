//! Command-line front end.
//!
//! Every command is a pure function of its input files, configuration and
//! seed. Exit codes: 0 success, 2 data or configuration error, 3 failed
//! convergence, 4 numeric failure. Errors are printed to stderr as one JSON
//! object.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bivariate::LikelihoodForm;
use crate::error::{Error, Result};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "skyline-evt",
    version,
    about = "Extreme-value models for skyscraper catalogs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Poisson trend in yearly completions, forecast bands and backtest.
    FitCounts {
        #[command(flatten)]
        common: Common,
        /// Backtest: fit through this year and compare with later counts.
        #[arg(long)]
        cutoff: Option<i32>,
        #[arg(long)]
        start_year: Option<i32>,
        #[arg(long)]
        forecast_to: Option<i32>,
        #[arg(long)]
        reps: Option<usize>,
        /// Urban population used for the per-billion figure.
        #[arg(long)]
        population: Option<f64>,
    },
    /// Generalized Pareto fit of heights with threshold diagnostics.
    FitGpd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<f64>,
        /// Scan thresholds as `start:stop:step`, both ends included.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<Grid>,
        #[arg(long)]
        boot_reps: Option<usize>,
    },
    /// Monte Carlo distribution of the tallest of n future buildings.
    SimulateMax {
        #[command(flatten)]
        common: Common,
        /// GPD parameters from a previous `fit-gpd` run.
        #[arg(long)]
        gpd_json: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<f64>,
        #[arg(long)]
        n_buildings: Option<usize>,
        /// Derive n from the count trend and the share above the threshold.
        #[arg(long)]
        auto_n: bool,
        #[arg(long)]
        replicates: Option<usize>,
        /// Draw n per replicate from a Poisson law.
        #[arg(long)]
        poisson_n: bool,
        /// Landmark heights in metres, comma separated.
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
    },
    /// Joint height and floors model with censoring.
    FitBivariate {
        #[command(flatten)]
        common: Common,
        /// Heights for conditional floor densities, comma separated.
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
        /// Also fit city-varying margins and write the shrinkage report.
        #[arg(long)]
        hier: bool,
        #[arg(long, value_enum)]
        form: Option<FormArg>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormArg {
    Conditioned,
    Unconditioned,
    Displayed,
}

impl From<FormArg> for LikelihoodForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Conditioned => LikelihoodForm::Conditioned,
            FormArg::Unconditioned => LikelihoodForm::Unconditioned,
            FormArg::Displayed => LikelihoodForm::Displayed,
        }
    }
}

/// Flags shared by every command; each overrides the config file.
#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub col_id: Option<String>,
    #[arg(long)]
    pub col_name: Option<String>,
    #[arg(long)]
    pub col_city: Option<String>,
    #[arg(long)]
    pub col_height: Option<String>,
    #[arg(long)]
    pub col_floors: Option<String>,
    #[arg(long)]
    pub col_year: Option<String>,
}

/// Threshold grid parsed from one `start:stop:step` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err("expected start:stop:step".into());
    };
    if !(step > 0.0 && stop >= start) {
        return Err("need step > 0 and stop >= start".into());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok(Grid((0..=n).map(|i| start + i as f64 * step).collect()))
}

impl Common {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.input = self.input.or(cfg.input.take());
        cfg.seed = self.seed.or(cfg.seed);
        cfg.out = self.out.or(cfg.out.take());
        cfg.threads = self.threads.or(cfg.threads);
        let c = &mut cfg.columns;
        if self.col_id.is_some() {
            c.id = self.col_id;
        }
        if self.col_name.is_some() {
            c.name = self.col_name;
        }
        if let Some(v) = self.col_city {
            c.city = v;
        }
        if let Some(v) = self.col_height {
            c.height = v;
        }
        if let Some(v) = self.col_floors {
            c.floors = v;
        }
        if let Some(v) = self.col_year {
            c.year = v;
        }
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Resolves flags and the config file into the command to run.
fn resolve(command: Command) -> Result<(RunConfig, fn(&RunConfig) -> Result<Vec<PathBuf>>)> {
    fn set<T>(slot: &mut T, v: Option<T>) {
        if let Some(v) = v {
            *slot = v;
        }
    }
    Ok(match command {
        Command::FitCounts {
            common,
            cutoff,
            start_year,
            forecast_to,
            reps,
            population,
        } => {
            let mut cfg = base_config(&common)?;
            common.apply(&mut cfg);
            cfg.trend.cutoff = cutoff.or(cfg.trend.cutoff);
            set(&mut cfg.trend.start_year, start_year);
            set(&mut cfg.trend.forecast_to, forecast_to);
            set(&mut cfg.trend.reps, reps);
            set(&mut cfg.trend.population, population);
            (cfg, commands::fit_counts)
        }
        Command::FitGpd {
            common,
            threshold,
            grid,
            boot_reps,
        } => {
            let mut cfg = base_config(&common)?;
            common.apply(&mut cfg);
            set(&mut cfg.gpd.threshold, threshold);
            set(&mut cfg.gpd.grid, grid.map(|g| g.0));
            set(&mut cfg.gpd.boot_reps, boot_reps);
            (cfg, commands::fit_gpd_cmd)
        }
        Command::SimulateMax {
            common,
            gpd_json,
            mu,
            sigma,
            xi,
            n_buildings,
            auto_n,
            replicates,
            poisson_n,
            heights,
        } => {
            let mut cfg = base_config(&common)?;
            common.apply(&mut cfg);
            let s = &mut cfg.simulate;
            s.gpd_json = gpd_json.or(s.gpd_json.take());
            s.mu = mu.or(s.mu);
            s.sigma = sigma.or(s.sigma);
            s.xi = xi.or(s.xi);
            s.n_buildings = n_buildings.or(s.n_buildings);
            s.auto_n |= auto_n;
            s.poisson_n |= poisson_n;
            set(&mut s.replicates, replicates);
            set(&mut s.landmarks, heights);
            (cfg, commands::simulate_max_cmd)
        }
        Command::FitBivariate {
            common,
            heights,
            hier,
            form,
        } => {
            let mut cfg = base_config(&common)?;
            common.apply(&mut cfg);
            set(&mut cfg.bivariate.heights, heights);
            cfg.bivariate.hier |= hier;
            set(&mut cfg.bivariate.form, form.map(Into::into));
            (cfg, commands::fit_bivariate_cmd)
        }
    })
}

fn execute(command: Command) -> Result<Vec<PathBuf>> {
    let (cfg, run) = resolve(command)?;
    match cfg.threads {
        Some(0) => Err(Error::Argument("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?
            .install(|| run(&cfg)),
        None => run(&cfg),
    }
}

/// Machine-readable error object written to stderr.
pub fn error_json(e: &Error) -> String {
    let mut v = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    if let Error::Io { path, .. } = e {
        v["path"] = serde_json::Value::String(path.display().to_string());
    }
    v.to_string()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
