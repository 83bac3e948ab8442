//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a verification
//! check failed, 3 a data or runtime error.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod format;
pub mod svg;
pub mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_convergence, cmd_equivalence, cmd_generate, cmd_run, cmd_verify, Failure};
use config::{RunConfig, OUTPUT_ENV};
use verify::{Suite, VerifyOptions};

#[derive(Parser, Debug)]
#[command(name = "gp-isomap", version, about = "Isomap with Gaussian-process stream mapping and drift detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration; unspecified fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUTPUT_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset and drift stream.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Batch phase plus streaming over a generated dataset.
    Run {
        #[command(flatten)]
        common: Common,
        /// Directory holding dataset.csv and stream.csv (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        sigma_t: Option<f64>,
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        k_graph: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        percentile: Option<f64>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Check the kernel algebra and the synthetic experiments against their tolerances.
    Verify {
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long = "suite", value_enum)]
        suites: Vec<Suite>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Scale the cached kernel coefficients by this factor first.
        #[arg(long)]
        inject_fault: Option<f64>,
    },
    /// Embedding error against batch size.
    Convergence {
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 250, 550, 1000, 2000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 12)]
        k_graph: usize,
    },
    /// GP mean against S-Isomap as the length scale grows.
    Equivalence {
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0, 1000.0])]
        multipliers: Vec<f64>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output = Some(o.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(config::default_output_dir)
}

pub fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { common } => {
            let dir = cmd_generate(&load_config(&common)?)?;
            println!("wrote {}", dir.display());
        }
        Command::Run { common, input, sigma_t, n_s, eps, k_graph, d, percentile, no_plots } => {
            let mut cfg = load_config(&common)?;
            cfg.input = input.or(cfg.input);
            cfg.sigma_t = sigma_t.or(cfg.sigma_t);
            cfg.n_s = n_s.unwrap_or(cfg.n_s);
            cfg.batch.eps = eps.or(cfg.batch.eps);
            cfg.batch.k_graph = k_graph.unwrap_or(cfg.batch.k_graph);
            cfg.batch.d = d.unwrap_or(cfg.batch.d);
            cfg.calibration_percentile = percentile.unwrap_or(cfg.calibration_percentile);
            cfg.plots &= !no_plots;
            let m = cmd_run(&cfg)?;
            println!(
                "clusters {:?}, sigma_t {}, variance ratio {}, relearns at {:?}",
                m.cluster_sizes,
                format::sig9(m.sigma_t),
                m.variance_ratio.map_or("n/a".into(), format::sig9),
                m.relearn_indices
            );
        }
        Command::Verify { out, suites, seeds, trials, inject_fault } => {
            let mut opts = VerifyOptions { seeds, trials, fault: inject_fault, ..Default::default() };
            if !suites.is_empty() {
                opts.suites = suites;
            }
            let report = cmd_verify(&opts, &out_dir(out))?;
            println!("{} checks passed", report.checks.len());
        }
        Command::Convergence { out, seeds, sizes, k_graph } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let run = cmd_convergence(&seeds, &sizes, k_graph, &out_dir(out))?;
            for (n, e) in run.sizes.iter().zip(&run.mean) {
                println!("{n}\t{}", format::sig9(*e));
            }
            println!("theoretical n0 {}", format::sig9(run.theoretical_n0));
        }
        Command::Equivalence { out, seed, multipliers } => {
            let run = cmd_equivalence(seed, &multipliers, &out_dir(out))?;
            for p in &run.points {
                println!("{}\t{}", format::sig9(p.ell), format::sig9(p.error));
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(match f {
                Failure::Usage(_) => 1,
                Failure::Verification(_) => 2,
                Failure::Runtime(_) => 3,
            })
        }
    }
}
