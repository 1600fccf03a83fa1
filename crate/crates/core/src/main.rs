use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use wgmirror::commands::{run_analyze, run_mirror, run_mode, run_simulate, AnalyzeInput};
use wgmirror::config::RunConfig;
use wgmirror::output::Manifest;
use wgmirror::Error;

#[derive(Parser)]
#[command(name = "wgmirror", version, about = "Phase-controlled emission in a one-sided waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the guided mode and export field profile and visibility curves.
    Mode(Common),
    /// Transfer-matrix wavelength sweep of the photonic-crystal mirror.
    Mirror(Common),
    /// Generate a synthetic voltage sweep with decay histograms.
    Simulate(Common),
    /// Fit sweeps, reconstruct phase maps or evaluate a lifetime table.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set instead of a config file.
    #[arg(long, value_parser = ["qd1"])]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Manifest written by `simulate`.
    #[arg(long, group = "input")]
    manifest: Option<PathBuf>,
    /// Sweep CSV `voltage,phi_rad,intensity_counts`.
    #[arg(long, group = "input")]
    sweep: Option<PathBuf>,
    /// Histogram CSVs `t_ns,counts`, one per sweep row, in order.
    #[arg(long = "hist", requires = "sweep")]
    histograms: Vec<PathBuf>,
    /// Lifetime table CSV `qd,lambda_nm,gamma_max,gamma_min,nu_gamma,nu_I`.
    #[arg(long, group = "input")]
    lifetimes: Option<PathBuf>,
    /// Reference-line sweep `voltage,intensity_counts` for the phase map.
    #[arg(long, group = "input")]
    reference: Option<PathBuf>,
}

impl Common {
    fn load(&self, required: bool) -> Result<Option<RunConfig>, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(_)) => RunConfig::qd1()?,
            (None, None) if required => {
                return Err(Error::InvalidParameter("either --config or --preset is required".into()))
            }
            (None, None) => return Ok(None),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(Some(cfg))
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.map(|c| PathBuf::from(&c.output_dir)))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn run(cli: Cli) -> Result<Manifest, Error> {
    let common = match &cli.command {
        Command::Mode(c) | Command::Mirror(c) | Command::Simulate(c) => c,
        Command::Analyze(a) => &a.common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Mode(c) => {
            let cfg = c.load(true)?.expect("required");
            run_mode(&cfg, &c.out_dir(Some(&cfg)))
        }
        Command::Mirror(c) => {
            let cfg = c.load(true)?.expect("required");
            run_mirror(&cfg, &c.out_dir(Some(&cfg)))
        }
        Command::Simulate(c) => {
            let cfg = c.load(true)?.expect("required");
            run_simulate(&cfg, &c.out_dir(Some(&cfg)))
        }
        Command::Analyze(a) => {
            let cfg = a.common.load(false)?;
            let input = if let Some(m) = &a.manifest {
                AnalyzeInput::Manifest(m.clone())
            } else if let Some(s) = &a.sweep {
                AnalyzeInput::Sweep { sweep: s.clone(), histograms: a.histograms.clone(), config: cfg.clone() }
            } else if let Some(t) = &a.lifetimes {
                AnalyzeInput::Lifetimes { table: t.clone(), config: cfg.clone() }
            } else if let Some(r) = &a.reference {
                AnalyzeInput::Reference(r.clone())
            } else {
                return Err(Error::InvalidParameter(
                    "one of --manifest, --sweep, --lifetimes or --reference is required".into(),
                ));
            };
            // analysis output never defaults into the simulation directory
            let out = a.common.out.clone().unwrap_or_else(|| PathBuf::from("out/analysis"));
            run_analyze(&input, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            println!("{}: wrote {} files", manifest.command, manifest.files.len());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_numerical() { 3 } else { 2 })
        }
    }
}
