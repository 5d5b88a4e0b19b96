use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lpsgd::engine::Algo;
use lpsgd::error::Error;
use lpsgd::experiment::{self, ExperimentConfig, Overrides, Report, PRESET_NAMES};
use lpsgd::objectives::{SamplingMode, Synthetic};

#[derive(Parser)]
#[command(name = "lpsgd", version, about = "Local asynchronous SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset and write its artifacts under `<out>/<preset>/`.
    Run {
        preset: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run the experiment described by a config file.
    Train {
        #[arg(long, short)]
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Write a synthetic dataset as CSV (`feature...,label`).
    GenData(GenData),
    /// List the presets.
    Presets,
    /// Print a preset's base configuration file.
    ShowConfig { preset: String },
}

#[derive(Args)]
struct Flags {
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algo>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    updaters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Minibatches per worker.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sync_h: Option<u64>,
    #[arg(long)]
    tst: Option<u64>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Iid,
    EpochPartition,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    GaussianBlobs,
    LinearRegression,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "gaussian-blobs")]
    generator: GeneratorArg,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse::<Algo>().map_err(|e| e.to_string())
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            algo: self.algo,
            workers: self.workers,
            updaters: self.updaters,
            batch: self.batch,
            budget: self.budget,
            lr: self.lr,
            sync_h: self.sync_h,
            tst: self.tst,
            seed: self.seed,
            out: self.out.clone(),
            sampling: self.sampling.map(|s| match s {
                Sampling::Iid => SamplingMode::Iid,
                Sampling::EpochPartition => SamplingMode::EpochPartition,
            }),
        }
    }
}

enum Failure {
    Usage(Error),
    Run(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::Parse { .. }
            | Error::Dataset(_)
            | Error::Partition(_)
            | Error::Unsupported(_) => Failure::Usage(e),
            e => Failure::Run(e),
        }
    }
}

fn finish(report: &Report, dir: PathBuf) -> Result<(), Failure> {
    report.write(&dir)?;
    print!("{}", report.to_text());
    println!("artifacts: {}", dir.display());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { preset, flags } => {
            let o = flags.overrides();
            let dir = experiment::preset_dir(&preset, &o)?;
            let report = experiment::run_preset(&preset, &o)?;
            finish(&report, dir)
        }
        Command::Train { config, flags } => {
            let cfg = ExperimentConfig::load(&config)?.with_overrides(&flags.overrides())?;
            let report = experiment::run_config(&cfg)?;
            let dir = cfg.output.dir.clone();
            std::fs::create_dir_all(&dir).map_err(Error::from)?;
            cfg.save(dir.join("config.toml"))?;
            finish(&report, dir)
        }
        Command::GenData(g) => {
            let synth = match g.generator {
                GeneratorArg::GaussianBlobs => Synthetic::GaussianBlobs {
                    classes: g.classes,
                    samples: g.samples,
                    dim: g.dim,
                    separation: g.separation,
                    spread: g.spread,
                },
                GeneratorArg::LinearRegression => Synthetic::LinearTargets {
                    samples: g.samples,
                    dim: g.dim,
                    noise: g.noise,
                },
            };
            let data = synth.generate(g.seed)?;
            data.save_csv(&g.output)?;
            println!("wrote {} samples to {}", g.samples, g.output.display());
            Ok(())
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                let p = experiment::preset(name)?;
                println!("{name:<18} {}", p.description);
            }
            Ok(())
        }
        Command::ShowConfig { preset } => {
            print!("{}", experiment::preset(&preset)?.config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
