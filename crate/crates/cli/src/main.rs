use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use veintex::experiment::{cmd_extract, cmd_report, cmd_run, ExperimentConfig};
use veintex::synth::{write_corpus, CorpusSpec};
use veintex::Error;

/// Texture-descriptor experiments on subject-labelled image corpora.
#[derive(Parser)]
#[command(name = "veintex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and dump every configured descriptor for both split sides.
    Extract(ConfigArgs),
    /// Run the full classifier grid and write records, report and tables.
    Run(ConfigArgs),
    /// Re-render the tables of a finished run.
    Report {
        /// Output directory of an earlier `run`.
        dir: PathBuf,
        /// Print the stored cells as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic texture corpus as PGM files.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Destination directory; one sub-directory per subject.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_CONVERGENCE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Convergence { .. } => EXIT_CONVERGENCE,
        _ => EXIT_DATA,
    }
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Extract(args) => {
            let cfg = args.load()?;
            let paths = cmd_extract(&cfg)?;
            for p in paths {
                println!("{}", cfg.output_dir.join(p).display());
            }
            Ok(0)
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let out = cmd_run(&cfg)?;
            print!("{}", out.tables);
            info!("wrote results to {}", cfg.output_dir.display());
            Ok(if out.any_convergence_failure() {
                EXIT_CONVERGENCE
            } else if out.any_failed() {
                EXIT_DATA
            } else {
                0
            })
        }
        Command::Report { dir, json } => {
            let (tables, cells) = cmd_report(&dir)?;
            if json {
                let text = serde_json::to_string_pretty(&cells).expect("cells serialize");
                println!("{text}");
            } else {
                print!("{tables}");
            }
            Ok(0)
        }
        Command::Synth(a) => {
            let spec = CorpusSpec {
                classes: a.classes,
                samples_per_class: a.samples,
                size: a.size,
                seed: a.seed,
                jitter: a.jitter,
            };
            let ds = write_corpus(&spec, &a.out)?;
            info!("wrote {} images to {}", ds.len(), a.out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
