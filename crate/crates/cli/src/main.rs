use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpcv::nce::{bound_csv, infonce_bound_experiment, nce_fit, BoundSettings, NceProblem};
use cpcv::pipeline::toy::{write_toy_corpus, ToyCorpusConfig};
use cpcv::pipeline::{read_summary, run_all, run_stage, Layout, PipelineConfig, Stage, StageOutcome};
use cpcv::{par, Error};

const WORKERS_ENV: &str = "CPCV_WORKERS";

#[derive(Parser)]
#[command(
    name = "cpcv",
    version,
    about = "Speaker verification with CPC, MFCC, i-vector and PLDA stages",
    after_help = "Pipeline stages (run one with `cpcv <stage> --config FILE`):\n  \
        ingest, trials, extract-mfcc, train-cpc, extract-cpc, fuse, train-ubm, train-tv,\n  \
        extract-ivectors, pool, train-backend, score, eval, plot\n\n\
        Exit status: 0 success, 2 configuration error, 3 data error, 1 anything else.\n\
        CPCV_WORKERS sets the worker thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value config file; unset keys keep their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Every stage the configuration needs, skipping those already up to date
    RunAll(Common),
    /// Print the effective configuration with comments
    ShowConfig(Common),
    /// Write a synthetic corpus laid out as <out>/<split>/<speaker>/<chapter>/<id>.wav
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// InfoNCE bound against true mutual information on random discrete channels
    NceBound {
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV destination; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an unnormalized Gaussian by noise-contrastive estimation
    NceFit {
        #[arg(long, default_value_t = 1.0)]
        mean: f64,
        #[arg(long, default_value_t = 1.5)]
        sd: f64,
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 2.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    #[command(external_subcommand)]
    Stage(Vec<String>),
}

#[derive(Parser)]
#[command(name = "cpcv <stage>")]
struct StageCli {
    #[command(flatten)]
    common: Common,
}

fn load_config(c: &Common) -> cpcv::Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            PipelineConfig::parse(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &c.workdir {
        cfg.workdir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(outcomes: &[StageOutcome]) {
    for o in outcomes {
        let state = if o.ran { "ran" } else { "up to date" };
        println!("{:<17} {state:<10} {:>8} ms  outputs {}", o.stage.name(), o.receipt.wall_ms, o.receipt.outputs);
    }
}

fn print_summary(cfg: &PipelineConfig) -> cpcv::Result<()> {
    let path = Layout::new(cfg).report();
    if path.exists() {
        for row in read_summary(&path)? {
            println!(
                "{} protocol {}: {} trials ({} target), EER {:.3}%, minDCF {:.4}",
                cfg.system(),
                row.protocol,
                row.trials,
                row.targets,
                100.0 * row.eer,
                row.min_dcf
            );
        }
    }
    Ok(())
}

fn run(command: Command) -> cpcv::Result<()> {
    match command {
        Command::RunAll(c) => {
            let cfg = load_config(&c)?;
            report(&run_all(&cfg)?);
            print_summary(&cfg)?;
        }
        Command::ShowConfig(c) => print!("{}", load_config(&c)?.render()),
        Command::MakeToy { out, speakers, seed } => {
            let cfg = ToyCorpusConfig { speakers, seed, ..ToyCorpusConfig::default() };
            let n = write_toy_corpus(&out, &cfg)?;
            println!("wrote {n} utterances under {}", out.display());
        }
        Command::NceBound { classes, trials, seed, out } => {
            let reports = infonce_bound_experiment(classes, &BoundSettings::default(), trials, seed)?;
            let csv = bound_csv(&reports);
            match out {
                Some(path) => fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::NceFit { mean, sd, samples, noise_sd, seed } => {
            let problem = NceProblem::gaussian(mean, sd, samples, noise_sd, samples, seed)?;
            let fit = nce_fit(&problem, 500)?;
            println!("mean {:.6} (generating {mean})", fit.mean);
            println!("sd {:.6} (generating {sd})", fit.var.sqrt());
            println!("c {:.6}, -ln Z {:.6}", fit.c, fit.neg_log_partition());
            println!("objective {:.6} after {} steps", fit.trace.last().copied().unwrap_or(f64::NAN), fit.trace.len() - 1);
        }
        Command::Stage(args) => {
            let stage: Stage = args[0].parse()?;
            let cli = match StageCli::try_parse_from(&args) {
                Ok(cli) => cli,
                Err(e) if !e.use_stderr() => e.exit(),
                Err(e) => return Err(Error::Config(e.to_string())),
            };
            let cfg = load_config(&cli.common)?;
            report(&[run_stage(&cfg, stage)?]);
            if stage == Stage::Eval {
                print_summary(&cfg)?;
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Variant(_) => 2,
        Error::Data(_)
        | Error::Format { .. }
        | Error::EmptyDataset(_)
        | Error::MissingPrerequisite { .. }
        | Error::InputTooShort(_)
        | Error::Io(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => par::init_workers(n),
            _ => {
                eprintln!("error: {WORKERS_ENV} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
