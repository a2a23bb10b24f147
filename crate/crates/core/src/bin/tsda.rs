use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tsda::pipeline::{
    self, emit_grid, emit_report, emit_size, write_timings, Cache, Experiment, ExperimentConfig, GridReport,
    KSpec, PipelineError, SizeReport, StudentPoint,
};

/// Teacher-student domain adaptation experiments on a simulated corpus.
#[derive(Parser)]
#[command(name = "tsda", version)]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the parallel training corpus and the held-out test corpus.
    Simulate,
    /// Extract LFBE features for both corpora.
    Features,
    /// Train the clean teacher (baseline) on the transcribed subset.
    TrainTeacher,
    /// Train the multi-condition model on the transcribed noisy subset.
    TrainMulticond,
    /// Export top-k soft targets from the teacher.
    SoftTargets {
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        k: Option<KSpec>,
    },
    /// Train a student on noisy audio against teacher soft targets.
    TrainStudent {
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        k: Option<KSpec>,
        #[arg(long, default_value_t = 1)]
        multiplier: usize,
    },
    /// Score baseline, multi-condition and students; writes report.json and tables.csv.
    Eval,
    /// Temperature x k grid; writes grid.csv.
    SweepTk,
    /// Training-set size sweep; writes size.csv.
    SweepSize,
    /// Main table plus any finished sweeps as CSV and plot data.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.output.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn point(cfg: &ExperimentConfig, temperature: Option<f64>, k: Option<KSpec>) -> StudentPoint {
    StudentPoint {
        temperature: temperature.unwrap_or(cfg.codec.temperature),
        k: k.unwrap_or(cfg.codec.k),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, PipelineError> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| PipelineError::io(path.display().to_string(), e.into()))
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.jobs)
        .build_global()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let out = cfg.output.dir.clone();
    let cache = Cache::new(&out);
    let show = |label: &str, p: &Path| println!("{label}\t{}", p.display());
    match &cli.command {
        Command::Simulate => {
            let (train, test) = pipeline::simulate(&cfg, &cache)?;
            show("train-corpus", &train.path);
            show("test-corpus", &test.path);
        }
        Command::Features => {
            let (train, test) = pipeline::extract_features(&cfg, &cache)?;
            show("train-features", &train.path);
            show("test-features", &test.path);
        }
        Command::TrainTeacher => {
            let exp = Experiment::prepare(&cfg, &cache)?;
            show("teacher", &exp.teacher().model_path());
        }
        Command::TrainMulticond => {
            let exp = Experiment::prepare(&cfg, &cache)?;
            show("multicond", &exp.multicond()?.model_path());
        }
        Command::SoftTargets { temperature, k } => {
            let exp = Experiment::prepare(&cfg, &cache)?;
            show("soft-targets", &exp.soft_targets(point(&cfg, *temperature, *k))?.path);
        }
        Command::TrainStudent {
            temperature,
            k,
            multiplier,
        } => {
            if *multiplier == 0 {
                return Err(PipelineError::Config("multiplier must be at least 1".into()));
            }
            let exp = Experiment::prepare(&cfg, &cache)?;
            let model = exp.student(point(&cfg, *temperature, *k), *multiplier)?;
            show("student", &model.model_path());
        }
        Command::Eval | Command::Report => {
            let report = pipeline::run_experiment(&cfg, &cache)?;
            emit_report(&report, &out)?;
            show("tables", &out.join("tables.csv"));
            if matches!(cli.command, Command::Report) {
                if let Some(grid) = read_json::<GridReport>(&out.join("grid.json"))? {
                    emit_grid(&grid, &out)?;
                    show("grid", &out.join("grid.csv"));
                }
                if let Some(size) = read_json::<SizeReport>(&out.join("size.json"))? {
                    emit_size(&size, &out)?;
                    show("size", &out.join("size.csv"));
                }
            }
        }
        Command::SweepTk => {
            let grid = pipeline::sweep_tk(&cfg, &cache)?;
            emit_grid(&grid, &out)?;
            show("grid", &out.join("grid.csv"));
        }
        Command::SweepSize => {
            let size = pipeline::sweep_size(&cfg, &cache)?;
            emit_size(&size, &out)?;
            show("size", &out.join("size.csv"));
        }
    }
    write_timings(&cache.events(), &out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
