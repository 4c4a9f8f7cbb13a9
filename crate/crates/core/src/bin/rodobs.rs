//! Command-line front end for truth runs, observer replays, twin runs,
//! robustness studies and sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cosserat_observer::harness::config::{ExperimentConfig, OutputFormat, Overrides, StudyKind, StudySpec};
use cosserat_observer::harness::export::{
    format_of, read_log, read_trajectory, write_errors, write_log, write_trajectory,
};
use cosserat_observer::harness::sweep::{run_sweep, write_sweep, SweepSpec};
use cosserat_observer::harness::{run_observer, run_truth, run_twin, TwinSummary};
use cosserat_observer::{Error, Result};

#[derive(Parser)]
#[command(name = "rodobs", version, about = "Cosserat rod simulator and tip-velocity boundary observer")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment file; fields left out take preset values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base preset when no config file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Truth step, s.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulated horizon, s.
    #[arg(long = "end-time", global = true)]
    end_time: Option<f64>,
    /// Scalar observer gain, `Γ = gain·I`.
    #[arg(long, global = true)]
    gain: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Soft,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Noise,
    Params,
    Routing,
}

impl From<Kind> for StudyKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Noise => StudyKind::Noise,
            Kind::Params => StudyKind::ParamPerturbation,
            Kind::Routing => StudyKind::RoutingPerturbation,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Truth run: trajectory and tip measurement log.
    Simulate,
    /// Replays a measurement log through the observer.
    Observe {
        /// Log written by `simulate`.
        #[arg(long)]
        log: PathBuf,
        /// Truth trajectory; when given, error records are written too.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Truth and observer together, with error records.
    Twin {
        /// Also write the full measurement log.
        #[arg(long)]
        keep_log: bool,
    },
    /// Twin run with one robustness study applied.
    Study {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Defaults to the reference amplitude of the study.
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Grid of studies over amplitudes and seeds, run in parallel.
    Sweep {
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["noise", "params", "routing"])]
        kinds: Vec<Kind>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2])]
        amplitudes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
        seeds: Vec<u64>,
        /// Leave out the baseline cell.
        #[arg(long)]
        no_baseline: bool,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let base = match &c.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => match c.preset {
            Preset::Paper => ExperimentConfig::paper(),
            Preset::Soft => ExperimentConfig::soft(),
        },
    };
    let config = base.with_overrides(&Overrides {
        seed: c.seed,
        nodes: c.nodes,
        dt: c.dt,
        end_time: c.end_time,
        gain: c.gain,
        out: c.out.clone(),
        format: c.format.map(|f| match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }),
    });
    config.validate()?;
    Ok(config)
}

fn out_path(config: &ExperimentConfig, stem: &str) -> PathBuf {
    config
        .output
        .dir
        .join(format!("{stem}.{}", config.output.format.extension()))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn prepare_dir(config: &ExperimentConfig) -> Result<()> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    std::fs::write(dir.join("config.json"), config.to_json() + "\n").map_err(|source| Error::Io {
        path: dir.join("config.json"),
        source,
    })
}

fn twin(config: &ExperimentConfig, keep_log: bool) -> Result<()> {
    let run = run_twin(config, keep_log)?;
    let f = config.output.format;
    write_trajectory(&run.truth, &out_path(config, "truth"), f)?;
    write_trajectory(&run.estimate, &out_path(config, "estimate"), f)?;
    write_errors(&run.errors, &out_path(config, "errors"), f)?;
    if let Some(log) = &run.log {
        write_log(log, &out_path(config, "log"), f)?;
    }
    let summary = TwinSummary::from_records(&run.errors);
    write_json(&summary, &config.output.dir.join("summary.json"))?;
    println!("{}", serde_json::to_string(&summary).expect("summary is serializable"));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.common)?;
    match cli.command {
        Command::Simulate => {
            prepare_dir(&config)?;
            let truth = run_truth(&config)?;
            let f = config.output.format;
            write_trajectory(&truth.trajectory, &out_path(&config, "truth"), f)?;
            write_log(&truth.log, &out_path(&config, "log"), f)?;
        }
        Command::Observe { log, truth } => {
            prepare_dir(&config)?;
            let log = read_log(&log, format_of(&log))?;
            let truth = truth.map(|p| read_trajectory(&p, format_of(&p))).transpose()?;
            let run = run_observer(&config, &log, truth.as_ref())?;
            let f = config.output.format;
            write_trajectory(&run.trajectory, &out_path(&config, "estimate"), f)?;
            if let Some(errors) = &run.errors {
                write_errors(errors, &out_path(&config, "errors"), f)?;
                write_json(&TwinSummary::from_records(errors), &config.output.dir.join("summary.json"))?;
            }
        }
        Command::Twin { keep_log } => {
            prepare_dir(&config)?;
            twin(&config, keep_log)?;
        }
        Command::Study { kind, amplitude } => {
            let kind = StudyKind::from(kind);
            config.study = Some(StudySpec {
                kind,
                amplitude: amplitude.unwrap_or(kind.paper_amplitude()),
            });
            config.validate()?;
            prepare_dir(&config)?;
            twin(&config, false)?;
        }
        Command::Sweep {
            kinds,
            amplitudes,
            seeds,
            no_baseline,
        } => {
            prepare_dir(&config)?;
            let mut all: Vec<Option<StudyKind>> = if no_baseline { vec![] } else { vec![None] };
            all.extend(kinds.into_iter().map(|k| Some(StudyKind::from(k))));
            let spec = SweepSpec {
                kinds: all,
                amplitudes,
                seeds,
            };
            let cells = run_sweep(&config, &spec)?;
            write_sweep(&cells, &out_path(&config, "sweep"), config.output.format)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
