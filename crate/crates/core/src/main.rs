use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use neuromanip::classify::{Backend, GesturePipeline};
use neuromanip::controller::write_command_log;
use neuromanip::harness::serve::{ServeContext, ServeOptions, Server};
use neuromanip::harness::{
    bench_latency, bench_windows, calibrate_noise, convert_pipeline, generate_training_recordings,
    load_or_build_pipeline, read_dataset, read_study_csv, run_evaluation, simulate, study_aggregate, train_pipeline,
    write_aggregate_csv, write_dataset, Decoder, EvalMode, HarnessError, Recording, RunConfig, Scenario, StudyData,
    CONFIG_ENV, REFERENCE_AGGREGATES_CSV,
};
use neuromanip::scene::Scene;

const EXIT_VALIDATION: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;
const DEFAULT_MODEL: &str = "model.json";
const DEFAULT_DATA_DIR: &str = "data/train";
const DEFAULT_CONFIG_OUT: &str = "neuromanip.json";

#[derive(Parser)]
#[command(
    name = "neuromanip",
    version,
    about = "Gaze-restricted EMG grasp control: data, training, evaluation and live service"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dense,
    Spiking,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Dense => Backend::Dense,
            BackendArg::Spiking => Backend::Spiking,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the training recordings.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the dense classifier.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a trained model for the spiking backend.
    Convert {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the noise level to a target unrestricted accuracy and store it in the config.
    Calibrate {
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Config file to write; defaults to --config, else neuromanip.json.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Evaluate on a fresh synthetic test set.
    Eval {
        #[arg(long)]
        restricted: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure classify_window latency.
    Bench {
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scripted scenario end to end.
    Simulate {
        scenario: PathBuf,
        /// Take scripted intents as decisions instead of classifying EMG.
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Write the command log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Per-condition means and SDs of study records.
    StudyStats {
        /// Trial, TLX or aggregate CSV; defaults to the bundled reference table.
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the live controller over WebSocket at /ws.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Decode intents directly instead of classifying synthetic EMG.
        #[arg(long)]
        oracle: bool,
    },
}

enum Outcome {
    Ok,
    AcceptanceFailed(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::AcceptanceFailed(why)) => {
            eprintln!("acceptance failure: {why}");
            ExitCode::from(EXIT_ACCEPTANCE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { 1 })
        }
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn recordings(cfg: &RunConfig, data: Option<PathBuf>) -> Result<Vec<Recording>, HarnessError> {
    match data.or_else(|| cfg.paths.data_dir.clone()) {
        Some(dir) => read_dataset(&dir),
        None => generate_training_recordings(cfg),
    }
}

fn model_path(cfg: &RunConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit.or_else(|| cfg.paths.model.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_MODEL))
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::GenData { out } => {
            let dir = out.or_else(|| cfg.paths.data_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
            let recs = generate_training_recordings(&cfg)?;
            write_dataset(&dir, &recs)?;
            log::info!("wrote {} recordings to {}", recs.len(), dir.display());
        }
        Command::Train { data, out } => {
            let pipeline = train_pipeline(&cfg, &recordings(&cfg, data)?)?;
            let path = model_path(&cfg, out);
            pipeline.save(&path).map_err(HarnessError::from)?;
            log::info!("saved dense model to {}", path.display());
        }
        Command::Convert { model, data, out } => {
            let input = model_path(&cfg, model);
            let mut pipeline = GesturePipeline::load(&input).map_err(HarnessError::from)?;
            convert_pipeline(&cfg, &mut pipeline, &recordings(&cfg, data)?)?;
            let path = out.unwrap_or(input);
            pipeline.save(&path).map_err(HarnessError::from)?;
            log::info!("saved converted model to {}", path.display());
        }
        Command::Calibrate { target, tol, save } => {
            let pipeline = load_or_build_pipeline(&cfg)?;
            let target = target.unwrap_or(cfg.calibration.target_acc);
            let tol = tol.unwrap_or(cfg.calibration.tol);
            let result = calibrate_noise(&cfg, &pipeline, target, tol)?;
            cfg.noise_sigma = result.sigma;
            let path = save.or(cli.config).unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_OUT));
            cfg.save(&path)?;
            log::info!("noise_sigma {:.6} written to {}", result.sigma, path.display());
            write_json(None, &result)?;
        }
        Command::Eval { restricted, backend, out } => {
            if let Some(b) = backend {
                cfg.backend = b.into();
            }
            let pipeline = load_or_build_pipeline(&cfg)?;
            let mode = if restricted { EvalMode::Restricted } else { EvalMode::Unrestricted };
            let report = run_evaluation(&cfg, &pipeline, mode)?;
            write_json(out.as_deref(), &report)?;
            if report.unsafe_executions > 0 {
                return Ok(Outcome::AcceptanceFailed(format!("{} unsafe executions", report.unsafe_executions)));
            }
        }
        Command::Bench { backend, n, out } => {
            let backend = backend.map_or(cfg.backend, Backend::from);
            let pipeline = load_or_build_pipeline(&cfg)?;
            let report = bench_latency(&pipeline, backend, &bench_windows(&cfg, 600)?, n)?;
            write_json(out.as_deref(), &report)?;
            if report.mean_us >= cfg.latency_budget_us {
                return Ok(Outcome::AcceptanceFailed(format!(
                    "mean latency {:.1} us exceeds the {} us budget",
                    report.mean_us, cfg.latency_budget_us
                )));
            }
        }
        Command::Simulate { scenario, oracle, backend, log } => {
            let scenario = Scenario::load(&scenario)?;
            let scene = match &scenario.scene {
                Some(p) => Scene::load(p).map_err(HarnessError::from)?,
                None => cfg.scene()?,
            };
            let library = cfg.library()?;
            let pipeline = if oracle { None } else { Some(load_or_build_pipeline(&cfg)?) };
            let decoder = match &pipeline {
                Some(p) => Decoder::Model(p, backend.map_or(cfg.backend, Backend::from)),
                None => Decoder::Oracle,
            };
            let result = simulate(&cfg, &scenario, &scene, &library, decoder)?;
            if let Some(path) = log {
                write_command_log(BufWriter::new(File::create(&path)?), &result.commands)
                    .map_err(HarnessError::from)?;
            }
            let summary = serde_json::json!({
                "scenario": result.scenario,
                "final_state": result.final_state,
                "executed": result.executed,
                "commands": result.commands.len(),
                "rejected": result.rejected,
                "unsafe_executions": result.unsafe_executions,
                "passed": result.passed,
            });
            write_json(None, &summary)?;
            if !result.passed {
                return Ok(Outcome::AcceptanceFailed(format!(
                    "scenario {} did not meet its expectation",
                    result.scenario
                )));
            }
        }
        Command::StudyStats { csv, out } => {
            let data: StudyData = match &csv {
                Some(p) => read_study_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
                None => read_study_csv(REFERENCE_AGGREGATES_CSV.as_bytes())?,
            };
            let rows = study_aggregate(&data)?;
            let w = output(out.as_deref())?;
            write_aggregate_csv(w, &rows)?;
        }
        Command::Serve { port, host, backend, oracle } => {
            let pipeline = if oracle { None } else { Some(std::sync::Arc::new(load_or_build_pipeline(&cfg)?)) };
            let ctx = ServeContext { scene: cfg.scene()?, library: cfg.library()?, pipeline, cfg: cfg.clone() };
            let opts = ServeOptions {
                addr: std::net::SocketAddr::new(host, port),
                backend: backend.map_or(cfg.backend, Backend::from),
                ..ServeOptions::default()
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let server = Server::bind(ctx, opts).await?;
                eprintln!("serving ws://{}/ws", server.local_addr()?);
                server
                    .run(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
    }
    Ok(Outcome::Ok)
}
