//! End-to-end plumbing: configuration, datasets, evaluation, calibration,
//! latency, study analytics, scenario simulation and the live service.

mod bench;
mod config;
mod dataset;
mod eval;
pub mod serve;
mod simulate;
mod study;

use thiserror::Error;

pub use bench::{bench_latency, LatencyReport, WARMUP_CALLS};
pub use config::{default_scene, CalibrationSettings, DatasetSizes, Paths, RunConfig, CONFIG_ENV, SEED_ENV};
pub use dataset::{
    derive_seed, eval_window, generate_eval_samples, generate_training_recordings, gesture_targets, read_dataset,
    recording_features, synth_model, training_set, write_dataset, EvalSample, Recording, EVAL_RECORDING_MS,
    MANIFEST_FILE, SETTLE_FRAMES, TAG_CALIBRATION, TAG_EVAL, TAG_TRAIN,
};
pub use eval::{
    calibrate_noise, evaluate, run_evaluation, unrestricted_accuracy, CalibrationResult, Confusion, EvalMode,
    EvalReport, REPORT_NOTE,
};
pub use simulate::{
    scenario_events, simulate, Decoder, GazeScript, GazeSegment, GazeTarget, IntentSegment, Scenario, SimulationLog,
    TimedEvent, TICK_MS,
};
pub use study::{
    aggregate_tlx, aggregate_trials, fatigue_index, mean_sd, read_study_csv, reference_aggregates, study_aggregate,
    write_aggregate_csv, AggregateRow, ReferenceAggregate, StudyData, TlxRecord, TrialRecord, MASS_CONDITIONS_G,
    REFERENCE_AGGREGATES_CSV, TLX_SUBSCALES,
};

use crate::classify::{train_dense, ClassifyError, GesturePipeline};
use crate::controller::ControllerError;
use crate::grasp::GraspError;
use crate::scene::SceneError;
use crate::signal::{FeatureVector, GestureLabel, SignalError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("signal: {0}")]
    Signal(#[from] SignalError),
    #[error("classify: {0}")]
    Classify(#[from] ClassifyError),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("grasp: {0}")]
    Grasp(#[from] GraspError),
    #[error("controller: {0}")]
    Controller(#[from] ControllerError),
    #[error("config: {0}")]
    Config(String),
    #[error("dataset sample {index}: {detail}")]
    DatasetContextMismatch { index: usize, detail: String },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("benchmark needs at least one call and one window")]
    EmptyBench,
    #[error("participant {participant} at {mass_g} g is missing trial {trial}")]
    MissingTrial { participant: String, mass_g: u32, trial: u8 },
    #[error("no records")]
    EmptyInput,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::InvalidRecord(_)
                | HarnessError::MissingTrial { .. }
                | HarnessError::EmptyInput
                | HarnessError::EmptyBench
                | HarnessError::Scenario(_)
                | HarnessError::Json(_)
                | HarnessError::Csv(_)
                | HarnessError::Grasp(GraspError::InvalidLibrary(_) | GraspError::Json(_))
                | HarnessError::Scene(SceneError::Invalid(_) | SceneError::Json(_) | SceneError::Format(_))
                | HarnessError::Classify(ClassifyError::InvalidModel(_) | ClassifyError::Json(_))
                | HarnessError::Signal(SignalError::Format(_) | SignalError::Csv(_) | SignalError::Json(_))
                | HarnessError::Controller(ControllerError::BadEvent { .. } | ControllerError::InvalidConfig(_))
        )
    }
}

/// Every third training window, used to calibrate spiking thresholds.
pub fn conversion_set(train: &[(FeatureVector, GestureLabel)]) -> Vec<FeatureVector> {
    train.iter().step_by(3).map(|(f, _)| *f).collect()
}

/// Trains the dense network on windows of `recordings`; the result is not yet converted.
pub fn train_pipeline(cfg: &RunConfig, recordings: &[Recording]) -> Result<GesturePipeline, HarnessError> {
    train_on(cfg, &training_set(recordings)?)
}

fn train_on(cfg: &RunConfig, train: &[(FeatureVector, GestureLabel)]) -> Result<GesturePipeline, HarnessError> {
    let opts = crate::classify::TrainOptions { seed: cfg.seed, ..cfg.training };
    let model = train_dense(train, &opts)?;
    log::info!("trained on {} windows, training accuracy {:.4}", train.len(), model.training_accuracy);
    Ok(GesturePipeline::new(model))
}

/// Converts `pipeline` for the spiking backend using windows of `recordings`.
pub fn convert_pipeline(
    cfg: &RunConfig,
    pipeline: &mut GesturePipeline,
    recordings: &[Recording],
) -> Result<(), HarnessError> {
    pipeline.convert(&conversion_set(&training_set(recordings)?), cfg.timesteps)?;
    Ok(())
}

/// Generates training data, trains and converts, all in memory.
pub fn build_pipeline(cfg: &RunConfig) -> Result<GesturePipeline, HarnessError> {
    let train = training_set(&generate_training_recordings(cfg)?)?;
    let mut pipeline = train_on(cfg, &train)?;
    pipeline.convert(&conversion_set(&train), cfg.timesteps)?;
    Ok(pipeline)
}

/// Loads the configured model if the file exists, otherwise trains and converts in memory.
pub fn load_or_build_pipeline(cfg: &RunConfig) -> Result<GesturePipeline, HarnessError> {
    match &cfg.paths.model {
        Some(p) if p.exists() => {
            log::info!("loading model {}", p.display());
            Ok(GesturePipeline::load(p)?)
        }
        _ => {
            log::info!("no model file configured; training in memory");
            build_pipeline(cfg)
        }
    }
}

/// Evaluation windows at the configured noise level, for latency runs.
pub fn bench_windows(cfg: &RunConfig, n: usize) -> Result<Vec<crate::signal::EmgWindow>, HarnessError> {
    let samples = generate_eval_samples(cfg, &cfg.scene()?, &cfg.library()?, cfg.noise_sigma, TAG_EVAL, n)?;
    Ok(samples.into_iter().map(|s| s.window).collect())
}
