use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_eval_samples, EvalSample, TAG_CALIBRATION};
use super::{HarnessError, RunConfig};
use crate::classify::{argmax, Backend, Classification, GesturePipeline};
use crate::controller::{audit_log, run_trace, ControlEnv, ControlEvent, ControllerConfig, ControllerState};
use crate::grasp::{context_to_grasps, restrict_classify, GraspLibrary};
use crate::scene::{gaze_object_intersection, Scene};
use crate::signal::GestureLabel;

pub const REPORT_NOTE: &str = "Mechanism reproduction on synthetic EMG with noise calibrated to a target \
unrestricted accuracy; not a replication of amputee recordings.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Unrestricted,
    Restricted,
}

pub type Confusion = [[u64; GestureLabel::COUNT]; GestureLabel::COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub note: String,
    pub mode: EvalMode,
    pub backend: Backend,
    pub seed: u64,
    pub noise_sigma: f64,
    pub n_samples: usize,
    pub acc_unrestricted: f64,
    pub acc_restricted: Option<f64>,
    pub lift: Option<f64>,
    /// Rows are true labels, columns predictions (unrestricted).
    pub confusion: Confusion,
    pub confusion_restricted: Option<Confusion>,
    /// Unrestricted predictions that fall outside the fixated object's candidates.
    pub out_of_candidate_predictions: u64,
    pub executions: u64,
    pub unsafe_executions: u64,
    pub rejected_decisions: u64,
    /// Top-1 agreement between the dense and spiking backends.
    pub snn_agreement: Option<f64>,
    /// Mean synaptic events per inference over dense multiply-accumulates.
    pub mean_event_ratio: Option<f64>,
    /// The same ratio divided by the number of timesteps.
    pub mean_per_step_event_ratio: Option<f64>,
    pub mean_latency_us: BTreeMap<Backend, f64>,
}

impl EvalReport {
    /// JSON with the wall-clock fields removed, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("mean_latency_us");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

struct SampleOutcome {
    truth: GestureLabel,
    dense_label: GestureLabel,
    unrestricted: GestureLabel,
    restricted: Option<GestureLabel>,
    out_of_candidates: bool,
    spiking_label: Option<GestureLabel>,
    event_ratio: Option<f64>,
    per_step_ratio: Option<f64>,
    latency: Vec<(Backend, f64)>,
    executions: u64,
    unsafe_executions: u64,
    rejected: u64,
}

fn decision(c: &Classification) -> ControlEvent {
    ControlEvent::EmgDecision { label: c.label, confidence: c.confidence }
}

fn evaluate_one(
    i: usize,
    s: &EvalSample,
    pipeline: &GesturePipeline,
    scene: &Scene,
    env: &ControlEnv,
    backend: Backend,
    mode: EvalMode,
) -> Result<SampleOutcome, HarnessError> {
    let dense = pipeline.classify_features(&s.features, Backend::Dense)?;
    let spiking = match &pipeline.snn {
        Some(_) => Some(pipeline.classify_features(&s.features, Backend::Spiking)?),
        None => None,
    };
    let primary = match backend {
        Backend::Dense => &dense,
        Backend::Spiking => spiking.as_ref().ok_or(crate::classify::ClassifyError::ModelNotLoaded("spiking"))?,
    };

    let fixated = gaze_object_intersection(&s.gaze, &scene.objects);
    let object = fixated.and_then(|id| scene.object(id)).ok_or(HarnessError::DatasetContextMismatch {
        index: i,
        detail: format!("gaze ray of sample {i} hits no object"),
    })?;
    let candidates = context_to_grasps(object, &env.library)?;
    if !candidates.admits(s.gesture, &env.label_map) {
        return Err(HarnessError::DatasetContextMismatch {
            index: i,
            detail: format!("{} is not a candidate for object {}", s.gesture, object.id),
        });
    }
    let restricted = match mode {
        EvalMode::Restricted => Some(restrict_classify(&primary.scores, &candidates, &env.label_map)?),
        EvalMode::Unrestricted => None,
    };

    // one raw decision exercises the controller's gate, then the mode's decisions confirm
    let mut events = vec![ControlEvent::Fixation { object_id: Some(object.id) }, decision(primary)];
    let fed = match restricted {
        Some((label, confidence)) => ControlEvent::EmgDecision { label, confidence },
        None => decision(primary),
    };
    events.extend(std::iter::repeat_n(fed, env.config.confirm_windows as usize));
    let trace = run_trace(ControllerState::Idle, &events, env);
    let flagged = audit_log(&trace.log, &env.label_map).len() as u64;
    let mut executions = 0;
    let mut outside = 0;
    for e in &trace.log {
        if let Some(l) = e.label {
            executions += 1;
            if !candidates.admits(l, &env.label_map) {
                outside += 1;
            }
        }
    }

    let mut latency = vec![(Backend::Dense, dense.latency_us)];
    if let Some(sp) = &spiking {
        latency.push((Backend::Spiking, sp.latency_us));
    }
    let energy = spiking.as_ref().and_then(|c| c.energy);
    let timesteps = pipeline.snn.as_ref().map_or(1, |n| n.timesteps);
    Ok(SampleOutcome {
        truth: s.gesture,
        dense_label: dense.label,
        unrestricted: primary.label,
        restricted: restricted.map(|r| r.0),
        out_of_candidates: !candidates.admits(primary.label, &env.label_map),
        spiking_label: spiking.as_ref().map(|c| c.label),
        event_ratio: energy.map(|e| e.event_ratio()),
        per_step_ratio: energy.map(|e| e.per_step_ratio(timesteps)),
        latency,
        executions,
        unsafe_executions: flagged.max(outside),
        rejected: trace.rejected,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Classifies every sample, optionally restricted to the fixated object's
/// candidates, and replays the decisions through the controller.
pub fn evaluate(
    samples: &[EvalSample],
    pipeline: &GesturePipeline,
    scene: &Scene,
    lib: &GraspLibrary,
    controller: ControllerConfig,
    backend: Backend,
    mode: EvalMode,
) -> Result<EvalReport, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let env = ControlEnv::new(lib.clone(), scene.objects.clone(), controller);
    let outcomes: Vec<SampleOutcome> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| evaluate_one(i, s, pipeline, scene, &env, backend, mode))
        .collect::<Result<_, _>>()?;

    let n = outcomes.len();
    let mut confusion = [[0u64; GestureLabel::COUNT]; GestureLabel::COUNT];
    let mut confusion_r = [[0u64; GestureLabel::COUNT]; GestureLabel::COUNT];
    for o in &outcomes {
        confusion[o.truth.index()][o.unrestricted.index()] += 1;
        if let Some(r) = o.restricted {
            confusion_r[o.truth.index()][r.index()] += 1;
        }
    }
    let acc = |c: &Confusion| (0..GestureLabel::COUNT).map(|i| c[i][i]).sum::<u64>() as f64 / n as f64;
    let acc_unrestricted = acc(&confusion);
    let acc_restricted = (mode == EvalMode::Restricted).then(|| acc(&confusion_r));

    let agreement = outcomes
        .iter()
        .map(|o| o.spiking_label.map(|s| s == o.dense_label))
        .collect::<Option<Vec<bool>>>()
        .map(|v| v.iter().filter(|b| **b).count() as f64 / n as f64);

    let mut mean_latency_us = BTreeMap::new();
    for b in [Backend::Dense, Backend::Spiking] {
        if let Some(m) = mean(outcomes.iter().flat_map(|o| o.latency.iter().filter(|l| l.0 == b).map(|l| l.1))) {
            mean_latency_us.insert(b, m);
        }
    }

    Ok(EvalReport {
        note: REPORT_NOTE.to_owned(),
        mode,
        backend,
        seed: 0,
        noise_sigma: 0.0,
        n_samples: n,
        acc_unrestricted,
        acc_restricted,
        lift: acc_restricted.map(|r| r - acc_unrestricted),
        confusion,
        confusion_restricted: (mode == EvalMode::Restricted).then_some(confusion_r),
        out_of_candidate_predictions: outcomes.iter().filter(|o| o.out_of_candidates).count() as u64,
        executions: outcomes.iter().map(|o| o.executions).sum(),
        unsafe_executions: outcomes.iter().map(|o| o.unsafe_executions).sum(),
        rejected_decisions: outcomes.iter().map(|o| o.rejected).sum(),
        snn_agreement: agreement,
        mean_event_ratio: mean(outcomes.iter().filter_map(|o| o.event_ratio)),
        mean_per_step_event_ratio: mean(outcomes.iter().filter_map(|o| o.per_step_ratio)),
        mean_latency_us,
    })
}

/// Generates the configured evaluation set at `cfg.noise_sigma` and evaluates it.
pub fn run_evaluation(cfg: &RunConfig, pipeline: &GesturePipeline, mode: EvalMode) -> Result<EvalReport, HarnessError> {
    let scene = cfg.scene()?;
    let lib = cfg.library()?;
    let samples =
        generate_eval_samples(cfg, &scene, &lib, cfg.noise_sigma, super::dataset::TAG_EVAL, cfg.dataset.eval_samples)?;
    let mut report = evaluate(&samples, pipeline, &scene, &lib, cfg.controller, cfg.backend, mode)?;
    report.seed = cfg.seed;
    report.noise_sigma = cfg.noise_sigma;
    Ok(report)
}

/// Fraction of samples whose unrestricted top-1 matches the truth.
pub fn unrestricted_accuracy(
    samples: &[EvalSample],
    pipeline: &GesturePipeline,
    backend: Backend,
) -> Result<f64, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let hits: Vec<bool> = samples
        .par_iter()
        .map(|s| {
            let scores = match backend {
                Backend::Dense => pipeline.dense_logits(&s.features)?,
                Backend::Spiking => pipeline.spiking_counts(&s.features)?.counts.iter().map(|c| *c as f64).collect(),
            };
            Ok(argmax(&scores) == s.gesture.index())
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub sigma: f64,
    pub accuracy: f64,
    pub target_acc: f64,
    pub tol: f64,
    /// Every `(sigma, accuracy)` probed, in order.
    pub probes: Vec<(f64, f64)>,
}

/// Slack allowed when checking that accuracy falls with sigma; sampling
/// noise on a few thousand windows is well below this.
const MONOTONE_SLACK: f64 = 0.02;

/// Bisects the noise level until unrestricted accuracy on the calibration
/// set lies within `tol` of `target_acc`.
pub fn calibrate_noise(
    cfg: &RunConfig,
    pipeline: &GesturePipeline,
    target_acc: f64,
    tol: f64,
) -> Result<CalibrationResult, HarnessError> {
    let scene = cfg.scene()?;
    let lib = cfg.library()?;
    let n = cfg.dataset.calibration_samples;
    let mut probes = Vec::new();
    let mut measure = |sigma: f64| -> Result<f64, HarnessError> {
        let samples = generate_eval_samples(cfg, &scene, &lib, sigma, TAG_CALIBRATION, n)?;
        let acc = unrestricted_accuracy(&samples, pipeline, cfg.backend)?;
        log::info!("calibrate: sigma {sigma:.4} -> accuracy {acc:.4}");
        probes.push((sigma, acc));
        Ok(acc)
    };
    let done = |sigma: f64, accuracy: f64, probes: Vec<(f64, f64)>| CalibrationResult {
        sigma,
        accuracy,
        target_acc,
        tol,
        probes,
    };

    let (mut lo, mut hi) = (0.0, cfg.calibration.sigma_max);
    let mut acc_lo = measure(lo)?;
    if (acc_lo - target_acc).abs() <= tol {
        return Ok(done(lo, acc_lo, probes));
    }
    if acc_lo < target_acc {
        return Err(HarnessError::CalibrationFailed(format!(
            "accuracy at sigma 0 is {acc_lo:.4}, below the target {target_acc}"
        )));
    }
    let mut acc_hi = measure(hi)?;
    if (acc_hi - target_acc).abs() <= tol {
        return Ok(done(hi, acc_hi, probes));
    }
    if acc_hi > target_acc {
        return Err(HarnessError::CalibrationFailed(format!(
            "accuracy at sigma {hi} is still {acc_hi:.4}, above the target {target_acc}"
        )));
    }
    for _ in 0..cfg.calibration.max_iterations {
        let mid = 0.5 * (lo + hi);
        let acc = measure(mid)?;
        if acc > acc_lo + MONOTONE_SLACK || acc < acc_hi - MONOTONE_SLACK {
            return Err(HarnessError::CalibrationFailed(format!(
                "accuracy is not decreasing in sigma: {acc:.4} at {mid:.4} outside [{acc_hi:.4}, {acc_lo:.4}]"
            )));
        }
        if (acc - target_acc).abs() <= tol {
            return Ok(done(mid, acc, probes));
        }
        if acc > target_acc {
            (lo, acc_lo) = (mid, acc);
        } else {
            (hi, acc_hi) = (mid, acc);
        }
    }
    Err(HarnessError::CalibrationFailed(format!(
        "no sigma within {} iterations; bracket [{lo:.4}, {hi:.4}]",
        cfg.calibration.max_iterations
    )))
}
