use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{derive_seed, synth_model, HarnessError, RunConfig};
use crate::classify::{Backend, GesturePipeline};
use crate::controller::{audit_log, CommandLogEntry, ControlEnv, ControlEvent, Controller, ControllerState};
use crate::grasp::{context_to_grasps, GraspLibrary};
use crate::scene::{
    read_gaze_trace, FixationDetector, FixationParams, FixationUpdate, GazeSample, ObjectId, Scene, Vec3,
};
use crate::signal::{
    design_filter_chain, synth_emg, EmgFrame, EmgWindow, GestureLabel, WindowConfig, FRAME_PERIOD_US, MIN_DURATION_MS,
    SAMPLE_RATE_HZ,
};

const TAG_SIMULATION: u64 = 4;
/// Controller clock period.
pub const TICK_MS: u64 = 50;

/// Where the gaze points during one scripted interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeTarget {
    /// Center of an object's box.
    Object(ObjectId),
    /// Image pixel `[u, v]`.
    Pixel([f64; 2]),
    /// Camera-frame direction.
    Dir(Vec3),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeSegment {
    pub from_ms: u64,
    pub to_ms: u64,
    pub target: GazeTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeScript {
    /// Piecewise-constant gaze sampled at 200 Hz; uncovered time looks above the scene.
    Segments(Vec<GazeSegment>),
    /// A recorded trace, relative paths taken from the scenario's directory.
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentSegment {
    pub from_ms: u64,
    pub to_ms: u64,
    pub gesture: GestureLabel,
}

/// A scripted session: gaze, intended gestures and an optional release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub scene: Option<PathBuf>,
    pub gaze: GazeScript,
    #[serde(default)]
    pub intents: Vec<IntentSegment>,
    #[serde(default)]
    pub release_ms: Option<u64>,
    pub duration_ms: u64,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    /// Grasp that must execute; `None` means nothing may actuate.
    #[serde(default)]
    pub expected_grasp: Option<GestureLabel>,
    /// At least one decision must be rejected by the candidate gate.
    #[serde(default)]
    pub expect_rejections: bool,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Reads a scenario and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut sc = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = sc.scene.as_mut() {
            *p = base.join(&*p);
        }
        if let GazeScript::Csv(p) = &mut sc.gaze {
            *p = base.join(&*p);
        }
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Scenario(format!("{}: {m}", self.name)));
        if self.duration_ms == 0 {
            return bad("duration_ms must be > 0".into());
        }
        if let GazeScript::Segments(segs) = &self.gaze {
            for (i, s) in segs.iter().enumerate() {
                if s.from_ms >= s.to_ms {
                    return bad(format!("gaze[{i}] is empty"));
                }
            }
        }
        let mut intents = self.intents.clone();
        intents.sort_by_key(|s| s.from_ms);
        for (i, s) in intents.iter().enumerate() {
            if s.from_ms >= s.to_ms {
                return bad(format!("intent {i} is empty"));
            }
            if intents.get(i + 1).is_some_and(|n| n.from_ms < s.to_ms) {
                return bad(format!("intents overlap at {} ms", s.to_ms));
            }
        }
        if let Some(sigma) = self.noise_sigma {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return bad("noise_sigma must be finite and >= 0".into());
            }
        }
        Ok(())
    }

    pub fn intent_at(&self, t_ms: u64) -> GestureLabel {
        self.intents.iter().find(|s| (s.from_ms..s.to_ms).contains(&t_ms)).map_or(GestureLabel::Rest, |s| s.gesture)
    }

    fn gaze_samples(&self, scene: &Scene) -> Result<Vec<GazeSample>, HarnessError> {
        match &self.gaze {
            GazeScript::Csv(path) => Ok(read_gaze_trace(BufReader::new(File::open(path)?))?),
            GazeScript::Segments(segs) => {
                let away = Vec3::new(0.0, -1.0, 0.05);
                let frames = self.duration_ms as i64 * 1000 / FRAME_PERIOD_US;
                (0..frames)
                    .map(|i| {
                        let t_us = i * FRAME_PERIOD_US;
                        let t_ms = (t_us / 1000) as u64;
                        let seg = segs.iter().rev().find(|s| (s.from_ms..s.to_ms).contains(&t_ms));
                        Ok(match seg.map(|s| s.target) {
                            None => GazeSample::new(t_us, Vec3::default(), away),
                            Some(GazeTarget::Dir(d)) => GazeSample::new(t_us, Vec3::default(), d),
                            Some(GazeTarget::Pixel([u, v])) => scene.gaze_at_pixel(t_us, u, v),
                            Some(GazeTarget::Object(id)) => {
                                let obj = scene.object(id).ok_or_else(|| {
                                    HarnessError::Scenario(format!("{}: object {id} is not in the scene", self.name))
                                })?;
                                GazeSample::toward(t_us, Vec3::default(), obj.aabb.center())
                            }
                        })
                    })
                    .collect()
            }
        }
    }

    /// Raw EMG following the intent timeline; each constant run is synthesized
    /// with its own seed and the stream is contiguous in time.
    fn emg_stream(&self, cfg: &RunConfig) -> Result<Vec<EmgFrame>, HarnessError> {
        let model = synth_model(cfg, self.noise_sigma.unwrap_or(cfg.noise_sigma));
        let total = (self.duration_ms as i64 * 1000 / FRAME_PERIOD_US) as usize;
        let mut frames = Vec::with_capacity(total);
        let mut run = 0u64;
        while frames.len() < total {
            let start = frames.len();
            let gesture = self.intent_at(start as u64 * FRAME_PERIOD_US as u64 / 1000);
            let len = (start..total)
                .take_while(|&i| self.intent_at(i as u64 * FRAME_PERIOD_US as u64 / 1000) == gesture)
                .count();
            let ms = (len as u64 * FRAME_PERIOD_US as u64 / 1000).max(MIN_DURATION_MS);
            let chunk = synth_emg(&model.with_seed(derive_seed(cfg.seed, TAG_SIMULATION, run)), gesture, ms)?;
            frames.extend(chunk.into_iter().take(len).enumerate().map(|(k, mut f)| {
                f.timestamp_us = (start + k) as i64 * FRAME_PERIOD_US;
                f
            }));
            run += 1;
        }
        Ok(frames)
    }
}

/// Source of EMG decisions.
#[derive(Debug, Clone, Copy)]
pub enum Decoder<'a> {
    /// The scripted intent with confidence 1.
    Oracle,
    /// Unrestricted classification of synthesized EMG.
    Model(&'a GesturePipeline, Backend),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t_us: i64,
    pub event: ControlEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub scenario: String,
    pub events: Vec<TimedEvent>,
    pub commands: Vec<CommandLogEntry>,
    pub final_state: ControllerState,
    pub rejected: u64,
    pub executed: Vec<GestureLabel>,
    pub unsafe_executions: usize,
    pub passed: bool,
}

fn priority(e: &ControlEvent) -> u8 {
    match e {
        ControlEvent::Fixation { .. } | ControlEvent::FixationLost => 0,
        ControlEvent::Release => 1,
        ControlEvent::EmgDecision { .. } | ControlEvent::CycleGesture => 2,
        ControlEvent::Tick { .. } => 3,
    }
}

/// Event stream of a scenario: fixation updates, a decision per window
/// stride, release, and a tick every [`TICK_MS`].
pub fn scenario_events(
    cfg: &RunConfig,
    scenario: &Scenario,
    scene: &Scene,
    decoder: Decoder<'_>,
) -> Result<Vec<TimedEvent>, HarnessError> {
    let mut events = Vec::new();
    let mut detector = FixationDetector::new(FixationParams::default(), scene.objects.clone());
    for s in scenario.gaze_samples(scene)? {
        for u in detector.push(s)? {
            let event = match u {
                FixationUpdate::Onset { object_id, .. } => ControlEvent::Fixation { object_id },
                FixationUpdate::Closed(_) => ControlEvent::FixationLost,
            };
            events.push(TimedEvent { t_us: s.timestamp_us, event });
        }
    }

    let wcfg = WindowConfig::default();
    let frame_ms = FRAME_PERIOD_US / 1000;
    let end_of = |k: usize| (k as i64 + 1) * FRAME_PERIOD_US;
    match decoder {
        Decoder::Oracle => {
            let frames = (scenario.duration_ms as i64 / frame_ms) as usize;
            for k in (wcfg.length - 1..frames).step_by(wcfg.stride) {
                let label = scenario.intent_at((end_of(k) / 1000) as u64 - 1);
                events
                    .push(TimedEvent { t_us: end_of(k), event: ControlEvent::EmgDecision { label, confidence: 1.0 } });
            }
        }
        Decoder::Model(pipeline, backend) => {
            let mut chain = design_filter_chain(SAMPLE_RATE_HZ)?;
            let filtered = chain.filter_stream(&scenario.emg_stream(cfg)?)?;
            for k in (wcfg.length - 1..filtered.len()).step_by(wcfg.stride) {
                let window = EmgWindow::from_frames(&filtered[k + 1 - wcfg.length..=k]);
                let c = pipeline.classify_window(&window, backend)?;
                let event = ControlEvent::EmgDecision { label: c.label, confidence: c.confidence.clamp(0.0, 1.0) };
                events.push(TimedEvent { t_us: end_of(k), event });
            }
        }
    }

    if let Some(ms) = scenario.release_ms.filter(|ms| *ms < scenario.duration_ms) {
        events.push(TimedEvent { t_us: ms as i64 * 1000, event: ControlEvent::Release });
    }
    for t in (TICK_MS..=scenario.duration_ms).step_by(TICK_MS as usize) {
        events.push(TimedEvent { t_us: t as i64 * 1000, event: ControlEvent::Tick { dt_ms: TICK_MS as f64 } });
    }
    events.sort_by_key(|e| (e.t_us, priority(&e.event)));
    Ok(events)
}

/// Runs a scenario through the controller and checks its expectations.
pub fn simulate(
    cfg: &RunConfig,
    scenario: &Scenario,
    scene: &Scene,
    library: &GraspLibrary,
    decoder: Decoder<'_>,
) -> Result<SimulationLog, HarnessError> {
    let events = scenario_events(cfg, scenario, scene, decoder)?;
    let env = ControlEnv::new(library.clone(), scene.objects.clone(), cfg.controller);
    let map = env.label_map.clone();
    let mut controller = Controller::new(env);
    for e in &events {
        controller.handle(&e.event);
    }

    let executed: Vec<GestureLabel> = controller.log.iter().filter_map(|e| e.label).collect();
    let flagged = audit_log(&controller.log, &map).len();
    let off_context = controller
        .log
        .iter()
        .filter(|e| e.label.is_some())
        .filter(|e| {
            let obj = e.state_before.object_id().and_then(|id| scene.object(id));
            let ok = obj
                .and_then(|o| context_to_grasps(o, library).ok())
                .is_some_and(|c| e.label.is_some_and(|l| c.admits(l, &map)));
            !ok
        })
        .count();
    let unsafe_executions = flagged.max(off_context);
    let met = match scenario.expected_grasp {
        Some(g) => executed.contains(&g),
        None => controller.log.iter().all(|e| !e.setpoints.iter().any(|s| *s != 0.0)),
    };
    let passed = unsafe_executions == 0 && met && (!scenario.expect_rejections || controller.rejected > 0);
    Ok(SimulationLog {
        scenario: scenario.name.clone(),
        events,
        commands: controller.log,
        final_state: controller.state,
        rejected: controller.rejected,
        executed,
        unsafe_executions,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::default_scene;

    fn cup_scenario(gesture: GestureLabel) -> Scenario {
        Scenario::from_json(&format!(
            r#"{{"name":"t","gaze":{{"segments":[{{"from_ms":0,"to_ms":3000,"target":{{"object":1}}}}]}},
                "intents":[{{"from_ms":1000,"to_ms":2000,"gesture":"{gesture:?}"}}],
                "duration_ms":3000,"expected_grasp":"{gesture:?}"}}"#
        ))
        .unwrap()
    }

    #[test]
    fn oracle_grasps_the_fixated_cup() {
        let log = simulate(
            &RunConfig::default(),
            &cup_scenario(GestureLabel::CylindricalGrip),
            &default_scene(),
            &GraspLibrary::default_library(),
            Decoder::Oracle,
        )
        .unwrap();
        assert!(log.passed, "{log:?}");
        assert_eq!(log.executed, vec![GestureLabel::CylindricalGrip]);
        assert!(matches!(log.final_state, ControllerState::Holding { object_id: 1, .. }));
    }

    #[test]
    fn out_of_context_intent_is_rejected() {
        let log = simulate(
            &RunConfig::default(),
            &cup_scenario(GestureLabel::OpenHand),
            &default_scene(),
            &GraspLibrary::default_library(),
            Decoder::Oracle,
        )
        .unwrap();
        assert!(log.executed.is_empty());
        assert!(log.rejected > 0);
        assert_eq!(log.unsafe_executions, 0);
        assert!(!log.passed);
    }

    #[test]
    fn events_are_time_ordered_and_ticked() {
        let sc = cup_scenario(GestureLabel::CylindricalGrip);
        let ev = scenario_events(&RunConfig::default(), &sc, &default_scene(), Decoder::Oracle).unwrap();
        assert!(ev.windows(2).all(|w| w[0].t_us <= w[1].t_us));
        let ticks = ev.iter().filter(|e| matches!(e.event, ControlEvent::Tick { .. })).count();
        assert_eq!(ticks, 60);
        let onset = ev.iter().find(|e| matches!(e.event, ControlEvent::Fixation { .. })).unwrap();
        assert_eq!(onset.t_us, 300_000);
    }

    #[test]
    fn emg_stream_is_contiguous() {
        let sc = cup_scenario(GestureLabel::LateralPinch);
        let frames = sc.emg_stream(&RunConfig::default()).unwrap();
        assert_eq!(frames.len(), 600);
        assert!(frames.iter().enumerate().all(|(i, f)| f.timestamp_us == i as i64 * FRAME_PERIOD_US));
    }

    #[test]
    fn overlapping_intents_are_invalid() {
        let bad = r#"{"name":"x","gaze":{"segments":[]},"duration_ms":100,
            "intents":[{"from_ms":0,"to_ms":50,"gesture":"Rest"},{"from_ms":40,"to_ms":60,"gesture":"OpenHand"}]}"#;
        assert!(matches!(Scenario::from_json(bad), Err(HarnessError::Scenario(_))));
    }
}
