//! Grasp state machine: context, restricted EMG decisions and confirmation in,
//! actuator commands out.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grasp::{context_to_grasps, cycle_alternative, CandidateSet, GraspLibrary, LabelMap, ACTUATORS};
use crate::scene::{ObjectId, SceneObject};
use crate::signal::GestureLabel;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("trace line {line}: {msg}")]
    BadEvent { line: usize, msg: String },
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub confirm_windows: u32,
    pub confidence_threshold: f64,
    pub ramp_ms: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { confirm_windows: 5, confidence_threshold: 0.6, ramp_ms: 800 }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.confirm_windows == 0 {
            return Err(ControllerError::InvalidConfig("confirm_windows must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(ControllerError::InvalidConfig("confidence_threshold must be in [0, 1]".into()));
        }
        if self.ramp_ms == 0 {
            return Err(ControllerError::InvalidConfig("ramp_ms must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum ControllerState {
    Idle,
    Armed {
        object_id: ObjectId,
        candidates: CandidateSet,
        highlighted: usize,
    },
    /// Keeps the candidate set it was entered with so the log can be audited.
    Confirming {
        object_id: ObjectId,
        candidates: CandidateSet,
        highlighted: usize,
        label: GestureLabel,
        hold_windows: u32,
    },
    Executing {
        object_id: ObjectId,
        label: GestureLabel,
        progress: f64,
    },
    Holding {
        object_id: ObjectId,
        label: GestureLabel,
    },
    Releasing {
        progress: f64,
    },
}

impl ControllerState {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerState::Idle => "Idle",
            ControllerState::Armed { .. } => "Armed",
            ControllerState::Confirming { .. } => "Confirming",
            ControllerState::Executing { .. } => "Executing",
            ControllerState::Holding { .. } => "Holding",
            ControllerState::Releasing { .. } => "Releasing",
        }
    }

    pub fn candidates(&self) -> Option<&CandidateSet> {
        match self {
            ControllerState::Armed { candidates, .. } | ControllerState::Confirming { candidates, .. } => {
                Some(candidates)
            }
            _ => None,
        }
    }

    pub fn object_id(&self) -> Option<ObjectId> {
        match self {
            ControllerState::Armed { object_id, .. }
            | ControllerState::Confirming { object_id, .. }
            | ControllerState::Executing { object_id, .. }
            | ControllerState::Holding { object_id, .. } => Some(*object_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlEvent {
    Fixation { object_id: Option<ObjectId> },
    FixationLost,
    EmgDecision { label: GestureLabel, confidence: f64 },
    CycleGesture,
    Tick { dt_ms: f64 },
    Release,
}

impl ControlEvent {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ControlEvent::EmgDecision { confidence, .. } if !(0.0..=1.0).contains(&confidence) => {
                Err(format!("confidence {confidence} outside [0, 1]"))
            }
            ControlEvent::Tick { dt_ms } if !(dt_ms > 0.0 && dt_ms.is_finite()) => {
                Err(format!("dt_ms {dt_ms} must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub setpoints: [f64; ACTUATORS],
    pub ramp_ms: u32,
}

impl ActuatorCommand {
    pub fn is_actuating(&self) -> bool {
        self.setpoints.iter().any(|s| *s != 0.0)
    }
}

/// Everything `step` reads besides the state and event.
#[derive(Debug, Clone)]
pub struct ControlEnv {
    pub library: GraspLibrary,
    pub label_map: LabelMap,
    pub objects: Vec<SceneObject>,
    pub config: ControllerConfig,
}

impl ControlEnv {
    pub fn new(library: GraspLibrary, objects: Vec<SceneObject>, config: ControllerConfig) -> Self {
        let label_map = library.label_map();
        Self { library, label_map, objects, config }
    }

    fn arm(&self, object_id: Option<ObjectId>) -> ControllerState {
        let Some(obj) = object_id.and_then(|id| self.objects.iter().find(|o| o.id == id)) else {
            return ControllerState::Idle;
        };
        match context_to_grasps(obj, &self.library) {
            Ok(candidates) => ControllerState::Armed { object_id: obj.id, candidates, highlighted: 0 },
            Err(_) => ControllerState::Idle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ControllerState,
    pub command: Option<ActuatorCommand>,
    /// The event was an out-of-candidate decision and was discarded.
    pub rejected: bool,
}

impl StepOutcome {
    fn to(state: ControllerState) -> Self {
        Self { state, command: None, rejected: false }
    }
}

/// Total, deterministic transition function.
pub fn step(state: &ControllerState, event: &ControlEvent, env: &ControlEnv) -> StepOutcome {
    use ControlEvent as E;
    use ControllerState as S;
    let cfg = &env.config;
    let same = || StepOutcome::to(state.clone());
    if event.validate().is_err() {
        return same();
    }
    match (state, *event) {
        (S::Idle, E::Fixation { object_id }) => StepOutcome::to(env.arm(object_id)),
        (S::Idle, _) => same(),

        (S::Armed { object_id, .. } | S::Confirming { object_id, .. }, E::Fixation { object_id: Some(new) })
            if new == *object_id =>
        {
            same()
        }
        (S::Armed { .. } | S::Confirming { .. }, E::Fixation { object_id }) => StepOutcome::to(env.arm(object_id)),
        (S::Armed { .. } | S::Confirming { .. }, E::FixationLost) => StepOutcome::to(S::Idle),

        (S::Armed { object_id, candidates, highlighted }, E::EmgDecision { label, confidence }) => {
            if label == GestureLabel::Rest {
                return same();
            }
            if !candidates.admits(label, &env.label_map) {
                return StepOutcome { rejected: true, ..same() };
            }
            if confidence < cfg.confidence_threshold {
                return same();
            }
            confirm(*object_id, candidates, *highlighted, label, 1, env)
        }
        (S::Armed { object_id, candidates, highlighted }, E::CycleGesture) => StepOutcome::to(S::Armed {
            object_id: *object_id,
            candidates: candidates.clone(),
            highlighted: cycle_alternative(candidates, *highlighted).unwrap_or(0),
        }),
        (S::Armed { .. }, _) => same(),

        (
            S::Confirming { object_id, candidates, highlighted, label: held, hold_windows },
            E::EmgDecision { label, confidence },
        ) => {
            if label != GestureLabel::Rest && !candidates.admits(label, &env.label_map) {
                return StepOutcome { rejected: true, ..same() };
            }
            if label == *held && confidence >= cfg.confidence_threshold {
                confirm(*object_id, candidates, *highlighted, label, hold_windows + 1, env)
            } else {
                StepOutcome::to(S::Armed {
                    object_id: *object_id,
                    candidates: candidates.clone(),
                    highlighted: *highlighted,
                })
            }
        }
        (S::Confirming { .. }, _) => same(),

        (S::Executing { object_id, label, progress }, E::Tick { dt_ms }) => {
            let p = progress + dt_ms / cfg.ramp_ms as f64;
            if p >= 1.0 {
                StepOutcome::to(S::Holding { object_id: *object_id, label: *label })
            } else {
                StepOutcome::to(S::Executing { object_id: *object_id, label: *label, progress: p })
            }
        }
        (S::Executing { .. } | S::Holding { .. }, E::Release) => StepOutcome {
            state: S::Releasing { progress: 0.0 },
            command: Some(ActuatorCommand { setpoints: [0.0; ACTUATORS], ramp_ms: cfg.ramp_ms }),
            rejected: false,
        },
        (S::Executing { .. } | S::Holding { .. }, _) => same(),

        (S::Releasing { progress }, E::Tick { dt_ms }) => {
            let p = progress + dt_ms / cfg.ramp_ms as f64;
            StepOutcome::to(if p >= 1.0 { S::Idle } else { S::Releasing { progress: p } })
        }
        (S::Releasing { .. }, _) => same(),
    }
}

fn confirm(
    object_id: ObjectId,
    candidates: &CandidateSet,
    highlighted: usize,
    label: GestureLabel,
    hold_windows: u32,
    env: &ControlEnv,
) -> StepOutcome {
    if hold_windows >= env.config.confirm_windows {
        StepOutcome {
            state: ControllerState::Executing { object_id, label, progress: 0.0 },
            command: Some(ActuatorCommand { setpoints: env.library.setpoints(label), ramp_ms: env.config.ramp_ms }),
            rejected: false,
        }
    } else {
        StepOutcome::to(ControllerState::Confirming {
            object_id,
            candidates: candidates.clone(),
            highlighted,
            label,
            hold_windows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandLogEntry {
    /// Milliseconds of simulated time, advanced by `Tick` events.
    pub t: f64,
    pub state_before: ControllerState,
    /// `None` for release commands.
    pub label: Option<GestureLabel>,
    pub setpoints: [f64; ACTUATORS],
    pub ramp_ms: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub final_state: ControllerState,
    pub log: Vec<CommandLogEntry>,
    pub rejected: u64,
}

/// Running controller with its clock, command log and rejected counter.
#[derive(Debug, Clone)]
pub struct Controller {
    pub env: ControlEnv,
    pub state: ControllerState,
    pub t_ms: f64,
    pub log: Vec<CommandLogEntry>,
    pub rejected: u64,
    pub setpoints: [f64; ACTUATORS],
}

impl Controller {
    pub fn new(env: ControlEnv) -> Self {
        Self::with_state(env, ControllerState::Idle)
    }

    pub fn with_state(env: ControlEnv, state: ControllerState) -> Self {
        Self { env, state, t_ms: 0.0, log: Vec::new(), rejected: 0, setpoints: [0.0; ACTUATORS] }
    }

    pub fn handle(&mut self, event: &ControlEvent) -> Option<ActuatorCommand> {
        let out = step(&self.state, event, &self.env);
        if let ControlEvent::Tick { dt_ms } = *event {
            if event.validate().is_ok() {
                self.t_ms += dt_ms;
            }
        }
        if out.rejected {
            self.rejected += 1;
        }
        if let Some(cmd) = out.command {
            let label = match out.state {
                ControllerState::Executing { label, .. } => Some(label),
                _ => None,
            };
            self.log.push(CommandLogEntry {
                t: self.t_ms,
                state_before: self.state.clone(),
                label,
                setpoints: cmd.setpoints,
                ramp_ms: cmd.ramp_ms,
            });
            self.setpoints = cmd.setpoints;
        }
        self.state = out.state;
        out.command
    }
}

/// Fold of [`step`] over `events`.
pub fn run_trace(initial: ControllerState, events: &[ControlEvent], env: &ControlEnv) -> TraceResult {
    let mut c = Controller::with_state(env.clone(), initial);
    for e in events {
        c.handle(e);
    }
    TraceResult { final_state: c.state, log: c.log, rejected: c.rejected }
}

/// Log entries whose nonzero command is not justified by the candidate set
/// captured in `state_before`.
pub fn audit_log<'a>(log: &'a [CommandLogEntry], map: &LabelMap) -> Vec<&'a CommandLogEntry> {
    log.iter()
        .filter(|e| e.setpoints.iter().any(|s| *s != 0.0))
        .filter(|e| match (&e.state_before, e.label) {
            (ControllerState::Confirming { candidates, label, .. }, Some(l)) => {
                *label != l || !candidates.admits(l, map)
            }
            _ => true,
        })
        .collect()
}

/// One JSON event per line; blank lines are skipped.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<ControlEvent>, ControllerError> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| ControllerError::BadEvent { line: i + 1, msg };
        let e: ControlEvent = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        e.validate().map_err(bad)?;
        events.push(e);
    }
    Ok(events)
}

pub fn write_trace<W: Write>(mut w: W, events: &[ControlEvent]) -> Result<(), ControllerError> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_command_log<W: Write>(mut w: W, log: &[CommandLogEntry]) -> Result<(), ControllerError> {
    for e in log {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_command_log<R: BufRead>(r: R) -> Result<Vec<CommandLogEntry>, ControllerError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| ControllerError::BadEvent { line: i + 1, msg: e.to_string() })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Aabb, ObjectClass, Vec3};
    use GestureLabel::*;

    fn cup() -> SceneObject {
        SceneObject {
            id: 1,
            class_label: ObjectClass::Cup,
            aabb: Aabb { min: Vec3::new(-0.04, -0.05, 0.5), max: Vec3::new(0.04, 0.05, 0.58) },
            yaw: 0.0,
            grasp_size_m: 0.08,
        }
    }

    fn env() -> ControlEnv {
        ControlEnv::new(GraspLibrary::default_library(), vec![cup()], ControllerConfig::default())
    }

    fn emg(label: GestureLabel, confidence: f64) -> ControlEvent {
        ControlEvent::EmgDecision { label, confidence }
    }

    fn armed(env: &ControlEnv) -> ControllerState {
        step(&ControllerState::Idle, &ControlEvent::Fixation { object_id: Some(1) }, env).state
    }

    #[test]
    fn idle_ignores_emg() {
        let out = step(&ControllerState::Idle, &emg(CylindricalGrip, 1.0), &env());
        assert_eq!(out, StepOutcome::to(ControllerState::Idle));
    }

    #[test]
    fn fixation_arms_with_candidates() {
        let e = env();
        let s = armed(&e);
        let c = s.candidates().unwrap();
        assert!(!c.is_empty() && c.len() <= 3);
        assert!(c.admits(CylindricalGrip, &e.label_map));
        assert!(!c.admits(OpenHand, &e.label_map));
        assert_eq!(
            step(&ControllerState::Idle, &ControlEvent::Fixation { object_id: Some(42) }, &e).state,
            ControllerState::Idle
        );
        assert_eq!(
            step(&ControllerState::Idle, &ControlEvent::Fixation { object_id: None }, &e).state,
            ControllerState::Idle
        );
    }

    #[test]
    fn out_of_candidate_is_discarded() {
        let e = env();
        let s = armed(&e);
        let out = step(&s, &emg(OpenHand, 0.99), &e);
        assert_eq!(out.state, s);
        assert!(out.rejected);
        assert!(out.command.is_none());
    }

    #[test]
    fn five_consistent_windows_execute() {
        let e = env();
        let mut events = vec![ControlEvent::Fixation { object_id: Some(1) }];
        events.extend(std::iter::repeat_n(emg(CylindricalGrip, 0.7), 5));
        let r = run_trace(ControllerState::Idle, &events, &e);
        assert!(matches!(r.final_state, ControllerState::Executing { label: CylindricalGrip, .. }));
        assert_eq!(r.log.len(), 1);
        assert_eq!(r.log[0].setpoints, e.library.setpoints(CylindricalGrip));
        assert_eq!(r.log[0].ramp_ms, 800);
        assert!(audit_log(&r.log, &e.label_map).is_empty());
    }

    #[test]
    fn low_confidence_or_switch_resets() {
        let e = env();
        let s = step(&armed(&e), &emg(CylindricalGrip, 0.9), &e).state;
        assert!(matches!(s, ControllerState::Confirming { hold_windows: 1, .. }));
        assert!(matches!(step(&s, &emg(CylindricalGrip, 0.5), &e).state, ControllerState::Armed { .. }));
        assert!(matches!(step(&s, &emg(Rest, 0.9), &e).state, ControllerState::Armed { .. }));
        assert!(matches!(step(&s, &ControlEvent::FixationLost, &e).state, ControllerState::Idle));
    }

    #[test]
    fn full_cycle_through_release() {
        let e = env();
        let mut c = Controller::new(e.clone());
        c.handle(&ControlEvent::Fixation { object_id: Some(1) });
        for _ in 0..5 {
            c.handle(&emg(CylindricalGrip, 0.9));
        }
        for _ in 0..16 {
            c.handle(&ControlEvent::Tick { dt_ms: 50.0 });
        }
        assert!(matches!(c.state, ControllerState::Holding { .. }));
        let cmd = c.handle(&ControlEvent::Release).unwrap();
        assert_eq!(cmd.setpoints, [0.0; 6]);
        for _ in 0..16 {
            c.handle(&ControlEvent::Tick { dt_ms: 50.0 });
        }
        assert_eq!(c.state, ControllerState::Idle);
        assert_eq!(c.log.len(), 2);
        assert_eq!(c.log[1].t, 800.0);
        assert_eq!(c.log[1].label, None);
    }

    #[test]
    fn cycle_wraps_highlight() {
        let e = env();
        let mut s = armed(&e);
        let k = s.candidates().unwrap().len();
        for _ in 0..k {
            s = step(&s, &ControlEvent::CycleGesture, &e).state;
        }
        assert!(matches!(s, ControllerState::Armed { highlighted: 0, .. }));
    }

    #[test]
    fn trace_jsonl_round_trip_and_errors() {
        let events = vec![
            ControlEvent::Fixation { object_id: Some(1) },
            ControlEvent::Fixation { object_id: None },
            emg(TripodPinch, 0.75),
            ControlEvent::CycleGesture,
            ControlEvent::Tick { dt_ms: 50.0 },
            ControlEvent::Release,
            ControlEvent::FixationLost,
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &events).unwrap();
        assert_eq!(read_trace(&buf[..]).unwrap(), events);
        let bad = "{\"type\":\"tick\",\"dt_ms\":0}\n";
        assert!(matches!(read_trace(bad.as_bytes()), Err(ControllerError::BadEvent { line: 1, .. })));
        let bad = "{\"type\":\"release\"}\n{\"type\":\"emg_decision\",\"label\":\"Fist\",\"confidence\":1}\n";
        assert!(matches!(read_trace(bad.as_bytes()), Err(ControllerError::BadEvent { line: 2, .. })));
    }

    #[test]
    fn audit_flags_forged_entries() {
        let e = env();
        let forged = CommandLogEntry {
            t: 0.0,
            state_before: armed(&e),
            label: Some(OpenHand),
            setpoints: e.library.setpoints(OpenHand),
            ramp_ms: 800,
        };
        assert_eq!(audit_log(&[forged], &e.label_map).len(), 1);
    }
}
