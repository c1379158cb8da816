use std::path::PathBuf;

use neuromanip::controller::ControllerState;
use neuromanip::harness::{simulate, Decoder, HarnessError, RunConfig, Scenario};
use neuromanip::scene::{write_gaze_trace, GazeSample, Vec3};
use neuromanip::signal::GestureLabel;

fn bundled(name: &str) -> Scenario {
    Scenario::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/scenarios").join(name)).unwrap()
}

fn run(sc: &Scenario) -> neuromanip::harness::SimulationLog {
    let cfg = RunConfig::default();
    simulate(&cfg, sc, &cfg.scene().unwrap(), &cfg.library().unwrap(), Decoder::Oracle).unwrap()
}

#[test]
fn cup_cylindrical_reaches_execution() {
    let log = run(&bundled("cup_cylindrical.json"));
    assert!(log.passed);
    assert_eq!(log.unsafe_executions, 0);
    assert_eq!(log.executed, vec![GestureLabel::CylindricalGrip]);
    assert!(log.commands.iter().any(|c| matches!(c.state_before, ControllerState::Confirming { .. })));
}

#[test]
fn gaze_off_objects_emits_nothing() {
    let log = run(&bundled("gaze_off_objects.json"));
    assert!(log.commands.is_empty());
    assert_eq!(log.final_state, ControllerState::Idle);
    assert!(log.passed);
}

#[test]
fn open_hand_at_cup_is_rejected() {
    let log = run(&bundled("cup_open_hand.json"));
    assert!(log.commands.is_empty());
    assert!(log.rejected > 0);
    assert!(log.passed);
}

#[test]
fn release_returns_to_idle() {
    let log = run(&bundled("pen_pinch_release.json"));
    assert!(log.passed);
    assert_eq!(log.commands.len(), 2);
    assert_eq!(log.commands[1].setpoints, [0.0; 6]);
    assert_eq!(log.final_state, ControllerState::Idle);
}

#[test]
fn gaze_can_come_from_a_csv_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let scene = cfg.scene().unwrap();
    let bottle = scene.object(2).unwrap().aabb.center();
    let samples: Vec<GazeSample> = (0..600).map(|i| GazeSample::toward(i * 5000, Vec3::default(), bottle)).collect();
    write_gaze_trace(std::fs::File::create(dir.path().join("gaze.csv")).unwrap(), &samples).unwrap();
    let sc_path = dir.path().join("bottle.json");
    std::fs::write(
        &sc_path,
        r#"{"name":"bottle from csv","gaze":{"csv":"gaze.csv"},
            "intents":[{"from_ms":800,"to_ms":2000,"gesture":"CylindricalGrip"}],
            "duration_ms":3000,"expected_grasp":"CylindricalGrip"}"#,
    )
    .unwrap();
    let log = run(&Scenario::load(&sc_path).unwrap());
    assert!(log.passed, "{:?}", log.final_state);
    assert!(matches!(log.final_state, ControllerState::Holding { object_id: 2, .. }));
}

#[test]
fn unknown_object_in_script_is_a_scenario_error() {
    let sc = Scenario::from_json(
        r#"{"name":"ghost","gaze":{"segments":[{"from_ms":0,"to_ms":500,"target":{"object":42}}]},"duration_ms":500}"#,
    )
    .unwrap();
    let cfg = RunConfig::default();
    let err = simulate(&cfg, &sc, &cfg.scene().unwrap(), &cfg.library().unwrap(), Decoder::Oracle).unwrap_err();
    assert!(matches!(err, HarnessError::Scenario(_)));
}

#[test]
fn unknown_scenario_keys_are_rejected() {
    assert!(Scenario::from_json(r#"{"name":"x","gaze":{"segments":[]},"duration_ms":10,"speed":2}"#).is_err());
}
