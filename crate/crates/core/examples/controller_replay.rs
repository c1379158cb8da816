//! Replay an event trace through the grasp controller and audit its command log.

use neuromanip::controller::{audit_log, run_trace, ControlEnv, ControlEvent, ControllerConfig, ControllerState};
use neuromanip::grasp::GraspLibrary;
use neuromanip::harness::default_scene;
use neuromanip::signal::GestureLabel;

fn main() {
    let env = ControlEnv::new(GraspLibrary::default_library(), default_scene().objects, ControllerConfig::default());
    let decide = |label| ControlEvent::EmgDecision { label, confidence: 0.9 };
    let mut events = vec![ControlEvent::Fixation { object_id: Some(1) }];
    events.extend([decide(GestureLabel::OpenHand), decide(GestureLabel::IndexPoint)]);
    events.extend(std::iter::repeat_n(decide(GestureLabel::CylindricalGrip), 5));
    events.extend(std::iter::repeat_n(ControlEvent::Tick { dt_ms: 50.0 }, 20));
    events.push(ControlEvent::Release);
    events.extend(std::iter::repeat_n(ControlEvent::Tick { dt_ms: 50.0 }, 20));

    let out = run_trace(ControllerState::Idle, &events, &env);
    println!("final state {}, rejected {}", out.final_state.name(), out.rejected);
    for e in &out.log {
        println!("t={:>6.1} ms  from {:<10} {:?} ramp {} ms", e.t, e.state_before.name(), e.label, e.ramp_ms);
    }
    println!("audit flags: {}", audit_log(&out.log, &env.label_map).len());
}
