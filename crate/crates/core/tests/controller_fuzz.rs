use neuromanip::controller::{
    audit_log, run_trace, ControlEnv, ControlEvent, ControllerConfig, ControllerState, TraceResult,
};
use neuromanip::grasp::{context_to_grasps, GraspLibrary};
use neuromanip::harness::default_scene;
use neuromanip::signal::GestureLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env() -> ControlEnv {
    ControlEnv::new(GraspLibrary::default_library(), default_scene().objects, ControllerConfig::default())
}

/// Decisions repeat the previous label most of the time so confirmation runs occur.
fn random_event(rng: &mut ChaCha8Rng, last_label: &mut GestureLabel) -> ControlEvent {
    match rng.random_range(0..100) {
        0..=7 => ControlEvent::Fixation { object_id: Some(rng.random_range(0..9)) },
        8..=9 => ControlEvent::Fixation { object_id: None },
        10..=13 => ControlEvent::FixationLost,
        14..=69 => ControlEvent::EmgDecision {
            label: {
                if rng.random_bool(0.25) {
                    *last_label = GestureLabel::ALL[rng.random_range(0..6)];
                }
                *last_label
            },
            confidence: if rng.random_bool(0.8) { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..1.0) },
        },
        70..=74 => ControlEvent::CycleGesture,
        75..=95 => ControlEvent::Tick { dt_ms: rng.random_range(1.0..120.0) },
        _ => ControlEvent::Release,
    }
}

fn random_trace(seed: u64) -> Vec<ControlEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..120);
    let mut last = GestureLabel::Rest;
    (0..n).map(|_| random_event(&mut rng, &mut last)).collect()
}

fn unsafe_count(out: &TraceResult, env: &ControlEnv) -> usize {
    let flagged = audit_log(&out.log, &env.label_map).len();
    let off_context = out
        .log
        .iter()
        .filter(|e| e.setpoints.iter().any(|s| *s != 0.0))
        .filter(|e| {
            let Some(label) = e.label else { return true };
            let obj = e.state_before.object_id().and_then(|id| env.objects.iter().find(|o| o.id == id));
            !obj.and_then(|o| context_to_grasps(o, &env.library).ok()).is_some_and(|c| c.admits(label, &env.label_map))
        })
        .count();
    flagged.max(off_context)
}

#[test]
fn ten_thousand_fuzzed_traces_are_safe() {
    let env = env();
    let (mut executions, mut rejected) = (0usize, 0u64);
    for seed in 0..10_000 {
        let out = run_trace(ControllerState::Idle, &random_trace(seed), &env);
        assert_eq!(unsafe_count(&out, &env), 0, "seed {seed}: {:?}", out.log);
        executions += out.log.iter().filter(|e| e.label.is_some()).count();
        rejected += out.rejected;
    }
    assert!(executions > 500, "fuzzer too weak: {executions} executions");
    assert!(rejected > 1000);
}

#[test]
fn replay_is_deterministic() {
    let env = env();
    for seed in 0..500 {
        let trace = random_trace(seed);
        let (a, b) = (run_trace(ControllerState::Idle, &trace, &env), run_trace(ControllerState::Idle, &trace, &env));
        assert_eq!(a, b);
    }
}

#[test]
fn every_prefix_can_be_brought_back_to_rest() {
    let env = env();
    for seed in 0..2_000 {
        let mut trace = random_trace(seed);
        trace.push(ControlEvent::Release);
        trace.extend(std::iter::repeat_n(ControlEvent::Tick { dt_ms: 50.0 }, 20));
        trace.push(ControlEvent::FixationLost);
        let out = run_trace(ControllerState::Idle, &trace, &env);
        assert_eq!(out.final_state, ControllerState::Idle, "seed {seed}");
    }
}

#[test]
fn confident_candidate_decisions_always_execute() {
    let env = env();
    let n = env.config.confirm_windows as usize;
    for obj in &env.objects {
        let c = context_to_grasps(obj, &env.library).unwrap();
        for label in c.labels(&env.label_map).into_iter().filter(|l| *l != GestureLabel::Rest) {
            let mut trace = vec![ControlEvent::Fixation { object_id: Some(obj.id) }];
            trace.extend(std::iter::repeat_n(ControlEvent::EmgDecision { label, confidence: 0.9 }, n));
            let out = run_trace(ControllerState::Idle, &trace, &env);
            assert!(
                matches!(out.final_state, ControllerState::Executing { label: l, .. } if l == label),
                "object {} label {label}: {:?}",
                obj.id,
                out.final_state
            );
        }
    }
}
