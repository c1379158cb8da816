//! Candidate grasps for every object on the desk, and how restriction
//! overrides a wrong unrestricted decision.

use neuromanip::grasp::{context_to_grasps, restrict_classify, GraspLibrary};
use neuromanip::harness::default_scene;
use neuromanip::signal::GestureLabel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = default_scene();
    let lib = GraspLibrary::default_library();
    let map = lib.label_map();
    for obj in &scene.objects {
        let c = context_to_grasps(obj, &lib)?;
        let shown: Vec<String> = c
            .entries
            .iter()
            .map(|e| format!("{} {:.2}", lib.pattern(e.pattern_id).expect("from library").label, e.score))
            .collect();
        println!("{:>2} {:<12} {}", obj.id, obj.class_label.name(), shown.join(", "));
    }

    // OpenHand wins unrestricted, but the cup does not admit it.
    let logits = [0.1, 1.8, 0.2, 0.0, 2.1, 0.3];
    let cup = context_to_grasps(scene.object(1).expect("cup"), &lib)?;
    let (label, conf) = restrict_classify(&logits, &cup, &map)?;
    println!("unrestricted {}, restricted {label} ({conf:.2})", GestureLabel::OpenHand);
    Ok(())
}
