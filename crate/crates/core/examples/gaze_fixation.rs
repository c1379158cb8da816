//! Scripted gaze over the desk scene: dwell on the cup, saccade, dwell on the pen.

use neuromanip::harness::default_scene;
use neuromanip::scene::{detect_fixation, gaze_object_intersection, FixationParams, GazeSample, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = default_scene();
    let cup = scene.object(1).expect("cup").aabb.center();
    let pen = scene.object(5).expect("pen").aabb.center();
    let samples: Vec<GazeSample> = (0..400)
        .map(|i| {
            let t = i as i64 * 5_000;
            let target = match i {
                0..=159 => cup,
                160..=179 => cup + (pen - cup) * ((i - 160) as f64 / 20.0),
                _ => pen,
            };
            GazeSample::toward(t, Vec3::default(), target)
        })
        .collect();
    println!("ray at t=0 hits {:?}", gaze_object_intersection(&samples[0], &scene.objects));
    for ev in detect_fixation(&samples, &scene.objects, FixationParams::default())? {
        println!("fixation on {:?} from {} us for {:.0} ms", ev.object_id, ev.onset_us, ev.dwell_ms);
    }
    Ok(())
}
