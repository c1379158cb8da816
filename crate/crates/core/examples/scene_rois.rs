//! A bottle is put down on the desk: render the frames before and after,
//! extract change ROIs around the gaze point, label them with the
//! ground-truth detector and estimate depth from disparity.

use neuromanip::harness::default_scene;
use neuromanip::scene::{depth_from_disparity, detect_objects, extract_rois, render_frame, RoiParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = default_scene();
    let cam = scene.camera;
    let bottle = scene.object(2).expect("bottle").aabb;
    let gaze = cam.project(bottle.center()).expect("in front of the camera");

    let without: Vec<_> = scene.objects.iter().filter(|o| o.id != 2).cloned().collect();
    let prev = render_frame(&cam, &without, 0, gaze);
    let cur = render_frame(&cam, &scene.objects, 33_000, gaze);

    let rois = extract_rois(&prev, &cur, &RoiParams::default())?;
    println!("{} ROI(s) near gaze ({:.0}, {:.0})", rois.len(), gaze.0, gaze.1);
    for d in detect_objects(&rois, Some(&scene))? {
        println!("  {:?} -> object {:?} ({:?}), confidence {:.2}", d.bbox_px, d.object_id, d.class_label, d.confidence);
    }

    let z = bottle.center().z;
    let disparity = cam.focal_px * cam.baseline_m / z;
    println!(
        "disparity {disparity:.1} px -> depth {:.3} m",
        depth_from_disparity(disparity, cam.focal_px, cam.baseline_m)?
    );
    Ok(())
}
