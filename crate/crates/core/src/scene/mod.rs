//! Synthetic 3-D scene and gaze front end.

mod detect;
mod fixation;
mod geometry;
mod io;
mod roi;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{detect_objects, iou, Detection, GroundTruthDetector, ObjectDetector, MIN_IOU};
pub use fixation::{detect_fixation, FixationDetector, FixationEvent, FixationParams, FixationUpdate};
pub use geometry::{Aabb, Camera, Vec3};
pub use io::{read_gaze_trace, write_gaze_trace};
pub use roi::{extract_rois, render_frame, Frame, Rect, Roi, RoiParams};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("gaze timestamps not strictly increasing at sample {index}")]
    NonMonotonicTimestamps { index: usize },
    #[error("disparity must be > 0 (got {0})")]
    NonPositiveDisparity(f64),
    #[error("frames differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("no scene loaded")]
    SceneNotLoaded,
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("gaze trace: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type ObjectId = u32;

/// Fixed object vocabulary of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Cup,
    Bottle,
    Smartphone,
    DoorHandle,
    Pen,
    Block,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 6] = [
        ObjectClass::Cup,
        ObjectClass::Bottle,
        ObjectClass::Smartphone,
        ObjectClass::DoorHandle,
        ObjectClass::Pen,
        ObjectClass::Block,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Cup => "cup",
            ObjectClass::Bottle => "bottle",
            ObjectClass::Smartphone => "smartphone",
            ObjectClass::DoorHandle => "door_handle",
            ObjectClass::Pen => "pen",
            ObjectClass::Block => "block",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown object class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: ObjectId,
    #[serde(rename = "class")]
    pub class_label: ObjectClass,
    pub aabb: Aabb,
    /// Parsed and kept; the default grasp scorer ignores orientation.
    #[serde(default)]
    pub yaw: f64,
    pub grasp_size_m: f64,
}

impl SceneObject {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !self.aabb.is_valid() {
            return Err(SceneError::Invalid(format!("object {}: aabb min must be < max on every axis", self.id)));
        }
        if !(self.grasp_size_m > 0.0) || self.grasp_size_m > self.aabb.diagonal() {
            return Err(SceneError::Invalid(format!(
                "object {}: grasp_size_m must be in (0, box diagonal {:.3}]",
                self.id,
                self.aabb.diagonal()
            )));
        }
        Ok(())
    }
}

/// Objects on the table plus the head-mounted camera that sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub camera: Camera,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids: Vec<ObjectId> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SceneError::Invalid("object ids must be unique".into()));
        }
        for o in &self.objects {
            o.validate()?;
        }
        let c = &self.camera;
        if !(c.focal_px > 0.0 && c.baseline_m > 0.0 && c.width > 0 && c.height > 0) {
            return Err(SceneError::Invalid("camera parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Pixel rectangle covering the projection of an object's box.
    pub fn projected_bbox(&self, object: &SceneObject) -> Option<Rect> {
        self.camera.project_aabb(&object.aabb)
    }

    /// Gaze sample whose ray passes through `(u, v)` from the camera origin.
    pub fn gaze_at_pixel(&self, timestamp_us: i64, u: f64, v: f64) -> GazeSample {
        GazeSample { timestamp_us, origin: Vec3::default(), dir: self.camera.pixel_ray(u, v) }
    }
}

/// A gaze ray in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub timestamp_us: i64,
    pub origin: Vec3,
    pub dir: Vec3,
}

impl GazeSample {
    /// Normalizes `dir` unless it is already unit length; panics on a zero vector.
    pub fn new(timestamp_us: i64, origin: Vec3, dir: Vec3) -> Self {
        let n = dir.norm();
        assert!(n > 0.0, "gaze direction must be non-zero");
        let dir = if (n - 1.0).abs() <= 1e-12 { dir } else { dir * (1.0 / n) };
        Self { timestamp_us, origin, dir }
    }

    pub fn toward(timestamp_us: i64, origin: Vec3, target: Vec3) -> Self {
        Self::new(timestamp_us, origin, target - origin)
    }
}

/// Nearest object hit by the gaze ray; equal entry distances (within 1e-9)
/// resolve to the smaller id.
pub fn gaze_object_intersection(ray: &GazeSample, objects: &[SceneObject]) -> Option<ObjectId> {
    let mut best: Option<(f64, ObjectId)> = None;
    for o in objects {
        let Some(t) = o.aabb.ray_entry(ray.origin, ray.dir) else { continue };
        best = match best {
            None => Some((t, o.id)),
            Some((bt, bid)) if (t - bt).abs() < 1e-9 => Some((bt.min(t), bid.min(o.id))),
            Some((bt, _)) if t < bt => Some((t, o.id)),
            keep => keep,
        };
    }
    best.map(|(_, id)| id)
}

/// Stereo triangulation `z = f B / d`.
pub fn depth_from_disparity(disparity_px: f64, focal_px: f64, baseline_m: f64) -> Result<f64, SceneError> {
    if !(disparity_px > 0.0) {
        return Err(SceneError::NonPositiveDisparity(disparity_px));
    }
    Ok(focal_px * baseline_m / disparity_px)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(id: ObjectId, z0: f64) -> SceneObject {
        SceneObject {
            id,
            class_label: ObjectClass::Block,
            aabb: Aabb { min: Vec3::new(-0.5, -0.5, z0), max: Vec3::new(0.5, 0.5, z0 + 1.0) },
            yaw: 0.0,
            grasp_size_m: 0.5,
        }
    }

    fn forward_ray() -> GazeSample {
        GazeSample::new(0, Vec3::default(), Vec3::new(0.0, 0.0, 1.0))
    }

    #[test]
    fn intersection_basics() {
        assert_eq!(gaze_object_intersection(&forward_ray(), &[]), None);
        assert_eq!(gaze_object_intersection(&forward_ray(), &[unit_box(4, 1.0)]), Some(4));
        assert_eq!(gaze_object_intersection(&forward_ray(), &[unit_box(2, 3.0), unit_box(9, 1.0)]), Some(9));
    }

    #[test]
    fn coincident_boxes_resolve_to_smaller_id() {
        let objects = [unit_box(7, 1.0), unit_box(3, 1.0)];
        assert_eq!(gaze_object_intersection(&forward_ray(), &objects), Some(3));
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth_from_disparity(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((depth_from_disparity(42.0, 700.0, 0.06).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(depth_from_disparity(0.0, 700.0, 0.06), Err(SceneError::NonPositiveDisparity(_))));
    }

    #[test]
    fn scene_validation() {
        let cam = Camera { focal_px: 500.0, baseline_m: 0.06, width: 640, height: 480 };
        let mut scene = Scene { objects: vec![unit_box(1, 1.0), unit_box(2, 3.0)], camera: cam };
        assert!(scene.validate().is_ok());
        scene.objects[1].id = 1;
        assert!(scene.validate().is_err());
        scene.objects[1].id = 2;
        scene.objects[1].grasp_size_m = 5.0;
        assert!(scene.validate().is_err());
    }
}
