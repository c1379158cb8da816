use serde::{Deserialize, Serialize};

use super::{ObjectClass, ObjectId, Rect, Roi, Scene, SceneError};

/// Minimum intersection-over-union for a ground-truth match.
pub const MIN_IOU: f64 = 0.3;

/// `object_id` and `class_label` are `None` for background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: Option<ObjectId>,
    pub class_label: Option<ObjectClass>,
    pub bbox_px: Rect,
    pub confidence: f64,
}

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pluggable detector interface.
pub trait ObjectDetector {
    fn detect(&self, rois: &[Roi]) -> Result<Vec<Detection>, SceneError>;
}

/// Detector that reads the scene ground truth.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthDetector {
    pub scene: Option<Scene>,
}

impl GroundTruthDetector {
    pub fn new(scene: Scene) -> Self {
        Self { scene: Some(scene) }
    }
}

impl ObjectDetector for GroundTruthDetector {
    fn detect(&self, rois: &[Roi]) -> Result<Vec<Detection>, SceneError> {
        detect_objects(rois, self.scene.as_ref())
    }
}

/// Best-IoU ground-truth object per ROI; ties go to the smaller id.
pub fn detect_objects(rois: &[Roi], scene: Option<&Scene>) -> Result<Vec<Detection>, SceneError> {
    let scene = scene.ok_or(SceneError::SceneNotLoaded)?;
    let boxes: Vec<_> = scene.objects.iter().filter_map(|o| scene.projected_bbox(o).map(|b| (o, b))).collect();
    Ok(rois
        .iter()
        .map(|roi| {
            let best = boxes
                .iter()
                .map(|(o, b)| (iou(&roi.rect, b), o, b))
                .filter(|(v, _, _)| *v >= MIN_IOU)
                .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.id.cmp(&x.1.id)));
            match best {
                Some((v, o, b)) => {
                    Detection { object_id: Some(o.id), class_label: Some(o.class_label), bbox_px: *b, confidence: v }
                }
                None => Detection { object_id: None, class_label: None, bbox_px: roi.rect, confidence: 0.0 },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Aabb, Camera, SceneObject, Vec3};

    fn scene() -> Scene {
        Scene {
            objects: vec![SceneObject {
                id: 1,
                class_label: ObjectClass::Cup,
                aabb: Aabb { min: Vec3::new(-0.1, -0.1, 1.0), max: Vec3::new(0.1, 0.1, 1.2) },
                yaw: 0.0,
                grasp_size_m: 0.08,
            }],
            camera: Camera { focal_px: 500.0, baseline_m: 0.06, width: 640, height: 480 },
        }
    }

    fn roi(rect: Rect) -> Roi {
        Roi { rect, crop: vec![0.0; rect.area() as usize] }
    }

    #[test]
    fn exact_bbox_matches_with_full_confidence() {
        let s = scene();
        let b = s.projected_bbox(&s.objects[0]).unwrap();
        assert_eq!(b, Rect { x: 270, y: 190, w: 100, h: 100 });
        let d = detect_objects(&[roi(b)], Some(&s)).unwrap();
        assert_eq!(d[0].object_id, Some(1));
        assert_eq!(d[0].class_label, Some(ObjectClass::Cup));
        assert_eq!(d[0].confidence, 1.0);
    }

    #[test]
    fn half_overlap_and_disjoint() {
        let s = scene();
        let d = detect_objects(
            &[roi(Rect { x: 270, y: 190, w: 200, h: 100 }), roi(Rect { x: 0, y: 0, w: 50, h: 50 })],
            Some(&s),
        )
        .unwrap();
        assert_eq!(d[0].confidence, 0.5);
        assert_eq!(d[1].object_id, None);
        assert_eq!(d[1].confidence, 0.0);
    }

    #[test]
    fn no_scene() {
        assert!(matches!(GroundTruthDetector::default().detect(&[]), Err(SceneError::SceneNotLoaded)));
    }
}
