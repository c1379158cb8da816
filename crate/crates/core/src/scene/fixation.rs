use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{gaze_object_intersection, GazeSample, ObjectId, SceneError, SceneObject, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixationParams {
    /// Half-angle of the cone around the mean direction.
    pub dispersion_deg: f64,
    pub dwell_ms: f64,
}

impl Default for FixationParams {
    fn default() -> Self {
        Self { dispersion_deg: 1.5, dwell_ms: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub object_id: Option<ObjectId>,
    pub onset_us: i64,
    pub dwell_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixationUpdate {
    /// The dwell criterion was just met.
    Onset { object_id: Option<ObjectId>, onset_us: i64 },
    /// The open fixation ended.
    Closed(FixationEvent),
}

/// Streaming dispersion-threshold detector.
#[derive(Debug, Clone)]
pub struct FixationDetector {
    params: FixationParams,
    objects: Vec<SceneObject>,
    window: VecDeque<GazeSample>,
    open: Option<Option<ObjectId>>,
    last_us: Option<i64>,
    index: usize,
}

fn mean_ray(samples: &VecDeque<GazeSample>) -> (Vec3, Vec3) {
    let n = samples.len() as f64;
    let (o, d) = samples.iter().fold((Vec3::default(), Vec3::default()), |(o, d), s| (o + s.origin, d + s.dir));
    (o * (1.0 / n), d * (1.0 / n))
}

fn within_cone(samples: &VecDeque<GazeSample>, half_angle_deg: f64) -> bool {
    let (_, mean) = mean_ray(samples);
    if mean.norm() < 1e-12 {
        return false;
    }
    samples.iter().all(|s| s.dir.angle_deg(mean) <= half_angle_deg)
}

fn span_ms(samples: &VecDeque<GazeSample>) -> f64 {
    match (samples.front(), samples.back()) {
        (Some(a), Some(b)) => (b.timestamp_us - a.timestamp_us) as f64 / 1000.0,
        _ => 0.0,
    }
}

impl FixationDetector {
    pub fn new(params: FixationParams, objects: Vec<SceneObject>) -> Self {
        Self { params, objects, window: VecDeque::new(), open: None, last_us: None, index: 0 }
    }

    pub fn params(&self) -> FixationParams {
        self.params
    }

    pub fn is_fixating(&self) -> bool {
        self.open.is_some()
    }

    /// Object of the open fixation, if one is open.
    pub fn current(&self) -> Option<Option<ObjectId>> {
        self.open
    }

    fn target(&self) -> Option<ObjectId> {
        let (origin, dir) = mean_ray(&self.window);
        if dir.norm() < 1e-12 {
            return None;
        }
        let ray = GazeSample { timestamp_us: 0, origin, dir: dir.normalized() };
        gaze_object_intersection(&ray, &self.objects)
    }

    fn close(&mut self) -> Option<FixationEvent> {
        let object_id = self.open.take()?;
        let onset_us = self.window.front()?.timestamp_us;
        Some(FixationEvent { object_id, onset_us, dwell_ms: span_ms(&self.window) })
    }

    pub fn push(&mut self, s: GazeSample) -> Result<Vec<FixationUpdate>, SceneError> {
        if self.last_us.is_some_and(|t| s.timestamp_us <= t) {
            return Err(SceneError::NonMonotonicTimestamps { index: self.index });
        }
        self.last_us = Some(s.timestamp_us);
        self.index += 1;
        let mut out = Vec::new();

        self.window.push_back(s);
        if self.open.is_some() {
            if within_cone(&self.window, self.params.dispersion_deg) {
                return Ok(out);
            }
            self.window.pop_back();
            if let Some(ev) = self.close() {
                out.push(FixationUpdate::Closed(ev));
            }
            self.window.clear();
            self.window.push_back(s);
        }

        while self.window.len() > 1 && !within_cone(&self.window, self.params.dispersion_deg) {
            self.window.pop_front();
        }
        if span_ms(&self.window) >= self.params.dwell_ms && within_cone(&self.window, self.params.dispersion_deg) {
            let object_id = self.target();
            self.open = Some(object_id);
            let onset_us = self.window.front().expect("nonempty").timestamp_us;
            out.push(FixationUpdate::Onset { object_id, onset_us });
        }
        Ok(out)
    }

    /// Closes any open fixation at end of stream.
    pub fn finish(&mut self) -> Option<FixationEvent> {
        let ev = self.close();
        self.window.clear();
        ev
    }
}

/// Batch detection: one event per fixation, emitted at close or stream end.
pub fn detect_fixation(
    samples: &[GazeSample],
    objects: &[SceneObject],
    params: FixationParams,
) -> Result<Vec<FixationEvent>, SceneError> {
    let mut det = FixationDetector::new(params, objects.to_vec());
    let mut events = Vec::new();
    for s in samples {
        for u in det.push(*s)? {
            if let FixationUpdate::Closed(ev) = u {
                events.push(ev);
            }
        }
    }
    events.extend(det.finish());
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_deg(yaw: f64) -> Vec3 {
        let r = yaw.to_radians();
        Vec3::new(r.sin(), 0.0, r.cos())
    }

    fn stream(n: usize, period_us: i64, f: impl Fn(usize) -> Vec3) -> Vec<GazeSample> {
        (0..n).map(|i| GazeSample::new(i as i64 * period_us, Vec3::default(), f(i))).collect()
    }

    #[test]
    fn steady_gaze_is_one_fixation() {
        let s = stream(1001, 1000, |_| dir_deg(0.0));
        let ev = detect_fixation(&s, &[], FixationParams::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].onset_us, 0);
        assert!((ev[0].dwell_ms - 1000.0).abs() < 1e-9);
        assert_eq!(ev[0].object_id, None);
    }

    #[test]
    fn saccades_never_fixate() {
        let s = stream(1000, 1000, |i| dir_deg(if (i / 100) % 2 == 0 { 0.0 } else { 10.0 }));
        assert!(detect_fixation(&s, &[], FixationParams::default()).unwrap().is_empty());
    }

    #[test]
    fn two_fixations_split_by_a_jump() {
        let s = stream(1000, 1000, |i| dir_deg(if i < 500 { 0.0 } else { 8.0 }));
        let ev = detect_fixation(&s, &[], FixationParams::default()).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[1].onset_us, 500_000);
        assert!(ev.iter().all(|e| e.dwell_ms >= 300.0));
    }

    #[test]
    fn short_dwell_is_not_a_fixation() {
        let s = stream(250, 1000, |_| dir_deg(0.0));
        assert!(detect_fixation(&s, &[], FixationParams::default()).unwrap().is_empty());
    }

    #[test]
    fn out_of_order_rejected() {
        let mut s = stream(10, 1000, |_| dir_deg(0.0));
        s[5].timestamp_us = s[4].timestamp_us;
        assert!(matches!(
            detect_fixation(&s, &[], FixationParams::default()),
            Err(SceneError::NonMonotonicTimestamps { index: 5 })
        ));
    }

    #[test]
    fn onset_reported_once_dwell_is_met() {
        let mut det = FixationDetector::new(FixationParams::default(), vec![]);
        let mut onset_at = None;
        for (i, s) in stream(400, 1000, |_| dir_deg(0.0)).into_iter().enumerate() {
            for u in det.push(s).unwrap() {
                assert!(matches!(u, FixationUpdate::Onset { onset_us: 0, .. }));
                assert!(onset_at.replace(i).is_none());
            }
        }
        assert_eq!(onset_at, Some(300));
        assert!(det.is_fixating());
    }
}
