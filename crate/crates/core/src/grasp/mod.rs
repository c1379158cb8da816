//! Grasp library and the context-to-grasp mapper.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::softmax;
use crate::scene::{ObjectClass, ObjectId, SceneObject};
use crate::signal::GestureLabel;

pub const ACTUATORS: usize = 6;
pub const DEFAULT_K_MAX: usize = 3;

const DEFAULT_LIBRARY_JSON: &str = include_str!("../../data/grasp_library.json");

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("no grasp pattern applies to {0}")]
    NoApplicableGrasp(ObjectClass),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("invalid grasp library: {0}")]
    InvalidLibrary(String),
    #[error("expected {expected} logits, got {got}")]
    LogitCount { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("grasp library JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type PatternId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspPattern {
    pub id: PatternId,
    /// A gesture name for the six mapped patterns, free text for extras.
    pub label: String,
    /// Per-actuator closure; actuator 6 is thumb abduction.
    pub setpoints: [f64; ACTUATORS],
    pub classes: BTreeSet<ObjectClass>,
    pub size_range: [f64; 2],
    pub prior: f64,
}

impl GraspPattern {
    pub fn gesture(&self) -> Option<GestureLabel> {
        GestureLabel::ALL.into_iter().find(|g| g.name() == self.label)
    }

    /// Triangular kernel peaking at the range midpoint, 0 outside the range.
    pub fn fit(&self, size_m: f64) -> f64 {
        let [lo, hi] = self.size_range;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        (1.0 - (size_m - mid).abs() / half).max(0.0)
    }

    pub fn raw_score(&self, object: &SceneObject) -> f64 {
        if self.classes.contains(&object.class_label) {
            self.prior * self.fit(object.grasp_size_m)
        } else {
            0.0
        }
    }
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraspLibrary {
    pub k_max: usize,
    pub patterns: Vec<GraspPattern>,
}

impl GraspLibrary {
    pub fn new(patterns: Vec<GraspPattern>, k_max: usize) -> Result<Self, GraspError> {
        let lib = Self { k_max, patterns };
        lib.validate()?;
        Ok(lib)
    }

    /// The bundled eight-pattern library.
    pub fn default_library() -> Self {
        Self::from_json(DEFAULT_LIBRARY_JSON).expect("bundled library is valid")
    }

    /// Accepts `{"k_max": .., "patterns": [..]}` or a bare pattern list.
    pub fn from_json(s: &str) -> Result<Self, GraspError> {
        if s.trim_start().starts_with('[') {
            Self::new(serde_json::from_str(s)?, DEFAULT_K_MAX)
        } else {
            let f: FullFile = serde_json::from_str(s)?;
            Self::new(f.patterns, f.k_max)
        }
    }

    pub fn load(path: &Path) -> Result<Self, GraspError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn with_k_max(mut self, k_max: usize) -> Result<Self, GraspError> {
        self.k_max = k_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GraspError> {
        let bad = |msg: String| Err(GraspError::InvalidLibrary(msg));
        if self.patterns.len() < GestureLabel::COUNT {
            return bad(format!("need at least {} patterns, got {}", GestureLabel::COUNT, self.patterns.len()));
        }
        if self.k_max == 0 {
            return bad("k_max must be >= 1".into());
        }
        let mut ids = BTreeSet::new();
        let mut mapped = [0usize; GestureLabel::COUNT];
        for (i, p) in self.patterns.iter().enumerate() {
            if !ids.insert(p.id) {
                return bad(format!("patterns[{i}].id: duplicate id {}", p.id));
            }
            if let Some(j) = p.setpoints.iter().position(|s| !(0.0..=1.0).contains(s)) {
                return bad(format!("patterns[{i}].setpoints[{j}]: {} outside [0, 1]", p.setpoints[j]));
            }
            let [lo, hi] = p.size_range;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("patterns[{i}].size_range: need lo < hi, got [{lo}, {hi}]"));
            }
            if !(p.prior > 0.0 && p.prior <= 1.0) {
                return bad(format!("patterns[{i}].prior: {} outside (0, 1]", p.prior));
            }
            if let Some(g) = p.gesture() {
                mapped[g.index()] += 1;
            }
        }
        for g in GestureLabel::ALL {
            match mapped[g.index()] {
                1 => {}
                0 => return bad(format!("no pattern labeled {g}")),
                n => return bad(format!("{n} patterns labeled {g}")),
            }
        }
        Ok(())
    }

    pub fn pattern(&self, id: PatternId) -> Option<&GraspPattern> {
        self.patterns.iter().find(|p| p.id == id)
    }

    pub fn pattern_for(&self, label: GestureLabel) -> &GraspPattern {
        self.patterns.iter().find(|p| p.gesture() == Some(label)).expect("validated: every gesture is mapped")
    }

    pub fn setpoints(&self, label: GestureLabel) -> [f64; ACTUATORS] {
        self.pattern_for(label).setpoints
    }

    pub fn label_map(&self) -> LabelMap {
        LabelMap(self.patterns.iter().map(|p| (p.id, p.gesture())).collect())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullFile {
    #[serde(default = "default_k_max")]
    k_max: usize,
    patterns: Vec<GraspPattern>,
}

/// Pattern id to gesture; extras map to `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap(pub Vec<(PatternId, Option<GestureLabel>)>);

impl LabelMap {
    pub fn get(&self, id: PatternId) -> Option<GestureLabel> {
        self.0.iter().find(|(p, _)| *p == id).and_then(|(_, g)| *g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pattern_id: PatternId,
    pub score: f64,
}

/// Top-k scored patterns for one object, scores descending and summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
    pub source_object: ObjectId,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_pattern(&self, id: PatternId) -> bool {
        self.entries.iter().any(|c| c.pattern_id == id)
    }

    /// Gestures reachable through this set, in candidate order.
    pub fn labels(&self, map: &LabelMap) -> Vec<GestureLabel> {
        self.entries.iter().filter_map(|c| map.get(c.pattern_id)).collect()
    }

    pub fn admits(&self, label: GestureLabel, map: &LabelMap) -> bool {
        self.entries.iter().any(|c| map.get(c.pattern_id) == Some(label))
    }
}

/// Scores every applicable pattern as `prior · fit(size)` and keeps the top `k_max`.
pub fn context_to_grasps(object: &SceneObject, lib: &GraspLibrary) -> Result<CandidateSet, GraspError> {
    let mut scored: Vec<(f64, PatternId)> =
        lib.patterns.iter().map(|p| (p.raw_score(object), p.id)).filter(|(s, _)| *s > 0.0).collect();
    if scored.is_empty() {
        return Err(GraspError::NoApplicableGrasp(object.class_label));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(lib.k_max);
    let total: f64 = scored.iter().map(|(s, _)| s).sum();
    Ok(CandidateSet {
        entries: scored.into_iter().map(|(s, id)| Candidate { pattern_id: id, score: s / total }).collect(),
        source_object: object.id,
    })
}

/// Masked argmax over the candidate gestures; confidence is the softmax over
/// surviving logits. Unmapped candidates are skipped.
pub fn restrict_classify(
    logits: &[f64],
    candidates: &CandidateSet,
    map: &LabelMap,
) -> Result<(GestureLabel, f64), GraspError> {
    if logits.len() != GestureLabel::COUNT {
        return Err(GraspError::LogitCount { expected: GestureLabel::COUNT, got: logits.len() });
    }
    let mut allowed: Vec<GestureLabel> = candidates.labels(map);
    allowed.sort();
    allowed.dedup();
    if allowed.is_empty() {
        return Err(GraspError::EmptyCandidates);
    }
    let surviving: Vec<f64> = allowed.iter().map(|g| logits[g.index()]).collect();
    let probs = softmax(&surviving);
    let mut best = 0;
    for i in 1..allowed.len() {
        if surviving[i] > surviving[best] {
            best = i;
        }
    }
    Ok((allowed[best], probs[best]))
}

/// Next highlighted index, wrapping.
pub fn cycle_alternative(candidates: &CandidateSet, current_index: usize) -> Result<usize, GraspError> {
    if candidates.is_empty() {
        return Err(GraspError::EmptyCandidates);
    }
    Ok((current_index + 1) % candidates.len())
}
