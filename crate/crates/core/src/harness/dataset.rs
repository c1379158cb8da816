use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{HarnessError, RunConfig};
use crate::grasp::{context_to_grasps, GraspLibrary};
use crate::scene::{gaze_object_intersection, GazeSample, ObjectId, Scene, Vec3};
use crate::signal::{
    design_filter_chain, extract_features, read_manifest, read_recording, synth_emg, window_stream, write_manifest,
    write_recording, DatasetManifest, EmgFrame, EmgWindow, FeatureVector, GestureLabel, ManifestEntry, SynthEmgModel,
    WindowConfig, SAMPLE_RATE_HZ,
};

/// Frames dropped from the start of every filtered recording while the
/// filter settles.
pub const SETTLE_FRAMES: usize = 200;
/// Length of the recording behind each evaluation window.
pub const EVAL_RECORDING_MS: u64 = 1000;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const TAG_TRAIN: u64 = 1;
pub const TAG_EVAL: u64 = 2;
pub const TAG_CALIBRATION: u64 = 3;
const TAG_OBJECT: u64 = 0x0b1e;

/// Mixes `(base, tag, index)` into an independent 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn synth_model(cfg: &RunConfig, noise_sigma: f64) -> SynthEmgModel {
    SynthEmgModel { noise_sigma, mains_amp: cfg.mains_amp, ..SynthEmgModel::default() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub gesture: GestureLabel,
    pub frames: Vec<EmgFrame>,
}

/// Training recordings, `recordings_per_gesture` per class with noise spread
/// evenly over `[0, train_sigma_max]`.
pub fn generate_training_recordings(cfg: &RunConfig) -> Result<Vec<Recording>, HarnessError> {
    let per = cfg.dataset.recordings_per_gesture;
    (0..per * GestureLabel::COUNT)
        .into_par_iter()
        .map(|i| {
            let gesture = GestureLabel::ALL[i % GestureLabel::COUNT];
            let level = i / GestureLabel::COUNT;
            let sigma = if per > 1 { cfg.dataset.train_sigma_max * level as f64 / (per - 1) as f64 } else { 0.0 };
            let model = synth_model(cfg, sigma).with_seed(derive_seed(cfg.seed, TAG_TRAIN, i as u64));
            Ok(Recording { gesture, frames: synth_emg(&model, gesture, cfg.dataset.recording_ms)? })
        })
        .collect()
}

/// Filtered, settled, strided windows of one raw recording.
pub fn recording_features(frames: &[EmgFrame]) -> Result<Vec<FeatureVector>, HarnessError> {
    let mut chain = design_filter_chain(SAMPLE_RATE_HZ)?;
    let filtered = chain.filter_stream(frames)?;
    let settled = filtered.get(SETTLE_FRAMES..).unwrap_or(&[]);
    Ok(window_stream(settled, WindowConfig::default())?.iter().map(extract_features).collect())
}

pub fn training_set(recordings: &[Recording]) -> Result<Vec<(FeatureVector, GestureLabel)>, HarnessError> {
    let per: Vec<Vec<(FeatureVector, GestureLabel)>> = recordings
        .par_iter()
        .map(|r| Ok(recording_features(&r.frames)?.into_iter().map(|f| (f, r.gesture)).collect()))
        .collect::<Result<_, HarnessError>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Writes one CSV per recording plus `manifest.json`.
pub fn write_dataset(dir: &Path, recordings: &[Recording]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(recordings.len());
    for (i, r) in recordings.iter().enumerate() {
        let file = format!("rec_{i:04}_{}.csv", r.gesture.code());
        write_recording(BufWriter::new(File::create(dir.join(&file))?), &r.frames)?;
        entries.push(ManifestEntry { file, gesture: r.gesture.code() });
    }
    write_manifest(&dir.join(MANIFEST_FILE), &DatasetManifest { entries })?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Recording>, HarnessError> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let frames = read_recording(BufReader::new(File::open(dir.join(&e.file))?))?;
            let gesture = GestureLabel::from_code(e.gesture).expect("validated by read_manifest");
            Ok(Recording { gesture, frames })
        })
        .collect()
}

/// Last window of a freshly synthesized, filtered one-second recording.
pub fn eval_window(model: &SynthEmgModel, gesture: GestureLabel) -> Result<EmgWindow, HarnessError> {
    let frames = synth_emg(model, gesture, EVAL_RECORDING_MS)?;
    let mut chain = design_filter_chain(SAMPLE_RATE_HZ)?;
    let filtered = chain.filter_stream(&frames)?;
    let len = WindowConfig::default().length;
    Ok(EmgWindow::from_frames(&filtered[filtered.len() - len..]))
}

/// One labeled evaluation case: an EMG window and the gaze context it was recorded in.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub gesture: GestureLabel,
    pub object_id: ObjectId,
    pub gaze: GazeSample,
    pub window: EmgWindow,
    pub features: FeatureVector,
}

/// Objects whose candidate set admits each gesture and whose center is
/// visible along a straight gaze ray from the camera.
pub fn gesture_targets(scene: &Scene, lib: &GraspLibrary) -> Vec<Vec<ObjectId>> {
    let map = lib.label_map();
    GestureLabel::ALL
        .iter()
        .map(|&g| {
            scene
                .objects
                .iter()
                .filter(|o| context_to_grasps(o, lib).is_ok_and(|c| c.admits(g, &map)))
                .filter(|o| {
                    let ray = GazeSample::toward(0, Vec3::default(), o.aabb.center());
                    gaze_object_intersection(&ray, &scene.objects) == Some(o.id)
                })
                .map(|o| o.id)
                .collect()
        })
        .collect()
}

/// Balanced evaluation samples at one noise level. The EMG seed of sample `i`
/// depends only on `(seed, tag, i)`, so sweeps over sigma share their noise draws.
pub fn generate_eval_samples(
    cfg: &RunConfig,
    scene: &Scene,
    lib: &GraspLibrary,
    noise_sigma: f64,
    tag: u64,
    n: usize,
) -> Result<Vec<EvalSample>, HarnessError> {
    let targets = gesture_targets(scene, lib);
    if let Some(g) = GestureLabel::ALL.iter().find(|g| targets[g.index()].is_empty()) {
        return Err(HarnessError::Config(format!("no object in the scene admits {g} among its candidates")));
    }
    let base = synth_model(cfg, noise_sigma);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let gesture = GestureLabel::ALL[i % GestureLabel::COUNT];
            let choices = &targets[gesture.index()];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag ^ TAG_OBJECT, i as u64));
            let object_id = choices[rng.random_range(0..choices.len())];
            let center = scene.object(object_id).expect("target ids come from the scene").aabb.center();
            let window = eval_window(&base.with_seed(derive_seed(cfg.seed, tag, i as u64)), gesture)?;
            Ok(EvalSample {
                gesture,
                object_id,
                gaze: GazeSample::toward(i as i64, Vec3::default(), center),
                features: extract_features(&window),
                window,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::default_scene;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.recordings_per_gesture = 2;
        cfg.dataset.recording_ms = 1500;
        cfg
    }

    #[test]
    fn seeds_differ_by_every_argument() {
        let s = derive_seed(1, 2, 3);
        assert_ne!(s, derive_seed(0, 2, 3));
        assert_ne!(s, derive_seed(1, 3, 3));
        assert_ne!(s, derive_seed(1, 2, 4));
        assert_eq!(s, derive_seed(1, 2, 3));
    }

    #[test]
    fn training_windows_per_recording() {
        let recs = generate_training_recordings(&small()).unwrap();
        assert_eq!(recs.len(), 12);
        // 300 frames, 200 settle, (100 - 40) / 10 + 1 windows
        assert_eq!(recording_features(&recs[0].frames).unwrap().len(), 7);
        assert_eq!(training_set(&recs).unwrap().len(), 84);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = generate_training_recordings(&small()).unwrap();
        write_dataset(dir.path(), &recs).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), recs.len());
        assert_eq!(back[3].gesture, recs[3].gesture);
        assert_eq!(back[3].frames.len(), recs[3].frames.len());
        assert!((back[3].frames[17].channels[2] - recs[3].frames[17].channels[2]).abs() < 1e-12);
    }

    #[test]
    fn every_gesture_has_a_target_in_the_default_scene() {
        let targets = gesture_targets(&default_scene(), &GraspLibrary::default_library());
        assert!(targets.iter().all(|t| !t.is_empty()), "{targets:?}");
    }

    #[test]
    fn eval_samples_are_context_consistent() {
        let scene = default_scene();
        let lib = GraspLibrary::default_library();
        let cfg = small();
        let samples = generate_eval_samples(&cfg, &scene, &lib, 0.3, TAG_EVAL, 24).unwrap();
        let map = lib.label_map();
        for s in &samples {
            assert_eq!(gaze_object_intersection(&s.gaze, &scene.objects), Some(s.object_id));
            let c = context_to_grasps(scene.object(s.object_id).unwrap(), &lib).unwrap();
            assert!(c.admits(s.gesture, &map));
        }
        assert_eq!(samples, generate_eval_samples(&cfg, &scene, &lib, 0.3, TAG_EVAL, 24).unwrap());
    }
}
