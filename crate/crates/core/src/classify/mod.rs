//! Gesture classifier: a dense reference network and its spiking conversion.

mod dense;
mod model_file;
mod snn;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::{
    argmax, softmax, train_dense, train_dense_with_sizes, DenseLayer, DenseNet, FeatureNorm, TrainOptions,
    TrainedModel, DEFAULT_LAYER_SIZES, MIN_SAMPLES_PER_CLASS,
};
pub use model_file::{ModelFile, MODEL_VERSION};
pub use snn::{
    build_spiking, calibrate_thresholds, convert_to_snn, encode_rate, fold_input_rescale, percentile, EnergyReport,
    LifParams, SnnOutput, SpikeTrain, SpikingLayer, SpikingNetwork, DEFAULT_TIMESTEPS, THRESHOLD_PERCENTILE,
};

use crate::signal::{extract_features, EmgWindow, FeatureVector, GestureLabel};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("training loss became non-finite")]
    DivergedLoss,
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("spike train is {got:?} (steps, neurons), network expects {expected:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("no {0} model loaded")]
    ModelNotLoaded(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Spiking,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Dense => "dense",
            Backend::Spiking => "spiking",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: GestureLabel,
    pub confidence: f64,
    /// Scores on the logit scale, one per gesture.
    pub scores: Vec<f64>,
    pub latency_us: f64,
    pub energy: Option<EnergyReport>,
}

/// A trained classifier, optionally converted for the spiking backend.
#[derive(Debug, Clone, PartialEq)]
pub struct GesturePipeline {
    pub net: DenseNet,
    pub norm: FeatureNorm,
    pub snn: Option<SpikingNetwork>,
}

impl GesturePipeline {
    pub fn new(model: TrainedModel) -> Self {
        Self { net: model.net, norm: model.norm, snn: None }
    }

    /// Converts the dense net using `calib` and keeps the result.
    pub fn convert(&mut self, calib: &[FeatureVector], timesteps: usize) -> Result<&SpikingNetwork, ClassifyError> {
        self.snn = Some(convert_to_snn(&self.net, &self.norm, calib, timesteps)?);
        Ok(self.snn.as_ref().expect("just set"))
    }

    pub fn dense_logits(&self, x: &FeatureVector) -> Result<Vec<f64>, ClassifyError> {
        self.net.forward(&self.norm.standardize(x))
    }

    /// Output spike counts and the event accounting of one spiking inference.
    pub fn spiking_counts(&self, x: &FeatureVector) -> Result<SnnOutput, ClassifyError> {
        let snn = self.snn.as_ref().ok_or(ClassifyError::ModelNotLoaded("spiking"))?;
        snn.infer(&encode_rate(&self.norm.rescale_unit(x), snn.timesteps))
    }

    pub fn classify_features(&self, x: &FeatureVector, backend: Backend) -> Result<Classification, ClassifyError> {
        let started = Instant::now();
        let (scores, energy) = match backend {
            Backend::Dense => (self.dense_logits(x)?, None),
            Backend::Spiking => {
                let out = self.spiking_counts(x)?;
                let snn = self.snn.as_ref().expect("checked by spiking_counts");
                // rate decoding: count / T spikes of threshold-sized charge
                let theta = snn.layers.last().expect("validated").lif.threshold;
                let scale = theta / snn.timesteps as f64;
                (out.counts.iter().map(|c| *c as f64 * scale).collect(), Some(out.energy))
            }
        };
        let latency_us = started.elapsed().as_secs_f64() * 1e6;
        let winner = argmax(&scores);
        Ok(Classification {
            label: GestureLabel::ALL[winner],
            confidence: softmax(&scores)[winner],
            scores,
            latency_us,
            energy,
        })
    }

    pub fn classify_window(&self, window: &EmgWindow, backend: Backend) -> Result<Classification, ClassifyError> {
        self.classify_features(&extract_features(window), backend)
    }
}

/// `classify_window` over an optional pipeline.
pub fn classify_window(
    pipeline: Option<&GesturePipeline>,
    window: &EmgWindow,
    backend: Backend,
) -> Result<Classification, ClassifyError> {
    pipeline.ok_or(ClassifyError::ModelNotLoaded("trained"))?.classify_window(window, backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::FEATURE_DIM;

    fn zero_pipeline() -> GesturePipeline {
        GesturePipeline {
            net: DenseNet::zeros(&DEFAULT_LAYER_SIZES),
            norm: FeatureNorm::fit(&[FeatureVector::default()]),
            snn: None,
        }
    }

    #[test]
    fn uniform_logits_pick_lowest_label() {
        let p = zero_pipeline();
        let c = p.classify_features(&FeatureVector([0.3; FEATURE_DIM]), Backend::Dense).unwrap();
        assert_eq!(c.label, GestureLabel::Rest);
        assert!((c.confidence - 1.0 / 6.0).abs() < 1e-12);
        assert!(c.energy.is_none());
    }

    #[test]
    fn spiking_without_conversion_is_not_loaded() {
        let p = zero_pipeline();
        assert!(matches!(
            p.classify_features(&FeatureVector::default(), Backend::Spiking),
            Err(ClassifyError::ModelNotLoaded(_))
        ));
        let w = EmgWindow { start_us: 0, samples: vec![[0.0; 8]; 40] };
        assert!(matches!(classify_window(None, &w, Backend::Dense), Err(ClassifyError::ModelNotLoaded(_))));
    }

    #[test]
    fn spiking_backend_reports_energy() {
        let mut p = zero_pipeline();
        p.convert(&[FeatureVector::default()], 64).unwrap();
        let c = p.classify_features(&FeatureVector([1.0; FEATURE_DIM]), Backend::Spiking).unwrap();
        let e = c.energy.unwrap();
        assert_eq!(e.dense_macs, 6528);
        assert!(e.synaptic_events <= e.dense_macs * 64);
    }
}
