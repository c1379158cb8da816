use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::{DenseLayer, DenseNet, FeatureNorm};
use super::snn::{build_spiking, fold_input_rescale, DEFAULT_TIMESTEPS};
use super::{ClassifyError, GesturePipeline};
use crate::signal::FEATURE_DIM;

pub const MODEL_VERSION: &str = "nmv1";

/// On-disk form of a [`GesturePipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: String,
    pub layer_sizes: Vec<usize>,
    /// Row-major `[out][in]` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub normalization: FeatureNorm,
    /// Per-layer firing thresholds; absent until the model is converted.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    pub timesteps: usize,
    #[serde(default = "unit_decay")]
    pub decay: f64,
}

fn unit_decay() -> f64 {
    1.0
}

impl ModelFile {
    pub fn from_pipeline(p: &GesturePipeline) -> Self {
        Self {
            version: MODEL_VERSION.to_owned(),
            layer_sizes: p.net.layer_sizes(),
            weights: p.net.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: p.net.layers.iter().map(|l| l.bias.clone()).collect(),
            normalization: p.norm.clone(),
            thresholds: p.snn.as_ref().map(|s| s.thresholds()),
            timesteps: p.snn.as_ref().map_or(DEFAULT_TIMESTEPS, |s| s.timesteps),
            decay: p.snn.as_ref().and_then(|s| s.layers.first()).map_or(1.0, |l| l.lif.decay),
        }
    }

    pub fn into_pipeline(self) -> Result<GesturePipeline, ClassifyError> {
        if self.version != MODEL_VERSION {
            return Err(ClassifyError::InvalidModel(format!("version {:?}, expected {MODEL_VERSION:?}", self.version)));
        }
        if self.layer_sizes.len() < 2 {
            return Err(ClassifyError::InvalidModel("need at least two layer sizes".into()));
        }
        if self.layer_sizes[0] != FEATURE_DIM {
            return Err(ClassifyError::InvalidModel(format!("input width {} != {FEATURE_DIM}", self.layer_sizes[0])));
        }
        let n_layers = self.layer_sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(ClassifyError::InvalidModel("weights/biases do not match layer_sizes".into()));
        }
        let layers = self
            .layer_sizes
            .windows(2)
            .zip(self.weights.into_iter().zip(self.biases))
            .map(|(w, (weights, bias))| DenseLayer { inputs: w[0], outputs: w[1], weights, bias })
            .collect();
        let net = DenseNet { layers };
        net.validate()?;
        let norm = self.normalization;
        for (name, v) in [("mean", &norm.mean), ("std", &norm.std), ("min", &norm.min), ("max", &norm.max)] {
            if v.len() != FEATURE_DIM || v.iter().any(|x| !x.is_finite()) {
                return Err(ClassifyError::InvalidModel(format!(
                    "normalization.{name} must hold {FEATURE_DIM} finite values"
                )));
            }
        }
        let snn = match &self.thresholds {
            Some(t) => Some(build_spiking(&fold_input_rescale(&net, &norm), t, self.timesteps, self.decay)?),
            None => None,
        };
        Ok(GesturePipeline { net, norm, snn })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

impl GesturePipeline {
    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        ModelFile::from_pipeline(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        ModelFile::load(path)?.into_pipeline()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::DEFAULT_LAYER_SIZES;
    use crate::signal::FeatureVector;

    fn pipeline() -> GesturePipeline {
        let mut net = DenseNet::zeros(&DEFAULT_LAYER_SIZES);
        for (i, w) in net.layers[0].weights.iter_mut().enumerate() {
            *w = ((i % 7) as f64 - 3.0) * 0.1;
        }
        let samples: Vec<FeatureVector> = (0..4).map(|i| FeatureVector([i as f64; FEATURE_DIM])).collect();
        let mut p = GesturePipeline { net, norm: FeatureNorm::fit(&samples), snn: None };
        p.convert(&samples, 32).unwrap();
        p
    }

    #[test]
    fn file_preserves_pipeline() {
        let p = pipeline();
        let json = serde_json::to_string(&ModelFile::from_pipeline(&p)).unwrap();
        assert!(json.contains("\"version\":\"nmv1\""));
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_pipeline().unwrap(), p);
    }

    #[test]
    fn wrong_version_rejected() {
        let mut f = ModelFile::from_pipeline(&pipeline());
        f.version = "nmv0".into();
        assert!(matches!(f.into_pipeline(), Err(ClassifyError::InvalidModel(_))));
    }

    #[test]
    fn truncated_weights_rejected() {
        let mut f = ModelFile::from_pipeline(&pipeline());
        f.weights[1].pop();
        assert!(matches!(f.into_pipeline(), Err(ClassifyError::InvalidModel(_))));
    }
}
