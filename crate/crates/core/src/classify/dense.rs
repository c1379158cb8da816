use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::signal::{FeatureVector, GestureLabel, FEATURE_DIM};

/// Layer widths of the reference classifier.
pub const DEFAULT_LAYER_SIZES: [usize; 4] = [FEATURE_DIM, 64, 64, GestureLabel::COUNT];
/// Minimum number of training samples for every class that appears.
pub const MIN_SAMPLES_PER_CLASS: usize = 60;

/// Fully connected layer, `weights` row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }
}

/// Rectifier MLP producing raw logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect() }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.first().map(|l| vec![l.inputs]).unwrap_or_default();
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Multiply-accumulates of one forward pass.
    pub fn macs(&self) -> u64 {
        self.layers.iter().map(|l| (l.inputs * l.outputs) as u64).sum()
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.layers.is_empty() {
            return Err(ClassifyError::InvalidModel("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ClassifyError::InvalidModel(format!("layer {i}: array sizes do not match shape")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(ClassifyError::InvalidModel(format!("layer {i}: non-finite parameter")));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(ClassifyError::InvalidModel(format!("layer {} output does not feed layer {}", i, i + 1)));
            }
        }
        Ok(())
    }

    /// Logits for an already standardized input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        Ok(self.forward_trace(x)?.pop().unwrap_or_default())
    }

    /// Pre-activations of every layer (hidden layers before the rectifier).
    pub fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ClassifyError> {
        if x.len() != self.input_dim() {
            return Err(ClassifyError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&act, &mut z);
            act = if i < last { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            trace.push(z);
        }
        Ok(trace)
    }
}

/// Per-feature statistics captured from the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureNorm {
    pub fn fit(samples: &[FeatureVector]) -> Self {
        let n = samples.len().max(1) as f64;
        let mut mean = vec![0.0; FEATURE_DIM];
        let mut min = vec![f64::INFINITY; FEATURE_DIM];
        let mut max = vec![f64::NEG_INFINITY; FEATURE_DIM];
        for s in samples {
            for (j, v) in s.0.iter().enumerate() {
                mean[j] += v / n;
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        let mut std = vec![0.0; FEATURE_DIM];
        for s in samples {
            for (j, v) in s.0.iter().enumerate() {
                std[j] += (v - mean[j]).powi(2) / n;
            }
        }
        for (j, s) in std.iter_mut().enumerate() {
            *s = s.sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
            if max[j] - min[j] < 1e-12 {
                max[j] = min[j] + 1.0;
            }
        }
        Self { mean, std, min, max }
    }

    pub fn standardize(&self, x: &FeatureVector) -> Vec<f64> {
        x.0.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    /// Affine rescale onto [0, 1] with the training range, clipped.
    pub fn rescale_unit(&self, x: &FeatureVector) -> Vec<f64> {
        x.0.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 40, learning_rate: 2e-3, batch_size: 32, seed: 0 }
    }
}

/// Trained classifier together with its input statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: DenseNet,
    pub norm: FeatureNorm,
    pub training_accuracy: f64,
}

/// Mini-batch Adam on softmax cross-entropy over the default architecture.
pub fn train_dense(
    dataset: &[(FeatureVector, GestureLabel)],
    opts: &TrainOptions,
) -> Result<TrainedModel, ClassifyError> {
    train_dense_with_sizes(dataset, &DEFAULT_LAYER_SIZES, opts)
}

pub fn train_dense_with_sizes(
    dataset: &[(FeatureVector, GestureLabel)],
    sizes: &[usize],
    opts: &TrainOptions,
) -> Result<TrainedModel, ClassifyError> {
    if dataset.is_empty() {
        return Err(ClassifyError::InsufficientData("empty dataset".into()));
    }
    let mut counts = [0usize; GestureLabel::COUNT];
    for (_, g) in dataset {
        counts[g.index()] += 1;
    }
    if let Some((g, n)) = counts.iter().enumerate().find(|(_, n)| **n > 0 && **n < MIN_SAMPLES_PER_CLASS) {
        return Err(ClassifyError::InsufficientData(format!(
            "class {} has {n} samples, need at least {MIN_SAMPLES_PER_CLASS}",
            GestureLabel::ALL[g]
        )));
    }
    assert_eq!(sizes.first(), Some(&FEATURE_DIM));
    assert_eq!(sizes.last(), Some(&GestureLabel::COUNT));

    let features: Vec<FeatureVector> = dataset.iter().map(|(f, _)| *f).collect();
    let norm = FeatureNorm::fit(&features);
    let inputs: Vec<Vec<f64>> = features.iter().map(|f| norm.standardize(f)).collect();
    let targets: Vec<usize> = dataset.iter().map(|(_, g)| g.index()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut net = DenseNet::zeros(sizes);
    for layer in &mut net.layers {
        let he = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("valid std");
        for w in &mut layer.weights {
            *w = he.sample(&mut rng);
        }
    }

    let mut adam = Adam::new(&net, opts.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let batch = opts.batch_size.max(1);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = DenseNet::zeros(sizes);
            for &i in chunk {
                epoch_loss += backprop(&net, &inputs[i], targets[i], &mut grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            adam.step(&mut net, &grads, scale);
        }
        if !epoch_loss.is_finite() {
            return Err(ClassifyError::DivergedLoss);
        }
    }

    let correct =
        inputs.iter().zip(&targets).filter(|(x, t)| argmax(&net.forward(x).expect("shape checked")) == **t).count();
    Ok(TrainedModel { net, norm, training_accuracy: correct as f64 / dataset.len() as f64 })
}

/// Accumulates the gradient of the cross-entropy for one sample; returns its loss.
fn backprop(net: &DenseNet, x: &[f64], target: usize, grads: &mut DenseNet) -> f64 {
    let trace = net.forward_trace(x).expect("shape checked");
    let logits = trace.last().expect("non-empty");
    let probs = softmax(logits);
    let p = probs[target];
    let loss = if p.is_nan() { f64::NAN } else { -p.max(1e-300).ln() };

    let mut delta: Vec<f64> = probs.clone();
    delta[target] -= 1.0;
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let input: Vec<f64> = if l == 0 { x.to_vec() } else { trace[l - 1].iter().map(|v| v.max(0.0)).collect() };
        let g = &mut grads.layers[l];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            g.bias[o] += d;
            let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (gw, xi) in row.iter_mut().zip(&input) {
                *gw += d * xi;
            }
        }
        if l > 0 {
            let prev = &trace[l - 1];
            delta = (0..layer.inputs)
                .map(|i| {
                    if prev[i] <= 0.0 {
                        return 0.0;
                    }
                    delta.iter().enumerate().map(|(o, d)| d * layer.weight(o, i)).sum()
                })
                .collect();
        }
    }
    loss
}

struct Adam {
    lr: f64,
    t: i32,
    m: DenseNet,
    v: DenseNet,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &DenseNet, lr: f64) -> Self {
        let sizes = net.layer_sizes();
        Self { lr, t: 0, m: DenseNet::zeros(&sizes), v: DenseNet::zeros(&sizes) }
    }

    fn step(&mut self, net: &mut DenseNet, grads: &DenseNet, scale: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let g = grads.layers[l].weights.iter().chain(&grads.layers[l].bias);
            let (ml, vl) = (&mut self.m.layers[l], &mut self.v.layers[l]);
            let m = ml.weights.iter_mut().chain(ml.bias.iter_mut());
            let v = vl.weights.iter_mut().chain(vl.bias.iter_mut());
            for (((p, g), m), v) in params.zip(g).zip(m).zip(v) {
                let g = g * scale;
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate().skip(1) {
        if *v > x[best] {
            best = i;
        }
    }
    best
}
