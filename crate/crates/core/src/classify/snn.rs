//! Event-driven emulation of the converted classifier.
//!
//! Layer `l` integrates `v <- v * decay + W s_in + c` every step, fires where
//! `v >= threshold` and resets fired neurons to zero. A spike of layer `l`
//! stands for `threshold_l` units of activation, so each layer's weights are
//! the dense weights scaled by the threshold of the layer feeding it.

use serde::{Deserialize, Serialize};

use super::dense::{DenseNet, FeatureNorm};
use super::ClassifyError;

pub const DEFAULT_TIMESTEPS: usize = 64;
/// Percentile of calibration pre-activations used as a layer threshold.
pub const THRESHOLD_PERCENTILE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub decay: f64,
    pub threshold: f64,
}

impl LifParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(ClassifyError::InvalidModel(format!("decay {} outside (0, 1]", self.decay)));
        }
        if !(self.threshold > 0.0) {
            return Err(ClassifyError::InvalidModel(format!("threshold {} must be > 0", self.threshold)));
        }
        Ok(())
    }
}

/// Binary activity, row-major `[timestep][neuron]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub timesteps: usize,
    pub neurons: usize,
    pub spikes: Vec<u8>,
}

impl SpikeTrain {
    pub fn silent(timesteps: usize, neurons: usize) -> Self {
        Self { timesteps, neurons, spikes: vec![0; timesteps * neurons] }
    }

    pub fn step(&self, t: usize) -> &[u8] {
        &self.spikes[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn count(&self, neuron: usize) -> u32 {
        (0..self.timesteps).map(|t| self.spikes[t * self.neurons + neuron] as u32).sum()
    }

    pub fn counts(&self) -> Vec<u32> {
        (0..self.neurons).map(|i| self.count(i)).collect()
    }

    pub fn total(&self) -> u64 {
        self.spikes.iter().map(|s| *s as u64).sum()
    }
}

/// Deterministic accumulator code: neuron `i` fires at step `t` (1-based)
/// iff `floor(t x_i) > floor((t - 1) x_i)`, so it fires `floor(T x_i)` times.
pub fn encode_rate(x: &[f64], timesteps: usize) -> SpikeTrain {
    let mut train = SpikeTrain::silent(timesteps, x.len());
    for (i, &xi) in x.iter().enumerate() {
        let xi = if xi.is_nan() { 0.0 } else { xi.clamp(0.0, 1.0) };
        let mut prev = 0.0f64;
        for t in 1..=timesteps {
            let cur = (t as f64 * xi).floor();
            if cur > prev {
                train.spikes[(t - 1) * x.len() + i] = 1;
            }
            prev = cur;
        }
    }
    train
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikingLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[out][in]`.
    pub weights: Vec<f64>,
    /// Constant current injected every step.
    pub bias_current: Vec<f64>,
    pub lif: LifParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikingNetwork {
    pub layers: Vec<SpikingLayer>,
    pub timesteps: usize,
}

/// Work counters for one inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Weight lookups triggered by presynaptic spikes.
    pub synaptic_events: u64,
    /// Multiply-accumulates of one dense forward pass of the same shape.
    pub dense_macs: u64,
}

impl EnergyReport {
    pub fn event_ratio(&self) -> f64 {
        self.synaptic_events as f64 / self.dense_macs as f64
    }

    /// Events per timestep relative to one dense pass.
    pub fn per_step_ratio(&self, timesteps: usize) -> f64 {
        self.event_ratio() / timesteps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnOutput {
    /// Output-layer spike counts over the whole run.
    pub counts: Vec<u32>,
    /// Spike trains of every layer after the input.
    pub trains: Vec<SpikeTrain>,
    pub energy: EnergyReport,
}

impl SpikingNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.lif.threshold).collect()
    }

    pub fn dense_macs(&self) -> u64 {
        self.layers.iter().map(|l| (l.inputs * l.outputs) as u64).sum()
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.layers.is_empty() || self.timesteps == 0 {
            return Err(ClassifyError::InvalidModel("spiking network needs layers and T > 0".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.lif.validate()?;
            if l.weights.len() != l.inputs * l.outputs || l.bias_current.len() != l.outputs {
                return Err(ClassifyError::InvalidModel(format!("spiking layer {i}: array sizes do not match shape")));
            }
        }
        Ok(())
    }

    /// Runs the network for `input.timesteps` steps.
    pub fn infer(&self, input: &SpikeTrain) -> Result<SnnOutput, ClassifyError> {
        if input.neurons != self.input_dim() || input.timesteps != self.timesteps {
            return Err(ClassifyError::ShapeMismatch {
                expected: (self.timesteps, self.input_dim()),
                got: (input.timesteps, input.neurons),
            });
        }
        let t_steps = self.timesteps;
        let mut potentials: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        let mut trains: Vec<SpikeTrain> = self.layers.iter().map(|l| SpikeTrain::silent(t_steps, l.outputs)).collect();
        let mut events = 0u64;
        let mut active: Vec<usize> = Vec::with_capacity(64);

        for t in 0..t_steps {
            for (l, layer) in self.layers.iter().enumerate() {
                active.clear();
                let pre = if l == 0 { input.step(t) } else { trains[l - 1].step(t) };
                active.extend(pre.iter().enumerate().filter(|(_, s)| **s != 0).map(|(i, _)| i));
                events += (active.len() * layer.outputs) as u64;

                let v = &mut potentials[l];
                let lif = layer.lif;
                let out = &mut trains[l].spikes[t * layer.outputs..(t + 1) * layer.outputs];
                for (o, (v, s)) in v.iter_mut().zip(out.iter_mut()).enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let drive: f64 = active.iter().map(|&i| row[i]).sum();
                    *v = *v * lif.decay + drive + layer.bias_current[o];
                    if *v >= lif.threshold {
                        *s = 1;
                        *v = 0.0;
                    }
                }
            }
        }
        let counts = trains.last().expect("validated non-empty").counts();
        Ok(SnnOutput {
            counts,
            trains,
            energy: EnergyReport { synaptic_events: events, dense_macs: self.dense_macs() },
        })
    }
}

/// Nearest-rank percentile (`p` in (0, 1]); the maximum for tiny samples.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1]
}

/// Dense net rewritten so its first layer consumes rates in [0, 1] instead
/// of standardized features.
pub fn fold_input_rescale(net: &DenseNet, norm: &FeatureNorm) -> DenseNet {
    let mut folded = net.clone();
    let first = &mut folded.layers[0];
    for o in 0..first.outputs {
        let mut shift = 0.0;
        for j in 0..first.inputs {
            let w = net.layers[0].weight(o, j);
            let span = norm.max[j] - norm.min[j];
            first.weights[o * first.inputs + j] = w * span / norm.std[j];
            shift += w * (norm.min[j] - norm.mean[j]) / norm.std[j];
        }
        first.bias[o] += shift;
    }
    folded
}

/// Per-layer thresholds from calibration rates (already rescaled to [0, 1]).
pub fn calibrate_thresholds(folded: &DenseNet, calib_rates: &[Vec<f64>]) -> Result<Vec<f64>, ClassifyError> {
    if calib_rates.is_empty() {
        return Err(ClassifyError::EmptyCalibration);
    }
    let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); folded.layers.len()];
    for x in calib_rates {
        for (l, z) in folded.forward_trace(x)?.into_iter().enumerate() {
            per_layer[l].extend(z);
        }
    }
    Ok(per_layer
        .iter_mut()
        .map(|values| {
            let p = percentile(values, THRESHOLD_PERCENTILE);
            // a layer that never activates positively keeps a unit threshold
            if p > 0.0 {
                p
            } else {
                1.0
            }
        })
        .collect())
}

/// Builds the spiking network from a folded dense net and layer thresholds.
pub fn build_spiking(
    folded: &DenseNet,
    thresholds: &[f64],
    timesteps: usize,
    decay: f64,
) -> Result<SpikingNetwork, ClassifyError> {
    if thresholds.len() != folded.layers.len() {
        return Err(ClassifyError::InvalidModel(format!(
            "{} thresholds for {} layers",
            thresholds.len(),
            folded.layers.len()
        )));
    }
    let layers = folded
        .layers
        .iter()
        .enumerate()
        .map(|(l, dense)| {
            let upstream = if l == 0 { 1.0 } else { thresholds[l - 1] };
            SpikingLayer {
                inputs: dense.inputs,
                outputs: dense.outputs,
                weights: dense.weights.iter().map(|w| w * upstream).collect(),
                bias_current: dense.bias.clone(),
                lif: LifParams { decay, threshold: thresholds[l] },
            }
        })
        .collect();
    let snn = SpikingNetwork { layers, timesteps };
    snn.validate()?;
    Ok(snn)
}

/// Threshold-normalized conversion of a trained dense classifier.
pub fn convert_to_snn(
    net: &DenseNet,
    norm: &FeatureNorm,
    calib: &[crate::signal::FeatureVector],
    timesteps: usize,
) -> Result<SpikingNetwork, ClassifyError> {
    if calib.is_empty() {
        return Err(ClassifyError::EmptyCalibration);
    }
    let folded = fold_input_rescale(net, norm);
    let rates: Vec<Vec<f64>> = calib.iter().map(|x| norm.rescale_unit(x)).collect();
    let thresholds = calibrate_thresholds(&folded, &rates)?;
    build_spiking(&folded, &thresholds, timesteps, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, threshold: f64) -> SpikingNetwork {
        SpikingNetwork {
            layers: vec![SpikingLayer {
                inputs: 1,
                outputs: 1,
                weights: vec![w],
                bias_current: vec![0.0],
                lif: LifParams { decay: 1.0, threshold },
            }],
            timesteps: 12,
        }
    }

    #[test]
    fn encode_counts() {
        let train = encode_rate(&[0.0, 1.0, 0.25], 64);
        assert_eq!(train.counts(), vec![0, 64, 16]);
        // 0.25 fires on steps 4, 8, ...
        assert_eq!(train.step(3)[2], 1);
        assert_eq!(train.step(2)[2], 0);
    }

    #[test]
    fn every_step_drive_fires_every_step() {
        let snn = single(1.0, 1.0);
        let out = snn.infer(&encode_rate(&[1.0], 12)).unwrap();
        assert_eq!(out.counts, vec![12]);
        assert_eq!(out.energy.synaptic_events, 12);
    }

    #[test]
    fn weak_drive_fires_every_third_step() {
        // v = 0.4, 0.8, 1.2 -> spike and reset, repeating
        let snn = single(0.4, 1.0);
        let out = snn.infer(&encode_rate(&[1.0], 12)).unwrap();
        let fired: Vec<usize> = (0..12).filter(|t| out.trains[0].step(*t)[0] == 1).map(|t| t + 1).collect();
        assert_eq!(fired, vec![3, 6, 9, 12]);
    }

    #[test]
    fn silent_input_costs_nothing() {
        let snn = single(1.0, 1.0);
        let out = snn.infer(&SpikeTrain::silent(12, 1)).unwrap();
        assert_eq!(out.counts, vec![0]);
        assert_eq!(out.energy.synaptic_events, 0);
    }

    #[test]
    fn shape_mismatch() {
        let snn = single(1.0, 1.0);
        assert!(matches!(snn.infer(&SpikeTrain::silent(5, 1)), Err(ClassifyError::ShapeMismatch { .. })));
        assert!(matches!(snn.infer(&SpikeTrain::silent(12, 2)), Err(ClassifyError::ShapeMismatch { .. })));
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut v: Vec<f64> = (1..=64).map(f64::from).collect();
        assert_eq!(percentile(&mut v, 0.999), 64.0);
        let mut v: Vec<f64> = (1..=2000).map(f64::from).collect();
        assert_eq!(percentile(&mut v, 0.999), 1998.0);
    }

    #[test]
    fn lif_params_validated() {
        assert!(LifParams { decay: 0.0, threshold: 1.0 }.validate().is_err());
        assert!(LifParams { decay: 1.0, threshold: 0.0 }.validate().is_err());
        assert!(LifParams { decay: 0.5, threshold: 2.0 }.validate().is_ok());
    }

    #[test]
    fn empty_calibration() {
        let net = DenseNet::zeros(&[32, 4, 6]);
        let norm = FeatureNorm::fit(&[crate::signal::FeatureVector::default()]);
        assert!(matches!(convert_to_snn(&net, &norm, &[], 64), Err(ClassifyError::EmptyCalibration)));
    }
}
