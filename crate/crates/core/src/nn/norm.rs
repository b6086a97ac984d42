use super::FeatureMap;
use crate::error::{shape_err, Result};

pub const BN_EPS: f64 = 1e-5;

/// Inference-mode batch normalisation with frozen statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl BatchNorm {
    pub fn new(gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Result<Self> {
        let c = gamma.len();
        if beta.len() != c || mean.len() != c || var.len() != c {
            return Err(shape_err!("batch norm parameters disagree on channel count"));
        }
        if var.iter().any(|&v| v + eps <= 0.0) {
            return Err(shape_err!("batch norm variance plus eps must be positive"));
        }
        let scale: Vec<f64> = gamma.iter().zip(var).map(|(g, v)| g / (v + eps).sqrt()).collect();
        let shift = beta.iter().zip(mean).zip(&scale).map(|((b, m), s)| b - m * s).collect();
        Ok(Self { scale, shift })
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Normalises `data` laid out as `channels` contiguous blocks.
    pub fn apply(&self, data: &mut [f64]) {
        let block = data.len() / self.scale.len();
        for ((chunk, s), b) in data.chunks_exact_mut(block).zip(&self.scale).zip(&self.shift) {
            for v in chunk {
                *v = *v * s + b;
            }
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        if x.channels() != self.channels() {
            return Err(shape_err!("batch norm has {} channels, input has {}", self.channels(), x.channels()));
        }
        let mut out = x.clone();
        self.apply(out.data_mut());
        Ok(out)
    }
}

pub fn batch_norm_infer(
    x: &FeatureMap,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<FeatureMap> {
    BatchNorm::new(gamma, beta, mean, var, eps)?.forward(x)
}
