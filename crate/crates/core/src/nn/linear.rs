use crate::error::{shape_err, Result};
use crate::kernels::RowMatrix;

/// Dense layer `y = W x + b` with `W` stored `[out][in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    inputs: usize,
    outputs: usize,
    weight: RowMatrix,
    bias: Vec<f64>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return Err(shape_err!(
                "linear {inputs}->{outputs} got {} weights and {} biases",
                weight.len(),
                bias.len()
            ));
        }
        Ok(Self { inputs, outputs, weight: RowMatrix::new(inputs, weight), bias })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight.gemv(0, x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }
}

pub fn linear(x: &[f64], layer: &Linear) -> Result<Vec<f64>> {
    if x.len() != layer.inputs {
        return Err(shape_err!("linear expects {} inputs, got {}", layer.inputs, x.len()));
    }
    let mut out = vec![0.0; layer.outputs];
    layer.apply(x, &mut out);
    Ok(out)
}
