use super::activation::sigmoid;
use crate::error::{shape_err, Result};
use crate::kernels::RowMatrix;

/// Single-layer GRU. Gate blocks in `w_ih`, `w_hh` and `bias` are ordered
/// update, reset, candidate.
#[derive(Debug, Clone)]
pub struct Gru {
    inputs: usize,
    hidden: usize,
    w_ih: RowMatrix,
    w_hh: RowMatrix,
    bias: Vec<f64>,
}

/// Hidden vector plus gate scratch.
#[derive(Debug, Clone)]
pub struct GruState {
    h: Vec<f64>,
    gates: Vec<f64>,
    hh: Vec<f64>,
    rh: Vec<f64>,
}

impl GruState {
    pub fn new(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], gates: vec![0.0; 3 * hidden], hh: vec![0.0; 2 * hidden], rh: vec![0.0; hidden] }
    }

    pub fn hidden(&self) -> &[f64] {
        &self.h
    }

    pub fn reset(&mut self) {
        self.h.fill(0.0);
    }
}

impl Gru {
    pub fn new(inputs: usize, hidden: usize, w_ih: Vec<f64>, w_hh: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if w_ih.len() != 3 * hidden * inputs || w_hh.len() != 3 * hidden * hidden || bias.len() != 3 * hidden {
            return Err(shape_err!("GRU {inputs}->{hidden} parameter sizes do not match"));
        }
        Ok(Self { inputs, hidden, w_ih: RowMatrix::new(inputs, w_ih), w_hh: RowMatrix::new(hidden, w_hh), bias })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn state(&self) -> GruState {
        GruState::new(self.hidden)
    }

    /// Advances the state by one input vector. The new hidden vector is left
    /// in the state.
    pub fn step(&self, x: &[f64], state: &mut GruState) -> Result<()> {
        if x.len() != self.inputs || state.h.len() != self.hidden {
            return Err(shape_err!(
                "GRU step expects {} inputs and {} hidden, got {} and {}",
                self.inputs,
                self.hidden,
                x.len(),
                state.h.len()
            ));
        }
        let h = self.hidden;
        self.w_ih.gemv(0, x, &mut state.gates);
        for (g, b) in state.gates.iter_mut().zip(&self.bias) {
            *g += b;
        }
        let (zr, cand) = state.gates.split_at_mut(2 * h);
        self.w_hh.gemv(0, &state.h, &mut state.hh[..2 * h]);
        for (g, u) in zr.iter_mut().zip(&state.hh) {
            *g = sigmoid(*g + u);
        }
        let (z, r) = zr.split_at(h);
        for ((rh, r), hv) in state.rh.iter_mut().zip(r).zip(&state.h) {
            *rh = r * hv;
        }
        self.w_hh.gemv(2 * h, &state.rh, &mut state.hh[..h]);
        for (g, u) in cand.iter_mut().zip(&state.hh) {
            *g = (*g + u).tanh();
        }
        for ((hv, z), c) in state.h.iter_mut().zip(z).zip(cand.iter()) {
            *hv = (1.0 - z) * *hv + z * c;
        }
        Ok(())
    }
}
