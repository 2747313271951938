//! A single-layer LSTM with explicit forward caches and backpropagation.
//!
//! Gate pre-activations are `a = W [x; h_prev] + bias` with the four gate
//! blocks stacked in the order input, forget, output, candidate.

use crate::error::{Error, Result};
use crate::mathcore::{logistic, Matrix, SeededRng};

pub(crate) const GATE_INPUT: usize = 0;
pub(crate) const GATE_FORGET: usize = 1;
pub(crate) const GATE_OUTPUT: usize = 2;
pub(crate) const GATE_CANDIDATE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    input_dim: usize,
    hidden_dim: usize,
    /// `4H × (I + H)` stacked gate weights.
    pub weights: Matrix,
    /// `4H` stacked gate biases.
    pub bias: Vec<f64>,
}

/// Hidden and cell vectors; the hidden vector is the student's current
/// embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    pub h: Vec<f64>,
    pub cell: Vec<f64>,
}

impl StudentState {
    pub fn zeros(hidden_dim: usize) -> Self {
        StudentState {
            h: vec![0.0; hidden_dim],
            cell: vec![0.0; hidden_dim],
        }
    }
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            weights: Matrix::zeros(4 * hidden_dim, input_dim + hidden_dim),
            bias: vec![0.0; 4 * hidden_dim],
        }
    }

    /// Uniform(±1/√H) weights and biases, forget-gate bias 1.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut uni = || bound * (2.0 * rng.uniform() - 1.0);
        let weights = Matrix::from_fn(4 * hidden_dim, input_dim + hidden_dim, |_, _| uni());
        let mut bias: Vec<f64> = (0..4 * hidden_dim).map(|_| uni()).collect();
        bias[GATE_FORGET * hidden_dim..(GATE_FORGET + 1) * hidden_dim].fill(1.0);
        LstmParams {
            input_dim,
            hidden_dim,
            weights,
            bias,
        }
    }

    pub fn from_parts(input_dim: usize, hidden_dim: usize, weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != 4 * hidden_dim || weights.cols() != input_dim + hidden_dim || bias.len() != 4 * hidden_dim {
            return Err(Error::dim(format!(
                "LSTM parts {}x{} / {} do not fit input {input_dim}, hidden {hidden_dim}",
                weights.rows(),
                weights.cols(),
                bias.len()
            )));
        }
        Ok(LstmParams {
            input_dim,
            hidden_dim,
            weights,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Mutable bias block of one gate.
    pub fn gate_bias_mut(&mut self, gate: usize) -> &mut [f64] {
        let h = self.hidden_dim;
        &mut self.bias[gate * h..(gate + 1) * h]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    /// One recurrence step.
    pub fn step(&self, st: &StudentState, x: &[f64]) -> Result<StudentState> {
        if x.len() != self.input_dim {
            return Err(Error::dim(format!(
                "LSTM input of length {} where {} is expected",
                x.len(),
                self.input_dim
            )));
        }
        if st.h.len() != self.hidden_dim || st.cell.len() != self.hidden_dim {
            return Err(Error::dim("state size differs from hidden_dim"));
        }
        let mut scratch = StepScratch::new(self);
        let mut next = StudentState::zeros(self.hidden_dim);
        self.forward_into(x, &st.h, &st.cell, &mut scratch.xh, &mut scratch.gates, &mut next.cell, &mut scratch.tanh_c, &mut next.h);
        Ok(next)
    }

    /// Forward step writing all intermediates: `xh = [x; h_prev]`, the
    /// post-activation gates, the new cell, `tanh(cell)` and the new hidden.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn forward_into(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        xh: &mut [f64],
        gates: &mut [f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let hd = self.hidden_dim;
        xh[..self.input_dim].copy_from_slice(x);
        xh[self.input_dim..].copy_from_slice(h_prev);
        // The x block is frequently half zeros (one-hot response block).
        let nz: Vec<usize> = (0..xh.len()).filter(|&j| xh[j] != 0.0).collect();
        for (r, g) in gates.iter_mut().enumerate() {
            let row = self.weights.row(r);
            let mut acc = self.bias[r];
            for &j in &nz {
                acc += row[j] * xh[j];
            }
            *g = acc;
        }
        for k in 0..hd {
            let i = logistic(gates[GATE_INPUT * hd + k]);
            let f = logistic(gates[GATE_FORGET * hd + k]);
            let o = logistic(gates[GATE_OUTPUT * hd + k]);
            let g = gates[GATE_CANDIDATE * hd + k].tanh();
            gates[GATE_INPUT * hd + k] = i;
            gates[GATE_FORGET * hd + k] = f;
            gates[GATE_OUTPUT * hd + k] = o;
            gates[GATE_CANDIDATE * hd + k] = g;
            c[k] = f * c_prev[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
    }

    /// Backward through one step.
    ///
    /// On entry `dh` and `dc` hold the loss gradient w.r.t. this step's
    /// outputs; on exit they hold the gradient w.r.t. the previous state.
    /// Weight gradients accumulate into `grad`. When `dx` is given the
    /// gradient w.r.t. the input is written into it.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        xh: &[f64],
        gates: &[f64],
        c_prev: &[f64],
        tanh_c: &[f64],
        dh: &mut [f64],
        dc: &mut [f64],
        da: &mut [f64],
        grad: &mut LstmParams,
        dx: Option<&mut [f64]>,
    ) {
        let hd = self.hidden_dim;
        for k in 0..hd {
            let i = gates[GATE_INPUT * hd + k];
            let f = gates[GATE_FORGET * hd + k];
            let o = gates[GATE_OUTPUT * hd + k];
            let g = gates[GATE_CANDIDATE * hd + k];
            let tc = tanh_c[k];
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            da[GATE_OUTPUT * hd + k] = dh[k] * tc * o * (1.0 - o);
            da[GATE_INPUT * hd + k] = dct * g * i * (1.0 - i);
            da[GATE_FORGET * hd + k] = dct * c_prev[k] * f * (1.0 - f);
            da[GATE_CANDIDATE * hd + k] = dct * i * (1.0 - g * g);
            dc[k] = dct * f;
        }
        let nz: Vec<usize> = (0..xh.len()).filter(|&j| xh[j] != 0.0).collect();
        for (r, &a) in da.iter().enumerate() {
            grad.bias[r] += a;
            let grow = grad.weights.row_mut(r);
            for &j in &nz {
                grow[j] += a * xh[j];
            }
        }
        // d[x; h_prev] = W^T da
        let id = self.input_dim;
        dh.fill(0.0);
        match dx {
            Some(dx) => {
                dx.fill(0.0);
                for (r, &a) in da.iter().enumerate() {
                    let row = self.weights.row(r);
                    for (d, w) in dx.iter_mut().zip(&row[..id]) {
                        *d += a * w;
                    }
                    for (d, w) in dh.iter_mut().zip(&row[id..]) {
                        *d += a * w;
                    }
                }
            }
            None => {
                for (r, &a) in da.iter().enumerate() {
                    let row = &self.weights.row(r)[id..];
                    for (d, w) in dh.iter_mut().zip(row) {
                        *d += a * w;
                    }
                }
            }
        }
    }
}

struct StepScratch {
    xh: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl StepScratch {
    fn new(p: &LstmParams) -> Self {
        StepScratch {
            xh: vec![0.0; p.input_dim + p.hidden_dim],
            gates: vec![0.0; 4 * p.hidden_dim],
            tanh_c: vec![0.0; p.hidden_dim],
        }
    }
}

/// Free-function form of [`LstmParams::step`].
pub fn lstm_step(p: &LstmParams, st: &StudentState, x: &[f64]) -> Result<StudentState> {
    p.step(st, x)
}
