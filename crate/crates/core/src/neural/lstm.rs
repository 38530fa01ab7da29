//! LSTM memory cell:
//!
//! ```text
//! f_t = sigmoid(W_f x_t + U_f h_{t-1} + b_f)
//! i_t = sigmoid(W_i x_t + U_i h_{t-1} + b_i)
//! o_t = sigmoid(W_o x_t + U_o h_{t-1} + b_o)
//! g_t = tanh(W_c x_t + U_c h_{t-1} + b_c)
//! c_t = f_t * c_{t-1} + i_t * g_t
//! h_t = o_t * tanh(c_t)
//! ```
//!
//! Gate arrays are indexed in the order `f, i, o, c`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::glorot;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

pub const FORGET: usize = 0;
pub const INPUT: usize = 1;
pub const OUTPUT: usize = 2;
pub const CANDIDATE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `W_f, W_i, W_o, W_c`, each `hidden x input`.
    pub input_weights: [Tensor; 4],
    /// `U_f, U_i, U_o, U_c`, each `hidden x hidden`.
    pub recurrent_weights: [Tensor; 4],
    /// `b_f, b_i, b_o, b_c`.
    pub biases: [Tensor; 4],
}

/// Intermediate values of a forward pass, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    /// `(T + 1) x H`, row 0 is the zero initial state.
    pub hs: Vec<f64>,
    pub cs: Vec<f64>,
    /// `T x 4H` gate activations.
    pub gates: Vec<f64>,
    /// `T x H` values of `tanh(c_t)`.
    pub tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        LstmCell { input_weights: [w(), w(), w(), w()], recurrent_weights: [u(), u(), u(), u()], biases: [b(), b(), b(), b()] }
    }

    /// Glorot-uniform weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut cell = LstmCell::zeros(input, hidden);
        for k in 0..4 {
            cell.input_weights[k] = glorot(rng, hidden, input);
        }
        for k in 0..4 {
            cell.recurrent_weights[k] = glorot(rng, hidden, hidden);
        }
        cell.biases[FORGET].fill(1.0);
        cell
    }

    pub fn input_size(&self) -> usize {
        self.input_weights[0].cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.input_weights[0].rows()
    }

    pub fn num_params(&self) -> usize {
        let (h, d) = (self.hidden_size(), self.input_size());
        4 * (h * d + h * h + h)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden_size(), self.input_size());
        if h == 0 {
            return Err(Error::Shape(String::from("LSTM hidden size must be positive")));
        }
        for k in 0..4 {
            if self.input_weights[k].shape() != [h, d]
                || self.recurrent_weights[k].shape() != [h, h]
                || self.biases[k].shape() != [h]
            {
                return Err(Error::Shape(format!("LSTM gate {} has inconsistent shapes", k)));
            }
        }
        Ok(())
    }

    /// One step writing gate activations into `gates` (length 4H) and new states into `h_out`, `c_out`.
    #[inline]
    pub(crate) fn step_into(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64], gates: &mut [f64], h_out: &mut [f64], c_out: &mut [f64], tanh_c: &mut [f64]) {
        let hsize = self.hidden_size();
        for k in 0..4 {
            let z = &mut gates[k * hsize..(k + 1) * hsize];
            z.copy_from_slice(self.biases[k].data());
            self.input_weights[k].matvec_add(x, z);
            self.recurrent_weights[k].matvec_add(h_prev, z);
            if k == CANDIDATE {
                z.iter_mut().for_each(|v| *v = math::tanh(*v));
            } else {
                z.iter_mut().for_each(|v| *v = math::sigmoid(*v));
            }
        }
        for j in 0..hsize {
            let f = gates[FORGET * hsize + j];
            let i = gates[INPUT * hsize + j];
            let o = gates[OUTPUT * hsize + j];
            let g = gates[CANDIDATE * hsize + j];
            let c = f * c_prev[j] + i * g;
            let tc = math::tanh(c);
            c_out[j] = c;
            tanh_c[j] = tc;
            h_out[j] = o * tc;
        }
    }

    /// Forward over a row-major `T x input` sequence from zero state.
    pub(crate) fn forward_trace(&self, seq: &[f64]) -> LstmTrace {
        let d = self.input_size();
        let h = self.hidden_size();
        let steps = seq.len() / d;
        let mut trace = LstmTrace {
            hs: vec![0.0; (steps + 1) * h],
            cs: vec![0.0; (steps + 1) * h],
            gates: vec![0.0; steps * 4 * h],
            tanh_c: vec![0.0; steps * h],
        };
        for s in 0..steps {
            let (h_done, h_rest) = trace.hs.split_at_mut((s + 1) * h);
            let (c_done, c_rest) = trace.cs.split_at_mut((s + 1) * h);
            self.step_into(
                &seq[s * d..(s + 1) * d],
                &h_done[s * h..],
                &c_done[s * h..],
                &mut trace.gates[s * 4 * h..(s + 1) * 4 * h],
                &mut h_rest[..h],
                &mut c_rest[..h],
                &mut trace.tanh_c[s * h..(s + 1) * h],
            );
        }
        trace
    }

    /// Backpropagation through time from the gradient of the final hidden state.
    pub(crate) fn backward(&self, seq: &[f64], trace: &LstmTrace, grad_h_last: &[f64], grad: &mut LstmCell) {
        let d = self.input_size();
        let h = self.hidden_size();
        let steps = seq.len() / d;
        let mut dh = grad_h_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for s in (0..steps).rev() {
            let gates = &trace.gates[s * 4 * h..(s + 1) * 4 * h];
            let tanh_c = &trace.tanh_c[s * h..(s + 1) * h];
            let c_prev = &trace.cs[s * h..(s + 1) * h];
            let h_prev = &trace.hs[s * h..(s + 1) * h];
            for j in 0..h {
                let f = gates[FORGET * h + j];
                let i = gates[INPUT * h + j];
                let o = gates[OUTPUT * h + j];
                let g = gates[CANDIDATE * h + j];
                let tc = tanh_c[j];
                let dc_total = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[OUTPUT * h + j] = dh[j] * tc * o * (1.0 - o);
                dz[INPUT * h + j] = dc_total * g * i * (1.0 - i);
                dz[CANDIDATE * h + j] = dc_total * i * (1.0 - g * g);
                dz[FORGET * h + j] = dc_total * c_prev[j] * f * (1.0 - f);
                dc[j] = dc_total * f;
            }
            let x = &seq[s * d..(s + 1) * d];
            dh.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..4 {
                let dzk = &dz[k * h..(k + 1) * h];
                grad.input_weights[k].add_outer(dzk, x);
                grad.recurrent_weights[k].add_outer(dzk, h_prev);
                grad.biases[k].add_assign(dzk);
                self.recurrent_weights[k].t_matvec_add(dzk, &mut dh);
            }
        }
    }

    pub(crate) fn params_into(&self, out: &mut Vec<f64>) {
        for t in self.input_weights.iter().chain(&self.recurrent_weights).chain(&self.biases) {
            out.extend_from_slice(t.data());
        }
    }

    pub(crate) fn set_params_from(&mut self, src: &mut &[f64]) {
        for t in self.input_weights.iter_mut().chain(self.recurrent_weights.iter_mut()).chain(self.biases.iter_mut()) {
            let n = t.len();
            t.data_mut().copy_from_slice(&src[..n]);
            *src = &src[n..];
        }
    }
}

/// One step of the cell from `(h_prev, c_prev)`.
pub fn lstm_step(cell: &LstmCell, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = cell.hidden_size();
    if x.len() != cell.input_size() || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape(format!(
            "lstm_step: input {} (want {}), states {}/{} (want {})",
            x.len(),
            cell.input_size(),
            h_prev.len(),
            c_prev.len(),
            h
        )));
    }
    let mut gates = vec![0.0; 4 * h];
    let mut h_out = vec![0.0; h];
    let mut c_out = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    cell.step_into(x, h_prev, c_prev, &mut gates, &mut h_out, &mut c_out, &mut tanh_c);
    if h_out.iter().chain(&c_out).any(|v| !v.is_finite()) {
        return Err(Error::Shape(String::from("non-finite LSTM state")));
    }
    Ok((h_out, c_out))
}

/// Final hidden state after running a row-major `T x input` sequence from zero state.
pub fn lstm_forward(cell: &LstmCell, seq: &[f64]) -> Result<Vec<f64>> {
    let d = cell.input_size();
    if seq.is_empty() || !seq.len().is_multiple_of(d) {
        return Err(Error::Shape(format!("sequence of {} values is not a nonempty multiple of {}", seq.len(), d)));
    }
    let h = cell.hidden_size();
    let trace = cell.forward_trace(seq);
    let steps = seq.len() / d;
    let out = trace.hs[steps * h..].to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(String::from("non-finite LSTM state")));
    }
    Ok(out)
}
