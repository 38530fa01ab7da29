//! Forecasting graph: zero or more LSTM branches whose final hidden states are
//! concatenated and fed to a stack of dense layers (the head). With no
//! branches the head consumes the raw feature vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dense::DenseLayer;
use super::lstm::{LstmCell, LstmTrace};
use crate::error::{Error, Result};

/// Which lag window a branch reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Intraday,
    Interday,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub axis: Axis,
    pub cell: LstmCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetInput<'a> {
    Features(&'a [f64]),
    /// Row-major windows, one row per time step.
    Windows { intraday: &'a [f64], interday: &'a [f64] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub branches: Vec<Branch>,
    pub head: Vec<DenseLayer>,
}

struct ForwardTrace {
    branch_traces: Vec<LstmTrace>,
    /// `activations[0]` is the head input, `activations[l + 1]` the output of head layer `l`.
    activations: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(branches: Vec<Branch>, head: Vec<DenseLayer>) -> Result<Self> {
        let net = Network { branches, head };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.head.is_empty() {
            return Err(Error::Shape(String::from("network needs at least one head layer")));
        }
        for b in &self.branches {
            b.cell.validate()?;
        }
        if !self.branches.is_empty() {
            let concat: usize = self.branches.iter().map(|b| b.cell.hidden_size()).sum();
            if self.head[0].inputs() != concat {
                return Err(Error::Shape(format!("head expects {} inputs, branches give {}", self.head[0].inputs(), concat)));
            }
        }
        for w in self.head.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape(format!("head layer widths {} -> {} mismatch", w[0].outputs(), w[1].inputs())));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.head[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.head.last().map(|l| l.outputs()).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.branches.iter().map(|b| b.cell.num_params()).sum::<usize>() + self.head.iter().map(|l| l.num_params()).sum::<usize>()
    }

    fn branch_sequence<'a>(&self, branch: &Branch, input: &NetInput<'a>) -> Result<&'a [f64]> {
        match *input {
            NetInput::Windows { intraday, interday } => {
                let seq = match branch.axis {
                    Axis::Intraday => intraday,
                    Axis::Interday => interday,
                };
                let d = branch.cell.input_size();
                if seq.is_empty() || seq.len() % d != 0 {
                    return Err(Error::Shape(format!("window of {} values does not fit input width {}", seq.len(), d)));
                }
                Ok(seq)
            }
            NetInput::Features(_) => Err(Error::Shape(String::from("recurrent branch given a feature vector"))),
        }
    }

    fn forward_trace(&self, input: &NetInput<'_>) -> Result<ForwardTrace> {
        let mut branch_traces = Vec::with_capacity(self.branches.len());
        let head_input = if self.branches.is_empty() {
            match *input {
                NetInput::Features(x) => {
                    if x.len() != self.input_width() {
                        return Err(Error::Shape(format!("expected {} features, got {}", self.input_width(), x.len())));
                    }
                    x.to_vec()
                }
                NetInput::Windows { .. } => return Err(Error::Shape(String::from("feed-forward network given lag windows"))),
            }
        } else {
            let mut concat = Vec::with_capacity(self.input_width());
            for b in &self.branches {
                let seq = self.branch_sequence(b, input)?;
                let trace = b.cell.forward_trace(seq);
                let h = b.cell.hidden_size();
                concat.extend_from_slice(&trace.hs[trace.hs.len() - h..]);
                branch_traces.push(trace);
            }
            concat
        };
        let mut activations = Vec::with_capacity(self.head.len() + 1);
        activations.push(head_input);
        for layer in &self.head {
            let next = layer.forward_unchecked(activations.last().unwrap());
            activations.push(next);
        }
        Ok(ForwardTrace { branch_traces, activations })
    }

    pub fn forward(&self, input: NetInput<'_>) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(&input)?;
        let out = trace.activations.pop().unwrap();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape(String::from("non-finite network output")));
        }
        Ok(out)
    }

    /// Same structure with every parameter zero.
    pub fn zeros_like(&self) -> Network {
        let mut z = self.clone();
        z.set_params(&vec![0.0; self.num_params()]).expect("same size");
        z
    }

    /// Flat parameters: each branch (`W_f..W_c, U_f..U_c, b_f..b_c`), then each head layer (`W`, `b`), row-major.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in &self.branches {
            b.cell.params_into(&mut out);
        }
        for l in &self.head {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.num_params(), flat.len())));
        }
        let mut src = flat;
        for b in &mut self.branches {
            b.cell.set_params_from(&mut src);
        }
        for l in &mut self.head {
            let n = l.weights.len();
            l.weights.data_mut().copy_from_slice(&src[..n]);
            src = &src[n..];
            let n = l.bias.len();
            l.bias.data_mut().copy_from_slice(&src[..n]);
            src = &src[n..];
        }
        Ok(())
    }

    /// Accumulates into `grad` the gradient of `scale * ||f(input) - target||^2`
    /// and returns the unscaled squared error.
    fn accumulate(&self, input: &NetInput<'_>, target: &[f64], scale: f64, grad: &mut Network) -> Result<f64> {
        let trace = self.forward_trace(input)?;
        let out = trace.activations.last().unwrap();
        if out.len() != target.len() {
            return Err(Error::Shape(format!("output width {} vs target width {}", out.len(), target.len())));
        }
        let mut sq = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(o, t)| {
                sq += (o - t) * (o - t);
                2.0 * scale * (o - t)
            })
            .collect();
        for l in (0..self.head.len()).rev() {
            delta = self.head[l].backward(&trace.activations[l], &trace.activations[l + 1], &delta, &mut grad.head[l]);
        }
        let mut offset = 0;
        for (bi, b) in self.branches.iter().enumerate() {
            let h = b.cell.hidden_size();
            let seq = self.branch_sequence(b, input)?;
            b.cell.backward(seq, &trace.branch_traces[bi], &delta[offset..offset + h], &mut grad.branches[bi].cell);
            offset += h;
        }
        Ok(sq)
    }

    /// Mean squared-error loss over the batch and its exact gradient (flat, same order as [`Network::params`]).
    pub fn loss_and_gradient<'a, I>(&self, batch: I) -> Result<(f64, Vec<f64>)>
    where
        I: IntoIterator<Item = (NetInput<'a>, &'a [f64])>,
        I::IntoIter: ExactSizeIterator,
    {
        let iter = batch.into_iter();
        let n = iter.len();
        if n == 0 {
            return Err(Error::Shape(alloc::string::String::from("empty batch")));
        }
        let scale = 1.0 / n as f64;
        let mut grad = self.zeros_like();
        let mut total = 0.0;
        for (input, target) in iter {
            total += self.accumulate(&input, target, scale, &mut grad)?;
        }
        Ok((total / n as f64, grad.params()))
    }
}

/// Largest relative gap between the analytic gradient and central differences
/// with step `step`, over every parameter. Gaps below `1e-6` in magnitude count
/// relative to `1e-6`.
pub fn gradient_check(net: &Network, batch: &[(NetInput<'_>, &[f64])], step: f64) -> Result<f64> {
    let (_, analytic) = net.loss_and_gradient(batch.iter().copied())?;
    let base = net.params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_params(&params)?;
        let up = probe.loss_and_gradient(batch.iter().copied())?.0;
        params[i] = base[i] - step;
        probe.set_params(&params)?;
        let down = probe.loss_and_gradient(batch.iter().copied())?.0;
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
