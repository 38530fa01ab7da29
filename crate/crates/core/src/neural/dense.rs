use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// `activation(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Uniform draw in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let limit = math::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(&[rows, cols], data).expect("shape matches")
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.rows()] {
            return Err(Error::Shape(format!("dense weights {:?} vs bias {:?}", weights.shape(), bias.shape())));
        }
        Ok(DenseLayer { weights, bias, activation })
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer { weights: glorot(rng, outputs, inputs), bias: Tensor::zeros(&[outputs]), activation }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.data().to_vec();
        self.weights.matvec_add(x, &mut out);
        out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        out
    }

    /// Accumulates parameter gradients given the upstream gradient `grad_out`
    /// with respect to this layer's output `y`; returns the gradient with respect to `x`.
    pub(crate) fn backward(&self, x: &[f64], y: &[f64], grad_out: &[f64], grad: &mut DenseLayer) -> Vec<f64> {
        let dz: Vec<f64> = grad_out
            .iter()
            .zip(y)
            .map(|(g, yi)| g * self.activation.derivative_from_output(*yi))
            .collect();
        grad.weights.add_outer(&dz, x);
        grad.bias.add_assign(&dz);
        let mut dx = vec![0.0; x.len()];
        self.weights.t_matvec_add(&dz, &mut dx);
        dx
    }
}

pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.inputs() {
        return Err(Error::Shape(format!("dense layer expects {} inputs, got {}", layer.inputs(), x.len())));
    }
    let out = layer.forward_unchecked(x);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(String::from("non-finite dense output")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let eye = DenseLayer::new(
            Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[2]),
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(dense_forward(&eye, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);

        let zero = DenseLayer::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3]), Activation::Sigmoid).unwrap();
        assert_eq!(dense_forward(&zero, &[5.0, -2.0]).unwrap(), vec![0.5; 3]);

        let relu = DenseLayer::new(
            Tensor::new(&[1, 2], vec![1.0, 1.0]).unwrap(),
            Tensor::new(&[1], vec![-1.0]).unwrap(),
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(dense_forward(&relu, &[0.3, 0.2]).unwrap(), vec![0.0]);

        assert!(matches!(dense_forward(&relu, &[0.3]), Err(Error::Shape(_))));
    }
}
