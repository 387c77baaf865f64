//! Dense layers and the small tanh MLP built from them.

use super::glorot;
use crate::error::{Error, Result};
use crate::num::Scalar;
use rand::Rng;

/// Affine layer `y = W x + b` with row-major `out x in` weights.
#[derive(Debug, Clone)]
pub struct DenseLayer<T: Scalar> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

/// Parameter gradients mirroring [`DenseLayer`] shapes.
#[derive(Debug, Clone)]
pub struct DenseGrads<T: Scalar> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            biases: vec![T::zero(); out_dim],
        }
    }

    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weights = (0..in_dim * out_dim).map(|_| glorot(in_dim, out_dim, rng)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            biases: vec![T::zero(); out_dim],
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "dense forward: input {} != in_dim {}",
                input.len(),
                self.in_dim
            )));
        }
        let mut out = self.biases.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = T::zero();
            for (w, x) in row.iter().zip(input) {
                acc += *w * *x;
            }
            *out_v += acc;
        }
        Ok(out)
    }

    /// Exact analytic gradients for the affine map evaluated at `input`.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<(Vec<T>, DenseGrads<T>)> {
        if input.len() != self.in_dim || upstream.len() != self.out_dim {
            return Err(Error::Shape("dense backward: shape mismatch".into()));
        }
        let mut w_grad = vec![T::zero(); self.weights.len()];
        let mut input_grad = vec![T::zero(); self.in_dim];
        for (o, &up) in upstream.iter().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut w_grad[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] = up * input[i];
                input_grad[i] += up * row[i];
            }
        }
        Ok((
            input_grad,
            DenseGrads {
                weights: w_grad,
                biases: upstream.to_vec(),
            },
        ))
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn push_params(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.biases);
    }

    pub fn load_params(&mut self, src: &[T], offset: &mut usize) {
        let nw = self.weights.len();
        self.weights.copy_from_slice(&src[*offset..*offset + nw]);
        *offset += nw;
        let nb = self.biases.len();
        self.biases.copy_from_slice(&src[*offset..*offset + nb]);
        *offset += nb;
    }
}

impl<T: Scalar> DenseGrads<T> {
    pub fn zeros_like(layer: &DenseLayer<T>) -> Self {
        Self {
            weights: vec![T::zero(); layer.weights.len()],
            biases: vec![T::zero(); layer.biases.len()],
        }
    }

    pub fn accumulate(&mut self, other: &DenseGrads<T>) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += *b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += *b;
        }
    }

    pub fn push_flat(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.biases);
    }
}

/// Feed-forward stack with tanh hidden activations and a linear output layer.
#[derive(Debug, Clone)]
pub struct Mlp<T: Scalar> {
    pub layers: Vec<DenseLayer<T>>,
}

/// Forward trace kept for the backward pass: layer inputs (post-activation)
/// and pre-activation outputs.
#[derive(Debug, Clone)]
pub struct MlpTrace<T: Scalar> {
    pub layer_inputs: Vec<Vec<T>>,
    pub pre_activations: Vec<Vec<T>>,
    pub output: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    /// `dims` lists input, hidden..., output widths.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_trace(input)?.output)
    }

    pub fn forward_trace(&self, input: &[T]) -> Result<MlpTrace<T>> {
        let n = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut x = input.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            layer_inputs.push(x.clone());
            let pre = layer.forward(&x)?;
            x = if idx + 1 < n {
                pre.iter().map(|v| v.tanh()).collect()
            } else {
                pre.clone()
            };
            pre_activations.push(pre);
        }
        Ok(MlpTrace {
            layer_inputs,
            pre_activations,
            output: x,
        })
    }

    /// Backward pass from an upstream gradient on the linear output.
    pub fn backward(&self, trace: &MlpTrace<T>, upstream: &[T]) -> Result<(Vec<T>, Vec<DenseGrads<T>>)> {
        let n = self.layers.len();
        let mut grads: Vec<Option<DenseGrads<T>>> = (0..n).map(|_| None).collect();
        let mut up = upstream.to_vec();
        for idx in (0..n).rev() {
            if idx + 1 < n {
                // Chain through the tanh applied to this layer's output.
                for (u, pre) in up.iter_mut().zip(&trace.pre_activations[idx]) {
                    let t = pre.tanh();
                    *u = *u * (T::one() - t * t);
                }
            }
            let (input_grad, g) = self.layers[idx].backward(&trace.layer_inputs[idx], &up)?;
            grads[idx] = Some(g);
            up = input_grad;
        }
        Ok((up, grads.into_iter().map(|g| g.unwrap()).collect()))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.push_params(&mut out);
        }
        out
    }

    pub fn set_params_flat(&mut self, src: &[T]) {
        let mut offset = 0;
        for l in &mut self.layers {
            l.load_params(src, &mut offset);
        }
        debug_assert_eq!(offset, src.len());
    }

    pub fn grads_flat(grads: &[DenseGrads<T>]) -> Vec<T> {
        let mut out = Vec::new();
        for g in grads {
            g.push_flat(&mut out);
        }
        out
    }
}
