use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, Dense, DenseGrad, Init, Regularization};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Version tag written into serialized networks.
pub const NET_FORMAT_VERSION: u32 = 1;

/// Shape of one layer when building a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub outputs: usize,
    pub activation: Activation,
    pub regularization: Regularization,
}

impl LayerSpec {
    pub fn new(outputs: usize, activation: Activation) -> Self {
        Self {
            outputs,
            activation,
            regularization: Regularization::default(),
        }
    }

    pub fn regularized(mut self, r: Regularization) -> Self {
        self.regularization = r;
        self
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "NetFile<T>",
    try_from = "NetFile<T>",
    bound = "T: Scalar"
)]
pub struct DenseNet<T: Scalar> {
    layers: Vec<Dense<T>>,
}

/// Values retained by [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub input: Matrix<T>,
    pub pre: Vec<Matrix<T>>,
    pub post: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.post.last().unwrap_or(&self.input)
    }
}

/// Gradients for every layer, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<DenseGrad<T>>,
    /// Gradient with respect to the network input.
    pub input: Matrix<T>,
}

impl<T: Scalar> DenseNet<T> {
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::shape(
                    format!("layer {} input", i + 1),
                    w[0].outputs(),
                    w[1].inputs(),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            l.regularization.validate()?;
            if l.bias.len() != l.outputs() {
                return Err(Error::shape(format!("layer {i} bias"), l.outputs(), l.bias.len()));
            }
            if !l.weights.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite {
                    parameter: format!("layer {i}"),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn build(inputs: usize, specs: &[LayerSpec], init: Init, rng: &mut impl Rng) -> Result<Self> {
        let mut width = inputs;
        let mut layers = Vec::with_capacity(specs.len());
        for s in specs {
            layers.push(
                Dense::new(width, s.outputs, s.activation, init, rng)
                    .with_regularization(s.regularization),
            );
            width = s.outputs;
        }
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if batch.cols() != self.inputs() {
            return Err(Error::shape("network input", self.inputs(), batch.cols()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().unwrap_or(batch);
            let (p, q) = layer.forward(x);
            pre.push(p);
            post.push(q);
        }
        let out = post.last().expect("non-empty").clone();
        Ok((
            out,
            ForwardCache {
                input: batch.clone(),
                pre,
                post,
            },
        ))
    }

    /// Output only, without retaining intermediate values.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        if batch.cols() != self.inputs() {
            return Err(Error::shape("network input", self.inputs(), batch.cols()));
        }
        let mut x = self.layers[0].forward(batch).1;
        for layer in &self.layers[1..] {
            x = layer.forward(&x).1;
        }
        Ok(x)
    }

    /// Reverse-mode gradients of `Σ loss_grad ⊙ output` plus regularization.
    pub fn backward(&self, cache: &ForwardCache<T>, loss_grad: &Matrix<T>) -> Result<Gradients<T>> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::invalid("forward cache does not match the network"));
        }
        for (i, (l, p)) in self.layers.iter().zip(&cache.pre).enumerate() {
            if p.cols() != l.outputs() || p.rows() != cache.input.rows() {
                return Err(Error::shape(
                    format!("cached layer {i}"),
                    format!("{}x{}", cache.input.rows(), l.outputs()),
                    format!("{}x{}", p.rows(), p.cols()),
                ));
            }
        }
        if loss_grad.shape() != cache.output().shape() {
            return Err(Error::shape(
                "loss gradient",
                format!("{:?}", cache.output().shape()),
                format!("{:?}", loss_grad.shape()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = loss_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let (g, d_in) = layer.backward(input, &cache.pre[i], &cache.post[i], &d, true);
            grads.push(g);
            d = d_in.expect("requested");
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: d,
        })
    }

    /// Sum of weight, bias and (given a cache) activity penalties.
    pub fn regularization_loss(&self, cache: Option<&ForwardCache<T>>) -> T {
        let mut total = T::zero();
        for (i, l) in self.layers.iter().enumerate() {
            total += l.parameter_penalty();
            if let Some(c) = cache {
                total += l.activity_penalty(&c.post[i]);
            }
        }
        total
    }

    pub fn has_regularization(&self) -> bool {
        self.layers.iter().any(|l| !l.regularization.is_none())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct LayerFile<T: Scalar> {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    weights: Vec<T>,
    bias: Vec<T>,
    #[serde(default, skip_serializing_if = "Regularization::is_none")]
    regularization: Regularization,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct NetFile<T: Scalar> {
    format_version: u32,
    layers: Vec<LayerFile<T>>,
}

impl<T: Scalar> From<DenseNet<T>> for NetFile<T> {
    fn from(net: DenseNet<T>) -> Self {
        NetFile {
            format_version: NET_FORMAT_VERSION,
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weights: l.weights.into_vec(),
                    bias: l.bias,
                    regularization: l.regularization,
                })
                .collect(),
        }
    }
}

impl<T: Scalar> TryFrom<NetFile<T>> for DenseNet<T> {
    type Error = Error;

    fn try_from(f: NetFile<T>) -> Result<Self> {
        if f.format_version != NET_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported network format version {}",
                f.format_version
            )));
        }
        let layers = f
            .layers
            .into_iter()
            .map(|l| {
                Ok(Dense {
                    weights: Matrix::from_vec(l.inputs, l.outputs, l.weights)?,
                    bias: l.bias,
                    activation: l.activation,
                    regularization: l.regularization,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::from_layers(layers)
    }
}

