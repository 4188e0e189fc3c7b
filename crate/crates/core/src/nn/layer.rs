use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernels;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre- and post-activation values.
    #[inline]
    pub fn derivative<T: Scalar>(self, pre: T, post: T) -> T {
        match self {
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - post * post,
            Activation::Sigmoid => post * (T::one() - post),
            Activation::Linear => T::one(),
        }
    }
}

/// L1/L2 penalty coefficients for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Regularization {
    pub kernel_l1: f64,
    pub kernel_l2: f64,
    pub bias_l1: f64,
    pub bias_l2: f64,
    pub activity_l1: f64,
    pub activity_l2: f64,
}

impl Regularization {
    pub fn is_none(&self) -> bool {
        *self == Self::default()
    }

    fn is_negative(&self) -> bool {
        [
            self.kernel_l1,
            self.kernel_l2,
            self.bias_l1,
            self.bias_l2,
            self.activity_l1,
            self.activity_l2,
        ]
        .iter()
        .any(|c| !(*c >= 0.0))
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        if self.is_negative() {
            return Err(crate::Error::invalid("regularization coefficients must be >= 0"));
        }
        Ok(())
    }
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// N(0, 2/fan_in) for relu layers, N(0, 1/fan_in) otherwise.
    FanIn,
    /// N(0, std²) for every layer.
    Normal(f64),
}

/// A fully connected layer with an `inputs × outputs` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
    pub regularization: Regularization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseGrad<T> {
    pub fn zeros_like(layer: &Dense<T>) -> Self {
        Self {
            weights: Matrix::zeros(layer.inputs(), layer.outputs()),
            bias: vec![T::zero(); layer.outputs()],
        }
    }
}

impl<T: Scalar> Dense<T> {
    pub fn new(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let std = match init {
            Init::FanIn if activation == Activation::Relu => (2.0 / inputs as f64).sqrt(),
            Init::FanIn => (1.0 / inputs as f64).sqrt(),
            Init::Normal(s) => s,
        };
        let data = (0..inputs * outputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            })
            .collect();
        Self {
            weights: Matrix::from_vec(inputs, outputs, data).expect("sized"),
            bias: vec![T::zero(); outputs],
            activation,
            regularization: Regularization::default(),
        }
    }

    pub fn with_regularization(mut self, r: Regularization) -> Self {
        self.regularization = r;
        self
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    /// Returns (pre-activation, post-activation).
    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
        let pre = kernels::affine(x, &self.weights, &self.bias);
        let act = self.activation;
        let post = if act == Activation::Linear {
            pre.clone()
        } else {
            pre.map(|v| act.apply(v))
        };
        (pre, post)
    }

    /// Backpropagates `d_post` through the layer; returns parameter gradients
    /// and the gradient with respect to the layer input.
    pub fn backward(
        &self,
        input: &Matrix<T>,
        pre: &Matrix<T>,
        post: &Matrix<T>,
        d_post: &Matrix<T>,
        need_input_grad: bool,
    ) -> (DenseGrad<T>, Option<Matrix<T>>) {
        let batch = T::from_usize_lossy(input.rows().max(1));
        let r = &self.regularization;
        let (al1, al2) = (T::lit(r.activity_l1), T::lit(r.activity_l2));
        let act = self.activation;
        let mut d_pre = d_post.clone();
        for ((d, &p), &q) in d_pre
            .as_mut_slice()
            .iter_mut()
            .zip(pre.as_slice())
            .zip(post.as_slice())
        {
            let mut g = *d;
            if r.activity_l1 != 0.0 || r.activity_l2 != 0.0 {
                g += (al1 * sign(q) + T::lit(2.0) * al2 * q) / batch;
            }
            *d = g * act.derivative(p, q);
        }
        let mut grad = DenseGrad::zeros_like(self);
        kernels::accumulate_outer(input, &d_pre, &mut grad.weights);
        for i in 0..d_pre.rows() {
            kernels::axpy(T::one(), d_pre.row(i), &mut grad.bias);
        }
        if r.kernel_l1 != 0.0 || r.kernel_l2 != 0.0 {
            let (l1, l2) = (T::lit(r.kernel_l1), T::lit(r.kernel_l2));
            for (g, &w) in grad
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(self.weights.as_slice())
            {
                *g += l1 * sign(w) + T::lit(2.0) * l2 * w;
            }
        }
        if r.bias_l1 != 0.0 || r.bias_l2 != 0.0 {
            let (l1, l2) = (T::lit(r.bias_l1), T::lit(r.bias_l2));
            for (g, &b) in grad.bias.iter_mut().zip(&self.bias) {
                *g += l1 * sign(b) + T::lit(2.0) * l2 * b;
            }
        }
        let input_grad = need_input_grad.then(|| kernels::mul_transposed(&d_pre, &self.weights));
        (grad, input_grad)
    }

    /// Weight and bias penalties (activity penalties need a forward pass).
    pub fn parameter_penalty(&self) -> T {
        let r = &self.regularization;
        let mut total = T::zero();
        if r.kernel_l1 != 0.0 || r.kernel_l2 != 0.0 {
            let (a, s) = self
                .weights
                .as_slice()
                .iter()
                .fold((T::zero(), T::zero()), |(a, s), &w| (a + w.abs(), s + w * w));
            total += T::lit(r.kernel_l1) * a + T::lit(r.kernel_l2) * s;
        }
        if r.bias_l1 != 0.0 || r.bias_l2 != 0.0 {
            let (a, s) = self
                .bias
                .iter()
                .fold((T::zero(), T::zero()), |(a, s), &w| (a + w.abs(), s + w * w));
            total += T::lit(r.bias_l1) * a + T::lit(r.bias_l2) * s;
        }
        total
    }

    /// Activity penalty of a post-activation batch, averaged over rows.
    pub fn activity_penalty(&self, post: &Matrix<T>) -> T {
        let r = &self.regularization;
        if r.activity_l1 == 0.0 && r.activity_l2 == 0.0 {
            return T::zero();
        }
        let (a, s) = post
            .as_slice()
            .iter()
            .fold((T::zero(), T::zero()), |(a, s), &v| (a + v.abs(), s + v * v));
        (T::lit(r.activity_l1) * a + T::lit(r.activity_l2) * s)
            / T::from_usize_lossy(post.rows().max(1))
    }
}
