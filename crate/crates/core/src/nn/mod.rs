//! Dependency-free dense network substrate: layers, losses, reverse-mode
//! gradients and Adam.

mod adam;
pub(crate) mod kernels;
mod layer;
mod loss;
mod net;

pub use adam::{adam_step, AdamState, ParamSlot};
pub use layer::{Activation, Dense, DenseGrad, Init, Regularization};
pub use loss::{binary_crossentropy, mse, BCE_EPSILON};
pub use net::{DenseNet, ForwardCache, Gradients, LayerSpec, NET_FORMAT_VERSION};

use crate::scalar::Scalar;

impl<T: Scalar> DenseNet<T> {
    /// Pairs every parameter tensor with its gradient for an optimizer step.
    pub fn param_slots<'a>(
        &'a mut self,
        grads: &'a Gradients<T>,
        owner: &'static str,
    ) -> Vec<ParamSlot<'a, T>> {
        let mut slots = Vec::with_capacity(2 * grads.layers.len());
        for (i, (layer, g)) in self.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
            slots.push(ParamSlot {
                owner,
                layer: i,
                is_bias: false,
                values: layer.weights.as_mut_slice(),
                grads: g.weights.as_slice(),
            });
            slots.push(ParamSlot {
                owner,
                layer: i,
                is_bias: true,
                values: &mut layer.bias,
                grads: &g.bias,
            });
        }
        slots
    }
}
