//! A small feed-forward engine with explicit backpropagation.
//!
//! Only the layers needed by the beam classifiers are provided: 1-D
//! convolution, ReLU, batch normalisation, global average pooling, fully
//! connected layers and a softmax head. Everything runs in `f64`.
//!
//! Internally activations are channels-last row-major matrices: a batch of
//! `B` sequences of length `L` with `C` channels is a `(B*L) x C` matrix, and
//! after pooling a `B x F` matrix. Convolutions are lowered to GEMM through an
//! im2col buffer. Summation order never depends on thread scheduling, so a
//! fixed seed always yields bit-identical parameters.

mod encode;
mod io;
mod layers;
mod loss;
mod model;
mod optim;
mod tensor;

pub use encode::{encode_batch, input_encode, STD_FLOOR};
pub use io::{load_model, read_model, save_model, write_model, MODEL_VERSION};
pub use layers::{Layer, LayerSpec};
pub use loss::{cross_entropy, mean_cross_entropy, PROB_FLOOR};
pub use model::{Gradients, NetConfig, NetworkModel, Pooling, TrainPass};
pub use optim::{Optimizer, OptimizerKind, OptimizerState};
pub use tensor::Tensor;

/// Anything that turns a wide-beam measurement vector into a class
/// distribution. Implemented by trained networks and by fixed stubs.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn predict(&self, measurements: &[num_complex::Complex64]) -> crate::Result<Vec<f64>>;

    fn predict_batch(&self, batch: &[&[num_complex::Complex64]]) -> crate::Result<Vec<Vec<f64>>> {
        batch.iter().map(|y| self.predict(y)).collect()
    }
}

/// A classifier that ignores its input and returns a fixed distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDistribution(pub Vec<f64>);

impl FixedDistribution {
    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    /// All mass on `class` (1-based).
    pub fn one_hot(classes: usize, class: usize) -> Self {
        let mut p = vec![0.0; classes];
        p[class - 1] = 1.0;
        Self(p)
    }
}

impl Classifier for FixedDistribution {
    fn num_classes(&self) -> usize {
        self.0.len()
    }

    fn predict(&self, _measurements: &[num_complex::Complex64]) -> crate::Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}
