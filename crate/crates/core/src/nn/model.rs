use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Act, Cache, Layer, LayerSpec};
use super::loss::{mean_cross_entropy, PROB_FLOOR};
use super::{Classifier, Tensor};
use crate::error::{Error, Result};

/// Width/depth knobs for the classifier stack. The default has two conv
/// blocks (64, 256 channels, kernel 3, padding 1), global average pooling,
/// hidden layers 1024-1024-512, then the softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub padding: usize,
    pub hidden: Vec<usize>,
    /// Whether the last hidden layer also gets a batch-norm layer.
    pub batch_norm_last_hidden: bool,
    pub pooling: Pooling,
}

/// How the conv feature map is reduced before the dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Mean over positions; the dense input is one value per channel.
    #[default]
    Average,
    /// Keep every position; the dense input is channels times positions.
    Flatten,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![64, 256],
            kernel: 3,
            padding: 1,
            hidden: vec![1024, 1024, 512],
            batch_norm_last_hidden: false,
            pooling: Pooling::Average,
        }
    }
}

impl NetConfig {
    pub fn layer_specs(&self, input_channels: usize, input_len: usize, head_size: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut channels = input_channels;
        for &out in &self.conv_channels {
            specs.push(LayerSpec::Conv1d {
                in_channels: channels,
                out_channels: out,
                kernel: self.kernel,
                padding: self.padding,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::BatchNorm { channels: out });
            channels = out;
        }
        match self.pooling {
            Pooling::Average => specs.push(LayerSpec::AvgPool),
            Pooling::Flatten => {
                specs.push(LayerSpec::Flatten);
                let len = self.conv_channels.iter().fold(input_len, |len, _| {
                    (len + 2 * self.padding + 1).saturating_sub(self.kernel)
                });
                channels *= len;
            }
        }
        for (i, &width) in self.hidden.iter().enumerate() {
            specs.push(LayerSpec::Linear {
                inputs: channels,
                outputs: width,
            });
            specs.push(LayerSpec::Relu);
            if i + 1 < self.hidden.len() || self.batch_norm_last_hidden {
                specs.push(LayerSpec::BatchNorm { channels: width });
            }
            channels = width;
        }
        specs.push(LayerSpec::Linear {
            inputs: channels,
            outputs: head_size,
        });
        specs.push(LayerSpec::Softmax { classes: head_size });
        specs
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Seq { channels: usize, len: usize },
    Flat { features: usize },
}

fn validate(specs: &[LayerSpec], input_channels: usize, input_len: usize) -> Result<usize> {
    let bad = |i: usize, msg: String| Err(Error::InvalidConfig(format!("layer {i}: {msg}")));
    let mut shape = Shape::Seq {
        channels: input_channels,
        len: input_len,
    };
    for (i, spec) in specs.iter().enumerate() {
        shape = match (*spec, shape) {
            (
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                },
                Shape::Seq { channels, len },
            ) => {
                if in_channels != channels {
                    return bad(i, format!("conv expects {in_channels} channels, input has {channels}"));
                }
                if kernel == 0 || len + 2 * padding < kernel || out_channels == 0 {
                    return bad(i, "conv kernel does not fit the sequence".into());
                }
                Shape::Seq {
                    channels: out_channels,
                    len: len + 2 * padding + 1 - kernel,
                }
            }
            (LayerSpec::Relu, s) => s,
            (LayerSpec::BatchNorm { channels }, s) => {
                let have = match s {
                    Shape::Seq { channels, .. } => channels,
                    Shape::Flat { features } => features,
                };
                if have != channels {
                    return bad(i, format!("batch norm over {channels} channels, input has {have}"));
                }
                s
            }
            (LayerSpec::AvgPool, Shape::Seq { channels, .. }) => Shape::Flat { features: channels },
            (LayerSpec::Flatten, Shape::Seq { channels, len }) => Shape::Flat {
                features: channels * len,
            },
            (LayerSpec::Linear { inputs, outputs }, Shape::Flat { features }) => {
                if inputs != features || outputs == 0 {
                    return bad(i, format!("linear expects {inputs} features, input has {features}"));
                }
                Shape::Flat { features: outputs }
            }
            (LayerSpec::Softmax { classes }, Shape::Flat { features }) => {
                if classes != features || i + 1 != specs.len() {
                    return bad(i, "softmax must be the last layer and match the feature count".into());
                }
                Shape::Flat { features }
            }
            (spec, _) => return bad(i, format!("{spec:?} cannot follow the previous layer")),
        };
    }
    match (specs.last(), shape) {
        (Some(LayerSpec::Softmax { .. }), Shape::Flat { features }) => Ok(features),
        _ => Err(Error::InvalidConfig("network must end in a softmax head".into())),
    }
}

/// Classifier network taking `B x C x M` inputs and producing `B x classes`
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    input_channels: usize,
    input_len: usize,
    head_size: usize,
    layers: Vec<Layer>,
}

/// Parameter gradients in [`NetworkModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

/// Everything a training-mode forward pass leaves behind.
#[derive(Debug, Clone)]
pub struct TrainPass {
    probs: Tensor,
    caches: Vec<Cache>,
    rows: Vec<usize>,
}

impl TrainPass {
    pub fn probabilities(&self) -> &Tensor {
        &self.probs
    }
}

impl NetworkModel {
    pub fn from_specs<R: Rng + ?Sized>(
        specs: &[LayerSpec],
        input_channels: usize,
        input_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let head_size = validate(specs, input_channels, input_len)?;
        let layers = specs.iter().map(|&s| Layer::init(s, rng)).collect();
        Ok(Self {
            input_channels,
            input_len,
            head_size,
            layers,
        })
    }

    /// Two-channel (real/imaginary) classifier over `input_len` wide beams.
    pub fn new<R: Rng + ?Sized>(config: &NetConfig, input_len: usize, head_size: usize, rng: &mut R) -> Result<Self> {
        Self::from_specs(&config.layer_specs(2, input_len, head_size), 2, input_len, rng)
    }

    pub(crate) fn from_layers(input_channels: usize, input_len: usize, layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        let head_size = validate(&specs, input_channels, input_len)?;
        Ok(Self {
            input_channels,
            input_len,
            head_size,
            layers,
        })
    }

    pub fn head_size(&self) -> usize {
        self.head_size
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn parameters(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn to_act(&self, batch: &Tensor) -> Result<Act> {
        let shape = batch.shape();
        if shape.len() != 3 || shape[1] != self.input_channels || shape[2] != self.input_len {
            return Err(Error::InvalidConfig(format!(
                "expected input of shape (B, {}, {}), got {:?}",
                self.input_channels, self.input_len, shape
            )));
        }
        let (b, c, m) = (shape[0], shape[1], shape[2]);
        let src = batch.data();
        let mut data = vec![0.0; b * c * m];
        for i in 0..b {
            for ch in 0..c {
                for l in 0..m {
                    data[(i * m + l) * c + ch] = src[(i * c + ch) * m + l];
                }
            }
        }
        Ok(Act {
            data,
            batch: b,
            seq: m,
            cols: c,
        })
    }

    /// Inference with batch-norm running statistics.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut act = self.to_act(batch)?;
        for layer in &self.layers {
            act = layer.forward(act, false).0;
        }
        Ok(Tensor::from_parts(vec![act.batch, self.head_size], act.data))
    }

    /// Training-mode forward pass (batch statistics in batch-norm layers).
    pub fn forward_train(&self, batch: &Tensor) -> Result<TrainPass> {
        let mut act = self.to_act(batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut rows = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            rows.push(act.rows());
            let (out, cache) = layer.forward(act, true);
            caches.push(cache.expect("training forward always caches"));
            act = out;
        }
        let probs = Tensor::from_parts(vec![act.batch, self.head_size], act.data);
        Ok(TrainPass { probs, caches, rows })
    }

    fn check_labels(&self, pass: &TrainPass, labels: &[usize]) -> Result<()> {
        let b = pass.probs.shape()[0];
        if labels.len() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                actual: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.head_size) {
            return Err(Error::IndexOutOfRange {
                index: l + 1,
                max: self.head_size,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy of a training pass (0-based labels).
    pub fn loss(&self, pass: &TrainPass, labels: &[usize]) -> Result<f64> {
        self.check_labels(pass, labels)?;
        Ok(mean_cross_entropy(pass.probs.data(), self.head_size, labels))
    }

    /// Exact gradients of the mean cross-entropy over the batch.
    pub fn backward(&self, pass: &TrainPass, labels: &[usize]) -> Result<Gradients> {
        self.check_labels(pass, labels)?;
        let classes = self.head_size;
        let b = labels.len();
        let scale = 1.0 / (b as f64 * std::f64::consts::LN_10);
        let mut dprobs = vec![0.0; b * classes];
        for (i, &l) in labels.iter().enumerate() {
            let p = pass.probs.data()[i * classes + l];
            // the clamp makes the loss flat below the floor
            if p >= PROB_FLOOR {
                dprobs[i * classes + l] = -scale / p;
            }
        }
        let mut grad = Act {
            data: dprobs,
            batch: b,
            seq: 1,
            cols: classes,
        };
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let first_param = self.layers.iter().position(|l| !l.params().is_empty()).unwrap_or(0);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (dx, grads) = layer.backward(&pass.caches[i], grad, i > first_param);
            per_layer[i] = grads;
            match dx {
                Some(dx) => grad = dx,
                None => break,
            }
        }
        Ok(Gradients(per_layer.into_iter().flatten().collect()))
    }

    /// Updates batch-norm running statistics from a training pass.
    pub fn update_running_stats(&mut self, pass: &TrainPass) {
        for ((layer, cache), &rows) in self.layers.iter_mut().zip(&pass.caches).zip(&pass.rows) {
            layer.update_running(cache, rows);
        }
    }
}

impl Classifier for NetworkModel {
    fn num_classes(&self) -> usize {
        self.head_size
    }

    fn predict(&self, measurements: &[num_complex::Complex64]) -> Result<Vec<f64>> {
        let x = super::input_encode(measurements);
        let batch = Tensor::from_parts(vec![1, 2, measurements.len()], x.into_data());
        Ok(self.forward(&batch)?.into_data())
    }

    fn predict_batch(&self, batch: &[&[num_complex::Complex64]]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(PREDICT_CHUNK) {
            let probs = self.forward(&super::encode_batch(chunk.iter().copied()))?;
            out.extend(probs.rows().map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}

const PREDICT_CHUNK: usize = 1000;
