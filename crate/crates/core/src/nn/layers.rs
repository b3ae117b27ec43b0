use rand::Rng;

use crate::linalg::{gemm, Mat};

/// Architecture entry. Channel/feature counts are explicit so that a layer
/// list can be validated and serialised on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    BatchNorm {
        channels: usize,
    },
    /// Average over the sequence dimension, leaving one value per channel.
    AvgPool,
    /// Concatenate every position's channels into one feature vector.
    Flatten,
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Softmax {
        classes: usize,
    },
}

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `weight` is `(kernel * in_channels) x out_channels`, row `k * in + c`.
    Conv1d {
        spec: LayerSpec,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    AvgPool,
    Flatten,
    /// `weight` is `inputs x outputs`.
    Linear {
        inputs: usize,
        outputs: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Softmax {
        classes: usize,
    },
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.random_range(-limit..=limit)).collect()
}

impl Layer {
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Layer {
        match spec {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Layer::Conv1d {
                spec,
                weight: glorot(
                    rng,
                    in_channels * kernel,
                    out_channels * kernel,
                    kernel * in_channels * out_channels,
                ),
                bias: vec![0.0; out_channels],
            },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::BatchNorm { channels } => Layer::BatchNorm {
                gamma: vec![1.0; channels],
                beta: vec![0.0; channels],
                running_mean: vec![0.0; channels],
                running_var: vec![1.0; channels],
            },
            LayerSpec::AvgPool => Layer::AvgPool,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Linear { inputs, outputs } => Layer::Linear {
                inputs,
                outputs,
                weight: glorot(rng, inputs, outputs, inputs * outputs),
                bias: vec![0.0; outputs],
            },
            LayerSpec::Softmax { classes } => Layer::Softmax { classes },
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv1d { spec, .. } => *spec,
            Layer::Relu => LayerSpec::Relu,
            Layer::BatchNorm { gamma, .. } => LayerSpec::BatchNorm { channels: gamma.len() },
            Layer::AvgPool => LayerSpec::AvgPool,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Linear { inputs, outputs, .. } => LayerSpec::Linear {
                inputs: *inputs,
                outputs: *outputs,
            },
            Layer::Softmax { classes } => LayerSpec::Softmax { classes: *classes },
        }
    }

    /// Trainable parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv1d { weight, bias, .. } | Layer::Linear { weight, bias, .. } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv1d { weight, bias, .. } | Layer::Linear { weight, bias, .. } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => Vec::new(),
        }
    }
}

/// Activation matrix: `rows = batch * seq` rows of `cols` channels.
#[derive(Debug, Clone)]
pub(crate) struct Act {
    pub data: Vec<f64>,
    pub batch: usize,
    pub seq: usize,
    pub cols: usize,
}

impl Act {
    pub fn rows(&self) -> usize {
        self.batch * self.seq
    }
}

/// What a layer keeps from its training-mode forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    /// im2col buffer (conv) or layer input (linear).
    Input(Act),
    /// ReLU output; the gradient mask is `out > 0`.
    Output(Act),
    BatchNorm {
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    Pool {
        seq: usize,
    },
    Softmax {
        probs: Vec<f64>,
    },
}

pub(crate) fn im2col(x: &Act, kernel: usize, padding: usize) -> Act {
    let c = x.cols;
    let out_len = x.seq + 2 * padding + 1 - kernel;
    let width = kernel * c;
    let mut cols = vec![0.0; x.batch * out_len * width];
    for b in 0..x.batch {
        for l in 0..out_len {
            let row = &mut cols[(b * out_len + l) * width..(b * out_len + l + 1) * width];
            for k in 0..kernel {
                let src = l as isize + k as isize - padding as isize;
                if src >= 0 && (src as usize) < x.seq {
                    let s = (b * x.seq + src as usize) * c;
                    row[k * c..(k + 1) * c].copy_from_slice(&x.data[s..s + c]);
                }
            }
        }
    }
    Act {
        data: cols,
        batch: x.batch,
        seq: out_len,
        cols: width,
    }
}

fn col2im(
    dcols: &[f64],
    batch: usize,
    in_seq: usize,
    out_seq: usize,
    channels: usize,
    kernel: usize,
    padding: usize,
) -> Vec<f64> {
    let width = kernel * channels;
    let mut dx = vec![0.0; batch * in_seq * channels];
    for b in 0..batch {
        for l in 0..out_seq {
            let row = &dcols[(b * out_seq + l) * width..(b * out_seq + l + 1) * width];
            for k in 0..kernel {
                let src = l as isize + k as isize - padding as isize;
                if src >= 0 && (src as usize) < in_seq {
                    let d = (b * in_seq + src as usize) * channels;
                    for (t, g) in dx[d..d + channels]
                        .iter_mut()
                        .zip(&row[k * channels..(k + 1) * channels])
                    {
                        *t += g;
                    }
                }
            }
        }
    }
    dx
}

fn affine(x: &Act, weight: &[f64], bias: &[f64], outputs: usize) -> Act {
    let rows = x.rows();
    let mut y = Vec::with_capacity(rows * outputs);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(
        1.0,
        Mat::new(&x.data, rows, x.cols),
        Mat::new(weight, x.cols, outputs),
        1.0,
        &mut y,
    );
    Act {
        data: y,
        batch: x.batch,
        seq: x.seq,
        cols: outputs,
    }
}

fn column_sums(data: &[f64], cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for row in data.chunks_exact(cols) {
        for (a, v) in s.iter_mut().zip(row) {
            *a += v;
        }
    }
    s
}

fn softmax_rows(data: &mut [f64], classes: usize) {
    for row in data.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl Layer {
    /// Forward pass. In training mode batch-norm uses batch statistics and a
    /// cache is returned for the backward pass.
    pub(crate) fn forward(&self, x: Act, train: bool) -> (Act, Option<Cache>) {
        match self {
            Layer::Conv1d { spec, weight, bias } => {
                let LayerSpec::Conv1d {
                    out_channels,
                    kernel,
                    padding,
                    ..
                } = *spec
                else {
                    unreachable!()
                };
                let cols = im2col(&x, kernel, padding);
                let y = affine(&cols, weight, bias, out_channels);
                (y, train.then_some(Cache::Input(cols)))
            }
            Layer::Linear {
                outputs, weight, bias, ..
            } => {
                let y = affine(&x, weight, bias, *outputs);
                (y, train.then_some(Cache::Input(x)))
            }
            Layer::Relu => {
                let mut y = x;
                for v in y.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let cache = train.then(|| Cache::Output(y.clone()));
                (y, cache)
            }
            Layer::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                let c = x.cols;
                let (mean, var) = if train {
                    let n = x.rows() as f64;
                    let mean: Vec<f64> = column_sums(&x.data, c).into_iter().map(|s| s / n).collect();
                    let mut var = vec![0.0; c];
                    for row in x.data.chunks_exact(c) {
                        for ((a, v), m) in var.iter_mut().zip(row).zip(&mean) {
                            *a += (v - m) * (v - m);
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n);
                    (mean, var)
                } else {
                    (running_mean.clone(), running_var.clone())
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut normalized = x.data;
                for row in normalized.chunks_exact_mut(c) {
                    for ((v, m), s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                        *v = (*v - m) * s;
                    }
                }
                let mut y = normalized.clone();
                for row in y.chunks_exact_mut(c) {
                    for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
                        *v = *v * g + b;
                    }
                }
                let out = Act {
                    data: y,
                    batch: x.batch,
                    seq: x.seq,
                    cols: c,
                };
                (
                    out,
                    train.then_some(Cache::BatchNorm {
                        normalized,
                        inv_std,
                        mean,
                        var,
                    }),
                )
            }
            Layer::AvgPool => {
                let c = x.cols;
                let mut y = vec![0.0; x.batch * c];
                for b in 0..x.batch {
                    let dst = &mut y[b * c..(b + 1) * c];
                    for l in 0..x.seq {
                        let src = &x.data[(b * x.seq + l) * c..(b * x.seq + l + 1) * c];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    dst.iter_mut().for_each(|v| *v /= x.seq as f64);
                }
                (
                    Act {
                        data: y,
                        batch: x.batch,
                        seq: 1,
                        cols: c,
                    },
                    train.then_some(Cache::Pool { seq: x.seq }),
                )
            }
            Layer::Flatten => {
                let seq = x.seq;
                // rows of one sample are contiguous, so this is a relabelling
                let out = Act {
                    data: x.data,
                    batch: x.batch,
                    seq: 1,
                    cols: seq * x.cols,
                };
                (out, train.then_some(Cache::Pool { seq }))
            }
            Layer::Softmax { classes } => {
                let mut y = x;
                softmax_rows(&mut y.data, *classes);
                let cache = train.then(|| Cache::Softmax { probs: y.data.clone() });
                (y, cache)
            }
        }
    }

    /// Backward pass: consumes the upstream gradient, returns the gradient
    /// with respect to the layer input (unless `need_input_grad` is false)
    /// and the parameter gradients in [`Layer::params`] order.
    pub(crate) fn backward(&self, cache: &Cache, dy: Act, need_input_grad: bool) -> (Option<Act>, Vec<Vec<f64>>) {
        match (self, cache) {
            (Layer::Conv1d { spec, weight, .. }, Cache::Input(cols)) => {
                let LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                } = *spec
                else {
                    unreachable!()
                };
                let rows = cols.rows();
                let mut dw = vec![0.0; cols.cols * out_channels];
                gemm(
                    1.0,
                    Mat::new(&cols.data, rows, cols.cols).t(),
                    Mat::new(&dy.data, rows, out_channels),
                    0.0,
                    &mut dw,
                );
                let db = column_sums(&dy.data, out_channels);
                let dx = need_input_grad.then(|| {
                    let mut dcols = vec![0.0; rows * cols.cols];
                    gemm(
                        1.0,
                        Mat::new(&dy.data, rows, out_channels),
                        Mat::new(weight, cols.cols, out_channels).t(),
                        0.0,
                        &mut dcols,
                    );
                    let in_seq = cols.seq + kernel - 1 - 2 * padding;
                    let data = col2im(&dcols, cols.batch, in_seq, cols.seq, in_channels, kernel, padding);
                    Act {
                        data,
                        batch: cols.batch,
                        seq: in_seq,
                        cols: in_channels,
                    }
                });
                (dx, vec![dw, db])
            }
            (
                Layer::Linear {
                    inputs,
                    outputs,
                    weight,
                    ..
                },
                Cache::Input(x),
            ) => {
                let rows = x.rows();
                let mut dw = vec![0.0; inputs * outputs];
                gemm(
                    1.0,
                    Mat::new(&x.data, rows, *inputs).t(),
                    Mat::new(&dy.data, rows, *outputs),
                    0.0,
                    &mut dw,
                );
                let db = column_sums(&dy.data, *outputs);
                let dx = need_input_grad.then(|| {
                    let mut dx = vec![0.0; rows * inputs];
                    gemm(
                        1.0,
                        Mat::new(&dy.data, rows, *outputs),
                        Mat::new(weight, *inputs, *outputs).t(),
                        0.0,
                        &mut dx,
                    );
                    Act {
                        data: dx,
                        batch: x.batch,
                        seq: x.seq,
                        cols: *inputs,
                    }
                });
                (dx, vec![dw, db])
            }
            (Layer::Relu, Cache::Output(out)) => {
                let mut dx = dy;
                for (g, o) in dx.data.iter_mut().zip(&out.data) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
                (Some(dx), Vec::new())
            }
            (
                Layer::BatchNorm { gamma, .. },
                Cache::BatchNorm {
                    normalized, inv_std, ..
                },
            ) => {
                let c = dy.cols;
                let n = dy.rows() as f64;
                let mut dgamma = vec![0.0; c];
                let dbeta = column_sums(&dy.data, c);
                for (g_row, n_row) in dy.data.chunks_exact(c).zip(normalized.chunks_exact(c)) {
                    for ((a, g), xh) in dgamma.iter_mut().zip(g_row).zip(n_row) {
                        *a += g * xh;
                    }
                }
                let mut dx = dy;
                for (g_row, n_row) in dx.data.chunks_exact_mut(c).zip(normalized.chunks_exact(c)) {
                    for j in 0..c {
                        let dxhat = g_row[j] * gamma[j];
                        let mean_dxhat = dbeta[j] * gamma[j] / n;
                        let mean_dxhat_xhat = dgamma[j] * gamma[j] / n;
                        g_row[j] = inv_std[j] * (dxhat - mean_dxhat - n_row[j] * mean_dxhat_xhat);
                    }
                }
                (Some(dx), vec![dgamma, dbeta])
            }
            (Layer::AvgPool, Cache::Pool { seq }) => {
                let c = dy.cols;
                let mut dx = Vec::with_capacity(dy.batch * seq * c);
                for row in dy.data.chunks_exact(c) {
                    for _ in 0..*seq {
                        dx.extend(row.iter().map(|g| g / *seq as f64));
                    }
                }
                (
                    Some(Act {
                        data: dx,
                        batch: dy.batch,
                        seq: *seq,
                        cols: c,
                    }),
                    Vec::new(),
                )
            }
            (Layer::Flatten, Cache::Pool { seq }) => {
                let cols = dy.cols / seq;
                (
                    Some(Act {
                        data: dy.data,
                        batch: dy.batch,
                        seq: *seq,
                        cols,
                    }),
                    Vec::new(),
                )
            }
            (Layer::Softmax { classes }, Cache::Softmax { probs }) => {
                // generic softmax Jacobian-vector product
                let mut dx = dy;
                for (g_row, p_row) in dx.data.chunks_exact_mut(*classes).zip(probs.chunks_exact(*classes)) {
                    let dot: f64 = g_row.iter().zip(p_row).map(|(g, p)| g * p).sum();
                    for (g, p) in g_row.iter_mut().zip(p_row) {
                        *g = p * (*g - dot);
                    }
                }
                (Some(dx), Vec::new())
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }

    /// Folds batch statistics from a training pass into the running averages.
    pub(crate) fn update_running(&mut self, cache: &Cache, rows: usize) {
        if let (
            Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            },
            Cache::BatchNorm { mean, var, .. },
        ) = (self, cache)
        {
            let unbias = if rows > 1 { rows as f64 / (rows - 1) as f64 } else { 1.0 };
            for (r, m) in running_mean.iter_mut().zip(mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            for (r, v) in running_var.iter_mut().zip(var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
            }
        }
    }
}
