//! Versioned binary model files.
//!
//! Layout (little-endian): magic `XLNN`, version u32, input channels u32,
//! input length u32, layer count u32; per layer a tag u8 and four u32
//! shape fields; then per layer its arrays, each as a u64 length followed by
//! f64 values (conv/linear: weight, bias; batch norm: gamma, beta, running
//! mean, running variance); finally the SHA-256 of every preceding byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::layers::{Layer, LayerSpec};
use super::NetworkModel;
use crate::codebook::ByteReader;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"XLNN";
pub const MODEL_VERSION: u32 = 1;

fn spec_fields(spec: LayerSpec) -> (u8, [u32; 4]) {
    match spec {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => (
            0,
            [in_channels as u32, out_channels as u32, kernel as u32, padding as u32],
        ),
        LayerSpec::Relu => (1, [0; 4]),
        LayerSpec::BatchNorm { channels } => (2, [channels as u32, 0, 0, 0]),
        LayerSpec::AvgPool => (3, [0; 4]),
        LayerSpec::Linear { inputs, outputs } => (4, [inputs as u32, outputs as u32, 0, 0]),
        LayerSpec::Softmax { classes } => (5, [classes as u32, 0, 0, 0]),
        LayerSpec::Flatten => (6, [0; 4]),
    }
}

fn spec_from_fields(tag: u8, f: [u32; 4]) -> Result<LayerSpec> {
    let u = |i: usize| f[i] as usize;
    Ok(match tag {
        0 => LayerSpec::Conv1d {
            in_channels: u(0),
            out_channels: u(1),
            kernel: u(2),
            padding: u(3),
        },
        1 => LayerSpec::Relu,
        2 => LayerSpec::BatchNorm { channels: u(0) },
        3 => LayerSpec::AvgPool,
        4 => LayerSpec::Linear {
            inputs: u(0),
            outputs: u(1),
        },
        5 => LayerSpec::Softmax { classes: u(0) },
        6 => LayerSpec::Flatten,
        t => return Err(Error::Format(format!("unknown layer tag {t}"))),
    })
}

fn arrays(layer: &Layer) -> Vec<&Vec<f64>> {
    match layer {
        Layer::Conv1d { weight, bias, .. } | Layer::Linear { weight, bias, .. } => vec![weight, bias],
        Layer::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
        } => vec![gamma, beta, running_mean, running_var],
        _ => Vec::new(),
    }
}

pub fn write_model<W: Write>(mut w: W, model: &NetworkModel) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + model.num_parameters() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.input_channels() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.input_len() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        let (tag, fields) = spec_fields(layer.spec());
        buf.push(tag);
        for f in fields {
            buf.extend_from_slice(&f.to_le_bytes());
        }
    }
    for layer in model.layers() {
        for arr in arrays(layer) {
            buf.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for v in arr {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<NetworkModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rd = ByteReader::new(&bytes);
    rd.expect_magic(MAGIC)?;
    let version = rd.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    if bytes.len() < 32 + rd.position() {
        return Err(Error::Format("file too short for checksum".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checksum mismatch".into()));
    }
    let input_channels = rd.u32()? as usize;
    let input_len = rd.u32()? as usize;
    let count = rd.u32()? as usize;
    let mut specs = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let tag = rd.u8()?;
        let fields = [rd.u32()?, rd.u32()?, rd.u32()?, rd.u32()?];
        specs.push(spec_from_fields(tag, fields)?);
    }
    let mut read_array = |expected: usize| -> Result<Vec<f64>> {
        let len = rd.u64()? as usize;
        if len != expected {
            return Err(Error::Format(format!(
                "array of {len} values where {expected} expected"
            )));
        }
        (0..len).map(|_| rd.f64()).collect()
    };
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        layers.push(match spec {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Layer::Conv1d {
                spec,
                weight: read_array(kernel * in_channels * out_channels)?,
                bias: read_array(out_channels)?,
            },
            LayerSpec::Linear { inputs, outputs } => Layer::Linear {
                inputs,
                outputs,
                weight: read_array(inputs * outputs)?,
                bias: read_array(outputs)?,
            },
            LayerSpec::BatchNorm { channels } => Layer::BatchNorm {
                gamma: read_array(channels)?,
                beta: read_array(channels)?,
                running_mean: read_array(channels)?,
                running_var: read_array(channels)?,
            },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::AvgPool => Layer::AvgPool,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Softmax { classes } => Layer::Softmax { classes },
        });
    }
    if rd.remaining() != 32 {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    NetworkModel::from_layers(input_channels, input_len, layers)
}

pub fn save_model(path: impl AsRef<Path>, model: &NetworkModel) -> Result<()> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    read_model(fs::File::open(path)?)
}
