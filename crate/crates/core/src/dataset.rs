//! Labelled wide-beam measurement datasets: generation from per-sample
//! seeds, the binary file format, the train/val/test split and label audit.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use crate::codebook::{ByteReader, Codebook, PolarCodebook, RingSampling, WideCodebook};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{sample_paths, synth_channel, ArrayConfig, ScenarioConfig};
use crate::measurement::{measure_wide, sweep_oracle, LinkConfig};
use crate::seed::{derive_seed, rng_from_seed};

const DATASET_MAGIC: &[u8; 4] = b"XLDS";
pub const DATASET_VERSION: u32 = 1;

/// One in this many samples is regenerated when a file is loaded.
const AUDIT_STRIDE: usize = 100;

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub num_antennas: usize,
    pub wavelength: f64,
    pub spacing: f64,
    pub num_rings: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub ring_sampling: RingSampling,
    pub wide_factor: usize,
    pub scenario: ScenarioConfig,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub noise_variance: f64,
    pub samples: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let array = cfg.array_config()?;
        Ok(Self {
            num_antennas: array.num_antennas,
            wavelength: array.wavelength,
            spacing: array.spacing,
            num_rings: cfg.codebook.num_rings,
            r_min: cfg.codebook.r_min,
            r_max: cfg.codebook.r_max,
            ring_sampling: cfg.codebook.ring_sampling,
            wide_factor: cfg.codebook.wide_factor,
            scenario: cfg.scenario.clone(),
            snr_db_min: cfg.dataset.snr_db_min,
            snr_db_max: cfg.dataset.snr_db_max,
            noise_variance: cfg.link.noise_variance,
            samples: cfg.dataset.samples,
            seed: cfg.seed,
        })
    }

    pub fn codebooks(&self) -> Result<(PolarCodebook, WideCodebook)> {
        let array = ArrayConfig::with_spacing(self.num_antennas, self.wavelength, self.spacing)?;
        let polar = PolarCodebook::with_sampling(array, self.num_rings, self.r_min, self.r_max, self.ring_sampling)?;
        Ok((polar, WideCodebook::new(array, self.wide_factor)?))
    }

    pub fn num_wide_beams(&self) -> usize {
        self.num_antennas / self.wide_factor
    }

    pub fn sample_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[index as u64])
    }
}

/// A wide-beam measurement vector with its optimal codeword labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub measurements: Vec<Complex64>,
    /// Angle index of the best codeword, 1-based.
    pub label_angle: u32,
    /// Ring index of the best codeword, 1-based.
    pub label_ring: u32,
    pub snr_db: f64,
    pub seed: u64,
}

/// Sizes of the contiguous train, validation and test blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Split {
    /// 10% validation and 10% test (rounded down), the rest for training.
    pub fn for_count(n: usize) -> Self {
        let val = n / 10;
        let test = n / 10;
        Self {
            train: n - val - test,
            val,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.train
    }

    pub fn val_range(&self) -> Range<usize> {
        self.train..self.train + self.val
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train + self.val..self.total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub split: Split,
    pub samples: Vec<Sample>,
}

/// Draws one sample from its seed: channel, SNR, noisy wide sweep, and the
/// noiseless oracle labels.
pub fn draw_sample(spec: &DatasetSpec, polar: &PolarCodebook, wide: &WideCodebook, seed: u64) -> Result<Sample> {
    let mut rng = rng_from_seed(seed);
    let paths = sample_paths(&mut rng, &spec.scenario);
    let h = synth_channel(polar.array(), &paths)?;
    let snr_db = if spec.snr_db_max > spec.snr_db_min {
        rng.random_range(spec.snr_db_min..spec.snr_db_max)
    } else {
        spec.snr_db_min
    };
    let power = spec.noise_variance * 10f64.powf(snr_db / 10.0);
    let link = LinkConfig::new(power, spec.noise_variance, Complex64::new(1.0, 0.0))?;
    let y = measure_wide(wide, &h, &link, &mut rng)?;
    let best = sweep_oracle(polar, &h)?;
    Ok(Sample {
        measurements: y.values,
        label_angle: best.angle as u32,
        label_ring: best.ring as u32,
        snr_db,
        seed,
    })
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.scenario.validate()?;
    if spec.samples == 0 {
        return Err(Error::InvalidConfig("dataset needs at least one sample".into()));
    }
    let (polar, wide) = spec.codebooks()?;
    let samples = (0..spec.samples)
        .map(|i| draw_sample(spec, &polar, &wide, spec.sample_seed(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        split: Split::for_count(spec.samples),
        samples,
    })
}

impl Dataset {
    pub fn train(&self) -> &[Sample] {
        &self.samples[self.split.train_range()]
    }

    pub fn val(&self) -> &[Sample] {
        &self.samples[self.split.val_range()]
    }

    pub fn test(&self) -> &[Sample] {
        &self.samples[self.split.test_range()]
    }

    /// Regenerates every `stride`-th sample from its seed and checks the
    /// stored labels against it.
    pub fn audit(&self, stride: usize) -> Result<()> {
        let (polar, wide) = self.spec.codebooks()?;
        for index in (0..self.samples.len()).step_by(stride.max(1)) {
            let stored = &self.samples[index];
            if stored.seed != self.spec.sample_seed(index) {
                return Err(Error::Audit {
                    index,
                    reason: "seed does not match the base seed".into(),
                });
            }
            let fresh = draw_sample(&self.spec, &polar, &wide, stored.seed)?;
            if (fresh.label_angle, fresh.label_ring) != (stored.label_angle, stored.label_ring) {
                return Err(Error::Audit {
                    index,
                    reason: format!(
                        "stored labels ({}, {}) but the sweep gives ({}, {})",
                        stored.label_angle, stored.label_ring, fresh.label_angle, fresh.label_ring
                    ),
                });
            }
        }
        Ok(())
    }
}

fn sampling_tag(s: RingSampling) -> u8 {
    match s {
        RingSampling::InverseUniform => 0,
        RingSampling::InverseUniformAngleScaled => 1,
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn write_dataset<W: Write>(mut w: W, ds: &Dataset) -> Result<()> {
    let s = &ds.spec;
    let m = s.num_wide_beams();
    let mut buf = Vec::with_capacity(256 + ds.samples.len() * (16 * m + 24));
    buf.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut buf, DATASET_VERSION as usize);
    put_u32(&mut buf, s.num_antennas);
    put_u32(&mut buf, s.num_rings);
    put_u32(&mut buf, m);
    put_u32(&mut buf, s.wide_factor);
    put_f64(&mut buf, s.wavelength);
    put_f64(&mut buf, s.spacing);
    put_f64(&mut buf, s.r_min);
    put_f64(&mut buf, s.r_max);
    buf.push(sampling_tag(s.ring_sampling));
    let sc = &s.scenario;
    put_u32(&mut buf, sc.num_paths);
    for v in [
        sc.los_gain_variance,
        sc.nlos_gain_variance,
        sc.distance_min,
        sc.distance_max,
        sc.angle_min,
        sc.angle_max,
    ] {
        put_f64(&mut buf, v);
    }
    put_f64(&mut buf, s.snr_db_min);
    put_f64(&mut buf, s.snr_db_max);
    put_f64(&mut buf, s.noise_variance);
    for v in [ds.samples.len(), ds.split.train, ds.split.val, ds.split.test] {
        put_u64(&mut buf, v as u64);
    }
    put_u64(&mut buf, s.seed);
    for sample in &ds.samples {
        if sample.measurements.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: sample.measurements.len(),
            });
        }
        for y in &sample.measurements {
            put_f64(&mut buf, y.re);
            put_f64(&mut buf, y.im);
        }
        buf.extend_from_slice(&sample.label_angle.to_le_bytes());
        buf.extend_from_slice(&sample.label_ring.to_le_bytes());
        put_f64(&mut buf, sample.snr_db);
        put_u64(&mut buf, sample.seed);
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a dataset without the label audit.
pub fn read_dataset_unchecked<R: Read>(mut r: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rd = ByteReader::new(&bytes);
    rd.expect_magic(DATASET_MAGIC)?;
    let version = rd.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let num_antennas = rd.u32()? as usize;
    let num_rings = rd.u32()? as usize;
    let m = rd.u32()? as usize;
    let wide_factor = rd.u32()? as usize;
    let wavelength = rd.f64()?;
    let spacing = rd.f64()?;
    let r_min = rd.f64()?;
    let r_max = rd.f64()?;
    let ring_sampling = match rd.u8()? {
        0 => RingSampling::InverseUniform,
        1 => RingSampling::InverseUniformAngleScaled,
        t => return Err(Error::Format(format!("unknown ring sampling tag {t}"))),
    };
    let scenario = ScenarioConfig {
        num_paths: rd.u32()? as usize,
        los_gain_variance: rd.f64()?,
        nlos_gain_variance: rd.f64()?,
        distance_min: rd.f64()?,
        distance_max: rd.f64()?,
        angle_min: rd.f64()?,
        angle_max: rd.f64()?,
    };
    let snr_db_min = rd.f64()?;
    let snr_db_max = rd.f64()?;
    let noise_variance = rd.f64()?;
    let count = rd.u64()? as usize;
    let split = Split {
        train: rd.u64()? as usize,
        val: rd.u64()? as usize,
        test: rd.u64()? as usize,
    };
    let seed = rd.u64()?;
    if split.total() != count {
        return Err(Error::Format(format!(
            "split sizes sum to {} but the header lists {count} samples",
            split.total()
        )));
    }
    if wide_factor == 0 || num_antennas / wide_factor != m {
        return Err(Error::Format(format!(
            "{m} wide beams do not match N = {num_antennas}, T = {wide_factor}"
        )));
    }
    let record = 16 * m + 24;
    if rd.remaining() != count * record {
        return Err(Error::Format(format!(
            "expected {} record bytes, found {}",
            count * record,
            rd.remaining()
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let measurements = (0..m)
            .map(|_| Ok(Complex64::new(rd.f64()?, rd.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        let label_angle = rd.u32()?;
        let label_ring = rd.u32()?;
        if label_angle == 0 || label_angle as usize > num_antennas || label_ring == 0 || label_ring as usize > num_rings
        {
            return Err(Error::Format(format!(
                "labels ({label_angle}, {label_ring}) out of range"
            )));
        }
        samples.push(Sample {
            measurements,
            label_angle,
            label_ring,
            snr_db: rd.f64()?,
            seed: rd.u64()?,
        });
    }
    let spec = DatasetSpec {
        num_antennas,
        wavelength,
        spacing,
        num_rings,
        r_min,
        r_max,
        ring_sampling,
        wide_factor,
        scenario,
        snr_db_min,
        snr_db_max,
        noise_variance,
        samples: count,
        seed,
    };
    Ok(Dataset { spec, split, samples })
}

/// Reads a dataset and spot-checks 1% of its labels.
pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let ds = read_dataset_unchecked(r)?;
    ds.audit(AUDIT_STRIDE)?;
    Ok(ds)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_dataset(std::io::BufWriter::new(std::fs::File::create(path)?), ds)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?)
}

/// One row per sample: index, split, labels, SNR and seed.
pub fn write_labels_csv<W: Write>(mut w: W, ds: &Dataset) -> Result<()> {
    writeln!(w, "index,split,label_angle,label_ring,codeword,snr_db,seed")?;
    for (i, s) in ds.samples.iter().enumerate() {
        let part = if ds.split.train_range().contains(&i) {
            "train"
        } else if ds.split.val_range().contains(&i) {
            "val"
        } else {
            "test"
        };
        let codeword = (s.label_ring as usize - 1) * ds.spec.num_antennas + s.label_angle as usize;
        writeln!(
            w,
            "{i},{part},{},{},{codeword},{},{}",
            s.label_angle, s.label_ring, s.snr_db, s.seed
        )?;
    }
    Ok(())
}
