//! Polar-domain near-field codebook and far-field narrow/wide codebooks.
//!
//! All external indices are 1-based: angle `n` in `1..=N`, ring `s` in
//! `1..=S`, codeword `i = (s-1) N + n` in `1..=N S`.
//!
//! Combining codewords use `e^{+j pi k sin(theta)}` phase progressions while
//! channels carry `e^{-j 2pi r / lambda}` terms, so `w^H h` is phase-aligned
//! when a codeword matches a path.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{near_steering, ArrayConfig};

/// Sine-domain angle grid `theta_n = -1 + (2n - 1) / N`, `n = 1..=N`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| -1.0 + (2 * k - 1) as f64 / n as f64).collect()
}

/// How ring distances are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RingSampling {
    /// `1/r_s` evenly spaced between `1/r_max` and `1/r_min`, same for every angle.
    #[default]
    InverseUniform,
    /// As `InverseUniform`, then scaled by `1 - theta_n^2`.
    InverseUniformAngleScaled,
}

/// S x N ring distances. Ring 1 is the farthest (`r_max`).
pub fn ring_grid(
    num_rings: usize,
    r_min: f64,
    r_max: f64,
    angles: &[f64],
    sampling: RingSampling,
) -> Result<Vec<Vec<f64>>> {
    if num_rings == 0 {
        return Err(Error::InvalidConfig("need at least one distance ring".into()));
    }
    if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "ring range must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    let inv_far = 1.0 / r_max;
    let inv_near = 1.0 / r_min;
    let rings = (0..num_rings).map(|s| {
        if num_rings == 1 {
            r_max
        } else {
            1.0 / (inv_far + s as f64 / (num_rings - 1) as f64 * (inv_near - inv_far))
        }
    });
    Ok(rings
        .map(|r| {
            angles
                .iter()
                .map(|&th| match sampling {
                    RingSampling::InverseUniform => r,
                    RingSampling::InverseUniformAngleScaled => r * (1.0 - th * th),
                })
                .collect()
        })
        .collect())
}

/// `(s, n) -> (s-1) N + n`, all 1-based.
pub fn codeword_index(s: usize, n: usize, num_angles: usize, num_rings: usize) -> Result<usize> {
    if n == 0 || n > num_angles {
        return Err(Error::IndexOutOfRange {
            index: n,
            max: num_angles,
        });
    }
    if s == 0 || s > num_rings {
        return Err(Error::IndexOutOfRange {
            index: s,
            max: num_rings,
        });
    }
    Ok((s - 1) * num_angles + n)
}

/// Inverse of [`codeword_index`].
pub fn index_to_pair(i: usize, num_angles: usize, num_rings: usize) -> Result<(usize, usize)> {
    let max = num_angles * num_rings;
    if i == 0 || i > max {
        return Err(Error::IndexOutOfRange { index: i, max });
    }
    Ok(((i - 1) / num_angles + 1, (i - 1) % num_angles + 1))
}

/// Common read access to a set of equal-length codewords.
pub trait Codebook {
    fn array(&self) -> &ArrayConfig;
    /// Flat row-major codeword storage.
    fn raw(&self) -> &[Complex64];

    fn len(&self) -> usize {
        self.raw().len() / self.array().num_antennas
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Codeword `i` (1-based).
    fn codeword(&self, i: usize) -> Result<&[Complex64]> {
        let n = self.array().num_antennas;
        if i == 0 || i > self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                max: self.len(),
            });
        }
        Ok(&self.raw()[(i - 1) * n..i * n])
    }

    fn iter(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.raw().chunks_exact(self.array().num_antennas)
    }
}

/// Near-field polar codebook of `N * S` codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCodebook {
    array: ArrayConfig,
    num_rings: usize,
    angles: Vec<f64>,
    rings: Vec<Vec<f64>>,
    data: Vec<Complex64>,
}

impl PolarCodebook {
    pub fn new(array: ArrayConfig, num_rings: usize, r_min: f64, r_max: f64) -> Result<Self> {
        Self::with_sampling(array, num_rings, r_min, r_max, RingSampling::default())
    }

    pub fn with_sampling(
        array: ArrayConfig,
        num_rings: usize,
        r_min: f64,
        r_max: f64,
        sampling: RingSampling,
    ) -> Result<Self> {
        let angles = angle_grid(array.num_antennas);
        let rings = ring_grid(num_rings, r_min, r_max, &angles, sampling)?;
        Ok(Self::from_grid(array, angles, rings))
    }

    fn from_grid(array: ArrayConfig, angles: Vec<f64>, rings: Vec<Vec<f64>>) -> Self {
        let mut data = Vec::with_capacity(rings.len() * angles.len() * array.num_antennas);
        for ring in &rings {
            for (&th, &r) in angles.iter().zip(ring) {
                data.extend(near_steering(&array, th, r));
            }
        }
        Self {
            array,
            num_rings: rings.len(),
            angles,
            rings,
            data,
        }
    }

    pub fn num_angles(&self) -> usize {
        self.array.num_antennas
    }

    pub fn num_rings(&self) -> usize {
        self.num_rings
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Ring distances, indexed `[s-1][n-1]`.
    pub fn ring_distances(&self) -> &[Vec<f64>] {
        &self.rings
    }

    pub fn index(&self, s: usize, n: usize) -> Result<usize> {
        codeword_index(s, n, self.num_angles(), self.num_rings)
    }

    pub fn pair(&self, i: usize) -> Result<(usize, usize)> {
        index_to_pair(i, self.num_angles(), self.num_rings)
    }
}

impl Codebook for PolarCodebook {
    fn array(&self) -> &ArrayConfig {
        &self.array
    }

    fn raw(&self) -> &[Complex64] {
        &self.data
    }
}

/// Far-field codeword over the first `active` antennas with the given sine
/// angle, zero-padded to the full array length.
fn dft_codeword(total: usize, active: usize, sin_theta: f64) -> Vec<Complex64> {
    let amp = 1.0 / (active as f64).sqrt();
    (0..total)
        .map(|k| {
            if k < active {
                Complex64::from_polar(amp, PI * k as f64 * sin_theta)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Narrow far-field codeword `n` (1-based) on the `angle_grid(N)` grid.
pub fn narrow_codeword(cfg: &ArrayConfig, n: usize) -> Result<Vec<Complex64>> {
    let total = cfg.num_antennas;
    if n == 0 || n > total {
        return Err(Error::IndexOutOfRange { index: n, max: total });
    }
    let sin_theta = -1.0 + (2 * n - 1) as f64 / total as f64;
    Ok(dft_codeword(total, total, sin_theta))
}

fn check_subarray(cfg: &ArrayConfig, factor: usize) -> Result<usize> {
    if factor == 0 || !cfg.num_antennas.is_multiple_of(factor) {
        return Err(Error::InvalidConfig(format!(
            "wide-beam factor T={factor} must divide N={}",
            cfg.num_antennas
        )));
    }
    Ok(cfg.num_antennas / factor)
}

/// Wide far-field codeword `m` (1-based) driven by the first `N/T` antennas.
pub fn wide_codeword(cfg: &ArrayConfig, m: usize, factor: usize) -> Result<Vec<Complex64>> {
    let num_wide = check_subarray(cfg, factor)?;
    if m == 0 || m > num_wide {
        return Err(Error::IndexOutOfRange {
            index: m,
            max: num_wide,
        });
    }
    let sin_theta = -1.0 + (2 * m - 1) as f64 / num_wide as f64;
    Ok(dft_codeword(cfg.num_antennas, num_wide, sin_theta))
}

/// All `N` narrow beams.
#[derive(Debug, Clone, PartialEq)]
pub struct NarrowCodebook {
    array: ArrayConfig,
    data: Vec<Complex64>,
}

impl NarrowCodebook {
    pub fn new(array: ArrayConfig) -> Self {
        let data = (1..=array.num_antennas)
            .flat_map(|n| narrow_codeword(&array, n).expect("index within grid"))
            .collect();
        Self { array, data }
    }
}

impl Codebook for NarrowCodebook {
    fn array(&self) -> &ArrayConfig {
        &self.array
    }

    fn raw(&self) -> &[Complex64] {
        &self.data
    }
}

/// All `M = N/T` wide beams.
#[derive(Debug, Clone, PartialEq)]
pub struct WideCodebook {
    array: ArrayConfig,
    factor: usize,
    data: Vec<Complex64>,
}

impl WideCodebook {
    pub fn new(array: ArrayConfig, factor: usize) -> Result<Self> {
        let num_wide = check_subarray(&array, factor)?;
        let mut data = Vec::with_capacity(num_wide * array.num_antennas);
        for m in 1..=num_wide {
            data.extend(wide_codeword(&array, m, factor)?);
        }
        Ok(Self { array, factor, data })
    }

    /// Narrow beams per wide beam (`T`).
    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn subarray_size(&self) -> usize {
        self.array.num_antennas / self.factor
    }
}

impl Codebook for WideCodebook {
    fn array(&self) -> &ArrayConfig {
        &self.array
    }

    fn raw(&self) -> &[Complex64] {
        &self.data
    }
}

const CODEBOOK_MAGIC: &[u8; 4] = b"XLCB";
const CODEBOOK_VERSION: u32 = 1;

/// Any codebook as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredCodebook {
    Polar(PolarCodebook),
    Narrow(NarrowCodebook),
    Wide(WideCodebook),
}

impl StoredCodebook {
    fn kind(&self) -> u8 {
        match self {
            StoredCodebook::Polar(_) => 0,
            StoredCodebook::Narrow(_) => 1,
            StoredCodebook::Wide(_) => 2,
        }
    }

    fn as_dyn(&self) -> &dyn Codebook {
        match self {
            StoredCodebook::Polar(b) => b,
            StoredCodebook::Narrow(b) => b,
            StoredCodebook::Wide(b) => b,
        }
    }
}

/// Layout (little-endian): magic `XLCB`, version u32, kind u8 (0 polar,
/// 1 narrow, 2 wide), N u32, S or T u32 (1 for narrow), codeword count u32,
/// wavelength f64, spacing f64; for polar books the S x N ring distances as
/// f64; then every codeword row-major as interleaved re/im f64 pairs.
pub fn write_codebook<W: Write>(mut w: W, book: &StoredCodebook) -> Result<()> {
    let inner = book.as_dyn();
    let array = inner.array();
    let param = match book {
        StoredCodebook::Polar(b) => b.num_rings,
        StoredCodebook::Narrow(_) => 1,
        StoredCodebook::Wide(b) => b.factor,
    };
    let mut buf = Vec::with_capacity(40 + inner.raw().len() * 16);
    buf.extend_from_slice(CODEBOOK_MAGIC);
    buf.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
    buf.push(book.kind());
    buf.extend_from_slice(&(array.num_antennas as u32).to_le_bytes());
    buf.extend_from_slice(&(param as u32).to_le_bytes());
    buf.extend_from_slice(&(inner.len() as u32).to_le_bytes());
    buf.extend_from_slice(&array.wavelength.to_le_bytes());
    buf.extend_from_slice(&array.spacing.to_le_bytes());
    if let StoredCodebook::Polar(b) = book {
        for r in b.rings.iter().flatten() {
            buf.extend_from_slice(&r.to_le_bytes());
        }
    }
    for z in inner.raw() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format("bad magic".into()));
        }
        Ok(())
    }
}

pub fn read_codebook<R: Read>(mut r: R) -> Result<StoredCodebook> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rd = ByteReader::new(&bytes);
    rd.expect_magic(CODEBOOK_MAGIC)?;
    let version = rd.u32()?;
    if version != CODEBOOK_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CODEBOOK_VERSION,
        });
    }
    let kind = rd.u8()?;
    let n = rd.u32()? as usize;
    let param = rd.u32()? as usize;
    let count = rd.u32()? as usize;
    let wavelength = rd.f64()?;
    let spacing = rd.f64()?;
    let array = ArrayConfig::with_spacing(n, wavelength, spacing)?;
    let expected_count = match kind {
        0 => n * param,
        1 => n,
        2 => {
            check_subarray(&array, param)?;
            n / param
        }
        k => return Err(Error::Format(format!("unknown codebook kind {k}"))),
    };
    if count != expected_count {
        return Err(Error::Format(format!(
            "codeword count {count} inconsistent with header"
        )));
    }
    let rings = if kind == 0 {
        let mut rings = Vec::with_capacity(param);
        for _ in 0..param {
            let row = (0..n).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
            rings.push(row);
        }
        rings
    } else {
        Vec::new()
    };
    if rd.remaining() != count * n * 16 {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {}",
            rd.remaining(),
            count * n * 16
        )));
    }
    let mut data = Vec::with_capacity(count * n);
    for _ in 0..count * n {
        let re = rd.f64()?;
        let im = rd.f64()?;
        data.push(Complex64::new(re, im));
    }
    Ok(match kind {
        0 => StoredCodebook::Polar(PolarCodebook {
            array,
            num_rings: param,
            angles: angle_grid(n),
            rings,
            data,
        }),
        1 => StoredCodebook::Narrow(NarrowCodebook { array, data }),
        _ => StoredCodebook::Wide(WideCodebook {
            array,
            factor: param,
            data,
        }),
    })
}
