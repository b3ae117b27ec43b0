//! Beam selection from wide-beam measurements: the direct two-head scheme,
//! the top-K/top-L candidate refinement, and the reference baselines.

use num_complex::Complex64;
use rand::Rng;

use crate::codebook::{Codebook, NarrowCodebook, PolarCodebook};
use crate::error::{Error, Result};
use crate::measurement::{measure, LinkConfig};
use crate::nn::Classifier;

/// Outcome of one beam selection. All indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub index: usize,
    pub ring: usize,
    pub angle: usize,
    pub beams_tested: usize,
    /// Codewords measured after the wide sweep, in test order.
    pub candidates: Vec<usize>,
    pub k: usize,
    pub l: usize,
}

impl SchemeResult {
    fn at(book: &PolarCodebook, index: usize, beams_tested: usize) -> Result<Self> {
        let (ring, angle) = book.pair(index)?;
        Ok(Self {
            index,
            ring,
            angle,
            beams_tested,
            candidates: Vec::new(),
            k: 0,
            l: 0,
        })
    }

    pub fn codeword<'a>(&self, book: &'a PolarCodebook) -> &'a [Complex64] {
        book.codeword(self.index)
            .expect("scheme indices come from the same book")
    }
}

/// Head outputs for one measurement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub direction: Vec<f64>,
    pub distance: Vec<f64>,
}

impl HeadOutputs {
    pub fn predict(measurements: &[Complex64], direction: &dyn Classifier, distance: &dyn Classifier) -> Result<Self> {
        Ok(Self {
            direction: direction.predict(measurements)?,
            distance: distance.predict(measurements)?,
        })
    }

    fn check(&self, book: &PolarCodebook) -> Result<()> {
        if self.direction.len() != book.num_angles() {
            return Err(Error::DimensionMismatch {
                expected: book.num_angles(),
                actual: self.direction.len(),
            });
        }
        if self.distance.len() != book.num_rings() {
            return Err(Error::DimensionMismatch {
                expected: book.num_rings(),
                actual: self.distance.len(),
            });
        }
        Ok(())
    }
}

/// Indices (1-based) of the `k` largest entries, largest first. Equal
/// values keep ascending index order.
pub fn top_k(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > probs.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            max: probs.len(),
        });
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    Ok(order.into_iter().take(k).map(|i| i + 1).collect())
}

/// Codebook indices at every (ring, angle) intersection, ring-major.
pub fn candidate_indices(angles: &[usize], rings: &[usize], num_angles: usize) -> Vec<usize> {
    rings
        .iter()
        .flat_map(|&s| angles.iter().map(move |&n| (s - 1) * num_angles + n))
        .collect()
}

/// Picks the argmax of each head and combines them into one codeword.
pub fn original_from_outputs(outputs: &HeadOutputs, book: &PolarCodebook, wide_beams: usize) -> Result<SchemeResult> {
    outputs.check(book)?;
    let n = top_k(&outputs.direction, 1)?[0];
    let s = top_k(&outputs.distance, 1)?[0];
    SchemeResult::at(book, book.index(s, n)?, wide_beams)
}

pub fn original_scheme(
    measurements: &[Complex64],
    direction: &dyn Classifier,
    distance: &dyn Classifier,
    book: &PolarCodebook,
) -> Result<SchemeResult> {
    let outputs = HeadOutputs::predict(measurements, direction, distance)?;
    original_from_outputs(&outputs, book, measurements.len())
}

/// Measures the `k x l` most likely codewords with fresh pilots and keeps
/// the strongest.
#[allow(clippy::too_many_arguments)]
pub fn improved_from_outputs<R: Rng + ?Sized>(
    outputs: &HeadOutputs,
    book: &PolarCodebook,
    wide_beams: usize,
    h: &[Complex64],
    link: &LinkConfig,
    rng: &mut R,
    k: usize,
    l: usize,
) -> Result<SchemeResult> {
    outputs.check(book)?;
    let angles = top_k(&outputs.direction, k)?;
    let rings = top_k(&outputs.distance, l)?;
    let candidates = candidate_indices(&angles, &rings, book.num_angles());
    let mut best: Option<(f64, usize)> = None;
    for &b in &candidates {
        let power = measure(book.codeword(b)?, h, link, rng)?.norm_sqr();
        best = match best {
            Some((p, i)) if p > power || (p == power && i < b) => Some((p, i)),
            _ => Some((power, b)),
        };
    }
    let (_, index) = best.expect("k, l >= 1 gives at least one candidate");
    let mut result = SchemeResult::at(book, index, wide_beams + candidates.len())?;
    result.candidates = candidates;
    result.k = k;
    result.l = l;
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
pub fn improved_scheme<R: Rng + ?Sized>(
    measurements: &[Complex64],
    direction: &dyn Classifier,
    distance: &dyn Classifier,
    book: &PolarCodebook,
    h: &[Complex64],
    link: &LinkConfig,
    rng: &mut R,
    k: usize,
    l: usize,
) -> Result<SchemeResult> {
    let outputs = HeadOutputs::predict(measurements, direction, distance)?;
    improved_from_outputs(&outputs, book, measurements.len(), h, link, rng, k, l)
}

fn strongest<B: Codebook + ?Sized, R: Rng + ?Sized>(
    book: &B,
    h: &[Complex64],
    link: &LinkConfig,
    rng: &mut R,
) -> Result<usize> {
    let powers = book
        .iter()
        .map(|w| measure(w, h, link, rng).map(|y| y.norm_sqr()))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::linalg::argmax(&powers) + 1)
}

/// Noisy exhaustive sweep over the whole polar codebook.
pub fn exhaustive_sweep<R: Rng + ?Sized>(
    book: &PolarCodebook,
    h: &[Complex64],
    link: &LinkConfig,
    rng: &mut R,
) -> Result<SchemeResult> {
    let index = strongest(book, h, link, rng)?;
    SchemeResult::at(book, index, book.len())
}

/// Uniformly random codeword, no beam tests.
pub fn random_baseline<R: Rng + ?Sized>(book: &PolarCodebook, rng: &mut R) -> Result<SchemeResult> {
    SchemeResult::at(book, rng.random_range(1..=book.len()), 0)
}

/// Choice made by the far-field narrow-beam sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FarFieldChoice {
    pub angle: usize,
    pub beams_tested: usize,
}

/// Noisy sweep over all far-field narrow beams.
pub fn far_field_baseline<R: Rng + ?Sized>(
    narrow: &NarrowCodebook,
    h: &[Complex64],
    link: &LinkConfig,
    rng: &mut R,
) -> Result<FarFieldChoice> {
    let angle = strongest(narrow, h, link, rng)?;
    Ok(FarFieldChoice {
        angle,
        beams_tested: narrow.len(),
    })
}
