//! Pilot measurement model `y = sqrt(P) w^H h x + w^H n`, wide-beam
//! measurement vectors, achievable rate, and the noiseless exhaustive sweep
//! that defines the optimal codeword.

use num_complex::Complex64;
use rand::Rng;

use crate::codebook::{Codebook, PolarCodebook, WideCodebook};
use crate::error::{Error, Result};
use crate::geometry::complex_gaussian;
use crate::linalg::inner;

/// Transmit power, noise variance and pilot symbol (all linear units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub transmit_power: f64,
    pub noise_variance: f64,
    pub pilot: Complex64,
}

impl LinkConfig {
    pub fn new(transmit_power: f64, noise_variance: f64, pilot: Complex64) -> Result<Self> {
        if !(transmit_power >= 0.0 && transmit_power.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "transmit power must be >= 0, got {transmit_power}"
            )));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be >= 0, got {noise_variance}"
            )));
        }
        if (pilot.norm_sqr() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "pilot symbol must have unit power, got |x|^2 = {}",
                pilot.norm_sqr()
            )));
        }
        Ok(Self {
            transmit_power,
            noise_variance,
            pilot,
        })
    }

    /// Transmit SNR `P / sigma^2` in dB with `sigma^2 = 1` and a unit pilot.
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            transmit_power: 10f64.powf(snr_db / 10.0),
            noise_variance: 1.0,
            pilot: Complex64::new(1.0, 0.0),
        }
    }

    /// Same transmit power with the noise switched off.
    pub fn noiseless(self) -> Self {
        Self {
            noise_variance: 0.0,
            ..self
        }
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.transmit_power / self.noise_variance).log10()
    }
}

/// Received pilots of every wide beam, in wide-beam order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<Complex64>,
    pub snr_db: f64,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_len(w: &[Complex64], h: &[Complex64]) -> Result<()> {
    if w.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// One pilot measurement with combiner `w`; fresh noise vector per call.
pub fn measure<R: Rng + ?Sized>(w: &[Complex64], h: &[Complex64], link: &LinkConfig, rng: &mut R) -> Result<Complex64> {
    check_len(w, h)?;
    let signal = inner(w, h) * link.transmit_power.sqrt() * link.pilot;
    if link.noise_variance == 0.0 {
        return Ok(signal);
    }
    let noise = w.iter().fold(Complex64::new(0.0, 0.0), |acc, wk| {
        acc + wk.conj() * complex_gaussian(rng, link.noise_variance)
    });
    Ok(signal + noise)
}

/// Measures every wide beam in turn with independent noise.
pub fn measure_wide<R: Rng + ?Sized>(
    wide: &WideCodebook,
    h: &[Complex64],
    link: &LinkConfig,
    rng: &mut R,
) -> Result<MeasurementVector> {
    let values = wide
        .iter()
        .map(|w| measure(w, h, link, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementVector {
        values,
        snr_db: link.snr_db(),
    })
}

/// `log2(1 + P |w^H h|^2 / sigma^2)` in bit/s/Hz.
pub fn achievable_rate(w: &[Complex64], h: &[Complex64], link: &LinkConfig) -> Result<f64> {
    check_len(w, h)?;
    if link.noise_variance == 0.0 {
        return Err(Error::ZeroNoise);
    }
    Ok((1.0 + link.transmit_power * inner(w, h).norm_sqr() / link.noise_variance).log2())
}

/// `|w_i^H h|^2` for every codeword, in index order.
pub fn beam_gains<B: Codebook + ?Sized>(book: &B, h: &[Complex64]) -> Result<Vec<f64>> {
    check_len(book.codeword(1)?, h)?;
    Ok(book.iter().map(|w| inner(w, h).norm_sqr()).collect())
}

/// Winner of the noiseless exhaustive sweep (1-based indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOutcome {
    pub index: usize,
    pub ring: usize,
    pub angle: usize,
    /// `|w^H h|^2` of the winning codeword.
    pub gain: f64,
}

/// `argmax_i |w_i^H h|` over the polar codebook; smallest index wins ties.
pub fn sweep_oracle(book: &PolarCodebook, h: &[Complex64]) -> Result<SweepOutcome> {
    let gains = beam_gains(book, h)?;
    let best = crate::linalg::argmax(&gains);
    let index = best + 1;
    let (ring, angle) = book.pair(index)?;
    Ok(SweepOutcome {
        index,
        ring,
        angle,
        gain: gains[best],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::narrow_codeword;
    use crate::geometry::{sample_paths, synth_channel, ArrayConfig, PathParams, ScenarioConfig};
    use crate::seed::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(n: usize) -> ArrayConfig {
        ArrayConfig::default_carrier(n).unwrap()
    }

    fn unit_link() -> LinkConfig {
        LinkConfig::new(1.0, 0.0, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn link_validation() {
        assert!(LinkConfig::new(-1.0, 1.0, Complex64::new(1.0, 0.0)).is_err());
        assert!(LinkConfig::new(1.0, -1.0, Complex64::new(1.0, 0.0)).is_err());
        assert!(LinkConfig::new(1.0, 1.0, Complex64::new(1.0, 0.1)).is_err());
        assert!(LinkConfig::new(1.0, 1.0, Complex64::from_polar(1.0, 0.3)).is_ok());
        assert_relative_eq!(LinkConfig::from_snr_db(10.0).transmit_power, 10.0, max_relative = 1e-15);
        assert_relative_eq!(LinkConfig::from_snr_db(13.0).snr_db(), 13.0, max_relative = 1e-12);
    }

    #[test]
    fn matched_filter_without_noise() {
        let c = cfg(16);
        let mut rng = rng_from_seed(1);
        let h = synth_channel(&c, &sample_paths(&mut rng, &ScenarioConfig::default())).unwrap();
        let nh = h.norm();
        let w: Vec<Complex64> = h.iter().map(|z| z / nh).collect();
        let y = measure(&w, &h, &unit_link(), &mut rng).unwrap();
        assert_relative_eq!(y.re, nh, max_relative = 1e-12);
        assert!(y.im.abs() < 1e-12);
    }

    #[test]
    fn orthogonal_combiner_gives_zero() {
        let c = cfg(8);
        let w = narrow_codeword(&c, 2).unwrap();
        let h = narrow_codeword(&c, 5).unwrap();
        let y = measure(&w, &h, &unit_link(), &mut rng_from_seed(0)).unwrap();
        assert!(y.norm() < 1e-14);
    }

    #[test]
    fn length_mismatch_is_error() {
        let w = vec![Complex64::new(1.0, 0.0); 3];
        let h = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            measure(&w, &h, &unit_link(), &mut rng_from_seed(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(achievable_rate(&w, &h, &LinkConfig::from_snr_db(0.0)).is_err());
    }

    #[test]
    fn noise_only_variance() {
        let c = cfg(16);
        let w = narrow_codeword(&c, 3).unwrap();
        let h = vec![Complex64::new(0.0, 0.0); 16];
        let link = LinkConfig::new(0.0, 2.5, Complex64::new(1.0, 0.0)).unwrap();
        let mut rng = rng_from_seed(99);
        let trials = 100_000;
        let ys: Vec<Complex64> = (0..trials).map(|_| measure(&w, &h, &link, &mut rng).unwrap()).collect();
        let mean = ys.iter().sum::<Complex64>() / trials as f64;
        let var = ys.iter().map(|y| (y - mean).norm_sqr()).sum::<f64>() / trials as f64;
        assert!((0.98 * 2.5..=1.02 * 2.5).contains(&var), "var {var}");
    }

    #[test]
    fn noise_independent_across_beams() {
        let c = cfg(16);
        let wide = WideCodebook::new(c, 4).unwrap();
        let h = vec![Complex64::new(0.0, 0.0); 16];
        let link = LinkConfig::new(0.0, 1.0, Complex64::new(1.0, 0.0)).unwrap();
        let mut rng = rng_from_seed(5);
        let trials = 100_000;
        let (mut s01, mut s0, mut s1) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
        for _ in 0..trials {
            let y = measure_wide(&wide, &h, &link, &mut rng).unwrap().values;
            s01 += y[0] * y[1].conj();
            s0 += y[0].norm_sqr();
            s1 += y[1].norm_sqr();
        }
        let rho = s01.norm() / (s0 * s1).sqrt();
        assert!(rho <= 0.02, "rho {rho}");
    }

    #[test]
    fn wide_measurement_shape_and_peak() {
        let c = cfg(64);
        let wide = WideCodebook::new(c, 4).unwrap();
        let link = unit_link();
        for m in 1..=16usize {
            let sin_theta = -1.0 + (2 * m - 1) as f64 / 16.0;
            let path = PathParams {
                gain: Complex64::new(1.0, 0.0),
                distance: 1e6 * c.wavelength,
                angle: sin_theta,
            };
            let h = synth_channel(&c, &[path]).unwrap();
            let y = measure_wide(&wide, &h, &link, &mut rng_from_seed(0)).unwrap();
            assert_eq!(y.len(), 16);
            let mags: Vec<f64> = y.values.iter().map(|z| z.norm()).collect();
            assert_eq!(crate::linalg::argmax(&mags) + 1, m);
        }
        let zero = vec![Complex64::new(0.0, 0.0); 64];
        let y = measure_wide(&wide, &zero, &link, &mut rng_from_seed(0)).unwrap();
        assert!(y.values.iter().all(|z| z.norm() == 0.0));
        let large = WideCodebook::new(cfg(512), 4).unwrap();
        let h = vec![Complex64::new(0.0, 0.0); 512];
        assert_eq!(
            measure_wide(&large, &h, &link, &mut rng_from_seed(0)).unwrap().len(),
            128
        );
    }

    #[test]
    fn rate_examples() {
        let c = cfg(4);
        let w = narrow_codeword(&c, 1).unwrap();
        let h_orth = narrow_codeword(&c, 2).unwrap();
        let link = LinkConfig::new(1.0, 1.0, Complex64::new(1.0, 0.0)).unwrap();
        assert!(achievable_rate(&w, &h_orth, &link).unwrap().abs() < 1e-14);
        let h1: Vec<Complex64> = w.clone();
        assert_relative_eq!(achievable_rate(&w, &h1, &link).unwrap(), 1.0, max_relative = 1e-12);
        let h3: Vec<Complex64> = w.iter().map(|z| z * 3f64.sqrt()).collect();
        assert_relative_eq!(achievable_rate(&w, &h3, &link).unwrap(), 2.0, max_relative = 1e-12);
        assert!(matches!(achievable_rate(&w, &h1, &unit_link()), Err(Error::ZeroNoise)));
    }

    #[test]
    fn oracle_recovers_codeword_channels() {
        let book = PolarCodebook::new(cfg(8), 3, 5.0, 40.0).unwrap();
        for j in 1..=book.len() {
            let h = book.codeword(j).unwrap().to_vec();
            assert_eq!(sweep_oracle(&book, &h).unwrap().index, j);
        }
    }

    #[test]
    fn oracle_finds_on_grid_path() {
        let c = cfg(32);
        let book = PolarCodebook::new(c, 3, 8.0, 40.0).unwrap();
        for s in 1..=3 {
            for n in [1usize, 9, 16, 30] {
                let path = PathParams {
                    gain: Complex64::new(0.6, 0.8),
                    distance: book.ring_distances()[s - 1][n - 1],
                    angle: book.angles()[n - 1],
                };
                let h = synth_channel(&c, &[path]).unwrap();
                let out = sweep_oracle(&book, &h).unwrap();
                assert_eq!(out.index, (s - 1) * 32 + n);
                assert_eq!((out.ring, out.angle), (s, n));
            }
        }
    }

    #[test]
    fn oracle_matches_double_loop() {
        let c = cfg(32);
        let book = PolarCodebook::new(c, 5, 10.0, 60.0).unwrap();
        let mut rng = rng_from_seed(17);
        for _ in 0..100 {
            let h = synth_channel(&c, &sample_paths(&mut rng, &ScenarioConfig::default())).unwrap();
            let mut best = (0usize, 0usize, -1.0f64);
            for s in 1..=5 {
                for n in 1..=32 {
                    let w = book.codeword((s - 1) * 32 + n).unwrap();
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..32 {
                        acc += w[k].conj() * h[k];
                    }
                    if acc.norm_sqr() > best.2 {
                        best = (s, n, acc.norm_sqr());
                    }
                }
            }
            let out = sweep_oracle(&book, &h).unwrap();
            assert_eq!((out.ring, out.angle), (best.0, best.1));
        }
    }

    proptest! {
        #[test]
        fn rate_strictly_increasing(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let link = LinkConfig::from_snr_db(5.0);
            let w = vec![Complex64::new(1.0, 0.0)];
            let ra = achievable_rate(&w, &[Complex64::new(a.sqrt(), 0.0)], &link).unwrap();
            let rb = achievable_rate(&w, &[Complex64::new(b.sqrt(), 0.0)], &link).unwrap();
            prop_assert_eq!(ra < rb, a < b);
        }

        #[test]
        fn oracle_invariant_to_channel_scaling(seed in 0u64..1000, mag in 0.01f64..100.0, phase in -3.1f64..3.1) {
            let c = cfg(16);
            let book = PolarCodebook::new(c, 3, 10.0, 60.0).unwrap();
            let mut rng = rng_from_seed(seed);
            let h = synth_channel(&c, &sample_paths(&mut rng, &ScenarioConfig::default())).unwrap();
            let scale = Complex64::from_polar(mag, phase);
            let scaled: Vec<Complex64> = h.iter().map(|z| z * scale).collect();
            prop_assert_eq!(sweep_oracle(&book, &h).unwrap().index, sweep_oracle(&book, &scaled).unwrap().index);
        }

        #[test]
        fn noiseless_measure_linear_in_pilot(seed in 0u64..100, phase in -3.1f64..3.1) {
            let c = cfg(8);
            let mut rng = rng_from_seed(seed);
            let h = synth_channel(&c, &sample_paths(&mut rng, &ScenarioConfig::default())).unwrap();
            let w = narrow_codeword(&c, 3).unwrap();
            let base = LinkConfig::new(2.0, 0.0, Complex64::new(1.0, 0.0)).unwrap();
            let rot = Complex64::from_polar(1.0, phase);
            let turned = LinkConfig { pilot: rot, ..base };
            let y1 = measure(&w, &h, &base, &mut rng).unwrap();
            let y2 = measure(&w, &h, &turned, &mut rng).unwrap();
            prop_assert!((y1 * rot - y2).norm() <= 1e-12 * (1.0 + y2.norm()));
            prop_assert_eq!(y1, measure(&w, &h, &base, &mut rng).unwrap());
        }
    }
}
