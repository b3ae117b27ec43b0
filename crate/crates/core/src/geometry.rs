//! Uniform linear array geometry, near-field steering vectors and multipath
//! channel synthesis.
//!
//! Antennas sit on a line centred at the array reference point. Antenna `n`
//! (0-based) is offset by `n - (N-1)/2` element spacings. Angles are stored as
//! the sine of the physical angle of arrival, so with half-wavelength spacing
//! the steering phase progression is `pi * theta` per element.
//!
//! Distances are exact Euclidean distances (no Fresnel approximation).

use std::f64::consts::TAU;
use std::ops::Deref;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default carrier frequency (30 GHz).
pub const DEFAULT_CARRIER_HZ: f64 = 30.0e9;

/// Array shape and carrier. `spacing` defaults to half a wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    pub wavelength: f64,
    pub spacing: f64,
}

impl ArrayConfig {
    pub fn new(num_antennas: usize, wavelength: f64) -> Result<Self> {
        Self::with_spacing(num_antennas, wavelength, wavelength / 2.0)
    }

    pub fn with_spacing(num_antennas: usize, wavelength: f64, spacing: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::InvalidConfig("array needs at least one antenna".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "antenna spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            num_antennas,
            wavelength,
            spacing,
        })
    }

    /// Half-wavelength array at the default 30 GHz carrier.
    pub fn default_carrier(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ)
    }

    /// Offset of antenna `n` from the array centre, in metres.
    fn offset_m(&self, n: usize) -> f64 {
        (n as f64 - (self.num_antennas as f64 - 1.0) / 2.0) * self.spacing
    }
}

/// One propagation path: complex gain, distance to the array centre (m) and
/// sine-domain angle in `[-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: Complex64,
    pub distance: f64,
    pub angle: f64,
}

/// Length-N complex channel seen by the array.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(Vec<Complex64>);

impl ChannelVector {
    pub fn from_vec(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Deref for ChannelVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// Antenna offsets from the array centre in units of element spacing.
pub fn antenna_offsets(cfg: &ArrayConfig) -> Vec<f64> {
    let centre = (cfg.num_antennas as f64 - 1.0) / 2.0;
    (0..cfg.num_antennas).map(|n| n as f64 - centre).collect()
}

/// Euclidean distance from antenna `n` to the point `(r, theta)`.
pub fn element_distance(cfg: &ArrayConfig, r: f64, theta: f64, n: usize) -> f64 {
    let x = cfg.offset_m(n);
    (r * r + x * x - 2.0 * r * x * theta).sqrt()
}

/// `element_distance - r`, evaluated without cancellation.
fn distance_excess(cfg: &ArrayConfig, r: f64, theta: f64, n: usize) -> f64 {
    let x = cfg.offset_m(n);
    let num = x * (x - 2.0 * r * theta);
    num / (element_distance(cfg, r, theta, n) + r)
}

/// `2 pi * frac(dist / wavelength)`, with the cycle count split into an exact
/// high part and an FMA-recovered low part so that large distances keep full
/// phase accuracy. Result lies in `[-pi, pi]` up to rounding.
pub fn wrapped_phase(dist: f64, wavelength: f64) -> f64 {
    let cycles = dist / wavelength;
    let residual = (-cycles).mul_add(wavelength, dist) / wavelength;
    let frac = (cycles - cycles.round()) + residual;
    TAU * frac
}

/// Near-field steering vector `b(theta, r)`; unit norm.
pub fn near_steering(cfg: &ArrayConfig, theta: f64, r: f64) -> Vec<Complex64> {
    let scale = 1.0 / (cfg.num_antennas as f64).sqrt();
    (0..cfg.num_antennas)
        .map(|n| {
            let phase = wrapped_phase(distance_excess(cfg, r, theta, n), cfg.wavelength);
            Complex64::from_polar(scale, -phase)
        })
        .collect()
}

/// Multipath channel `sqrt(N/L) * sum_l g_l e^{-j 2pi r_l / lambda} b(theta_l, r_l)`.
pub fn synth_channel(cfg: &ArrayConfig, paths: &[PathParams]) -> Result<ChannelVector> {
    if paths.is_empty() {
        return Err(Error::EmptyPaths);
    }
    let n = cfg.num_antennas;
    let scale = (n as f64 / paths.len() as f64).sqrt();
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for p in paths {
        let coeff = p.gain * Complex64::from_polar(scale, -wrapped_phase(p.distance, cfg.wavelength));
        for (hk, bk) in h.iter_mut().zip(near_steering(cfg, p.angle, p.distance)) {
            *hk += coeff * bk;
        }
    }
    Ok(ChannelVector(h))
}

/// Statistical scenario for drawing paths. The first path is line-of-sight.
///
/// The scatterer distance/angle distributions of the non-line-of-sight paths
/// are assumptions: they reuse the line-of-sight ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub num_paths: usize,
    pub los_gain_variance: f64,
    pub nlos_gain_variance: f64,
    pub distance_min: f64,
    pub distance_max: f64,
    pub angle_min: f64,
    pub angle_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_paths: 3,
            los_gain_variance: 1.0,
            nlos_gain_variance: 0.01,
            distance_min: 10.0,
            distance_max: 60.0,
            angle_min: -1.0,
            angle_max: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("scenario: {msg}")));
        if self.num_paths == 0 {
            return bad("num_paths must be at least 1");
        }
        if self.los_gain_variance < 0.0 || self.nlos_gain_variance < 0.0 {
            return bad("gain variances must be non-negative");
        }
        if !(self.distance_min > 0.0 && self.distance_min <= self.distance_max) {
            return bad("need 0 < distance_min <= distance_max");
        }
        if !(-1.0 <= self.angle_min && self.angle_min < self.angle_max && self.angle_max <= 1.0) {
            return bad("need -1 <= angle_min < angle_max <= 1");
        }
        Ok(())
    }

    pub fn gain_variance(&self, path: usize) -> f64 {
        if path == 0 {
            self.los_gain_variance
        } else {
            self.nlos_gain_variance
        }
    }
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws one set of paths; index 0 is the line-of-sight path.
pub fn sample_paths<R: Rng + ?Sized>(rng: &mut R, scenario: &ScenarioConfig) -> Vec<PathParams> {
    (0..scenario.num_paths)
        .map(|l| {
            let gain = complex_gaussian(rng, scenario.gain_variance(l));
            let distance = if scenario.distance_min == scenario.distance_max {
                scenario.distance_min
            } else {
                rng.random_range(scenario.distance_min..scenario.distance_max)
            };
            let angle = rng.random_range(scenario.angle_min..scenario.angle_max);
            PathParams { gain, distance, angle }
        })
        .collect()
}

/// Rayleigh distance `2 D^2 / lambda` of the full aperture.
pub fn rayleigh_distance(cfg: &ArrayConfig) -> f64 {
    let aperture = (cfg.num_antennas as f64 - 1.0) * cfg.spacing;
    2.0 * aperture * aperture / cfg.wavelength
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Double-double arithmetic used as an extended-precision oracle.
    #[derive(Clone, Copy, Debug)]
    struct Dd(f64, f64);

    impl Dd {
        fn from(x: f64) -> Self {
            Dd(x, 0.0)
        }
        fn two_sum(a: f64, b: f64) -> Dd {
            let s = a + b;
            let bb = s - a;
            Dd(s, (a - (s - bb)) + (b - bb))
        }
        fn add(self, o: Dd) -> Dd {
            let Dd(s, e) = Dd::two_sum(self.0, o.0);
            let e = e + self.1 + o.1;
            Dd::two_sum(s, e)
        }
        fn neg(self) -> Dd {
            Dd(-self.0, -self.1)
        }
        fn mul(self, o: Dd) -> Dd {
            let p = self.0 * o.0;
            let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
            Dd::two_sum(p, e)
        }
        fn div(self, o: Dd) -> Dd {
            let q1 = self.0 / o.0;
            let r = self.add(o.mul(Dd::from(q1)).neg());
            let q2 = r.0 / o.0;
            let r = r.add(o.mul(Dd::from(q2)).neg());
            let q3 = r.0 / o.0;
            Dd::two_sum(q1, q2).add(Dd::from(q3))
        }
        fn sqrt(self) -> Dd {
            let x = self.0.sqrt();
            // one Newton step: x + (a - x^2) / (2x)
            let r = self.add(Dd::from(x).mul(Dd::from(x)).neg());
            Dd::from(x).add(r.div(Dd::from(2.0 * x)))
        }
        /// Fractional part in [-0.5, 0.5].
        fn frac(self) -> f64 {
            let k = self.0.round();
            (self.0 - k) + self.1
        }
    }

    /// Term-by-term channel evaluated with every distance and phase in
    /// double-double, reducing each absolute phase `r_n / lambda` directly.
    fn channel_oracle(cfg: &ArrayConfig, paths: &[PathParams]) -> Vec<Complex64> {
        let n = cfg.num_antennas;
        let lam = Dd::from(cfg.wavelength);
        let scale = (n as f64 / paths.len() as f64).sqrt() / (n as f64).sqrt();
        let mut acc = vec![(Dd::from(0.0), Dd::from(0.0)); n];
        for p in paths {
            let r = Dd::from(p.distance);
            for (k, slot) in acc.iter_mut().enumerate() {
                let delta = Dd::from(k as f64).add(Dd::from(-(n as f64 - 1.0) / 2.0));
                let x = delta.mul(Dd::from(cfg.spacing));
                let two_r_x_theta = Dd::from(2.0).mul(r).mul(x).mul(Dd::from(p.angle));
                let rn = r.mul(r).add(x.mul(x)).add(two_r_x_theta.neg()).sqrt();
                let phase = TAU * rn.div(lam).frac();
                let term = p.gain * Complex64::from_polar(scale, -phase);
                slot.0 = slot.0.add(Dd::from(term.re));
                slot.1 = slot.1.add(Dd::from(term.im));
            }
        }
        acc.into_iter().map(|(re, im)| Complex64::new(re.0, im.0)).collect()
    }

    fn cfg(n: usize) -> ArrayConfig {
        ArrayConfig::default_carrier(n).unwrap()
    }

    #[test]
    fn offsets_are_centred() {
        assert_eq!(antenna_offsets(&cfg(1)), vec![0.0]);
        assert_eq!(antenna_offsets(&cfg(4)), vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(antenna_offsets(&cfg(3)), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_array_rejected() {
        assert!(ArrayConfig::new(0, 0.01).is_err());
        assert!(ArrayConfig::new(4, 0.0).is_err());
        assert!(ArrayConfig::with_spacing(4, 0.01, -1.0).is_err());
    }

    #[test]
    fn element_distance_at_centre_is_r() {
        let c = cfg(3);
        for &(r, th) in &[(10.0, 0.3), (42.5, -0.9), (1.0, 0.0)] {
            assert_eq!(element_distance(&c, r, th, 1), r);
        }
    }

    #[test]
    fn element_distance_broadside() {
        // antenna 1 of a 2-element array with 5 mm spacing sits 2.5 mm off centre
        let c = ArrayConfig::with_spacing(2, 0.01, 0.005).unwrap();
        let expected = (100.0f64 + 6.25e-6).sqrt();
        assert_relative_eq!(element_distance(&c, 10.0, 0.0, 1), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 10.000_000_312_5, epsilon = 1e-9);
    }

    #[test]
    fn element_distance_far_limit() {
        let c = cfg(64);
        let x = c.offset_m(0);
        for &r in &[1e2, 1e3, 1e4] {
            for &th in &[-0.7, 0.1, 0.95] {
                let err = element_distance(&c, r, th, 0) - r - (-x * th);
                assert!(err.abs() <= x * x / r, "r={r} th={th} err={err}");
            }
        }
    }

    #[test]
    fn single_antenna_steering() {
        let b = near_steering(&cfg(1), 0.4, 12.0);
        assert_eq!(b.len(), 1);
        assert_relative_eq!(b[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(b[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn steering_far_field_limit_matches_narrow_beam() {
        let c = cfg(64);
        let grid = crate::codebook::angle_grid(64);
        for n in [1usize, 17, 32, 50, 64] {
            let b = near_steering(&c, grid[n - 1], 1e6 * c.wavelength);
            let a = crate::codebook::narrow_codeword(&c, n).unwrap();
            let corr = crate::linalg::inner(&b, &a).norm();
            assert!(corr >= 0.999, "n={n} corr={corr}");
        }
    }

    #[test]
    fn far_field_phase_profile_converges_to_linear() {
        // max deviation from the best linear phase fit shrinks like 1/r
        let c = cfg(32);
        let deviation = |r: f64| {
            let b = near_steering(&c, 0.3, r);
            let phases: Vec<f64> = b.iter().map(|z| z.arg()).collect();
            let mut unwrapped = vec![phases[0]];
            for w in phases.windows(2) {
                let mut d = w[1] - w[0];
                while d > std::f64::consts::PI {
                    d -= TAU;
                }
                while d < -std::f64::consts::PI {
                    d += TAU;
                }
                unwrapped.push(unwrapped.last().unwrap() + d);
            }
            let n = unwrapped.len() as f64;
            let xs: Vec<f64> = (0..unwrapped.len()).map(|k| k as f64).collect();
            let mx = xs.iter().sum::<f64>() / n;
            let my = unwrapped.iter().sum::<f64>() / n;
            let sxy: f64 = xs.iter().zip(&unwrapped).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let slope = sxy / sxx;
            xs.iter()
                .zip(&unwrapped)
                .map(|(x, y)| (y - (my + slope * (x - mx))).abs())
                .fold(0.0, f64::max)
        };
        let d1 = deviation(1.0);
        let d10 = deviation(10.0);
        let d100 = deviation(100.0);
        assert!(d10 < d1 && d100 < d10);
        assert_relative_eq!(d10 / d100, 10.0, max_relative = 0.05);
    }

    #[test]
    fn single_path_norm() {
        let c = cfg(64);
        let p = PathParams {
            gain: Complex64::new(1.0, 0.0),
            distance: 23.0,
            angle: -0.2,
        };
        let h = synth_channel(&c, &[p]).unwrap();
        assert_relative_eq!(h.norm(), 8.0, max_relative = 1e-12);
    }

    #[test]
    fn opposite_paths_cancel() {
        let c = cfg(16);
        let g = Complex64::new(0.3, -1.1);
        let p = PathParams {
            gain: g,
            distance: 31.0,
            angle: 0.6,
        };
        let q = PathParams { gain: -g, ..p };
        let h = synth_channel(&c, &[p, q]).unwrap();
        assert!(h.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn empty_paths_rejected() {
        assert!(matches!(synth_channel(&cfg(4), &[]), Err(Error::EmptyPaths)));
    }

    #[test]
    fn channel_matches_extended_precision_oracle() {
        let mut rng = rng_from_seed(11);
        let scenario = ScenarioConfig::default();
        for &n in &[8usize, 64, 512] {
            let c = cfg(n);
            for _ in 0..5 {
                let paths = sample_paths(&mut rng, &scenario);
                let h = synth_channel(&c, &paths).unwrap();
                let o = channel_oracle(&c, &paths);
                let err: f64 = h.iter().zip(&o).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let norm: f64 = o.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!(err / norm <= 1e-12, "n={n} rel err {}", err / norm);
            }
        }
    }

    #[test]
    fn zero_variance_gives_zero_gains() {
        let scenario = ScenarioConfig {
            los_gain_variance: 0.0,
            nlos_gain_variance: 0.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            assert!(sample_paths(&mut rng, &scenario)
                .iter()
                .all(|p| p.gain == Complex64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn path_statistics() {
        let scenario = ScenarioConfig::default();
        let mut rng = rng_from_seed(2024);
        let trials = 100_000;
        let (mut g1, mut g2, mut rsum) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let paths = sample_paths(&mut rng, &scenario);
            assert_eq!(paths.len(), 3);
            g1 += paths[0].gain.norm_sqr();
            g2 += paths[1].gain.norm_sqr();
            for p in &paths {
                assert!((10.0..=60.0).contains(&p.distance));
                assert!((-1.0..1.0).contains(&p.angle));
            }
            rsum += paths[0].distance;
        }
        let t = trials as f64;
        assert!((0.98..=1.02).contains(&(g1 / t)), "{}", g1 / t);
        assert!((0.0095..=0.0105).contains(&(g2 / t)), "{}", g2 / t);
        assert!((rsum / t - 35.0).abs() <= 0.2, "{}", rsum / t);
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioConfig::default().validate().is_ok());
        assert!(ScenarioConfig {
            num_paths: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            distance_min: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            angle_max: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rayleigh_distance_of_512_element_array() {
        // 512 elements at 30 GHz: about 1.3 km
        let d = rayleigh_distance(&cfg(512));
        assert!((1200.0..1400.0).contains(&d), "{d}");
    }

    proptest! {
        #[test]
        fn steering_has_unit_norm(n in 1usize..300, theta in -1.0f64..1.0, r in 0.5f64..500.0) {
            let b = near_steering(&cfg(n), theta, r);
            let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-12);
            let m = 1.0 / (n as f64).sqrt();
            prop_assert!(b.iter().all(|z| (z.norm() - m).abs() <= 1e-12));
        }

        #[test]
        fn element_distance_mirror_symmetry(n in 1usize..64, k in 0usize..64, theta in -1.0f64..1.0, r in 1.0f64..100.0) {
            let k = k % n;
            let c = cfg(n);
            let mirrored = n - 1 - k;
            let a = element_distance(&c, r, theta, k);
            let b = element_distance(&c, r, -theta, mirrored);
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn channel_linear_in_gain(re in -3.0f64..3.0, im in -3.0f64..3.0, theta in -1.0f64..1.0, r in 5.0f64..80.0) {
            let c = cfg(32);
            let alpha = Complex64::new(re, im);
            let p = PathParams { gain: Complex64::new(0.7, -0.2), distance: r, angle: theta };
            let h1 = synth_channel(&c, &[p]).unwrap();
            let h2 = synth_channel(&c, &[PathParams { gain: alpha * p.gain, ..p }]).unwrap();
            for (a, b) in h1.iter().zip(h2.iter()) {
                prop_assert!((alpha * a - b).norm() <= 1e-12 * (1.0 + b.norm()));
            }
        }
    }
}
