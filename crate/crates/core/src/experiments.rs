//! Beam-training metrics and the Monte-Carlo runner that evaluates every
//! configured scheme over an SNR grid.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::codebook::Codebook;
use crate::config::{Config, SchemeSpec};
use crate::error::{Error, Result};
use crate::geometry::{sample_paths, synth_channel};
use crate::linalg::inner;
use crate::measurement::{achievable_rate, measure_wide, sweep_oracle, LinkConfig};
use crate::nn::{Classifier, FixedDistribution};
use crate::schemes::{
    exhaustive_sweep, far_field_baseline, improved_from_outputs, original_from_outputs, random_baseline, HeadOutputs,
};
use crate::seed::{derive_seed, rng_from_seed};

/// Pilot cost of a beam test and the coherence budget, both in slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub pilot_slots: f64,
    pub coherence_slots: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            pilot_slots: 1.0,
            coherence_slots: 25_600.0,
        }
    }
}

/// `|w^H h|^2 / |w_opt^H h|^2`.
pub fn normalized_snr(w: &[Complex64], w_opt: &[Complex64], h: &[Complex64]) -> Result<f64> {
    if w.len() != h.len() || w_opt.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: w.len().min(w_opt.len()),
        });
    }
    let reference = inner(w_opt, h).norm_sqr();
    if reference == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    Ok(inner(w, h).norm_sqr() / reference)
}

/// Achievable rate scaled by the share of the coherence budget left after
/// `beams_tested` pilot tests.
pub fn effective_rate(
    w: &[Complex64],
    h: &[Complex64],
    link: &LinkConfig,
    beams_tested: usize,
    metrics: &MetricsConfig,
) -> Result<f64> {
    let used = metrics.pilot_slots * beams_tested as f64;
    if used > metrics.coherence_slots {
        return Err(Error::BudgetExceeded {
            used,
            budget: metrics.coherence_slots,
        });
    }
    Ok((1.0 - used / metrics.coherence_slots) * achievable_rate(w, h, link)?)
}

/// Where the class distributions for the learned schemes come from.
pub enum HeadSource<'a> {
    Models {
        direction: &'a dyn Classifier,
        distance: &'a dyn Classifier,
    },
    /// One-hot at the sweep winner of each channel.
    Oracle,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: String,
    pub snr_db: f64,
    pub trial: usize,
    pub g_n: f64,
    pub rate: f64,
    pub eff_rate: f64,
    pub beams: usize,
    /// Seed of the channel and wide-beam draw shared by all schemes.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    /// Half-width of the normal 95% confidence interval of the mean.
    pub ci95: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            ci95: 1.96 * std / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub snr_db: f64,
    pub trials: usize,
    pub g_n: Stat,
    pub rate: Stat,
    pub eff_rate: Stat,
    pub mean_beams: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub metrics: MetricsConfig,
}

struct Trial {
    h: Vec<Complex64>,
    y: Vec<Complex64>,
    best: usize,
    seed: u64,
}

fn head_outputs(
    heads: &HeadSource,
    trials: &[Trial],
    book: &crate::codebook::PolarCodebook,
) -> Result<Vec<HeadOutputs>> {
    let (n, s) = (book.num_angles(), book.num_rings());
    match heads {
        HeadSource::Models { direction, distance } => {
            let inputs: Vec<&[Complex64]> = trials.iter().map(|t| t.y.as_slice()).collect();
            let dir = direction.predict_batch(&inputs)?;
            let dist = distance.predict_batch(&inputs)?;
            Ok(dir
                .into_iter()
                .zip(dist)
                .map(|(direction, distance)| HeadOutputs { direction, distance })
                .collect())
        }
        HeadSource::Oracle => trials
            .iter()
            .map(|t| {
                let (ring, angle) = book.pair(t.best)?;
                Ok(HeadOutputs {
                    direction: FixedDistribution::one_hot(n, angle).0,
                    distance: FixedDistribution::one_hot(s, ring).0,
                })
            })
            .collect(),
        HeadSource::Uniform => Ok(trials
            .iter()
            .map(|_| HeadOutputs {
                direction: FixedDistribution::uniform(n).0,
                distance: FixedDistribution::uniform(s).0,
            })
            .collect()),
    }
}

/// Runs every scheme on the same fresh channels at each SNR. Results depend
/// only on the configuration and the head source.
pub fn run_experiment(cfg: &Config, heads: &HeadSource) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let exp = &cfg.experiment;
    let metrics = MetricsConfig {
        pilot_slots: exp.pilot_slots,
        coherence_slots: exp.coherence_slots,
    };
    let wide_beams = sys.wide.len();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (si, &snr_db) in exp.snr_grid_db.iter().enumerate() {
        let link = cfg.link.at_snr(snr_db)?;
        let trials = (0..exp.trials)
            .map(|t| {
                let seed = derive_seed(cfg.seed, &[0xC4A7, si as u64, t as u64]);
                let mut rng = rng_from_seed(seed);
                let h = synth_channel(&sys.array, &sample_paths(&mut rng, &cfg.scenario))?.into_inner();
                let y = measure_wide(&sys.wide, &h, &link, &mut rng)?.values;
                let best = sweep_oracle(&sys.polar, &h)?.index;
                Ok(Trial { h, y, best, seed })
            })
            .collect::<Result<Vec<_>>>()?;
        let outputs = head_outputs(heads, &trials, &sys.polar)?;
        for (j, scheme) in exp.schemes.iter().enumerate() {
            let first = records.len();
            for (t, (trial, out)) in trials.iter().zip(&outputs).enumerate() {
                let mut rng = rng_from_seed(derive_seed(cfg.seed, &[0x5C4E, j as u64, si as u64, t as u64]));
                let h = &trial.h;
                let (w, beams): (&[Complex64], usize) = match *scheme {
                    SchemeSpec::Original => {
                        let r = original_from_outputs(out, &sys.polar, wide_beams)?;
                        (r.codeword(&sys.polar), r.beams_tested)
                    }
                    SchemeSpec::Improved { k, l } => {
                        let r = improved_from_outputs(out, &sys.polar, wide_beams, h, &link, &mut rng, k, l)?;
                        (r.codeword(&sys.polar), r.beams_tested)
                    }
                    SchemeSpec::Sweep => {
                        let r = exhaustive_sweep(&sys.polar, h, &link, &mut rng)?;
                        (r.codeword(&sys.polar), r.beams_tested)
                    }
                    SchemeSpec::Random => {
                        let r = random_baseline(&sys.polar, &mut rng)?;
                        (r.codeword(&sys.polar), r.beams_tested)
                    }
                    SchemeSpec::FarField => {
                        let r = far_field_baseline(&sys.narrow, h, &link, &mut rng)?;
                        (sys.narrow.codeword(r.angle)?, r.beams_tested)
                    }
                };
                let w_opt = sys.polar.codeword(trial.best)?;
                records.push(TrialRecord {
                    scheme: scheme.label(),
                    snr_db,
                    trial: t,
                    g_n: normalized_snr(w, w_opt, h)?,
                    rate: achievable_rate(w, h, &link)?,
                    eff_rate: effective_rate(w, h, &link, beams, &metrics)?,
                    beams,
                    seed: trial.seed,
                });
            }
            summary.push(summarise(&records[first..]));
        }
    }
    Ok(ExperimentOutput {
        records,
        summary,
        metrics,
    })
}

fn summarise(block: &[TrialRecord]) -> SummaryRow {
    let col = |f: fn(&TrialRecord) -> f64| block.iter().map(f).collect::<Vec<_>>();
    SummaryRow {
        scheme: block.first().map(|r| r.scheme.clone()).unwrap_or_default(),
        snr_db: block.first().map_or(f64::NAN, |r| r.snr_db),
        trials: block.len(),
        g_n: Stat::of(&col(|r| r.g_n)),
        rate: Stat::of(&col(|r| r.rate)),
        eff_rate: Stat::of(&col(|r| r.eff_rate)),
        mean_beams: block.iter().map(|r| r.beams as f64).sum::<f64>() / block.len() as f64,
    }
}

pub const TRIALS_HEADER: &str = "scheme,snr_db,trial,G_N,rate,eff_rate,beams,seed";

impl ExperimentOutput {
    pub fn trials_csv(&self) -> String {
        let mut out = format!("{TRIALS_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.scheme, r.snr_db, r.trial, r.g_n, r.rate, r.eff_rate, r.beams, r.seed
            );
        }
        out
    }

    /// Aggregates per (scheme, SNR). Leading `#` lines state the budget
    /// assumptions behind the effective rate.
    pub fn summary_csv(&self) -> String {
        let mut out = format!(
            "# pilot slots per beam test: {}\n# coherence budget in slots: {}\n# far-field-sweep: exhaustive narrow-beam sweep with noisy pilots\n",
            self.metrics.pilot_slots, self.metrics.coherence_slots
        );
        out += "scheme,snr_db,trials,mean_beams,G_N_mean,G_N_std,G_N_ci95,rate_mean,rate_std,rate_ci95,eff_rate_mean,eff_rate_std,eff_rate_ci95\n";
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.scheme,
                s.snr_db,
                s.trials,
                s.mean_beams,
                s.g_n.mean,
                s.g_n.std,
                s.g_n.ci95,
                s.rate.mean,
                s.rate.std,
                s.rate.ci95,
                s.eff_rate.mean,
                s.eff_rate.std,
                s.eff_rate.ci95
            );
        }
        out
    }

    /// Writes `trials.csv` and `summary.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trials.csv"), self.trials_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }

    pub fn row(&self, scheme: &str, snr_db: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.scheme == scheme && r.snr_db == snr_db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::PolarCodebook;
    use crate::geometry::{ArrayConfig, ScenarioConfig};
    use proptest::prelude::*;

    fn small_config(trials: usize) -> Config {
        let mut cfg = Config::default();
        cfg.array.num_antennas = 16;
        cfg.experiment.trials = trials;
        cfg.experiment.snr_grid_db = vec![0.0, 10.0];
        cfg.experiment.schemes = vec![
            SchemeSpec::Original,
            SchemeSpec::Improved { k: 4, l: 2 },
            SchemeSpec::Sweep,
            SchemeSpec::FarField,
            SchemeSpec::Random,
        ];
        cfg
    }

    #[test]
    fn normalized_snr_examples() {
        let cfg = ArrayConfig::default_carrier(16).unwrap();
        let book = PolarCodebook::new(cfg, 5, 10.0, 60.0).unwrap();
        let paths = sample_paths(&mut rng_from_seed(1), &ScenarioConfig::default());
        let h = synth_channel(&cfg, &paths).unwrap();
        let best = sweep_oracle(&book, &h).unwrap().index;
        let w_opt = book.codeword(best).unwrap();
        assert_eq!(normalized_snr(w_opt, w_opt, &h).unwrap(), 1.0);
        for w in book.iter() {
            assert!(normalized_snr(w, w_opt, &h).unwrap() <= 1.0 + 1e-12);
        }
        let e0: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let e1: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new(if i == 1 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        assert_eq!(normalized_snr(&e1, &e0, &e0).unwrap(), 0.0);
        assert!(matches!(normalized_snr(&e0, &e1, &e0), Err(Error::DegenerateChannel)));
    }

    #[test]
    fn effective_rate_examples() {
        let h = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let w = vec![
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2),
        ];
        let link = LinkConfig::from_snr_db(10.0);
        let m = MetricsConfig::default();
        let plain = achievable_rate(&w, &h, &link).unwrap();
        assert_eq!(effective_rate(&w, &h, &link, 0, &m).unwrap(), plain);
        assert_eq!(effective_rate(&w, &h, &link, 25_600, &m).unwrap(), 0.0);
        assert!(matches!(
            effective_rate(&w, &h, &link, 25_601, &m),
            Err(Error::BudgetExceeded { .. })
        ));
        let sweep = effective_rate(&w, &h, &link, 2560, &m).unwrap();
        let improved = effective_rate(&w, &h, &link, 148, &m).unwrap();
        assert!((sweep / improved - 0.9 / 0.994_218_75).abs() < 1e-12);
        assert!(sweep < improved);
    }

    #[test]
    fn oracle_heads_reach_full_gain() {
        let mut cfg = small_config(50);
        cfg.experiment.snr_grid_db = vec![-10.0, 0.0, 10.0, 20.0];
        cfg.experiment.schemes = vec![SchemeSpec::Original, SchemeSpec::Improved { k: 1, l: 1 }];
        let out = run_experiment(&cfg, &HeadSource::Oracle).unwrap();
        assert!(out.summary.iter().all(|r| r.g_n.mean == 1.0));
        // wider candidate sets add noisy rivals, which only win on near-ties at high SNR
        cfg.experiment.snr_grid_db = vec![80.0];
        cfg.experiment.schemes = vec![SchemeSpec::Improved { k: 3, l: 2 }];
        let out = run_experiment(&cfg, &HeadSource::Oracle).unwrap();
        assert!(out.summary[0].g_n.mean > 0.9999);
    }

    #[test]
    fn layout_and_metric_bounds() {
        let cfg = small_config(30);
        let out = run_experiment(&cfg, &HeadSource::Uniform).unwrap();
        assert_eq!(out.summary.len(), 5 * 2);
        assert_eq!(out.records.len(), 5 * 2 * 30);
        for r in &out.records {
            // the far-field codeword lies outside the polar codebook, so it may beat the sweep winner
            if r.scheme != "far-field-sweep" {
                assert!(r.g_n <= 1.0 + 1e-12, "{r:?}");
            }
            assert!(r.g_n >= 0.0);
            assert!(r.eff_rate >= 0.0 && r.eff_rate <= r.rate);
        }
        let beams: Vec<usize> = out.summary.iter().take(5).map(|r| r.mean_beams as usize).collect();
        assert_eq!(beams, vec![4, 4 + 8, 80, 16, 0]);
        let csv = out.trials_csv();
        assert!(csv.starts_with("scheme,snr_db,trial,G_N,rate,eff_rate,beams,seed\n"));
        assert_eq!(csv.lines().count(), out.records.len() + 1);
        let summary = out.summary_csv();
        assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 11);
    }

    #[test]
    fn schemes_share_channels() {
        let out = run_experiment(&small_config(5), &HeadSource::Uniform).unwrap();
        let seeds = |s: &str| {
            out.records
                .iter()
                .filter(|r| r.scheme == s)
                .map(|r| r.seed)
                .collect::<Vec<_>>()
        };
        assert_eq!(seeds("original"), seeds("sweep"));
        assert_eq!(seeds("original"), seeds("improved-k4-l2"));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small_config(10);
        let a = run_experiment(&cfg, &HeadSource::Uniform).unwrap();
        let b = run_experiment(&cfg, &HeadSource::Uniform).unwrap();
        assert_eq!(a.trials_csv(), b.trials_csv());
        assert_eq!(a.summary_csv(), b.summary_csv());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(
            run_experiment(&other, &HeadSource::Uniform).unwrap().trials_csv(),
            a.trials_csv()
        );
    }

    #[test]
    fn summary_stats() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.ci95 - 1.96 * s.std / 2.0).abs() < 1e-15);
    }

    #[test]
    fn aggregates_ignore_trial_order() {
        let out = run_experiment(&small_config(20), &HeadSource::Uniform).unwrap();
        let mut block: Vec<TrialRecord> = out.records[..20].to_vec();
        let forward = summarise(&block);
        block.reverse();
        let backward = summarise(&block);
        assert!((forward.g_n.mean - backward.g_n.mean).abs() < 1e-14);
        assert!((forward.rate.std - backward.rate.std).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn effective_rate_falls_with_beams(a in 0usize..25_600, b in 0usize..25_600, snr in -10.0f64..30.0) {
            let h = vec![Complex64::new(0.3, -0.2), Complex64::new(0.9, 0.1)];
            let w = vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
            let link = LinkConfig::from_snr_db(snr);
            let m = MetricsConfig::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(effective_rate(&w, &h, &link, lo, &m).unwrap() >= effective_rate(&w, &h, &link, hi, &m).unwrap());
        }
    }
}
