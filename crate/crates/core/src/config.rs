//! TOML run configuration. Every section is optional and falls back to the
//! desk-scale defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::{NarrowCodebook, PolarCodebook, RingSampling, WideCodebook};
use crate::error::{Error, Result};
use crate::geometry::{ArrayConfig, ScenarioConfig, SPEED_OF_LIGHT};
use crate::measurement::LinkConfig;
use crate::nn::{NetConfig, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub array: ArraySection,
    pub codebook: CodebookSection,
    pub scenario: ScenarioConfig,
    pub link: LinkSection,
    pub dataset: DatasetSection,
    pub net: NetConfig,
    pub train: TrainSection,
    pub experiment: ExperimentSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 2024,
            array: ArraySection::default(),
            codebook: CodebookSection::default(),
            scenario: ScenarioConfig::default(),
            link: LinkSection::default(),
            dataset: DatasetSection::default(),
            net: NetConfig::default(),
            train: TrainSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub num_antennas: usize,
    pub carrier_hz: f64,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            num_antennas: 64,
            carrier_hz: crate::geometry::DEFAULT_CARRIER_HZ,
            spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSection {
    pub num_rings: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Narrow beams covered by each wide beam.
    pub wide_factor: usize,
    pub ring_sampling: RingSampling,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            num_rings: 5,
            r_min: 10.0,
            r_max: 60.0,
            wide_factor: 4,
            ring_sampling: RingSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    /// Receiver noise variance; transmit power follows from the SNR.
    pub noise_variance: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self { noise_variance: 1.0 }
    }
}

impl LinkSection {
    pub fn at_snr(&self, snr_db: f64) -> Result<LinkConfig> {
        let power = self.noise_variance * 10f64.powf(snr_db / 10.0);
        LinkConfig::new(power, self.noise_variance, num_complex::Complex64::new(1.0, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples: usize,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            samples: 20_000,
            snr_db_min: 0.0,
            snr_db_max: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub patience: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 1000,
            learning_rate: 0.01,
            lr_decay: 0.95,
            patience: 10,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// One beam-selection scheme evaluated by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SchemeSpec {
    Original,
    Improved { k: usize, l: usize },
    Sweep,
    Random,
    FarField,
}

impl SchemeSpec {
    pub fn label(&self) -> String {
        match self {
            SchemeSpec::Original => "original".into(),
            SchemeSpec::Improved { k, l } => format!("improved-k{k}-l{l}"),
            SchemeSpec::Sweep => "sweep".into(),
            SchemeSpec::Random => "random".into(),
            SchemeSpec::FarField => "far-field-sweep".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    /// Pilot slots per beam test.
    pub pilot_slots: f64,
    /// Slots in one coherence interval.
    pub coherence_slots: f64,
    pub schemes: Vec<SchemeSpec>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 2000,
            pilot_slots: 1.0,
            coherence_slots: 25_600.0,
            schemes: vec![
                SchemeSpec::Original,
                SchemeSpec::Improved { k: 1, l: 1 },
                SchemeSpec::Improved { k: 5, l: 2 },
                SchemeSpec::Improved { k: 10, l: 2 },
                SchemeSpec::Sweep,
                SchemeSpec::Random,
            ],
        }
    }
}

/// Named system sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 64 antennas, 5 rings, 4x wide beams, 20k samples.
    Desk,
    /// 512 antennas, 5 rings, 4x wide beams, 100k samples.
    Paper,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (n, samples) = match preset {
            Preset::Desk => (64, 20_000),
            Preset::Paper => (512, 100_000),
        };
        self.array.num_antennas = n;
        self.codebook.num_rings = 5;
        self.codebook.wide_factor = 4;
        self.dataset.samples = samples;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.system()?;
        self.scenario.validate()?;
        if !(self.link.noise_variance > 0.0 && self.link.noise_variance.is_finite()) {
            return bad(format!(
                "link.noise_variance must be positive, got {}",
                self.link.noise_variance
            ));
        }
        let d = &self.dataset;
        if d.samples == 0 {
            return bad("dataset.samples must be positive".into());
        }
        if !(d.snr_db_min.is_finite() && d.snr_db_max.is_finite() && d.snr_db_min <= d.snr_db_max) {
            return bad(format!(
                "dataset SNR range [{}, {}] is invalid",
                d.snr_db_min, d.snr_db_max
            ));
        }
        let t = &self.train;
        if t.batch_size < 2 {
            return bad("train.batch_size must be at least 2".into());
        }
        if !(t.learning_rate > 0.0 && t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
            return bad("train.learning_rate must be positive and train.lr_decay in (0, 1]".into());
        }
        let e = &self.experiment;
        if !(e.pilot_slots > 0.0 && e.coherence_slots > 0.0) {
            return bad("experiment.pilot_slots and experiment.coherence_slots must be positive".into());
        }
        for s in &e.schemes {
            if let SchemeSpec::Improved { k, l } = *s {
                if k == 0 || k > self.array.num_antennas || l == 0 || l > self.codebook.num_rings {
                    return bad(format!("scheme {} needs 1 <= k <= N and 1 <= l <= S", s.label()));
                }
            }
        }
        Ok(())
    }

    pub fn array_config(&self) -> Result<ArrayConfig> {
        let wavelength = SPEED_OF_LIGHT / self.array.carrier_hz;
        ArrayConfig::with_spacing(self.array.num_antennas, wavelength, self.array.spacing * wavelength)
    }

    pub fn system(&self) -> Result<System> {
        let array = self.array_config()?;
        let c = &self.codebook;
        Ok(System {
            polar: PolarCodebook::with_sampling(array, c.num_rings, c.r_min, c.r_max, c.ring_sampling)?,
            wide: WideCodebook::new(array, c.wide_factor)?,
            narrow: NarrowCodebook::new(array),
            array,
        })
    }
}

/// Array plus the three codebooks derived from one configuration.
#[derive(Debug, Clone)]
pub struct System {
    pub array: ArrayConfig,
    pub polar: PolarCodebook,
    pub wide: WideCodebook,
    pub narrow: NarrowCodebook,
}
