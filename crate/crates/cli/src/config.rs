//! Experiment configuration: JSON file, command-line overrides, defaults.
//!
//! A config file is JSON whose keys match `ExperimentConfig` field names
//! exactly; unknown keys are rejected so typos cannot silently fall back to
//! defaults. The only mandatory value is `seed` (supplied in the file or
//! via `--seed`): runs never draw entropy from the clock. Everything else
//! defaults to the calibrated MSP430-like family and the standard
//! five-year checkpoint schedule.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use burnin_core::aging::{AccelerationParams, AgingConfig, AgingSchedule};
use burnin_core::classify::ClassifierKind;
use burnin_core::error::{Error, Result};
use burnin_core::family::msp430_like_calibrated;
use burnin_core::sram::GenerativeParams;

/// Where the software bias profile comes from.
///
/// JSON forms: `{"uniform": {"bias": 0.0}}`, `"benchmark_like"`, or
/// `{"trace": {"path": "trace.txt"}}`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SoftwareSource {
    /// Every bit held at the same bias for the whole run.
    Uniform { bias: f64 },
    /// Synthetic trace matching published benchmark bias statistics.
    BenchmarkLike,
    /// A recorded write trace on disk.
    Trace { path: PathBuf },
}

impl Default for SoftwareSource {
    /// Full 0-bias software: the strongest-aging reference workload.
    fn default() -> Self {
        SoftwareSource::Uniform { bias: 0.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
    #[serde(default = "default_n_devices")]
    pub n_devices: usize,
    #[serde(default = "default_k_samples")]
    pub k_samples: usize,
    /// Explicit generative parameters; omitted means the calibrated
    /// MSP430-like family.
    #[serde(default)]
    pub generative: Option<GenerativeParams>,
    /// Row width for spatial statistics; required with custom `generative`.
    #[serde(default)]
    pub grid_width: Option<usize>,
    #[serde(default)]
    pub aging: Option<AgingConfig>,
    #[serde(default)]
    pub acceleration: Option<AccelerationParams>,
    /// Checkpoint times in effective years, strictly increasing.
    #[serde(default)]
    pub schedule: Option<Vec<f64>>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<String>,
    #[serde(default = "default_strength_threshold")]
    pub strength_threshold: f64,
    /// Decision threshold in baseline standard deviations.
    #[serde(default = "default_threshold_t")]
    pub threshold_t: f64,
    /// Virtual devices per side in Monte Carlo evaluation.
    #[serde(default = "default_n_virtual")]
    pub n_virtual: usize,
    #[serde(default = "default_moran_permutations")]
    pub moran_permutations: usize,
    #[serde(default)]
    pub software: SoftwareSource,
    /// Condition label written into snapshot headers.
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_n_devices() -> usize {
    18
}
fn default_k_samples() -> usize {
    51
}
fn default_classifiers() -> Vec<String> {
    ClassifierKind::ALL.iter().map(|k| k.as_str().to_string()).collect()
}
fn default_strength_threshold() -> f64 {
    1.0
}
fn default_threshold_t() -> f64 {
    3.0
}
fn default_n_virtual() -> usize {
    1000
}
fn default_moran_permutations() -> usize {
    200
}
fn default_label() -> String {
    "nominal".to_string()
}

impl ExperimentConfig {
    /// A config with every default and the given seed, as if the file were
    /// `{"seed": N}`.
    pub fn with_seed(seed: u64) -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({ "seed": seed }))
            .expect("seed-only config deserializes")
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub classifier: Option<String>,
    pub threshold: Option<f64>,
    pub strength_threshold: Option<f64>,
}

/// A config with every gap filled and every cross-field rule checked.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub params: GenerativeParams,
    pub aging: AgingConfig,
    pub acceleration: AccelerationParams,
    pub schedule: AgingSchedule,
    pub grid_width: usize,
    pub classifiers: Vec<ClassifierKind>,
}

impl Resolved {
    /// The output directory, creating it if needed. Commands that write
    /// artifacts call this; read-only commands never require `--out`.
    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.config.out_dir.clone().ok_or_else(|| {
            Error::invalid("out", "an output directory is required; pass --out")
        })?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(dir)
    }
}

/// Read the config file, or synthesize a default one when only `--seed`
/// was given. Malformed or unknown-key JSON is a configuration error, not
/// a parse error: the file exists and is readable, its content is wrong.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Resolved> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::io(p.display().to_string(), e))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| {
                Error::invalid("config", format!("{}: {e}", p.display()))
            })?
        }
        None => match overrides.seed {
            Some(seed) => ExperimentConfig::with_seed(seed),
            None => {
                return Err(Error::invalid(
                    "seed",
                    "required: pass --config with a seed field or --seed",
                ))
            }
        },
    };
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(kind) = &overrides.classifier {
        config.classifiers = vec![kind.clone()];
    }
    if let Some(t) = overrides.threshold {
        config.threshold_t = t;
    }
    if let Some(s) = overrides.strength_threshold {
        config.strength_threshold = s;
    }
    resolve(config)
}

fn resolve(config: ExperimentConfig) -> Result<Resolved> {
    let (params, grid_width, aging) = match &config.generative {
        Some(p) => {
            p.validate()?;
            let grid = config.grid_width.ok_or_else(|| {
                Error::invalid(
                    "grid_width",
                    "required when generative parameters are given explicitly",
                )
            })?;
            let aging = config.aging.clone().ok_or_else(|| {
                Error::invalid(
                    "aging",
                    "required when generative parameters are given explicitly",
                )
            })?;
            (p.clone(), grid, aging)
        }
        None => {
            let family = msp430_like_calibrated();
            (
                family.params.clone(),
                config.grid_width.unwrap_or(family.targets.grid_width),
                config.aging.clone().unwrap_or_else(|| family.aging_config()),
            )
        }
    };
    aging.validate()?;
    let acceleration = config.acceleration.clone().unwrap_or_default();
    acceleration.validate()?;
    let schedule = match &config.schedule {
        Some(years) => AgingSchedule::new(years.clone())?,
        None => AgingSchedule::default_checkpoints(),
    };
    if config.grid_width == Some(0) {
        return Err(Error::invalid("grid_width", "must be at least 1"));
    }
    if config.n_virtual < 2 {
        return Err(Error::invalid("n_virtual", "must be at least 2"));
    }
    if !(0.0..=1.0).contains(&config.strength_threshold) {
        return Err(Error::invalid("strength_threshold", "must lie in [0, 1]"));
    }
    if !config.threshold_t.is_finite() {
        return Err(Error::invalid("threshold_t", "must be finite"));
    }
    if config.classifiers.is_empty() {
        return Err(Error::invalid("classifiers", "need at least one"));
    }
    let classifiers = config
        .classifiers
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<ClassifierKind>>>()?;
    if let SoftwareSource::Uniform { bias } = config.software {
        if !(0.0..=1.0).contains(&bias) {
            return Err(Error::invalid("software", "uniform bias must lie in [0, 1]"));
        }
    }
    Ok(Resolved {
        config,
        params,
        aging,
        acceleration,
        schedule,
        grid_width,
        classifiers,
    })
}
