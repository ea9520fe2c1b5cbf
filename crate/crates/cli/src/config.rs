//! The run configuration file.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use mdl_epi::calibration::CalibrationConfig;
use mdl_epi::mdl::{EncodingConfig, RefineConfig};
use mdl_epi::scenarios::DEFAULT_MULTIPLIER;
use mdl_epi::ModelKind;

use crate::error::CliError;

pub const OUTDIR_ENV: &str = "MDL_EPI_OUTDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Cumulative `date,region,cases,deaths` file; `fetch` writes here.
    pub cases: PathBuf,
    pub region: String,
    #[serde(default)]
    pub serology: Option<PathBuf>,
    #[serde(default)]
    pub survey: Option<PathBuf>,
    /// Known daily total infections (`date,total`), for synthetic data.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub sha256: Option<String>,
    #[serde(default = "yes")]
    pub smooth: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSection {
    #[serde(default)]
    pub start: Option<NaiveDate>,
    /// Last observed day; later days form the forecast period.
    pub observed_end: NaiveDate,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    /// Start a new reporting sub-period every this many days.
    #[serde(default)]
    pub subperiod_days: Option<usize>,
    #[serde(default)]
    pub subperiod_boundaries: Vec<NaiveDate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParamsSection {
    /// Parameter file; the bundled defaults are used when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub population: Option<f64>,
    #[serde(default)]
    pub intervention_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Defaults to the day after the observed period.
    #[serde(default)]
    pub start_date: Option<NaiveDate>,
}

fn default_multiplier() -> f64 {
    DEFAULT_MULTIPLIER
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            multiplier: DEFAULT_MULTIPLIER,
            start_date: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Overrides `calibration.seed` when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub period: PeriodSection,
    #[serde(default)]
    pub model_params: ModelParamsSection,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub scenario: ScenarioSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.output_dir);
        resolve(base, &mut cfg.data.cases);
        for p in [&mut cfg.data.serology, &mut cfg.data.survey, &mut cfg.data.truth, &mut cfg.model_params.path]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        if let Some(seed) = cfg.seed {
            cfg.calibration.rng_seed = seed;
        }
        Ok(cfg)
    }

    /// Applies command-line overrides; flags win over the file.
    pub fn apply_overrides(&mut self, seed: Option<u64>, multiplier: Option<f64>, outdir_env: Option<PathBuf>) {
        if let Some(seed) = seed {
            self.seed = Some(seed);
            self.calibration.rng_seed = seed;
        }
        if let Some(m) = multiplier {
            self.scenario.multiplier = m;
        }
        if let Some(dir) = outdir_env {
            self.output_dir = dir;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.calibration.validate()?;
        self.encoding.validate()?;
        let m = self.scenario.multiplier;
        if !(m > 0.0 && m <= 1.0) {
            return Err(CliError::Config(format!("scenario multiplier must lie in (0, 1], got {m}")));
        }
        Ok(())
    }
}
