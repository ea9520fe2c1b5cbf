//! Counterfactual isolation scenarios on a learned SEIR+HD parametrization.
//!
//! Isolating a subpopulation scales its contribution to the force of
//! infection; an isolated share `f` with multiplier `m` leaves a factor
//! `1 - f * (1 - m)` on that compartment's infectiousness.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{EpiModel, Isolation, ModelKind, Parametrization};

pub const SUITE_CSV_HEADER: &str = "scenario,date,daily_reported";

/// Default infectiousness multiplier of an isolated person.
pub const DEFAULT_MULTIPLIER: f64 = 0.5;

/// Shares of presymptomatic and asymptomatic infections isolated in the
/// last three canonical scenarios.
pub const PRESYM_ASYM_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub isolate_reported: bool,
    pub isolate_symptomatic: bool,
    pub presym_asym_fraction: f64,
    pub infectiousness_multiplier: f64,
    pub start_date: NaiveDate,
}

impl ScenarioSpec {
    pub fn baseline(start_date: NaiveDate) -> Self {
        ScenarioSpec {
            isolate_reported: false,
            isolate_symptomatic: false,
            presym_asym_fraction: 0.0,
            infectiousness_multiplier: 1.0,
            start_date,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.infectiousness_multiplier;
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::InvalidParameter(format!("infectiousness multiplier must lie in (0, 1], got {m}")));
        }
        let p = self.presym_asym_fraction;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("isolated fraction must lie in [0, 1], got {p}")));
        }
        if p > 0.0 && !self.isolate_symptomatic {
            return Err(Error::InvalidParameter(
                "isolating presymptomatic and asymptomatic cases requires isolating symptomatic ones".into(),
            ));
        }
        Ok(())
    }

    fn factor(&self, share: f64) -> f64 {
        1.0 - share * (1.0 - self.infectiousness_multiplier)
    }

    fn isolation(&self, theta: &Parametrization, start_day: usize) -> Result<Isolation> {
        let symptomatic_share = if self.isolate_symptomatic {
            1.0
        } else if self.isolate_reported {
            theta.reporting_at("alpha1", start_day)?
        } else {
            0.0
        };
        Ok(Isolation {
            start_day,
            presymptomatic: self.factor(self.presym_asym_fraction),
            severe: self.factor(symptomatic_share),
            mild: self.factor(symptomatic_share),
            asymptomatic: self.factor(self.presym_asym_fraction),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    pub daily_reported: Vec<f64>,
    pub label: String,
}

/// Simulates `horizon` days from `series_start` with the isolation of
/// `spec` in force from its start date on.
pub fn apply_npi(
    model: &EpiModel,
    theta: &Parametrization,
    spec: &ScenarioSpec,
    series_start: NaiveDate,
    horizon: usize,
    label: impl Into<String>,
) -> Result<ScenarioResult> {
    if model.kind != ModelKind::SeirHd {
        return Err(Error::UnsupportedModel(format!("isolation scenarios need SEIR+HD, got {}", model.kind)));
    }
    spec.validate()?;
    let start_day = (spec.start_date - series_start).num_days().max(0) as usize;
    let isolation = spec.isolation(theta, start_day)?;
    let out = model.simulate_with_isolation(theta, horizon, &isolation)?;
    Ok(ScenarioResult {
        spec: spec.clone(),
        daily_reported: out.daily_reported,
        label: label.into(),
    })
}

/// The no-intervention run followed by the five canonical scenarios.
pub fn canonical_specs(start_date: NaiveDate, multiplier: f64) -> Vec<(String, ScenarioSpec)> {
    let base = ScenarioSpec::baseline(start_date);
    let mut specs = vec![
        ("baseline".to_string(), base.clone()),
        (
            "i_reported".to_string(),
            ScenarioSpec {
                isolate_reported: true,
                infectiousness_multiplier: multiplier,
                ..base.clone()
            },
        ),
        (
            "ii_symptomatic".to_string(),
            ScenarioSpec {
                isolate_reported: true,
                isolate_symptomatic: true,
                infectiousness_multiplier: multiplier,
                ..base.clone()
            },
        ),
    ];
    for (label, p) in ["iii_presym_asym_25", "iv_presym_asym_50", "v_presym_asym_75"]
        .iter()
        .zip(PRESYM_ASYM_FRACTIONS)
    {
        specs.push((
            label.to_string(),
            ScenarioSpec {
                isolate_reported: true,
                isolate_symptomatic: true,
                presym_asym_fraction: p,
                infectiousness_multiplier: multiplier,
                ..base.clone()
            },
        ));
    }
    specs
}

pub fn run_scenario_suite(
    model: &EpiModel,
    theta: &Parametrization,
    series_start: NaiveDate,
    start_date: NaiveDate,
    horizon: usize,
    multiplier: f64,
) -> Result<Vec<ScenarioResult>> {
    canonical_specs(start_date, multiplier)
        .into_par_iter()
        .map(|(label, spec)| apply_npi(model, theta, &spec, series_start, horizon, label))
        .collect()
}

/// One row per scenario and day.
pub fn write_suite_csv<W: Write>(mut w: W, series_start: NaiveDate, results: &[ScenarioResult]) -> Result<()> {
    let mut out = String::from(SUITE_CSV_HEADER);
    out.push('\n');
    for r in results {
        for (t, v) in r.daily_reported.iter().enumerate() {
            let date = series_start + chrono::Days::new(t as u64);
            out.push_str(&format!("{},{date},{v}\n", r.label));
        }
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::Serialization(format!("scenario csv: {e}")))
}
