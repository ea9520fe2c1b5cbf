//! SEIR+HD and SAPHIRE compartmental models and their observables.
//!
//! Both models are closed-population mass-action systems. Reporting enters
//! only through the observables: a reporting fraction (`alpha1` for SEIR+HD,
//! `r` for SAPHIRE) splits a daily infection flow into reported and
//! unreported parts and does not feed back into the dynamics. The reporting
//! fraction may change at sub-period boundaries; the dynamics parameters are
//! shared by all sub-periods.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Flow, FlowSystem, Integrator, Trajectory};
use crate::timeseries::ReportedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SeirHd,
    Saphire,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::SeirHd => f.write_str("seir_hd"),
            ModelKind::Saphire => f.write_str("saphire"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['+', '-'], "_").as_str() {
            "seir_hd" | "seirhd" => Ok(ModelKind::SeirHd),
            "saphire" => Ok(ModelKind::Saphire),
            other => Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        }
    }
}

pub const SEIR_HD_COMPARTMENTS: [&str; 10] = ["S", "E", "I_P", "I_S", "I_M", "I_A", "H_D", "H_R", "R", "D"];
pub const SAPHIRE_COMPARTMENTS: [&str; 7] = ["S", "E", "P", "I", "A", "H", "R"];

mod seir {
    pub const S: usize = 0;
    pub const E: usize = 1;
    pub const IP: usize = 2;
    pub const IS: usize = 3;
    pub const IM: usize = 4;
    pub const IA: usize = 5;
    pub const HD: usize = 6;
    pub const HR: usize = 7;
    pub const R: usize = 8;
    pub const D: usize = 9;
}

mod saph {
    pub const S: usize = 0;
    pub const E: usize = 1;
    pub const P: usize = 2;
    pub const I: usize = 3;
    pub const A: usize = 4;
    pub const H: usize = 5;
    pub const R: usize = 6;
}

const SEIR_HD_FLOWS: [Flow; 11] = [
    Flow { name: "S_E", from: seir::S, to: seir::E },
    Flow { name: "E_IA", from: seir::E, to: seir::IA },
    Flow { name: "E_IP", from: seir::E, to: seir::IP },
    Flow { name: "IP_IS", from: seir::IP, to: seir::IS },
    Flow { name: "IP_IM", from: seir::IP, to: seir::IM },
    Flow { name: "IS_HD", from: seir::IS, to: seir::HD },
    Flow { name: "IS_HR", from: seir::IS, to: seir::HR },
    Flow { name: "IM_R", from: seir::IM, to: seir::R },
    Flow { name: "IA_R", from: seir::IA, to: seir::R },
    Flow { name: "HR_R", from: seir::HR, to: seir::R },
    Flow { name: "HD_D", from: seir::HD, to: seir::D },
];

const SAPHIRE_FLOWS: [Flow; 8] = [
    Flow { name: "S_E", from: saph::S, to: saph::E },
    Flow { name: "E_P", from: saph::E, to: saph::P },
    Flow { name: "P_I", from: saph::P, to: saph::I },
    Flow { name: "P_A", from: saph::P, to: saph::A },
    Flow { name: "I_H", from: saph::I, to: saph::H },
    Flow { name: "I_R", from: saph::I, to: saph::R },
    Flow { name: "A_R", from: saph::A, to: saph::R },
    Flow { name: "H_R", from: saph::H, to: saph::R },
];

/// A real-valued parameter assignment for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parametrization {
    pub calibrated: BTreeMap<String, f64>,
    pub fixed: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, (f64, f64)>,
    /// Day offsets at which the reporting fraction switches to the next
    /// sub-period value (`<name>_p1`, `<name>_p2`, ...).
    #[serde(default)]
    pub subperiod_starts: Vec<usize>,
}

impl Parametrization {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.calibrated.get(name).or_else(|| self.fixed.get(name)).copied()
    }

    fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{name}`")))
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(v) = self.calibrated.get_mut(name) {
            *v = value;
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.calibrated.keys().cloned().collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.calibrated.values().copied().collect()
    }

    /// A copy with the calibrated values replaced, in `names()` order.
    pub fn with_values(&self, values: &[f64]) -> Parametrization {
        let mut out = self.clone();
        for (v, new) in out.calibrated.values_mut().zip(values) {
            *v = *new;
        }
        out
    }

    pub fn bounds_of(&self, name: &str) -> (f64, f64) {
        self.bounds.get(name).copied().unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
    }

    pub fn check_bounds(&self) -> Result<()> {
        for (name, v) in &self.calibrated {
            let (lo, hi) = self.bounds_of(name);
            if !v.is_finite() || *v < lo - 1e-12 || *v > hi + 1e-12 {
                return Err(Error::InvalidParameter(format!("`{name}` = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Reporting fraction in effect on `day`.
    pub fn reporting_at(&self, base: &str, day: usize) -> Result<f64> {
        let k = self.subperiod_starts.iter().take_while(|s| **s <= day).count();
        if k == 0 {
            self.require(base)
        } else {
            self.require(&subperiod_name(base, k))
        }
    }
}

fn subperiod_name(base: &str, k: usize) -> String {
    format!("{base}_p{k}")
}

/// Model structure plus the schema of its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiModel {
    pub kind: ModelKind,
    pub population: f64,
    /// Day offset at which shelter-in-place starts (SEIR+HD only).
    pub intervention_day: Option<usize>,
    pub fixed: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, (f64, f64)>,
    /// Day offsets at which the reporting fraction takes a new value.
    pub subperiod_starts: Vec<usize>,
    pub integrator: Integrator,
}

/// Infectiousness multipliers for isolated subpopulations from `start_day` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isolation {
    pub start_day: usize,
    pub presymptomatic: f64,
    pub severe: f64,
    pub mild: f64,
    pub asymptomatic: f64,
}

impl Isolation {
    pub fn none() -> Self {
        Isolation {
            start_day: usize::MAX,
            presymptomatic: 1.0,
            severe: 1.0,
            mild: 1.0,
            asymptomatic: 1.0,
        }
    }
}

/// Daily observables of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutputs {
    pub daily_reported: Vec<f64>,
    pub daily_unreported: Vec<f64>,
    pub daily_total: Vec<f64>,
    /// `I_S + I_M` occupancy at the end of each day (SEIR+HD only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symptomatic_count: Option<Vec<f64>>,
    pub population: f64,
}

impl ModelOutputs {
    pub fn horizon(&self) -> usize {
        self.daily_total.len()
    }

    pub fn cumulative_total(&self) -> Vec<f64> {
        prefix_sum(&self.daily_total)
    }
}

pub(crate) fn prefix_sum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

impl EpiModel {
    pub fn new(kind: ModelKind, population: f64) -> Self {
        let params = ModelParams::default();
        let section = params.section(kind);
        EpiModel {
            kind,
            population,
            intervention_day: None,
            fixed: section.fixed.clone(),
            bounds: section.bounds.iter().map(|(k, v)| (k.clone(), (v[0], v[1]))).collect(),
            subperiod_starts: Vec::new(),
            integrator: Integrator::default(),
        }
    }

    pub fn seir_hd(population: f64) -> Self {
        Self::new(ModelKind::SeirHd, population)
    }

    pub fn saphire(population: f64) -> Self {
        Self::new(ModelKind::Saphire, population)
    }

    pub fn with_intervention_day(mut self, day: Option<usize>) -> Self {
        self.intervention_day = day;
        self
    }

    pub fn with_subperiods(mut self, starts: Vec<usize>) -> Self {
        self.subperiod_starts = starts;
        self
    }

    /// Builds a model from a parameter file; the intervention date is
    /// resolved against `series_start`.
    pub fn from_params(kind: ModelKind, params: &ModelParams, series_start: NaiveDate) -> Result<Self> {
        let section = params.section(kind);
        let mut bounds = BTreeMap::new();
        for (k, v) in &section.bounds {
            if !(v[0] <= v[1]) {
                return Err(Error::InvalidConfig(format!("bounds for `{k}` are inverted")));
            }
            bounds.insert(k.clone(), (v[0], v[1]));
        }
        for name in Self::required_calibrated(kind) {
            if !bounds.contains_key(*name) {
                return Err(Error::InvalidConfig(format!("no bounds given for `{name}`")));
            }
        }
        let intervention_day = match params.intervention_date.date {
            Some(d) if kind == ModelKind::SeirHd => {
                let off = (d - series_start).num_days();
                Some(off.max(0) as usize)
            }
            _ => None,
        };
        if !(params.population.n > 0.0) {
            return Err(Error::InvalidConfig("population must be positive".into()));
        }
        Ok(EpiModel {
            kind,
            population: params.population.n,
            intervention_day,
            fixed: section.fixed.clone(),
            bounds,
            subperiod_starts: Vec::new(),
            integrator: Integrator::default(),
        })
    }

    pub fn compartment_names(&self) -> &'static [&'static str] {
        match self.kind {
            ModelKind::SeirHd => &SEIR_HD_COMPARTMENTS,
            ModelKind::Saphire => &SAPHIRE_COMPARTMENTS,
        }
    }

    pub fn required_calibrated(kind: ModelKind) -> &'static [&'static str] {
        match kind {
            ModelKind::SeirHd => &["alpha", "alpha1", "beta0", "e0", "sigma"],
            ModelKind::Saphire => &["beta", "e0", "r"],
        }
    }

    /// Name of the parameter that only scales the reported observable.
    pub fn reporting_param(&self) -> &'static str {
        match self.kind {
            ModelKind::SeirHd => "alpha1",
            ModelKind::Saphire => "r",
        }
    }

    /// Parametrization with the given calibrated values; unspecified
    /// calibrated parameters start at the midpoint of their bounds.
    pub fn parametrization(&self, values: &[(&str, f64)]) -> Result<Parametrization> {
        let subperiod_starts = &self.subperiod_starts;
        let mut calibrated = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for name in Self::required_calibrated(self.kind) {
            let b = *self
                .bounds
                .get(*name)
                .ok_or_else(|| Error::InvalidConfig(format!("no bounds for `{name}`")))?;
            calibrated.insert(name.to_string(), 0.5 * (b.0 + b.1));
            bounds.insert(name.to_string(), b);
        }
        let rep = self.reporting_param();
        let rep_bounds = bounds[rep];
        for k in 1..=subperiod_starts.len() {
            let name = subperiod_name(rep, k);
            calibrated.insert(name.clone(), calibrated[rep]);
            bounds.insert(name, rep_bounds);
        }
        for (name, v) in values {
            match calibrated.get_mut(*name) {
                Some(slot) => *slot = *v,
                None => return Err(Error::InvalidParameter(format!("`{name}` is not calibrated in {}", self.kind))),
            }
        }
        // sub-period values default to the base reporting value
        if !values.iter().any(|(n, _)| n.starts_with(&format!("{rep}_p"))) {
            let base = calibrated[rep];
            for k in 1..=subperiod_starts.len() {
                calibrated.insert(subperiod_name(rep, k), base);
            }
        }
        let theta = Parametrization {
            calibrated,
            fixed: self.fixed.clone(),
            bounds,
            subperiod_starts: subperiod_starts.clone(),
        };
        theta.check_bounds()?;
        Ok(theta)
    }

    fn validate(&self, theta: &Parametrization) -> Result<()> {
        theta.check_bounds()?;
        for name in Self::required_calibrated(self.kind) {
            theta.require(name)?;
        }
        for name in ["alpha", "alpha1", "sigma", "r"] {
            if let Some(v) = theta.calibrated.get(name) {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::InvalidParameter(format!("`{name}` = {v} must lie in [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn initial_state(&self, theta: &Parametrization) -> Result<Vec<f64>> {
        let e0 = theta.require("e0")?.min(self.population);
        let mut init = vec![0.0; self.compartment_names().len()];
        init[0] = self.population - e0;
        init[1] = e0;
        Ok(init)
    }

    pub fn simulate(&self, theta: &Parametrization, horizon: usize) -> Result<ModelOutputs> {
        self.simulate_with_isolation(theta, horizon, &Isolation::none())
    }

    /// Raw compartment states and daily transfers of an unmodified run.
    pub fn trajectory(&self, theta: &Parametrization, horizon: usize) -> Result<Trajectory> {
        self.validate(theta)?;
        let init = self.initial_state(theta)?;
        match self.kind {
            ModelKind::SeirHd => {
                let system = SeirHdSystem::new(self, theta, Isolation::none())?;
                self.integrator.integrate(&system, &init, horizon)
            }
            ModelKind::Saphire => self.integrator.integrate(&SaphireSystem::new(self, theta)?, &init, horizon),
        }
    }

    pub fn simulate_with_isolation(
        &self,
        theta: &Parametrization,
        horizon: usize,
        isolation: &Isolation,
    ) -> Result<ModelOutputs> {
        self.validate(theta)?;
        let init = self.initial_state(theta)?;
        match self.kind {
            ModelKind::SeirHd => {
                let system = SeirHdSystem::new(self, theta, *isolation)?;
                let traj = self.integrator.integrate(&system, &init, horizon)?;
                let mut out = ModelOutputs {
                    daily_reported: Vec::with_capacity(horizon),
                    daily_unreported: Vec::with_capacity(horizon),
                    daily_total: Vec::with_capacity(horizon),
                    symptomatic_count: Some(
                        traj.states[1..].iter().map(|s| s[seir::IS] + s[seir::IM]).collect(),
                    ),
                    population: self.population,
                };
                for (day, f) in traj.flows.iter().enumerate() {
                    let alpha1 = theta.reporting_at("alpha1", day)?;
                    let new_symptomatic = f[3] + f[4];
                    let reported = alpha1 * new_symptomatic;
                    let unreported = (1.0 - alpha1) * new_symptomatic + f[1];
                    out.daily_reported.push(reported);
                    out.daily_unreported.push(unreported);
                    out.daily_total.push(reported + unreported);
                }
                Ok(out)
            }
            ModelKind::Saphire => {
                if isolation.start_day != usize::MAX {
                    return Err(Error::UnsupportedModel(self.kind.to_string()));
                }
                let system = SaphireSystem::new(self, theta)?;
                let traj = self.integrator.integrate(&system, &init, horizon)?;
                let mut out = ModelOutputs {
                    daily_reported: Vec::with_capacity(horizon),
                    daily_unreported: Vec::with_capacity(horizon),
                    daily_total: Vec::with_capacity(horizon),
                    symptomatic_count: None,
                    population: self.population,
                };
                for (day, f) in traj.flows.iter().enumerate() {
                    let r = theta.reporting_at("r", day)?;
                    let presymptomatic_outflow = f[2] + f[3];
                    let reported = r * presymptomatic_outflow;
                    let unreported = (1.0 - r) * presymptomatic_outflow;
                    out.daily_reported.push(reported);
                    out.daily_unreported.push(unreported);
                    out.daily_total.push(reported + unreported);
                }
                Ok(out)
            }
        }
    }
}

fn rate_from_days(theta: &Parametrization, name: &str) -> Result<f64> {
    let days = theta.require(name)?;
    if !(days > 0.0) {
        return Err(Error::InvalidParameter(format!("`{name}` must be positive")));
    }
    Ok(1.0 / days)
}

fn fraction(theta: &Parametrization, name: &str) -> Result<f64> {
    let v = theta.require(name)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("`{name}` = {v} must lie in [0, 1]")));
    }
    Ok(v)
}

struct SeirHdSystem {
    n: f64,
    beta0: f64,
    sigma: f64,
    intervention_day: Option<usize>,
    asymptomatic: f64,
    gamma: f64,
    lambda_p: f64,
    severe_fraction: f64,
    lambda_s: f64,
    fatality: f64,
    lambda_m: f64,
    lambda_a: f64,
    rho_r: f64,
    rho_d: f64,
    inf_p: f64,
    inf_s: f64,
    inf_m: f64,
    inf_a: f64,
    isolation: Isolation,
}

impl SeirHdSystem {
    fn new(model: &EpiModel, theta: &Parametrization, isolation: Isolation) -> Result<Self> {
        Ok(SeirHdSystem {
            n: model.population,
            beta0: theta.require("beta0")?,
            sigma: theta.require("sigma")?,
            intervention_day: model.intervention_day,
            asymptomatic: theta.require("alpha")?,
            gamma: rate_from_days(theta, "latent_days")?,
            lambda_p: rate_from_days(theta, "presymptomatic_days")?,
            severe_fraction: fraction(theta, "severe_fraction")?,
            lambda_s: rate_from_days(theta, "severe_days")?,
            fatality: fraction(theta, "hospital_fatality")?,
            lambda_m: rate_from_days(theta, "mild_days")?,
            lambda_a: rate_from_days(theta, "asymptomatic_days")?,
            rho_r: rate_from_days(theta, "hospital_recovery_days")?,
            rho_d: rate_from_days(theta, "hospital_death_days")?,
            inf_p: theta.require("inf_presymptomatic")?,
            inf_s: theta.require("inf_severe")?,
            inf_m: theta.require("inf_mild")?,
            inf_a: theta.require("inf_asymptomatic")?,
            isolation,
        })
    }
}

impl FlowSystem for SeirHdSystem {
    fn compartments(&self) -> usize {
        SEIR_HD_COMPARTMENTS.len()
    }

    fn flows(&self) -> &[Flow] {
        &SEIR_HD_FLOWS
    }

    fn flow_rates(&self, day: usize, _t: f64, y: &[f64], rates: &mut [f64]) {
        let beta = match self.intervention_day {
            Some(d) if day >= d => self.beta0 * (1.0 - self.sigma),
            _ => self.beta0,
        };
        let iso = if day >= self.isolation.start_day {
            self.isolation
        } else {
            Isolation::none()
        };
        let pressure = self.inf_p * iso.presymptomatic * y[seir::IP]
            + self.inf_s * iso.severe * y[seir::IS]
            + self.inf_m * iso.mild * y[seir::IM]
            + self.inf_a * iso.asymptomatic * y[seir::IA];
        let e_out = self.gamma * y[seir::E];
        let p_out = self.lambda_p * y[seir::IP];
        let s_out = self.lambda_s * y[seir::IS];

        rates[0] = beta * y[seir::S] * pressure / self.n;
        rates[1] = self.asymptomatic * e_out;
        rates[2] = (1.0 - self.asymptomatic) * e_out;
        rates[3] = self.severe_fraction * p_out;
        rates[4] = (1.0 - self.severe_fraction) * p_out;
        rates[5] = self.fatality * s_out;
        rates[6] = (1.0 - self.fatality) * s_out;
        rates[7] = self.lambda_m * y[seir::IM];
        rates[8] = self.lambda_a * y[seir::IA];
        rates[9] = self.rho_r * y[seir::HR];
        rates[10] = self.rho_d * y[seir::HD];
    }
}

struct SaphireSystem {
    n: f64,
    beta: f64,
    inf_p: f64,
    latent: f64,
    presym: f64,
    infectious: f64,
    hosp_fraction: f64,
    hosp: f64,
    /// Reporting fraction per day; routes presymptomatic outflow to I or A.
    reporting: Vec<f64>,
}

impl SaphireSystem {
    fn new(model: &EpiModel, theta: &Parametrization) -> Result<Self> {
        let horizon_hint = theta.subperiod_starts.last().copied().unwrap_or(0) + 1;
        let reporting = (0..horizon_hint)
            .map(|d| theta.reporting_at("r", d))
            .collect::<Result<Vec<_>>>()?;
        Ok(SaphireSystem {
            n: model.population,
            beta: theta.require("beta")?,
            inf_p: theta.require("inf_presymptomatic")?,
            latent: rate_from_days(theta, "latent_days")?,
            presym: rate_from_days(theta, "presymptomatic_days")?,
            infectious: rate_from_days(theta, "infectious_days")?,
            hosp_fraction: fraction(theta, "hospital_fraction")?,
            hosp: rate_from_days(theta, "hospital_days")?,
            reporting,
        })
    }
}

impl FlowSystem for SaphireSystem {
    fn compartments(&self) -> usize {
        SAPHIRE_COMPARTMENTS.len()
    }

    fn flows(&self) -> &[Flow] {
        &SAPHIRE_FLOWS
    }

    fn flow_rates(&self, day: usize, _t: f64, y: &[f64], rates: &mut [f64]) {
        let r = self.reporting[day.min(self.reporting.len() - 1)];
        // Ascertained and unascertained cases share infectiousness and
        // infectious period, so `r` leaves the transmission dynamics unchanged.
        let pressure = self.inf_p * y[saph::P] + y[saph::I] + y[saph::A];
        let p_out = self.presym * y[saph::P];
        rates[0] = self.beta * y[saph::S] * pressure / self.n;
        rates[1] = self.latent * y[saph::E];
        rates[2] = r * p_out;
        rates[3] = (1.0 - r) * p_out;
        rates[4] = self.hosp_fraction * self.infectious * y[saph::I];
        rates[5] = (1.0 - self.hosp_fraction) * self.infectious * y[saph::I];
        rates[6] = self.infectious * y[saph::A];
        rates[7] = self.hosp * y[saph::H];
    }
}

/// Overall reported fraction of a run: total reported over total infections.
pub fn reported_rate_of(outputs: &ModelOutputs) -> Result<f64> {
    let total: f64 = outputs.daily_total.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateEpidemic);
    }
    Ok(outputs.daily_reported.iter().sum::<f64>() / total)
}

/// Fraction of the population in a symptomatic compartment, per day.
pub fn symptomatic_rate(outputs: &ModelOutputs) -> Result<Vec<f64>> {
    let counts = outputs
        .symptomatic_count
        .as_ref()
        .ok_or(Error::UnsupportedObservable("symptomatic rate"))?;
    Ok(counts.iter().map(|c| c / outputs.population).collect())
}

/// Observed reported infections over the model's total infections, summed
/// over the overlapping days. Values above 1 mean the model has fewer
/// infections than were reported.
pub fn cumulative_reported_rate(observed: &ReportedSeries, outputs: &ModelOutputs) -> Result<f64> {
    let len = observed.len().min(outputs.horizon());
    let total: f64 = outputs.daily_total[..len].iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateEpidemic);
    }
    Ok(observed.daily[..len].iter().sum::<f64>() / total)
}

/// Fixed values and bounds for one model, as stored in the parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub fixed: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSection {
    pub n: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionSection {
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

/// Contents of the model-parameter file.
///
/// The shipped values are defaults chosen to give plausible COVID-19-like
/// dynamics; edit them to match a target study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub seir_hd: ModelSection,
    pub saphire: ModelSection,
    pub population: PopulationSection,
    #[serde(default)]
    pub intervention_date: InterventionSection,
}

pub const DEFAULT_MODEL_PARAMS: &str = include_str!("../../../configs/model_params.toml");

impl Default for ModelParams {
    fn default() -> Self {
        toml::from_str(DEFAULT_MODEL_PARAMS).expect("bundled model parameters parse")
    }
}

impl ModelParams {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn section(&self, kind: ModelKind) -> &ModelSection {
        match kind {
            ModelKind::SeirHd => &self.seir_hd,
            ModelKind::Saphire => &self.saphire,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seir_theta(model: &EpiModel, overrides: &[(&str, f64)]) -> Parametrization {
        let mut values = vec![("beta0", 0.6), ("sigma", 0.5), ("e0", 20.0), ("alpha", 0.4), ("alpha1", 0.5)];
        for (k, v) in overrides {
            values.retain(|(n, _)| n != k);
            values.push((k, *v));
        }
        model.parametrization(&values).unwrap()
    }

    #[test]
    fn compartment_counts() {
        assert_eq!(EpiModel::seir_hd(1e5).compartment_names().len(), 10);
        assert_eq!(EpiModel::saphire(1e5).compartment_names().len(), 7);
    }

    #[test]
    fn full_reporting_leaves_only_asymptomatic_unreported() {
        let model = EpiModel::seir_hd(1e5).with_intervention_day(Some(30));
        let theta = seir_theta(&model, &[("alpha1", 1.0)]);
        let out = model.simulate(&theta, 60).unwrap();
        let system = SeirHdSystem::new(&model, &theta, Isolation::none()).unwrap();
        let traj = model.integrator.integrate(&system, &model.initial_state(&theta).unwrap(), 60).unwrap();
        let e_ia = traj.flow_series("E_IA").unwrap();
        assert_eq!(out.daily_unreported, e_ia);
    }

    #[test]
    fn saphire_full_reporting_has_no_unreported() {
        let model = EpiModel::saphire(1e5);
        let theta = model.parametrization(&[("beta", 0.8), ("r", 1.0), ("e0", 10.0)]).unwrap();
        let out = model.simulate(&theta, 40).unwrap();
        assert!(out.daily_unreported.iter().all(|v| *v == 0.0));
        assert!(out.daily_reported.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn total_is_reported_plus_unreported() {
        let model = EpiModel::seir_hd(1e5).with_intervention_day(Some(20));
        let out = model.simulate(&seir_theta(&model, &[]), 50).unwrap();
        for t in 0..50 {
            assert_eq!(out.daily_total[t], out.daily_reported[t] + out.daily_unreported[t]);
            assert!(out.daily_reported[t] >= 0.0 && out.daily_unreported[t] >= 0.0);
        }
    }

    #[test]
    fn no_transmission_is_a_fixed_point() {
        let model = EpiModel::seir_hd(1e5);
        let theta = seir_theta(&model, &[("beta0", 0.05), ("e0", 0.0)]);
        let out = model.simulate(&theta, 30).unwrap();
        assert!(out.daily_total.iter().all(|v| *v == 0.0));
        let system = SeirHdSystem::new(&model, &theta, Isolation::none()).unwrap();
        let traj = model.integrator.integrate(&system, &model.initial_state(&theta).unwrap(), 30).unwrap();
        assert!(traj.states.iter().all(|s| s[seir::S] == 1e5));
    }

    #[test]
    fn zero_beta_with_seed_produces_no_new_infections() {
        let mut model = EpiModel::seir_hd(1e5);
        model.bounds.insert("beta0".into(), (0.0, 2.0));
        let theta = seir_theta(&model, &[("beta0", 0.0), ("e0", 0.0)]);
        let system = SeirHdSystem::new(&model, &theta, Isolation::none()).unwrap();
        let traj = model.integrator.integrate(&system, &model.initial_state(&theta).unwrap(), 25).unwrap();
        assert!(traj.flow_series("S_E").unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seir_hd_conserves_population() {
        let model = EpiModel::seir_hd(2.5e5).with_intervention_day(Some(40));
        let theta = seir_theta(&model, &[("beta0", 0.9)]);
        let system = SeirHdSystem::new(&model, &theta, Isolation::none()).unwrap();
        let traj = model.integrator.integrate(&system, &model.initial_state(&theta).unwrap(), 200).unwrap();
        for s in &traj.states {
            let sum: f64 = s.iter().sum();
            assert!(((sum - 2.5e5) / 2.5e5).abs() <= 1e-9);
        }
    }

    #[test]
    fn saphire_reported_is_linear_in_r() {
        let model = EpiModel::saphire(1e6);
        let run = |r| {
            let theta = model.parametrization(&[("beta", 0.9), ("r", r), ("e0", 30.0)]).unwrap();
            model.simulate(&theta, 90).unwrap()
        };
        let (a, b) = (run(0.2), run(0.4));
        for t in 0..90 {
            assert!((b.daily_reported[t] - 2.0 * a.daily_reported[t]).abs() <= 1e-12 * b.daily_reported[t].max(1.0));
        }
        assert!((reported_rate_of(&a).unwrap() - 0.2).abs() <= 1e-9);
        assert!((reported_rate_of(&b).unwrap() - 0.4).abs() <= 1e-9);
    }

    #[test]
    fn seir_hd_reported_is_linear_in_alpha1() {
        let model = EpiModel::seir_hd(1e6).with_intervention_day(Some(25));
        let a = model.simulate(&seir_theta(&model, &[("alpha1", 0.3)]), 80).unwrap();
        let b = model.simulate(&seir_theta(&model, &[("alpha1", 0.6)]), 80).unwrap();
        for t in 0..80 {
            assert!((b.daily_reported[t] - 2.0 * a.daily_reported[t]).abs() <= 1e-12 * b.daily_reported[t].max(1.0));
            assert!((a.daily_total[t] - b.daily_total[t]).abs() <= 1e-12 * a.daily_total[t].max(1.0));
        }
    }

    #[test]
    fn subperiod_reporting_switches_on_boundary() {
        let model = EpiModel::seir_hd(1e6).with_subperiods(vec![30]);
        let theta = model
            .parametrization(&[
                ("beta0", 0.6),
                ("sigma", 0.0),
                ("e0", 20.0),
                ("alpha", 0.4),
                ("alpha1", 0.2),
                ("alpha1_p1", 0.8),
            ])
            .unwrap();
        let out = model.simulate(&theta, 60).unwrap();
        let model = EpiModel::seir_hd(1e6);
        let base = model.simulate(&seir_theta(&model, &[("alpha1", 0.2), ("sigma", 0.0)]), 60).unwrap();
        for t in 0..60 {
            assert!((out.daily_total[t] - base.daily_total[t]).abs() <= 1e-12 * base.daily_total[t].max(1.0));
        }
        assert!((out.daily_reported[29] - base.daily_reported[29]).abs() < 1e-12);
        assert!((out.daily_reported[30] - 4.0 * base.daily_reported[30]).abs() < 1e-9 * out.daily_reported[30]);
    }

    #[test]
    fn intervention_reduces_transmission() {
        let model = EpiModel::seir_hd(1e6);
        let theta = seir_theta(&model, &[("sigma", 0.8)]);
        let free = model.simulate(&theta, 60).unwrap();
        let locked = model.clone().with_intervention_day(Some(20)).simulate(&theta, 60).unwrap();
        assert_eq!(free.daily_total[..20], locked.daily_total[..20]);
        assert!(locked.daily_total[59] < free.daily_total[59]);
    }

    #[test]
    fn rates_and_ratios() {
        let outputs = |rep: Vec<f64>, tot: Vec<f64>| ModelOutputs {
            daily_unreported: rep.iter().zip(&tot).map(|(r, t)| t - r).collect(),
            daily_reported: rep,
            daily_total: tot,
            symptomatic_count: None,
            population: 100.0,
        };
        assert_eq!(reported_rate_of(&outputs(vec![1.0, 1.0], vec![2.0, 2.0])).unwrap(), 0.5);
        assert_eq!(reported_rate_of(&outputs(vec![2.0, 3.0], vec![2.0, 3.0])).unwrap(), 1.0);
        assert_eq!(reported_rate_of(&outputs(vec![3.0, 1.0], vec![4.0, 4.0])).unwrap(), 0.5);
        assert!(matches!(
            reported_rate_of(&outputs(vec![0.0], vec![0.0])),
            Err(Error::DegenerateEpidemic)
        ));

        let start = "2020-01-01".parse().unwrap();
        let model_out = outputs(vec![0.0; 4], vec![50.0; 4]);
        let obs = |v: Vec<f64>| ReportedSeries::new(start, v, "R").unwrap();
        assert_eq!(cumulative_reported_rate(&obs(vec![20.0, 10.0, 10.0, 10.0]), &model_out).unwrap(), 0.25);
        assert_eq!(cumulative_reported_rate(&obs(vec![0.0; 4]), &model_out).unwrap(), 0.0);
        assert_eq!(cumulative_reported_rate(&obs(vec![75.0; 4]), &model_out).unwrap(), 1.5);
        assert!(matches!(
            cumulative_reported_rate(&obs(vec![1.0; 4]), &outputs(vec![0.0; 4], vec![0.0; 4])),
            Err(Error::DegenerateEpidemic)
        ));
    }

    #[test]
    fn symptomatic_rate_observable() {
        let mut out = ModelOutputs {
            daily_reported: vec![0.0; 3],
            daily_unreported: vec![0.0; 3],
            daily_total: vec![0.0; 3],
            symptomatic_count: Some(vec![0.0, 10.0, 0.0]),
            population: 100.0,
        };
        assert_eq!(symptomatic_rate(&out).unwrap(), vec![0.0, 0.1, 0.0]);
        out.symptomatic_count = Some(vec![0.0; 3]);
        assert_eq!(symptomatic_rate(&out).unwrap(), vec![0.0; 3]);

        let model = EpiModel::saphire(1e5);
        let theta = model.parametrization(&[("beta", 0.8), ("r", 0.3), ("e0", 10.0)]).unwrap();
        let saphire_out = model.simulate(&theta, 10).unwrap();
        assert!(matches!(
            symptomatic_rate(&saphire_out),
            Err(Error::UnsupportedObservable(_))
        ));
    }

    #[test]
    fn out_of_bounds_parameters_are_rejected() {
        let model = EpiModel::seir_hd(1e5);
        assert!(model.parametrization(&[("alpha1", 1.5)]).is_err());
        assert!(model.parametrization(&[("gamma", 0.5)]).is_err());
        let mut theta = seir_theta(&model, &[]);
        theta.calibrated.insert("sigma".into(), -0.1);
        assert!(model.simulate(&theta, 5).is_err());
    }

    #[test]
    fn bundled_params_parse() {
        let p = ModelParams::default();
        assert!(p.population.n > 0.0);
        for kind in [ModelKind::SeirHd, ModelKind::Saphire] {
            let m = EpiModel::from_params(kind, &p, "2020-03-01".parse().unwrap()).unwrap();
            assert!(m.parametrization(&[]).is_ok());
        }
    }
}
