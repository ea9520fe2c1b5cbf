//! Estimation of latent total epidemic infections from reported cases.
//!
//! The pipeline calibrates a compartmental model to reported infections
//! ([`calibration::base_infer`]), then searches for the daily total-infection
//! series whose two-part description length is smallest
//! ([`mdl::mdl_infer`]). The learned parametrization drives forecasting and
//! counterfactual isolation scenarios ([`scenarios`]).

pub mod calibration;
pub mod error;
pub mod mdl;
pub mod metrics;
pub mod models;
pub mod ode;
pub mod optim;
pub mod scenarios;
pub mod timeseries;

pub use error::{Error, Result};
pub use models::{EpiModel, ModelKind, ModelOutputs, Parametrization};
pub use timeseries::ReportedSeries;
