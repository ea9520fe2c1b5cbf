//! Two-part description length of a candidate total-infection series and
//! the search for the series that minimizes it.

pub mod encoding;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{reported_rate_of, EpiModel, ModelOutputs, Parametrization};
use crate::timeseries::ReportedSeries;

pub use encoding::{cost_int, cost_real, cost_seq_diff, cost_uint, cost_vector, log_star, EncodingConfig};
pub use search::{
    grid_search_alpha, mdl_infer, mdl_infer_with, project_total, refine_total_series, write_cost_table, GridCell,
    MdlResult, RefineConfig, COST_TABLE_HEADER, GRID_SIZE,
};

/// Candidate daily total infections, aligned with an observed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTotalSeries {
    pub daily: Vec<f64>,
}

impl LatentTotalSeries {
    pub fn new(daily: Vec<f64>) -> Self {
        LatentTotalSeries { daily }
    }

    /// `observed / alpha`, the step-one candidate for a reporting rate.
    pub fn scaled(observed: &ReportedSeries, alpha: f64) -> Self {
        LatentTotalSeries::new(observed.daily.iter().map(|v| v / alpha).collect())
    }

    pub fn total(&self) -> f64 {
        self.daily.iter().sum()
    }
}

/// Bits spent on each part of the message; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub cost_theta_hat: f64,
    pub cost_theta_prime_given_hat: f64,
    #[serde(rename = "cost_D_given_params")]
    pub cost_d_given_params: f64,
    pub data_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(cost_theta_hat: f64, cost_theta_prime_given_hat: f64, cost_d_given_params: f64, data_cost: f64) -> Self {
        CostBreakdown {
            cost_theta_hat,
            cost_theta_prime_given_hat,
            cost_d_given_params,
            data_cost,
            total: cost_theta_hat + cost_theta_prime_given_hat + cost_d_given_params + data_cost,
        }
    }

    pub fn model_cost(&self) -> f64 {
        self.cost_theta_hat + self.cost_theta_prime_given_hat + self.cost_d_given_params
    }
}

/// Differences of calibrated values over names present in both.
fn parameter_difference(theta_prime: &Parametrization, theta_hat: &Parametrization) -> Vec<f64> {
    theta_prime
        .calibrated
        .iter()
        .filter_map(|(name, v)| theta_hat.calibrated.get(name).map(|h| v - h))
        .collect()
}

/// Total cost given already simulated outputs of both parametrizations
/// over the observed horizon.
pub fn total_cost_from_outputs(
    observed: &[f64],
    d: &LatentTotalSeries,
    theta_prime: &Parametrization,
    theta_hat: &Parametrization,
    out_prime: &ModelOutputs,
    out_hat: &ModelOutputs,
    cfg: &EncodingConfig,
) -> Result<CostBreakdown> {
    let t = observed.len();
    if d.daily.len() != t {
        return Err(Error::shape(d.daily.len(), t));
    }
    if out_prime.horizon() < t || out_hat.horizon() < t {
        return Err(Error::shape(out_prime.horizon().min(out_hat.horizon()), t));
    }
    let rate = reported_rate_of(out_prime)?;
    if !(rate < 1.0) {
        return Err(Error::DegenerateReportedRate(rate));
    }

    let part1 = cost_vector(&theta_hat.values(), cfg);
    let part2 = cost_vector(&parameter_difference(theta_prime, theta_hat), cfg);
    let sent_reported: Vec<f64> = d.daily.iter().map(|v| rate * v).collect();
    let part3 = cost_seq_diff(&sent_reported, &out_hat.daily_reported[..t], cfg)?;
    let unreported: Vec<f64> = d
        .daily
        .iter()
        .zip(observed)
        .map(|(d, o)| (d - o) / (1.0 - rate))
        .collect();
    let part4 = cost_seq_diff(&unreported, &out_prime.daily_total[..t], cfg)?;
    Ok(CostBreakdown::new(part1, part2, part3, part4))
}

/// Total description length of the observed series sent through `d`,
/// `theta_prime` and `theta_hat`.
pub fn total_cost(
    observed: &ReportedSeries,
    d: &LatentTotalSeries,
    theta_prime: &Parametrization,
    theta_hat: &Parametrization,
    model: &EpiModel,
    cfg: &EncodingConfig,
) -> Result<CostBreakdown> {
    let t = observed.len();
    let out_prime = model.simulate(theta_prime, t)?;
    let out_hat = model.simulate(theta_hat, t)?;
    total_cost_from_outputs(&observed.daily, d, theta_prime, theta_hat, &out_prime, &out_hat, cfg)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn start() -> chrono::NaiveDate {
        "2020-03-01".parse().unwrap()
    }

    fn model() -> EpiModel {
        EpiModel::seir_hd(1e6).with_intervention_day(Some(25))
    }

    fn theta(m: &EpiModel, beta: f64, alpha1: f64) -> Parametrization {
        m.parametrization(&[("beta0", beta), ("sigma", 0.5), ("e0", 30.0), ("alpha", 0.4), ("alpha1", alpha1)])
            .unwrap()
    }

    #[test]
    fn perfect_model_reaches_residual_floor() {
        // in SAPHIRE the daily reported share is exactly r, so every residual vanishes
        let m = EpiModel::saphire(1e6);
        let th = m.parametrization(&[("beta", 0.7), ("r", 0.3), ("e0", 30.0)]).unwrap();
        let out = m.simulate(&th, 50).unwrap();
        let d = LatentTotalSeries::new(out.daily_total.clone());
        let obs = ReportedSeries::new(start(), out.daily_reported.clone(), "R").unwrap();
        let cfg = EncodingConfig::default();
        let cost = total_cost(&obs, &d, &th, &th, &m, &cfg).unwrap();
        let floor = 50.0 * cost_real(0.0, &cfg);
        assert_eq!(cost.cost_theta_prime_given_hat, 3.0 * cost_real(0.0, &cfg));
        assert!((cost.cost_d_given_params - floor).abs() < 1e-9);
        assert!((cost.data_cost - floor).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let perturbed: Vec<f64> = d.daily.iter().map(|v| v + rng.gen_range(-0.01..0.01)).collect();
            let c = total_cost(&obs, &LatentTotalSeries::new(perturbed), &th, &th, &m, &cfg).unwrap();
            assert!(c.total >= cost.total);
        }
    }

    #[test]
    fn parts_follow_their_definitions() {
        let m = model();
        let hat = theta(&m, 0.6, 0.3);
        let prime = theta(&m, 0.7, 0.2);
        let cfg = EncodingConfig::default();
        let out_hat = m.simulate(&hat, 40).unwrap();
        let out_prime = m.simulate(&prime, 40).unwrap();
        let obs = ReportedSeries::new(start(), out_hat.daily_reported.clone(), "R").unwrap();
        let d = LatentTotalSeries::scaled(&obs, 0.5);
        let cost = total_cost(&obs, &d, &prime, &hat, &m, &cfg).unwrap();

        // independent recomputation
        let rate = out_prime.daily_reported.iter().sum::<f64>() / out_prime.daily_total.iter().sum::<f64>();
        let real = |x: f64| cost_real(x, &cfg);
        let p1: f64 = hat.calibrated.values().map(|v| real(*v)).sum();
        let p2: f64 = prime.calibrated.iter().map(|(k, v)| real(v - hat.calibrated[k])).sum();
        let p3: f64 = (0..40).map(|t| real(rate * d.daily[t] - out_hat.daily_reported[t])).sum();
        let p4: f64 = (0..40)
            .map(|t| real((d.daily[t] - obs.daily[t]) / (1.0 - rate) - out_prime.daily_total[t]))
            .sum();
        assert!((cost.cost_theta_hat - p1).abs() < 1e-9);
        assert!((cost.cost_theta_prime_given_hat - p2).abs() < 1e-9);
        assert!((cost.cost_d_given_params - p3).abs() < 1e-9);
        assert!((cost.data_cost - p4).abs() < 1e-9);
    }

    #[test]
    fn full_reporting_is_degenerate() {
        let m = model();
        let th = theta(&m, 0.6, 1.0);
        // with alpha = 0 every infection is symptomatic and reported
        let mut th = th;
        th.set("alpha", 0.0);
        let out = m.simulate(&th, 30).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported.clone(), "R").unwrap();
        let d = LatentTotalSeries::new(out.daily_total.clone());
        assert!(matches!(
            total_cost(&obs, &d, &th, &th, &m, &EncodingConfig::default()),
            Err(Error::DegenerateReportedRate(_))
        ));
    }

    #[test]
    fn length_mismatch_is_a_shape_error() {
        let m = model();
        let th = theta(&m, 0.6, 0.3);
        let obs = ReportedSeries::new(start(), vec![1.0; 20], "R").unwrap();
        let d = LatentTotalSeries::new(vec![2.0; 19]);
        assert!(matches!(
            total_cost(&obs, &d, &th, &th, &m, &EncodingConfig::default()),
            Err(Error::ShapeError { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn total_is_exact_sum(a in 0.0f64..1e6, b in 0.0f64..1e6, c in 0.0f64..1e6, d in 0.0f64..1e6) {
            let cost = CostBreakdown::new(a, b, c, d);
            prop_assert_eq!(cost.total, a + b + c + d);
        }

        #[test]
        fn computed_costs_are_nonnegative_and_sum(beta in 0.3f64..0.9, a1 in 0.05f64..0.9, alpha in 0.05f64..1.0) {
            let m = model();
            let hat = theta(&m, 0.6, 0.3);
            let prime = theta(&m, beta, a1);
            let out = m.simulate(&hat, 30).unwrap();
            let obs = ReportedSeries::new(start(), out.daily_reported, "R").unwrap();
            let d = LatentTotalSeries::scaled(&obs, alpha);
            let cost = total_cost(&obs, &d, &prime, &hat, &m, &EncodingConfig::default()).unwrap();
            prop_assert!(cost.cost_theta_hat >= 0.0 && cost.cost_theta_prime_given_hat >= 0.0);
            prop_assert!(cost.cost_d_given_params >= 0.0 && cost.data_cost >= 0.0);
            prop_assert_eq!(
                cost.total,
                cost.cost_theta_hat + cost.cost_theta_prime_given_hat + cost.cost_d_given_params + cost.data_cost
            );
        }
    }
}
