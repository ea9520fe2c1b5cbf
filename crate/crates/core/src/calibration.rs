//! Least-squares calibration of model parameters.
//!
//! Two objectives are supported: fitting the reported series alone
//! (baseline calibration) and fitting a candidate total-infection series
//! together with the reported series. Both use multi-start bounded
//! Nelder-Mead; restart `i` draws its starting point from its own stream of
//! a seeded ChaCha generator, so results do not depend on how many restarts
//! run or in which order they finish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdl::LatentTotalSeries;
use crate::models::{EpiModel, Parametrization};
use crate::optim::{Bounds, NelderMead};
use crate::timeseries::ReportedSeries;

/// Initial simplex edge as a fraction of each parameter's bound range.
pub const SIMPLEX_EDGE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    FitReported,
    FitPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    #[serde(rename = "w_reported")]
    pub reported: f64,
    #[serde(rename = "w_total")]
    pub total: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            reported: 1.0,
            total: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub objective: Objective,
    pub max_iters: usize,
    pub restarts: usize,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
    #[serde(rename = "tol")]
    pub convergence_tol: f64,
    #[serde(flatten)]
    pub loss_weights: LossWeights,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            objective: Objective::FitReported,
            max_iters: 2000,
            restarts: 8,
            rng_seed: 42,
            convergence_tol: 1e-8,
            loss_weights: LossWeights::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence tolerance must be positive".into()));
        }
        if !(self.loss_weights.reported > 0.0 && self.loss_weights.total > 0.0) {
            return Err(Error::InvalidConfig("loss weights must be positive".into()));
        }
        Ok(())
    }

    /// Same settings with a different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        CalibrationConfig {
            rng_seed: seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta: Parametrization,
    pub loss: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Parameter-space geometry shared by all restarts of one calibration.
struct Space {
    template: Parametrization,
    bounds: Bounds,
    steps: Vec<f64>,
}

impl Space {
    fn new(model: &EpiModel) -> Result<Self> {
        let template = model.parametrization(&[])?;
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for name in template.names() {
            let (lo, hi) = template.bounds_of(&name);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!("calibrated parameter `{name}` needs finite bounds")));
            }
            lower.push(lo);
            upper.push(hi);
        }
        let steps = lower
            .iter()
            .zip(&upper)
            .map(|(lo, hi)| SIMPLEX_EDGE_FRACTION * (hi - lo))
            .collect();
        Ok(Space {
            template,
            bounds: Bounds { lower, upper },
            steps,
        })
    }

    fn draw(&self, seed: u64, restart: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        self.bounds
            .lower
            .iter()
            .zip(&self.bounds.upper)
            .map(|(lo, hi)| if hi > lo { rng.gen_range(*lo..=*hi) } else { *lo })
            .collect()
    }
}

fn run_restarts<L>(
    model: &EpiModel,
    cfg: &CalibrationConfig,
    warm_start: Option<&Parametrization>,
    loss: L,
) -> Result<CalibrationResult>
where
    L: Fn(&Parametrization) -> f64 + Sync,
{
    cfg.validate()?;
    let space = Space::new(model)?;
    let nm = NelderMead::with_budget(cfg.max_iters, cfg.convergence_tol);

    let run = |restart: usize| {
        let x0 = match (restart, warm_start) {
            (0, Some(start)) => start.values(),
            _ => space.draw(cfg.rng_seed, restart),
        };
        let objective = |x: &[f64]| loss(&space.template.with_values(x));
        nm.minimize(objective, &x0, &space.steps, &space.bounds)
    };
    let runs: Vec<_> = (0..cfg.restarts).into_par_iter().map(run).collect();

    // lowest loss wins, ties go to the lowest restart index
    let (best_idx, best) = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
        .expect("at least one restart");
    if !best.value.is_finite() {
        return Err(Error::CalibrationFailed(format!(
            "all {} restarts produced non-finite loss",
            cfg.restarts
        )));
    }
    log::debug!(
        "calibration: best restart {best_idx} loss {:.6e} after {} iterations",
        best.value,
        best.iterations
    );
    Ok(CalibrationResult {
        theta: space.template.with_values(&best.x),
        loss: best.value,
        iterations_used: runs.iter().map(|r| r.iterations).sum(),
        converged: best.converged,
    })
}

fn reported_loss<'a>(model: &'a EpiModel, observed: &'a [f64]) -> impl Fn(&Parametrization) -> f64 + Sync + 'a {
    move |theta| match model.simulate(theta, observed.len()) {
        Ok(out) => sse(&out.daily_reported, observed),
        Err(_) => f64::INFINITY,
    }
}

fn pair_loss<'a>(
    model: &'a EpiModel,
    total: &'a [f64],
    observed: &'a [f64],
    weights: LossWeights,
) -> impl Fn(&Parametrization) -> f64 + Sync + 'a {
    move |theta| match model.simulate(theta, observed.len()) {
        Ok(out) => weights.reported * sse(&out.daily_reported, observed) + weights.total * sse(&out.daily_total, total),
        Err(_) => f64::INFINITY,
    }
}

/// Dispatches on `cfg.objective`; `total` is required for the pair objective.
pub fn calibrate(
    model: &EpiModel,
    observed: &ReportedSeries,
    total: Option<&LatentTotalSeries>,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    match (cfg.objective, total) {
        (Objective::FitReported, _) => base_infer(model, observed, cfg),
        (Objective::FitPair, Some(total)) => candidate_calibrate(model, total, observed, cfg),
        (Objective::FitPair, None) => Err(Error::InvalidConfig("pair objective needs a total series".into())),
    }
}

/// Calibrates `model` to the reported series alone.
pub fn base_infer(model: &EpiModel, observed: &ReportedSeries, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    if observed.len() < 14 {
        return Err(Error::InvalidSeries(format!(
            "need at least 14 observed days, got {}",
            observed.len()
        )));
    }
    run_restarts(model, cfg, None, reported_loss(model, &observed.daily))
}

fn check_pair(total: &LatentTotalSeries, observed: &ReportedSeries) -> Result<()> {
    if total.daily.len() != observed.len() {
        return Err(Error::shape(total.daily.len(), observed.len()));
    }
    for (t, (d, o)) in total.daily.iter().zip(&observed.daily).enumerate() {
        if *d < *o - 1e-12 * o.abs() {
            return Err(Error::InvalidLatentSeries {
                day: t,
                total: *d,
                observed: *o,
            });
        }
    }
    Ok(())
}

/// Calibrates `model` to a candidate total series and the reported series.
pub fn candidate_calibrate(
    model: &EpiModel,
    total: &LatentTotalSeries,
    observed: &ReportedSeries,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    candidate_calibrate_from(model, total, observed, cfg, None)
}

/// As [`candidate_calibrate`], with restart 0 started at `warm_start`
/// instead of a random draw.
pub fn candidate_calibrate_from(
    model: &EpiModel,
    total: &LatentTotalSeries,
    observed: &ReportedSeries,
    cfg: &CalibrationConfig,
    warm_start: Option<&Parametrization>,
) -> Result<CalibrationResult> {
    check_pair(total, observed)?;
    run_restarts(
        model,
        cfg,
        warm_start,
        pair_loss(model, &total.daily, &observed.daily, cfg.loss_weights),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rmse;

    fn start() -> chrono::NaiveDate {
        "2020-03-01".parse().unwrap()
    }

    fn model() -> EpiModel {
        EpiModel::seir_hd(1e6).with_intervention_day(Some(30))
    }

    fn truth(model: &EpiModel) -> Parametrization {
        model
            .parametrization(&[("beta0", 0.55), ("sigma", 0.6), ("e0", 40.0), ("alpha", 0.4), ("alpha1", 0.4)])
            .unwrap()
    }

    fn cfg() -> CalibrationConfig {
        CalibrationConfig {
            restarts: 6,
            max_iters: 3000,
            convergence_tol: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn base_infer_reproduces_noise_free_reported_series() {
        let m = model();
        let out = m.simulate(&truth(&m), 60).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported.clone(), "R").unwrap();
        let fit = base_infer(&m, &obs, &cfg()).unwrap();
        let fitted = m.simulate(&fit.theta, 60).unwrap();
        let peak = obs.daily.iter().cloned().fold(0.0, f64::max);
        let err = rmse(&fitted.daily_reported, &obs.daily).unwrap();
        assert!(err <= 0.01 * peak, "rmse {err} vs peak {peak}");
    }

    #[test]
    fn zero_observations_drive_seed_to_lower_bound() {
        // reporting bounded away from zero, so any seed shows up in the fit
        let mut m = model();
        m.bounds.insert("alpha".into(), (0.0, 0.5));
        m.bounds.insert("alpha1".into(), (0.2, 1.0));
        let obs = ReportedSeries::new(start(), vec![0.0; 30], "R").unwrap();
        let fit = base_infer(&m, &obs, &cfg()).unwrap();
        let (lo, hi) = fit.theta.bounds_of("e0");
        assert!(fit.theta.calibrated["e0"] - lo <= 1e-3 * (hi - lo), "{:?}", fit.theta.calibrated);
        assert!(fit.loss < 1e-6, "{}", fit.loss);
    }

    #[test]
    fn zero_iterations_return_best_initial_draw() {
        let m = model();
        let out = m.simulate(&truth(&m), 40).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported, "R").unwrap();
        let c = CalibrationConfig {
            max_iters: 0,
            ..cfg()
        };
        let fit = base_infer(&m, &obs, &c).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations_used, 0);
        let space = Space::new(&m).unwrap();
        let loss = reported_loss(&m, &obs.daily);
        let best = (0..c.restarts)
            .map(|i| loss(&space.template.with_values(&space.draw(c.rng_seed, i))))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(fit.loss, best);
    }

    #[test]
    fn calibration_is_deterministic_and_feasible() {
        let m = model();
        let out = m.simulate(&truth(&m), 45).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported, "R").unwrap();
        let c = CalibrationConfig {
            restarts: 3,
            max_iters: 300,
            ..cfg()
        };
        let a = base_infer(&m, &obs, &c).unwrap();
        let b = base_infer(&m, &obs, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.theta.check_bounds().is_ok());
    }

    #[test]
    fn extra_restarts_never_hurt() {
        let m = model();
        let out = m.simulate(&truth(&m), 45).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported, "R").unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let c = CalibrationConfig {
                restarts: k,
                max_iters: 150,
                ..cfg()
            };
            let loss = base_infer(&m, &obs, &c).unwrap().loss;
            assert!(loss <= prev, "restarts {k}: {loss} > {prev}");
            prev = loss;
        }
    }

    #[test]
    fn pair_fit_with_total_equal_reported_pushes_reporting_up() {
        let m = model();
        let out = m.simulate(&truth(&m), 60).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported.clone(), "R").unwrap();
        let total = LatentTotalSeries::new(out.daily_reported);
        let fit = candidate_calibrate(&m, &total, &obs, &cfg()).unwrap();
        let fitted = m.simulate(&fit.theta, 60).unwrap();
        let rate = crate::models::reported_rate_of(&fitted).unwrap();
        assert!(rate > 0.95, "reported rate {rate}");
        assert!(fit.theta.calibrated["alpha1"] > 0.95);
    }

    #[test]
    fn pair_fit_recovers_transmission_rate() {
        let m = model();
        let theta = truth(&m);
        let out = m.simulate(&theta, 60).unwrap();
        let obs = ReportedSeries::new(start(), out.daily_reported.clone(), "R").unwrap();
        let total = LatentTotalSeries::new(out.daily_total.clone());
        let fit = candidate_calibrate(&m, &total, &obs, &cfg()).unwrap();
        let beta = fit.theta.calibrated["beta0"];
        assert!((beta - 0.55).abs() <= 0.05 * 0.55, "beta0 {beta}");
    }

    #[test]
    fn latent_series_below_observed_is_rejected() {
        let m = model();
        let obs = ReportedSeries::new(start(), vec![5.0; 20], "R").unwrap();
        let mut total = vec![10.0; 20];
        total[3] = 4.0;
        assert!(matches!(
            candidate_calibrate(&m, &LatentTotalSeries::new(total), &obs, &cfg()),
            Err(Error::InvalidLatentSeries { day: 3, .. })
        ));
    }

    #[test]
    fn short_series_and_bad_config_are_rejected() {
        let m = model();
        let obs = ReportedSeries::new(start(), vec![1.0; 10], "R").unwrap();
        assert!(base_infer(&m, &obs, &cfg()).is_err());
        let obs = ReportedSeries::new(start(), vec![1.0; 20], "R").unwrap();
        let c = CalibrationConfig {
            restarts: 0,
            ..cfg()
        };
        assert!(matches!(base_infer(&m, &obs, &c), Err(Error::InvalidConfig(_))));
    }
}
