//! Two-step search: a grid over the reporting rate, then a refinement of
//! the daily total series at the best rate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{total_cost_from_outputs, CostBreakdown, EncodingConfig, LatentTotalSeries};
use crate::calibration::{base_infer, candidate_calibrate, candidate_calibrate_from, CalibrationConfig, Objective};
use crate::error::{Error, Result};
use crate::models::{EpiModel, ModelOutputs, Parametrization};
use crate::optim::{Bounds, NelderMead};
use crate::timeseries::ReportedSeries;

/// Grid points `0.01, 0.02, ..., 1.00`.
pub const GRID_SIZE: usize = 100;

pub const COST_TABLE_HEADER: &str = "alpha,cost_theta_hat,cost_theta_prime,cost_D,data_cost,total";

/// Relative tolerance on the sum constraint of a projected series.
const SUM_TOLERANCE: f64 = 1e-9;

pub fn grid_alpha(index: usize) -> f64 {
    (index + 1) as f64 / GRID_SIZE as f64
}

/// One step-one evaluation. Failed cells keep the error and cost `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub theta_prime: Option<Parametrization>,
    pub cost: Option<CostBreakdown>,
    pub error: Option<String>,
}

impl GridCell {
    pub fn total(&self) -> f64 {
        self.cost.map_or(f64::INFINITY, |c| c.total)
    }

    fn failed(alpha: f64, err: Error) -> Self {
        GridCell {
            alpha,
            theta_prime: None,
            cost: None,
            error: Some(err.to_string()),
        }
    }
}

/// Budget of the series refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Cost evaluations allowed for the Nelder-Mead search over the series.
    pub max_evals: usize,
    /// Iterations of the warm-started re-calibration done per evaluation.
    pub recalib_iters: usize,
    /// Initial simplex edge as a fraction of each day's starting value.
    pub step_fraction: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            max_evals: 400,
            recalib_iters: 60,
            step_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdlResult {
    pub alpha_star: f64,
    #[serde(rename = "D_star")]
    pub d_star: LatentTotalSeries,
    pub theta_star: Parametrization,
    pub theta_hat: Parametrization,
    pub cost_table: Vec<GridCell>,
    /// Cost of `D_star` under the refined parametrization.
    pub refined_cost: CostBreakdown,
}

impl MdlResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.cost_table.iter().find(|c| c.alpha == self.alpha_star)
    }
}

fn pair_config(cfg: &CalibrationConfig) -> CalibrationConfig {
    CalibrationConfig {
        objective: Objective::FitPair,
        ..cfg.clone()
    }
}

fn evaluate_cell(
    model: &EpiModel,
    observed: &ReportedSeries,
    theta_hat: &Parametrization,
    out_hat: &ModelOutputs,
    cfg: &CalibrationConfig,
    enc: &EncodingConfig,
    index: usize,
) -> GridCell {
    let alpha = grid_alpha(index);
    let d = LatentTotalSeries::scaled(observed, alpha);
    let cell_cfg = cfg.reseeded(cfg.rng_seed ^ index as u64);
    let cost = candidate_calibrate(model, &d, observed, &cell_cfg).and_then(|fit| {
        let out = model.simulate(&fit.theta, observed.len())?;
        let cost = total_cost_from_outputs(&observed.daily, &d, &fit.theta, theta_hat, &out, out_hat, enc)?;
        if !cost.total.is_finite() {
            return Err(Error::SearchFailed(format!("non-finite description length at alpha {alpha:.2}")));
        }
        Ok((fit.theta, cost))
    });
    match cost {
        Ok((theta, cost)) => GridCell {
            alpha,
            theta_prime: Some(theta),
            cost: Some(cost),
            error: None,
        },
        Err(e) => {
            log::debug!("grid cell alpha={alpha:.2} failed: {e}");
            GridCell::failed(alpha, e)
        }
    }
}

/// Index of the lowest finite total, ties to the smallest alpha.
fn argmin(cells: &[GridCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.total().is_finite())
        .min_by(|(i, a), (j, b)| a.total().total_cmp(&b.total()).then(i.cmp(j)))
        .map(|(i, _)| i)
}

/// Step one: for each grid rate, calibrate to `observed / alpha` and score
/// the result. Returns the best rate and the full table.
pub fn grid_search_alpha(
    model: &EpiModel,
    observed: &ReportedSeries,
    theta_hat: &Parametrization,
    calib_cfg: &CalibrationConfig,
    enc_cfg: &EncodingConfig,
) -> Result<(f64, Vec<GridCell>)> {
    enc_cfg.validate()?;
    if !observed.daily.iter().any(|v| *v > 0.0) {
        return Err(Error::SearchFailed("observed series is identically zero".into()));
    }
    let out_hat = model.simulate(theta_hat, observed.len())?;
    let cfg = pair_config(calib_cfg);
    let cells: Vec<GridCell> = (0..GRID_SIZE)
        .into_par_iter()
        .map(|i| evaluate_cell(model, observed, theta_hat, &out_hat, &cfg, enc_cfg, i))
        .collect();
    match argmin(&cells) {
        Some(i) => Ok((cells[i].alpha, cells)),
        None => Err(Error::SearchFailed(format!(
            "all {GRID_SIZE} grid cells failed; first error: {}",
            cells[0].error.as_deref().unwrap_or("non-finite cost")
        ))),
    }
}

/// Maps `x` onto `{D : D >= observed, sum D = target_sum}`: the excess over
/// `observed` is clipped at zero and rescaled to the required mass, spread
/// uniformly when nothing is left.
pub fn project_total(x: &[f64], observed: &[f64], target_sum: f64) -> Vec<f64> {
    let mass = target_sum - observed.iter().sum::<f64>();
    if mass <= 0.0 || observed.is_empty() {
        return observed.to_vec();
    }
    let excess: Vec<f64> = x
        .iter()
        .zip(observed)
        .map(|(v, o)| if v.is_finite() { (v - o).max(0.0) } else { 0.0 })
        .collect();
    let s: f64 = excess.iter().sum();
    if s > 0.0 && s.is_finite() {
        observed.iter().zip(&excess).map(|(o, e)| o + e * mass / s).collect()
    } else {
        let share = mass / observed.len() as f64;
        observed.iter().map(|o| o + share).collect()
    }
}

fn is_feasible(d: &[f64], observed: &[f64], target_sum: f64) -> bool {
    let sum: f64 = d.iter().sum();
    d.iter().zip(observed).all(|(d, o)| d >= o) && (sum - target_sum).abs() <= SUM_TOLERANCE * target_sum.max(1.0)
}

/// Step two: Nelder-Mead over the daily series, starting at
/// `observed / alpha_star`. Every evaluation re-calibrates the candidate
/// parametrization from `warm_start` with a short budget. Returns the best
/// series found, its cost and parametrization.
#[allow(clippy::too_many_arguments)]
pub fn refine_total_series(
    alpha_star: f64,
    observed: &ReportedSeries,
    model: &EpiModel,
    theta_hat: &Parametrization,
    warm_start: &Parametrization,
    calib_cfg: &CalibrationConfig,
    enc_cfg: &EncodingConfig,
    refine_cfg: &RefineConfig,
) -> Result<(LatentTotalSeries, CostBreakdown, Parametrization)> {
    if !(alpha_star > 0.0 && alpha_star <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha_star must lie in (0, 1], got {alpha_star}")));
    }
    let obs = &observed.daily;
    let target: f64 = obs.iter().sum::<f64>() / alpha_star;
    let out_hat = model.simulate(theta_hat, obs.len())?;
    let cfg = CalibrationConfig {
        objective: Objective::FitPair,
        max_iters: refine_cfg.recalib_iters,
        restarts: 1,
        ..calib_cfg.clone()
    };

    let score = |d: &LatentTotalSeries| -> Result<(CostBreakdown, Parametrization)> {
        let fit = candidate_calibrate_from(model, d, observed, &cfg, Some(warm_start))?;
        let out = model.simulate(&fit.theta, obs.len())?;
        let cost = total_cost_from_outputs(obs, d, &fit.theta, theta_hat, &out, &out_hat, enc_cfg)?;
        Ok((cost, fit.theta))
    };

    let x0 = project_total(&LatentTotalSeries::scaled(observed, alpha_star).daily, obs, target);
    let mut best: Option<(Vec<f64>, CostBreakdown, Parametrization)> = None;
    let consider = |d: Vec<f64>, best: &mut Option<(Vec<f64>, CostBreakdown, Parametrization)>| -> f64 {
        let series = LatentTotalSeries::new(d);
        match score(&series) {
            Ok((cost, theta)) => {
                if best.as_ref().map_or(true, |b| cost.total < b.1.total) {
                    *best = Some((series.daily, cost, theta));
                }
                cost.total
            }
            Err(_) => f64::INFINITY,
        }
    };

    if target > obs.iter().sum::<f64>() && refine_cfg.max_evals > 0 {
        let steps: Vec<f64> = x0.iter().map(|v| refine_cfg.step_fraction * v.max(1.0)).collect();
        let bounds = Bounds {
            lower: obs.clone(),
            upper: vec![f64::INFINITY; obs.len()],
        };
        let nm = NelderMead {
            max_iters: usize::MAX,
            max_evals: refine_cfg.max_evals,
            tol: calib_cfg.convergence_tol,
            ..Default::default()
        };
        nm.minimize(
            |x| consider(project_total(x, obs, target), &mut best),
            &x0,
            &steps,
            &bounds,
        );
    } else {
        consider(x0, &mut best);
    }

    let (d, cost, theta) = best.ok_or_else(|| Error::RefinementFailed("no candidate series could be scored".into()))?;
    if !is_feasible(&d, obs, target) {
        return Err(Error::RefinementFailed("refined series violates the sum constraint".into()));
    }
    Ok((LatentTotalSeries::new(d), cost, theta))
}

/// Full two-step inference with default refinement budget.
pub fn mdl_infer(
    model: &EpiModel,
    observed: &ReportedSeries,
    calib_cfg: &CalibrationConfig,
    enc_cfg: &EncodingConfig,
) -> Result<MdlResult> {
    mdl_infer_with(model, observed, None, calib_cfg, enc_cfg, &RefineConfig::default())
}

/// As [`mdl_infer`]; a supplied `theta_hat` skips the baseline calibration.
pub fn mdl_infer_with(
    model: &EpiModel,
    observed: &ReportedSeries,
    theta_hat: Option<Parametrization>,
    calib_cfg: &CalibrationConfig,
    enc_cfg: &EncodingConfig,
    refine_cfg: &RefineConfig,
) -> Result<MdlResult> {
    let theta_hat = match theta_hat {
        Some(t) => t,
        None => base_infer(model, observed, calib_cfg)?.theta,
    };
    let (alpha_star, cost_table) = grid_search_alpha(model, observed, &theta_hat, calib_cfg, enc_cfg)?;
    log::info!("grid search: alpha* = {alpha_star:.2}");
    let cell = cost_table
        .iter()
        .find(|c| c.alpha == alpha_star)
        .expect("argmin comes from the table");
    let warm = cell.theta_prime.clone().expect("finite cells carry a parametrization");

    let (mut d_star, mut refined_cost, mut theta_ref) = refine_total_series(
        alpha_star,
        observed,
        model,
        &theta_hat,
        &warm,
        calib_cfg,
        enc_cfg,
        refine_cfg,
    )?;
    let grid_cost = cell.cost.expect("finite cell");
    if grid_cost.total < refined_cost.total {
        // the short re-calibration did not reach the grid cell's fit
        d_star = LatentTotalSeries::scaled(observed, alpha_star);
        refined_cost = grid_cost;
        theta_ref = warm;
    }
    log::info!("refinement: total cost {:.3} -> {:.3}", grid_cost.total, refined_cost.total);

    let cfg = pair_config(calib_cfg);
    let theta_star = candidate_calibrate_from(model, &d_star, observed, &cfg, Some(&theta_ref))?.theta;
    Ok(MdlResult {
        alpha_star,
        d_star,
        theta_star,
        theta_hat,
        cost_table,
        refined_cost,
    })
}

fn fmt_bits(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".to_string()
    }
}

/// Writes the step-one table, one row per grid rate.
pub fn write_cost_table<W: Write>(mut w: W, cells: &[GridCell]) -> Result<()> {
    let mut out = String::from(COST_TABLE_HEADER);
    out.push('\n');
    for cell in cells {
        let parts = match cell.cost {
            Some(c) => [c.cost_theta_hat, c.cost_theta_prime_given_hat, c.cost_d_given_params, c.data_cost, c.total],
            None => [f64::INFINITY; 5],
        };
        out.push_str(&format!("{:.2}", cell.alpha));
        for p in parts {
            out.push(',');
            out.push_str(&fmt_bits(p));
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::Serialization(format!("cost table: {e}")))
}
