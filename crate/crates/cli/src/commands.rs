//! One function per subcommand. Each reads its inputs, runs a pipeline stage
//! and writes its artifacts into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mdl_epi::calibration::{base_infer, CalibrationResult};
use mdl_epi::mdl::{
    grid_search_alpha, mdl_infer_with, write_cost_table, GridCell, MdlResult, GRID_SIZE,
};
use mdl_epi::metrics::{build_report, report_to_json, write_tidy_csv, ReportInputs};
use mdl_epi::models::ModelParams;
use mdl_epi::scenarios::{run_scenario_suite, write_suite_csv};
use mdl_epi::timeseries::{
    load_cumulative_csv, load_serology_csv, load_survey_csv, smooth_14, split_observed_forecast, to_daily,
    PeriodSplit,
};
use mdl_epi::{EpiModel, Error, ModelKind, ModelOutputs, Parametrization, ReportedSeries};

use crate::config::RunConfig;
use crate::error::CliError;

pub const THETA_HAT_FILE: &str = "theta_hat.json";
pub const FIT_FILE: &str = "fit_reported.csv";
pub const COST_TABLE_FILE: &str = "cost_table.csv";
pub const GRID_FILE: &str = "grid.json";
pub const MDL_RESULT_FILE: &str = "mdl_result.json";
pub const D_STAR_FILE: &str = "d_star.csv";
pub const FORECAST_FILE: &str = "forecast.csv";
pub const SCENARIO_FILE: &str = "scenarios.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_SERIES_FILE: &str = "report_series.csv";

/// Everything the pipeline stages share: the model and the split data.
pub struct Context {
    pub cfg: RunConfig,
    pub model: EpiModel,
    pub observed: ReportedSeries,
    pub forecast: ReportedSeries,
}

impl Context {
    pub fn load(cfg: RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let data = load_cumulative_csv(&cfg.data.cases, &cfg.data.region)?;
        for w in &data.warnings {
            log::warn!("{}: {w:?}", cfg.data.cases.display());
        }
        let mut series = to_daily(&data.cases, &data.region_id);
        if cfg.data.smooth {
            series = smooth_14(&series);
        }
        let series = clip(&series, cfg.period.start, cfg.period.end)?;

        let split = match cfg.period.subperiod_days {
            Some(block) => PeriodSplit::with_blocks(series.start_date, cfg.period.observed_end, block),
            None => PeriodSplit::new(cfg.period.observed_end, cfg.period.subperiod_boundaries.clone())?,
        };
        let (observed, forecast) = split_observed_forecast(&series, &split)?;

        let mut params = match &cfg.model_params.path {
            Some(p) => ModelParams::from_path(p)?,
            None => ModelParams::default(),
        };
        if let Some(n) = cfg.model_params.population {
            params.population.n = n;
        }
        if let Some(d) = cfg.model_params.intervention_date {
            params.intervention_date.date = Some(d);
        }
        let model = EpiModel::from_params(cfg.model, &params, series.start_date)?
            .with_subperiods(split.boundary_offsets(series.start_date));
        log::info!(
            "{}: {} observed days from {}, {} forecast days",
            observed.region_id,
            observed.len(),
            observed.start_date,
            forecast.len()
        );
        Ok(Context {
            cfg,
            model,
            observed,
            forecast,
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.observed.start_date
    }

    pub fn horizon(&self) -> usize {
        self.observed.len() + self.forecast.len()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn full_reported(&self) -> Vec<f64> {
        let mut all = self.observed.daily.clone();
        all.extend_from_slice(&self.forecast.daily);
        all
    }

    /// The run settings that determine the numbers, echoed into reports.
    fn settings(&self) -> BTreeMap<String, Value> {
        let c = &self.cfg;
        BTreeMap::from([
            ("model".to_string(), json!(c.model.to_string())),
            ("region".to_string(), json!(c.data.region)),
            ("seed".to_string(), json!(c.calibration.rng_seed)),
            ("restarts".to_string(), json!(c.calibration.restarts)),
            ("max_iters".to_string(), json!(c.calibration.max_iters)),
            ("delta".to_string(), json!(c.encoding.delta)),
            ("grid_step".to_string(), json!(1.0 / GRID_SIZE as f64)),
            ("refine_max_evals".to_string(), json!(c.refine.max_evals)),
            ("observed_end".to_string(), json!(c.period.observed_end)),
            ("scenario_multiplier".to_string(), json!(c.scenario.multiplier)),
            ("smoothed".to_string(), json!(c.data.smooth)),
        ])
    }
}

fn clip(s: &ReportedSeries, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<ReportedSeries, CliError> {
    let lo = from.map_or(0, |d| s.offset_of(d));
    let hi = to.map_or(s.len() as i64 - 1, |d| s.offset_of(d));
    if lo < 0 || hi >= s.len() as i64 || lo > hi {
        return Err(CliError::Config(format!(
            "period {}..={} is outside the data range {}..={}",
            from.unwrap_or(s.start_date),
            to.unwrap_or(s.end_date()),
            s.start_date,
            s.end_date()
        )));
    }
    Ok(ReportedSeries::new(
        s.date_at(lo as usize),
        s.daily[lo as usize..=hi as usize].to_vec(),
        s.region_id.clone(),
    )?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let value = serde_json::to_value(value).map_err(|e| Error::Serialization(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path, hint: &'static str) -> Result<T, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            hint,
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
        .into()
    })
}

fn write_tidy(path: &Path, start: NaiveDate, series: &[(&str, &[f64])]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_tidy_csv(&mut buf, start, series)?;
    write_file(path, &buf)
}

/// Fits the model to the observed reported series.
pub fn cmd_calibrate(ctx: &Context) -> Result<CalibrationResult, CliError> {
    let fit = base_infer(&ctx.model, &ctx.observed, &ctx.cfg.calibration)?;
    log::info!("calibration loss {:.4} after {} iterations", fit.loss, fit.iterations_used);
    let out = ctx.model.simulate(&fit.theta, ctx.observed.len())?;
    write_json(&ctx.out(THETA_HAT_FILE), &fit)?;
    write_tidy(
        &ctx.out(FIT_FILE),
        ctx.start(),
        &[
            ("observed", &ctx.observed.daily),
            ("fit_reported", &out.daily_reported),
            ("fit_total", &out.daily_total),
        ],
    )?;
    Ok(fit)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GridSummary {
    pub alpha_star: f64,
    pub theta_hat: Parametrization,
    pub cells: Vec<GridCell>,
}

pub enum InferOutcome {
    Grid(GridSummary),
    Full(Box<MdlResult>),
}

/// Runs the reporting-rate grid and, unless `alpha_only`, the series
/// refinement. With `resume` the saved baseline fit is reused.
pub fn cmd_infer(ctx: &Context, alpha_only: bool, resume: bool) -> Result<InferOutcome, CliError> {
    let theta_hat = if resume {
        let saved: CalibrationResult = read_json(&ctx.out(THETA_HAT_FILE), "run `calibrate` first or drop --resume")?;
        log::info!("reusing saved baseline fit");
        saved.theta
    } else {
        cmd_calibrate(ctx)?.theta
    };
    let cfg = &ctx.cfg;
    if alpha_only {
        let (alpha_star, cells) = grid_search_alpha(&ctx.model, &ctx.observed, &theta_hat, &cfg.calibration, &cfg.encoding)?;
        write_cost_table_file(&ctx.out(COST_TABLE_FILE), &cells)?;
        let summary = GridSummary {
            alpha_star,
            theta_hat,
            cells,
        };
        write_json(&ctx.out(GRID_FILE), &summary)?;
        return Ok(InferOutcome::Grid(summary));
    }
    let result = mdl_infer_with(
        &ctx.model,
        &ctx.observed,
        Some(theta_hat),
        &cfg.calibration,
        &cfg.encoding,
        &cfg.refine,
    )?;
    write_cost_table_file(&ctx.out(COST_TABLE_FILE), &result.cost_table)?;
    write_json(&ctx.out(MDL_RESULT_FILE), &result)?;
    write_tidy(
        &ctx.out(D_STAR_FILE),
        ctx.start(),
        &[("observed", &ctx.observed.daily), ("D_star", &result.d_star.daily)],
    )?;
    Ok(InferOutcome::Full(Box::new(result)))
}

fn write_cost_table_file(path: &Path, cells: &[GridCell]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_cost_table(&mut buf, cells)?;
    write_file(path, &buf)
}

fn load_mdl_result(ctx: &Context) -> Result<MdlResult, CliError> {
    read_json(&ctx.out(MDL_RESULT_FILE), "run `infer` first")
}

fn simulate_both(ctx: &Context, result: &MdlResult) -> Result<(ModelOutputs, ModelOutputs), CliError> {
    let base = ctx.model.simulate(&result.theta_hat, ctx.horizon())?;
    let mdl = ctx.model.simulate(&result.theta_star, ctx.horizon())?;
    Ok((base, mdl))
}

/// Reported series over both periods under both parametrizations.
pub fn cmd_forecast(ctx: &Context) -> Result<(), CliError> {
    let result = load_mdl_result(ctx)?;
    let (base, mdl) = simulate_both(ctx, &result)?;
    write_tidy(
        &ctx.out(FORECAST_FILE),
        ctx.start(),
        &[
            ("reported", &ctx.full_reported()),
            ("base_reported", &base.daily_reported),
            ("mdl_reported", &mdl.daily_reported),
            ("base_total", &base.daily_total),
            ("mdl_total", &mdl.daily_total),
        ],
    )
}

/// Isolation scenarios driven by the learned parametrization.
pub fn cmd_scenario(ctx: &Context) -> Result<(), CliError> {
    if ctx.model.kind != ModelKind::SeirHd {
        return Err(Error::UnsupportedModel(format!("isolation scenarios need SEIR+HD, got {}", ctx.model.kind)).into());
    }
    let result = load_mdl_result(ctx)?;
    let start_date = ctx
        .cfg
        .scenario
        .start_date
        .unwrap_or(ctx.cfg.period.observed_end + Days::new(1));
    let suite = run_scenario_suite(
        &ctx.model,
        &result.theta_star,
        ctx.start(),
        start_date,
        ctx.horizon(),
        ctx.cfg.scenario.multiplier,
    )?;
    let mut buf = Vec::new();
    write_suite_csv(&mut buf, ctx.start(), &suite)?;
    write_file(&ctx.out(SCENARIO_FILE), &buf)
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    date: NaiveDate,
    total: f64,
}

/// Reads a `date,total` file of known daily total infections, aligned to
/// `start` and cut to `horizon` days.
pub fn load_truth_csv(path: &Path, start: NaiveDate, horizon: usize) -> Result<Vec<f64>, CliError> {
    let parse = |message: String| -> CliError {
        Error::Parse {
            path: path.to_path_buf(),
            message,
        }
        .into()
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        },
        _ => parse(e.to_string()),
    })?;
    let mut values = Vec::new();
    for row in reader.deserialize::<TruthRow>() {
        let row = row.map_err(|e| parse(e.to_string()))?;
        let expected = start + Days::new(values.len() as u64);
        if row.date < start {
            continue;
        }
        if row.date != expected {
            return Err(parse(format!("expected {expected}, found {}", row.date)));
        }
        values.push(row.total);
        if values.len() == horizon {
            break;
        }
    }
    if values.is_empty() {
        return Err(parse(format!("no rows on or after {start}")));
    }
    Ok(values)
}

/// Evaluation of both parametrizations against the data and any external
/// validation sources named in the config.
pub fn cmd_report(ctx: &Context) -> Result<(), CliError> {
    let result = load_mdl_result(ctx)?;
    let (base, mdl) = simulate_both(ctx, &result)?;
    let data = &ctx.cfg.data;
    let serology = match &data.serology {
        Some(p) => load_serology_csv(p)?,
        None => Vec::new(),
    };
    let survey = data.survey.as_ref().map(load_survey_csv).transpose()?;
    let truth = data
        .truth
        .as_ref()
        .map(|p| load_truth_csv(p, ctx.start(), ctx.horizon()))
        .transpose()?;

    let mut config = ctx.settings();
    config.insert("alpha_star".to_string(), json!(result.alpha_star));
    let report = build_report(&ReportInputs {
        observed_reported: &ctx.observed.daily,
        forecast_reported: &ctx.forecast.daily,
        base: &base,
        mdl: &mdl,
        start: ctx.start(),
        true_total: truth.as_deref(),
        serology: &serology,
        survey: survey.as_ref().map(|s| (s.dates.as_slice(), s.rate.as_slice())),
        config,
    })?;
    let mut text = report_to_json(&report)?;
    text.push('\n');
    write_file(&ctx.out(REPORT_FILE), text.as_bytes())?;

    let reported = ctx.full_reported();
    let mut series: Vec<(&str, &[f64])> = vec![
        ("reported", &reported),
        ("base_reported", &base.daily_reported),
        ("mdl_reported", &mdl.daily_reported),
        ("base_total", &base.daily_total),
        ("mdl_total", &mdl.daily_total),
        ("D_star", &result.d_star.daily),
    ];
    if let Some(t) = &truth {
        series.push(("true_total", t));
    }
    write_tidy(&ctx.out(REPORT_SERIES_FILE), ctx.start(), &series)
}
