//! Ingestion, cleaning and alignment of dated daily series.
//!
//! All series here are gap-free sequences of calendar days anchored at a
//! `start_date`. Inputs arrive as cumulative counts (one row per region and
//! day) and are converted to daily increments, smoothed with a trailing
//! 14-day mean, and split into an observed and a forecast period.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the trailing smoothing window, in days.
pub const SMOOTHING_WINDOW: usize = 14;

/// Days between an infection becoming countable in the model and the start
/// of the antibody specimen collection it is compared against.
pub const SEROLOGY_LAG_DAYS: i64 = 7;

/// Default sub-period length when no explicit boundaries are configured.
pub const DEFAULT_SUBPERIOD_DAYS: usize = 60;

/// Daily new reported infections for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedSeries {
    pub start_date: NaiveDate,
    pub daily: Vec<f64>,
    pub region_id: String,
}

impl ReportedSeries {
    pub fn new(start_date: NaiveDate, daily: Vec<f64>, region_id: impl Into<String>) -> Result<Self> {
        if daily.is_empty() {
            return Err(Error::InvalidSeries("series is empty".into()));
        }
        if let Some((t, v)) = daily.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("day {t} has invalid value {v}")));
        }
        Ok(ReportedSeries {
            start_date,
            daily,
            region_id: region_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.daily.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily.is_empty()
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(self.daily.len() as i64 - 1)
    }

    pub fn date_at(&self, t: usize) -> NaiveDate {
        self.start_date + Duration::days(t as i64)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.daily.len()).map(|t| self.date_at(t))
    }

    /// Signed day offset of `date` relative to the start of the series.
    pub fn offset_of(&self, date: NaiveDate) -> i64 {
        (date - self.start_date).num_days()
    }

    pub fn total(&self) -> f64 {
        self.daily.iter().sum()
    }
}

/// Cumulative counts for one region (cases or deaths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    pub start_date: NaiveDate,
    pub cumulative: Vec<f64>,
}

/// Antibody-prevalence estimate of cumulative total infections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeroEstimate {
    pub collection_start: NaiveDate,
    pub collection_end: NaiveDate,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SeroEstimate {
    pub fn validate(&self) -> Result<()> {
        if !(self.ci_low <= self.point && self.point <= self.ci_high) {
            return Err(Error::InvalidSeries(format!(
                "serology interval [{}, {}] does not contain point {}",
                self.ci_low, self.ci_high, self.point
            )));
        }
        if self.collection_end < self.collection_start || self.point < 0.0 {
            return Err(Error::InvalidSeries(format!(
                "serology window {}..{} is malformed",
                self.collection_start, self.collection_end
            )));
        }
        Ok(())
    }
}

/// Survey-based fraction of the population reporting symptoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomaticSurvey {
    pub dates: Vec<NaiveDate>,
    pub rate: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Where the observed period ends, and how it divides into sub-periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSplit {
    pub observed_end: NaiveDate,
    /// First day of each sub-period after the first one.
    pub subperiod_boundaries: Vec<NaiveDate>,
}

impl PeriodSplit {
    pub fn new(observed_end: NaiveDate, subperiod_boundaries: Vec<NaiveDate>) -> Result<Self> {
        if subperiod_boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("sub-period boundaries must be strictly increasing".into()));
        }
        if subperiod_boundaries.iter().any(|d| *d > observed_end) {
            return Err(Error::InvalidConfig("sub-period boundary after the observed period".into()));
        }
        Ok(PeriodSplit {
            observed_end,
            subperiod_boundaries,
        })
    }

    /// Boundaries every `block` days from `start`, strictly inside the observed period.
    pub fn with_blocks(start: NaiveDate, observed_end: NaiveDate, block: usize) -> Self {
        let mut boundaries = Vec::new();
        let mut next = start + Duration::days(block as i64);
        while block > 0 && next <= observed_end {
            boundaries.push(next);
            next += Duration::days(block as i64);
        }
        PeriodSplit {
            observed_end,
            subperiod_boundaries: boundaries,
        }
    }

    /// Day offsets (relative to `start`) at which each later sub-period begins.
    pub fn boundary_offsets(&self, start: NaiveDate) -> Vec<usize> {
        self.subperiod_boundaries
            .iter()
            .map(|d| (*d - start).num_days())
            .filter(|d| *d > 0)
            .map(|d| d as usize)
            .collect()
    }
}

/// A problem found and repaired while ingesting a case-count file.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestWarning {
    NonMonotone { date: NaiveDate, column: &'static str, value: f64, clamped_to: f64 },
    GapFilled { from: NaiveDate, to: NaiveDate },
    DuplicateDate { date: NaiveDate },
}

/// Cases and deaths for one region as read from a case-count CSV.
#[derive(Debug, Clone)]
pub struct RegionData {
    pub region_id: String,
    pub cases: CumulativeSeries,
    pub deaths: CumulativeSeries,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Debug, Deserialize)]
struct CaseRow {
    date: NaiveDate,
    region: String,
    cases: f64,
    deaths: f64,
}

/// Reads a `date,region,cases,deaths` file and returns the cumulative series
/// for `region_id`, gap-filled and clamped to its running maximum.
pub fn load_cumulative_csv(path: impl AsRef<Path>, region_id: &str) -> Result<RegionData> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut rows: Vec<CaseRow> = Vec::new();
    for record in reader.deserialize::<CaseRow>() {
        let row = record.map_err(|e| csv_error(path, e))?;
        if row.region == region_id {
            if !(row.cases >= 0.0 && row.deaths >= 0.0) {
                return Err(Error::parse(path, format!("negative count on {}", row.date)));
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::NotFound(region_id.to_string()));
    }
    rows.sort_by_key(|r| r.date);

    let mut warnings = Vec::new();
    let start = rows[0].date;
    let mut cases: Vec<f64> = Vec::new();
    let mut deaths: Vec<f64> = Vec::new();
    let mut last_date = start - Duration::days(1);
    for row in rows {
        let gap = (row.date - last_date).num_days();
        if gap == 0 {
            warnings.push(IngestWarning::DuplicateDate { date: row.date });
            cases.pop();
            deaths.pop();
        } else if gap > 1 {
            warnings.push(IngestWarning::GapFilled {
                from: last_date + Duration::days(1),
                to: row.date - Duration::days(1),
            });
            let (c, d) = (*cases.last().unwrap_or(&0.0), *deaths.last().unwrap_or(&0.0));
            for _ in 1..gap {
                cases.push(c);
                deaths.push(d);
            }
        }
        push_clamped(&mut cases, row.cases, row.date, "cases", &mut warnings);
        push_clamped(&mut deaths, row.deaths, row.date, "deaths", &mut warnings);
        last_date = row.date;
    }
    for w in &warnings {
        log::warn!("{region_id}: {w:?}");
    }

    Ok(RegionData {
        region_id: region_id.to_string(),
        cases: CumulativeSeries {
            start_date: start,
            cumulative: cases,
        },
        deaths: CumulativeSeries {
            start_date: start,
            cumulative: deaths,
        },
        warnings,
    })
}

fn push_clamped(
    out: &mut Vec<f64>,
    value: f64,
    date: NaiveDate,
    column: &'static str,
    warnings: &mut Vec<IngestWarning>,
) {
    let running_max = out.last().copied().unwrap_or(0.0);
    if value < running_max {
        warnings.push(IngestWarning::NonMonotone {
            date,
            column,
            value,
            clamped_to: running_max,
        });
        out.push(running_max);
    } else {
        out.push(value);
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

/// Reads a `collection_start,collection_end,point,ci_low,ci_high` file.
pub fn load_serology_csv(path: impl AsRef<Path>) -> Result<Vec<SeroEstimate>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.deserialize::<SeroEstimate>() {
        let est = record.map_err(|e| csv_error(path, e))?;
        est.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        out.push(est);
    }
    Ok(out)
}

/// Reads a `date,rate,stderr` symptomatic-survey file.
pub fn load_survey_csv(path: impl AsRef<Path>) -> Result<SymptomaticSurvey> {
    #[derive(Deserialize)]
    struct Row {
        date: NaiveDate,
        rate: f64,
        stderr: f64,
    }
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut survey = SymptomaticSurvey {
        dates: Vec::new(),
        rate: Vec::new(),
        stderr: Vec::new(),
    };
    for record in reader.deserialize::<Row>() {
        let row = record.map_err(|e| csv_error(path, e))?;
        if !(0.0..=1.0).contains(&row.rate) || !(row.stderr >= 0.0) {
            return Err(Error::parse(path, format!("rate/stderr out of range on {}", row.date)));
        }
        if let Some(prev) = survey.dates.last() {
            if row.date != *prev + Duration::days(1) {
                return Err(Error::parse(path, format!("survey dates not consecutive at {}", row.date)));
            }
        }
        survey.dates.push(row.date);
        survey.rate.push(row.rate);
        survey.stderr.push(row.stderr);
    }
    Ok(survey)
}

/// First differences of a cumulative series; day 0 keeps its cumulative value.
pub fn to_daily(c: &CumulativeSeries, region_id: &str) -> ReportedSeries {
    let daily = c
        .cumulative
        .iter()
        .scan(0.0, |prev, &v| {
            let d = (v - *prev).max(0.0);
            *prev = v;
            Some(d)
        })
        .collect();
    ReportedSeries {
        start_date: c.start_date,
        daily,
        region_id: region_id.to_string(),
    }
}

/// Trailing mean over at most `window` days ending at each day.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    for t in 0..values.len() {
        let lo = (t + 1).saturating_sub(window);
        let slice = &values[lo..=t];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        out.push(mean.max(0.0));
    }
    out
}

/// 14-day trailing average; shorter windows at the start of the series.
pub fn smooth_14(s: &ReportedSeries) -> ReportedSeries {
    ReportedSeries {
        start_date: s.start_date,
        daily: trailing_mean(&s.daily, SMOOTHING_WINDOW),
        region_id: s.region_id.clone(),
    }
}

/// Splits `s` after `split.observed_end` (inclusive on the observed side).
pub fn split_observed_forecast(s: &ReportedSeries, split: &PeriodSplit) -> Result<(ReportedSeries, ReportedSeries)> {
    let offset = s.offset_of(split.observed_end);
    if offset < 0 || offset >= s.len() as i64 {
        return Err(Error::InvalidSplit {
            date: split.observed_end,
            start: s.start_date,
            end: s.end_date(),
        });
    }
    let cut = offset as usize + 1;
    let observed = ReportedSeries {
        start_date: s.start_date,
        daily: s.daily[..cut].to_vec(),
        region_id: s.region_id.clone(),
    };
    let forecast = ReportedSeries {
        start_date: s.date_at(cut),
        daily: s.daily[cut..].to_vec(),
        region_id: s.region_id.clone(),
    };
    Ok((observed, forecast))
}

/// Date at which a model's cumulative total infections are compared with `e`.
pub fn serology_comparison_date(e: &SeroEstimate) -> NaiveDate {
    e.collection_start - Duration::days(SEROLOGY_LAG_DAYS)
}
