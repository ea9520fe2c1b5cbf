//! Evaluation metrics and the machine-readable report.
//!
//! `rmse` is the square root of the summed squared error, with no division
//! by the series length. Ratios of two RMSEs over the same days are
//! unaffected; absolute values are larger by `sqrt(T)` than the averaged
//! convention.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::ModelOutputs;
use crate::timeseries::{serology_comparison_date, SeroEstimate};

pub const TIDY_CSV_HEADER: &str = "series,date,value";

pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::shape(estimate.len(), truth.len()));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        .sqrt())
}

/// Baseline error over MDL error; above 1 when the MDL estimate is closer.
pub fn rho(rmse_base: f64, rmse_mdl: f64) -> f64 {
    if rmse_mdl == 0.0 {
        if rmse_base == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        rmse_base / rmse_mdl
    }
}

/// Pearson correlation; `None` when either side is constant or lengths
/// differ.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerologyPoint {
    pub date: NaiveDate,
    pub model_cumulative_base: f64,
    pub model_cumulative_mdl: f64,
    pub sero_point: f64,
    pub ci: (f64, f64),
}

/// Cumulative total infections of `outputs` through `date` inclusive;
/// zero before `start`, `None` past the horizon.
fn cumulative_at(outputs: &ModelOutputs, start: NaiveDate, date: NaiveDate) -> Option<f64> {
    let offset = (date - start).num_days();
    if offset < 0 {
        return Some(0.0);
    }
    let offset = offset as usize;
    if offset >= outputs.horizon() {
        return None;
    }
    Some(outputs.daily_total[..=offset].iter().sum())
}

/// Pairs each serology estimate with both models' cumulative totals at the
/// lag-adjusted date. Estimates past the horizon are skipped. The result is
/// sorted by date.
pub fn compare_serology(
    outputs_base: &ModelOutputs,
    outputs_mdl: &ModelOutputs,
    start: NaiveDate,
    sero: &[SeroEstimate],
) -> Vec<SerologyPoint> {
    let mut points: Vec<SerologyPoint> = sero
        .iter()
        .filter_map(|e| {
            let date = serology_comparison_date(e);
            let base = cumulative_at(outputs_base, start, date);
            let mdl = cumulative_at(outputs_mdl, start, date);
            match (base, mdl) {
                (Some(base), Some(mdl)) => Some(SerologyPoint {
                    date,
                    model_cumulative_base: base,
                    model_cumulative_mdl: mdl,
                    sero_point: e.point,
                    ci: (e.ci_low, e.ci_high),
                }),
                _ => {
                    log::warn!("serology estimate at {date} is past the model horizon, skipped");
                    None
                }
            }
        })
        .collect();
    points.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then(a.sero_point.total_cmp(&b.sero_point))
            .then(a.ci.0.total_cmp(&b.ci.0))
            .then(a.ci.1.total_cmp(&b.ci.1))
    });
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomaticTrend {
    pub dates: Vec<NaiveDate>,
    pub survey: Vec<f64>,
    pub model_base: Vec<f64>,
    pub model_mdl: Vec<f64>,
    pub pearson_base: Option<f64>,
    pub pearson_mdl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse_base_reported: f64,
    pub rmse_mdl_reported: f64,
    #[serde(with = "inf_float")]
    pub rho_rinf_observed: f64,
    #[serde(with = "inf_float")]
    pub rho_rinf_forecast: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "inf_option")]
    pub rho_tinf: Option<f64>,
    pub serology_points: Vec<SerologyPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symptomatic_trend: Option<SymptomaticTrend>,
    /// Settings the numbers were produced with.
    #[serde(default)]
    pub config: BTreeMap<String, Value>,
}

/// JSON has no infinity; it is written as the string `"inf"`.
mod inf_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number, got `{t}`"))),
        }
    }
}

mod inf_option {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::inf_float::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        super::inf_float::deserialize(d).map(Some)
    }
}

/// Inputs of [`build_report`]: reported series over both periods, and
/// optionally the true totals and external validation data.
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    pub observed_reported: &'a [f64],
    pub forecast_reported: &'a [f64],
    pub base: &'a ModelOutputs,
    pub mdl: &'a ModelOutputs,
    pub start: NaiveDate,
    pub true_total: Option<&'a [f64]>,
    pub serology: &'a [SeroEstimate],
    pub survey: Option<(&'a [NaiveDate], &'a [f64])>,
    pub config: BTreeMap<String, Value>,
}

fn window(values: &[f64], from: usize, len: usize) -> Result<&[f64]> {
    values
        .get(from..from + len)
        .ok_or_else(|| Error::shape(values.len(), from + len))
}

pub fn build_report(inputs: &ReportInputs) -> Result<EvalReport> {
    let t_obs = inputs.observed_reported.len();
    let t_fc = inputs.forecast_reported.len();
    let base_obs = window(&inputs.base.daily_reported, 0, t_obs)?;
    let mdl_obs = window(&inputs.mdl.daily_reported, 0, t_obs)?;
    let base_fc = window(&inputs.base.daily_reported, t_obs, t_fc)?;
    let mdl_fc = window(&inputs.mdl.daily_reported, t_obs, t_fc)?;

    let rmse_base_reported = rmse(base_obs, inputs.observed_reported)?;
    let rmse_mdl_reported = rmse(mdl_obs, inputs.observed_reported)?;
    let rho_rinf_observed = rho(rmse_base_reported, rmse_mdl_reported);
    let rho_rinf_forecast = rho(rmse(base_fc, inputs.forecast_reported)?, rmse(mdl_fc, inputs.forecast_reported)?);

    let rho_tinf = match inputs.true_total {
        Some(truth) => {
            let base = window(&inputs.base.daily_total, 0, truth.len())?;
            let mdl = window(&inputs.mdl.daily_total, 0, truth.len())?;
            Some(rho(rmse(base, truth)?, rmse(mdl, truth)?))
        }
        None => None,
    };

    let symptomatic_trend = match (inputs.survey, &inputs.base.symptomatic_count, &inputs.mdl.symptomatic_count) {
        (Some((dates, rates)), Some(base), Some(mdl)) => {
            let mut kept = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (date, rate) in dates.iter().zip(rates) {
                let offset = (*date - inputs.start).num_days();
                if offset < 0 || offset as usize >= base.len().min(mdl.len()) {
                    continue;
                }
                let t = offset as usize;
                kept.0.push(*date);
                kept.1.push(*rate);
                kept.2.push(base[t] / inputs.base.population);
                kept.3.push(mdl[t] / inputs.mdl.population);
            }
            Some(SymptomaticTrend {
                pearson_base: pearson(&kept.1, &kept.2),
                pearson_mdl: pearson(&kept.1, &kept.3),
                dates: kept.0,
                survey: kept.1,
                model_base: kept.2,
                model_mdl: kept.3,
            })
        }
        _ => None,
    };

    Ok(EvalReport {
        rmse_base_reported,
        rmse_mdl_reported,
        rho_rinf_observed,
        rho_rinf_forecast,
        rho_tinf,
        serology_points: compare_serology(inputs.base, inputs.mdl, inputs.start, inputs.serology),
        symptomatic_trend,
        config: inputs.config.clone(),
    })
}

/// Pretty JSON with keys in sorted order.
pub fn report_to_json(report: &EvalReport) -> Result<String> {
    let value = serde_json::to_value(report).map_err(|e| Error::Serialization(e.to_string()))?;
    serde_json::to_string_pretty(&value).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn report_from_json(text: &str) -> Result<EvalReport> {
    serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
}

/// Writes named daily series as `series,date,value` rows.
pub fn write_tidy_csv<W: Write>(mut w: W, start: NaiveDate, series: &[(&str, &[f64])]) -> Result<()> {
    let mut out = String::from(TIDY_CSV_HEADER);
    out.push('\n');
    for (name, values) in series {
        for (t, v) in values.iter().enumerate() {
            let date = start + chrono::Days::new(t as u64);
            out.push_str(&format!("{name},{date},{v}\n"));
        }
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::Serialization(format!("tidy csv: {e}")))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn outputs(total: Vec<f64>) -> ModelOutputs {
        ModelOutputs {
            daily_reported: total.iter().map(|v| v / 4.0).collect(),
            daily_unreported: total.iter().map(|v| v * 0.75).collect(),
            daily_total: total,
            symptomatic_count: None,
            population: 1000.0,
        }
    }

    fn sero(start: &str, point: f64) -> SeroEstimate {
        SeroEstimate {
            collection_start: date(start),
            collection_end: date(start) + chrono::Days::new(5),
            point,
            ci_low: point * 0.8,
            ci_high: point * 1.2,
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(rmse(&[-2.5], &[1.0]).unwrap(), 3.5);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::ShapeError { .. })));
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(10.0, 5.0), 2.0);
        assert_eq!(rho(5.0, 5.0), 1.0);
        assert_eq!(rho(3.0, 0.0), f64::INFINITY);
        assert_eq!(rho(0.0, 0.0), 1.0);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn serology_uses_lagged_prefix_sums() {
        // 5-day toy trajectory: prefix sums 1, 3, 6, 10, 15
        let start = date("2020-04-01");
        let out = outputs(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let pts = compare_serology(&out, &out, start, &[sero("2020-04-10", 12.0)]);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].date, date("2020-04-03"));
        assert_eq!(pts[0].model_cumulative_base, 6.0);
        assert_eq!(pts[0].model_cumulative_mdl, 6.0);
        assert_eq!(pts[0].sero_point, 12.0);

        let early = compare_serology(&out, &out, start, &[sero("2020-04-02", 1.0)]);
        assert_eq!(early[0].model_cumulative_base, 0.0);
        let late = compare_serology(&out, &out, start, &[sero("2020-05-02", 1.0)]);
        assert!(late.is_empty());
    }

    #[test]
    fn report_round_trips_with_sorted_keys() {
        let start = date("2020-04-01");
        let base = outputs((0..20).map(|t| t as f64).collect());
        let mdl = outputs((0..20).map(|t| t as f64 * 1.1).collect());
        let observed: Vec<f64> = (0..12).map(|t| t as f64 * 1.1 / 4.0).collect();
        let forecast: Vec<f64> = (12..20).map(|t| t as f64 / 4.0).collect();
        let inputs = ReportInputs {
            observed_reported: &observed,
            forecast_reported: &forecast,
            base: &base,
            mdl: &mdl,
            start,
            true_total: None,
            serology: &[sero("2020-04-10", 20.0)],
            survey: None,
            config: BTreeMap::from([("seed".to_string(), Value::from(42))]),
        };
        let report = build_report(&inputs).unwrap();
        assert_eq!(report.rmse_mdl_reported, 0.0);
        assert_eq!(report.rho_rinf_observed, f64::INFINITY);
        let json = report_to_json(&report).unwrap();
        assert!(!json.contains("rho_tinf") && !json.contains("symptomatic_trend"));
        assert!(json.contains("\"inf\""));
        assert_eq!(report_from_json(&json).unwrap(), report);

        let keys: Vec<&str> = json
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn tidy_csv_layout() {
        let mut buf = Vec::new();
        write_tidy_csv(&mut buf, date("2020-04-01"), &[("a", &[1.0, 2.5]), ("b", &[3.0])]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "series,date,value\na,2020-04-01,1\na,2020-04-02,2.5\nb,2020-04-01,3\n"
        );
    }

    proptest! {
        #[test]
        fn rho_is_reciprocal(a in 1e-6f64..1e6, b in 1e-6f64..1e6) {
            prop_assert!((rho(a, b) * rho(b, a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rmse_detects_translation(y in proptest::collection::vec(-1e3f64..1e3, 1..50), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let expected = c.abs() * (y.len() as f64).sqrt();
            prop_assert!((rmse(&shifted, &y).unwrap() - expected).abs() <= 1e-9 * (1.0 + expected));
        }

        #[test]
        fn serology_is_order_independent(offsets in proptest::collection::vec(0u64..40, 1..8)) {
            let start = date("2020-04-01");
            let out = outputs((0..30).map(|t| (t * t) as f64).collect());
            let list: Vec<SeroEstimate> = offsets
                .iter()
                .map(|d| sero(&(start + chrono::Days::new(*d)).to_string(), *d as f64))
                .collect();
            let mut rev = list.clone();
            rev.reverse();
            prop_assert_eq!(compare_serology(&out, &out, start, &list), compare_serology(&out, &out, start, &rev));
        }
    }
}
