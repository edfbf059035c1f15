//! Report files. Columns: the grouping keys, `n_triplets`, `sampling`, then
//! for every metric in alphabetical order `<metric>`, `<metric>_se` and
//! `<metric>_excluded`. CSV prints floats with 6 significant digits; JSON
//! holds the same fields with exact values.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{MetricReport, MetricSummary, ReportKeys, SamplingMode, TripletResult};
use crate::datasets::Triplet;
use crate::error::{Error, IoError, Result};
use crate::interp::InterpolationKind;
use crate::metrics::Metric;

pub const REPORT_KEY_COLUMNS: [&str; 4] = ["algorithm", "setting", "variant", "budget"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// `%.6g`-style formatting.
pub(crate) fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let out = trim(format!("{:.*}", (5 - exp).max(0) as usize, v));
        // Rounding can carry into a new digit (999999.5 -> 1000000); fall back to exponent form.
        if out.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() <= 6 {
            return out;
        }
    }
    let s = format!("{v:.5e}");
    let (mant, e) = s.split_once('e').expect("exponent form");
    format!("{}e{}", trim(mant.to_owned()), e)
}

fn metric_columns(metrics: &BTreeSet<&'static str>) -> Vec<String> {
    metrics
        .iter()
        .flat_map(|m| [m.to_string(), format!("{m}_se"), format!("{m}_excluded")])
        .collect()
}

fn report_metrics(reports: &[MetricReport]) -> BTreeSet<&'static str> {
    reports.iter().flat_map(|r| r.metrics.iter().map(|s| s.metric.name())).collect()
}

fn columns(reports: &[MetricReport]) -> Vec<String> {
    REPORT_KEY_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(["n_triplets".to_owned(), "sampling".to_owned()])
        .chain(metric_columns(&report_metrics(reports)))
        .collect()
}

fn key_value(k: &ReportKeys, col: &str) -> String {
    match col {
        "algorithm" => k.algorithm.clone(),
        "setting" => k.setting.clone(),
        "variant" => k.variant.clone(),
        _ => k.budget.clone(),
    }
}

/// Writes `reports` in `format`. Nothing is written for an empty list.
pub fn export_report(reports: &[MetricReport], path: &Path, format: ReportFormat) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Data("no reports to export".into()));
    }
    let metrics = report_metrics(reports);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(columns(reports))?;
            for r in reports {
                let mut row: Vec<String> = REPORT_KEY_COLUMNS.iter().map(|c| key_value(&r.keys, c)).collect();
                row.push(r.n_triplets.to_string());
                row.push(r.sampling.as_str().to_owned());
                for m in &metrics {
                    match r.metrics.iter().find(|s| s.metric.name() == *m) {
                        Some(s) => row.extend([sig6(s.mean), sig6(s.se), s.excluded.to_string()]),
                        None => row.extend([String::new(), String::new(), String::new()]),
                    }
                }
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let num = |v: f64| serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null);
            let rows: Vec<Value> = reports
                .iter()
                .map(|r| {
                    let mut o = Map::new();
                    for c in REPORT_KEY_COLUMNS {
                        o.insert(c.into(), Value::String(key_value(&r.keys, c)));
                    }
                    o.insert("n_triplets".into(), r.n_triplets.into());
                    o.insert("sampling".into(), r.sampling.as_str().into());
                    for m in &metrics {
                        let s = r.metrics.iter().find(|s| s.metric.name() == *m);
                        o.insert(m.to_string(), s.map_or(Value::Null, |s| num(s.mean)));
                        o.insert(format!("{m}_se"), s.map_or(Value::Null, |s| num(s.se)));
                        o.insert(format!("{m}_excluded"), s.map_or(Value::Null, |s| s.excluded.into()));
                    }
                    Value::Object(o)
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&rows)?;
            text.push('\n');
            std::fs::write(path, text)?;
        }
    }
    Ok(())
}

fn malformed(reason: String) -> Error {
    IoError::Malformed { offset: 0, reason }.into()
}

fn parse_sampling(s: &str) -> Result<SamplingMode> {
    match s {
        "without_replacement" => Ok(SamplingMode::WithoutReplacement),
        "mixed" => Ok(SamplingMode::Mixed),
        _ => Err(malformed(format!("unknown sampling mode {s:?}"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| malformed(format!("not a number: {s:?}"))),
    }
}

fn build(keys: ReportKeys, n_triplets: usize, sampling: SamplingMode, mut metrics: Vec<MetricSummary>) -> MetricReport {
    metrics.sort_by_key(|s| s.metric.name());
    MetricReport {
        keys,
        n_triplets,
        sampling,
        metrics,
    }
}

pub fn load_report(path: &Path, format: ReportFormat) -> Result<Vec<MetricReport>> {
    let metric_of = |col: &str| Metric::from_name(col);
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            let header = r.headers()?.clone();
            let mut out = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let field = |name: &str| -> Result<&str> {
                    header
                        .iter()
                        .position(|h| h == name)
                        .and_then(|i| rec.get(i))
                        .ok_or_else(|| malformed(format!("missing column {name}")))
                };
                let keys = ReportKeys {
                    algorithm: field("algorithm")?.into(),
                    setting: field("setting")?.into(),
                    variant: field("variant")?.into(),
                    budget: field("budget")?.into(),
                };
                let n_triplets: usize = field("n_triplets")?.parse().map_err(|_| malformed("bad n_triplets".into()))?;
                let mut metrics = Vec::new();
                for col in header.iter() {
                    let Some(m) = metric_of(col) else { continue };
                    let mean = field(col)?;
                    if mean.is_empty() {
                        continue;
                    }
                    let excluded: usize =
                        field(&format!("{col}_excluded"))?.parse().map_err(|_| malformed(format!("bad {col}_excluded")))?;
                    metrics.push(MetricSummary {
                        metric: m,
                        mean: parse_f64(mean)?,
                        se: parse_f64(field(&format!("{col}_se"))?)?,
                        n: n_triplets - excluded,
                        excluded,
                    });
                }
                out.push(build(keys, n_triplets, parse_sampling(field("sampling")?)?, metrics));
            }
            Ok(out)
        }
        ReportFormat::Json => {
            let rows: Vec<Map<String, Value>> = serde_json::from_slice(&std::fs::read(path)?)?;
            rows.into_iter()
                .map(|o| {
                    let s = |k: &str| {
                        o.get(k)
                            .and_then(Value::as_str)
                            .map(str::to_owned)
                            .ok_or_else(|| malformed(format!("missing field {k}")))
                    };
                    let u = |k: &str| {
                        o.get(k)
                            .and_then(Value::as_u64)
                            .map(|v| v as usize)
                            .ok_or_else(|| malformed(format!("missing field {k}")))
                    };
                    let f = |k: &str| o.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN);
                    let keys = ReportKeys {
                        algorithm: s("algorithm")?,
                        setting: s("setting")?,
                        variant: s("variant")?,
                        budget: s("budget")?,
                    };
                    let n_triplets = u("n_triplets")?;
                    let mut metrics = Vec::new();
                    for (k, _) in o.iter().filter(|(_, v)| !v.is_null()) {
                        let Some(m) = metric_of(k) else { continue };
                        let excluded = u(&format!("{k}_excluded"))?;
                        metrics.push(MetricSummary {
                            metric: m,
                            mean: f(k),
                            se: f(&format!("{k}_se")),
                            n: n_triplets - excluded,
                            excluded,
                        });
                    }
                    Ok(build(keys, n_triplets, parse_sampling(&s("sampling")?)?, metrics))
                })
                .collect()
        }
    }
}

const RAW_FIXED: [&str; 9] = ["id", "sequence", "i1", "i2", "i3", "t1", "t2", "t3", "algorithm"];

/// Per-triplet values with full precision (shortest round-trip form).
pub fn write_raw_csv(results: &[TripletResult], path: &Path) -> Result<()> {
    let metrics: BTreeSet<&'static str> = results.iter().flat_map(|r| r.values.iter().map(|(m, _)| m.name())).collect();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RAW_FIXED.iter().map(|s| s.to_string()).chain(metrics.iter().map(|s| s.to_string())))?;
    for r in results {
        let mut row = vec![
            r.id.to_string(),
            r.triplet.sequence.to_string(),
            r.triplet.idx[0].to_string(),
            r.triplet.idx[1].to_string(),
            r.triplet.idx[2].to_string(),
        ];
        row.extend(r.t.iter().map(|v| v.to_string()));
        row.push(r.algorithm.as_str().to_owned());
        for m in &metrics {
            row.push(r.values.iter().find(|(k, _)| k.name() == *m).map(|(_, v)| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_raw_csv(path: &Path) -> Result<Vec<TripletResult>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let at = |i: usize| rec.get(i).ok_or_else(|| malformed("short raw row".into()));
        let int = |i: usize| -> Result<usize> { at(i)?.parse().map_err(|_| malformed("bad integer".into())) };
        let values = header
            .iter()
            .enumerate()
            .skip(RAW_FIXED.len())
            .filter(|(i, _)| !rec.get(*i).unwrap_or("").is_empty())
            .map(|(i, h)| {
                let m = Metric::from_name(h).ok_or_else(|| malformed(format!("unknown metric {h}")))?;
                Ok((m, parse_f64(at(i)?)?))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(TripletResult {
            id: int(0)?,
            triplet: Triplet {
                sequence: int(1)?,
                idx: [int(2)?, int(3)?, int(4)?],
            },
            t: [parse_f64(at(5)?)?, parse_f64(at(6)?)?, parse_f64(at(7)?)?],
            algorithm: InterpolationKind::from_str(at(8)?).map_err(|e| malformed(e.to_string()))?,
            values,
        });
    }
    Ok(out)
}
