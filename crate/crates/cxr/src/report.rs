//! Result rows in the layout of the benchmark tables.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use cxr_core::metrics::{metrics, ConfusionMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with pneumonia as the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl From<ConfusionMatrix> for Confusion {
    fn from(c: ConfusionMatrix) -> Self {
        Self { tp: c.tp, fp: c.fp, fn_: c.fn_, tn: c.tn }
    }
}

impl From<Confusion> for ConfusionMatrix {
    fn from(c: Confusion) -> Self {
        Self { tp: c.tp, fp: c.fp, fn_: c.fn_, tn: c.tn }
    }
}

/// One evaluated model. Rates are fractions in `[0, 1]`; `None` marks an
/// undefined rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub model: String,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub train_time_s: f64,
    pub test_time_s: f64,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub param_count: Option<usize>,
    #[serde(default)]
    pub confusion: Option<Confusion>,
}

impl EvalReport {
    pub fn from_confusion(model: impl Into<String>, cm: ConfusionMatrix, train_time_s: f64, test_time_s: f64) -> Result<Self> {
        let m = metrics(&cm)?;
        Ok(Self {
            model: model.into(),
            accuracy: m.accuracy,
            precision: m.precision.value(),
            recall: m.recall.value(),
            train_time_s,
            test_time_s,
            epochs: None,
            param_count: None,
            confusion: Some(cm.into()),
        })
    }

    /// Checks value ranges and, when counts are stored, that the rates
    /// recompute bit-equal from them.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.accuracy) || !self.precision.is_none_or(unit) || !self.recall.is_none_or(unit) {
            return Err(Error::Schema(format!("{}: rates must lie in [0, 1]", self.model)));
        }
        if !(self.train_time_s >= 0.0 && self.test_time_s >= 0.0) {
            return Err(Error::Schema(format!("{}: times must be non-negative", self.model)));
        }
        if let Some(c) = self.confusion {
            let m = metrics(&c.into()).map_err(|e| Error::Schema(format!("{}: {}", self.model, e)))?;
            let same = |a: Option<f64>, b: Option<f64>| a.map(f64::to_bits) == b.map(f64::to_bits);
            if m.accuracy.to_bits() != self.accuracy.to_bits()
                || !same(m.precision.value(), self.precision)
                || !same(m.recall.value(), self.recall)
            {
                return Err(Error::Schema(format!("{}: rates disagree with the stored confusion counts", self.model)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(Error::Schema(format!("unknown report format {:?}, expected table, json or csv", s))),
        }
    }
}

/// A rate as a percentage with two decimals; exactly 1 renders as `1.0`.
pub fn format_rate(v: Option<f64>) -> String {
    match v {
        None => "n/a".into(),
        Some(1.0) => "1.0".into(),
        Some(v) => format!("{:.2}", v * 100.0),
    }
}

pub fn emit_report(reports: &[EvalReport], format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    let text = match format {
        ReportFormat::Table => render_table(reports),
        ReportFormat::Json => serde_json::to_string_pretty(reports)? + "\n",
        ReportFormat::Csv => render_csv(reports)?,
    };
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Rows `model & acc & precision & recall [& epochs] & train & test [& params] \\`.
pub fn render_table(reports: &[EvalReport]) -> String {
    let epochs = reports.iter().any(|r| r.epochs.is_some());
    let params = reports.iter().any(|r| r.param_count.is_some());
    let mut head = vec!["Model", "Acc%", "Precision", "Recall"];
    if epochs {
        head.push("Epochs");
    }
    head.extend(["Train Time(s)", "Test Time(s)"]);
    if params {
        head.push("Params");
    }
    let mut s = format!("{} \\\\\n", head.join(" & "));
    for r in reports {
        let mut cells = vec![r.model.clone(), format_rate(Some(r.accuracy)), format_rate(r.precision), format_rate(r.recall)];
        let opt = |v: Option<usize>| v.map_or_else(|| "n/a".to_string(), |v| v.to_string());
        if epochs {
            cells.push(opt(r.epochs));
        }
        cells.push(r.train_time_s.to_string());
        cells.push(r.test_time_s.to_string());
        if params {
            cells.push(opt(r.param_count));
        }
        let _ = writeln!(s, "{} \\\\", cells.join(" & "));
    }
    s
}

pub const CSV_HEADER: [&str; 12] =
    ["model", "accuracy", "precision", "recall", "train_time_s", "test_time_s", "epochs", "param_count", "tp", "fp", "fn", "tn"];

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn render_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        let c = r.confusion;
        w.write_record([
            r.model.clone(),
            r.accuracy.to_string(),
            cell(r.precision),
            cell(r.recall),
            r.train_time_s.to_string(),
            r.test_time_s.to_string(),
            cell(r.epochs),
            cell(r.param_count),
            cell(c.map(|c| c.tp)),
            cell(c.map(|c| c.fp)),
            cell(c.map(|c| c.fn_)),
            cell(c.map(|c| c.tn)),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Write(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

pub fn parse_csv(text: &str) -> Result<Vec<EvalReport>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::Schema(format!("report CSV header {:?}, expected {:?}", header, CSV_HEADER)));
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> &str { rec.get(i).unwrap_or("") };
        fn num<T: FromStr>(s: &str, name: &str, row: usize) -> Result<T> {
            s.parse().map_err(|_| Error::Schema(format!("row {}: {} {:?} is not a number", row + 1, name, s)))
        }
        let opt = |i: usize| -> Option<&str> { Some(field(i)).filter(|s| !s.is_empty()) };
        let counts: Vec<Option<u64>> =
            (8..12).map(|i| opt(i).map(|s| num(s, CSV_HEADER[i], row)).transpose()).collect::<Result<_>>()?;
        let confusion = match counts[..] {
            [Some(tp), Some(fp), Some(fn_), Some(tn)] => Some(Confusion { tp, fp, fn_, tn }),
            [None, None, None, None] => None,
            _ => return Err(Error::Schema(format!("row {}: confusion counts must be all present or all empty", row + 1))),
        };
        let report = EvalReport {
            model: field(0).to_string(),
            accuracy: num(field(1), "accuracy", row)?,
            precision: opt(2).map(|s| num(s, "precision", row)).transpose()?,
            recall: opt(3).map(|s| num(s, "recall", row)).transpose()?,
            train_time_s: num(field(4), "train_time_s", row)?,
            test_time_s: num(field(5), "test_time_s", row)?,
            epochs: opt(6).map(|s| num(s, "epochs", row)).transpose()?,
            param_count: opt(7).map(|s| num(s, "param_count", row)).transpose()?,
            confusion,
        };
        report.validate()?;
        out.push(report);
    }
    Ok(out)
}

/// Parses a JSON report: a single object or an array of them.
pub fn parse_json(text: &str) -> Result<Vec<EvalReport>> {
    let schema = |e: serde_json::Error| Error::Schema(format!("report JSON: {}", e));
    let value: serde_json::Value = serde_json::from_str(text).map_err(schema)?;
    let reports: Vec<EvalReport> = if value.is_array() {
        serde_json::from_value(value).map_err(schema)?
    } else {
        vec![serde_json::from_value(value).map_err(schema)?]
    };
    for r in &reports {
        r.validate()?;
    }
    Ok(reports)
}
