use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::error::HarnessError;
use super::experiment::{CalibrationRow, ExperimentReport, Timing};
use crate::analysis::CheckRow;
use crate::numfmt::g6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
    Text,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
            Format::Text => "txt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Float(f64),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => g6(*v),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => s.clone().into(),
            Cell::Int(v) => (*v).into(),
            Cell::Float(v) if v.is_finite() => {
                let rounded: f64 = g6(*v).parse().expect("g6 output parses");
                serde_json::Number::from_f64(rounded).map_or(serde_json::Value::Null, Into::into)
            }
            Cell::Float(_) | Cell::Missing => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A named table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns).expect("in-memory write");
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
            }
            Format::JsonLines => {
                let mut out = String::new();
                for row in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> =
                        self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    out.push_str(&serde_json::Value::Object(obj).to_string());
                    out.push('\n');
                }
                out
            }
            Format::Text => {
                let cells: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| r.iter().map(|c| if *c == Cell::Missing { "-".into() } else { c.render() }).collect())
                    .collect();
                let width: Vec<usize> = (0..self.columns.len())
                    .map(|j| cells.iter().map(|r| r[j].len()).chain([self.columns[j].len()]).max().unwrap_or(0))
                    .collect();
                let mut out = String::new();
                let line = |out: &mut String, vals: &mut dyn Iterator<Item = &str>| {
                    let parts: Vec<String> = vals.zip(&width).map(|(v, w)| format!("{v:<w$}")).collect();
                    let _ = writeln!(out, "{}", parts.join("  ").trim_end());
                };
                line(&mut out, &mut self.columns.iter().copied());
                let _ = writeln!(out, "{}", width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
                for r in &cells {
                    line(&mut out, &mut r.iter().map(String::as_str));
                }
                out
            }
        }
    }
}

pub fn summary_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new("summary", &["key", "value"]);
    let widths = r.model.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-");
    let rows: Vec<(&str, Cell)> = vec![
        ("name", r.name.as_str().into()),
        ("seed", r.seed.into()),
        ("dataset", r.dataset.as_str().into()),
        ("n_train", r.n_train.into()),
        ("n_test", r.n_test.into()),
        ("num_classes", r.num_classes.into()),
        ("model_widths", widths.into()),
        ("model_params", r.model.params.into()),
        ("or_sigma", r.model.or_sigma.into()),
        ("adv_train", r.model.adv_train.into()),
        ("clean_accuracy", r.clean_accuracy.into()),
        ("eval_images", r.eval_images.len().into()),
        ("errors", r.errors.len().into()),
    ];
    for (k, v) in rows {
        t.push(vec![k.into(), v]);
    }
    t
}

pub const ATTACK_COLUMNS: &[&str] = &[
    "attack",
    "family",
    "sigma2",
    "averaging",
    "runs",
    "successes",
    "success_rate",
    "observed_success_rate",
    "mean_l2",
    "mean_linf",
    "mean_queries",
    "max_queries",
    "query_limit",
    "errors",
];

pub fn attack_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new("attacks", ATTACK_COLUMNS);
    for a in &r.attacks {
        t.push(vec![
            a.attack.as_str().into(),
            a.family.name().into(),
            a.sigma2.into(),
            a.averaging.into(),
            a.runs.into(),
            a.successes.into(),
            a.success_rate.into(),
            a.observed_success_rate.into(),
            a.mean_l2.into(),
            a.mean_linf.into(),
            a.mean_queries.into(),
            a.max_queries.into(),
            a.query_limit.into(),
            a.errors.into(),
        ]);
    }
    t
}

pub fn accuracy_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new("accuracy", &["sigma2", "accuracy"]);
    t.push(vec![Cell::Missing, r.clean_accuracy.into()]);
    for a in &r.defended_accuracy {
        t.push(vec![a.sigma2.into(), a.accuracy.into()]);
    }
    t
}

pub fn calibration_rows_table(rows: &[CalibrationRow]) -> Table {
    let mut t = Table::new(
        "calibration",
        &[
            "delta",
            "k",
            "literal",
            "corrected",
            "mc",
            "check_flip_rate",
            "check_std_error",
            "literal_rel_dev",
            "mc_steps",
        ],
    );
    for c in rows {
        t.push(vec![
            c.delta.into(),
            c.k.into(),
            c.literal.into(),
            c.corrected.into(),
            c.mc.into(),
            c.check_flip_rate.into(),
            c.check_std_error.into(),
            c.literal_rel_dev.into(),
            c.mc_steps.into(),
        ]);
    }
    t
}

pub fn verify_table(rows: &[CheckRow]) -> Table {
    let mut t = Table::new("verify", &["name", "analytic", "empirical", "gap", "status"]);
    for r in rows {
        t.push(vec![
            r.name.as_str().into(),
            r.analytic.into(),
            r.empirical.into(),
            r.gap.into(),
            r.status.as_str().into(),
        ]);
    }
    t
}

fn optional_tables(r: &ExperimentReport) -> Vec<Table> {
    let mut out = Vec::new();
    if !r.calibration.is_empty() {
        out.push(calibration_rows_table(&r.calibration));
    }
    if !r.or_tuning.is_empty() {
        let mut t = Table::new("or_tuning", &["sigma", "val_accuracy", "val_robust_accuracy", "selected"]);
        for o in &r.or_tuning {
            t.push(vec![o.sigma.into(), o.val_accuracy.into(), o.val_robust_accuracy.into(), o.selected.into()]);
        }
        out.push(t);
    }
    if let Some(tr) = &r.transfer {
        let mut t = Table::new(
            "transfer",
            &[
                "substitute_or_sigma",
                "n_images",
                "substitute_success_rate",
                "transfer_success_rate",
                "direct_success_rate",
            ],
        );
        t.push(vec![
            tr.substitute_or_sigma.into(),
            tr.n_images.into(),
            tr.substitute_success_rate.into(),
            tr.transfer_success_rate.into(),
            tr.direct_success_rate.into(),
        ]);
        out.push(t);
    }
    out
}

/// Success rate against defense variance, one row per σ² per black-box
/// attack, with the defended accuracy at that σ².
pub fn success_curve_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new("success_vs_sigma2", &["attack", "sigma2", "success_rate", "defended_accuracy"]);
    for a in r.attacks.iter().filter(|a| a.sigma2.is_some()) {
        let s = a.sigma2.expect("filtered");
        let acc = r.defended_accuracy.iter().find(|d| d.sigma2 == s).map(|d| d.accuracy);
        t.push(vec![a.attack.as_str().into(), s.into(), a.success_rate.into(), acc.into()]);
    }
    t
}

pub fn trace_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new("loss_traces", &["attack", "sigma2", "iteration", "mean_loss", "runs"]);
    for tr in &r.traces {
        t.push(vec![
            tr.attack.as_str().into(),
            tr.sigma2.into(),
            tr.iteration.into(),
            tr.mean_loss.into(),
            tr.runs.into(),
        ]);
    }
    t
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes tables in `format` to `dir`, one file per table.
pub fn write_tables(dir: &Path, tables: &[Table], format: Format) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    tables.iter().map(|t| write(dir.join(format!("{}.{}", t.name, format.extension())), &t.render(format))).collect()
}

/// Writes `report.json`, the tables in `format`, and CSV series under
/// `plotdata/`. Everything written here depends only on the report, so
/// equal reports give byte-identical files.
pub fn emit_report(report: &ExperimentReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let mut files = vec![write(dir.join("report.json"), &(json + "\n"))?];
    let mut tables = vec![summary_table(report), accuracy_table(report), attack_table(report)];
    tables.extend(optional_tables(report));
    files.extend(write_tables(dir, &tables, format)?);
    files.extend(write_tables(
        &dir.join("plotdata"),
        &[success_curve_table(report), trace_table(report)],
        Format::Csv,
    )?);
    Ok(files)
}

/// Wall-clock data goes to its own file so report files stay reproducible.
pub fn write_timing(timing: &Timing, dir: &Path) -> Result<PathBuf, HarnessError> {
    create_dir(dir)?;
    write(dir.join("timing.json"), &(serde_json::to_string_pretty(timing).expect("timing serializes") + "\n"))
}

pub fn load_report(path: &Path) -> Result<ExperimentReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
