use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::ExclusionReport;
use crate::estimators::{Diagnostic, EstimateReport, Method, QuestionEstimates};
use crate::placebo::{FisherSummary, PlaceboReport, PlaceboTest};
use crate::simulation::PowerCell;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

/// Estimates for one question together with its exclusion accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnalysis {
    #[serde(flatten)]
    pub estimates: QuestionEstimates,
    pub exclusions: ExclusionReport,
}

/// One placebo test for one question. Exactly one of `report` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRow {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    pub test: PlaceboTest,
    pub report: Option<PlaceboReport>,
    pub error: Option<String>,
}

/// Study difference for one question and method. Exactly one of `report` and
/// `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub question: String,
    pub method: Method,
    pub report: Option<PlaceboReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    /// A single estimate, rendered in JSON as a flat object.
    Estimate(&'a EstimateReport),
    Estimates(&'a [QuestionAnalysis]),
    Placebo {
        rows: &'a [PlaceboRow],
        fisher: &'a [(PlaceboTest, FisherSummary)],
    },
    Comparison {
        study_a: &'a str,
        study_b: &'a str,
        rows: &'a [ComparisonRow],
    },
    Power(&'a [PowerCell]),
    /// Arbitrary JSON payload tagged with `kind`; text and CSV show it as
    /// `key,value` lines.
    Summary { kind: &'a str, fields: &'a [(String, Value)] },
}

pub fn render_report(report: &Report<'_>, format: Format) -> Vec<u8> {
    let s = match format {
        Format::Text => text(report),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&json_value(report)).expect("reports are always serializable");
            s.push('\n');
            s
        }
        Format::Csv => csv(report),
    };
    s.into_bytes()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports are always serializable")
}

fn json_value(report: &Report<'_>) -> Value {
    match *report {
        Report::Estimate(r) => {
            let mut v = to_value(r);
            v["schema_version"] = json!(SCHEMA_VERSION);
            v
        }
        Report::Estimates(rows) => json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "estimates",
            "questions": to_value(&rows),
        }),
        Report::Placebo { rows, fisher } => {
            let fisher: Vec<Value> = fisher
                .iter()
                .map(|(test, s)| {
                    let mut v = to_value(s);
                    v["test"] = to_value(test);
                    v
                })
                .collect();
            json!({
                "schema_version": SCHEMA_VERSION,
                "kind": "placebo",
                "tests": to_value(&rows),
                "fisher": fisher,
            })
        }
        Report::Comparison { study_a, study_b, rows } => json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "study_comparison",
            "study_a": study_a,
            "study_b": study_b,
            "differences": to_value(&rows),
        }),
        Report::Power(cells) => json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "power",
            "cells": to_value(&cells),
        }),
        Report::Summary { kind, fields } => {
            let mut v = json!({ "schema_version": SCHEMA_VERSION, "kind": kind });
            for (k, x) in fields {
                v[k] = x.clone();
            }
            v
        }
    }
}

fn diag_str(d: Diagnostic) -> String {
    to_value(&d).as_str().unwrap_or_default().to_string()
}

fn diag_list(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| diag_str(*d)).collect::<Vec<_>>().join(";")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn csv(report: &Report<'_>) -> String {
    let mut w = csv_writer();
    let mut row = |fields: &[String]| w.write_record(fields).expect("in-memory writer");
    let s = |x: &str| x.to_string();
    match *report {
        Report::Estimate(r) => {
            row(&ESTIMATE_HEADER.map(s));
            row(&estimate_fields(r));
        }
        Report::Estimates(rows) => {
            row(&ESTIMATE_HEADER.map(s));
            for q in rows {
                let e = &q.estimates;
                for r in [&e.direct, &e.standard, &e.combined].into_iter().flatten() {
                    row(&estimate_fields(r));
                }
                if let Some(red) = e.variance_reduction {
                    let mut fields = vec![String::new(); ESTIMATE_HEADER.len()];
                    fields[0] = e.question.clone();
                    fields[1] = e.study.clone().unwrap_or_default();
                    fields[2] = s("variance_reduction");
                    fields[3] = red.to_string();
                    fields[8] = e.n.to_string();
                    row(&fields);
                }
            }
        }
        Report::Placebo { rows, fisher } => {
            row(&PLACEBO_HEADER.map(s));
            for r in rows {
                let mut f = vec![r.question.clone(), r.study.clone().unwrap_or_default(), s(r.test.as_str())];
                match &r.report {
                    Some(p) => f.extend(placebo_fields(p)),
                    None => f.extend(vec![String::new(); 8]),
                }
                f.push(r.error.clone().unwrap_or_default());
                row(&f);
            }
            for (test, summary) in fisher {
                if let Some(c) = &summary.combined {
                    let mut f = vec![String::new(); PLACEBO_HEADER.len()];
                    f[0] = s("fisher");
                    f[2] = s(test.as_str());
                    f[3] = c.statistic.to_string();
                    f[6] = c.p_value.get().to_string();
                    f[10] = format!("df={}", c.df);
                    row(&f);
                }
            }
        }
        Report::Comparison { study_a, study_b, rows } => {
            row(&["question", "method", "study_a", "study_b", "difference", "std_error", "p_value", "error"].map(s));
            for r in rows {
                let (d, se, p) = match &r.report {
                    Some(p) => (p.statistic.to_string(), p.std_error.to_string(), p.p_value.get().to_string()),
                    None => Default::default(),
                };
                row(&[
                    r.question.clone(),
                    s(r.method.as_str()),
                    s(study_a),
                    s(study_b),
                    d,
                    se,
                    p,
                    r.error.clone().unwrap_or_default(),
                ]);
            }
        }
        Report::Power(cells) => {
            row(&["n_yes", "violation_type", "share_or_wsuccess", "replicates", "power", "seed"].map(s));
            for c in cells {
                row(&[
                    c.n_yes.to_string(),
                    c.violation_type.clone(),
                    c.share_or_wsuccess.to_string(),
                    c.replicates.to_string(),
                    c.power.get().to_string(),
                    c.seed.to_string(),
                ]);
            }
        }
        Report::Summary { fields, .. } => {
            row(&["key", "value"].map(s));
            for (k, v) in fields {
                row(&[k.clone(), plain(v)]);
            }
        }
    }
    finish(w)
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

const ESTIMATE_HEADER: [&str; 10] = [
    "question",
    "study",
    "method",
    "estimate",
    "std_error",
    "ci_low",
    "ci_high",
    "alpha",
    "n_used",
    "diagnostics",
];

fn estimate_fields(r: &EstimateReport) -> Vec<String> {
    vec![
        r.question.clone().unwrap_or_default(),
        r.study.clone().unwrap_or_default(),
        r.method.as_str().to_string(),
        r.estimate.to_string(),
        r.std_error.to_string(),
        r.ci_low.to_string(),
        r.ci_high.to_string(),
        r.alpha.to_string(),
        r.n_used.to_string(),
        diag_list(&r.diagnostics),
    ]
}

const PLACEBO_HEADER: [&str; 12] = [
    "question",
    "study",
    "test",
    "statistic",
    "std_error",
    "null_value",
    "p_value",
    "n_used",
    "n_treated_or_a",
    "n_control_or_b",
    "diagnostics",
    "error",
];

fn placebo_fields(p: &PlaceboReport) -> Vec<String> {
    vec![
        p.statistic.to_string(),
        p.std_error.to_string(),
        p.null_value.to_string(),
        p.p_value.get().to_string(),
        p.n_used.to_string(),
        p.group_sizes[0].to_string(),
        p.group_sizes[1].to_string(),
        diag_list(&p.diagnostics),
    ]
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

/// Left-aligned first column, right-aligned rest, widths fitted to content.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    let rule: usize = widths.iter().sum::<usize>() + 2 * (cols - 1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn est_cell(r: &Option<EstimateReport>) -> String {
    match r {
        Some(r) => format!("{} ({})", f3(r.estimate), f3(r.std_error)),
        None => "NA".into(),
    }
}

fn row_label(question: &str, study: Option<&str>) -> String {
    match study {
        Some(s) => format!("{question} [{s}]"),
        None => question.to_string(),
    }
}

fn text(report: &Report<'_>) -> String {
    let h = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match *report {
        Report::Estimate(r) => {
            let mut s = String::new();
            let _ = writeln!(s, "{}: {} (SE {})", r.method.label(), f3(r.estimate), f3(r.std_error));
            let _ = writeln!(
                s,
                "{:.0}% CI: [{}, {}]  n = {}",
                100.0 * (1.0 - r.alpha),
                f3(r.ci_low),
                f3(r.ci_high),
                r.n_used
            );
            if !r.diagnostics.is_empty() {
                let _ = writeln!(s, "diagnostics: {}", diag_list(&r.diagnostics));
            }
            s
        }
        Report::Estimates(rows) => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|q| {
                    let e = &q.estimates;
                    vec![
                        row_label(&e.question, e.study.as_deref()),
                        e.n.to_string(),
                        est_cell(&e.direct),
                        est_cell(&e.standard),
                        est_cell(&e.combined),
                        e.variance_reduction.map_or("NA".into(), |r| format!("{:.1}", 100.0 * r)),
                    ]
                })
                .collect();
            let mut s = table(
                &h(&["Question", "n", "Direct", "Standard List", "Combined List", "% Reduction"]),
                &body,
            );
            s.push_str("Cells show estimate (standard error). % Reduction is in sampling variance.\n");
            for q in rows {
                let e = &q.estimates;
                let x = &q.exclusions;
                if x.excluded_total() > 0 {
                    let reasons: Vec<String> =
                        x.excluded.iter().map(|(k, v)| format!("{} {v}", k.describe())).collect();
                    let _ = writeln!(
                        s,
                        "{}: {} of {} rows excluded ({})",
                        row_label(&e.question, e.study.as_deref()),
                        x.excluded_total(),
                        x.total,
                        reasons.join(", ")
                    );
                }
                for err in &e.errors {
                    let _ = writeln!(s, "{}: {err}", row_label(&e.question, e.study.as_deref()));
                }
                let diags: Vec<String> = [&e.direct, &e.standard, &e.combined]
                    .into_iter()
                    .flatten()
                    .filter(|r| !r.diagnostics.is_empty())
                    .map(|r| format!("{} {}", r.method.as_str(), diag_list(&r.diagnostics)))
                    .collect();
                if !diags.is_empty() {
                    let _ = writeln!(s, "{}: diagnostics {}", row_label(&e.question, e.study.as_deref()), diags.join(", "));
                }
            }
            s
        }
        Report::Placebo { rows, fisher } => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let label = row_label(&r.question, r.study.as_deref());
                    match &r.report {
                        Some(p) => vec![
                            label,
                            r.test.label().into(),
                            f3(p.statistic),
                            f3(p.std_error),
                            f3(p.p_value.get()),
                            p.n_used.to_string(),
                        ],
                        None => vec![
                            label,
                            r.test.label().into(),
                            "NA".into(),
                            "NA".into(),
                            "NA".into(),
                            "NA".into(),
                        ],
                    }
                })
                .collect();
            let mut s = table(&h(&["Question", "Test", "Estimate", "SE", "p", "n"]), &body);
            s.push_str("Test I estimates beta (null 1); Test II estimates delta (null 0).\n");
            for r in rows {
                if let Some(e) = &r.error {
                    let _ = writeln!(s, "{} {}: {e}", row_label(&r.question, r.study.as_deref()), r.test.label());
                }
            }
            for (test, f) in fisher {
                match &f.combined {
                    Some(c) => {
                        let _ = writeln!(
                            s,
                            "Fisher combination, {}: chi-square {} on {} df, p = {}",
                            test.label(),
                            f3(c.statistic),
                            c.df,
                            f3(c.p_value.get())
                        );
                    }
                    None => {
                        let _ = writeln!(s, "Fisher combination, {}: no usable questions", test.label());
                    }
                }
                if !f.dropped.is_empty() {
                    let _ = writeln!(s, "  dropped: {}", f.dropped.join(", "));
                }
            }
            s
        }
        Report::Comparison { study_a, study_b, rows } => {
            let mut questions: Vec<&str> = Vec::new();
            for r in rows {
                if !questions.contains(&r.question.as_str()) {
                    questions.push(&r.question);
                }
            }
            let body: Vec<Vec<String>> = questions
                .iter()
                .map(|q| {
                    let mut line = vec![q.to_string()];
                    for m in Method::ALL {
                        let cell = rows
                            .iter()
                            .find(|r| r.question == *q && r.method == m)
                            .and_then(|r| r.report.as_ref())
                            .map_or("NA".into(), |p| format!("{} ({})", f3(p.statistic), f3(p.std_error)));
                        line.push(cell);
                    }
                    line
                })
                .collect();
            let mut s = format!("Differences {study_a} - {study_b}: difference (standard error)\n");
            s.push_str(&table(&h(&["Question", "Direct", "Standard List", "Combined List"]), &body));
            for r in rows {
                if let Some(e) = &r.error {
                    let _ = writeln!(s, "{} {}: {e}", r.question, r.method.label());
                }
            }
            s
        }
        Report::Power(cells) => {
            let body: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    vec![
                        c.n_yes.to_string(),
                        c.violation_type.clone(),
                        format!("{:.3}", c.share_or_wsuccess),
                        c.replicates.to_string(),
                        f3(c.power.get()),
                    ]
                })
                .collect();
            let mut s = table(&h(&["N_Yes", "Violation", "Share/w", "Replicates", "Power"]), &body);
            if let Some(c) = cells.first() {
                let _ = writeln!(s, "seed {}", c.seed);
            }
            s
        }
        Report::Summary { fields, .. } => {
            let mut s = String::new();
            for (k, v) in fields {
                let shown = match v {
                    Value::Number(n) if n.is_f64() => f3(n.as_f64().unwrap_or(f64::NAN)),
                    other => plain(other),
                };
                let _ = writeln!(s, "{k}: {shown}");
            }
            s
        }
    }
}
