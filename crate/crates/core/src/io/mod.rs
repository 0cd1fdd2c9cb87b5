//! CSV ingestion and export plus report rendering.
//!
//! Input is long format: one row per respondent per question. Only
//! `y_direct`, `z_treat` and `v_count` are required; the remaining columns are
//! synthesized when absent.

mod report;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, RawRecord, DEFAULT_QUESTION};
use crate::error::{Error, Result};

pub use report::{
    render_report, ComparisonRow, Format, PlaceboRow, QuestionAnalysis, Report,
};

/// Tokens read as a missing value, compared case-insensitively after trimming.
const MISSING_TOKENS: [&str; 5] = ["", "na", "nan", "null", "."];

/// Header names for each field. Required fields fail with
/// [`Error::MissingColumn`] when their header is absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub respondent_id: String,
    pub question_id: String,
    pub study: String,
    pub y_direct: String,
    pub z_treat: String,
    pub v_count: String,
    pub attention_failed: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            respondent_id: "respondent_id".into(),
            question_id: "question_id".into(),
            study: "study".into(),
            y_direct: "y_direct".into(),
            z_treat: "z_treat".into(),
            v_count: "v_count".into(),
            attention_failed: "attention_failed".into(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_records(file, mapping)
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

pub fn read_records<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let y_col = require(&mapping.y_direct)?;
    let z_col = require(&mapping.z_treat)?;
    let v_col = require(&mapping.v_count)?;
    let id_col = find(&mapping.respondent_id);
    let q_col = find(&mapping.question_id);
    let s_col = find(&mapping.study);
    let a_col = find(&mapping.attention_failed);

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // Row numbers are 1-based data rows, the header being row 0.
        let line = i + 1;
        let text = |col: Option<usize>| {
            col.and_then(|c| row.get(c))
                .filter(|s| !is_missing(s))
                .map(str::to_string)
        };
        let int = |col: usize, name: &str| -> Result<Option<i64>> {
            let cell = row.get(col).unwrap_or("");
            if is_missing(cell) {
                return Ok(None);
            }
            parse_int(cell).map(Some).ok_or_else(|| Error::UnparseableCell {
                row: line,
                column: name.to_string(),
                value: cell.to_string(),
            })
        };
        let attention_failed = match a_col.and_then(|c| row.get(c)) {
            None => false,
            Some(cell) if is_missing(cell) => false,
            Some(cell) => parse_flag(cell).ok_or_else(|| Error::UnparseableCell {
                row: line,
                column: mapping.attention_failed.clone(),
                value: cell.to_string(),
            })?,
        };
        records.push(RawRecord {
            respondent_id: text(id_col),
            question_id: text(q_col),
            study: text(s_col),
            y_direct: int(y_col, &mapping.y_direct)?,
            z_treat: int(z_col, &mapping.z_treat)?,
            v_count: int(v_col, &mapping.v_count)?,
            attention_failed,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(records)
}

/// Integers, also accepting an integral decimal such as `2.0`.
fn parse_int(cell: &str) -> Option<i64> {
    let t = cell.trim();
    t.parse::<i64>().ok().or_else(|| {
        let x: f64 = t.parse().ok()?;
        (x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15).then_some(x as i64)
    })
}

fn parse_flag(cell: &str) -> Option<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "t" | "y" => Some(true),
        "0" | "false" | "no" | "f" | "n" => Some(false),
        _ => None,
    }
}

/// Records sharing a question and study, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionGroup {
    pub question: String,
    pub study: Option<String>,
    pub records: Vec<RawRecord>,
}

/// Splits records by `(question, study)` without reordering groups or rows.
pub fn group_records(records: &[RawRecord]) -> Vec<QuestionGroup> {
    let mut groups: Vec<QuestionGroup> = Vec::new();
    for r in records {
        let question = r.question_id.clone().unwrap_or_else(|| DEFAULT_QUESTION.to_string());
        match groups.iter_mut().find(|g| g.question == question && g.study == r.study) {
            Some(g) => g.records.push(r.clone()),
            None => groups.push(QuestionGroup {
                question,
                study: r.study.clone(),
                records: vec![r.clone()],
            }),
        }
    }
    groups
}

/// Largest list length consistent with the observed counts:
/// `max(max control count, max treated count - 1)`. Rows with missing or
/// negative counts are ignored.
pub fn infer_j_items(records: &[RawRecord]) -> Option<u32> {
    records
        .iter()
        .filter(|r| !r.attention_failed)
        .filter_map(|r| match (r.z_treat, r.v_count) {
            (Some(0), Some(v)) if v >= 0 => Some(v),
            (Some(1), Some(v)) if v >= 1 => Some(v - 1),
            _ => None,
        })
        .max()
        .and_then(|j| u32::try_from(j).ok())
        .map(|j| j.max(1))
}

/// Writes a dataset in the input schema so it can be reloaded.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["respondent_id", "question_id", "study", "y_direct", "z_treat", "v_count"])?;
    for r in dataset.records() {
        w.write_record([
            r.id.as_str(),
            dataset.question_id(),
            r.study.as_deref().unwrap_or(""),
            &r.y_direct.to_string(),
            &r.z_treat.to_string(),
            &r.v_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
