//! CSV formats: genes x subjects expression tables and `id,time,event` survival tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use infometric_core::survival::SurvivalRecord;
use infometric_core::DataMatrix;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// A numeric table with row and column identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub data: DataMatrix,
}

/// One subject's survival row, before alignment to the expression columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRow {
    pub id: String,
    pub time: f64,
    pub event: bool,
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn check_unique(ids: &[String], what: &str, source: &str) -> CliResult<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(CliError::Data(format!("{source}: duplicate {what} id '{id}'")));
        }
    }
    Ok(())
}

pub fn read_matrix(path: &Path) -> CliResult<LabeledMatrix> {
    parse_matrix(open(path)?, &path.display().to_string())
}

/// First row: a corner cell followed by column ids. Every other row: a row id followed by values.
pub fn parse_matrix<R: Read>(reader: R, source: &str) -> CliResult<LabeledMatrix> {
    let err = |msg: String| CliError::Data(format!("{source}: {msg}"));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(err("header needs an id column and at least one data column".into()));
    }
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    check_unique(&col_ids, "column", source)?;
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != header.len() {
            return Err(err(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                header.len()
            )));
        }
        row_ids.push(record[0].to_string());
        for (c, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                err(format!(
                    "row '{}', column '{}': '{cell}' is not a number",
                    &record[0], col_ids[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(err(format!(
                    "row '{}', column '{}': non-finite value",
                    &record[0], col_ids[c]
                )));
            }
            values.push(v);
        }
    }
    if row_ids.is_empty() {
        return Err(err("no data rows".into()));
    }
    check_unique(&row_ids, "row", source)?;
    let data = DataMatrix::from_row_slice(row_ids.len(), col_ids.len(), &values).map_err(|e| err(e.to_string()))?;
    Ok(LabeledMatrix { row_ids, col_ids, data })
}

pub fn write_matrix(path: &Path, m: &LabeledMatrix, corner: &str) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(corner);
    for id in &m.col_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    let d = m.data.as_matrix();
    for (i, id) in m.row_ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..d.ncols() {
            out.push(',');
            out.push_str(&d[(i, j)].to_string());
        }
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn read_survival(path: &Path) -> CliResult<Vec<SurvivalRow>> {
    let source = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Data(format!("{source}: missing '{name}' column")))
    };
    let (id_col, time_col, event_col) = (find("id")?, find("time")?, find("event")?);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let time: f64 = record
            .get(time_col)
            .and_then(|t| t.parse().ok())
            .filter(|t: &f64| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| CliError::Data(format!("{source}: subject '{id}' has an invalid time")))?;
        let event = match record.get(event_col).unwrap_or_default() {
            "1" | "true" | "TRUE" | "True" => true,
            "0" | "false" | "FALSE" | "False" => false,
            other => {
                return Err(CliError::Data(format!(
                    "{source}: subject '{id}' has event '{other}', expected 0 or 1"
                )))
            }
        };
        rows.push(SurvivalRow { id, time, event });
    }
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    check_unique(&ids, "subject", &source)?;
    Ok(rows)
}

pub fn write_survival(path: &Path, ids: &[String], records: &[SurvivalRecord]) -> CliResult<()> {
    let mut out = String::from("id,time,event\n");
    for (id, r) in ids.iter().zip(records) {
        out.push_str(&format!("{id},{},{}\n", r.time, u8::from(r.event)));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Survival records in the order of `subjects`; every id must appear on both sides.
pub fn align_survival(subjects: &[String], rows: &[SurvivalRow]) -> CliResult<Vec<SurvivalRecord>> {
    let by_id: BTreeMap<&str, &SurvivalRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let subject_set: BTreeSet<&str> = subjects.iter().map(String::as_str).collect();
    let missing: Vec<&str> = subjects
        .iter()
        .map(String::as_str)
        .filter(|s| !by_id.contains_key(s))
        .collect();
    let extra: Vec<&str> = rows
        .iter()
        .map(|r| r.id.as_str())
        .filter(|s| !subject_set.contains(s))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("subject ids differ between expression and survival data");
        if !missing.is_empty() {
            msg.push_str(&format!("; without survival: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            msg.push_str(&format!("; not in expression data: {}", extra.join(", ")));
        }
        return Err(CliError::Data(msg));
    }
    Ok(subjects
        .iter()
        .map(|s| {
            let r = by_id[s.as_str()];
            SurvivalRecord::new(r.time, r.event, 0)
        })
        .collect())
}

/// Indices of the `count` rows with the largest sample variance, in their original order.
pub fn top_variance_rows(d: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let n = d.ncols() as f64;
    let variances: Vec<f64> = d
        .row_iter()
        .map(|r| {
            let mean = r.sum() / n;
            r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect();
    let mut order: Vec<usize> = (0..d.nrows()).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
    order.truncate(count.min(d.nrows()));
    order.sort_unstable();
    order
}
