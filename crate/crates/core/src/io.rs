//! CSV study ingestion and JSON report emission.
//!
//! Input schema (header names are case-insensitive, `arm` and `stratum` are
//! optional columns):
//!
//! ```text
//! id,y,y_hat,labeled,arm,stratum
//! u1,1.0,2.0,1,0,low
//! u7,,3.2,0,,
//! ```
//!
//! A missing outcome is an empty field. `labeled` is `0` or `1`; a labeled row
//! must carry `y`, and a `y` on an unlabeled row is ignored with a warning.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stratified::{Stratum, StratifiedStudy};
use crate::study::{PoolKind, StudyData};
use crate::treatment::TwoArmStudy;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_SCHEMA_HELP: &str = "\
expected CSV header: id,y,y_hat,labeled[,arm][,stratum] (case-insensitive)
  id       unit identifier
  y        true outcome; required when labeled = 1, empty otherwise
  y_hat    prediction; always required
  labeled  0 or 1
  arm      optional treatment arm, 0 or 1
  stratum  optional stratum label";

#[derive(Debug, Clone, PartialEq)]
pub struct StudyCsvRow {
    pub id: String,
    pub y: Option<f64>,
    pub y_hat: f64,
    pub labeled: bool,
    pub arm: Option<u8>,
    pub stratum: Option<String>,
    /// 1-based line in the source file.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyShape {
    Single,
    TwoArm,
    Stratified,
}

/// Validated rows of a study file.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    rows: Vec<StudyCsvRow>,
}

#[derive(Clone, Copy)]
enum Column {
    Id,
    Y,
    YHat,
    Labeled,
    Arm,
    Stratum,
}

pub fn parse_study_csv(path: impl AsRef<Path>) -> Result<StudyTable> {
    let file = std::fs::File::open(path)?;
    parse_study_reader(file)
}

pub fn parse_study_reader(reader: impl Read) -> Result<StudyTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
        None => return Err(schema(1, "empty file")),
    };
    let columns = header
        .iter()
        .map(|h| match h.trim().to_ascii_lowercase().as_str() {
            "id" => Ok(Column::Id),
            "y" => Ok(Column::Y),
            "y_hat" => Ok(Column::YHat),
            "labeled" => Ok(Column::Labeled),
            "arm" => Ok(Column::Arm),
            "stratum" => Ok(Column::Stratum),
            other => Err(schema(1, format!("unknown column {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = [0usize; 6];
    for c in &columns {
        seen[*c as usize] += 1;
    }
    for (c, name) in [(Column::Id, "id"), (Column::Y, "y"), (Column::YHat, "y_hat"), (Column::Labeled, "labeled")] {
        if seen[c as usize] != 1 {
            return Err(schema(1, format!("header must contain exactly one {name} column")));
        }
    }
    if seen.iter().any(|&k| k > 1) {
        return Err(schema(1, "duplicate column"));
    }

    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != columns.len() {
            return Err(schema(
                line,
                format!("expected {} fields, found {}", columns.len(), record.len()),
            ));
        }
        let mut row = StudyCsvRow {
            id: String::new(),
            y: None,
            y_hat: f64::NAN,
            labeled: false,
            arm: None,
            stratum: None,
            line,
        };
        let mut y_hat_seen = false;
        for (field, col) in record.iter().zip(&columns) {
            let field = field.trim();
            match col {
                Column::Id => row.id = field.to_string(),
                Column::Y if field.is_empty() => {}
                Column::Y => row.y = Some(parse_number(field, "y", line)?),
                Column::YHat => {
                    if field.is_empty() {
                        return Err(Error::Parse {
                            line,
                            message: "y_hat is required".into(),
                        });
                    }
                    row.y_hat = parse_number(field, "y_hat", line)?;
                    y_hat_seen = true;
                }
                Column::Labeled => {
                    row.labeled = match field {
                        "1" => true,
                        "0" => false,
                        other => return Err(schema(line, format!("labeled must be 0 or 1, got {other:?}"))),
                    }
                }
                Column::Arm => {
                    row.arm = match field {
                        "" => None,
                        "0" => Some(0),
                        "1" => Some(1),
                        other => return Err(schema(line, format!("unknown arm value {other:?}"))),
                    }
                }
                Column::Stratum if field.is_empty() => {}
                Column::Stratum => row.stratum = Some(field.to_string()),
            }
        }
        debug_assert!(y_hat_seen);
        if row.labeled && row.y.is_none() {
            return Err(schema(line, format!("unit {:?} is labeled but has no y", row.id)));
        }
        if !row.labeled && row.y.take().is_some() {
            log::warn!("line {line}: y on an unlabeled row is ignored");
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(schema(1, "no data rows"));
    }
    Ok(StudyTable { rows })
}

fn parse_number(field: &str, name: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("{name} is not a finite number: {field:?}"),
        }),
    }
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

impl StudyTable {
    pub fn rows(&self) -> &[StudyCsvRow] {
        &self.rows
    }

    pub fn has_arms(&self) -> bool {
        self.rows.iter().any(|r| r.arm.is_some())
    }

    pub fn has_strata(&self) -> bool {
        self.rows.iter().any(|r| r.stratum.is_some())
    }

    pub fn shape(&self) -> StudyShape {
        if self.has_arms() {
            StudyShape::TwoArm
        } else if self.has_strata() {
            StudyShape::Stratified
        } else {
            StudyShape::Single
        }
    }

    /// All rows as one study. For an independent pool the labeled rows form
    /// the separate labeled sample and the unlabeled rows the pool.
    pub fn study(&self, pool_kind: PoolKind) -> Result<StudyData> {
        match pool_kind {
            PoolKind::NestedCensus => rows_to_study(self.rows.iter()),
            PoolKind::IndependentSample => {
                let pool = self.rows.iter().filter(|r| !r.labeled).map(|r| r.y_hat).collect();
                let pairs = self
                    .rows
                    .iter()
                    .filter(|r| r.labeled)
                    .map(|r| (r.y.expect("validated"), r.y_hat))
                    .collect();
                StudyData::independent(pool, pairs)
            }
        }
    }

    pub fn two_arm(&self) -> Result<TwoArmStudy> {
        if let Some(r) = self.rows.iter().find(|r| r.arm.is_none()) {
            return Err(schema(r.line, "row has no arm in a two-arm study"));
        }
        let arm = |z: u8| rows_to_study(self.rows.iter().filter(|r| r.arm == Some(z)));
        let arm0 = arm(0).map_err(|e| relabel(e, "arm 0"))?;
        let arm1 = arm(1).map_err(|e| relabel(e, "arm 1"))?;
        TwoArmStudy::new(arm0, arm1)
    }

    /// Strata in order of first appearance.
    pub fn stratified(&self) -> Result<StratifiedStudy> {
        if let Some(r) = self.rows.iter().find(|r| r.stratum.is_none()) {
            return Err(schema(r.line, "row has no stratum in a stratified study"));
        }
        let mut order: Vec<&str> = Vec::new();
        let mut members: BTreeMap<&str, Vec<&StudyCsvRow>> = BTreeMap::new();
        for r in &self.rows {
            let id = r.stratum.as_deref().expect("checked");
            if !members.contains_key(id) {
                order.push(id);
            }
            members.entry(id).or_default().push(r);
        }
        let strata = order
            .into_iter()
            .map(|id| {
                Ok(Stratum {
                    id: id.to_string(),
                    data: rows_to_study(members[id].iter().copied())
                        .map_err(|e| relabel(e, &format!("stratum {id}")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        StratifiedStudy::new(strata)
    }

    /// Per-row group labels from the arm column.
    pub fn arm_groups(&self) -> Vec<Option<String>> {
        self.rows.iter().map(|r| r.arm.map(|a| a.to_string())).collect()
    }

    pub fn stratum_groups(&self) -> Vec<Option<String>> {
        self.rows.iter().map(|r| r.stratum.clone()).collect()
    }
}

fn rows_to_study<'a>(rows: impl Iterator<Item = &'a StudyCsvRow>) -> Result<StudyData> {
    let (preds, ys): (Vec<f64>, Vec<Option<f64>>) = rows.map(|r| (r.y_hat, r.y)).unzip();
    if preds.is_empty() {
        return Err(Error::InvalidStudy("no rows".into()));
    }
    StudyData::nested(preds, ys)
}

fn relabel(e: Error, context: &str) -> Error {
    match e {
        Error::InvalidStudy(m) => Error::InvalidStudy(format!("{context}: {m}")),
        other => other,
    }
}

/// Versioned wrapper around every report written to stdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<T> {
    pub schema_version: u32,
    pub command: String,
    pub report: T,
}

impl<T> ReportEnvelope<T> {
    pub fn new(command: &str, report: T) -> Self {
        ReportEnvelope {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            report,
        }
    }
}

pub fn emit_report<T: Serialize>(command: &str, report: &T) -> String {
    let envelope = ReportEnvelope::new(command, report);
    let mut text = serde_json::to_string_pretty(&envelope).expect("reports serialize");
    text.push('\n');
    text
}

pub fn parse_report<T: DeserializeOwned>(text: &str) -> Result<ReportEnvelope<T>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}
