//! Study-level CSV input.
//!
//! Two schemas are accepted, told apart by the header:
//!
//! * raw arm summaries: `study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c`
//! * bias-corrected standardized means: `study_id,g_t,n_t,g_c,n_c`
//!
//! Column order is free; unknown columns are rejected.

use std::io::Read;
use std::str::FromStr;

use dsm_core::effects::{study_dsm, ArmSummary, StudyDsm};

use crate::error::{CliError, Result};

pub const RAW_COLUMNS: [&str; 7] = ["study_id", "n_t", "mean_t", "sd_t", "n_c", "mean_c", "sd_c"];
pub const CORRECTED_COLUMNS: [&str; 5] = ["study_id", "g_t", "n_t", "g_c", "n_c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Raw,
    Corrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study_id: String,
    pub dsm: StudyDsm,
}

fn detect(header: &csv::StringRecord) -> Result<(Schema, Vec<usize>)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let positions = |cols: &[&str]| -> Option<Vec<usize>> {
        if names.len() != cols.len() {
            return None;
        }
        cols.iter()
            .map(|c| names.iter().position(|n| n == c))
            .collect()
    };
    if let Some(p) = positions(&RAW_COLUMNS) {
        return Ok((Schema::Raw, p));
    }
    if let Some(p) = positions(&CORRECTED_COLUMNS) {
        return Ok((Schema::Corrected, p));
    }
    Err(CliError::Line {
        line: 1,
        message: format!(
            "unrecognized header `{}`; expected `{}` or `{}`",
            names.join(","),
            RAW_COLUMNS.join(","),
            CORRECTED_COLUMNS.join(",")
        ),
    })
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn field(&self, idx: usize, column: &str) -> Result<&str> {
        let v = self.record.get(idx).map(str::trim).unwrap_or("");
        if v.is_empty() {
            return Err(self.error(column, "missing value".into()));
        }
        Ok(v)
    }

    fn parse<T: FromStr>(&self, idx: usize, column: &str) -> Result<T> {
        let raw = self.field(idx, column)?;
        raw.parse()
            .map_err(|_| self.error(column, format!("cannot parse `{raw}`")))
    }

    fn finite(&self, idx: usize, column: &str) -> Result<f64> {
        let x: f64 = self.parse(idx, column)?;
        if !x.is_finite() {
            return Err(self.error(column, format!("value must be finite, got {x}")));
        }
        Ok(x)
    }

    fn error(&self, column: &str, message: String) -> CliError {
        CliError::Cell {
            line: self.line,
            column: column.into(),
            message,
        }
    }

    fn invalid(&self, e: dsm_core::Error) -> CliError {
        CliError::Line {
            line: self.line,
            message: e.to_string(),
        }
    }
}

/// Parses a study file. Line numbers in errors count the header as line 1.
pub fn read_studies<R: Read>(reader: R) -> Result<(Schema, Vec<StudyRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let (schema, pos) = detect(rdr.headers()?)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let record = rec?;
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let row = Row {
            record: &record,
            line,
        };
        if record.len() != pos.len() {
            return Err(CliError::Line {
                line,
                message: format!("expected {} fields, found {}", pos.len(), record.len()),
            });
        }
        let study_id = row.field(pos[0], "study_id")?.to_string();
        let dsm = match schema {
            Schema::Raw => {
                let arm = |n: usize, m: usize, s: usize, cols: [&str; 3]| -> Result<ArmSummary> {
                    let n: u32 = row.parse(pos[n], cols[0])?;
                    let mean = row.finite(pos[m], cols[1])?;
                    let sd = row.finite(pos[s], cols[2])?;
                    ArmSummary::new(n, mean, sd).map_err(|e| row.invalid(e))
                };
                let t = arm(1, 2, 3, ["n_t", "mean_t", "sd_t"])?;
                let c = arm(4, 5, 6, ["n_c", "mean_c", "sd_c"])?;
                study_dsm(&t, &c).map_err(|e| row.invalid(e))?
            }
            Schema::Corrected => {
                let g_t = row.finite(pos[1], "g_t")?;
                let n_t: u32 = row.parse(pos[2], "n_t")?;
                let g_c = row.finite(pos[3], "g_c")?;
                let n_c: u32 = row.parse(pos[4], "n_c")?;
                StudyDsm::from_corrected(g_t, n_t, g_c, n_c).map_err(|e| row.invalid(e))?
            }
        };
        out.push(StudyRecord { study_id, dsm });
    }
    Ok((schema, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_both_schemas() {
        let raw = "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\na,30,2,1.5,20,1,2\n";
        let (s, r) = read_studies(raw.as_bytes()).unwrap();
        assert_eq!(s, Schema::Raw);
        assert!((r[0].dsm.d_hat - 0.818_544_803_000_164_4).abs() < 1e-12);

        let pre = "g_t,n_t,g_c,n_c,study_id\n1.0,20,0.5,25,x\n";
        let (s, r) = read_studies(pre.as_bytes()).unwrap();
        assert_eq!(s, Schema::Corrected);
        assert_eq!(r[0].study_id, "x");
        assert_eq!(r[0].dsm.d_hat, 0.5);
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let raw =
            "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\na,30,2,1.5,20,1,2\nb,30,oops,1,20,1,2\n";
        let err = read_studies(raw.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("mean_t"), "{err}");
    }

    #[test]
    fn small_arm_is_rejected_with_line() {
        let raw = "study_id,g_t,n_t,g_c,n_c\na,1,3,0,10\n";
        let err = read_studies(raw.as_bytes()).unwrap_err().to_string();
        assert!(err.starts_with("line 2"), "{err}");
    }

    #[test]
    fn mixed_header_is_rejected() {
        let raw = "study_id,g_t,n_t,mean_c,n_c\n";
        assert!(read_studies(raw.as_bytes()).is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let raw = "study_id,g_t,n_t,g_c,n_c\na,inf,10,0,10\n";
        let err = read_studies(raw.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("g_t"), "{err}");
    }
}
