//! Convergence history rows and their CSV form.
//!
//! One row per state: row 0 is the initial state, row i the state after i
//! iterations. The CSV schema is pinned; floats are written in shortest
//! round-trip scientific form so a parse followed by a re-emit is
//! byte-identical.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::io::fmt_shortest;
use crate::solvers::SolveStatus;
use crate::stability::GapRecord;

/// The pinned CSV header.
pub const CSV_HEADER: &str = "iter,rec_resid,true_resid,gap_r,gap_s,gap_w,gap_z,gap_k,gap_l,bound_fr,col_norm_U,col_norm_OU,col_norm_BA,col_norm_UEA,col_norm_BAEA,col_norm_BPA,col_norm_UC,col_norm_BAC,col_norm_BD,replaced";

/// One state row: measurements plus the coefficients that produced it.
/// Row 0 carries zero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub record: GapRecord,
    /// Max-norms of the latest column of the nine propagation products.
    pub col_norms: [f64; 9],
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
}

/// A parsed CSV row; coefficient columns are not part of the file format.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub iter: usize,
    pub rec_resid: f64,
    pub true_resid: f64,
    pub gap_r: f64,
    pub gap_s: f64,
    pub gap_w: f64,
    pub gap_z: f64,
    pub gap_k: f64,
    pub gap_l: f64,
    pub bound_fr: f64,
    pub col_norms: [f64; 9],
    pub replaced: bool,
}

impl HistoryRow {
    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            iter: self.record.iteration,
            rec_resid: self.record.recursive_residual_norm,
            true_resid: self.record.true_residual_norm,
            gap_r: self.record.gap_r,
            gap_s: self.record.gap_s,
            gap_w: self.record.gap_w,
            gap_z: self.record.gap_z,
            gap_k: self.record.gap_k,
            gap_l: self.record.gap_l,
            bound_fr: self.record.bound_f_r,
            col_norms: self.col_norms,
            replaced: self.record.replaced,
        }
    }
}

impl CsvRow {
    fn write_line<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut fields = Vec::with_capacity(20);
        fields.push(self.iter.to_string());
        for v in [
            self.rec_resid,
            self.true_resid,
            self.gap_r,
            self.gap_s,
            self.gap_w,
            self.gap_z,
            self.gap_k,
            self.gap_l,
            self.bound_fr,
        ] {
            fields.push(fmt_shortest(v));
        }
        for v in self.col_norms {
            fields.push(fmt_shortest(v));
        }
        fields.push(if self.replaced { "1" } else { "0" }.to_string());
        writeln!(w, "{}", fields.join(",")).map_err(Error::from)
    }
}

/// Full history of a solve.
#[derive(Clone, Debug, Default)]
pub struct ConvergenceHistory {
    pub rows: Vec<HistoryRow>,
    pub status: Option<SolveStatus>,
}

impl ConvergenceHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: HistoryRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    /// Writes the pinned CSV schema.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let rows: Vec<CsvRow> = self.rows.iter().map(HistoryRow::csv_row).collect();
        write_csv_rows(&rows, w)
    }
}

/// Writes already-materialized CSV rows, header included.
pub fn write_csv_rows<W: Write>(rows: &[CsvRow], w: &mut W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        row.write_line(w)?;
    }
    Ok(())
}

/// Parses a history CSV. The header must match the pinned schema exactly.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<CsvRow>> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty history file".into(),
            })
        }
    };
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header: {header}"),
        });
    }

    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 20 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 20 fields, found {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad float: {s}"),
            })
        };
        let iter = fields[0].parse::<usize>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad iteration index: {}", fields[0]),
        })?;
        let mut col_norms = [0.0f64; 9];
        for (k, slot) in col_norms.iter_mut().enumerate() {
            *slot = parse_f(fields[10 + k])?;
        }
        let replaced = match fields[19] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("bad replaced flag: {other}"),
                })
            }
        };
        rows.push(CsvRow {
            iter,
            rec_resid: parse_f(fields[1])?,
            true_resid: parse_f(fields[2])?,
            gap_r: parse_f(fields[3])?,
            gap_s: parse_f(fields[4])?,
            gap_w: parse_f(fields[5])?,
            gap_z: parse_f(fields[6])?,
            gap_k: parse_f(fields[7])?,
            gap_l: parse_f(fields[8])?,
            bound_fr: parse_f(fields[9])?,
            col_norms,
            replaced,
        });
    }
    Ok(rows)
}
