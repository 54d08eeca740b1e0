//! Raw evaluation dumps to per-cell error counts.
//!
//! A dump starts with the header line `device_id,c,m_total` followed by
//! `m_total` rows, one per evaluation. A row is either `c` characters from
//! `{0,1}` or ⌈c/4⌉ hex digits, most significant bit first, with the unused
//! low bits of the last digit set to zero. Blank lines are ignored.
//!
//! Counts are exchanged as CSV with header
//! `device_id,cell_index,error_count,trials`.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{CellCounts, DeviceCounts};

/// Row encoding of a raw dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowFormat {
    Text,
    Hex,
    /// Decided from the first row; text wins when both would fit.
    Auto,
}

/// Evaluations of one device, rows × cells, entries 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationMatrix {
    pub device_id: String,
    cells: usize,
    bits: Vec<u8>,
}

impl EvaluationMatrix {
    /// Builds a matrix from rows of 0/1 entries.
    pub fn from_rows(device_id: impl Into<String>, rows: &[Vec<u8>]) -> Result<Self> {
        let cells = rows.first().map_or(0, Vec::len);
        if cells == 0 {
            return Err(Error::invalid("evaluation matrix needs at least one row and one cell"));
        }
        let mut bits = Vec::with_capacity(cells * rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cells {
                return Err(Error::invalid(format!("row {i} has {} cells, expected {cells}", row.len())));
            }
            if let Some(b) = row.iter().find(|&&b| b > 1) {
                return Err(Error::invalid(format!("row {i} contains non-binary value {b}")));
            }
            bits.extend_from_slice(row);
        }
        Ok(Self {
            device_id: device_id.into(),
            cells,
            bits,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn rows(&self) -> usize {
        self.bits.len() / self.cells
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.cells..(i + 1) * self.cells]
    }

    /// Every entry flipped.
    pub fn complement(&self) -> Self {
        Self {
            device_id: self.device_id.clone(),
            cells: self.cells,
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn decode_text(row: &str, cells: usize, line: usize, out: &mut Vec<u8>) -> Result<()> {
    if row.len() != cells {
        return Err(parse_err(line, format!("expected {cells} bits, found {}", row.len())));
    }
    for (j, ch) in row.bytes().enumerate() {
        match ch {
            b'0' => out.push(0),
            b'1' => out.push(1),
            other => {
                return Err(parse_err(
                    line,
                    format!("non-binary symbol {:?} at column {}", other as char, j + 1),
                ))
            }
        }
    }
    Ok(())
}

fn decode_hex(row: &str, cells: usize, line: usize, out: &mut Vec<u8>) -> Result<()> {
    let digits = cells.div_ceil(4);
    if row.len() != digits {
        return Err(parse_err(line, format!("expected {digits} hex digits for {cells} cells, found {}", row.len())));
    }
    let start = out.len();
    for (j, ch) in row.chars().enumerate() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| parse_err(line, format!("invalid hex digit {ch:?} at column {}", j + 1)))?;
        for shift in (0..4).rev() {
            out.push(((v >> shift) & 1) as u8);
        }
    }
    if out[start + cells..].iter().any(|&b| b != 0) {
        return Err(parse_err(line, "padding bits after the last cell must be zero"));
    }
    out.truncate(start + cells);
    Ok(())
}

fn looks_like_text(row: &str, cells: usize) -> bool {
    row.len() == cells && row.bytes().all(|b| b == b'0' || b == b'1')
}

/// Parses one raw dump.
pub fn parse_evaluations<R: BufRead>(source: R, format: RowFormat) -> Result<EvaluationMatrix> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (header_line, header) = loop {
        match lines.next() {
            None => return Err(parse_err(1, "missing header `device_id,c,m_total`")),
            Some((n, l)) => {
                let l = l.map_err(|e| parse_err(n, e.to_string()))?;
                if !l.trim().is_empty() {
                    break (n, l);
                }
            }
        }
    };
    let fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(parse_err(header_line, "header must be `device_id,c,m_total`"));
    }
    let device_id = fields[0].to_string();
    if device_id.is_empty() {
        return Err(parse_err(header_line, "empty device id"));
    }
    let cells: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(header_line, format!("cell count {:?} is not an integer", fields[1])))?;
    let m_total: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(header_line, format!("evaluation count {:?} is not an integer", fields[2])))?;
    if cells == 0 || m_total == 0 {
        return Err(parse_err(header_line, "cell and evaluation counts must be positive"));
    }

    let mut fmt = format;
    let mut bits = Vec::with_capacity(cells * m_total);
    let mut rows = 0;
    let mut last_line = header_line;
    for (n, l) in lines {
        last_line = n;
        let l = l.map_err(|e| parse_err(n, e.to_string()))?;
        let row = l.trim();
        if row.is_empty() {
            continue;
        }
        if rows == m_total {
            return Err(parse_err(n, format!("more than the declared {m_total} evaluations")));
        }
        if fmt == RowFormat::Auto {
            fmt = if looks_like_text(row, cells) { RowFormat::Text } else { RowFormat::Hex };
        }
        match fmt {
            RowFormat::Text => decode_text(row, cells, n, &mut bits)?,
            _ => decode_hex(row, cells, n, &mut bits)?,
        }
        rows += 1;
    }
    if rows != m_total {
        return Err(parse_err(last_line, format!("found {rows} evaluations, header declares {m_total}")));
    }
    Ok(EvaluationMatrix { device_id, cells, bits })
}

/// Writes `mat` in the raw dump format.
pub fn write_evaluations<W: Write>(mat: &EvaluationMatrix, format: RowFormat, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::invalid(format!("write failed: {e}"));
    writeln!(out, "{},{},{}", mat.device_id, mat.cells, mat.rows()).map_err(io)?;
    for i in 0..mat.rows() {
        let row = mat.row(i);
        let line: String = match format {
            RowFormat::Hex => row
                .chunks(4)
                .map(|c| {
                    let v = c.iter().enumerate().fold(0u32, |acc, (j, &b)| acc | ((b as u32) << (3 - j)));
                    char::from_digit(v, 16).unwrap().to_ascii_uppercase()
                })
                .collect(),
            _ => row.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect(),
        };
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Drops the first `skip` evaluations (aging/burn-in window).
pub fn discard_aging(mat: &EvaluationMatrix, skip: usize) -> Result<EvaluationMatrix> {
    if skip >= mat.rows() {
        return Err(Error::invalid(format!(
            "cannot discard {skip} of {} evaluations",
            mat.rows()
        )));
    }
    Ok(EvaluationMatrix {
        device_id: mat.device_id.clone(),
        cells: mat.cells,
        bits: mat.bits[skip * mat.cells..].to_vec(),
    })
}

/// Per-cell bit weight, stable state and error count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    /// Fraction of ones.
    pub bit_weight: f64,
    /// Majority value; ties go to 0.
    pub stable_state: u8,
    pub error_count: u64,
    pub trials: u64,
}

impl CellSummary {
    pub fn counts(&self) -> CellCounts {
        CellCounts {
            errors: self.error_count,
            trials: self.trials,
        }
    }
}

pub fn summarize_cells(mat: &EvaluationMatrix) -> Vec<CellSummary> {
    let mut ones = vec![0u64; mat.cells];
    for row in mat.bits.chunks_exact(mat.cells) {
        for (o, &b) in ones.iter_mut().zip(row) {
            *o += b as u64;
        }
    }
    let m = mat.rows() as u64;
    ones.into_iter()
        .map(|o| {
            let zeros = m - o;
            let stable_state = u8::from(o > zeros);
            CellSummary {
                bit_weight: o as f64 / m as f64,
                stable_state,
                error_count: if stable_state == 1 { zeros } else { o },
                trials: m,
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    device_id: String,
    cell_index: usize,
    error_count: u64,
    trials: u64,
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes the counts of one device as CSV (with header).
pub fn write_counts_csv<W: Write>(device_id: &str, cells: &[CellCounts], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for (i, c) in cells.iter().enumerate() {
        w.serialize(CountRow {
            device_id: device_id.to_string(),
            cell_index: i,
            error_count: c.errors,
            trials: c.trials,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("write failed: {e}")))?;
    Ok(())
}

/// Reads counts CSV, grouping rows by device in order of first appearance
/// and cells by index. Indices of a device must be exactly 0..n.
pub fn read_counts_csv<R: Read>(source: R) -> Result<Vec<DeviceCounts>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let expected = ["device_id", "cell_index", "error_count", "trials"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_device: HashMap<String, Vec<(usize, CellCounts)>> = HashMap::new();
    for rec in rdr.deserialize::<CountRow>() {
        let row = rec.map_err(csv_err)?;
        let counts = CellCounts::new(row.error_count, row.trials)
            .map_err(|e| Error::invalid(format!("device {} cell {}: {e}", row.device_id, row.cell_index)))?;
        let entry = by_device.entry(row.device_id.clone()).or_insert_with(|| {
            order.push(row.device_id.clone());
            Vec::new()
        });
        entry.push((row.cell_index, counts));
    }
    order
        .into_iter()
        .map(|id| {
            let mut cells = by_device.remove(&id).unwrap_or_default();
            cells.sort_by_key(|c| c.0);
            for (expect, c) in cells.iter().enumerate() {
                if c.0 != expect {
                    return Err(Error::invalid(format!(
                        "device {id}: cell indices must be 0..{} without gaps or duplicates",
                        cells.len()
                    )));
                }
            }
            Ok(DeviceCounts {
                device_id: id,
                cells: cells.into_iter().map(|c| c.1).collect(),
            })
        })
        .collect()
}
