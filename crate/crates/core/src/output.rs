//! On-disk formats.
//!
//! Tables (ledgers, stability series) are text:
//!
//! ```text
//! # voigt <kind> config=<sha256>
//! # time sqrt_rho_u_sq ...
//! 0.00000000000000000e0 6.28318530717958623e0 ...
//! ```
//!
//! one row per line, written and flushed as produced so an interrupted run
//! leaves a readable prefix. Values use `{:.17e}`, which round-trips `f64`.
//!
//! Snapshots are binary: a text line `VOIGTSNAP1 config=<sha256>\n`, then
//! little-endian `u32 dim`, `u32 points`, `dim × f64` box lengths, `f64 time`,
//! `u32 components`, and the row-major nodal values of each component.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::Grid;

pub const SNAPSHOT_MAGIC: &str = "VOIGTSNAP1";

pub struct TableWriter {
    out: BufWriter<File>,
    columns: usize,
}

impl TableWriter {
    pub fn create(path: &Path, kind: &str, hash: &str, columns: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# voigt {kind} config={hash}")?;
        writeln!(out, "# {}", columns.join(" "))?;
        out.flush()?;
        Ok(Self {
            out,
            columns: columns.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.columns {
            return Err(Error::ContractViolation(format!(
                "row has {} values for {} columns",
                values.len(),
                self.columns
            )));
        }
        let line: Vec<String> = values.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(self.out, "{}", line.join(" "))?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub kind: String,
    pub hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let bad = |m: &str| Error::Validation(format!("{}: {m}", path.display()));
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    let rest = header.strip_prefix("# voigt ").ok_or_else(|| bad("missing header"))?;
    let (kind, hash) = rest
        .split_once(" config=")
        .ok_or_else(|| bad("header has no config hash"))?;
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| bad("missing column line"))??
        .trim_start_matches('#')
        .split_whitespace()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|_| bad("unparseable row"))?;
        if row.len() != columns.len() {
            return Err(bad("row width differs from the header"));
        }
        rows.push(row);
    }
    Ok(Table {
        kind: kind.to_string(),
        hash: hash.to_string(),
        columns,
        rows,
    })
}

/// Writes the table as CSV with a header row.
pub fn table_to_csv(table: &Table, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", table.columns.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub hash: String,
    pub grid: Grid,
    pub time: f64,
    pub fields: Vec<Vec<f64>>,
}

pub fn write_snapshot(path: &Path, hash: &str, grid: &Grid, time: f64, fields: &[&[f64]]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SNAPSHOT_MAGIC} config={hash}")?;
    out.write_all(&(grid.dim() as u32).to_le_bytes())?;
    out.write_all(&(grid.points() as u32).to_le_bytes())?;
    for &l in grid.lengths() {
        out.write_all(&l.to_le_bytes())?;
    }
    out.write_all(&time.to_le_bytes())?;
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        if f.len() != grid.len() {
            return Err(Error::ContractViolation("snapshot field does not match the grid".into()));
        }
        for v in f.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Validation(format!("{}: {m}", path.display()));
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not text"))?;
    let hash = header
        .strip_prefix(SNAPSHOT_MAGIC)
        .and_then(|r| r.strip_prefix(" config="))
        .ok_or_else(|| bad("not a snapshot file"))?
        .to_string();
    let mut pos = nl + 1;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated snapshot"))?;
        pos += n;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
    let dim = u32_at(take(4)?) as usize;
    let points = u32_at(take(4)?) as usize;
    if !(2..=3).contains(&dim) {
        return Err(bad("unsupported dimension"));
    }
    let lengths: Vec<f64> = (0..dim).map(|_| take(8).map(f64_at)).collect::<Result<_>>()?;
    let grid = Grid::new(dim, points, &lengths)?;
    let time = f64_at(take(8)?);
    let comps = u32_at(take(4)?) as usize;
    let mut fields = Vec::with_capacity(comps);
    for _ in 0..comps {
        let raw = take(8 * grid.len())?;
        fields.push(raw.chunks_exact(8).map(f64_at).collect());
    }
    Ok(Snapshot {
        hash,
        grid,
        time,
        fields,
    })
}
