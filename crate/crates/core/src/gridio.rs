//! Serialization of [`GridFunction`]s.
//!
//! Binary layout (`.rlgf`): a 32-byte ASCII header followed by `n^d`
//! little-endian `f64` values in row-major index order.
//!
//! ```text
//! bytes  0..4   magic "RLGF"
//! bytes  4..6   d      (decimal, space padded)
//! bytes  6..12  n      (decimal, space padded)
//! bytes 12..32  side   (decimal float, space padded)
//! ```
//!
//! CSV layout: a `# grid d=<d> n=<n> side=<side>` comment line, a header
//! `i0,..,i{d-1},value`, then one row per grid point.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridFunction};

pub const MAGIC: &[u8; 4] = b"RLGF";
pub const HEADER_LEN: usize = 32;

fn format_side(side: f64) -> String {
    let short = format!("{side}");
    if short.len() <= 20 {
        short
    } else {
        format!("{side:.12e}")
    }
}

fn pad(field: &str, width: usize, what: &str) -> Result<Vec<u8>> {
    if field.len() > width {
        return Err(LabError::Format(format!("{what} `{field}` does not fit in {width} header bytes")));
    }
    let mut out = field.as_bytes().to_vec();
    out.resize(width, b' ');
    Ok(out)
}

pub fn encode_rlgf(f: &GridFunction) -> Result<Vec<u8>> {
    let g = f.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend(pad(&g.dim().to_string(), 2, "dimension")?);
    out.extend(pad(&g.n().to_string(), 6, "point count")?);
    out.extend(pad(&format_side(g.side()), 20, "side")?);
    debug_assert_eq!(out.len(), HEADER_LEN);
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn header_field<T: std::str::FromStr>(bytes: &[u8], what: &str) -> Result<T> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| LabError::Format(format!("header field {what} is not ASCII")))?;
    text.trim()
        .parse()
        .map_err(|_| LabError::Format(format!("header field {what} = `{}` is not a number", text.trim())))
}

pub fn decode_rlgf(bytes: &[u8]) -> Result<GridFunction> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(LabError::Format("missing RLGF magic".into()));
    }
    let d: usize = header_field(&bytes[4..6], "d")?;
    let n: usize = header_field(&bytes[6..12], "n")?;
    let side: f64 = header_field(&bytes[12..32], "side")?;
    let grid = Grid::new(d, n, side)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(LabError::Format(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            8 * grid.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GridFunction::new(grid, values)
}

pub fn write_rlgf(path: impl AsRef<Path>, f: &GridFunction) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_rlgf(f)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_rlgf(path: impl AsRef<Path>) -> Result<GridFunction> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_rlgf(&bytes)
}

pub fn write_csv(path: impl AsRef<Path>, f: &GridFunction) -> Result<()> {
    let g = f.grid();
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# grid d={} n={} side={}", g.dim(), g.n(), g.side())?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = (0..g.dim()).map(|a| format!("i{a}")).collect();
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    for (i, v) in f.values().iter().enumerate() {
        let mut row: Vec<String> = g.multi_index(i).iter().map(|m| m.to_string()).collect();
        row.push(format!("{v:?}"));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<GridFunction> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    let grid = parse_grid_comment(first)?;
    let mut values = vec![f64::NAN; grid.len()];
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != grid.dim() + 1 {
            return Err(LabError::Format(format!("row has {} fields, expected {}", rec.len(), grid.dim() + 1)));
        }
        let multi: Vec<usize> = (0..grid.dim())
            .map(|a| rec[a].trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LabError::Format(format!("bad index: {e}")))?;
        if multi.iter().any(|&m| m >= grid.n()) {
            return Err(LabError::Format(format!("index {multi:?} out of range")));
        }
        let v: f64 = rec[grid.dim()]
            .trim()
            .parse()
            .map_err(|e| LabError::Format(format!("bad value: {e}")))?;
        values[grid.flat_index(&multi)] = v;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(LabError::Format(format!("missing row for grid index {i}")));
    }
    GridFunction::new(grid, values)
}

fn parse_grid_comment(line: &str) -> Result<Grid> {
    let rest = line
        .strip_prefix("# grid")
        .ok_or_else(|| LabError::Format("CSV must start with `# grid d=.. n=.. side=..`".into()))?;
    let (mut d, mut n, mut side) = (None, None, None);
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("d", v)) => d = v.parse().ok(),
            Some(("n", v)) => n = v.parse().ok(),
            Some(("side", v)) => side = v.parse().ok(),
            _ => {}
        }
    }
    match (d, n, side) {
        (Some(d), Some(n), Some(side)) => Grid::new(d, n, side),
        _ => Err(LabError::Format(format!("unreadable grid comment `{line}`"))),
    }
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Format(e.to_string())
}
