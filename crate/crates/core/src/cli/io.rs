use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::grid::TimeGrid;
use crate::metrics::SamplePath;

/// 17 significant digits, scientific notation, locale independent.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `id,t,value` rows for a set of rows on one grid.
pub fn rows_csv<'a>(header: &str, grid: TimeGrid<f64>, rows: impl Iterator<Item = &'a [f64]>) -> String {
    let nodes = grid.nodes();
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for (i, row) in rows.enumerate() {
        for (t, v) in nodes.iter().zip(row) {
            writeln!(out, "{i},{},{}", num(*t), num(*v)).expect("string write");
        }
    }
    out
}

/// Reads a `t,value` CSV on a uniform grid starting at 0.
pub fn read_path_csv(path: &Path) -> Result<SamplePath<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_path_csv(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse_path_csv(text: &str) -> Result<SamplePath<f64>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "t,value" => {}
        Some((_, h)) => return Err(format!("expected header `t,value`, found `{h}`")),
        None => return Err("empty file".into()),
    }
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (no, line) in lines {
        let mut cols = line.split(',');
        let (Some(t), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(format!("line {}: expected two columns", no + 1));
        };
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", no + 1));
        ts.push(parse(t)?);
        vs.push(parse(v)?);
    }
    if ts.len() < 2 {
        return Err("need at least two nodes".into());
    }
    let n = ts.len() - 1;
    let grid = TimeGrid::new(ts[n], n).map_err(|e| e.to_string())?;
    for (k, &t) in ts.iter().enumerate() {
        if (t - grid.node(k)).abs() > 1e-9 * grid.t_end() {
            return Err(format!("times are not a uniform grid from 0 (node {k} is {t})"));
        }
    }
    SamplePath::new(grid, vs).map_err(|e| e.to_string())
}

pub fn path_csv(f: &SamplePath<f64>) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in f.grid().nodes().iter().zip(f.values()) {
        writeln!(out, "{},{}", num(*t), num(*v)).expect("string write");
    }
    out
}
