//! File formats: trajectory CSV, per-field snapshot CSV, binary snapshots
//! and JSON reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces the in-memory values bit for bit.
//!
//! Snapshot CSV layout:
//!
//! ```text
//! # field=u dim=2 extents=1,1 cells=4,3 t=0.5
//! u(0,0),u(1,0),u(2,0),u(3,0)
//! u(0,1),...
//! ```
//!
//! One line per `j`, `i` increasing along the line.
//!
//! Binary snapshot layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `HAPTOSNP` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | dim (`u32`) |
//! | 8     | nx, ny (`u32` each) |
//! | 16    | extents (`f64` each; `ly = 1` in 1D) |
//! | 8     | t (`f64`) |
//! | 8 n   | values (`f64`, row-major) |

use serde::Serialize;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::monitor::MonitorSeries;
use crate::stepper::Sample;

const MAGIC: &[u8; 8] = b"HAPTOSNP";
const VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Column names of the trajectory CSV.
pub fn trajectory_header(pairs: &[(f64, f64)]) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "dt", "mass", "linf_u", "linf_v", "linf_w", "l2_gradv"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(pairs.iter().map(|(p, q)| format!("y_{p}_{q}")));
    cols.push("flags".into());
    cols
}

/// Writes one row per sample. `series` must come from the monitor attached
/// to the same run; `flags` is `ok` while every per-step check has held.
pub fn write_trajectory_csv(
    path: &Path,
    samples: &[Sample],
    series: &MonitorSeries,
    pairs: &[(f64, f64)],
) -> Result<()> {
    if series.t.len() != samples.len() || series.y.len() != pairs.len() {
        return Err(Error::Contract(format!(
            "monitor series ({} samples, {} pairs) does not match trajectory ({} samples, {} pairs)",
            series.t.len(),
            series.y.len(),
            samples.len(),
            pairs.len()
        )));
    }
    let mut f = create(path)?;
    writeln!(f, "{}", trajectory_header(pairs).join(","))?;
    for (k, s) in samples.iter().enumerate() {
        write!(
            f,
            "{},{},{},{},{},{},{}",
            s.t, s.dt, s.mass, s.linf_u, s.linf_v, s.linf_w, s.l2_gradv
        )?;
        for col in &series.y {
            write!(f, ",{}", col[k])?;
        }
        writeln!(f, ",{}", if series.flags_ok[k] { "ok" } else { "fail" })?;
    }
    f.flush()?;
    Ok(())
}

fn grid_header(g: &Grid) -> String {
    let join = |xs: Vec<String>| xs.join(",");
    format!(
        "dim={} extents={} cells={}",
        g.dim(),
        join(g.extents().iter().map(|x| x.to_string()).collect()),
        join(g.cells().iter().map(|x| x.to_string()).collect())
    )
}

pub fn write_snapshot_csv(path: &Path, name: &str, field: &Field, t: f64, g: &Grid) -> Result<()> {
    field.check_on(g)?;
    let mut f = create(path)?;
    writeln!(f, "# field={name} {} t={t}", grid_header(g))?;
    let nx = g.nx();
    for row in field.values().chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// A snapshot read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: Grid,
    pub t: f64,
    pub field: Field,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn header_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| bad(format!("snapshot header lacks {key}")))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.parse().map_err(|_| bad(format!("bad number {x:?} in snapshot header"))))
        .collect()
}

fn grid_from(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Grid> {
    match (dim, extents, cells) {
        (1, [l], [n]) => Grid::new_1d(*l, *n),
        (2, [lx, ly], [nx, ny]) => Grid::new_2d([*lx, *ly], [*nx, *ny]),
        _ => Err(bad("inconsistent dim/extents/cells in snapshot header")),
    }
}

pub fn read_snapshot_csv(path: &Path) -> Result<Snapshot> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| bad("empty snapshot file"))??;
    let dim: usize = header_value(&header, "dim")?
        .parse()
        .map_err(|_| bad("bad dim"))?;
    let extents: Vec<f64> = parse_list(header_value(&header, "extents")?)?;
    let cells: Vec<usize> = parse_list(header_value(&header, "cells")?)?;
    let t: f64 = header_value(&header, "t")?.parse().map_err(|_| bad("bad t"))?;
    let grid = grid_from(dim, &extents, &cells)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if !line.is_empty() {
            values.extend(parse_list::<f64>(&line)?);
        }
    }
    let field = Field::from_vec(&grid, values)?;
    Ok(Snapshot { grid, t, field })
}

pub fn write_snapshot_bin(path: &Path, field: &Field, t: f64, g: &Grid) -> Result<()> {
    field.check_on(g)?;
    let mut f = create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(g.dim() as u32).to_le_bytes())?;
    f.write_all(&(g.nx() as u32).to_le_bytes())?;
    f.write_all(&(g.ny() as u32).to_le_bytes())?;
    let ly = if g.dim() == 2 { g.extents()[1] } else { 1.0 };
    f.write_all(&g.extents()[0].to_le_bytes())?;
    f.write_all(&ly.to_le_bytes())?;
    f.write_all(&t.to_le_bytes())?;
    for v in field.values() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_snapshot_bin(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 48 || &bytes[..8] != MAGIC {
        return Err(bad("not a binary snapshot"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(8) != VERSION {
        return Err(bad(format!("unsupported snapshot version {}", u32_at(8))));
    }
    let dim = u32_at(12) as usize;
    let (nx, ny) = (u32_at(16) as usize, u32_at(20) as usize);
    let (lx, ly, t) = (f64_at(24), f64_at(32), f64_at(40));
    let grid = if dim == 1 {
        grid_from(1, &[lx], &[nx])?
    } else {
        grid_from(dim, &[lx, ly], &[nx, ny])?
    };
    let body = &bytes[48..];
    if body.len() != 8 * grid.len() {
        return Err(bad("binary snapshot length does not match its header"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Snapshot {
        field: Field::from_vec(&grid, values)?,
        grid,
        t,
    })
}

/// Pretty-printed JSON.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
