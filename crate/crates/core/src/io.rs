//! On-disk formats.
//!
//! Snapshots and field dumps share one container: a single line of JSON
//! (the header, terminated by `\n`) followed by little-endian `f64`
//! payload. A snapshot stores every scalar field of a [`SpectralState`] as
//! an `nr × nz` block (row-major, `idx = j·nz + i`) in the order listed in
//! the header's `fields`. A field dump stores the assembled physical fields
//! on `(θ, r, z)` with the axis coordinates in the header.
//!
//! The diagnostics CSV has one row per recorded interval with columns
//! `t, E_p, calE_p, D, lead_L3_U, lead_L3_xi, div_max, u_L2, eta_L2,
//! u_L5_acc, varpi_1, …, varpi_K`.

use crate::assembly::Assembled;
use crate::grid::{Grid, GridSpec, ScalarField};
use crate::state::{DiagnosticsRecord, LeadField, ModeField, ModeState, SpectralState};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const SNAPSHOT_FORMAT: &str = "bmodes-snapshot";
pub const DUMP_FORMAT: &str = "bmodes-fields";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: {0}")]
    Header(String),
    #[error("payload holds {got} values, header implies {expected}")]
    Payload { expected: usize, got: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub grid: GridSpec,
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub fields: Vec<String>,
}

fn mode_field_name(k: usize, f: ModeField) -> String {
    format!("{}_{k}", f.name())
}

/// Field names of a snapshot of truncation `k` in storage order.
pub fn snapshot_field_names(k: usize) -> Vec<String> {
    let mut v: Vec<String> = LeadField::ALL
        .iter()
        .map(|f| f.name().to_string())
        .collect();
    for kk in 1..=k {
        v.extend(ModeField::ALL.iter().map(|&f| mode_field_name(kk, f)));
    }
    v
}

fn state_fields(s: &SpectralState) -> Vec<&ScalarField> {
    let mut v: Vec<&ScalarField> = LeadField::ALL.iter().map(|&f| s.lead.field(f)).collect();
    for m in &s.modes {
        v.extend(ModeField::ALL.iter().map(|&f| m.field(f)));
    }
    v
}

fn write_payload(w: &mut impl Write, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_payload(r: &mut impl Read, expected: usize) -> Result<Vec<f64>, IoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|source| IoError::Io {
        path: "<payload>".into(),
        source,
    })?;
    if bytes.len() != 8 * expected {
        return Err(IoError::Payload {
            expected,
            got: bytes.len() / 8,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_snapshot_to(w: &mut impl Write, s: &SpectralState) -> std::io::Result<()> {
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        version: FORMAT_VERSION,
        grid: s.grid.spec(),
        n: s.n,
        k: s.k_trunc,
        t: s.t,
        fields: snapshot_field_names(s.modes.len()),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for f in state_fields(s) {
        write_payload(w, f.values.iter().copied())?;
    }
    Ok(())
}

pub fn read_snapshot_from(r: impl Read) -> Result<SpectralState, IoError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|source| IoError::Io {
        path: "<header>".into(),
        source,
    })?;
    let h: SnapshotHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| IoError::Header(e.to_string()))?;
    if h.format != SNAPSHOT_FORMAT || h.version != FORMAT_VERSION {
        return Err(IoError::Header(format!(
            "unsupported format {} v{}",
            h.format, h.version
        )));
    }
    if h.fields != snapshot_field_names(h.k) {
        return Err(IoError::Header("field list does not match K".into()));
    }
    let grid = Grid::from_spec(h.grid).map_err(|e| IoError::Header(e.to_string()))?;
    let block = grid.len();
    let data = read_payload(&mut r, block * h.fields.len())?;
    let mut s = SpectralState::zeros(&grid, h.n, h.k);
    s.t = h.t;
    let mut chunks = data.chunks_exact(block);
    for f in LeadField::ALL {
        s.lead.field_mut(f).values = chunks.next().expect("sized payload").to_vec();
    }
    for m in s.modes.iter_mut() {
        fill_mode(m, &mut chunks);
    }
    Ok(s)
}

fn fill_mode<'a>(m: &mut ModeState, chunks: &mut impl Iterator<Item = &'a [f64]>) {
    for f in ModeField::ALL {
        m.field_mut(f).values = chunks.next().expect("sized payload").to_vec();
    }
}

pub fn write_snapshot(path: &Path, s: &SpectralState) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_snapshot_to(&mut w, s).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_snapshot(path: &Path) -> Result<SpectralState, IoError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_snapshot_from(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub t: f64,
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    /// payload order: field, then `θ`, then `r`, then `z`
    pub fields: Vec<String>,
}

pub const DUMP_FIELDS: [&str; 6] = ["u_r", "u_theta", "u_z", "pi", "eta", "rho"];

/// Write assembled fields at time `t` on the grid `g`.
pub fn write_field_dump(path: &Path, g: &Grid, a: &Assembled, t: f64) -> Result<(), IoError> {
    let header = DumpHeader {
        format: DUMP_FORMAT.into(),
        version: FORMAT_VERSION,
        t,
        theta: a.thetas.clone(),
        r: g.r().to_vec(),
        z: g.z().to_vec(),
        fields: DUMP_FIELDS.iter().map(|s| s.to_string()).collect(),
    };
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let body = |w: &mut std::io::BufWriter<std::fs::File>| -> std::io::Result<()> {
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for family in [&a.u_r, &a.u_theta, &a.u_z, &a.pi, &a.eta, &a.rho] {
            for f in family {
                write_payload(w, f.values.iter().copied())?;
            }
        }
        w.flush()
    };
    body(&mut w).map_err(io_err(path))
}

/// Read a field dump back as its header and flat payload.
pub fn read_field_dump(path: &Path) -> Result<(DumpHeader, Vec<f64>), IoError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io_err(path))?;
    let h: DumpHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| IoError::Header(e.to_string()))?;
    if h.format != DUMP_FORMAT {
        return Err(IoError::Header(format!("unsupported format {}", h.format)));
    }
    let n = h.fields.len() * h.theta.len() * h.r.len() * h.z.len();
    let data = read_payload(&mut r, n)?;
    Ok((h, data))
}

/// CSV column names for truncation `k`.
pub fn csv_columns(k: usize) -> Vec<String> {
    let mut v: Vec<String> = [
        "t",
        "E_p",
        "calE_p",
        "D",
        "lead_L3_U",
        "lead_L3_xi",
        "div_max",
        "u_L2",
        "eta_L2",
        "u_L5_acc",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend((1..=k).map(|kk| format!("varpi_{kk}")));
    v
}

pub fn write_csv_to(w: &mut impl Write, rec: &DiagnosticsRecord, k: usize) -> std::io::Result<()> {
    writeln!(w, "{}", csv_columns(k).join(","))?;
    for row in &rec.rows {
        let mut cells: Vec<String> = [
            row.t,
            row.e_p,
            row.cal_e_p,
            row.d,
            row.lead_l3_u,
            row.lead_l3_xi,
            row.div_max,
            row.u_l2,
            row.eta_l2,
            row.u_l5_acc,
        ]
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect();
        cells.extend(row.varpi.iter().map(|v| format!("{v:.17e}")));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, rec: &DiagnosticsRecord, k: usize) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv_to(&mut w, rec, k).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
