//! Artifact writers: CSV tables and the `NCQB` binary sample format.
//!
//! # Binary sample format
//!
//! ```text
//! offset  size  content
//! 0       4     magic b"NCQB"
//! 4       4     header length H, u32 little-endian
//! 8       H     UTF-8 JSON header (see BinaryHeader)
//! 8+H     8·S·N·D   positions, f64 little-endian, sample-major then slice then coordinate
//! ...     8·S       sample weights, f64 little-endian
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{BatteryReport, GridStudy, SweepResult};
use crate::model::{TimeGrid, Trajectory};
use crate::observables::NodeScan;
use crate::oracle::OracleReport;
use crate::sampling::SampleBatch;

pub const BINARY_MAGIC: &[u8; 4] = b"NCQB";
pub const BINARY_VERSION: u32 = 1;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Long-format sample table: `sample_id,slice,t,weight,x_0,…,x_{D−1}`.
pub fn write_samples_csv<W: Write>(w: W, batch: &SampleBatch) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = batch.trajectories.first().map_or(1, Trajectory::dim);
    let mut header = vec!["sample_id".to_string(), "slice".into(), "t".into(), "weight".into()];
    header.extend((0..dim).map(|d| format!("x_{d}")));
    out.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(header.len());
    for (s, (x, wt)) in batch.trajectories.iter().zip(&batch.weights).enumerate() {
        for i in 0..x.n_slices() {
            record.clear();
            record.push(s.to_string());
            record.push(i.to_string());
            record.push(x.grid().slice_time(i).to_string());
            record.push(wt.to_string());
            record.extend(x.slice(i).iter().map(f64::to_string));
            out.write_record(&record).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// JSON header of a binary sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub format_version: u32,
    pub n_samples: usize,
    pub grid: TimeGrid,
    pub dim: usize,
    pub method: String,
    pub seed: u64,
    pub config_digest: String,
}

pub fn write_samples_binary<W: Write>(mut w: W, batch: &SampleBatch, seed: u64, config_digest: &str) -> Result<()> {
    let first = batch
        .trajectories
        .first()
        .ok_or_else(|| Error::Config("cannot write an empty sample batch".into()))?;
    let header = BinaryHeader {
        format_version: BINARY_VERSION,
        n_samples: batch.len(),
        grid: *first.grid(),
        dim: first.dim(),
        method: serde_json::to_value(batch.method)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        seed,
        config_digest: config_digest.to_string(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for x in &batch.trajectories {
        for v in x.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for wt in &batch.weights {
        w.write_all(&wt.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Reads a binary sample file back into its header, trajectories and weights.
pub fn read_samples_binary<R: Read>(mut r: R) -> Result<(BinaryHeader, Vec<Trajectory>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Config("not an NCQB sample file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: BinaryHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Config(format!("bad NCQB header: {e}")))?;
    if header.format_version != BINARY_VERSION {
        return Err(Error::Unsupported(format!(
            "NCQB format version {} (this build reads {BINARY_VERSION})",
            header.format_version
        )));
    }
    let per = header.grid.n_slices() * header.dim;
    let values = read_f64s(&mut r, header.n_samples * per)?;
    let weights = read_f64s(&mut r, header.n_samples)?;
    let trajectories = values
        .chunks_exact(per.max(1))
        .take(header.n_samples)
        .map(|c| Trajectory::new(header.grid, header.dim, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((header, trajectories, weights))
}

/// `x,density,minimum`; `minimum` holds a detected node on the row nearest
/// to it and is empty elsewhere.
pub fn write_node_scan_csv<W: Write>(w: W, scan: &NodeScan) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "density", "minimum"]).map_err(csv_err)?;
    let mut marks = vec![None; scan.xs.len()];
    for &node in &scan.nodes {
        let j = scan
            .xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - node).abs().total_cmp(&(b.1 - node).abs()))
            .map(|(j, _)| j)
            .expect("non-empty scan");
        marks[j] = Some(node);
    }
    for ((x, rho), mark) in scan.xs.iter().zip(&scan.density).zip(&marks) {
        let m = mark.map(|v| v.to_string()).unwrap_or_default();
        out.write_record([x.to_string(), rho.to_string(), m]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `m_delta,estimate,std_error,n_samples,ess,deviation,predicted_deviation`.
pub fn write_sweep_csv<W: Write>(w: W, sweep: &SweepResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["m_delta", "estimate", "std_error", "n_samples", "ess", "deviation", "predicted_deviation"])
        .map_err(csv_err)?;
    for r in &sweep.rows {
        out.write_record([
            r.m_delta.to_string(),
            r.estimate.to_string(),
            r.std_error.to_string(),
            r.n_samples.to_string(),
            r.ess.to_string(),
            r.deviation.to_string(),
            opt(r.predicted_deviation),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `n_slices,dt,estimate,std_error,classical,predicted`.
pub fn write_grid_csv<W: Write>(w: W, study: &GridStudy) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n_slices", "dt", "estimate", "std_error", "classical", "predicted"])
        .map_err(csv_err)?;
    for r in &study.rows {
        out.write_record([
            r.n_slices.to_string(),
            r.dt.to_string(),
            r.estimate.to_string(),
            r.std_error.to_string(),
            r.classical.to_string(),
            opt(r.predicted),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `id,expected,observed,tolerance,pass,description`.
pub fn write_battery_csv<W: Write>(w: W, report: &BatteryReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "expected", "observed", "tolerance", "pass", "description"])
        .map_err(csv_err)?;
    for r in &report.rows {
        out.write_record([
            r.id.clone(),
            r.expected.to_string(),
            r.observed.to_string(),
            r.tolerance.to_string(),
            r.pass.to_string(),
            r.description.clone(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Oracle rows with the JSON report's columns.
pub fn write_oracle_csv<W: Write>(w: W, reports: &[OracleReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
