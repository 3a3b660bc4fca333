//! CSV and JSON artifacts. Floats are written with Rust's shortest
//! round-trip formatting, so identical results give identical bytes.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::ModelKind;
use crate::error::{Error, Result};
use crate::experiment::{SweepResult, SweepRow};
use crate::mp::GridPoint;
use crate::spectrum::SpectralDistribution;

/// CSV writer that emits `header` even when no rows follow.
fn csv_writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "n",
    "k",
    "m",
    "N",
    "c",
    "replica",
    "ks_mp",
    "levy_mp",
    "levy_models",
    "m1",
    "m2",
    "m3",
    "m4_emp",
    "ms",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv_writer(out, &SWEEP_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_sweep_json<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, result)?;
    Ok(())
}

/// Header of an eigenvalue dump, stored as `# key=value` comment lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenMeta {
    pub n: u64,
    pub k: u32,
    pub m: u64,
    #[serde(rename = "N")]
    pub ambient_dim: u64,
    pub model: ModelKind,
    pub seed: u64,
}

/// Eigenvalues of one or more replicas, each ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenDump {
    pub meta: Option<EigenMeta>,
    pub replicas: Vec<(u32, Vec<f64>)>,
}

impl EigenDump {
    /// Ambient dimension for rebuilding ESDs: the header value, or the
    /// largest replica size when there is no header.
    pub fn ambient_dim(&self) -> u64 {
        match &self.meta {
            Some(meta) => meta.ambient_dim,
            None => self
                .replicas
                .iter()
                .map(|(_, e)| e.len() as u64)
                .max()
                .unwrap_or(0),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EigenRecord {
    replica: u32,
    index: usize,
    eigenvalue: f64,
}

pub fn write_eigen_csv<W: Write>(dump: &EigenDump, mut out: W) -> Result<()> {
    if let Some(meta) = &dump.meta {
        writeln!(out, "# n={}", meta.n)?;
        writeln!(out, "# k={}", meta.k)?;
        writeln!(out, "# m={}", meta.m)?;
        writeln!(out, "# N={}", meta.ambient_dim)?;
        writeln!(out, "# model={}", meta.model.as_str())?;
        writeln!(out, "# seed={}", meta.seed)?;
    }
    let mut w = csv_writer(out, &["replica", "index", "eigenvalue"])?;
    for (replica, eigs) in &dump.replicas {
        for (index, &eigenvalue) in eigs.iter().enumerate() {
            w.serialize(EigenRecord {
                replica: *replica,
                index,
                eigenvalue,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_eigen_csv<R: Read>(input: R) -> Result<EigenDump> {
    let mut reader = BufReader::new(input);
    let mut fields = std::collections::BTreeMap::new();
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        match line.trim().strip_prefix('#') {
            Some(comment) => {
                if let Some((key, value)) = comment.trim().split_once('=') {
                    fields.insert(key.trim().to_string(), value.trim().to_string());
                }
            }
            None => body.push_str(&line),
        }
        line.clear();
    }
    let meta = if fields.is_empty() {
        None
    } else {
        let get = |key: &str| -> Result<&String> {
            fields
                .get(key)
                .ok_or_else(|| Error::Parse(format!("eigenvalue header lacks `{key}`")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|e| Error::Parse(format!("header `{key}`: {e}")))
        };
        let model = match get("model")?.as_str() {
            "correlation" => ModelKind::Correlation,
            "covariance" => ModelKind::Covariance,
            other => return Err(Error::Parse(format!("unknown model `{other}`"))),
        };
        Some(EigenMeta {
            n: num("n")?,
            k: num("k")? as u32,
            m: num("m")?,
            ambient_dim: num("N")?,
            model,
            seed: num("seed")?,
        })
    };

    let mut replicas: Vec<(u32, Vec<f64>)> = Vec::new();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    for record in r.deserialize::<EigenRecord>() {
        let record = record?;
        if replicas.last().is_none_or(|(id, _)| *id != record.replica) {
            replicas.push((record.replica, Vec::new()));
        }
        let eigs = &mut replicas.last_mut().unwrap().1;
        if record.index != eigs.len() {
            return Err(Error::Parse(format!(
                "replica {} index {} out of sequence",
                record.replica, record.index
            )));
        }
        eigs.push(record.eigenvalue);
    }
    for (_, eigs) in replicas.iter_mut() {
        eigs.sort_by(f64::total_cmp);
    }
    Ok(EigenDump { meta, replicas })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
    /// `count / (total * width)` with `total` the number of ambient
    /// eigenvalues, structural zeros included, so the bins integrate to the
    /// continuous mass.
    pub density_estimate: f64,
}

/// Histogram of the stored atoms of several ESDs over `[lo, hi]`. Implied
/// zeros are not binned but count toward the normalization.
pub fn histogram(
    spectra: &[&SpectralDistribution],
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<Vec<HistogramBin>> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::InvalidParam(format!(
            "histogram needs bins >= 1 and lo < hi, got {bins} bins on [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for s in spectra {
        total += s.ambient_dim();
        for &a in s.ambient_atoms() {
            if a < lo || a > hi {
                continue;
            }
            let idx = (((a - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let bin_left = lo + width * i as f64;
            let bin_right = if i + 1 == bins {
                hi
            } else {
                lo + width * (i + 1) as f64
            };
            HistogramBin {
                bin_left,
                bin_right,
                count,
                density_estimate: count as f64 / (total as f64 * (bin_right - bin_left)),
            }
        })
        .collect())
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv_writer(out, &["bin_left", "bin_right", "count", "density_estimate"])?;
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mp_grid_csv<W: Write>(grid: &[GridPoint], out: W) -> Result<()> {
    let mut w = csv_writer(out, &["x", "density", "cdf"])?;
    for g in grid {
        w.serialize((g.x, g.density, g.cdf))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub replica: u32,
    pub metric: String,
    pub value: f64,
}

pub fn write_distance_csv<W: Write>(records: &[DistanceRecord], out: W) -> Result<()> {
    let mut w = csv_writer(out, &["replica", "metric", "value"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
