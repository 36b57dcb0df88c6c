//! Compact binary dataset files and a flat CSV export.
//!
//! Layout: 8-byte magic, u32 header length, JSON header, then fixed-width
//! little-endian records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetConfig, FeatureError, NormStats, Sample, TEMPORAL_WIDTH};
use crate::orderflow::Pair;

const MAGIC: &[u8; 8] = b"TMXDSET1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: String,
    pub config: DatasetConfig,
    pub m: usize,
    pub count: usize,
    /// Present when the records are already standardized.
    pub norm: Option<NormStats>,
    /// Free-form provenance, e.g. the source stream's config hash.
    pub provenance: Vec<String>,
}

fn fmt_err(msg: impl Into<String>) -> FeatureError {
    FeatureError::Format(msg.into())
}

pub fn write_dataset<W: Write>(w: W, header: &DatasetHeader, samples: &[Sample]) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(w);
    if header.count != samples.len() {
        return Err(fmt_err("header count does not match sample count"));
    }
    let json = serde_json::to_vec(header).map_err(|e| fmt_err(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for s in samples {
        if s.temporal.len() != header.m || s.autoregressive.len() + 1 != header.m || s.ar_masked.len() + 1 != header.m {
            return Err(fmt_err("sample window length differs from header m"));
        }
        w.write_all(&s.anchor_timestamp.to_le_bytes())?;
        w.write_all(&s.anchor_seq.to_le_bytes())?;
        w.write_all(&[s.pair.category(), s.hour])?;
        w.write_all(&s.target.to_le_bytes())?;
        w.write_all(&s.ref_price.to_le_bytes())?;
        for row in &s.temporal {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &s.autoregressive {
            w.write_all(&v.to_le_bytes())?;
        }
        let masks: Vec<u8> = s.ar_masked.iter().map(|&b| b as u8).collect();
        w.write_all(&masks)?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], FeatureError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, FeatureError> {
    Ok(f64::from_le_bytes(read_array::<8, R>(r)?))
}

pub fn read_dataset<R: Read>(r: R) -> Result<(DatasetHeader, Vec<Sample>), FeatureError> {
    let mut r = BufReader::new(r);
    let magic = read_array::<8, _>(&mut r)?;
    if &magic != MAGIC {
        return Err(fmt_err("not a dataset file (bad magic)"));
    }
    let len = u32::from_le_bytes(read_array::<4, _>(&mut r)?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: DatasetHeader = serde_json::from_slice(&json).map_err(|e| fmt_err(format!("bad header: {e}")))?;
    let m = header.m;
    if m < 2 {
        return Err(fmt_err("header m must be >= 2"));
    }
    let mut samples = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let anchor_timestamp = i64::from_le_bytes(read_array::<8, _>(&mut r)?);
        let anchor_seq = u64::from_le_bytes(read_array::<8, _>(&mut r)?);
        let [pair_code, hour] = read_array::<2, _>(&mut r)?;
        let pair = Pair::from_index(pair_code as usize - 1).ok_or_else(|| fmt_err("bad pair code"))?;
        let target = i64::from_le_bytes(read_array::<8, _>(&mut r)?);
        let ref_price = read_f64(&mut r)?;
        let mut temporal = Vec::with_capacity(m);
        for _ in 0..m {
            let mut row = [0.0; TEMPORAL_WIDTH];
            for v in row.iter_mut() {
                *v = read_f64(&mut r)?;
            }
            temporal.push(row);
        }
        let autoregressive = (0..m - 1).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let mut masks = vec![0u8; m - 1];
        r.read_exact(&mut masks)?;
        samples.push(Sample {
            anchor_timestamp,
            anchor_seq,
            pair,
            hour,
            temporal,
            autoregressive,
            ar_masked: masks.into_iter().map(|b| b != 0).collect(),
            target,
            ref_price,
        });
    }
    Ok((header, samples))
}

pub fn save_dataset(path: &Path, header: &DatasetHeader, samples: &[Sample]) -> Result<(), FeatureError> {
    write_dataset(File::create(path)?, header, samples)
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Sample>), FeatureError> {
    read_dataset(File::open(path)?)
}

/// One row per sample with every window value in its own column.
pub fn write_csv<W: Write>(w: W, samples: &[Sample]) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(w);
    let m = samples.first().map_or(0, |s| s.temporal.len());
    let mut cols = vec!["anchor_timestamp".to_string(), "pair".into(), "hour".into(), "target".into(), "ref_price".into()];
    for g in 0..m {
        for name in ["dt_ms", "size", "type", "side", "price"] {
            cols.push(format!("{name}_{g}"));
        }
    }
    for g in 0..m.saturating_sub(1) {
        cols.push(format!("y_{g}"));
        cols.push(format!("y_mask_{g}"));
    }
    writeln!(w, "{}", cols.join(","))?;
    for s in samples {
        let mut fields = vec![
            s.anchor_timestamp.to_string(),
            s.pair.wire_name().to_string(),
            s.hour.to_string(),
            s.target.to_string(),
            s.ref_price.to_string(),
        ];
        for row in &s.temporal {
            fields.extend(row.iter().map(|v| v.to_string()));
        }
        for (v, m) in s.autoregressive.iter().zip(&s.ar_masked) {
            fields.push(v.to_string());
            fields.push((*m as u8).to_string());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}
