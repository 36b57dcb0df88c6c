//! Versioned binary checkpoints: magic, u32 header length, JSON header, then
//! the parameter, best-parameter and Adam moment vectors as little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{EpochLog, TrainState};
use super::{AdamState, Layout, NetConfig, NetError, Network};
use crate::features::NormStats;
use crate::mixtures::Family;

const MAGIC: &[u8; 8] = b"TMXCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: String,
    net_config: NetConfig,
    family: Family,
    n_params: usize,
    norm: Option<NormStats>,
    epoch: usize,
    best_val: Option<f64>,
    since_improvement: usize,
    finished: bool,
    adam: AdamState,
    history: Vec<EpochLog>,
    provenance: Vec<String>,
}

/// A training state with the normalization it was fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub norm: Option<NormStats>,
    pub provenance: Vec<String>,
}

impl Checkpoint {
    pub fn network(&self) -> Network {
        self.state.best_network()
    }
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn write_checkpoint<W: Write>(w: W, ck: &Checkpoint) -> Result<(), NetError> {
    let mut w = BufWriter::new(w);
    let st = &ck.state;
    let header = Header {
        version: env!("CARGO_PKG_VERSION").to_string(),
        net_config: st.network.config.clone(),
        family: st.network.family,
        n_params: st.network.params.len(),
        norm: ck.norm.clone(),
        epoch: st.epoch,
        best_val: st.best_val,
        since_improvement: st.since_improvement,
        finished: st.finished,
        adam: st.adam.clone(),
        history: st.history.clone(),
        provenance: ck.provenance.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    write_f64s(&mut w, &st.network.params)?;
    write_f64s(&mut w, &st.best_params)?;
    write_f64s(&mut w, &st.adam.m)?;
    write_f64s(&mut w, &st.adam.v)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint, NetError> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NetError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| NetError::Checkpoint(format!("bad header: {e}")))?;
    let layout = Layout::new(&h.net_config, h.family)?;
    if layout.total != h.n_params {
        return Err(NetError::Checkpoint("parameter count does not match config".into()));
    }
    let n = h.n_params;
    let params = read_f64s(&mut r, n)?;
    let best_params = read_f64s(&mut r, n)?;
    let mut adam = h.adam;
    adam.m = read_f64s(&mut r, n)?;
    adam.v = read_f64s(&mut r, n)?;
    let network = Network { config: h.net_config, family: h.family, layout, params };
    Ok(Checkpoint {
        state: TrainState {
            network,
            best_params,
            best_val: h.best_val,
            since_improvement: h.since_improvement,
            epoch: h.epoch,
            adam,
            history: h.history,
            finished: h.finished,
        },
        norm: h.norm,
        provenance: h.provenance,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), NetError> {
    write_checkpoint(File::create(path)?, ck)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    read_checkpoint(File::open(path)?)
}
