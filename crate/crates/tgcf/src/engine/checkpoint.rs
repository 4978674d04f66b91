//! Bit-exact model checkpoints.
//!
//! Layout: magic `TGCFCKPT`, format version (u32 LE), a length-prefixed JSON
//! header (config echo, seed, step, shapes), then every parameter tensor and
//! its two Adam moment arrays as shape-prefixed little-endian f64 blocks, in
//! a fixed order: user table, item table, the seven feature tables,
//! projection, bias.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FeatureParams, ModelConfig, ModelState, Param};
use crate::error::{Result, TgcfError};

const MAGIC: &[u8; 8] = b"TGCFCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    step: u64,
    n_users: usize,
    n_items: usize,
    vocab_sizes: [usize; 7],
    has_features: bool,
}

fn write_array(w: &mut impl Write, a: &Array2<f64>) -> Result<()> {
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for x in a.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_array(r: &mut impl Read) -> Result<Array2<f64>> {
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let cols = u64::from_le_bytes(buf8) as usize;
    let mut data = vec![0f64; rows * cols];
    for x in data.iter_mut() {
        r.read_exact(&mut buf8)?;
        *x = f64::from_le_bytes(buf8);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| TgcfError::Checkpoint(format!("bad array shape: {e}")))
}

fn write_param(w: &mut impl Write, p: &Param) -> Result<()> {
    write_array(w, &p.value)?;
    write_array(w, &p.m)?;
    write_array(w, &p.v)
}

fn read_param(r: &mut impl Read) -> Result<Param> {
    Ok(Param {
        value: read_array(r)?,
        m: read_array(r)?,
        v: read_array(r)?,
    })
}

/// Writes a checkpoint sufficient for bit-exact resume.
pub fn save_checkpoint(
    path: &Path,
    state: &ModelState,
    config: &ModelConfig,
    seed: u64,
    vocab_sizes: &[usize; 7],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = Header {
        config: config.clone(),
        seed,
        step: state.step,
        n_users: state.n_users(),
        n_items: state.n_items(),
        vocab_sizes: *vocab_sizes,
        has_features: state.features.is_some(),
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| TgcfError::Checkpoint(format!("header encode failed: {e}")))?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    write_param(&mut w, &state.user_table)?;
    write_param(&mut w, &state.item_table)?;
    if let Some(f) = &state.features {
        for t in &f.tables {
            write_param(&mut w, t)?;
        }
        write_param(&mut w, &f.projection)?;
        write_param(&mut w, &f.bias)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(ModelState, ModelConfig, u64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TgcfError::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(TgcfError::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let json_len = u64::from_le_bytes(len8) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| TgcfError::Checkpoint(format!("header decode failed: {e}")))?;
    let user_table = read_param(&mut r)?;
    let item_table = read_param(&mut r)?;
    let features = if header.has_features {
        let tables = (0..7).map(|_| read_param(&mut r)).collect::<Result<Vec<_>>>()?;
        let projection = read_param(&mut r)?;
        let bias = read_param(&mut r)?;
        Some(FeatureParams { tables, projection, bias })
    } else {
        None
    };
    let state = ModelState {
        user_table,
        item_table,
        features,
        step: header.step,
    };
    if state.n_users() != header.n_users || state.n_items() != header.n_items {
        return Err(TgcfError::Checkpoint("table shapes disagree with header".into()));
    }
    Ok((state, header.config, header.seed))
}
