//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `ROMAPHG1`, a little-endian `u32` header length,
//! a JSON header `{config, step, table_len, network_len}`, then six raw
//! little-endian `f64` arrays: tables, network, table first moments, table
//! second moments, network first moments, network second moments.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::HashGridModel;
use super::ModelConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ROMAPHG1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    table_len: usize,
    network_len: usize,
}

fn write_array(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(8 * 4096);
    for chunk in values.chunks(4096) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array(r: &mut impl Read, out: &mut [f64]) -> std::io::Result<()> {
    let mut buf = vec![0u8; 8 * 4096];
    for chunk in out.chunks_mut(4096) {
        let bytes = &mut buf[..chunk.len() * 8];
        r.read_exact(bytes)?;
        for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
    }
    Ok(())
}

pub fn write_checkpoint(model: &HashGridModel, w: &mut impl Write) -> std::io::Result<()> {
    let header = Header {
        config: model.config().clone(),
        step: model.step,
        table_len: model.tables.len(),
        network_len: model.network.len(),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for block in [
        &model.tables,
        &model.network,
        &model.m_tables,
        &model.v_tables,
        &model.m_network,
        &model.v_network,
    ] {
        write_array(w, block)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<HashGridModel> {
    let bad = |m: &str| Error::parse("checkpoint", "header", m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("wrong magic"));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(&e.to_string()))?;
    let mut model = HashGridModel::zeroed(header.config)?;
    if model.tables.len() != header.table_len || model.network.len() != header.network_len {
        return Err(bad("parameter counts disagree with config"));
    }
    model.step = header.step;
    let HashGridModel {
        tables,
        network,
        m_tables,
        v_tables,
        m_network,
        v_network,
        ..
    } = &mut model;
    for block in [tables, network, m_tables, v_tables, m_network, v_network] {
        read_array(r, block).map_err(|_| Error::parse("checkpoint", "parameters", "truncated data"))?;
    }
    Ok(model)
}

pub fn save_checkpoint(model: &HashGridModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<HashGridModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig {
            table_size_log2: 10,
            hidden_layers: 2,
            ..ModelConfig::default()
        };
        let mut model = HashGridModel::new(cfg, 4).unwrap();
        model.step = 17;
        model.m_network[2] = 0.125;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), model);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let model = HashGridModel::new(
            ModelConfig {
                table_size_log2: 8,
                ..ModelConfig::default()
            },
            0,
        )
        .unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&model, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(&mut bytes.as_slice()).is_err());
        assert!(read_checkpoint(&mut &b"NOTMAGIC"[..]).is_err());
    }
}
