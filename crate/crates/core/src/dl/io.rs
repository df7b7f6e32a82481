//! Binary weight container.
//!
//! Layout, little-endian: magic `TLNW`, `u32` schema version, `u32` header
//! length, header JSON (config, classes, layer list, embedding rows), `u32`
//! tensor count, then per tensor a `u32` name length, UTF-8 name, `u32` rank,
//! `u64` dims and `f32` values.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::network::{LayerSpec, Network};
use super::{DlError, NetworkConfig, Result};
use crate::corpus::Label;

pub const MAGIC: &[u8; 4] = b"TLNW";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    classes: Vec<Label>,
    layers: Vec<LayerSpec>,
    embedding_rows: usize,
}

fn fmt_err(e: impl std::fmt::Display) -> DlError {
    DlError::Format(e.to_string())
}

pub fn write_network<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let header = Header {
        config: net.config.clone(),
        classes: net.classes.clone(),
        layers: net.specs().to_vec(),
        embedding_rows: net.embedding_rows(),
    };
    let json = serde_json::to_vec(&header).map_err(fmt_err)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * net.parameter_count());
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(SCHEMA_VERSION).map_err(fmt_err)?;
    buf.write_u32::<LittleEndian>(json.len() as u32).map_err(fmt_err)?;
    buf.extend_from_slice(&json);
    buf.write_u32::<LittleEndian>(net.params().len() as u32).map_err(fmt_err)?;
    for t in net.params() {
        buf.write_u32::<LittleEndian>(t.name.len() as u32).map_err(fmt_err)?;
        buf.extend_from_slice(t.name.as_bytes());
        buf.write_u32::<LittleEndian>(t.shape.len() as u32).map_err(fmt_err)?;
        for &d in &t.shape {
            buf.write_u64::<LittleEndian>(d as u64).map_err(fmt_err)?;
        }
        for &v in &t.data {
            buf.write_f32::<LittleEndian>(v as f32).map_err(fmt_err)?;
        }
    }
    w.write_all(&buf).map_err(fmt_err)
}

pub fn read_network<R: Read>(mut r: R) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(fmt_err)?;
    if &magic != MAGIC {
        return Err(DlError::Format("bad magic bytes".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(fmt_err)?;
    if version != SCHEMA_VERSION {
        return Err(DlError::Format(format!("unsupported schema version {version}")));
    }
    let len = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(fmt_err)?;
    let h: Header = serde_json::from_slice(&json).map_err(fmt_err)?;
    let mut net = Network::from_layers(&h.config, h.classes, h.embedding_rows, h.layers, |_| None)?;
    let count = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    if count != net.params().len() {
        return Err(DlError::Format(format!("{count} tensors, expected {}", net.params().len())));
    }
    for t in net.params_mut() {
        let n = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name).map_err(fmt_err)?;
        let rank = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
        let shape = (0..rank)
            .map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<usize>>>()
            .map_err(fmt_err)?;
        if name != t.name.as_bytes() || shape != t.shape {
            return Err(DlError::Format(format!(
                "tensor {:?} {:?} does not match expected {} {:?}",
                String::from_utf8_lossy(&name),
                shape,
                t.name,
                t.shape
            )));
        }
        for v in t.data.iter_mut() {
            let x = r.read_f32::<LittleEndian>().map_err(fmt_err)?;
            if !x.is_finite() {
                return Err(DlError::Format(format!("non-finite value in {}", t.name)));
            }
            *v = x as f64;
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(fmt_err)?;
    if !rest.is_empty() {
        return Err(DlError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(net)
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let io = |source| DlError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    write_network(net, &mut bytes)?;
    std::fs::write(path, bytes).map_err(io)
}

pub fn load_network(path: &Path) -> Result<Network> {
    let f = std::fs::File::open(path).map_err(|source| DlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_network(std::io::BufReader::new(f))
}
