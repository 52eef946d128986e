//! Binary checkpoint: `TRGLCKPT`, a little-endian `u32` version, a
//! length-prefixed JSON header (partition spec and run id), then every
//! parameter as name, shape and raw little-endian `f64` data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_partition, NetworkPartition, PartitionSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TRGLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: PartitionSpec,
    run_id: String,
}

/// A decoded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub run_id: String,
    pub network: NetworkPartition,
}

pub fn encode_checkpoint(network: &NetworkPartition, run_id: &str) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        spec: network.spec.clone(),
        run_id: run_id.to_string(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let params = network.named_params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length does not fit in memory".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = r.len()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut network = build_partition(&header.spec)?;
    let count = r.u32()? as usize;
    let mut params = network.named_params_mut();
    if count != params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} parameters, the spec implies {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        if name != p.name {
            return Err(Error::Format(format!("expected parameter {}, found {name}", p.name)));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        if shape != p.value.shape() {
            return Err(Error::Format(format!(
                "parameter {name} has shape {shape:?}, expected {:?}",
                p.value.shape()
            )));
        }
        for v in p.value.data_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
    }
    drop(params);
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        run_id: header.run_id,
        network,
    })
}

pub fn save_checkpoint(path: &Path, network: &NetworkPartition, run_id: &str) -> Result<()> {
    let bytes = encode_checkpoint(network, run_id)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
