//! Binary checkpoint container for named tensors.
//!
//! Layout, all integers 64-bit little-endian:
//!
//! ```text
//! magic   "QA4IE-CKPT-1" (12 bytes)
//! count   u64                          number of records
//! record  name_len u64, name bytes (UTF-8),
//!         rank u64, dims u64 * rank,
//!         data f64 * prod(dims)        row-major, little-endian
//! ```
//!
//! Round-trips are bit-exact.

use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 12] = b"QA4IE-CKPT-1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {MAGIC:?}")]
    BadMagic,
    #[error("record {index}: invalid UTF-8 name")]
    BadName { index: usize },
    #[error("record {name}: declared {declared} values, data truncated")]
    Truncated { name: String, declared: usize },
    #[error("record {name}: non-finite value at index {index}")]
    NonFinite { name: String, index: usize },
}

pub fn save(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 12];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = read_u64(&mut r)? as usize;
    let mut out = BTreeMap::new();
    for index in 0..count {
        let name_len = read_u64(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name =
            String::from_utf8(name_bytes).map_err(|_| CheckpointError::BadName { index })?;
        let rank = read_u64(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for i in 0..numel {
            r.read_exact(&mut buf).map_err(|_| CheckpointError::Truncated {
                name: name.clone(),
                declared: numel,
            })?;
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(CheckpointError::NonFinite {
                    name: name.clone(),
                    index: i,
                });
            }
            data.push(v);
        }
        let tensor = Tensor::from_vec(shape, data).expect("validated above");
        out.insert(name, tensor);
    }
    Ok(out)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, std::io::Error> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
