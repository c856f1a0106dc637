//! Binary checkpoint format for a [`ParamStore`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "TGCK"
//! version u32      currently 1
//! dtype   u8       1 = f32, 2 = f64
//! step    u64      optimizer step count
//! count   u32      number of parameters
//! then per parameter, in sorted name order:
//!   name_len u16, name bytes, rank u8, dims rank*u32,
//!   value numel*E, adam_m numel*E, adam_v numel*E
//! ```
//!
//! Saving the same store twice produces identical bytes; the sorted order
//! comes from the store itself.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::element::{DType, Element};
use super::params::ParamStore;
use super::tensor::Tensor;

const MAGIC: [u8; 4] = *b"TGCK";
const VERSION: u32 = 1;
const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;
const MAX_NUMEL: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },

    #[error("checkpoint dtype is {found}, expected {expected}")]
    DTypeMismatch { found: DType, expected: DType },

    #[error("malformed checkpoint: {0}")]
    Format(String),
}

pub fn save<E: Element>(store: &ParamStore<E>, path: &Path) -> Result<(), CheckpointError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[E::DTYPE.tag()])?;
    w.write_all(&store.step().to_le_bytes())?;
    let count = u32::try_from(store.len())
        .map_err(|_| CheckpointError::Format("too many parameters".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for name in store.names().map(str::to_owned).collect::<Vec<_>>() {
        let value = store.value(&name).expect("name from this store");
        let (m, v) = store.moments(&name).expect("name from this store");
        let name_bytes = name.as_bytes();
        if name_bytes.len() > MAX_NAME_LEN {
            return Err(CheckpointError::Format(format!(
                "parameter name too long ({} bytes)",
                name_bytes.len()
            )));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        let shape = value.shape();
        if shape.len() > MAX_RANK {
            return Err(CheckpointError::Format(format!(
                "rank {} exceeds limit {MAX_RANK}",
                shape.len()
            )));
        }
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            let d = u32::try_from(d)
                .map_err(|_| CheckpointError::Format("dimension too large".into()))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for t in [value, m, v] {
            for &x in t.data() {
                x.write_le(&mut w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads only the header dtype, so callers can dispatch before a typed load.
pub fn peek_dtype(path: &Path) -> Result<DType, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    DType::from_tag(tag[0])
        .ok_or_else(|| CheckpointError::Format(format!("unknown dtype tag {}", tag[0])))
}

pub fn load<E: Element>(path: &Path) -> Result<ParamStore<E>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let dtype = DType::from_tag(tag[0])
        .ok_or_else(|| CheckpointError::Format(format!("unknown dtype tag {}", tag[0])))?;
    if dtype != E::DTYPE {
        return Err(CheckpointError::DTypeMismatch {
            found: dtype,
            expected: E::DTYPE,
        });
    }
    let mut step_bytes = [0u8; 8];
    r.read_exact(&mut step_bytes)?;
    let step = u64::from_le_bytes(step_bytes);
    let count = read_u32(&mut r)? as usize;

    let mut store = ParamStore::new();
    let mut prev_name: Option<String> = None;
    for _ in 0..count {
        let mut len_bytes = [0u8; 2];
        r.read_exact(&mut len_bytes)?;
        let name_len = u16::from_le_bytes(len_bytes) as usize;
        if name_len > MAX_NAME_LEN {
            return Err(CheckpointError::Format("parameter name too long".into()));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| CheckpointError::Format("parameter name is not utf-8".into()))?;
        if let Some(prev) = &prev_name {
            if *prev >= name {
                return Err(CheckpointError::Format(format!(
                    "parameter names out of order: {prev:?} then {name:?}"
                )));
            }
        }
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let rank = rank[0] as usize;
        if rank > MAX_RANK {
            return Err(CheckpointError::Format(format!("rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = read_u32(&mut r)? as usize;
            numel = numel
                .checked_mul(d)
                .filter(|&n| n <= MAX_NUMEL)
                .ok_or_else(|| CheckpointError::Format("tensor too large".into()))?;
            shape.push(d);
        }
        let mut tensors = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(E::read_le(&mut r)?);
            }
            let t = Tensor::from_vec(&shape, data)
                .map_err(|e| CheckpointError::Format(e.to_string()))?;
            tensors.push(t);
        }
        let v = tensors.pop().expect("three tensors");
        let m = tensors.pop().expect("three tensors");
        let value = tensors.pop().expect("three tensors");
        store
            .insert_with_moments(&name, value, m, v)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        prev_name = Some(name);
    }
    // Trailing bytes mean the file was not produced by this writer.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => {}
        _ => return Err(CheckpointError::Format("trailing bytes".into())),
    }
    store.set_step(step);
    Ok(store)
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
