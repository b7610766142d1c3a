//! Binary checkpoints of the trainable parameters.
//!
//! Layout (little endian): 8-byte magic, `u32` version, 32-byte config
//! fingerprint, `u32` array count, then per array `u32` name length, name,
//! `u32` rank, `u64` dims and `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::params::ParamSnapshot;

const MAGIC: &[u8; 8] = b"DCKPT\0\0\0";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, fingerprint: &[u8; 32], snapshot: &ParamSnapshot) -> Result<()> {
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(fingerprint).map_err(io)?;
    w.write_all(&(snapshot.arrays.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, dims, data) in &snapshot.arrays {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(dims.len() as u32).to_le_bytes()).map_err(io)?;
        for d in dims {
            w.write_all(&(*d as u64).to_le_bytes()).map_err(io)?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<([u8; 32], ParamSnapshot)> {
    if &read_exact::<_, 8>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let fingerprint = read_exact::<_, 32>(&mut r)?;
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut arrays = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rank = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let dims = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(read_exact(&mut r)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| Ok(f64::from_le_bytes(read_exact(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        arrays.push((name, dims, data));
    }
    Ok((fingerprint, ParamSnapshot { arrays }))
}

fn fingerprint_bytes(model: &Forecaster) -> [u8; 32] {
    let mut out = [0u8; 32];
    hex::decode_to_slice(model.config().fingerprint(), &mut out).expect("sha256 hex");
    out
}

pub fn save(model: &Forecaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, &fingerprint_bytes(model), &model.params().snapshot()?)?;
    w.flush().map_err(|e| Error::file(path, e))
}

/// Loads parameters into `model`, refusing checkpoints written for a
/// different configuration.
pub fn load(model: &Forecaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let (fingerprint, snapshot) = read_checkpoint(std::io::BufReader::new(file))?;
    if fingerprint != fingerprint_bytes(model) {
        return Err(Error::Checkpoint(format!(
            "{} was written for a different configuration",
            path.display()
        )));
    }
    model.params().restore(&snapshot)
}
