//! Model checkpoints.
//!
//! Little-endian binary layout: magic, format version, a JSON metadata blob
//! (grid, architecture string, epoch), then named f64 tensors, then optimizer
//! moments so training can resume exactly where it stopped. All floats are
//! stored raw, so a save/load round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::optim::ParamStore;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"OTFSCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub m: usize,
    pub n: usize,
    pub bits_per_symbol: usize,
    pub epoch: usize,
    /// Opaque architecture fingerprint; load rejects a mismatch.
    pub arch: String,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
    pub adam_step: u64,
    pub adam_state: Vec<(String, Vec<f64>, Vec<f64>)>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::config(format!("checkpoint: {}", detail.into()))
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(bad("implausible string length"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
    String::from_utf8(buf).map_err(|_| bad("non-UTF-8 name"))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf).map_err(|_| bad("truncated tensor data"))?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let meta = serde_json::to_string(&ckpt.meta)?;
    write_str(&mut w, &meta)?;

    write_u32(&mut w, ckpt.params.len() as u32)?;
    for (name, entry) in ckpt.params.iter() {
        write_str(&mut w, name)?;
        write_u32(&mut w, entry.shape.len() as u32)?;
        for &d in &entry.shape {
            write_u32(&mut w, d as u32)?;
        }
        write_f64s(&mut w, &entry.values)?;
    }

    write_u64(&mut w, ckpt.adam_step)?;
    write_u32(&mut w, ckpt.adam_state.len() as u32)?;
    for (name, m, v) in &ckpt.adam_state {
        write_str(&mut w, name)?;
        write_u32(&mut w, m.len() as u32)?;
        write_f64s(&mut w, m)?;
        write_f64s(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated file"))?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic in {}", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}, expected {VERSION}")));
    }
    let meta: CheckpointMeta = serde_json::from_str(&read_str(&mut r)?)?;

    let tensor_count = read_u32(&mut r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..tensor_count {
        let name = read_str(&mut r)?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(bad(format!("tensor {name} implausibly large")));
        }
        let values = read_f64s(&mut r, n)?;
        params.insert(&name, &shape, values)?;
    }

    let adam_step = read_u64(&mut r)?;
    let adam_count = read_u32(&mut r)? as usize;
    let mut adam_state = Vec::with_capacity(adam_count);
    for _ in 0..adam_count {
        let name = read_str(&mut r)?;
        let n = read_u32(&mut r)? as usize;
        let m = read_f64s(&mut r, n)?;
        let v = read_f64s(&mut r, n)?;
        adam_state.push((name, m, v));
    }
    Ok(Checkpoint { meta, params, adam_step, adam_state })
}

/// Load and insist the stored grid and architecture match the caller's.
pub fn load_matching(path: &Path, m: usize, n: usize, arch: &str) -> Result<Checkpoint> {
    let ckpt = load(path)?;
    if ckpt.meta.m != m || ckpt.meta.n != n {
        return Err(bad(format!(
            "grid mismatch: file has {}x{}, expected {m}x{n}",
            ckpt.meta.m, ckpt.meta.n
        )));
    }
    if ckpt.meta.arch != arch {
        return Err(bad(format!(
            "architecture mismatch: file has '{}', expected '{arch}'",
            ckpt.meta.arch
        )));
    }
    Ok(ckpt)
}
