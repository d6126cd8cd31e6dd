//! Binary tensor container: magic `ZTEN1`, one dtype byte (0 = f32,
//! 1 = f64), one rank byte, little-endian u64 dims, then raw little-endian
//! data in row-major order. Metadata travels in JSON sidecars next to the
//! file when a producer needs it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NetError, Result};

const MAGIC: &[u8; 5] = b"ZTEN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

/// A tensor read back from disk: dims plus data upcast to f64 (the original
/// dtype is reported so callers can round-trip exactly).
#[derive(Debug, Clone)]
pub struct StoredTensor {
    pub dims: Vec<u64>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

impl StoredTensor {
    pub fn len(&self) -> usize {
        self.dims.iter().product::<u64>() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn write_f64(path: &Path, dims: &[u64], data: &[f64]) -> Result<()> {
    write_header_and(path, Dtype::F64, dims, data.len(), |w| {
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

/// Stores in 32-bit precision (checkpoint storage option).
pub fn write_f32(path: &Path, dims: &[u64], data: &[f64]) -> Result<()> {
    write_header_and(path, Dtype::F32, dims, data.len(), |w| {
        for v in data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    })
}

fn write_header_and(
    path: &Path,
    dtype: Dtype,
    dims: &[u64],
    len: usize,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let expected: u64 = dims.iter().product();
    if expected != len as u64 {
        return Err(NetError::Shape(format!(
            "dims {dims:?} expect {expected} elements, got {len}"
        )));
    }
    if dims.len() > u8::MAX as usize {
        return Err(NetError::Shape("rank exceeds u8".into()));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[if dtype == Dtype::F32 { 0u8 } else { 1u8 }])?;
    w.write_all(&[dims.len() as u8])?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<StoredTensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NetError::Checkpoint(format!(
            "{}: not a tensor container (bad magic)",
            path.display()
        )));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    let dtype = match head[0] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => {
            return Err(NetError::Checkpoint(format!("unknown dtype code {other}")));
        }
    };
    let rank = head[1] as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        dims.push(u64::from_le_bytes(b));
    }
    let n: u64 = dims.iter().product();
    let mut data = Vec::with_capacity(n as usize);
    match dtype {
        Dtype::F32 => {
            let mut b = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f32::from_le_bytes(b) as f64);
            }
        }
        Dtype::F64 => {
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
        }
    }
    // Trailing bytes would mean a corrupt writer.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(NetError::Checkpoint(format!(
            "{}: trailing bytes after tensor payload",
            path.display()
        )));
    }
    Ok(StoredTensor { dims, dtype, data })
}
