//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "TREPCKPT"
//! version    u32 LE   (1)
//! meta       u64 LE length + UTF-8 bytes (free-form, JSON by convention)
//! steps      u64 LE   optimizer step counter
//! count      u64 LE   number of parameters
//! per parameter, in insertion order:
//!   name     u64 LE length + UTF-8 bytes
//!   rank     u64 LE, then rank × u64 LE dims
//!   values   n × f64 LE (IEEE-754 bits)
//!   m, v     n × f64 LE each (Adam moments)
//! ```
//!
//! Values are written as raw bits, so a save/load cycle is bit-exact.

use super::{ParameterStore, Tensor, TensorError, TensorResult};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TREPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: String,
    pub store: ParameterStore,
}

fn io_err(e: std::io::Error) -> TensorError {
    TensorError::Checkpoint(e.to_string())
}

fn read_u64(r: &mut impl Read) -> TensorResult<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

fn read_len(r: &mut impl Read, what: &str) -> TensorResult<usize> {
    let n = read_u64(r)?;
    // Guards against corrupt lengths allocating absurd buffers.
    if n > (1 << 34) {
        return Err(TensorError::Checkpoint(format!("implausible {what} length {n}")));
    }
    Ok(n as usize)
}

fn read_string(r: &mut impl Read, what: &str) -> TensorResult<String> {
    let n = read_len(r, what)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(io_err)?;
    String::from_utf8(buf).map_err(|_| TensorError::Checkpoint(format!("{what} is not UTF-8")))
}

fn read_f64s(r: &mut impl Read, n: usize) -> TensorResult<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)
}

impl Checkpoint {
    pub fn new(meta: impl Into<String>, store: ParameterStore) -> Self {
        Self { meta: meta.into(), store }
    }

    pub fn write_to(&self, w: &mut impl Write) -> TensorResult<()> {
        let mut go = || -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            write_str(w, &self.meta)?;
            w.write_all(&self.store.steps().to_le_bytes())?;
            w.write_all(&(self.store.len() as u64).to_le_bytes())?;
            for (name, value, m, v) in self.store.entries() {
                write_str(w, name)?;
                w.write_all(&(value.shape().len() as u64).to_le_bytes())?;
                for &d in value.shape() {
                    w.write_all(&(d as u64).to_le_bytes())?;
                }
                write_f64s(w, value.data())?;
                write_f64s(w, m)?;
                write_f64s(w, v)?;
            }
            Ok(())
        };
        go().map_err(io_err)
    }

    pub fn read_from(r: &mut impl Read) -> TensorResult<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(TensorError::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let mut vb = [0u8; 4];
        r.read_exact(&mut vb).map_err(io_err)?;
        let version = u32::from_le_bytes(vb);
        if version != VERSION {
            return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta = read_string(r, "meta")?;
        let steps = read_u64(r)?;
        let count = read_len(r, "parameter count")?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_string(r, "name")?;
            let rank = read_len(r, "rank")?;
            let shape = (0..rank).map(|_| read_len(r, "dimension")).collect::<TensorResult<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let values = read_f64s(r, n)?;
            let m = read_f64s(r, n)?;
            let v = read_f64s(r, n)?;
            entries.push((name, Tensor::new(shape, values)?, m, v));
        }
        Ok(Self { meta, store: ParameterStore::restore(entries, steps)? })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> TensorResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err)
    }

    pub fn load(path: &Path) -> TensorResult<Self> {
        let bytes = std::fs::read(path).map_err(io_err)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Adam, Tape};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![2, 3], vec![0.1, -1e-300, 3.5, 1.0 / 3.0, 7.0, -0.0]).unwrap()).unwrap();
        store.insert("b", Tensor::vector(vec![f64::MIN_POSITIVE, 2.0]).unwrap()).unwrap();
        let grads = {
            let mut tape = Tape::new();
            let w = tape.param(&store, "w").unwrap();
            let sq = tape.square(w).unwrap();
            let loss = tape.sum(sq).unwrap();
            tape.backward(loss).unwrap()
        };
        store.accumulate(&grads);
        Adam::new(0.01).step(&mut store);

        let ckpt = Checkpoint::new("{\"kind\":\"test\"}", store);
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.meta, ckpt.meta);
        assert!(back.store.same_values(&ckpt.store));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::read_from(&mut &b"NOTACKPT"[..]).is_err());
        let ckpt = Checkpoint::new("", ParameterStore::new());
        let bytes = ckpt.to_bytes();
        assert!(Checkpoint::read_from(&mut &bytes[..bytes.len() - 1]).is_err());
    }
}
