//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `DFCKPT1\n`, then one entry per tensor in
//! model-definition order: `u32` name length, UTF-8 name, `u64` value
//! count, and that many `f64` values. All integers and floats are
//! little-endian. BN running statistics are stored alongside parameters.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;

pub const MAGIC: &[u8; 8] = b"DFCKPT1\n";

pub fn encode(entries: &[(String, &[f64])]) -> Vec<u8> {
    let total: usize = entries.iter().map(|(n, v)| 12 + n.len() + 8 * v.len()).sum();
    let mut out = Vec::with_capacity(MAGIC.len() + total);
    out.extend_from_slice(MAGIC);
    for (name, values) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>> {
    if !bytes.starts_with(MAGIC) {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let count = usize::try_from(r.u64()?).map_err(|_| Error::Format("value count overflows".into()))?;
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("value count overflows".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, values));
    }
    Ok(out)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(&model.state())).map_err(|e| Error::io(path, e))
}

/// Copies stored tensors into `model`. Names, order and sizes must match
/// the model's state exactly.
pub fn load_into(model: &mut Model, bytes: &[u8]) -> Result<()> {
    let entries = decode(bytes)?;
    let mut state = model.state_mut();
    if entries.len() != state.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, model expects {}",
            entries.len(),
            state.len()
        )));
    }
    for ((name, values), (want, slot)) in entries.into_iter().zip(state.iter_mut()) {
        if name != *want || values.len() != slot.len() {
            return Err(Error::Format(format!(
                "checkpoint entry {name} ({} values) does not match {want} ({} values)",
                values.len(),
                slot.len()
            )));
        }
        **slot = values;
    }
    Ok(())
}

pub fn load(model: &mut Model, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_into(model, &bytes)
}
