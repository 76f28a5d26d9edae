//! FND3 checkpoints.
//!
//! Layout, all integers `u32` little-endian:
//! `"FND3"`, version, config length, config JSON, parameter count, then per
//! parameter name length, name bytes, rank, dims, `f32` data; finally the
//! CRC32 of every preceding byte.

use std::collections::BTreeMap;
use std::path::Path;

use find3d_core::net::{ModelConfig, ModelState, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FND3";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(state: &ModelState) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION as usize)?;
    let config = serde_json::to_vec(&state.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    put_u32(&mut buf, config.len())?;
    buf.extend_from_slice(&config);
    put_u32(&mut buf, state.params.len())?;
    for (name, t) in &state.params {
        put_u32(&mut buf, name.len())?;
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.shape.len())?;
        for &d in &t.shape {
            put_u32(&mut buf, d)?;
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not an FND3 file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("CRC mismatch".into()));
    }
    let mut c = Cursor { buf: body, at: 4 };
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = c.u32()?;
    let config: ModelConfig =
        serde_json::from_slice(c.take(n)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let count = c.u32()?;
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let n = c.u32()?;
        let name = std::str::from_utf8(c.take(n)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::Checkpoint(format!("`{name}` shape overflows")))?;
        let raw = c.take(numel.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        if params.insert(name.clone(), Tensor { shape, data }).is_some() {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
    }
    if c.at != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - c.at)));
    }
    let state = ModelState { config, params };
    state.validate()?;
    Ok(state)
}

pub fn save(path: &Path, state: &ModelState) -> Result<()> {
    std::fs::write(path, encode(state)?).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::format(path, m),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> ModelState {
        ModelState::init(ModelConfig::toy(), 3).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = state();
        let bytes = encode(&s).unwrap();
        assert_eq!(&bytes[..4], b"FND3");
        assert_eq!(decode(&bytes).unwrap(), s);
        assert_eq!(encode(&decode(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn any_flipped_bit_is_detected() {
        let bytes = encode(&state()).unwrap();
        for at in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            let mut b = bytes.clone();
            b[at] ^= 0x10;
            assert!(decode(&b).is_err(), "flip at {at}");
        }
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn valid_crc_but_wrong_shapes_is_rejected() {
        let mut s = state();
        let t = s.params.values_mut().next().unwrap();
        t.shape = vec![t.numel()];
        t.data.push(0.0);
        t.shape = vec![t.data.len()];
        let bytes = encode(&s).unwrap();
        assert!(decode(&bytes).is_err());
    }
}
