//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "UAPC"  u32 version
//! u64 echo length, echo bytes (UTF-8 config text)
//! u64 entry count, then per entry:
//!     u64 name length, name bytes, u64 rank, rank x u64 extents, u64 byte offset
//! u64 payload length in bytes, payload (f64 LE, entries back to back)
//! ```
//!
//! Byte offsets are relative to the start of the payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"UAPC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub params: ParamStore,
}

pub fn encode_checkpoint(config_echo: &str, params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, config_echo.len() as u64);
    out.extend_from_slice(config_echo.as_bytes());
    put_u64(&mut out, params.len() as u64);
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        put_u64(&mut out, name.len() as u64);
        out.extend_from_slice(name.as_bytes());
        put_u64(&mut out, t.shape().len() as u64);
        for &d in t.shape() {
            put_u64(&mut out, d as u64);
        }
        put_u64(&mut out, offset);
        offset += 8 * t.len() as u64;
    }
    put_u64(&mut out, offset);
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated reading {what} at byte {} (need {n}, have {})",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("implausible {what} {v}")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(what)?;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Compatibility(format!(
            "checkpoint format version {version}, this build reads {VERSION}"
        )));
    }
    let config_echo = r.string("config echo")?;
    let count = r.len("entry count")?;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string("entry name")?;
        let rank = r.len("rank")?;
        let shape = (0..rank).map(|_| r.len("extent")).collect::<Result<Vec<_>>>()?;
        let offset = r.u64("offset")?;
        manifest.push((name, shape, offset));
    }
    let payload_len = r.len("payload length")?;
    let payload = r.take(payload_len, "payload")?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    let mut params = ParamStore::new();
    for (name, shape, offset) in manifest {
        let n: usize = shape.iter().product();
        let start = usize::try_from(offset).unwrap_or(usize::MAX);
        let end = start
            .checked_add(8 * n)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| Error::Format(format!("entry {name:?} lies outside the {payload_len}-byte payload")))?;
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("entry {name:?}: {e}")))?;
        params
            .insert(name, t)
            .map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
    }
    Ok(Checkpoint { config_echo, params })
}

pub fn write_checkpoint(path: &Path, config_echo: &str, params: &ParamStore) -> Result<()> {
    std::fs::write(path, encode_checkpoint(config_echo, params))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert(
            "a.w",
            Tensor::new(vec![2, 3], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, -2.5, 0.1]).unwrap(),
        )
        .unwrap();
        p.insert("a.b", Tensor::new(vec![3], vec![0.1 + 0.2, 7.0, -1e-310]).unwrap())
            .unwrap();
        p
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = sample();
        let bytes = encode_checkpoint("seed = 1\n", &p);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.config_echo, "seed = 1\n");
        assert!(back.params.bit_equal(&p));
        assert_eq!(back.params.names().collect::<Vec<_>>(), vec!["a.w", "a.b"]);
        assert_eq!(encode_checkpoint("seed = 1\n", &back.params), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint("", &sample());
        assert_eq!(&bytes[..4], b"UAPC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = encode_checkpoint("x", &sample());
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
        let mut newer = bytes.clone();
        newer[4] = 9;
        assert!(matches!(decode_checkpoint(&newer), Err(Error::Compatibility(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode_checkpoint(&long), Err(Error::Format(_))));
    }
}
