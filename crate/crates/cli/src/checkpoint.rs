//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `WMSE` |
//! | 4 | format version (u32) |
//! | 8 | header length `h` (u64) |
//! | h | header JSON: model id, channel selection, architecture |
//! | 8 | parameter count `n` (u64) |
//! | 4n | parameters as f32, in declaration order |
//! | 8 | FNV-1a 64 of everything above |

use std::path::Path;

use serde::{Deserialize, Serialize};
use wmse_core::training::fnv1a;
use wmse_core::{Error, Result};

use crate::enhancer::{Enhancer, NetworkSpec};
use crate::model_id::ModelId;

pub const MAGIC: &[u8; 4] = b"WMSE";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    id: ModelId,
    channels: Vec<usize>,
    network: NetworkSpec,
}

pub fn to_bytes(e: &Enhancer) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        id: e.id.clone(),
        channels: e.channels.clone(),
        network: e.spec(),
    })?;
    let values: Vec<f64> = e.params().iter().flat_map(|p| p.value.iter().copied()).collect();
    let mut out = Vec::with_capacity(32 + header.len() + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
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
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Enhancer> {
    if bytes.len() < 28 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let count = r.u64()? as usize;
    let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Checkpoint("bad count".into()))?)?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let mut e = Enhancer::from_spec(header.id, header.channels, &header.network)?;
    let expected: usize = e.params().iter().map(|p| p.len()).sum();
    if expected != count {
        return Err(Error::Checkpoint(format!(
            "architecture has {expected} parameters, file has {count}"
        )));
    }
    let mut values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    for p in e.params_mut() {
        for v in p.value.iter_mut() {
            *v = values.next().expect("count checked");
        }
    }
    Ok(e)
}

pub fn save(path: &Path, e: &Enhancer) -> Result<()> {
    std::fs::write(path, to_bytes(e)?).map_err(|err| Error::io(path, err))
}

pub fn load(path: &Path) -> Result<Enhancer> {
    from_bytes(&std::fs::read(path).map_err(|err| Error::io(path, err))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhancer::Overrides;

    fn enhancer(name: &str) -> Enhancer {
        let id: ModelId = name.parse().unwrap();
        let o = Overrides {
            width: Some(4),
            ddae_hidden: Some(8),
        };
        let mut e = Enhancer::build(&id, id.resolve_channels(2).unwrap(), o, 3).unwrap();
        if let crate::enhancer::Network::Residual(c) = &mut e.network {
            c.mark_primary_trained();
        }
        e
    }

    #[test]
    fn round_trip_within_f32() {
        let probe: Vec<f64> = (0..2000).map(|t| (t as f64 * 0.013).sin() * 0.7).collect();
        for name in ["SDFCN", "rSDFCN(L)", "DDAE", "FCN-251(R)"] {
            let mut a = enhancer(name);
            let mut b = from_bytes(&to_bytes(&a).unwrap()).unwrap();
            assert_eq!(a.spec(), b.spec());
            let inputs: Vec<&[f64]> = vec![&probe; a.input_channels()];
            let ya = a.enhance(&inputs).unwrap();
            let yb = b.enhance(&inputs).unwrap();
            let dev = ya.iter().zip(&yb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-6, "{name}: {dev}");
        }
    }

    #[test]
    fn corruption_detected() {
        let bytes = to_bytes(&enhancer("FCN-55")).unwrap();
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("checksum")));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn layout_prefix() {
        let bytes = to_bytes(&enhancer("FCN-55(L)")).unwrap();
        assert_eq!(&bytes[..4], b"WMSE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
    }
}
