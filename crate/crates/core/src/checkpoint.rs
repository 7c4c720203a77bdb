//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size  | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | 8     | magic `PNAVCKPT` (ASCII)                |
//! | 8      | 4     | format version, u32 (currently 1)       |
//! | 12     | 4     | raster width, u32                       |
//! | 16     | 4     | raster height, u32                      |
//! | 20     | 4     | raster channels, u32                    |
//! | 24     | 4     | hidden width, u32                       |
//! | 28     | 8     | parameter count N, u64                  |
//! | 36     | 8 * N | parameters, f64, in the flat layout order documented on [`crate::policy`] |
//!
//! Nothing follows the parameters; trailing bytes are rejected.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::observation::{RasterDims, N_CHANNELS};
use crate::policy::PolicyBundle;

pub const MAGIC: &[u8; 8] = b"PNAVCKPT";
pub const VERSION: u32 = 1;
const HEADER: usize = 36;

pub fn encode(bundle: &PolicyBundle) -> Vec<u8> {
    let dims = bundle.dims();
    let params = bundle.params();
    let mut out = Vec::with_capacity(HEADER + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [dims.width, dims.height, dims.channels, bundle.hidden()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
}

pub fn decode(bytes: &[u8]) -> Result<PolicyBundle> {
    if bytes.len() < HEADER {
        return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32_at(bytes, 8) as u32;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let (width, height, channels, hidden) = (
        u32_at(bytes, 12),
        u32_at(bytes, 16),
        u32_at(bytes, 20),
        u32_at(bytes, 24),
    );
    if channels != N_CHANNELS {
        return Err(Error::Checkpoint(format!("expected {N_CHANNELS} channels, found {channels}")));
    }
    let n = u64::from_le_bytes(bytes[28..36].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER..];
    if body.len() != n.saturating_mul(8) {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            n.saturating_mul(8),
            body.len()
        )));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    PolicyBundle::from_parts(RasterDims::new(width, height), hidden, params)
}

/// FNV-1a 64 of the encoded bytes, as 16 hex digits.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn save(bundle: &PolicyBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(bundle))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<PolicyBundle> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let b = PolicyBundle::new(RasterDims::new(8, 6), 5, 9);
        let bytes = encode(&b);
        assert_eq!(bytes.len(), HEADER + 8 * b.param_count());
        assert_eq!(&bytes[..8], b"PNAVCKPT");
        let back = decode(&bytes).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let b = PolicyBundle::new(RasterDims::new(4, 4), 3, 1);
        let bytes = encode(&b);
        assert!(decode(&bytes[..20]).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 2;
        assert!(decode(&bad).is_err());
    }
}
