//! Weight checkpoints.
//!
//! Layout, all little-endian: magic `GNNW`, `u32` layer count `K`, `K + 1`
//! `u32` layer dimensions `d_0 … d_K`, then each `W⁽ᵏ⁾` row-major as `f64`.
//! The historical cache is not stored; it is rebuilt from the weights.

use std::fs;
use std::path::Path;

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GNNW";

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 8 * params.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for w in params.weights() {
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing GNNW magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let k = u32_at(take(4)?);
    if k == 0 {
        return Err(Error::Checkpoint("zero layers".into()));
    }
    let dims = (0..=k).map(|_| take(4).map(u32_at)).collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(k);
    for d in dims.windows(2) {
        let data = take(8 * d[0] * d[1])?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        weights.push(Dense::from_vec(d[0], d[1], data)?);
    }
    if !cursor.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", cursor.len())));
    }
    ModelParams::new(weights)
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(d0 in 1usize..5, d1 in 1usize..5, d2 in 1usize..4, seed in any::<u64>()) {
            let mut s = seed;
            let mut next = move || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
            let w0 = Dense::from_fn(d0, d1, |_, _| next());
            let w1 = Dense::from_fn(d1, d2, |_, _| next());
            let params = ModelParams::new(vec![w0, w1]).unwrap();
            let bytes = encode(&params);
            prop_assert_eq!(decode(&bytes).unwrap(), params);
        }
    }

    #[test]
    fn rejects_corruption() {
        let params = ModelParams::zeros(&[2, 3, 2]).unwrap();
        let bytes = encode(&params);
        assert_eq!(&bytes[..4], b"GNNW");
        assert_eq!(bytes.len(), 4 + 4 + 3 * 4 + 8 * 12);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
