//! Mask bitset file.
//!
//! Layout, little-endian: magic `D2SMASK1`, `u32` layer count, then per layer
//! `u32` rows, `u32` cols and `⌈rows·cols/8⌉` bytes of row-major bits,
//! least significant bit first, 1 = weight alive.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::RecModel;

pub const MASK_MAGIC: &[u8; 8] = b"D2SMASK1";

/// Alive/pruned pattern of every masked layer in `fc_layers` order.
pub fn model_masks(model: &RecModel) -> Vec<Array2<bool>> {
    model.masked_layers().map(|l| l.active_mask()).collect()
}

pub fn write_masks<W: Write>(mut out: W, masks: &[Array2<bool>]) -> Result<()> {
    out.write_all(MASK_MAGIC)?;
    out.write_all(&(masks.len() as u32).to_le_bytes())?;
    for m in masks {
        let (r, c) = m.dim();
        out.write_all(&(r as u32).to_le_bytes())?;
        out.write_all(&(c as u32).to_le_bytes())?;
        let mut bytes = vec![0u8; (r * c).div_ceil(8)];
        for (i, &alive) in m.iter().enumerate() {
            if alive {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        out.write_all(&bytes)?;
    }
    Ok(())
}

fn read_u32<R: Read>(inp: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    inp.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated mask file: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_masks<R: Read>(mut inp: R) -> Result<Vec<Array2<bool>>> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic).map_err(|e| Error::Format(format!("truncated mask file: {e}")))?;
    if &magic != MASK_MAGIC {
        return Err(Error::Format("not a mask file".into()));
    }
    let layers = read_u32(&mut inp)?;
    let mut out = Vec::with_capacity(layers as usize);
    for _ in 0..layers {
        let r = read_u32(&mut inp)? as usize;
        let c = read_u32(&mut inp)? as usize;
        let mut bytes = vec![0u8; (r * c).div_ceil(8)];
        inp.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated mask file: {e}")))?;
        out.push(Array2::from_shape_fn((r, c), |(i, j)| {
            let k = i * c + j;
            bytes[k / 8] >> (k % 8) & 1 == 1
        }));
    }
    Ok(out)
}
