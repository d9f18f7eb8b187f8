//! Stream record file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "D2SSTRM1"
//! dense_dim  u32
//! tables     u32
//! records    u64
//! per record:
//!   virtual_time  u64
//!   n             u32
//!   dense         n·dense_dim f64, row-major
//!   per table:    n+1 u32 bag offsets, then offsets[n] u32 ids
//!   labels        n bytes, each 0 or 1
//! ```

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{Batch, CategoricalFeature};

pub const RECORD_MAGIC: &[u8; 8] = b"D2SSTRM1";

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write_records<W: Write>(mut out: W, batches: &[Batch]) -> Result<()> {
    let first = batches.first().ok_or_else(|| Error::Format("no batches to export".into()))?;
    let dense_dim = first.dense.ncols();
    let tables = first.categorical.len();
    out.write_all(RECORD_MAGIC)?;
    out.write_all(&u32_of(dense_dim, "dense_dim")?.to_le_bytes())?;
    out.write_all(&u32_of(tables, "table count")?.to_le_bytes())?;
    out.write_all(&(batches.len() as u64).to_le_bytes())?;
    for b in batches {
        b.validate()?;
        if b.dense.ncols() != dense_dim || b.categorical.len() != tables {
            return Err(Error::Format("batches disagree on feature layout".into()));
        }
        out.write_all(&b.virtual_time.to_le_bytes())?;
        out.write_all(&u32_of(b.len(), "batch length")?.to_le_bytes())?;
        for v in b.dense.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for feat in &b.categorical {
            for &o in &feat.offsets {
                out.write_all(&u32_of(o, "bag offset")?.to_le_bytes())?;
            }
            for &id in &feat.ids {
                out.write_all(&id.to_le_bytes())?;
            }
        }
        out.write_all(&b.labels)?;
    }
    Ok(())
}

fn take<const N: usize, R: Read>(inp: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    inp.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated record file: {e}")))?;
    Ok(buf)
}

fn take_u32<R: Read>(inp: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(take(inp)?))
}

fn take_u64<R: Read>(inp: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(take(inp)?))
}

pub fn read_records<R: Read>(mut inp: R) -> Result<Vec<Batch>> {
    if &take::<8, _>(&mut inp)? != RECORD_MAGIC {
        return Err(Error::Format("not a stream record file".into()));
    }
    let dense_dim = take_u32(&mut inp)? as usize;
    let tables = take_u32(&mut inp)? as usize;
    let count = take_u64(&mut inp)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let virtual_time = take_u64(&mut inp)?;
        let n = take_u32(&mut inp)? as usize;
        let mut dense = Array2::zeros((n, dense_dim));
        for v in dense.iter_mut() {
            *v = f64::from_le_bytes(take(&mut inp)?);
        }
        let mut categorical = Vec::with_capacity(tables);
        for _ in 0..tables {
            let offsets = (0..=n).map(|_| take_u32(&mut inp).map(|o| o as usize)).collect::<Result<Vec<_>>>()?;
            if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Format("bag offsets must start at 0 and be nondecreasing".into()));
            }
            let ids = (0..offsets[n]).map(|_| take_u32(&mut inp)).collect::<Result<Vec<_>>>()?;
            categorical.push(CategoricalFeature { offsets, ids });
        }
        let mut labels = vec![0u8; n];
        inp.read_exact(&mut labels).map_err(|e| Error::Format(format!("truncated record file: {e}")))?;
        let batch = Batch { dense, categorical, labels, virtual_time };
        batch.validate().map_err(|e| Error::Format(e.to_string()))?;
        out.push(batch);
    }
    Ok(out)
}
