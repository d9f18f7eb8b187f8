//! Binary model snapshot.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic        8 bytes "D2SSNAP1"
//! config_len   u32, then that many bytes of JSON (the ModelConfig)
//! time         i64
//! per FC layer (bottom then top):
//!   kind       u8: 0 dense, 1 masked
//!   values, bias, acc, bias_acc        f64 arrays in config shapes
//!   masked only: aux, momentum         f64 arrays
//! per table:   table, acc              f64 arrays
//! ```
//!
//! Gradients are scratch space and are not stored.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{DenseParam, EmbeddingTable, Layer, MaskedLayer, ModelConfig, RecModel};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"D2SSNAP1";

fn put<W: Write>(out: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_snapshot<W: Write>(mut out: W, model: &RecModel) -> Result<()> {
    out.write_all(SNAPSHOT_MAGIC)?;
    let cfg = serde_json::to_vec(model.config()).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(&(cfg.len() as u32).to_le_bytes())?;
    out.write_all(&cfg)?;
    out.write_all(&model.time.to_le_bytes())?;
    for layer in model.fc_layers() {
        let p = layer.param();
        out.write_all(&[layer.as_masked().is_some() as u8])?;
        put(&mut out, p.values.iter().copied())?;
        put(&mut out, p.bias.iter().copied())?;
        put(&mut out, p.acc.iter().copied())?;
        put(&mut out, p.bias_acc.iter().copied())?;
        if let Some(m) = layer.as_masked() {
            put(&mut out, m.aux.iter().copied())?;
            put(&mut out, m.momentum.iter().copied())?;
        }
    }
    for t in &model.tables {
        put(&mut out, t.table.iter().copied())?;
        put(&mut out, t.acc.iter().copied())?;
    }
    Ok(())
}

struct Reader<R> {
    inp: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inp.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated snapshot: {e}")))?;
        Ok(buf)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn matrix(&mut self, r: usize, c: usize) -> Result<Array2<f64>> {
        Ok(Array2::from_shape_vec((r, c), self.f64s(r * c)?).expect("length matches shape"))
    }

    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.f64s(n)?))
    }
}

pub fn read_snapshot<R: Read>(inp: R) -> Result<RecModel> {
    let mut r = Reader { inp };
    if r.bytes(8)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a model snapshot".into()));
    }
    let len = u32::from_le_bytes(r.bytes(4)?.try_into().unwrap()) as usize;
    let config: ModelConfig =
        serde_json::from_slice(&r.bytes(len)?).map_err(|e| Error::Format(format!("snapshot config: {e}")))?;
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let time = i64::from_le_bytes(r.bytes(8)?.try_into().unwrap());
    let mut layers = Vec::new();
    for (out, inp) in config.fc_shapes() {
        let kind = r.bytes(1)?[0];
        let mut p = DenseParam::from_values(r.matrix(out, inp)?, r.vector(out)?);
        p.acc = r.matrix(out, inp)?;
        p.bias_acc = r.vector(out)?;
        layers.push(match kind {
            0 => Layer::Dense(p),
            1 => {
                let mut m = MaskedLayer::from_dense(p);
                m.aux = r.matrix(out, inp)?;
                m.momentum = r.matrix(out, inp)?;
                Layer::Masked(m)
            }
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        });
    }
    let mut tables = Vec::new();
    for &rows in &config.table_rows {
        let mut t = EmbeddingTable::from_table(r.matrix(rows, config.embedding_dim)?);
        t.acc = r.matrix(rows, config.embedding_dim)?;
        tables.push(t);
    }
    let top = layers.split_off(config.bottom_widths.len());
    RecModel::from_parts(config, layers, tables, top, time)
}
