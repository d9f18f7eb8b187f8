use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MetricsRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricsFormat {
    #[default]
    Jsonl,
    Csv,
}

impl MetricsFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MetricsFormat::Jsonl => "jsonl",
            MetricsFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for MetricsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(MetricsFormat::Jsonl),
            "csv" => Ok(MetricsFormat::Csv),
            other => Err(Error::Config(format!("unknown metrics format {other:?} (expected csv or jsonl)"))),
        }
    }
}

pub const CSV_HEADER: &str = "variant,seed,virtual_time,lookahead_ce,dense_ce,relative_ce,normalized_ce,overall_sparsity,per_layer_sparsity,mask_changes";

/// Floats are written with Rust's shortest round-trip formatting, so the
/// output is a pure function of the values.
pub fn write_metrics<W: Write>(mut out: W, records: &[MetricsRecord], format: MetricsFormat) -> Result<()> {
    match format {
        MetricsFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
                out.write_all(b"\n")?;
            }
        }
        MetricsFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in records {
                let layers: Vec<String> = r.per_layer_sparsity.iter().map(|s| s.to_string()).collect();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.variant,
                    r.seed,
                    r.virtual_time,
                    r.lookahead_ce,
                    r.dense_ce,
                    r.relative_ce,
                    r.normalized_ce,
                    r.overall_sparsity,
                    layers.join(";"),
                    r.mask_changes
                )?;
            }
        }
    }
    Ok(())
}

fn field<T: std::str::FromStr>(v: &str, name: &str, line: usize) -> Result<T> {
    v.parse().map_err(|_| Error::Format(format!("line {line}: bad {name} {v:?}")))
}

pub fn read_metrics(text: &str, format: MetricsFormat) -> Result<Vec<MetricsRecord>> {
    match format {
        MetricsFormat::Jsonl => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
            .collect(),
        MetricsFormat::Csv => {
            let mut lines = text.lines().enumerate();
            match lines.next() {
                Some((_, h)) if h == CSV_HEADER => {}
                _ => return Err(Error::Format("missing metrics CSV header".into())),
            }
            lines
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    let line = i + 1;
                    let c: Vec<&str> = l.split(',').collect();
                    if c.len() != 10 {
                        return Err(Error::Format(format!("line {line}: expected 10 fields, found {}", c.len())));
                    }
                    let per_layer_sparsity = if c[8].is_empty() {
                        Vec::new()
                    } else {
                        c[8].split(';').map(|s| field(s, "layer sparsity", line)).collect::<Result<_>>()?
                    };
                    Ok(MetricsRecord {
                        variant: c[0].to_string(),
                        seed: field(c[1], "seed", line)?,
                        virtual_time: field(c[2], "virtual_time", line)?,
                        lookahead_ce: field(c[3], "lookahead_ce", line)?,
                        dense_ce: field(c[4], "dense_ce", line)?,
                        relative_ce: field(c[5], "relative_ce", line)?,
                        normalized_ce: field(c[6], "normalized_ce", line)?,
                        overall_sparsity: field(c[7], "overall_sparsity", line)?,
                        per_layer_sparsity,
                        mask_changes: field(c[9], "mask_changes", line)?,
                    })
                })
                .collect()
        }
    }
}
