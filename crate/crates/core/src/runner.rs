//! Experiment plumbing behind the command-line tool: runs, comparisons,
//! benchmarks, stream export and snapshot inspection.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::d2s::{simulate, Track, Variant};
use crate::datastream::{write_records, DataStream};
use crate::error::{Error, Result};
use crate::eval::{read_metrics, write_metrics, FinalEval, MetricsFormat, MetricsRecord};
use crate::kernels::{bench, BenchConfig, BenchResult};
use crate::nn::{read_snapshot, Batch};
use crate::pruning::{layer_sparsities, model_sparsity};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutput {
    pub seed: u64,
    /// Metrics file, relative to the manifest's directory.
    pub metrics: String,
    pub status: String,
    pub final_eval: Option<FinalEval>,
}

/// Record of one `run` invocation: config echo, seeds and produced files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub variant: Variant,
    pub config_hash: String,
    pub config: String,
    pub seeds: Vec<u64>,
    pub format: MetricsFormat,
    pub outputs: Vec<SeedOutput>,
    pub status: String,
}

impl RunManifest {
    pub fn file_name(variant: Variant) -> String {
        format!("{}.manifest.json", variant.name())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&self.config)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs one variant for every seed, writing one metrics file per seed and
/// a manifest into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, variant: Variant, seeds: &[u64], out: &Path, format: MetricsFormat) -> Result<RunManifest> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut outputs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        log::info!("running {} seed {seed}", variant.name());
        let sim = simulate(cfg, seed, &[Track::new(variant, cfg.prune.clone())])?;
        let track = sim.tracks.into_iter().next().expect("one track");
        let name = format!("{}-seed{seed}.{}", variant.name(), format.extension());
        let mut buf = Vec::new();
        write_metrics(&mut buf, &track.records, format)?;
        write_file(&out.join(&name), &buf)?;
        outputs.push(SeedOutput { seed, metrics: name, status: "ok".into(), final_eval: Some(track.final_eval) });
    }
    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        variant,
        config_hash: cfg.content_hash(),
        config: cfg.to_toml(),
        seeds: seeds.to_vec(),
        format,
        outputs,
        status: "ok".into(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join(RunManifest::file_name(variant)), json.as_bytes())?;
    Ok(manifest)
}

/// Mean relative CE over seeds at each boundary for one manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    pub times: Vec<i64>,
    pub mean_relative_ce: Vec<f64>,
}

/// One row of the last-window table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastWindowRow {
    pub label: String,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub final_overall_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub curves: Vec<Curve>,
    pub last_window: Vec<LastWindowRow>,
    /// Final per-layer sparsity, averaged over seeds, per manifest.
    pub layer_sparsity: Vec<(String, Vec<f64>)>,
}

impl CompareReport {
    pub fn table(&self) -> String {
        let mut s = String::from("variant,mean_last_window_relative_ce_pct,per_seed_pct,final_sparsity\n");
        for r in &self.last_window {
            let seeds: Vec<String> = r.per_seed.iter().map(|(k, v)| format!("{k}:{:.4}", v * 100.0)).collect();
            let _ = writeln!(s, "{},{:.4},{},{:.4}", r.label, r.mean * 100.0, seeds.join(" "), r.final_overall_sparsity);
        }
        s
    }
}

fn same_stream(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.stream == b.stream
        && a.drift == b.drift
        && a.d2s.delta == b.d2s.delta
        && a.d2s.horizon == b.d2s.horizon
        && a.d2s.p == b.d2s.p
        && a.d2s.pretrain_samples == b.d2s.pretrain_samples
        && a.eval.lookahead_window == b.eval.lookahead_window
}

/// Loads every metrics file a manifest references.
pub fn load_run(manifest_path: &Path) -> Result<(RunManifest, Vec<(u64, Vec<MetricsRecord>)>)> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut runs = Vec::new();
    for o in &manifest.outputs {
        let path = dir.join(&o.metrics);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let recs = read_metrics(&text, manifest.format).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        runs.push((o.seed, recs));
    }
    Ok((manifest, runs))
}

/// Aggregates several runs over the same stream into curves and a
/// last-window table, and writes CSV and SVG files into `out`.
pub fn cmd_compare(manifests: &[PathBuf], out: &Path) -> Result<CompareReport> {
    if manifests.is_empty() {
        return Err(Error::Comparison("nothing to compare".into()));
    }
    let mut loaded = Vec::new();
    for p in manifests {
        loaded.push(load_run(p)?);
    }
    let base = loaded[0].0.config()?;
    for (m, _) in &loaded[1..] {
        if !same_stream(&base, &m.config()?) {
            return Err(Error::Comparison(format!(
                "{} run used a different stream or timeline than {}",
                m.variant.name(),
                loaded[0].0.variant.name()
            )));
        }
    }
    let mut curves = Vec::new();
    let mut last_window = Vec::new();
    let mut layer_sparsity = Vec::new();
    for (i, (m, runs)) in loaded.iter().enumerate() {
        let label = if loaded[..i].iter().any(|(o, _)| o.variant == m.variant) {
            format!("{}#{}", m.variant.name(), i + 1)
        } else {
            m.variant.name().to_string()
        };
        let n = runs.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
        if n == 0 {
            return Err(Error::Comparison(format!("{label} has no metrics")));
        }
        let times: Vec<i64> = runs[0].1[..n].iter().map(|r| r.virtual_time).collect();
        let mean_relative_ce = (0..n)
            .map(|k| runs.iter().map(|(_, r)| r[k].relative_ce).sum::<f64>() / runs.len() as f64)
            .collect();
        curves.push(Curve { label: label.clone(), times, mean_relative_ce });
        let per_seed: Vec<(u64, f64)> = runs.iter().map(|(s, r)| (*s, r[n - 1].relative_ce)).collect();
        let mean = per_seed.iter().map(|(_, v)| v).sum::<f64>() / per_seed.len() as f64;
        let final_overall_sparsity = runs.iter().map(|(_, r)| r[n - 1].overall_sparsity).sum::<f64>() / runs.len() as f64;
        last_window.push(LastWindowRow { label: label.clone(), per_seed, mean, final_overall_sparsity });
        let layers = runs[0].1[n - 1].per_layer_sparsity.len();
        let avg = (0..layers)
            .map(|l| runs.iter().map(|(_, r)| r[n - 1].per_layer_sparsity.get(l).copied().unwrap_or(0.0)).sum::<f64>() / runs.len() as f64)
            .collect();
        layer_sparsity.push((label, avg));
    }
    let report = CompareReport { curves, last_window, layer_sparsity };

    let mut csv = String::from("variant,virtual_time,mean_relative_ce\n");
    for c in &report.curves {
        for (t, v) in c.times.iter().zip(&c.mean_relative_ce) {
            let _ = writeln!(csv, "{},{t},{v}", c.label);
        }
    }
    write_file(&out.join("relative_ce.csv"), csv.as_bytes())?;
    write_file(&out.join("last_window.csv"), report.table().as_bytes())?;
    let mut sp = String::from("variant,layer,sparsity\n");
    for (label, v) in &report.layer_sparsity {
        for (l, s) in v.iter().enumerate() {
            let _ = writeln!(sp, "{label},{l},{s}");
        }
    }
    write_file(&out.join("layer_sparsity.csv"), sp.as_bytes())?;
    let series: Vec<Series> = report
        .curves
        .iter()
        .map(|c| Series {
            label: c.label.clone(),
            points: c.times.iter().zip(&c.mean_relative_ce).map(|(&t, &v)| (t as f64, v * 100.0)).collect(),
        })
        .collect();
    let svg = svg_chart("Relative look-ahead CE", "virtual time (samples)", "relative CE (%)", &series, true);
    write_file(&out.join("relative_ce.svg"), svg.as_bytes())?;
    let scatter: Vec<Series> = report
        .layer_sparsity
        .iter()
        .map(|(label, v)| Series { label: label.clone(), points: v.iter().enumerate().map(|(l, &s)| (l as f64, s)).collect() })
        .collect();
    let svg = svg_chart("Final sparsity by layer", "layer (forward order)", "sparsity", &scatter, false);
    write_file(&out.join("layer_sparsity.svg"), svg.as_bytes())?;
    Ok(report)
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Minimal SVG chart: polylines when `lines`, dots otherwise.
pub fn svg_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], lines: bool) -> String {
    let (w, h, ml, mr, mt, mb) = (720.0, 420.0, 70.0, 160.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    y0 = y0.min(0.0);
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), mt + ph + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, sy(fy) + 4.0, tick(fy));
        let _ = writeln!(s, r##"<line x1="{ml}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, ml + pw, sy(fy), sy(fy));
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r#"<line x1="{ml}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#, ml + pw, sy(0.0), sy(0.0));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(ylabel)
    );
    for (i, se) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if lines {
            let path: Vec<String> = se.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        } else {
            for &(x, y) in &se.points {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}" fill-opacity="0.7"/>"#, sx(x), sy(y));
            }
        }
        let ly = mt + 14.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, ml + pw + 12.0, ly - 10.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, ml + pw + 30.0, escape(&se.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && (a >= 1e5 || a < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Runs the kernel benchmark and writes `bench.csv` into `out` when given.
pub fn cmd_bench(cfg: &BenchConfig, out: Option<&Path>) -> Result<Vec<BenchResult>> {
    if cfg.sizes.is_empty() || cfg.sparsities.is_empty() {
        return Err(Error::Config("bench needs at least one size and one sparsity".into()));
    }
    if cfg.sparsities.iter().any(|s| !(0.0..1.0).contains(s)) {
        return Err(Error::Config("bench sparsities must lie in [0, 1)".into()));
    }
    let results = bench(cfg);
    if let Some(dir) = out {
        write_file(&dir.join("bench.csv"), bench_table(&results).as_bytes())?;
    }
    Ok(results)
}

pub fn bench_table(results: &[BenchResult]) -> String {
    let mut s = String::from("size,sparsity,dense_seconds,sparse_seconds,speedup,flops_dense,flops_sparse,flops_ratio\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{:.6e},{:.6e},{:.3},{},{},{}",
            r.size,
            r.sparsity,
            r.dense_seconds,
            r.sparse_seconds,
            r.speedup,
            r.flops_dense,
            r.flops_sparse,
            r.flops_sparse as f64 / r.flops_dense as f64
        );
    }
    s
}

/// Exports stream positions `[start, start + count)` of one run seed.
pub fn gen_stream(cfg: &ExperimentConfig, seed: u64, start: u64, count: u64, path: &Path) -> Result<usize> {
    cfg.validate()?;
    let stream = DataStream::new(cfg.stream_for(seed), cfg.drift_schedule(seed)?)?;
    let batches: Vec<Batch> = stream.batches(start, start + count).collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &batches)?;
    write_file(path, &buf)?;
    Ok(batches.iter().map(|b| b.len()).sum())
}

/// Human-readable summary of a snapshot file.
pub fn inspect_snapshot(path: &Path) -> Result<String> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let model = read_snapshot(std::io::BufReader::new(f))?;
    let mut s = String::new();
    let _ = writeln!(s, "time: {}", model.time);
    let _ = writeln!(s, "parameters: {}", model.parameter_count());
    let _ = writeln!(s, "overall sparsity: {:.4}", model_sparsity(&model));
    for ((name, l), sp) in model.layer_names().iter().zip(model.fc_layers()).zip(layer_sparsities(&model)) {
        let kind = if l.as_masked().is_some() { "masked" } else { "dense" };
        let _ = writeln!(s, "{name}: {}x{} {kind} sparsity {sp:.4}", l.out_dim(), l.in_dim());
    }
    for (i, t) in model.tables.iter().enumerate() {
        let _ = writeln!(s, "table{i}: {}x{}", t.rows(), t.dim());
    }
    Ok(s)
}
