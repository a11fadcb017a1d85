//! CSV and JSON emission.
//!
//! Every CSV starts with a `schema_version` column. Wall-clock runtimes only
//! appear in the JSON summary so that repeated runs give identical CSVs.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiments::{EhrenfestReport, ErrorTable, KernelReport, LadderReport, PropagateReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct ErrorCsvRow {
    schema_version: u32,
    hbar: f64,
    t: f64,
    error: f64,
    hk_norm: f64,
    node_count: usize,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// `schema_version,hbar,t,error,hk_norm,node_count`
pub fn write_error_table(path: &Path, table: &ErrorTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in &table.rows {
        w.serialize(ErrorCsvRow {
            schema_version: SCHEMA_VERSION,
            hbar: r.hbar,
            t: r.t,
            error: r.error,
            hk_norm: r.hk_norm,
            node_count: r.node_count,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn runtimes(table: &ErrorTable) -> Value {
    let mut seen = Vec::new();
    for r in &table.rows {
        if !seen.iter().any(|(h, _): &(f64, f64)| *h == r.hbar) {
            seen.push((r.hbar, r.runtime_seconds));
        }
    }
    seen.iter().map(|(h, s)| json!({ "hbar": h, "seconds": s })).collect()
}

fn summary(command: &str, cfg: &ExperimentConfig, result: Value, runtime: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "versions": {
            "harness": env!("CARGO_PKG_VERSION"),
            "herman_kluk": herman_kluk::VERSION,
        },
        "config": cfg,
        "result": result,
        "runtime": runtime,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes `<stem>.csv`, `<stem>_control.csv` (if any) and `<stem>.json`.
pub fn write_ladder(dir: &Path, stem: &str, cfg: &ExperimentConfig, report: &LadderReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![dir.join(format!("{stem}.csv"))];
    write_error_table(&files[0], &report.table)?;
    if !report.control.rows.is_empty() {
        let p = dir.join(format!("{stem}_control.csv"));
        write_error_table(&p, &report.control)?;
        files.push(p);
    }
    let result = json!({
        "slope": report.slope,
        "fits": report.fits,
        "flags": report.flags,
        "reference_cross_check": report.cross_check,
    });
    let p = dir.join(format!("{stem}.json"));
    write_json(&p, &summary(stem, cfg, result, runtimes(&report.table)))?;
    files.push(p);
    Ok(files)
}

#[derive(Serialize)]
struct EhrenfestCsvRow {
    schema_version: u32,
    hbar: f64,
    t_star: Option<f64>,
    crossed: bool,
    max_error: f64,
}

/// `ehrenfest.csv` (one row per ħ; empty `t_star` means no crossing),
/// `ehrenfest_curves.csv` and `ehrenfest.json`.
pub fn write_ehrenfest(dir: &Path, cfg: &ExperimentConfig, report: &EhrenfestReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let table = dir.join("ehrenfest.csv");
    let mut w = csv_writer(&table)?;
    for r in &report.rows {
        w.serialize(EhrenfestCsvRow {
            schema_version: SCHEMA_VERSION,
            hbar: r.hbar,
            t_star: r.t_star,
            crossed: r.crossed,
            max_error: r.max_error,
        })?;
    }
    w.flush()?;
    let curves = dir.join("ehrenfest_curves.csv");
    write_error_table(&curves, &report.curves)?;
    let result = json!({
        "threshold": report.threshold,
        "rows": report.rows,
        "nondecreasing": report.nondecreasing,
        "c": report.c,
        "growth_rate": report.growth_rate,
        "delta": report.delta,
        "asymptotic_c": report.asymptotic_c,
        "reference_cross_check": report.cross_check,
    });
    let json_path = dir.join("ehrenfest.json");
    write_json(&json_path, &summary("ehrenfest", cfg, result, runtimes(&report.curves)))?;
    Ok(vec![table, curves, json_path])
}

fn point_header(prefix: &str, d: usize) -> Vec<String> {
    (0..d)
        .map(|a| format!("{prefix}_q{a}"))
        .chain((0..d).map(|a| format!("{prefix}_p{a}")))
        .collect()
}

/// `kernel_decay.csv`, `kernel_peaks.csv` and `kernel.json`.
pub fn write_kernel(dir: &Path, cfg: &ExperimentConfig, report: &KernelReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let decay = dir.join("kernel_decay.csv");
    let mut w = csv_writer(&decay)?;
    w.write_record(["schema_version", "bin_lower", "bin_upper", "max_abs_ktilde", "count"])?;
    for b in &report.decay.bins {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            b.lower.to_string(),
            b.upper.to_string(),
            b.max_abs_ktilde.to_string(),
            b.count.to_string(),
        ])?;
    }
    w.flush()?;
    let peaks = dir.join("kernel_peaks.csv");
    let mut w = csv_writer(&peaks)?;
    let d = cfg.dim();
    let mut header = vec!["schema_version".to_string()];
    for p in ["x", "image", "peak"] {
        header.extend(point_header(p, d));
    }
    header.extend(["peak_distance".to_string(), "peak_value".to_string()]);
    w.write_record(&header)?;
    for p in &report.decay.peaks {
        let mut rec = vec![SCHEMA_VERSION.to_string()];
        for z in [&p.x, &p.image, &p.peak_y] {
            rec.extend(z.to_vec().iter().map(|v| v.to_string()));
        }
        rec.extend([p.peak_distance.to_string(), p.peak_value.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    let json_path = dir.join("kernel.json");
    let result = serde_json::to_value(report)?;
    write_json(&json_path, &summary("inspect-kernel", cfg, result, Value::Null))?;
    Ok(vec![decay, peaks, json_path])
}

#[derive(Serialize)]
struct PropagateCsvRow {
    schema_version: u32,
    t: f64,
    hk_norm: f64,
    error: f64,
    ensemble_coverage: f64,
    node_count: usize,
}

/// `propagate.csv`, `propagate.json` and, when enabled, `wave_<k>.txt`.
pub fn write_propagate(dir: &Path, cfg: &ExperimentConfig, report: &PropagateReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let table = dir.join("propagate.csv");
    let mut w = csv_writer(&table)?;
    for r in &report.rows {
        w.serialize(PropagateCsvRow {
            schema_version: SCHEMA_VERSION,
            t: r.t,
            hk_norm: r.hk_norm,
            error: r.error,
            ensemble_coverage: r.ensemble_coverage,
            node_count: r.node_count,
        })?;
    }
    w.flush()?;
    let mut files = vec![table];
    if cfg.output.dump_waves {
        for (k, wave) in report.waves.iter().enumerate() {
            let p = dir.join(format!("wave_{k}.txt"));
            wave.write_text(std::io::BufWriter::new(fs::File::create(&p)?))?;
            files.push(p);
        }
    }
    let result = json!({
        "reference": report.reference,
        "quadrature_coverage": report.quadrature_coverage,
        "rows": report.rows,
    });
    let json_path = dir.join("propagate.json");
    write_json(&json_path, &summary("propagate", cfg, result, json!({ "seconds": report.runtime_seconds })))?;
    files.push(json_path);
    Ok(files)
}
