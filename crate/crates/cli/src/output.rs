//! Artifact writers: manifest, CSV tables and space-time density records.

use anyhow::{Context, Result};
use lightpulse::analysis::Port;
use lightpulse::config::Config;
use lightpulse::propagator::{scheme_by_name, DensityRecorder};
use lightpulse::GridSpec;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DensityFormat {
    Csv,
    Binary,
}

pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let f = File::create(self.path(name)).with_context(|| format!("creating {name}"))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Writes a CSV with the given header; values use shortest round-trip formatting.
    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name)).with_context(|| format!("creating {name}"))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Manifest shared by all subcommands; `config` re-ingests with `--config manifest.json`.
pub fn manifest(command: &str, config: &Config, wall_seconds: f64, extra: Value) -> Value {
    let scheme = config.sequence.as_ref().map(|s| s.numerics.order.clone()).or_else(|| {
        config.calibrate.as_ref().map(|c| c.numerics.order.clone())
    });
    let scheme_info = scheme.as_deref().and_then(scheme_by_name).map(|s| {
        json!({ "name": s.name(), "composition": s.description() })
    });
    json!({
        "tool": "lightpulse",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "threads": rayon::current_num_threads(),
        "wall_seconds": wall_seconds,
        "scheme": scheme_info,
        "config": config.to_value(),
        "result": extra,
    })
}

pub fn write_ports(out: &OutDir, name: &str, ports: &[Port], raw: &[f64], normalized: &[f64]) -> Result<()> {
    let rows = ports.iter().enumerate().map(|(i, p)| {
        vec![
            p.label.clone(),
            num(p.momentum_hk),
            num(p.center),
            num(p.half_width),
            num(raw[i]),
            num(normalized[i]),
        ]
    });
    out.csv(name, &["port", "momentum_hk", "center_m", "half_width_m", "raw", "normalized"], rows)
}

/// density.json header plus density.bin (little-endian float32, row-major
/// [time][x]) or density.csv (first column t, one column per kept x).
pub fn write_density(out: &OutDir, grid: &GridSpec, rec: &DensityRecorder, format: DensityFormat) -> Result<()> {
    let cols = rec.rows.first().map_or(0, Vec::len);
    let dx = grid.dx() * rec.decimate as f64;
    let data_file = match format {
        DensityFormat::Binary => "density.bin",
        DensityFormat::Csv => "density.csv",
    };
    out.json(
        "density.json",
        &json!({
            "grid": grid,
            "decimate": rec.decimate,
            "stride": rec.stride,
            "x0": grid.x_min,
            "dx": dx,
            "rows": rec.rows.len(),
            "cols": cols,
            "times": rec.times,
            "dtype": "float32",
            "layout": "row-major [time][x]",
            "file": data_file,
        }),
    )?;
    match format {
        DensityFormat::Binary => {
            let mut w = BufWriter::new(File::create(out.path(data_file))?);
            for row in &rec.rows {
                for v in row {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()?;
        }
        DensityFormat::Csv => {
            let mut header = vec!["t".to_string()];
            header.extend((0..cols).map(|j| num(grid.x_min + j as f64 * dx)));
            let mut w = csv::Writer::from_path(out.path(data_file))?;
            w.write_record(&header)?;
            for (t, row) in rec.times.iter().zip(&rec.rows) {
                let mut r = vec![num(*t)];
                r.extend(row.iter().map(|v| format!("{v}")));
                w.write_record(&r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
