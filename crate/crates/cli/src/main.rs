//! Command-line driver: reads a config, runs one study and writes artifacts.

mod output;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lightpulse::calibration::optimize_rabi;
use lightpulse::config::{self, Config, FringeConfig};
use lightpulse::ode::complexity_benchmark;
use lightpulse::sequences::{
    convergence_scan, fringe_scan, run_gradiometer, run_sequence, run_trapped_mz, scan_phases, RecordSpec,
};
use output::{manifest, num, write_density, write_ports, DensityFormat, OutDir};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "lightpulse", version, about = "1D light-pulse atom interferometry simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or a manifest.json from a previous run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for parallel scans (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sequence once.
    Run {
        #[command(flatten)]
        common: Common,
        /// Record |psi|^2 every N steps.
        #[arg(long)]
        density_stride: Option<u64>,
        #[arg(long, value_enum, default_value = "binary")]
        format: DensityFormat,
    },
    /// Scan the laser phase of one pulse and fit the fringe.
    Fringe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        points: Option<usize>,
        /// Index of the pulse whose phase is scanned.
        #[arg(long)]
        phase_pulse: Option<usize>,
    },
    /// Find the Rabi frequency of a pulse from the [calibrate] table.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Scan the mirror k_eff correction of a two-interferometer gradiometer.
    Gradiometer {
        #[command(flatten)]
        common: Common,
    },
    /// Mean-field phase against arm imbalance for a trapped condensate.
    Trapped {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate one population over (dt, dx).
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Time the coupled-mode solver and the split-operator propagator.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
}

fn setup(common: &Common) -> Result<(Config, OutDir)> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().ok();
    }
    let cfg = config::load(&common.config)?;
    let out = OutDir::create(&common.out_dir)?;
    Ok((cfg, out))
}

fn cmd_run(common: &Common, density_stride: Option<u64>, format: DensityFormat) -> Result<()> {
    let (mut cfg, out) = setup(common)?;
    let start = Instant::now();
    let spec = cfg.sequence.as_mut().ok_or_else(|| lightpulse::Error::config("geometry", "no sequence is configured"))?;
    if let Some(stride) = density_stride {
        let rec = spec.record.get_or_insert(RecordSpec { stride, decimate: 1, free_interval: None });
        rec.stride = stride;
    }
    let spec = spec.clone();
    let r = run_sequence(&spec)?;
    for w in &r.warnings {
        log::warn!("{w}");
    }
    write_ports(&out, "populations.csv", &r.ports, &r.populations.raw, &r.populations.normalized)?;
    if let Some(rec) = &r.recorder {
        write_density(&out, &spec.grid, rec, format)?;
    }
    let result = json!({
        "geometry": r.geometry,
        "ports": r.ports,
        "populations": r.populations,
        "parasitic_fraction": r.parasitic_fraction,
        "initial_norm": r.initial_norm,
        "final_norm": r.final_norm,
        "steps": r.steps,
        "t0": r.t0,
        "t_end": r.t_end,
        "resolution": r.resolution,
        "warnings": r.warnings,
    });
    out.json("manifest.json", &manifest("run", &cfg, start.elapsed().as_secs_f64(), result))
}

fn cmd_fringe(common: &Common, points: Option<usize>, phase_pulse: Option<usize>) -> Result<()> {
    let (mut cfg, out) = setup(common)?;
    let start = Instant::now();
    let mut spec = cfg.sequence()?.clone();
    let points = points.or(cfg.fringe.as_ref().map(|f| f.points)).unwrap_or(spec.measurement.fringe_points);
    let phase_pulse = phase_pulse.or(cfg.fringe.as_ref().and_then(|f| f.phase_pulse));
    if let Some(p) = phase_pulse {
        spec.measurement.phase_pulse = Some(p);
    }
    cfg.fringe = Some(FringeConfig { points, phase_pulse });
    cfg.sequence = Some(spec.clone());
    let scan = fringe_scan(&spec, &scan_phases(points))?;
    let mut header = vec!["phi".to_string()];
    header.extend(scan.ports.iter().map(|p| format!("P_{}", p.label)));
    header.push("signal".into());
    let signal = scan.signal();
    let rows = scan.phis.iter().enumerate().map(|(i, phi)| {
        let mut r = vec![num(*phi)];
        r.extend(scan.populations[i].normalized.iter().map(|v| num(*v)));
        r.push(num(signal[i]));
        r
    });
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("fringe.csv", &header_ref, rows)?;
    let fit = json!({ "port": scan.ports[scan.fit_port].label, "fit": scan.fit });
    out.json("fit.json", &fit)?;
    let result = json!({ "fit": fit, "ports": scan.ports, "steps": scan.steps, "final_norms": scan.final_norms });
    out.json("manifest.json", &manifest("fringe", &cfg, start.elapsed().as_secs_f64(), result))
}

fn cmd_calibrate(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let start = Instant::now();
    let problem = cfg.calibration()?;
    let wr = problem.species.omega_r();
    let write_samples = |samples: &[(f64, f64)]| {
        let rows = samples.iter().map(|(w, p)| vec![num(*w), num(w / wr), num(*p)]);
        out.csv("calibration_samples.csv", &["omega_rad_s", "omega_wr", "transfer"], rows)
    };
    match optimize_rabi(problem) {
        Ok(c) => {
            write_samples(&c.samples)?;
            let result = json!({ "calibration": c, "omega_wr": c.omega / wr });
            out.json("calibration.json", &result)?;
            out.json("manifest.json", &manifest("calibrate", &cfg, start.elapsed().as_secs_f64(), result))
        }
        Err(e) => {
            if let lightpulse::Error::Calibration { samples, .. } = &e {
                write_samples(samples)?;
            }
            Err(e.into())
        }
    }
}

fn cmd_gradiometer(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let start = Instant::now();
    let spec = cfg.gradiometer_spec()?;
    let r = run_gradiometer(&spec)?;
    let unit = r.bragg_delta_k;
    let rows = r.points.iter().map(|p| {
        vec![
            num(p.delta_k),
            num(if unit != 0.0 { p.delta_k / unit } else { 0.0 }),
            num(p.phi),
            num(p.phi_upper),
            num(p.phi_lower),
            num(p.contrast_upper),
            num(p.contrast_lower),
        ]
    });
    out.csv(
        "gradiometer.csv",
        &["delta_k", "delta_k_fraction", "phi", "phi_upper", "phi_lower", "contrast_upper", "contrast_lower"],
        rows,
    )?;
    let result = json!({ "gradiometer": r, "crossing_ratio": r.crossing_ratio(), "phi_at_bragg": r.phase_at(unit) });
    out.json("gradiometer.json", &result)?;
    out.json("manifest.json", &manifest("gradiometer", &cfg, start.elapsed().as_secs_f64(), result))
}

fn cmd_trapped(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let start = Instant::now();
    let r = run_trapped_mz(&cfg.trapped_spec()?)?;
    let rows = r.points.iter().map(|p| {
        vec![
            num(p.delta_n_target),
            num(p.delta_n),
            num(p.omega_splitter),
            num(p.delta_phi),
            num(p.delta_phi_raw),
            num(p.contrast),
            num(p.model),
            num(p.mu_arms.0),
            num(p.mu_arms.1),
        ]
    });
    out.csv(
        "trapped.csv",
        &["delta_n_target", "delta_n", "omega_splitter", "delta_phi", "delta_phi_raw", "contrast", "model", "mu_arm1", "mu_arm2"],
        rows,
    )?;
    let result = json!({ "trapped": r });
    out.json("trapped.json", &result)?;
    out.json("manifest.json", &manifest("trapped", &cfg, start.elapsed().as_secs_f64(), result))
}

fn cmd_converge(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let start = Instant::now();
    let c = cfg.converge()?;
    let table = convergence_scan(cfg.sequence()?, &c.dt, &c.dx, c.observable)?;
    let rows = table.cells.iter().map(|cell| {
        vec![
            num(cell.dt),
            num(cell.dx),
            cell.n_points.to_string(),
            num(cell.value),
            num(cell.deviation),
            cell.flags.join(";"),
        ]
    });
    out.csv("converge.csv", &["dt", "dx", "n_points", "value", "deviation", "flags"], rows)?;
    let result = json!({ "convergence": table });
    out.json("converge.json", &result)?;
    out.json("manifest.json", &manifest("converge", &cfg, start.elapsed().as_secs_f64(), result))
}

fn cmd_benchmark(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let start = Instant::now();
    let b = cfg.benchmark()?;
    let table = complexity_benchmark(&b.sizes, b.steps, b.repeats)?;
    let rows = table.rows.iter().map(|r| vec![r.n.to_string(), num(r.t_ode), num(r.t_pde)]);
    out.csv("benchmark.csv", &["n", "t_ode", "t_pde"], rows)?;
    let result = json!({ "benchmark": table });
    out.json("benchmark.json", &result)?;
    out.json("manifest.json", &manifest("benchmark", &cfg, start.elapsed().as_secs_f64(), result))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<lightpulse::Error>())
        .map_or(1, |le| le.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run { common, density_stride, format } => cmd_run(common, *density_stride, *format),
        Command::Fringe { common, points, phase_pulse } => cmd_fringe(common, *points, *phase_pulse),
        Command::Calibrate { common } => cmd_calibrate(common),
        Command::Gradiometer { common } => cmd_gradiometer(common),
        Command::Trapped { common } => cmd_trapped(common),
        Command::Converge { common } => cmd_converge(common),
        Command::Benchmark { common } => cmd_benchmark(common),
    }
    .context("lightpulse failed");
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
