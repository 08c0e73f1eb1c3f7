//! Mach-Zehnder interferometer of an interacting condensate in a waveguide,
//! with the arm imbalance set by a detuned first splitter.

use super::{fringe_scan_prepared, scan_phases, MeasurementMode, Prepared, SequenceSpec};
use crate::analysis::fringe::wrap_phase;
use crate::analysis::meanfield_phase_model;
use crate::error::{Error, Result};
use crate::state::{thomas_fermi, WaveFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Required agreement between achieved and requested imbalance.
pub const IMBALANCE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappedSpec {
    /// Mach-Zehnder with a `bec` initial state and a mean field.
    pub base: SequenceSpec,
    /// Requested δN/N values; 0 is always added as the phase baseline.
    pub imbalances: Vec<f64>,
    /// Splitter Rabi-frequency bracket as multiples of the configured value.
    #[serde(default = "default_bracket")]
    pub bracket: (f64, f64),
    #[serde(default = "default_points")]
    pub fringe_points: usize,
}

fn default_bracket() -> (f64, f64) {
    (0.7, 1.3)
}

fn default_points() -> usize {
    12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappedPoint {
    pub delta_n_target: f64,
    pub delta_n: f64,
    pub omega_splitter: f64,
    /// Fitted phase minus the δN = 0 phase.
    pub delta_phi: f64,
    pub delta_phi_raw: f64,
    pub contrast: f64,
    /// Uniform-density model at the achieved imbalance.
    pub model: f64,
    /// Arm chemical potentials just before the mirror pulse [J].
    pub mu_arms: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappedResult {
    pub points: Vec<TrappedPoint>,
    pub r_tf: f64,
    pub mu_tf: f64,
    /// Slope of Δφ against δN through the origin-free least-squares line.
    pub slope: f64,
    pub r_squared: f64,
}

/// Mean-field chemical potentials of two arms separated in momentum:
/// μ_i = g ∫ n_i (n_i + 2 n_j) dx / N_i, arms selected by momentum windows.
pub fn arm_chemical_potentials(psi: &WaveFunction, coupling: f64, arms: [(f64, f64); 2]) -> (f64, f64) {
    let grid = psi.grid();
    let mut spec = psi.amplitudes().to_vec();
    grid.forward(&mut spec);
    let part = |(c, w): (f64, f64)| {
        let mut buf: Vec<Complex64> = spec
            .iter()
            .zip(grid.p())
            .map(|(z, &p)| if (p - c).abs() < w { *z } else { Complex64::new(0.0, 0.0) })
            .collect();
        grid.inverse(&mut buf);
        let s = 1.0 / grid.n_points() as f64;
        buf.iter().map(|z| z.norm_sqr() * s * s).collect::<Vec<f64>>()
    };
    let n1 = part(arms[0]);
    let n2 = part(arms[1]);
    let dx = grid.dx();
    let mu = |a: &[f64], b: &[f64]| {
        let num: f64 = a.iter().zip(b).map(|(x, y)| x * (x + 2.0 * y)).sum::<f64>() * dx;
        let den: f64 = a.iter().sum::<f64>() * dx;
        coupling * num / den
    };
    (mu(&n1, &n2), mu(&n2, &n1))
}

/// δN/N = P(2nħk) − P(0) right after the first splitter.
fn imbalance(prep: &Prepared) -> Result<f64> {
    let w = prep.schedule.events[0].window().expect("splitter has a window");
    let mut psi = prep.initial.clone();
    prep.propagate(&mut psi, 0.0, w.1 + prep.spec.numerics.dt_interaction, None)?;
    let (_, pops) = prep.momentum_populations(&psi)?;
    Ok(pops.normalized[1] - pops.normalized[0])
}

fn with_splitter(base: &SequenceSpec, omega: f64) -> SequenceSpec {
    let mut s = base.clone();
    // Keep the recombiner at the calibrated value.
    s.params.recombiner.get_or_insert(base.params.splitter);
    s.params.splitter.omega = omega;
    s
}

/// Bisects the splitter Rabi frequency for the requested imbalance.
fn find_splitter(spec: &TrappedSpec, initial: &WaveFunction, target: f64) -> Result<(f64, f64)> {
    let omega0 = spec.base.params.splitter.omega;
    let eval = |omega: f64| -> Result<f64> {
        let prep = Prepared::with_initial(&with_splitter(&spec.base, omega), Some(initial.clone()))?;
        imbalance(&prep)
    };
    let (mut lo, mut hi) = (spec.bracket.0 * omega0, spec.bracket.1 * omega0);
    let (mut flo, fhi) = (eval(lo)? - target, eval(hi)? - target);
    if flo * fhi > 0.0 {
        return Err(Error::Calibration {
            message: format!("imbalance {target} not bracketed by splitter Rabi frequencies [{lo:e}, {hi:e}]"),
            samples: vec![(lo, flo + target), (hi, fhi + target)],
        });
    }
    let mut samples = Vec::new();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = eval(mid)? - target;
        samples.push((mid, f + target));
        if f.abs() <= IMBALANCE_TOL {
            return Ok((mid, f + target));
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = f;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration { message: format!("imbalance search for {target} did not converge"), samples })
}

pub fn run_trapped_mz(spec: &TrappedSpec) -> Result<TrappedResult> {
    let base = &spec.base;
    if base.geometry != "mach_zehnder" {
        return Err(Error::config("geometry", "trapped interferometry uses the mach_zehnder geometry"));
    }
    let mf = base.mean_field.ok_or_else(|| Error::config("mean_field", "trapped interferometry needs a mean field"))?;
    let omega_x = match base.initial {
        super::InitialState::Bec { omega_x, .. } => omega_x,
        _ => return Err(Error::config("initial.kind", "trapped interferometry starts from a bec")),
    };
    let prep0 = Prepared::new(base)?;
    let initial = prep0.initial.clone();
    let mut targets = spec.imbalances.clone();
    if !targets.contains(&0.0) {
        targets.insert(0, 0.0);
    }
    let phis = scan_phases(spec.fringe_points);
    let hk = base.species.hbar_k();
    let n = base.params.order as f64;
    let t = base.params.t_interrogation;
    let rows: Vec<(f64, f64, f64, f64, (f64, f64))> = targets
        .par_iter()
        .map(|&target| {
            let (omega, achieved) = find_splitter(spec, &initial, target)?;
            let mut s = with_splitter(base, omega);
            s.measurement.mode = Some(MeasurementMode::Position);
            let prep = Prepared::with_initial(&s, Some(initial.clone()))?;
            let mirror = prep.schedule.events.get(1).and_then(|e| e.window()).map_or(t, |w| w.0);
            let mut mid = initial.clone();
            prep.propagate(&mut mid, 0.0, mirror - s.numerics.dt_interaction, None)?;
            let mu = arm_chemical_potentials(&mid, mf.coupling(), [(0.0, n * hk), (2.0 * n * hk, n * hk)]);
            let scan = fringe_scan_prepared(&prep, &phis)?;
            Ok((achieved, omega, scan.fit.delta_phi, scan.fit.contrast, mu))
        })
        .collect::<Result<_>>()?;
    let base_phi = rows[targets.iter().position(|&d| d == 0.0).unwrap()].2;
    let points: Vec<TrappedPoint> = targets
        .iter()
        .zip(&rows)
        .map(|(&target, &(dn, omega, phi, c, mu))| TrappedPoint {
            delta_n_target: target,
            delta_n: dn,
            omega_splitter: omega,
            delta_phi: wrap_phase(phi - base_phi),
            delta_phi_raw: phi,
            contrast: c,
            model: meanfield_phase_model(dn, mf.n_atoms, mf.g1d, omega_x, &base.species, t),
            mu_arms: mu,
        })
        .collect();
    let (mu_tf, r_tf) = thomas_fermi(&base.species, omega_x, mf.g1d, mf.n_atoms);
    let x: Vec<f64> = points.iter().map(|p| p.delta_n).collect();
    let y: Vec<f64> = points.iter().map(|p| p.delta_phi).collect();
    let (slope, r_squared) = linear_r2(&x, &y);
    Ok(TrappedResult { points, r_tf, mu_tf, slope, r_squared })
}

/// Slope and coefficient of determination of a least-squares line.
pub fn linear_r2(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, 1.0);
    }
    (sxy / sxx, sxy * sxy / (sxx * syy))
}
