//! Two interferometers separated by a baseline, run as independent
//! simulations with offset gravity and lattice origins.

use super::{fringe_scan_prepared, scan_phases, Prepared, SequenceSpec};
use crate::analysis::fringe::wrap_phase;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradiometerSpec {
    /// Shared interferometer; its `frame_offset` and `mirror_delta_k` are overridden.
    pub base: SequenceSpec,
    /// Frame offset of the upper interferometer [m].
    pub upper_offset: f64,
    /// Frame offset of the lower interferometer [m].
    #[serde(default)]
    pub lower_offset: f64,
    /// Mirror k_eff corrections to scan [1/m].
    pub delta_k: Vec<f64>,
    #[serde(default = "default_points")]
    pub fringe_points: usize,
}

fn default_points() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradiometerPoint {
    pub delta_k: f64,
    pub phi_upper: f64,
    pub phi_lower: f64,
    /// Φ = Δφ_lower − Δφ_upper, wrapped to (−π, π]; this sign gives
    /// Φ(0) = +k_eff Γ h T² for a Bragg gradiometer.
    pub phi: f64,
    pub contrast_upper: f64,
    pub contrast_lower: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradiometerResult {
    pub points: Vec<GradiometerPoint>,
    /// Effective wavenumber of the momentum separation, 2(n + n_Bloch)k.
    pub k_eff: f64,
    /// Analytic Φ(0) = k_eff Γ h T² for a pure Bragg interferometer.
    pub reference_phase: f64,
    /// Bragg compensation Γ k_eff T²/2.
    pub bragg_delta_k: f64,
    /// Least-squares line Φ = slope·Δk + intercept.
    pub slope: f64,
    pub intercept: f64,
    pub zero_crossing: Option<f64>,
}

impl GradiometerResult {
    pub fn crossing_ratio(&self) -> Option<f64> {
        self.zero_crossing.map(|z| z / self.bragg_delta_k)
    }

    /// Φ from the fitted line.
    pub fn phase_at(&self, delta_k: f64) -> f64 {
        self.slope * delta_k + self.intercept
    }
}

/// Momentum separation between the arms in units of ħk.
fn separation_hk(spec: &SequenceSpec) -> f64 {
    let n = spec.params.order as f64;
    match (spec.geometry.as_str(), spec.params.bloch) {
        ("bragg_bloch", Some(b)) => 2.0 * (n + b.n_bloch as f64),
        ("double_bragg", _) => 4.0 * n,
        _ => 2.0 * n,
    }
}

/// Bragg compensation Γ·k_eff·T²/2 for the configured gravity gradient [1/m].
pub fn bragg_delta_k(spec: &SequenceSpec) -> f64 {
    let gamma = spec.gravity.map_or(0.0, |g| g.gamma);
    let t = spec.params.t_interrogation;
    0.5 * gamma * separation_hk(spec) * spec.species.k() * t * t
}

fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn run_gradiometer(spec: &GradiometerSpec) -> Result<GradiometerResult> {
    if spec.delta_k.is_empty() {
        return Err(Error::config("gradiometer.delta_k", "scan list is empty"));
    }
    let base = &spec.base;
    let gamma = base.gravity.map_or(0.0, |g| g.gamma);
    let t = base.params.t_interrogation;
    let k_eff = separation_hk(base) * base.species.k();
    let baseline = spec.upper_offset - spec.lower_offset;
    let phis = scan_phases(spec.fringe_points);
    let jobs: Vec<(usize, bool)> = (0..spec.delta_k.len()).flat_map(|i| [(i, true), (i, false)]).collect();
    let fits: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, upper)| {
            let mut s = base.clone();
            s.mirror_delta_k = spec.delta_k[i];
            s.frame_offset = if upper { spec.upper_offset } else { spec.lower_offset };
            let label = if upper { "upper" } else { "lower" };
            let prep = Prepared::new(&s)?;
            let scan = fringe_scan_prepared(&prep, &phis).map_err(|e| match e {
                Error::Fit { message, trace } => Error::Fit { message: format!("{label} arm: {message}"), trace },
                Error::LowContrast { contrast, residual } => Error::Fit {
                    message: format!("{label} arm: contrast {contrast:.3e} below noise {residual:.3e}"),
                    trace: Vec::new(),
                },
                other => other,
            })?;
            Ok((scan.fit.delta_phi, scan.fit.contrast))
        })
        .collect::<Result<_>>()?;
    let points: Vec<GradiometerPoint> = spec
        .delta_k
        .iter()
        .enumerate()
        .map(|(i, &dk)| {
            let (pu, cu) = fits[2 * i];
            let (pl, cl) = fits[2 * i + 1];
            GradiometerPoint {
                delta_k: dk,
                phi_upper: pu,
                phi_lower: pl,
                phi: wrap_phase(pl - pu),
                contrast_upper: cu,
                contrast_lower: cl,
            }
        })
        .collect();
    let x: Vec<f64> = points.iter().map(|p| p.delta_k).collect();
    let y: Vec<f64> = points.iter().map(|p| p.phi).collect();
    let (slope, intercept) = line_fit(&x, &y);
    let zero_crossing = (points.len() >= 2 && slope != 0.0).then(|| -intercept / slope);
    Ok(GradiometerResult {
        points,
        k_eff,
        reference_phase: k_eff * gamma * baseline * t * t,
        bragg_delta_k: bragg_delta_k(base),
        slope,
        intercept,
        zero_crossing,
    })
}

/// Area ratio of a Bragg+Bloch interferometer to a pure Bragg one of the
/// same total momentum, from the classical arm separation.
pub fn bloch_area_ratio(spec: &SequenceSpec) -> Option<f64> {
    let b = spec.params.bloch?;
    let t = spec.params.t_interrogation;
    let n = spec.params.order as f64;
    let nb = b.n_bloch as f64;
    let t1 = b.delay + b.tau_load;
    let tc = b.tau_chirp;
    // Velocity deficit of the upper arm relative to 2(n + n_B)v_r, integrated
    // against (T − s) over the first half; the second half mirrors it.
    let deficit = 2.0 * nb * (t1 * t - 0.5 * t1 * t1) + 2.0 * nb * (0.5 * tc * (t - t1) - tc * tc / 6.0);
    let full = 2.0 * (n + nb) * 0.5 * t * t;
    Some(1.0 - deficit / full)
}
