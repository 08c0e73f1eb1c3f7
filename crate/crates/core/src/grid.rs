//! Uniform position/momentum grids and resolution diagnostics.

use crate::error::{Error, Result};
use crate::units::{Species, HBAR};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Immutable sampling of a 1D domain together with its FFT plans.
///
/// `dp` and `delta_p_total` follow the textbook convention
/// `dp = 2πħ/(x_max − x_min)`, `Δp = 2πħ/dx`. The FFT itself samples momentum
/// at `p_step() = Δp/N`, which differs from `dp` by the factor (N−1)/N.
pub struct Grid {
    n_points: usize,
    x_min: f64,
    x_max: f64,
    dx: f64,
    dp: f64,
    delta_p_total: f64,
    x: Vec<f64>,
    p: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n_points)
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("dx", &self.dx)
            .finish()
    }
}

/// Serializable grid request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        make_grid(self.x_min, self.x_max, self.n_points)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points as f64 - 1.0)
    }

    /// Grid with spacing `dx` that covers at least this domain, centred on it.
    pub fn with_dx(&self, dx: f64) -> GridSpec {
        let len = self.x_max - self.x_min;
        let n = ((len / dx).ceil() as usize + 1).next_power_of_two().max(2);
        let c = 0.5 * (self.x_min + self.x_max);
        let half = 0.5 * (n as f64 - 1.0) * dx;
        GridSpec { x_min: c - half, x_max: c + half, n_points: n }
    }
}

pub fn make_grid(x_min: f64, x_max: f64, n_points: usize) -> Result<Arc<Grid>> {
    if n_points < 2 || !n_points.is_power_of_two() {
        return Err(Error::config(
            "grid.n_points",
            format!("{n_points} is not a power of two >= 2"),
        ));
    }
    if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::config("grid.x_max", format!("x_max {x_max} must exceed x_min {x_min}")));
    }
    let n = n_points as f64;
    let dx = (x_max - x_min) / (n - 1.0);
    let x = (0..n_points).map(|i| x_min + i as f64 * dx).collect();
    let delta_p_total = 2.0 * PI * HBAR / dx;
    let p_step = delta_p_total / n;
    let p = (0..n_points)
        .map(|j| {
            let j = if j < n_points / 2 { j as f64 } else { j as f64 - n };
            j * p_step
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_points);
    let ifft = planner.plan_fft_inverse(n_points);
    Ok(Arc::new(Grid {
        n_points,
        x_min,
        x_max,
        dx,
        dp: 2.0 * PI * HBAR / (x_max - x_min),
        delta_p_total,
        x,
        p,
        fft,
        ifft,
    }))
}

impl Grid {
    pub fn n_points(&self) -> usize {
        self.n_points
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dp(&self) -> f64 {
        self.dp
    }
    pub fn delta_p_total(&self) -> f64 {
        self.delta_p_total
    }
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    /// Momentum samples in FFT order.
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    /// Spacing of the FFT momentum samples.
    pub fn p_step(&self) -> f64 {
        self.delta_p_total / self.n_points as f64
    }
    /// Largest representable momentum magnitude, Δp/2.
    pub fn max_momentum(&self) -> f64 {
        0.5 * self.delta_p_total
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { x_min: self.x_min, x_max: self.x_max, n_points: self.n_points }
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fft.process(buf);
    }

    /// Unnormalized inverse transform in place; divide by N to invert `forward`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.ifft.process(buf);
    }

    pub fn index_of(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.dx).round();
        i.clamp(0.0, self.n_points as f64 - 1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub checks: Vec<ResolutionCheck>,
}

impl ResolutionReport {
    pub fn all_clear(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ResolutionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when the named flag is raised.
    pub fn flagged(&self, name: &str) -> bool {
        self.get(name).map_or(false, |c| !c.pass)
    }
}

/// Momentum orders kept free above `max_order` before truncation is flagged.
pub const MOMENTUM_MARGIN: f64 = 2.0;

/// Advisory resolution checks. `max_order` is the largest momentum of
/// interest in units of ħk.
pub fn check_resolution(
    grid: &Grid,
    species: &Species,
    max_order: u32,
    sigma_p: f64,
    max_separation: f64,
) -> ResolutionReport {
    let hk = species.hbar_k();
    let mut checks = Vec::new();
    let ratio = grid.dp() / hk;
    checks.push(ResolutionCheck {
        name: "dp_over_hbar_k".into(),
        value: ratio,
        threshold: 0.01,
        pass: ratio <= 0.01,
    });
    checks.push(ResolutionCheck {
        name: "sigma_p_resolved".into(),
        value: sigma_p / grid.p_step(),
        threshold: 10.0,
        pass: sigma_p >= 10.0 * grid.p_step(),
    });
    checks.push(ResolutionCheck {
        name: "position_extent".into(),
        value: grid.length() / max_separation.max(f64::MIN_POSITIVE),
        threshold: 1.0,
        pass: grid.length() >= max_separation,
    });
    let need = 2.0 * (max_order as f64 + MOMENTUM_MARGIN);
    let span = grid.delta_p_total() / hk;
    checks.push(ResolutionCheck {
        name: "momentum_truncation".into(),
        value: span,
        threshold: need,
        pass: span >= need,
    });
    let dx_ratio = grid.dx() / species.lambda_light;
    checks.push(ResolutionCheck {
        name: "dx_over_lambda".into(),
        value: dx_ratio,
        threshold: 0.1,
        pass: dx_ratio <= 0.1,
    });
    ResolutionReport { checks }
}
