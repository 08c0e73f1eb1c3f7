//! Momentum-space coupled-mode solver for plane-wave lattices and a scaling
//! benchmark against the split-operator propagator.
//!
//! In the lattice rest frame a standing wave 2ħΩcos²(kx) couples the plane
//! waves (m + δ)ħk to (m ± 2 + δ)ħk only, so every sub-offset δ evolves as an
//! independent ladder:
//! iħ ġ_{m+δ} = ħ((m+δ)²ω_r + Ω) g_{m+δ} + (ħΩ/2)(g_{m+2+δ} + g_{m−2+δ}).
//! Spatially varying intensity and mean-field couplings are not implemented;
//! they turn the ladder into dense couplings across all δ.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{LatticeTerm, PotentialField, PulseEnvelope, Term};
use crate::propagator::{propagate_field, StepScheme};
use crate::state::WaveFunction;
use crate::units::Species;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

/// Boundary-order population above which the truncation is rejected.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    /// Orders run over −n_m..=n_m.
    pub n_m: i32,
    /// Sub-offsets δ_j = −½ + j/N_δ in units of ħk.
    pub deltas: Vec<f64>,
    /// Amplitudes indexed [order][δ].
    pub g: Vec<Complex64>,
}

impl ModeBasis {
    pub fn n_orders(&self) -> usize {
        (2 * self.n_m + 1) as usize
    }

    pub fn n_delta(&self) -> usize {
        self.deltas.len()
    }

    /// Number of coupled equations.
    pub fn n_eq(&self) -> usize {
        self.g.len()
    }

    fn idx(&self, m: i32, j: usize) -> usize {
        (m + self.n_m) as usize * self.n_delta() + j
    }

    pub fn amplitude(&self, m: i32, j: usize) -> Complex64 {
        self.g[self.idx(m, j)]
    }

    /// Gaussian momentum distribution of width `sigma_p_hk` centred on order `m0`.
    pub fn gaussian(n_m: i32, n_delta: usize, sigma_p_hk: f64, m0: i32) -> Result<Self> {
        if n_m < 1 || n_delta < 1 || m0.abs() > n_m || !(sigma_p_hk > 0.0) {
            return Err(Error::config("ode", "need n_m >= 1, n_delta >= 1, |m0| <= n_m, sigma_p > 0"));
        }
        let deltas: Vec<f64> = (0..n_delta).map(|j| -0.5 + j as f64 / n_delta as f64).collect();
        let mut b = ModeBasis { n_m, deltas, g: vec![Complex64::new(0.0, 0.0); (2 * n_m + 1) as usize * n_delta] };
        for j in 0..n_delta {
            let d = b.deltas[j];
            let i = b.idx(m0, j);
            b.g[i] = Complex64::new((-d * d / (4.0 * sigma_p_hk * sigma_p_hk)).exp(), 0.0);
        }
        if !(b.norm() > 0.0) {
            return Err(Error::config("ode", "sub-offset grid does not resolve the momentum width"));
        }
        b.normalize();
        Ok(b)
    }

    pub fn norm(&self) -> f64 {
        self.g.iter().map(|z| z.norm_sqr()).sum()
    }

    fn normalize(&mut self) {
        let s = 1.0 / self.norm().sqrt();
        self.g.iter_mut().for_each(|z| *z *= s);
    }

    /// Σ_δ |g_{m+δ}|².
    pub fn order_population(&self, m: i32) -> f64 {
        (0..self.n_delta()).map(|j| self.amplitude(m, j).norm_sqr()).sum()
    }

    pub fn boundary_population(&self) -> f64 {
        self.order_population(-self.n_m).max(self.order_population(self.n_m))
    }

    fn check_grid(&self, grid: &Grid, species: &Species) -> Result<()> {
        let hk = species.hbar_k();
        let ratio = hk / (self.n_delta() as f64 * grid.p_step());
        if (ratio - 1.0).abs() > 1e-9 {
            return Err(Error::config("ode", "grid momentum step must equal hbar k / N_delta"));
        }
        if (self.n_m as f64 + 0.5) * hk > grid.max_momentum() {
            return Err(Error::config("ode", "grid momentum range does not cover all orders"));
        }
        Ok(())
    }

    /// Position-space wavefunction with the same momentum amplitudes.
    pub fn to_wavefunction(&self, grid: &Arc<Grid>, species: &Species) -> Result<WaveFunction> {
        self.check_grid(grid, species)?;
        let n = grid.n_points();
        let nd = self.n_delta() as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for m in -self.n_m..=self.n_m {
            for j in 0..self.n_delta() {
                // p = (m + δ_j)ħk = (m·N_δ − N_δ/2 + j)·p_step
                let q = m as i64 * nd - nd / 2 + j as i64;
                buf[q.rem_euclid(n as i64) as usize] = self.amplitude(m, j);
            }
        }
        grid.inverse(&mut buf);
        let mut psi = WaveFunction::new(grid.clone(), buf, 0.0)?;
        psi.normalize();
        Ok(psi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeReport {
    pub steps: u64,
    pub norm_drift: f64,
    pub boundary_population: f64,
}

fn derivative(b: &ModeBasis, g: &[Complex64], omega: f64, wr: f64, out: &mut [Complex64]) {
    let nd = b.n_delta();
    let no = b.n_orders();
    let half = 0.5 * omega;
    for mi in 0..no {
        let m = mi as f64 - b.n_m as f64;
        for j in 0..nd {
            let i = mi * nd + j;
            let md = m + b.deltas[j];
            let mut c = g[i] * (md * md * wr + omega);
            if mi >= 2 {
                c += g[i - 2 * nd] * half;
            }
            if mi + 2 < no {
                c += g[i + 2 * nd] * half;
            }
            // ġ = −i·c
            out[i] = Complex64::new(c.im, -c.re);
        }
    }
}

/// Classic RK4 integration of the coupled ladder from `t0` to `t_end`.
pub fn ode_propagate(
    basis: &mut ModeBasis,
    envelope: &PulseEnvelope,
    species: &Species,
    t0: f64,
    t_end: f64,
    rk_dt: f64,
) -> Result<OdeReport> {
    if !(rk_dt > 0.0) || !(t_end >= t0) {
        return Err(Error::config("ode.rk_dt", "need rk_dt > 0 and t_end >= t0"));
    }
    let n0 = basis.norm();
    let wr = species.omega_r();
    let steps = (((t_end - t0) / rk_dt) - 1e-9).ceil().max(0.0) as u64;
    let h = if steps > 0 { (t_end - t0) / steps as f64 } else { 0.0 };
    let n = basis.n_eq();
    let zero = Complex64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut tmp = vec![zero; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        // Support membership is decided at the step midpoint so that all stages see one pulse state.
        let probe = t + 0.5 * h;
        let (wa, wm, wb) =
            (envelope.value_probe(t, probe), envelope.value_probe(probe, probe), envelope.value_probe(t + h, probe));
        let g = basis.g.clone();
        derivative(basis, &g, wa, wr, &mut k1);
        tmp.iter_mut().zip(&g).zip(&k1).for_each(|((o, a), k)| *o = a + k * (0.5 * h));
        derivative(basis, &tmp, wm, wr, &mut k2);
        tmp.iter_mut().zip(&g).zip(&k2).for_each(|((o, a), k)| *o = a + k * (0.5 * h));
        derivative(basis, &tmp, wm, wr, &mut k3);
        tmp.iter_mut().zip(&g).zip(&k3).for_each(|((o, a), k)| *o = a + k * h);
        derivative(basis, &tmp, wb, wr, &mut k4);
        for i in 0..n {
            basis.g[i] = g[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        if !basis.g[0].re.is_finite() {
            return Err(Error::numerical(s + 1, "non-finite ODE amplitude"));
        }
    }
    let boundary = basis.boundary_population();
    if boundary > TRUNCATION_LIMIT {
        return Err(Error::Truncation { population: boundary, limit: TRUNCATION_LIMIT });
    }
    Ok(OdeReport { steps, norm_drift: (basis.norm() - n0).abs(), boundary_population: boundary })
}

/// Standing-wave lattice term for the PDE counterpart of an ODE run.
pub fn standing_lattice(envelope: PulseEnvelope, species: &Species) -> Term {
    Term::Lattice(LatticeTerm {
        envelope,
        k_lattice: species.k(),
        lattice_velocity: 0.0,
        phase: 0.0,
        direction: 1,
        x_origin: 0.0,
    })
}

/// Populations of orders −n_m..=n_m from a PDE state, binned on [m−½, m+½)ħk.
pub fn pde_order_populations(psi: &WaveFunction, species: &Species, n_m: i32) -> Vec<f64> {
    let spec = psi.momentum_spectrum();
    let hk = species.hbar_k();
    // Shift by half a sample so that δ = −½ falls inside its own bin.
    let eps = 0.5 * psi.grid().p_step();
    (-n_m..=n_m).map(|m| spec.bin(m as f64 * hk - eps, 0.5 * hk)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub orders: Vec<i32>,
    pub ode: Vec<f64>,
    pub pde: Vec<f64>,
    pub max_abs_diff: f64,
}

/// Runs one standing-wave pulse through both solvers from the same initial amplitudes.
pub fn ode_pde_equivalence(
    basis: &ModeBasis,
    envelope: &PulseEnvelope,
    species: &Species,
    grid: &Arc<Grid>,
    scheme: &StepScheme,
    rk_dt: f64,
) -> Result<EquivalenceReport> {
    let (a, b) = envelope.support();
    let t_end = b + scheme.dt_interaction;
    let mut psi = basis.to_wavefunction(grid, species)?;
    psi.set_time(a);
    let field = PotentialField::new(&[standing_lattice(*envelope, species)], grid);
    propagate_field(&mut psi, &field, species.mass, scheme, None, t_end, None)?;
    let mut ode = basis.clone();
    ode_propagate(&mut ode, envelope, species, a, t_end, rk_dt)?;
    let orders: Vec<i32> = (-basis.n_m..=basis.n_m).collect();
    let ode_pops: Vec<f64> = orders.iter().map(|&m| ode.order_population(m)).collect();
    let pde_pops = pde_order_populations(&psi, species, basis.n_m);
    let max_abs_diff = ode_pops.iter().zip(&pde_pops).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(EquivalenceReport { orders, ode: ode_pops, pde: pde_pops, max_abs_diff })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub t_ode: f64,
    pub t_pde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    /// Least-squares exponents of log t against log N (None for one row).
    pub ode_slope: Option<f64>,
    pub pde_slope: Option<f64>,
}

fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Times `steps` steps of one plane-wave pulse for both solvers at matched size
/// N_eq ≈ N_grid. Each cell reports the best of `repeats` runs.
pub fn complexity_benchmark(sizes: &[usize], steps: u64, repeats: usize) -> Result<BenchmarkTable> {
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("benchmark.sizes", "sizes must be ascending"));
    }
    let species = Species::rb87();
    let lambda = species.lambda_light;
    let dt = 1e-6;
    let env = PulseEnvelope::gaussian(species.omega_r(), 0.0, 25e-6);
    let mut rows = Vec::new();
    for &n in sizes {
        if !n.is_power_of_two() || n < 64 {
            return Err(Error::config("benchmark.sizes", "sizes must be powers of two >= 64"));
        }
        let grid = crate::grid::make_grid(-0.5 * n as f64 * lambda / 32.0, (0.5 * n as f64 - 1.0) * lambda / 32.0, n)?;
        let field = PotentialField::new(&[standing_lattice(env, &species)], &grid);
        let scheme = StepScheme::strang(dt, dt);
        let n_delta = (n / 16).max(1);
        let mut t_pde = f64::INFINITY;
        let mut t_ode = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let mut psi = WaveFunction::new(grid.clone(), vec![Complex64::new(1.0, 0.0); n], -(steps as f64) * dt)?;
            psi.normalize();
            let t = Instant::now();
            propagate_field(&mut psi, &field, species.mass, &scheme, None, 0.0, None)?;
            t_pde = t_pde.min(t.elapsed().as_secs_f64());

            // 2·7 + 1 = 15 orders; N_eq = 15·N/16 ≈ N.
            let mut b = ModeBasis::gaussian(7, n_delta, 0.05, 0)?;
            let t = Instant::now();
            ode_propagate(&mut b, &env, &species, -(steps as f64) * dt, 0.0, dt)?;
            t_ode = t_ode.min(t.elapsed().as_secs_f64());
        }
        rows.push(BenchmarkRow { n, t_ode, t_pde });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let yo: Vec<f64> = rows.iter().map(|r| r.t_ode).collect();
    let yp: Vec<f64> = rows.iter().map(|r| r.t_pde).collect();
    Ok(BenchmarkTable { ode_slope: loglog_slope(&x, &yo), pde_slope: loglog_slope(&x, &yp), rows })
}

/// Free kinetic phase of order m + δ after time t, for reference.
pub fn kinetic_phase(md: f64, species: &Species, t: f64) -> f64 {
    -md * md * species.omega_r() * t
}
