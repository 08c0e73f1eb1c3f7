//! Wavefunctions on a grid: creation, inspection and serialization.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{HarmonicTerm, PotentialField, Term};
use crate::propagator::{Kernel, MeanField};
use crate::units::{Species, HBAR};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct WaveFunction {
    grid: Arc<Grid>,
    amplitudes: Vec<Complex64>,
    t: f64,
}

/// Momentum density on ascending momenta; `Σ density · dp = 1` for a normalized state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumSpectrum {
    pub p: Vec<f64>,
    pub density: Vec<f64>,
    pub dp: f64,
}

impl MomentumSpectrum {
    pub fn total(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.dp
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().zip(&self.density).map(|(p, d)| p * d).sum::<f64>() * self.dp / self.total()
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        let v = self.p.iter().zip(&self.density).map(|(p, d)| (p - m).powi(2) * d).sum::<f64>() * self.dp;
        (v / self.total()).sqrt()
    }

    /// Probability in [center − half_width, center + half_width).
    pub fn bin(&self, center: f64, half_width: f64) -> f64 {
        self.p
            .iter()
            .zip(&self.density)
            .filter(|(p, _)| **p >= center - half_width && **p < center + half_width)
            .map(|(_, d)| d)
            .sum::<f64>()
            * self.dp
    }
}

impl WaveFunction {
    pub fn new(grid: Arc<Grid>, amplitudes: Vec<Complex64>, t: f64) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::config(
                "state",
                format!("{} amplitudes for a {}-point grid", amplitudes.len(), grid.n_points()),
            ));
        }
        Ok(WaveFunction { grid, amplitudes, t })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }
    pub fn time(&self) -> f64 {
        self.t
    }
    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm().sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn overlap(&self, other: &WaveFunction) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.dx()
    }

    /// |⟨a|b⟩| for normalized states.
    pub fn fidelity(&self, other: &WaveFunction) -> f64 {
        self.overlap(other).norm()
    }

    pub fn mean_position(&self) -> f64 {
        let w: f64 = self.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        self.amplitudes.iter().zip(self.grid.x()).map(|(z, x)| z.norm_sqr() * x).sum::<f64>() / w
    }

    pub fn position_std(&self) -> f64 {
        let m = self.mean_position();
        let w: f64 = self.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        let v = self.amplitudes.iter().zip(self.grid.x()).map(|(z, x)| z.norm_sqr() * (x - m).powi(2)).sum::<f64>();
        (v / w).sqrt()
    }

    pub fn momentum_spectrum(&self) -> MomentumSpectrum {
        let mut buf = self.amplitudes.clone();
        self.grid.forward(&mut buf);
        let n = buf.len();
        let dp = self.grid.p_step();
        let dx = self.grid.dx();
        let scale = dx * dx / (2.0 * PI * HBAR);
        let half = n / 2;
        let order = (half..n).chain(0..half);
        let p = order.clone().map(|j| self.grid.p()[j]).collect();
        let density = order.map(|j| buf[j].norm_sqr() * scale).collect();
        MomentumSpectrum { p, density, dp }
    }

    /// CSV with header `x,re,im`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,re,im")?;
        for (x, z) in self.grid.x().iter().zip(&self.amplitudes) {
            writeln!(w, "{x:e},{:e},{:e}", z.re, z.im)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(grid: &Arc<Grid>, path: &Path, t: f64) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut amps = Vec::with_capacity(grid.n_points());
        for (i, line) in r.lines().enumerate().skip(1) {
            let line = line?;
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::config(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
            if f.len() != 3 {
                return Err(Error::config(format!("{}:{}", path.display(), i + 1), "expected x,re,im"));
            }
            amps.push(Complex64::new(f[1], f[2]));
        }
        WaveFunction::new(grid.clone(), amps, t)
    }

    /// Little-endian f64 triplets (x, re, im).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for (x, z) in self.grid.x().iter().zip(&self.amplitudes) {
            for v in [*x, z.re, z.im] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(grid: &Arc<Grid>, path: &Path, t: f64) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() != 24 * grid.n_points() {
            return Err(Error::config(path.display().to_string(), "size does not match grid"));
        }
        let amps = bytes
            .chunks_exact(24)
            .map(|c| {
                let f = |o: usize| f64::from_le_bytes(c[o..o + 8].try_into().unwrap());
                Complex64::new(f(8), f(16))
            })
            .collect();
        WaveFunction::new(grid.clone(), amps, t)
    }
}

/// Minimum-uncertainty Gaussian with momentum width `sigma_p`, centred at (x0, p0).
pub fn gaussian_packet(grid: &Arc<Grid>, sigma_p: f64, x0: f64, p0: f64) -> Result<WaveFunction> {
    if !(sigma_p >= 10.0 * grid.p_step()) {
        return Err(Error::config(
            "initial_state.sigma_p",
            format!(
                "sigma_p = {sigma_p:e} not resolved by momentum step {:e}; enlarge the grid",
                grid.p_step()
            ),
        ));
    }
    let sx = HBAR / (2.0 * sigma_p);
    if x0 - 5.0 * sx < grid.x_min() || x0 + 5.0 * sx > grid.x_max() {
        return Err(Error::config(
            "initial_state.x0",
            format!("packet of width {sx:e} m at {x0:e} m is clipped by the grid"),
        ));
    }
    let k0 = p0 / HBAR;
    let amps = grid
        .x()
        .iter()
        .map(|&x| {
            let d = x - x0;
            Complex64::from_polar((-d * d / (4.0 * sx * sx)).exp(), k0 * d)
        })
        .collect();
    let mut psi = WaveFunction::new(grid.clone(), amps, 0.0)?;
    psi.normalize();
    Ok(psi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateOptions {
    pub max_iterations: u64,
    /// Imaginary time steps in units of 1/ω_c, with ω_c = max(ω_x, μ_TF/ħ).
    pub stages: [f64; 3],
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions { max_iterations: 400_000, stages: [0.05, 0.0125, 0.003] }
    }
}

/// Thomas-Fermi chemical potential and radius for a 1D harmonic trap.
pub fn thomas_fermi(species: &Species, omega_x: f64, g1d: f64, n_atoms: f64) -> (f64, f64) {
    // N g = (4/3) μ R with R = √(2μ/mω²).
    let m = species.mass;
    let mu = (3.0 * n_atoms * g1d * omega_x * m.sqrt() / (4.0 * 2f64.sqrt())).powf(2.0 / 3.0);
    (mu, (2.0 * mu / (m * omega_x * omega_x)).sqrt())
}

fn energy(psi: &WaveFunction, v: &[f64], g: f64, mass: f64) -> f64 {
    let grid = psi.grid();
    let mut buf = psi.amplitudes().to_vec();
    grid.forward(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (z, p) in buf.iter().zip(grid.p()) {
        num += z.norm_sqr() * p * p / (2.0 * mass);
        den += z.norm_sqr();
    }
    let dx = grid.dx();
    let pot: f64 = psi
        .amplitudes()
        .iter()
        .zip(v)
        .map(|(z, v)| {
            let r = z.norm_sqr();
            r * (v + 0.5 * g * r)
        })
        .sum::<f64>()
        * dx;
    num / den + pot
}

/// Stationary GPE state in ½mω_x²x² by imaginary-time split-operator steps.
pub fn ground_state_gpe(
    grid: &Arc<Grid>,
    species: &Species,
    omega_x: f64,
    g1d: f64,
    n_atoms: f64,
    tol: f64,
) -> Result<WaveFunction> {
    ground_state_gpe_with(grid, species, omega_x, g1d, n_atoms, tol, GroundStateOptions::default())
}

pub fn ground_state_gpe_with(
    grid: &Arc<Grid>,
    species: &Species,
    omega_x: f64,
    g1d: f64,
    n_atoms: f64,
    tol: f64,
    opts: GroundStateOptions,
) -> Result<WaveFunction> {
    if !(omega_x > 0.0) || !(g1d >= 0.0) || !(tol > 0.0) || !(n_atoms > 0.0) {
        return Err(Error::config("initial_state", "need omega_x > 0, g1d >= 0, n_atoms > 0, tol > 0"));
    }
    let m = species.mass;
    let trap = HarmonicTerm { omega: omega_x, x_center: 0.0, mass: m };
    let field = PotentialField::new(&[Term::Harmonic(trap)], grid);
    let v: Vec<f64> = grid.x().iter().map(|&x| trap.value_at(x)).collect();
    let g = g1d * n_atoms;
    let a_ho = (HBAR / (m * omega_x)).sqrt();
    let (mu, r_tf) = thomas_fermi(species, omega_x, g1d, n_atoms);
    let amps: Vec<Complex64> = if g > 0.0 && r_tf > 3.0 * a_ho {
        v.iter()
            .zip(grid.x())
            .map(|(&vx, &x)| {
                let tf = ((mu - vx) / g).max(0.0);
                Complex64::new(tf.sqrt() + 1e-3 * (-(x * x) / (2.0 * r_tf * r_tf)).exp(), 0.0)
            })
            .collect()
    } else {
        grid.x().iter().map(|&x| Complex64::new((-(x * x) / (2.0 * a_ho * a_ho)).exp(), 0.0)).collect()
    };
    let mut psi = WaveFunction::new(grid.clone(), amps, 0.0)?;
    psi.normalize();
    let omega_c = omega_x.max(if g > 0.0 { mu / HBAR } else { 0.0 });
    let mf = MeanField { g1d, n_atoms };
    let mut k = Kernel::new(&field, m, Some(&mf)).imaginary();
    let check = 10u64;
    let mut iters = 0u64;
    let mut residual = f64::INFINITY;
    for &stage in &opts.stages {
        let h = stage / omega_c;
        k.set_segment(f64::NEG_INFINITY, f64::INFINITY, h);
        let mut e_old = energy(&psi, &v, g, m);
        let mut stage_iters = 0u64;
        loop {
            for _ in 0..check {
                let a = psi.amplitudes_mut();
                k.kick(a, 0.0, 0.5 * h);
                k.drift(a, h);
                k.kick(a, 0.0, 0.5 * h);
                psi.normalize();
            }
            iters += check;
            stage_iters += check;
            let e = energy(&psi, &v, g, m);
            if !e.is_finite() {
                return Err(Error::numerical(iters, "non-finite energy in imaginary time"));
            }
            residual = ((e - e_old) / e).abs() / check as f64;
            e_old = e;
            if residual < tol && stage_iters >= 5 * check {
                break;
            }
            if iters >= opts.max_iterations {
                return Err(Error::numerical(
                    iters,
                    format!("ground state not converged, relative energy change {residual:.3e}"),
                ));
            }
        }
    }
    log::debug!("ground state converged after {iters} iterations, residual {residual:.2e}");
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::propagator::{split_step, StepScheme};

    fn rb() -> Species {
        Species::rb87()
    }

    #[test]
    fn gaussian_moments() {
        let s = rb();
        let hk = s.hbar_k();
        let g = make_grid(-2e-3, 2e-3, 1 << 16).unwrap();
        let psi = gaussian_packet(&g, 0.01 * hk, 0.0, 0.0).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        let sp = psi.momentum_spectrum();
        assert!((sp.total() - 1.0).abs() < 1e-10);
        assert!((sp.std() / (0.01 * hk) - 1.0).abs() < 0.01);
    }

    #[test]
    fn shifted_packet_and_position_width() {
        let s = rb();
        let hk = s.hbar_k();
        let g = make_grid(-50e-6, 50e-6, 8192).unwrap();
        let psi = gaussian_packet(&g, 0.1 * hk, 5e-6, 2.0 * hk).unwrap();
        let sp = psi.momentum_spectrum();
        assert!((sp.mean() / hk - 2.0).abs() < 0.01);
        assert!((psi.mean_position() - 5e-6).abs() < 0.01 * 5e-6);
        assert!((psi.position_std() - 0.62e-6).abs() < 0.01e-6, "{}", psi.position_std());
        assert!((psi.position_std() / (HBAR / (0.2 * hk)) - 1.0).abs() < 0.01);
    }

    #[test]
    fn gaussian_rejects_bad_grids() {
        let s = rb();
        let g = make_grid(-5e-6, 5e-6, 1024).unwrap();
        assert!(gaussian_packet(&g, 0.01 * s.hbar_k(), 0.0, 0.0).is_err());
        let g = make_grid(-50e-6, 50e-6, 8192).unwrap();
        assert!(gaussian_packet(&g, 0.1 * s.hbar_k(), 48e-6, 0.0).is_err());
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let s = rb();
        let g = make_grid(-20e-6, 20e-6, 512).unwrap();
        let psi = gaussian_packet(&g, 0.3 * s.hbar_k(), 1e-6, s.hbar_k()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let b = dir.path().join("psi.bin");
        psi.write_binary(&b).unwrap();
        let back = WaveFunction::read_binary(&g, &b, 0.0).unwrap();
        assert_eq!(back.amplitudes(), psi.amplitudes());
        let c = dir.path().join("psi.csv");
        psi.write_csv(&c).unwrap();
        let back = WaveFunction::read_csv(&g, &c, 0.0).unwrap();
        let err = back.amplitudes().iter().zip(psi.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-5);
    }

    #[test]
    fn harmonic_ground_state_without_interactions() {
        let s = rb();
        let w = 2.0 * PI * 1.0;
        let g = make_grid(-60e-6, 60e-6, 2048).unwrap();
        let psi = ground_state_gpe(&g, &s, w, 0.0, 1.0, 1e-12).unwrap();
        let sx = (HBAR / (2.0 * s.mass * w)).sqrt();
        let amps = g.x().iter().map(|&x| Complex64::new((-(x * x) / (4.0 * sx * sx)).exp(), 0.0)).collect();
        let mut exact = WaveFunction::new(g.clone(), amps, 0.0).unwrap();
        exact.normalize();
        assert!(psi.fidelity(&exact) >= 1.0 - 1e-8, "{}", 1.0 - psi.fidelity(&exact));
    }

    #[test]
    fn thomas_fermi_profile_deep_regime() {
        // a_eff = a_s gives R_TF/ξ ≈ 200, so quantum pressure is negligible away from the edge.
        let s = rb();
        let w = 2.0 * PI * 1.0;
        let g1d = crate::units::g1d_from_transverse(s.a_s, 2.0 * PI * 50.0);
        let n = 6e4;
        let g = make_grid(-300e-6, 300e-6, 8192).unwrap();
        let psi = ground_state_gpe(&g, &s, w, g1d, n, 1e-12).unwrap();
        let (mu, r) = thomas_fermi(&s, w, g1d, n);
        for (x, z) in g.x().iter().zip(psi.amplitudes()) {
            if x.abs() < 0.8 * r {
                let tf = (mu - 0.5 * s.mass * w * w * x * x) / (g1d * n);
                assert!((z.norm_sqr() / tf - 1.0).abs() < 0.02, "x={x} ratio {}", z.norm_sqr() / tf);
            }
        }
    }

    #[test]
    fn reference_condensate_is_stationary() {
        let s = rb();
        let w = 2.0 * PI * 1.0;
        let g1d = crate::units::g1d_from_transverse(1e-2 * s.a_s, 2.0 * PI * 50.0);
        let n = 6e4;
        let g = make_grid(-100e-6, 100e-6, 4096).unwrap();
        let psi = ground_state_gpe(&g, &s, w, g1d, n, 1e-12).unwrap();
        let (_, r) = thomas_fermi(&s, w, g1d, n);
        assert!((r - 38.1e-6).abs() < 0.5e-6, "{r}");
        let trap = Term::Harmonic(HarmonicTerm { omega: w, x_center: 0.0, mass: s.mass });
        let mut next = psi.clone();
        let mf = MeanField { g1d, n_atoms: n };
        split_step(&mut next, &[trap], s.mass, &StepScheme::strang(1e-6, 1e-5), Some(&mf), 1e-6).unwrap();
        assert!(next.fidelity(&psi) >= 1.0 - 1e-8);
        assert!((next.norm() - 1.0).abs() < 1e-10);
    }
}
