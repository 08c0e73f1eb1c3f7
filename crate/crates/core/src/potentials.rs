//! Time-dependent light potentials and static external fields.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::units::HBAR;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

/// Default Gaussian truncation in units of τ.
pub const DEFAULT_TRUNCATION: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeShape {
    /// exp(−(t−t_c)²/2τ²) on [t_c − truncation·τ, t_c + truncation·τ].
    Gaussian { truncation: f64 },
    /// Constant on [t_c − τ/2, t_c + τ/2).
    Rectangular,
    /// Trapezoid of total length τ with linear edges of length `rise`.
    Ramp { rise: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub shape: EnvelopeShape,
    pub peak_rabi: f64,
    pub center: f64,
    pub duration: f64,
}

impl PulseEnvelope {
    pub fn gaussian(peak_rabi: f64, center: f64, duration: f64) -> Self {
        PulseEnvelope {
            shape: EnvelopeShape::Gaussian { truncation: DEFAULT_TRUNCATION },
            peak_rabi,
            center,
            duration,
        }
    }

    pub fn rectangular(peak_rabi: f64, center: f64, duration: f64) -> Self {
        PulseEnvelope { shape: EnvelopeShape::Rectangular, peak_rabi, center, duration }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        let half = match self.shape {
            EnvelopeShape::Gaussian { truncation } => truncation * self.duration,
            _ => 0.5 * self.duration,
        };
        (self.center - half, self.center + half)
    }

    fn shape_at(&self, t: f64) -> f64 {
        match self.shape {
            EnvelopeShape::Gaussian { .. } => {
                let u = (t - self.center) / self.duration;
                (-0.5 * u * u).exp()
            }
            EnvelopeShape::Rectangular => 1.0,
            EnvelopeShape::Ramp { rise } => {
                let (a, b) = self.support();
                if rise <= 0.0 {
                    1.0
                } else {
                    (((t - a) / rise).min((b - t) / rise)).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Rabi frequency at `t`.
    pub fn value(&self, t: f64) -> f64 {
        let (a, b) = self.support();
        let inside = match self.shape {
            EnvelopeShape::Gaussian { .. } => t >= a && t <= b,
            _ => t >= a && t < b,
        };
        if inside {
            self.peak_rabi * self.shape_at(t)
        } else {
            0.0
        }
    }

    /// Value at `t` with support membership decided by `probe`.
    ///
    /// The stepper evaluates kicks exactly on window edges; the probe is a
    /// time strictly inside the current segment, so a pulse is either fully
    /// on or fully off within one segment.
    pub fn value_probe(&self, t: f64, probe: f64) -> f64 {
        let (a, b) = self.support();
        if probe >= a && probe <= b {
            self.peak_rabi * self.shape_at(t)
        } else {
            0.0
        }
    }

    /// ∫Ω(t)dt over the support.
    pub fn integral(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Gaussian { truncation } => {
                self.peak_rabi
                    * self.duration
                    * (2.0 * PI).sqrt()
                    * libm::erf(truncation / std::f64::consts::SQRT_2)
            }
            EnvelopeShape::Rectangular => self.peak_rabi * self.duration,
            EnvelopeShape::Ramp { rise } => {
                self.peak_rabi * (self.duration - rise.min(0.5 * self.duration))
            }
        }
    }
}

/// Running optical lattice V = 2ħΩ(t)·cos²(k(x − x_origin − s·v_L·t) + φ₀/2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeTerm {
    pub envelope: PulseEnvelope,
    pub k_lattice: f64,
    pub lattice_velocity: f64,
    /// Full laser phase φ₀; the potential uses φ₀/2.
    pub phase: f64,
    /// +1 or −1; flips the lattice velocity for double-Bragg pairs.
    pub direction: i8,
    pub x_origin: f64,
}

impl LatticeTerm {
    pub fn velocity(&self) -> f64 {
        self.direction.signum() as f64 * self.lattice_velocity
    }

    pub fn value_at(&self, x: f64, t: f64) -> f64 {
        let c = (self.k_lattice * (x - self.x_origin - self.velocity() * t) + 0.5 * self.phase).cos();
        2.0 * HBAR * self.envelope.value(t) * c * c
    }
}

/// Accelerated lattice for Bloch oscillations: load, chirp, unload.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochTerm {
    pub peak_rabi: f64,
    pub k_lattice: f64,
    pub v_start: f64,
    pub n_bloch: i32,
    /// Recoil velocity defining the 2ħk per oscillation momentum step.
    pub v_recoil: f64,
    pub tau_load: f64,
    pub tau_chirp: f64,
    pub tau_unload: f64,
    pub t_start: f64,
    pub phase: f64,
    pub x_origin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeState {
    pub x: f64,
    pub v: f64,
    pub omega: f64,
}

impl BlochTerm {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.tau_load + self.tau_chirp + self.tau_unload
    }

    pub fn acceleration(&self) -> f64 {
        2.0 * self.n_bloch as f64 * self.v_recoil / self.tau_chirp
    }

    /// Lattice displacement and velocity, valid at any time. Before the chirp
    /// the lattice moves uniformly at `v_start` from x = 0 at t = 0.
    pub fn kinematics(&self, t: f64) -> (f64, f64) {
        let t1 = self.t_start + self.tau_load;
        let t2 = t1 + self.tau_chirp;
        let a = self.acceleration();
        let v0 = self.v_start;
        if t < t1 {
            (v0 * t, v0)
        } else if t < t2 {
            let s = t - t1;
            (v0 * t + 0.5 * a * s * s, v0 + a * s)
        } else {
            let tc = self.tau_chirp;
            (v0 * t + 0.5 * a * tc * tc + a * tc * (t - t2), v0 + a * tc)
        }
    }

    pub fn rabi(&self, t: f64) -> f64 {
        let t1 = self.t_start + self.tau_load;
        let t2 = t1 + self.tau_chirp;
        let t3 = t2 + self.tau_unload;
        if t < self.t_start || t > t3 {
            0.0
        } else if t < t1 {
            self.peak_rabi * (t - self.t_start) / self.tau_load
        } else if t <= t2 {
            self.peak_rabi
        } else if self.tau_unload > 0.0 {
            self.peak_rabi * (t3 - t) / self.tau_unload
        } else {
            0.0
        }
    }
}

pub fn bloch_lattice_state(term: &BlochTerm, t: f64) -> Result<LatticeState> {
    let end = term.t_end();
    if !(t >= term.t_start && t <= end) {
        return Err(Error::OutOfRange(format!(
            "t = {t:e} s outside Bloch window [{:e}, {end:e}]",
            term.t_start
        )));
    }
    let (x, v) = term.kinematics(t);
    Ok(LatticeState { x, v, omega: term.rabi(t) })
}

/// V = −m g (x − x_origin) − ½ m Γ (x − x_origin)².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityTerm {
    pub g: f64,
    pub gamma: f64,
    pub x_origin: f64,
    pub mass: f64,
}

impl GravityTerm {
    pub fn value_at(&self, x: f64) -> f64 {
        let d = x - self.x_origin;
        -self.mass * self.g * d - 0.5 * self.mass * self.gamma * d * d
    }
}

/// V = ½ m ω² (x − x_center)².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub omega: f64,
    pub x_center: f64,
    pub mass: f64,
}

impl HarmonicTerm {
    pub fn value_at(&self, x: f64) -> f64 {
        let d = x - self.x_center;
        0.5 * self.mass * self.omega * self.omega * d * d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Lattice(LatticeTerm),
    Bloch(BlochTerm),
    Gravity(GravityTerm),
    Harmonic(HarmonicTerm),
}

impl Term {
    /// Time window outside which the term vanishes, or `None` if static.
    pub fn window(&self) -> Option<(f64, f64)> {
        match self {
            Term::Lattice(l) => Some(l.envelope.support()),
            Term::Bloch(b) => Some((b.t_start, b.t_end())),
            Term::Gravity(_) | Term::Harmonic(_) => None,
        }
    }
}

/// Shifts the lattice wavenumber so that k_eff = 2n·k changes by `delta_k_eff`.
pub fn apply_mirror_k_correction(term: &LatticeTerm, delta_k_eff: f64, n_order: u32) -> LatticeTerm {
    assert!(n_order >= 1, "n_order must be at least 1");
    let mut out = *term;
    out.k_lattice += delta_k_eff / (2.0 * n_order as f64);
    out
}

struct Table {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

enum Moving {
    Lattice(LatticeTerm),
    Bloch(BlochTerm),
}

/// Precomputed evaluator for a fixed list of terms on a fixed grid.
pub struct PotentialField {
    grid: Arc<Grid>,
    static_v: Option<Vec<f64>>,
    moving: Vec<(Moving, Arc<Table>)>,
    windows: Vec<(f64, f64)>,
}

/// Coefficients of the lattice terms active at one instant.
struct Active {
    constant: f64,
    parts: Vec<(f64, f64, f64, usize)>,
}

impl PotentialField {
    pub fn new(terms: &[Term], grid: &Arc<Grid>) -> Self {
        let mut static_v: Option<Vec<f64>> = None;
        let mut tables: HashMap<u64, Arc<Table>> = HashMap::new();
        let mut moving = Vec::new();
        let mut windows = Vec::new();
        let x = grid.x();
        for term in terms {
            if let Some(w) = term.window() {
                windows.push(w);
            }
            let k = match term {
                Term::Gravity(gr) => {
                    let v = static_v.get_or_insert_with(|| vec![0.0; x.len()]);
                    v.iter_mut().zip(x).for_each(|(v, &xi)| *v += gr.value_at(xi));
                    continue;
                }
                Term::Harmonic(h) => {
                    let v = static_v.get_or_insert_with(|| vec![0.0; x.len()]);
                    v.iter_mut().zip(x).for_each(|(v, &xi)| *v += h.value_at(xi));
                    continue;
                }
                Term::Lattice(l) => l.k_lattice,
                Term::Bloch(b) => b.k_lattice,
            };
            let table = tables
                .entry(k.to_bits())
                .or_insert_with(|| {
                    let (sin, cos) = x.iter().map(|&xi| (2.0 * k * xi).sin_cos()).unzip();
                    Arc::new(Table { cos, sin })
                })
                .clone();
            let m = match term {
                Term::Lattice(l) => Moving::Lattice(*l),
                Term::Bloch(b) => Moving::Bloch(*b),
                _ => unreachable!(),
            };
            moving.push((m, table));
        }
        PotentialField { grid: grid.clone(), static_v, moving, windows }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn windows(&self) -> &[(f64, f64)] {
        &self.windows
    }

    pub fn has_static(&self) -> bool {
        self.static_v.is_some()
    }

    fn active(&self, t: f64, probe: f64) -> Active {
        let mut constant = 0.0;
        let mut parts = Vec::new();
        for (i, (m, _)) in self.moving.iter().enumerate() {
            let (omega, k, shift, phase) = match m {
                Moving::Lattice(l) => (
                    l.envelope.value_probe(t, probe),
                    l.k_lattice,
                    l.x_origin + l.velocity() * t,
                    l.phase,
                ),
                Moving::Bloch(b) => {
                    if !(probe >= b.t_start && probe <= b.t_end()) {
                        continue;
                    }
                    (b.rabi(t), b.k_lattice, b.x_origin + b.kinematics(t).0, b.phase)
                }
            };
            if omega == 0.0 {
                continue;
            }
            // cos(2k(x − shift) + φ) = C(x)cos θ − S(x)sin θ with θ = φ − 2k·shift.
            let theta = (phase - (2.0 * k * shift).rem_euclid(TAU)).rem_euclid(TAU);
            let (s, c) = theta.sin_cos();
            let amp = HBAR * omega;
            constant += amp;
            parts.push((amp, c, s, i));
        }
        Active { constant, parts }
    }

    /// True if any term contributes at time `t` (membership decided by `probe`).
    pub fn is_active(&self, t: f64, probe: f64) -> bool {
        self.static_v.is_some() || !self.active(t, probe).parts.is_empty()
    }

    /// Writes V(x, t) into `out`.
    pub fn fill(&self, t: f64, probe: f64, out: &mut [f64]) {
        let act = self.active(t, probe);
        match &self.static_v {
            Some(v) => out.iter_mut().zip(v).for_each(|(o, &s)| *o = s + act.constant),
            None => out.iter_mut().for_each(|o| *o = act.constant),
        }
        for &(amp, c, s, i) in &act.parts {
            let tab = &self.moving[i].1;
            let (ac, as_) = (amp * c, amp * s);
            for ((o, &cx), &sx) in out.iter_mut().zip(&tab.cos).zip(&tab.sin) {
                *o += ac * cx - as_ * sx;
            }
        }
    }
}

/// Pointwise sum of all terms active at `t`.
pub fn eval_potential(terms: &[Term], grid: &Arc<Grid>, t: f64) -> Vec<f64> {
    // Membership follows the closed/half-open conventions of `PulseEnvelope::value`.
    let active: Vec<Term> = terms
        .iter()
        .copied()
        .filter(|term| match term {
            Term::Lattice(l) => l.envelope.value(t) != 0.0,
            _ => true,
        })
        .collect();
    let field = PotentialField::new(&active, grid);
    let mut out = vec![0.0; grid.n_points()];
    field.fill(t, t, &mut out);
    out
}
