//! Split-operator propagation in real and imaginary time.
//!
//! Splitting schemes are strategies behind the [`SplitScheme`] trait and are
//! looked up by name from a static registry.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{PotentialField, Term};
use crate::state::WaveFunction;
use crate::units::HBAR;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScheme {
    /// Registry key of the splitting scheme.
    pub order: String,
    pub dt_interaction: f64,
    pub dt_free: f64,
}

impl StepScheme {
    pub fn strang(dt_interaction: f64, dt_free: f64) -> Self {
        StepScheme { order: "strang".into(), dt_interaction, dt_free }
    }

    pub fn third_order(dt_interaction: f64, dt_free: f64) -> Self {
        StepScheme { order: "third_order".into(), dt_interaction, dt_free }
    }

    pub fn validate(&self) -> Result<&'static dyn SplitScheme> {
        if !(self.dt_interaction > 0.0 && self.dt_free > 0.0) {
            return Err(Error::config("numerics.dt_int", "time steps must be positive"));
        }
        if self.dt_interaction > self.dt_free {
            return Err(Error::config("numerics.dt_int", "dt_int must not exceed dt_free"));
        }
        scheme_by_name(&self.order).ok_or_else(|| {
            Error::config(
                "numerics.scheme",
                format!("unknown scheme `{}`; available: {:?}", self.order, scheme_names()),
            )
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub g1d: f64,
    pub n_atoms: f64,
}

impl MeanField {
    pub fn coupling(&self) -> f64 {
        self.g1d * self.n_atoms
    }
}

/// Space-time density snapshots taken every `stride` steps.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DensityRecorder {
    pub stride: u64,
    /// Keep every `decimate`-th grid point.
    pub decimate: usize,
    /// Exact free drifts are split into chunks of this length when set.
    pub free_interval: Option<f64>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f32>>,
}

impl DensityRecorder {
    pub fn new(stride: u64, decimate: usize) -> Self {
        DensityRecorder { stride: stride.max(1), decimate: decimate.max(1), ..Default::default() }
    }

    pub fn record(&mut self, t: f64, psi: &[Complex64]) {
        if self.times.last() == Some(&t) {
            return;
        }
        self.times.push(t);
        self.rows.push(psi.iter().step_by(self.decimate).map(|z| z.norm_sqr() as f32).collect());
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub steps: u64,
    pub segments: u64,
}

/// Low-level operator applications shared by all schemes.
pub struct Kernel<'a> {
    field: &'a PotentialField,
    grid: Arc<Grid>,
    mass: f64,
    coupling: f64,
    imaginary: bool,
    vbuf: Vec<f64>,
    kinetic: Vec<(u64, Vec<Complex64>)>,
    seg: (f64, f64),
    probe_margin: f64,
    steps: u64,
    recorder: Option<&'a mut DensityRecorder>,
}

impl<'a> Kernel<'a> {
    pub fn new(field: &'a PotentialField, mass: f64, mean_field: Option<&MeanField>) -> Self {
        let grid = field.grid().clone();
        let n = grid.n_points();
        Kernel {
            field,
            grid,
            mass,
            coupling: mean_field.map_or(0.0, MeanField::coupling),
            imaginary: false,
            vbuf: vec![0.0; n],
            kinetic: Vec::new(),
            seg: (f64::NEG_INFINITY, f64::INFINITY),
            probe_margin: 0.0,
            steps: 0,
            recorder: None,
        }
    }

    pub fn imaginary(mut self) -> Self {
        self.imaginary = true;
        self
    }

    pub fn with_recorder(mut self, rec: Option<&'a mut DensityRecorder>) -> Self {
        self.recorder = rec;
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn set_segment(&mut self, a: f64, b: f64, h: f64) {
        self.seg = (a.min(b), a.max(b));
        self.probe_margin = 0.25 * h.abs().min(self.seg.1 - self.seg.0);
    }

    fn probe(&self, t: f64) -> f64 {
        t.clamp(self.seg.0 + self.probe_margin, self.seg.1 - self.probe_margin)
    }

    /// exp(−i V_eff h/ħ), or exp(−V_eff h/ħ) in imaginary time.
    pub fn kick(&mut self, psi: &mut [Complex64], t: f64, h: f64) {
        let probe = self.probe(t);
        if self.coupling == 0.0 && !self.field.is_active(t, probe) {
            return;
        }
        self.field.fill(t, probe, &mut self.vbuf);
        let f = h / HBAR;
        let g = self.coupling;
        if self.imaginary {
            for (z, &v) in psi.iter_mut().zip(&self.vbuf) {
                *z *= (-(v + g * z.norm_sqr()) * f).exp();
            }
        } else {
            for (z, &v) in psi.iter_mut().zip(&self.vbuf) {
                let (s, c) = (-(v + g * z.norm_sqr()) * f).sin_cos();
                *z *= Complex64::new(c, s);
            }
        }
    }

    fn kinetic_factors(&mut self, h: f64) -> usize {
        let key = h.to_bits();
        if let Some(i) = self.kinetic.iter().position(|(k, _)| *k == key) {
            return i;
        }
        let n = self.grid.n_points() as f64;
        let c = HBAR * h / (2.0 * self.mass);
        let table = self
            .grid
            .p()
            .iter()
            .map(|&p| {
                let kk = p / HBAR;
                let ph = kk * kk * c;
                if self.imaginary {
                    Complex64::new((-ph).exp() / n, 0.0)
                } else {
                    let (s, co) = (-ph).sin_cos();
                    Complex64::new(co / n, s / n)
                }
            })
            .collect();
        if self.kinetic.len() >= 8 {
            self.kinetic.remove(0);
        }
        self.kinetic.push((key, table));
        self.kinetic.len() - 1
    }

    /// exp(−i p² h/2mħ) applied in momentum space.
    pub fn drift(&mut self, psi: &mut [Complex64], h: f64) {
        let i = self.kinetic_factors(h);
        self.grid.forward(psi);
        for (z, k) in psi.iter_mut().zip(&self.kinetic[i].1) {
            *z *= k;
        }
        self.grid.inverse(psi);
    }

    fn snapshot_due(&self) -> bool {
        self.recorder.as_ref().map_or(false, |r| (self.steps + 1) % r.stride == 0)
    }

    /// Bookkeeping after a completed step; `t` is the new clock.
    pub fn step_done(&mut self, psi: &[Complex64], t: f64, closed: bool) -> Result<()> {
        self.steps += 1;
        // A NaN anywhere spreads over the whole array after one transform.
        let n = psi.len();
        if !(psi[0].re.is_finite() && psi[0].im.is_finite() && psi[n / 2].re.is_finite() && psi[n / 2].im.is_finite()) {
            return Err(Error::numerical(self.steps, "non-finite amplitude"));
        }
        if closed {
            if let Some(r) = self.recorder.as_mut() {
                if self.steps % r.stride == 0 {
                    r.record(t, psi);
                }
            }
        }
        Ok(())
    }
}

/// A splitting of exp(−iHt/ħ) into kicks and drifts.
pub trait SplitScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Applies `n` steps of size `h` starting at clock `t0`.
    fn advance(&self, k: &mut Kernel, psi: &mut [Complex64], t0: f64, h: f64, n: u64) -> Result<()>;
}

struct Strang;

impl SplitScheme for Strang {
    fn name(&self) -> &'static str {
        "strang"
    }

    fn description(&self) -> &'static str {
        "second order, kick(h/2) drift(h) kick(h/2), adjacent half kicks fused"
    }

    fn advance(&self, k: &mut Kernel, psi: &mut [Complex64], t0: f64, h: f64, n: u64) -> Result<()> {
        let mut open = false;
        for j in 0..n {
            let t = t0 + j as f64 * h;
            if !open {
                k.kick(psi, t, 0.5 * h);
            }
            k.drift(psi, h);
            let tn = t0 + (j + 1) as f64 * h;
            if j + 1 == n || k.snapshot_due() {
                k.kick(psi, tn, 0.5 * h);
                open = false;
                k.step_done(psi, tn, true)?;
            } else {
                k.kick(psi, tn, h);
                open = true;
                k.step_done(psi, tn, false)?;
            }
        }
        Ok(())
    }
}

/// Ruth's third-order composition. Kick i sees the clock advanced by the
/// preceding drifts, so kicks land at t, t + 2h/3 and t.
struct ThirdOrder;

const RUTH_C: [f64; 3] = [7.0 / 24.0, 3.0 / 4.0, -1.0 / 24.0];
const RUTH_D: [f64; 3] = [2.0 / 3.0, -2.0 / 3.0, 1.0];

impl SplitScheme for ThirdOrder {
    fn name(&self) -> &'static str {
        "third_order"
    }

    fn description(&self) -> &'static str {
        "Ruth third order, kicks c = (7/24, 3/4, -1/24), drifts d = (2/3, -2/3, 1)"
    }

    fn advance(&self, k: &mut Kernel, psi: &mut [Complex64], t0: f64, h: f64, n: u64) -> Result<()> {
        for j in 0..n {
            let t = t0 + j as f64 * h;
            let mut clock = t;
            for i in 0..3 {
                k.kick(psi, clock, RUTH_C[i] * h);
                k.drift(psi, RUTH_D[i] * h);
                clock += RUTH_D[i] * h;
            }
            k.step_done(psi, t0 + (j + 1) as f64 * h, true)?;
        }
        Ok(())
    }
}

fn registry() -> &'static [Box<dyn SplitScheme>] {
    static REG: OnceLock<Vec<Box<dyn SplitScheme>>> = OnceLock::new();
    REG.get_or_init(|| vec![Box::new(Strang), Box::new(ThirdOrder)])
}

pub fn scheme_by_name(name: &str) -> Option<&'static dyn SplitScheme> {
    registry().iter().find(|s| s.name() == name).map(|b| b.as_ref())
}

pub fn scheme_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SegKind {
    Interaction,
    Static,
    Free,
}

/// Partition of [lo, hi] into segments with uniform stepping.
fn segments(lo: f64, hi: f64, windows: &[(f64, f64)], dt_int: f64, has_static: bool) -> Vec<(f64, f64, SegKind)> {
    let mut pts = vec![lo, hi];
    for &(a, b) in windows {
        for p in [a - dt_int, a, b, b + dt_int] {
            if p > lo && p < hi {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    let tol = 1e-12 * (hi - lo).abs().max(1e-9);
    pts.dedup_by(|b, a| (*b - *a).abs() <= tol);
    if let Some(last) = pts.last_mut() {
        *last = hi;
    }
    pts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let kind = if windows.iter().any(|&(a, b)| mid >= a - dt_int && mid <= b + dt_int) {
                SegKind::Interaction
            } else if has_static {
                SegKind::Static
            } else {
                SegKind::Free
            };
            (w[0], w[1], kind)
        })
        .collect()
}

fn n_steps(len: f64, dt: f64) -> u64 {
    ((len / dt) - 1e-9).ceil().max(1.0) as u64
}

/// Propagates `psi` to `t_end` under a prepared potential field.
///
/// Backward propagation (t_end < psi.t) is supported and traverses the
/// segments in reverse; it is the exact inverse only for symmetric schemes.
pub fn propagate_field(
    psi: &mut WaveFunction,
    field: &PotentialField,
    mass: f64,
    scheme: &StepScheme,
    mean_field: Option<&MeanField>,
    t_end: f64,
    recorder: Option<&mut DensityRecorder>,
) -> Result<PropagationStats> {
    let split = scheme.validate()?;
    let t0 = psi.time();
    if t_end == t0 {
        return Ok(PropagationStats::default());
    }
    if !t_end.is_finite() {
        return Err(Error::config("t_end", "non-finite end time"));
    }
    let forward = t_end > t0;
    let (lo, hi) = if forward { (t0, t_end) } else { (t_end, t0) };
    let has_static = field.has_static() || mean_field.map_or(false, |m| m.coupling() != 0.0);
    let mut segs = segments(lo, hi, field.windows(), scheme.dt_interaction, has_static);
    if !forward {
        segs.reverse();
    }
    let free_chunk = recorder.as_ref().and_then(|r| r.free_interval);
    let mut k = Kernel::new(field, mass, mean_field).with_recorder(recorder);
    if let Some(r) = k.recorder.as_mut() {
        r.record(t0, psi.amplitudes());
    }
    let amps = psi.amplitudes_mut();
    for &(a, b, kind) in &segs {
        let len = b - a;
        let (start, sign) = if forward { (a, 1.0) } else { (b, -1.0) };
        match kind {
            SegKind::Free => {
                let n = free_chunk.map_or(1, |c| n_steps(len, c));
                let h = sign * len / n as f64;
                for j in 0..n {
                    k.drift(amps, h);
                    k.step_done(amps, start + (j + 1) as f64 * h, true)?;
                }
            }
            _ => {
                let dt = if kind == SegKind::Interaction { scheme.dt_interaction } else { scheme.dt_free };
                let n = n_steps(len, dt);
                let h = sign * len / n as f64;
                k.set_segment(a, b, h);
                split.advance(&mut k, amps, start, h, n)?;
            }
        }
    }
    let steps = k.steps();
    if let Some(r) = k.recorder.as_mut() {
        r.record(t_end, amps);
    }
    psi.set_time(t_end);
    Ok(PropagationStats { steps, segments: segs.len() as u64 })
}

/// Propagates `psi` to `t_end` under the given terms.
pub fn propagate(
    psi: &mut WaveFunction,
    terms: &[Term],
    mass: f64,
    scheme: &StepScheme,
    mean_field: Option<&MeanField>,
    t_end: f64,
    recorder: Option<&mut DensityRecorder>,
) -> Result<PropagationStats> {
    let field = PotentialField::new(terms, psi.grid());
    propagate_field(psi, &field, mass, scheme, mean_field, t_end, recorder)
}

/// One step of size `dt` (either sign) with the named scheme.
pub fn split_step(
    psi: &mut WaveFunction,
    terms: &[Term],
    mass: f64,
    scheme: &StepScheme,
    mean_field: Option<&MeanField>,
    dt: f64,
) -> Result<()> {
    let split = scheme.validate()?;
    let field = PotentialField::new(terms, psi.grid());
    let mut k = Kernel::new(&field, mass, mean_field);
    let t = psi.time();
    k.set_segment(t, t + dt, dt);
    split.advance(&mut k, psi.amplitudes_mut(), t, dt, 1)?;
    psi.set_time(t + dt);
    Ok(())
}
