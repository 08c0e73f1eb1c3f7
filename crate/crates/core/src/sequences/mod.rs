//! Interferometer schedules built from pulse primitives, and their execution.

mod geometry;
pub mod convergence;
pub mod gradiometer;
pub mod paths;
pub mod trapped;

pub use geometry::{geometry_by_name, geometry_names, EnvelopeKind, Geometry, MainPort, Schedule};
pub use convergence::{convergence_scan, ConvergenceCell, ConvergenceTable};
pub use gradiometer::{run_gradiometer, GradiometerPoint, GradiometerResult, GradiometerSpec};
pub use trapped::{arm_chemical_potentials, run_trapped_mz, TrappedPoint, TrappedResult, TrappedSpec};

use crate::analysis::ports::default_half_width;
use crate::analysis::{detect_ports, fit_fringe, port_populations_density, FringeFit, Port, PortPopulations};
use crate::error::{Error, Result};
use crate::grid::{check_resolution, Grid, GridSpec, ResolutionReport};
use crate::potentials::{
    apply_mirror_k_correction, BlochTerm, GravityTerm, LatticeTerm, PotentialField, PulseEnvelope, Term,
};
use crate::propagator::{propagate_field, DensityRecorder, MeanField, StepScheme};
use crate::state::{gaussian_packet, ground_state_gpe, WaveFunction};
use crate::units::Species;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

/// Fraction of the Bloch population allowed to tunnel before a warning.
const LANDAU_ZENER_WARN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Minimum-uncertainty Gaussian.
    Gaussian {
        sigma_p: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        p0: f64,
    },
    /// Condensate ground state of ½mω_x²x² with the configured mean field.
    Bec {
        omega_x: f64,
        #[serde(default = "default_bec_tol")]
        tol: f64,
    },
}

fn default_bec_tol() -> f64 {
    1e-12
}

impl InitialState {
    pub fn momentum(&self) -> f64 {
        match self {
            InitialState::Gaussian { p0, .. } => *p0,
            InitialState::Bec { .. } => 0.0,
        }
    }

    pub fn position(&self) -> f64 {
        match self {
            InitialState::Gaussian { x0, .. } => *x0,
            InitialState::Bec { .. } => 0.0,
        }
    }

    /// Momentum width used by the resolution checks.
    pub fn sigma_p(&self, species: &Species) -> f64 {
        match self {
            InitialState::Gaussian { sigma_p, .. } => *sigma_p,
            // Width of the condensate's momentum distribution is set by its size; use a small nominal value.
            InitialState::Bec { .. } => 0.01 * species.hbar_k(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseKind {
    /// Running lattice resonant with p ↔ p + 2nħk at velocity s·n·v_r + offset.
    Bragg {
        order: u32,
        envelope: PulseEnvelope,
        #[serde(default)]
        velocity_offset: f64,
        #[serde(default = "one")]
        direction: i8,
    },
    /// Counter-propagating lattice pair at ±n·v_r + offset.
    DoubleBragg {
        order: u32,
        envelope: PulseEnvelope,
        #[serde(default)]
        velocity_offset: f64,
    },
    /// Standing wave (v_L = 0).
    Standing { envelope: PulseEnvelope },
    /// Accelerated lattice: load, chirp by 2n_Bloch ħk, unload.
    Bloch {
        peak_rabi: f64,
        v_start: f64,
        n_bloch: i32,
        tau_load: f64,
        tau_chirp: f64,
        tau_unload: f64,
        t_start: f64,
    },
}

fn one() -> i8 {
    1
}

impl PulseKind {
    pub fn envelope(&self) -> Option<&PulseEnvelope> {
        match self {
            PulseKind::Bragg { envelope, .. }
            | PulseKind::DoubleBragg { envelope, .. }
            | PulseKind::Standing { envelope } => Some(envelope),
            PulseKind::Bloch { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    pub label: String,
    #[serde(flatten)]
    pub kind: PulseKind,
    #[serde(default)]
    pub phase: f64,
    /// Receives the mirror wavenumber correction.
    #[serde(default)]
    pub mirror: bool,
    /// Allows this pulse's window to overlap its neighbours.
    #[serde(default)]
    pub composite: bool,
}

impl PulseEvent {
    pub fn new(label: &str, kind: PulseKind) -> Self {
        PulseEvent { label: label.into(), kind, phase: 0.0, mirror: false, composite: false }
    }

    pub fn window(&self) -> Option<(f64, f64)> {
        match &self.kind {
            PulseKind::Bloch { t_start, tau_load, tau_chirp, tau_unload, .. } => {
                Some((*t_start, t_start + tau_load + tau_chirp + tau_unload))
            }
            k => k.envelope().map(PulseEnvelope::support),
        }
    }

    /// Potential terms of this event.
    pub fn terms(&self, species: &Species, x_origin: f64, delta_k_eff: f64, extra_phase: f64) -> Vec<Term> {
        let k = species.k();
        let vr = species.v_r();
        let phase = self.phase + extra_phase;
        let lattice = |env: PulseEnvelope, v: f64, dir: i8, n: u32, phase: f64| {
            let l = LatticeTerm { envelope: env, k_lattice: k, lattice_velocity: v, phase, direction: dir, x_origin };
            Term::Lattice(if self.mirror && delta_k_eff != 0.0 {
                apply_mirror_k_correction(&l, delta_k_eff, n.max(1))
            } else {
                l
            })
        };
        match &self.kind {
            PulseKind::Bragg { order, envelope, velocity_offset, direction } => {
                let d = if *direction < 0 { -1 } else { 1 };
                let v = *order as f64 * vr + f64::from(d) * velocity_offset;
                vec![lattice(*envelope, v, d, *order, phase)]
            }
            PulseKind::DoubleBragg { order, envelope, velocity_offset } => {
                // The scanned phase is applied to the co-moving lattice only.
                let n = *order as f64;
                vec![
                    lattice(*envelope, n * vr + velocity_offset, 1, *order, phase),
                    lattice(*envelope, n * vr - velocity_offset, -1, *order, self.phase),
                ]
            }
            PulseKind::Standing { envelope } => vec![lattice(*envelope, 0.0, 1, 1, phase)],
            PulseKind::Bloch { peak_rabi, v_start, n_bloch, tau_load, tau_chirp, tau_unload, t_start } => {
                vec![Term::Bloch(BlochTerm {
                    peak_rabi: *peak_rabi,
                    k_lattice: k,
                    v_start: *v_start,
                    n_bloch: *n_bloch,
                    v_recoil: vr,
                    tau_load: *tau_load,
                    tau_chirp: *tau_chirp,
                    tau_unload: *tau_unload,
                    t_start: *t_start,
                    phase,
                    x_origin,
                })]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Peak two-photon Rabi frequency [rad/s].
    pub omega: f64,
    /// Gaussian width or rectangular length [s].
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochParams {
    pub omega: f64,
    pub n_bloch: i32,
    pub tau_load: f64,
    pub tau_chirp: f64,
    pub tau_unload: f64,
    /// Start of the upper-arm load after the splitter centre; the lower-arm
    /// stages end the same interval before the recombiner centre.
    pub delay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceParams {
    pub order: u32,
    pub t_interrogation: f64,
    pub tof: f64,
    pub splitter: PulseParams,
    pub mirror: PulseParams,
    /// Defaults to the splitter.
    pub recombiner: Option<PulseParams>,
    pub envelope: EnvelopeKind,
    pub truncation: f64,
    pub include_mirror: bool,
    pub bloch: Option<BlochParams>,
}

impl Default for SequenceParams {
    fn default() -> Self {
        SequenceParams {
            order: 1,
            t_interrogation: 0.0,
            tof: 0.0,
            splitter: PulseParams::default(),
            mirror: PulseParams::default(),
            recombiner: None,
            envelope: EnvelopeKind::Gaussian,
            truncation: geometry::default_truncation(),
            include_mirror: true,
            bloch: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    #[default]
    Position,
    Momentum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementSpec {
    /// Defaults to the geometry's natural readout.
    pub mode: Option<MeasurementMode>,
    pub half_width: Option<f64>,
    pub floor: f64,
    /// Port momenta in ħk (custom geometry).
    pub ports: Option<Vec<f64>>,
    /// Reference-path velocities in v_r (custom geometry).
    pub reference: Option<Vec<f64>>,
    pub phase_pulse: Option<usize>,
    pub fringe_order: Option<u32>,
    /// Port whose normalized population is fitted, in ħk.
    pub fringe_port: f64,
    pub fringe_points: usize,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        MeasurementSpec {
            mode: None,
            half_width: None,
            floor: crate::analysis::ports::DEFAULT_POPULATION_FLOOR,
            ports: None,
            reference: None,
            phase_pulse: None,
            fringe_order: None,
            fringe_port: 0.0,
            fringe_points: 24,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    #[default]
    FreelyFalling,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GravitySpec {
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordSpec {
    pub stride: u64,
    #[serde(default = "one_usize")]
    pub decimate: usize,
    pub free_interval: Option<f64>,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(default)]
    pub species: Species,
    pub grid: GridSpec,
    pub initial: InitialState,
    pub geometry: String,
    #[serde(default)]
    pub params: SequenceParams,
    #[serde(default)]
    pub pulses: Vec<PulseEvent>,
    /// Laser phase added to the phase-target pulse [rad].
    #[serde(default)]
    pub laser_phase: f64,
    /// Wavenumber change of the mirror pulse's k_eff [1/m].
    #[serde(default)]
    pub mirror_delta_k: f64,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default)]
    pub gravity: Option<GravitySpec>,
    /// Position of this interferometer along the baseline; shifts the
    /// gravity origin and all lattice phases.
    #[serde(default)]
    pub frame_offset: f64,
    #[serde(default)]
    pub mean_field: Option<MeanField>,
    #[serde(default)]
    pub measurement: MeasurementSpec,
    pub numerics: StepScheme,
    #[serde(default)]
    pub record: Option<RecordSpec>,
    /// Overrides the geometry's end time (custom geometry).
    #[serde(default)]
    pub t_end: Option<f64>,
}

/// A spec resolved into grid, schedule and initial state.
pub struct Prepared {
    pub spec: SequenceSpec,
    pub grid: Arc<Grid>,
    pub schedule: Schedule,
    pub initial: WaveFunction,
    pub t0: f64,
    pub resolution: ResolutionReport,
    pub warnings: Vec<String>,
    pub geometry: &'static dyn Geometry,
}

fn validate_events(events: &[PulseEvent]) -> Result<()> {
    for (i, w) in events.windows(2).enumerate() {
        let (Some(a), Some(b)) = (w[0].window(), w[1].window()) else { continue };
        if b.0 < a.0 {
            return Err(Error::config(format!("pulses[{}]", i + 1), "pulse times must be increasing"));
        }
        if b.0 < a.1 && !(w[0].composite || w[1].composite) {
            return Err(Error::config(
                format!("pulses[{}]", i + 1),
                format!("window [{:e}, {:e}] overlaps the previous pulse; mark it composite", b.0, b.1),
            ));
        }
    }
    for (i, e) in events.iter().enumerate() {
        let ok = match &e.kind {
            PulseKind::Bloch { tau_load, tau_chirp, tau_unload, .. } => {
                *tau_load > 0.0 && *tau_chirp > 0.0 && *tau_unload >= 0.0
            }
            k => k.envelope().map_or(true, |env| env.duration > 0.0 && env.peak_rabi.is_finite()),
        };
        if !ok {
            return Err(Error::config(format!("pulses[{i}]"), "durations must be positive"));
        }
    }
    Ok(())
}

fn max_order(schedule: &Schedule, species: &Species) -> u32 {
    let vr = species.v_r();
    let mut m = schedule.main_ports.iter().map(|p| p.momentum_hk.abs()).fold(0.0, f64::max);
    for e in &schedule.events {
        let v = match &e.kind {
            PulseKind::Bragg { order, .. } | PulseKind::DoubleBragg { order, .. } => 2.0 * *order as f64,
            PulseKind::Standing { .. } => 6.0,
            PulseKind::Bloch { v_start, n_bloch, .. } => (v_start / vr).abs() + 2.0 * n_bloch.unsigned_abs() as f64,
        };
        m = m.max(v);
    }
    m.ceil() as u32
}

impl Prepared {
    pub fn new(spec: &SequenceSpec) -> Result<Prepared> {
        Self::with_initial(spec, None)
    }

    /// Uses `initial` (already on the spec's grid) instead of building the initial state.
    pub fn with_initial(spec: &SequenceSpec, initial: Option<WaveFunction>) -> Result<Prepared> {
        spec.numerics.validate()?;
        let geometry = geometry_by_name(&spec.geometry).ok_or_else(|| {
            Error::config("geometry", format!("unknown geometry `{}`; available: {:?}", spec.geometry, geometry_names()))
        })?;
        let schedule = geometry.schedule(spec)?;
        validate_events(&schedule.events)?;
        let grid = spec.grid.build()?;
        let species = &spec.species;
        let t0 = schedule
            .events
            .iter()
            .filter_map(|e| e.window())
            .map(|w| w.0)
            .fold(0.0f64, f64::min);
        if !(schedule.t_end >= t0) {
            return Err(Error::config("t_end", "sequence ends before it starts"));
        }
        let mut psi = match initial {
            Some(p) => {
                if p.grid().spec() != grid.spec() {
                    return Err(Error::config("initial", "supplied initial state lives on a different grid"));
                }
                p
            }
            None => match &spec.initial {
                InitialState::Gaussian { sigma_p, x0, p0 } => gaussian_packet(&grid, *sigma_p, *x0, *p0)?,
                InitialState::Bec { omega_x, tol } => {
                    let mf = spec
                        .mean_field
                        .ok_or_else(|| Error::config("initial.kind", "a bec initial state needs [mean_field]"))?;
                    ground_state_gpe(&grid, species, *omega_x, mf.g1d, mf.n_atoms, *tol)?
                }
            },
        };
        psi.set_time(t0);

        let mut warnings = Vec::new();
        let endpoints = paths::enumerate_endpoints(
            &schedule.events,
            spec.initial.position(),
            spec.initial.momentum() / species.mass,
            t0,
            schedule.t_end,
            species,
        );
        let (lo, hi) = endpoints
            .iter()
            .fold((spec.initial.position(), spec.initial.position()), |(a, b), p| (a.min(p.x), b.max(p.x)));
        let resolution = check_resolution(&grid, species, max_order(&schedule, species), spec.initial.sigma_p(species), hi - lo);
        for c in resolution.checks.iter().filter(|c| !c.pass) {
            warnings.push(format!("resolution check `{}` failed: {:.4e} vs {:.4e}", c.name, c.value, c.threshold));
        }
        for e in &schedule.events {
            match &e.kind {
                PulseKind::Standing { envelope } => {
                    let limit = 1.0 / (2.0 * envelope.peak_rabi * species.omega_r()).sqrt();
                    if envelope.duration > 0.1 * limit {
                        warnings.push(format!(
                            "pulse `{}`: tau = {:e} s is not much shorter than 1/sqrt(2 Omega w_r) = {limit:e} s",
                            e.label, envelope.duration
                        ));
                    }
                }
                PulseKind::Bloch { peak_rabi, n_bloch, tau_chirp, .. } => {
                    let a = (2.0 * *n_bloch as f64 * species.v_r() / tau_chirp).abs();
                    let p = (-PI * peak_rabi * peak_rabi / (4.0 * species.k() * a)).exp();
                    if p > LANDAU_ZENER_WARN {
                        warnings.push(format!("pulse `{}`: Landau-Zener loss per passage {p:.3e}", e.label));
                    }
                }
                _ => {}
            }
        }
        Ok(Prepared { spec: spec.clone(), grid, schedule, initial: psi, t0, resolution, warnings, geometry })
    }

    /// Full list of potential terms with `phase` added at the phase-target pulse.
    pub fn terms(&self, phase: f64) -> Vec<Term> {
        let spec = &self.spec;
        let mut terms = Vec::new();
        for (i, e) in self.schedule.events.iter().enumerate() {
            let extra = if Some(i) == self.schedule.phase_target { spec.laser_phase + phase } else { 0.0 };
            terms.extend(e.terms(&spec.species, spec.frame_offset, spec.mirror_delta_k, extra));
        }
        if let Some(g) = spec.gravity {
            let g_lin = if spec.frame == Frame::Lab { g.g } else { 0.0 };
            if g_lin != 0.0 || g.gamma != 0.0 {
                terms.push(Term::Gravity(GravityTerm {
                    g: g_lin,
                    gamma: g.gamma,
                    x_origin: spec.frame_offset,
                    mass: spec.species.mass,
                }));
            }
        }
        terms
    }

    pub fn mode(&self) -> MeasurementMode {
        self.spec.measurement.mode.unwrap_or(self.schedule.default_mode)
    }

    /// Predicted position-space ports after time of flight.
    pub fn predicted_ports(&self) -> Result<Vec<Port>> {
        let spec = &self.spec;
        let species = &spec.species;
        let vr = species.v_r();
        let v0 = spec.initial.momentum() / species.mass;
        let x0 = spec.initial.position();
        let sch = &self.schedule;
        let n_ev = sch.events.len();
        let (x_last, t_last) = if n_ev == 0 {
            (x0, self.t0)
        } else {
            let vel: Vec<f64> = sch.reference.iter().map(|v| v0 + v * vr).collect();
            if vel.len() + 1 < n_ev {
                return Err(Error::config("measurement.reference", "needs one velocity per event except the last"));
            }
            let (x, t) = paths::follow(&sch.events[..n_ev - 1], &vel, x0, v0, self.t0, species);
            let tc = match &sch.events[n_ev - 1].kind {
                PulseKind::Bloch { t_start, .. } => *t_start,
                k => k.envelope().map_or(t, |e| e.center),
            };
            let v_before = if n_ev >= 2 { vel[n_ev - 2] } else { v0 };
            (x + v_before * (tc - t), tc)
        };
        let dt = sch.t_end - t_last;
        let main: Vec<(f64, f64)> =
            sch.main_ports.iter().map(|p| (p.momentum_hk, x_last + (v0 + p.momentum_hk * vr) * dt)).collect();
        let endpoints = paths::enumerate_endpoints(&sch.events, x0, v0, self.t0, sch.t_end, species);
        let others: Vec<f64> = endpoints
            .iter()
            .filter(|e| !main.iter().any(|m| (m.1 - e.x).abs() < 1e-7))
            .map(|e| e.x)
            .collect();
        let centers: Vec<f64> = main.iter().map(|m| m.1).collect();
        let hw = match spec.measurement.half_width {
            Some(h) => h,
            None => {
                let h = default_half_width(&centers, &others);
                if h.is_finite() {
                    h
                } else {
                    // A single isolated port: take everything within the grid.
                    let c = centers[0];
                    (c - self.grid.x_min()).min(self.grid.x_max() - c) * 0.999
                }
            }
        };
        Ok(main
            .iter()
            .map(|&(m, c)| Port { label: format!("{}hk", fmt_order(m)), momentum_hk: m, center: c, half_width: hw })
            .collect())
    }

    /// Ports detected on a final density.
    pub fn ports_for(&self, density: &[f64]) -> Result<Vec<Port>> {
        let pred = self.predicted_ports()?;
        Ok(detect_ports(&self.grid, density, &pred))
    }

    /// Momentum-bin populations for the main ports.
    pub fn momentum_populations(&self, psi: &WaveFunction) -> Result<(Vec<Port>, PortPopulations)> {
        let species = &self.spec.species;
        let hk = species.hbar_k();
        let p0 = self.spec.initial.momentum();
        let spec = psi.momentum_spectrum();
        let ports: Vec<Port> = self
            .schedule
            .main_ports
            .iter()
            .map(|p| Port {
                label: format!("{}hk", fmt_order(p.momentum_hk)),
                momentum_hk: p.momentum_hk,
                center: p0 + p.momentum_hk * hk,
                half_width: 0.5 * hk,
            })
            .collect();
        let raw: Vec<f64> = ports.iter().map(|p| spec.bin(p.center, p.half_width)).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Measurement("no population in the momentum bins".into()));
        }
        let normalized = raw.iter().map(|r| r / total).collect();
        Ok((ports, PortPopulations { raw, normalized, low_total: total < self.spec.measurement.floor }))
    }

    fn measure(&self, psi: &WaveFunction, ports: Option<&[Port]>) -> Result<(Vec<Port>, PortPopulations)> {
        match self.mode() {
            MeasurementMode::Momentum => self.momentum_populations(psi),
            MeasurementMode::Position => {
                let density = psi.density();
                let ports = match ports {
                    Some(p) => p.to_vec(),
                    None => self.ports_for(&density)?,
                };
                let pops = port_populations_density(&self.grid, &density, &ports, self.spec.measurement.floor)?;
                Ok((ports, pops))
            }
        }
    }

    pub fn field(&self, phase: f64) -> PotentialField {
        PotentialField::new(&self.terms(phase), &self.grid)
    }

    /// Propagates a copy of `psi` to `t_end` with `phase` at the target pulse.
    pub fn propagate(
        &self,
        psi: &mut WaveFunction,
        phase: f64,
        t_end: f64,
        recorder: Option<&mut DensityRecorder>,
    ) -> Result<u64> {
        let field = self.field(phase);
        let stats = propagate_field(
            psi,
            &field,
            self.spec.species.mass,
            &self.spec.numerics,
            self.spec.mean_field.as_ref(),
            t_end,
            recorder,
        )?;
        Ok(stats.steps)
    }

    /// Time before which the scanned phase has no effect.
    pub fn scan_split_time(&self) -> f64 {
        let dt = self.spec.numerics.dt_interaction;
        self.schedule
            .phase_target
            .and_then(|i| self.schedule.events[i].window())
            .map_or(self.t0, |w| (w.0 - dt).max(self.t0))
    }
}

fn fmt_order(m: f64) -> String {
    if m.fract() == 0.0 {
        format!("{}", m as i64)
    } else {
        format!("{m}")
    }
}

pub struct RunResult {
    pub geometry: String,
    pub scheme: String,
    pub ports: Vec<Port>,
    pub populations: PortPopulations,
    /// 1 − Σ raw port populations.
    pub parasitic_fraction: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub final_state: WaveFunction,
    pub recorder: Option<DensityRecorder>,
    pub steps: u64,
    pub wall_seconds: f64,
    pub resolution: ResolutionReport,
    pub warnings: Vec<String>,
    pub t0: f64,
    pub t_end: f64,
}

impl RunResult {
    pub fn population(&self, momentum_hk: f64) -> Option<f64> {
        self.ports.iter().position(|p| p.momentum_hk == momentum_hk).map(|i| self.populations.normalized[i])
    }
}

fn make_recorder(spec: &SequenceSpec) -> Option<DensityRecorder> {
    spec.record.as_ref().map(|r| {
        let mut rec = DensityRecorder::new(r.stride, r.decimate);
        rec.free_interval = r.free_interval;
        rec
    })
}

/// Executes a prepared sequence once at its configured laser phase.
pub fn run_prepared(prep: &Prepared) -> Result<RunResult> {
    let start = Instant::now();
    let mut psi = prep.initial.clone();
    let initial_norm = psi.norm();
    let mut recorder = make_recorder(&prep.spec);
    let steps = prep.propagate(&mut psi, 0.0, prep.schedule.t_end, recorder.as_mut())?;
    let (ports, populations) = prep.measure(&psi, None)?;
    let mut warnings = prep.warnings.clone();
    if populations.low_total {
        warnings.push(format!(
            "port populations sum to {:.4}, below the floor {}",
            populations.raw.iter().sum::<f64>(),
            prep.spec.measurement.floor
        ));
    }
    Ok(RunResult {
        geometry: prep.geometry.name().into(),
        scheme: prep.spec.numerics.order.clone(),
        parasitic_fraction: 1.0 - populations.raw.iter().sum::<f64>(),
        ports,
        populations,
        initial_norm,
        final_norm: psi.norm(),
        final_state: psi,
        recorder,
        steps,
        wall_seconds: start.elapsed().as_secs_f64(),
        resolution: prep.resolution.clone(),
        warnings,
        t0: prep.t0,
        t_end: prep.schedule.t_end,
    })
}

pub fn run_sequence(spec: &SequenceSpec) -> Result<RunResult> {
    run_prepared(&Prepared::new(spec)?)
}

fn expect_geometry(spec: &SequenceSpec, name: &str) -> Result<()> {
    if spec.geometry == name {
        Ok(())
    } else {
        Err(Error::config("geometry", format!("expected `{name}`, found `{}`", spec.geometry)))
    }
}

pub fn run_mach_zehnder(spec: &SequenceSpec) -> Result<RunResult> {
    expect_geometry(spec, "mach_zehnder")?;
    run_sequence(spec)
}

pub fn run_raman_nath(spec: &SequenceSpec) -> Result<RunResult> {
    expect_geometry(spec, "raman_nath")?;
    run_sequence(spec)
}

pub fn run_double_bragg(spec: &SequenceSpec) -> Result<RunResult> {
    expect_geometry(spec, "double_bragg")?;
    run_sequence(spec)
}

pub fn run_bragg_bloch(spec: &SequenceSpec) -> Result<RunResult> {
    expect_geometry(spec, "bragg_bloch")?;
    run_sequence(spec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FringeScan {
    pub phis: Vec<f64>,
    pub ports: Vec<Port>,
    pub populations: Vec<PortPopulations>,
    /// Index of the fitted port.
    pub fit_port: usize,
    pub fit: FringeFit,
    pub steps: u64,
    pub wall_seconds: f64,
    pub final_norms: Vec<f64>,
}

impl FringeScan {
    pub fn signal(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.normalized[self.fit_port]).collect()
    }
}

/// Uniform scan points on [0, 2π).
pub fn scan_phases(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}

/// Laser-phase scan sharing the propagation up to the phase-target pulse.
pub fn fringe_scan_prepared(prep: &Prepared, phis: &[f64]) -> Result<FringeScan> {
    let start = Instant::now();
    if prep.schedule.phase_target.is_none() {
        return Err(Error::config("measurement.phase_pulse", "this sequence has no phase-target pulse"));
    }
    let t_split = prep.scan_split_time();
    let mut prefix = prep.initial.clone();
    let mut steps = prep.propagate(&mut prefix, 0.0, t_split, None)?;
    let finals: Vec<(WaveFunction, u64)> = phis
        .par_iter()
        .map(|&phi| {
            let mut psi = prefix.clone();
            let s = prep.propagate(&mut psi, phi, prep.schedule.t_end, None)?;
            Ok((psi, s))
        })
        .collect::<Result<_>>()?;
    steps += finals.iter().map(|f| f.1).sum::<u64>();
    let ports = match prep.mode() {
        MeasurementMode::Position => {
            let mut sum = vec![0.0; prep.grid.n_points()];
            for (psi, _) in &finals {
                for (s, z) in sum.iter_mut().zip(psi.amplitudes()) {
                    *s += z.norm_sqr();
                }
            }
            Some(prep.ports_for(&sum)?)
        }
        MeasurementMode::Momentum => None,
    };
    let mut populations = Vec::with_capacity(finals.len());
    let mut out_ports = Vec::new();
    for (psi, _) in &finals {
        let (p, pops) = prep.measure(psi, ports.as_deref())?;
        out_ports = p;
        populations.push(pops);
    }
    let target = prep.spec.measurement.fringe_port;
    let fit_port = out_ports
        .iter()
        .position(|p| p.momentum_hk == target)
        .ok_or_else(|| Error::config("measurement.fringe_port", format!("no port at {target} hbar k")))?;
    let signal: Vec<f64> = populations.iter().map(|p| p.normalized[fit_port]).collect();
    let fit = fit_fringe(phis, &signal, prep.schedule.fringe_order)?;
    Ok(FringeScan {
        phis: phis.to_vec(),
        ports: out_ports,
        populations,
        fit_port,
        fit,
        steps,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_norms: finals.iter().map(|f| f.0.norm()).collect(),
    })
}

pub fn fringe_scan(spec: &SequenceSpec, phis: &[f64]) -> Result<FringeScan> {
    fringe_scan_prepared(&Prepared::new(spec)?, phis)
}

/// Shorthand for a Bragg Mach-Zehnder spec with a Gaussian cloud.
#[allow(clippy::too_many_arguments)]
pub fn mach_zehnder_spec(
    grid: GridSpec,
    sigma_p_hk: f64,
    order: u32,
    omega_split_wr: f64,
    omega_mirror_wr: f64,
    tau_split: f64,
    tau_mirror: f64,
    t: f64,
    tof: f64,
    numerics: StepScheme,
) -> SequenceSpec {
    let s = Species::rb87();
    SequenceSpec {
        grid,
        initial: InitialState::Gaussian { sigma_p: sigma_p_hk * s.hbar_k(), x0: 0.0, p0: 0.0 },
        geometry: "mach_zehnder".into(),
        params: SequenceParams {
            order,
            t_interrogation: t,
            tof,
            splitter: PulseParams { omega: omega_split_wr * s.omega_r(), tau: tau_split },
            mirror: PulseParams { omega: omega_mirror_wr * s.omega_r(), tau: tau_mirror },
            ..Default::default()
        },
        species: s,
        pulses: Vec::new(),
        laser_phase: 0.0,
        mirror_delta_k: 0.0,
        frame: Frame::FreelyFalling,
        gravity: None,
        frame_offset: 0.0,
        mean_field: None,
        measurement: MeasurementSpec::default(),
        numerics,
        record: None,
        t_end: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fringe::wrap_phase;

    fn small_mz(omega_wr: f64) -> SequenceSpec {
        let grid = GridSpec { x_min: -100e-6, x_max: 200e-6, n_points: 4096 };
        let mut s = mach_zehnder_spec(
            grid,
            0.05,
            1,
            omega_wr,
            omega_wr,
            25e-6,
            50e-6,
            0.5e-3,
            0.3e-3,
            StepScheme::strang(1e-6, 1e-5),
        );
        s.measurement.mode = Some(MeasurementMode::Momentum);
        s
    }

    #[test]
    fn dark_pulses_leave_the_cloud_at_rest() {
        let r = run_mach_zehnder(&small_mz(0.0)).unwrap();
        assert!((r.population(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((r.final_norm - r.initial_norm).abs() < 1e-12);
    }

    #[test]
    fn sequence_conserves_norm() {
        let r = run_mach_zehnder(&small_mz(1.0573)).unwrap();
        assert!((r.final_norm / r.initial_norm - 1.0).abs() < 1e-12);
        let total: f64 = r.populations.normalized.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laser_phase_shifts_the_fringe() {
        let base = small_mz(1.0573);
        let mut shifted = base.clone();
        shifted.laser_phase = 0.4;
        let phis = scan_phases(8);
        let a = fringe_scan(&base, &phis).unwrap().fit.delta_phi;
        let b = fringe_scan(&shifted, &phis).unwrap().fit.delta_phi;
        assert!((wrap_phase(b - a).abs() - 0.4).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn double_bragg_splits_symmetrically() {
        let mut s = small_mz(1.0);
        s.geometry = "double_bragg".into();
        s.params.include_mirror = false;
        s.params.t_interrogation = 0.5e-3;
        s.grid = GridSpec { x_min: -150e-6, x_max: 150e-6, n_points: 4096 };
        let r = run_double_bragg(&s).unwrap();
        let (lo, hi) = (r.population(-2.0).unwrap(), r.population(2.0).unwrap());
        assert!((lo - hi).abs() < 1e-9, "{lo} {hi}");
    }

    #[test]
    fn wrong_geometry_is_rejected() {
        let err = run_double_bragg(&small_mz(1.0)).err().unwrap();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn gradiometer_phase_flips_with_gradient_sign() {
        let base = small_mz(1.0573);
        let run = |gamma: f64| {
            let mut b = base.clone();
            b.gravity = Some(GravitySpec { g: 0.0, gamma });
            let spec = GradiometerSpec { base: b, upper_offset: 1.0, lower_offset: 0.0, delta_k: vec![0.0], fringe_points: 6 };
            run_gradiometer(&spec).unwrap().points[0].phi
        };
        let (plus, minus) = (run(2e-3), run(-2e-3));
        assert!(plus.abs() > 1e-4, "{plus}");
        assert!((plus + minus).abs() < 1e-6 * plus.abs().max(1.0), "{plus} {minus}");
    }
}
