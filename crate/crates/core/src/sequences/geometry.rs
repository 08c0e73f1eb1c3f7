//! Interferometer geometries: strategies that turn sequence parameters into
//! a concrete pulse schedule, looked up by name from a static registry.

use super::{MeasurementMode, PulseEvent, PulseKind, SequenceSpec};
use crate::error::{Error, Result};
use crate::potentials::{EnvelopeShape, PulseEnvelope, DEFAULT_TRUNCATION};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainPort {
    /// Port momentum relative to the initial cloud, in units of ħk.
    pub momentum_hk: f64,
}

/// Concrete pulse train produced by a geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub events: Vec<PulseEvent>,
    pub t_end: f64,
    /// Index of the event that receives the scanned laser phase.
    pub phase_target: Option<usize>,
    /// Harmonic expected in a laser-phase scan.
    pub fringe_order: u32,
    pub main_ports: Vec<MainPort>,
    /// Velocity of the reference path after each event (all but the last),
    /// relative to the initial cloud.
    pub reference: Vec<f64>,
    pub default_mode: MeasurementMode,
}

pub trait Geometry: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn schedule(&self, spec: &SequenceSpec) -> Result<Schedule>;
}

fn envelope(spec: &SequenceSpec, omega: f64, center: f64, tau: f64) -> PulseEnvelope {
    let shape = match spec.params.envelope {
        EnvelopeKind::Gaussian => EnvelopeShape::Gaussian { truncation: spec.params.truncation },
        EnvelopeKind::Rectangular => EnvelopeShape::Rectangular,
    };
    PulseEnvelope { shape, peak_rabi: omega, center, duration: tau }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    #[default]
    Gaussian,
    Rectangular,
}

pub fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}

fn require(name: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(name, msg))
    }
}

fn check_pulses(spec: &SequenceSpec) -> Result<()> {
    let p = &spec.params;
    require("params.order", p.order >= 1, "Bragg order must be at least 1")?;
    require("params.t_interrogation", p.t_interrogation > 0.0, "must be positive")?;
    require("params.tof", p.tof >= 0.0, "must be non-negative")?;
    require("params.splitter.tau", p.splitter.tau > 0.0, "must be positive")?;
    require("params.mirror.tau", p.mirror.tau > 0.0 || !p.include_mirror, "must be positive")?;
    Ok(())
}

fn velocity0(spec: &SequenceSpec) -> f64 {
    spec.initial.momentum() / spec.species.mass
}

fn bragg(label: &str, order: u32, env: PulseEnvelope, offset: f64) -> PulseEvent {
    PulseEvent::new(label, PulseKind::Bragg { order, envelope: env, velocity_offset: offset, direction: 1 })
}

/// π/2 – π – π/2 Bragg sequence of order n.
pub struct MachZehnder;

impl Geometry for MachZehnder {
    fn name(&self) -> &'static str {
        "mach_zehnder"
    }
    fn description(&self) -> &'static str {
        "Bragg pi/2 at 0, pi at T, pi/2 at 2T, then time of flight; ports 0 and 2n hbar k"
    }
    fn schedule(&self, spec: &SequenceSpec) -> Result<Schedule> {
        check_pulses(spec)?;
        let p = &spec.params;
        let (n, t) = (p.order, p.t_interrogation);
        let v0 = velocity0(spec);
        let rec = p.recombiner.unwrap_or(p.splitter);
        let mut events = vec![bragg("splitter", n, envelope(spec, p.splitter.omega, 0.0, p.splitter.tau), v0)];
        let mut reference = vec![2.0 * n as f64];
        if p.include_mirror {
            let mut m = bragg("mirror", n, envelope(spec, p.mirror.omega, t, p.mirror.tau), v0);
            m.mirror = true;
            events.push(m);
            reference.push(0.0);
        }
        events.push(bragg("recombiner", n, envelope(spec, rec.omega, 2.0 * t, rec.tau), v0));
        Ok(Schedule {
            phase_target: Some(events.len() - 1),
            t_end: 2.0 * t + p.tof,
            events,
            fringe_order: n,
            main_ports: vec![MainPort { momentum_hk: 0.0 }, MainPort { momentum_hk: 2.0 * n as f64 }],
            reference,
            default_mode: MeasurementMode::Position,
        })
    }
}

/// Double-Bragg splitter, mirror and recombiner with a ± lattice pair.
pub struct DoubleBragg;

impl Geometry for DoubleBragg {
    fn name(&self) -> &'static str {
        "double_bragg"
    }
    fn description(&self) -> &'static str {
        "symmetric double-Bragg interferometer; ports -2n, 0 and +2n hbar k"
    }
    fn schedule(&self, spec: &SequenceSpec) -> Result<Schedule> {
        check_pulses(spec)?;
        let p = &spec.params;
        let (n, t) = (p.order, p.t_interrogation);
        let v0 = velocity0(spec);
        let rec = p.recombiner.unwrap_or(p.splitter);
        let db = |label: &str, env: PulseEnvelope| {
            PulseEvent::new(label, PulseKind::DoubleBragg { order: n, envelope: env, velocity_offset: v0 })
        };
        let mut events = vec![db("splitter", envelope(spec, p.splitter.omega, 0.0, p.splitter.tau))];
        let mut reference = vec![2.0 * n as f64];
        if p.include_mirror {
            let mut m = db("mirror", envelope(spec, p.mirror.omega, t, p.mirror.tau));
            m.mirror = true;
            events.push(m);
            reference.push(-2.0 * n as f64);
        }
        events.push(db("recombiner", envelope(spec, rec.omega, 2.0 * t, rec.tau)));
        let nn = 2.0 * n as f64;
        Ok(Schedule {
            phase_target: Some(events.len() - 1),
            t_end: 2.0 * t + p.tof,
            events,
            fringe_order: n,
            main_ports: [-nn, 0.0, nn].iter().map(|&m| MainPort { momentum_hk: m }).collect(),
            reference,
            default_mode: MeasurementMode::Position,
        })
    }
}

/// Single rectangular standing-wave pulse followed by time of flight.
pub struct RamanNath;

impl Geometry for RamanNath {
    fn name(&self) -> &'static str {
        "raman_nath"
    }
    fn description(&self) -> &'static str {
        "rectangular standing-wave pulse starting at t = 0; orders 0, ±2, ±4, ±6 hbar k"
    }
    fn schedule(&self, spec: &SequenceSpec) -> Result<Schedule> {
        let p = &spec.params;
        require("params.tof", p.tof >= 0.0, "must be non-negative")?;
        require("params.splitter.tau", p.splitter.tau >= 0.0, "must be non-negative")?;
        let tau = p.splitter.tau;
        let mut events = Vec::new();
        if tau > 0.0 {
            events.push(PulseEvent::new(
                "standing",
                PulseKind::Standing { envelope: PulseEnvelope::rectangular(p.splitter.omega, 0.5 * tau, tau) },
            ));
        }
        Ok(Schedule {
            phase_target: None,
            t_end: tau + p.tof,
            events,
            fringe_order: 1,
            main_ports: (-3..=3).map(|j| MainPort { momentum_hk: 2.0 * j as f64 }).collect(),
            reference: Vec::new(),
            default_mode: MeasurementMode::Momentum,
        })
    }
}

/// Bragg splitter, Bloch acceleration of the upper arm, higher-order Bragg
/// mirror, symmetric Bloch deceleration of the lower arm, Bragg recombiner.
pub struct BraggBloch;

impl Geometry for BraggBloch {
    fn name(&self) -> &'static str {
        "bragg_bloch"
    }
    fn description(&self) -> &'static str {
        "(2n + 2n_B) hbar k interferometer: Bragg splitter, Bloch on each arm, Bragg mirror of order n + n_B"
    }
    fn schedule(&self, spec: &SequenceSpec) -> Result<Schedule> {
        check_pulses(spec)?;
        let p = &spec.params;
        let b = p
            .bloch
            .ok_or_else(|| Error::config("params.bloch", "bragg_bloch geometry needs a [params.bloch] table"))?;
        require("params.bloch.n_bloch", b.n_bloch >= 1, "must be at least 1")?;
        require(
            "params.bloch",
            b.tau_load > 0.0 && b.tau_chirp > 0.0 && b.tau_unload >= 0.0 && b.delay >= 0.0,
            "stage durations must be positive",
        )?;
        let (n, t) = (p.order, p.t_interrogation);
        let nb = b.n_bloch as u32;
        let total = b.tau_load + b.tau_chirp + b.tau_unload;
        require("params.bloch", 2.0 * (b.delay + total) < t, "Bloch stages do not fit inside T")?;
        let vr = spec.species.v_r();
        let v0 = velocity0(spec);
        let rec = p.recombiner.unwrap_or(p.splitter);
        // Bloch stages may overlap the Bragg pulse tails.
        let bloch = |label: &str, v_start: f64, n_bloch: i32, t_start: f64| PulseEvent {
            composite: true,
            ..PulseEvent::new(
                label,
                PulseKind::Bloch {
                    peak_rabi: b.omega,
                    v_start,
                    n_bloch,
                    tau_load: b.tau_load,
                    tau_chirp: b.tau_chirp,
                    tau_unload: b.tau_unload,
                    t_start,
                },
            )
        };
        let mut mirror = bragg("mirror", n + nb, envelope(spec, p.mirror.omega, t, p.mirror.tau), v0);
        mirror.mirror = true;
        let events = vec![
            bragg("splitter", n, envelope(spec, p.splitter.omega, 0.0, p.splitter.tau), v0),
            bloch("bloch_up", 2.0 * n as f64 * vr + v0, b.n_bloch, b.delay),
            mirror,
            bloch("bloch_down", 2.0 * (n + nb) as f64 * vr + v0, -b.n_bloch, 2.0 * t - b.delay - total),
            bragg("recombiner", n, envelope(spec, rec.omega, 2.0 * t, rec.tau), v0),
        ];
        Ok(Schedule {
            phase_target: Some(4),
            t_end: 2.0 * t + p.tof,
            events,
            fringe_order: n,
            main_ports: vec![MainPort { momentum_hk: 0.0 }, MainPort { momentum_hk: 2.0 * n as f64 }],
            reference: vec![2.0 * n as f64, 2.0 * (n + nb) as f64, 0.0, 0.0],
            default_mode: MeasurementMode::Position,
        })
    }
}

/// Explicit pulse list from the configuration.
pub struct Custom;

impl Geometry for Custom {
    fn name(&self) -> &'static str {
        "custom"
    }
    fn description(&self) -> &'static str {
        "pulses listed explicitly in the configuration; ports from [measurement]"
    }
    fn schedule(&self, spec: &SequenceSpec) -> Result<Schedule> {
        let events = spec.pulses.clone();
        let last_end = events
            .iter()
            .filter_map(|e| e.window())
            .map(|w| w.1)
            .fold(0.0f64, f64::max);
        let t_end = spec.t_end.unwrap_or(last_end + spec.params.tof);
        let ports = spec.measurement.ports.clone().unwrap_or_else(|| vec![0.0]);
        let phase_target = spec.measurement.phase_pulse.or(if events.is_empty() { None } else { Some(events.len() - 1) });
        Ok(Schedule {
            reference: spec.measurement.reference.clone().unwrap_or_else(|| vec![0.0; events.len().saturating_sub(1)]),
            events,
            t_end,
            phase_target,
            fringe_order: spec.measurement.fringe_order.unwrap_or(spec.params.order.max(1)),
            main_ports: ports.into_iter().map(|m| MainPort { momentum_hk: m }).collect(),
            default_mode: MeasurementMode::Position,
        })
    }
}

fn registry() -> &'static [Box<dyn Geometry>] {
    static REG: OnceLock<Vec<Box<dyn Geometry>>> = OnceLock::new();
    REG.get_or_init(|| {
        vec![
            Box::new(MachZehnder),
            Box::new(DoubleBragg),
            Box::new(RamanNath),
            Box::new(BraggBloch),
            Box::new(Custom),
        ]
    })
}

pub fn geometry_by_name(name: &str) -> Option<&'static dyn Geometry> {
    registry().iter().find(|g| g.name() == name).map(|b| b.as_ref())
}

pub fn geometry_names() -> Vec<&'static str> {
    registry().iter().map(|g| g.name()).collect()
}
