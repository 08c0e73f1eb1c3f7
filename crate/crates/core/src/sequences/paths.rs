//! Ballistic bookkeeping of the momentum classes produced by a pulse train.
//!
//! Used only to predict where ports land after time of flight; the wave
//! dynamics never depend on it.

use super::{PulseEvent, PulseKind};
use crate::potentials::BlochTerm;
use crate::units::Species;

/// Velocity tolerance for treating a class as resonant, in units of v_r.
const RESONANCE_TOL: f64 = 0.5;
const MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalPoint {
    pub x: f64,
    pub v: f64,
}

fn bloch_term(ev: &PulseEvent, species: &Species) -> Option<BlochTerm> {
    match ev.kind {
        PulseKind::Bloch { peak_rabi, v_start, n_bloch, tau_load, tau_chirp, tau_unload, t_start } => Some(BlochTerm {
            peak_rabi,
            k_lattice: species.k(),
            v_start,
            n_bloch,
            v_recoil: species.v_r(),
            tau_load,
            tau_chirp,
            tau_unload,
            t_start,
            phase: 0.0,
            x_origin: 0.0,
        }),
        _ => None,
    }
}

/// Velocities reachable from `v` by one resonant transition of this event.
fn transitions(ev: &PulseEvent, v: f64, vr: f64) -> Vec<f64> {
    let near = |a: f64, b: f64| (a - b).abs() < RESONANCE_TOL * vr;
    let bragg = |u: f64, n: f64, out: &mut Vec<f64>| {
        if near(v, u - n * vr) {
            out.push(v + 2.0 * n * vr);
        }
        if near(v, u + n * vr) {
            out.push(v - 2.0 * n * vr);
        }
    };
    let mut out = Vec::new();
    match &ev.kind {
        PulseKind::Bragg { order, velocity_offset, direction, .. } => {
            let n = *order as f64;
            bragg(f64::from(direction.signum()) * n * vr + velocity_offset, n, &mut out);
        }
        PulseKind::DoubleBragg { order, velocity_offset, .. } => {
            let n = *order as f64;
            let mut frontier = vec![v];
            let mut seen = vec![v];
            for _ in 0..2 {
                let mut next = Vec::new();
                for &w in &frontier {
                    for s in [1.0, -1.0] {
                        let u = s * n * vr + velocity_offset;
                        for c in [w + 2.0 * n * vr, w - 2.0 * n * vr] {
                            let resonant = (near(w, u - n * vr) && c > w) || (near(w, u + n * vr) && c < w);
                            if resonant && !seen.iter().any(|&x| near(x, c)) {
                                seen.push(c);
                                next.push(c);
                            }
                        }
                    }
                }
                frontier = next;
            }
            out.extend(seen.into_iter().skip(1));
        }
        PulseKind::Standing { .. } => {
            for j in -3i32..=3 {
                if j != 0 {
                    out.push(v + 2.0 * j as f64 * vr);
                }
            }
        }
        PulseKind::Bloch { .. } => {}
    }
    out
}

fn event_time(ev: &PulseEvent) -> f64 {
    match &ev.kind {
        PulseKind::Bloch { t_start, .. } => *t_start,
        k => k.envelope().map_or(0.0, |e| e.center),
    }
}

fn merge(points: &mut Vec<ClassicalPoint>) {
    let mut out: Vec<ClassicalPoint> = Vec::with_capacity(points.len());
    for p in points.drain(..) {
        if !out.iter().any(|q| (q.x - p.x).abs() < MERGE_TOL && (q.v - p.v).abs() < MERGE_TOL) {
            out.push(p);
        }
    }
    *points = out;
}

/// Applies one event to a set of classes located at time `t`; returns the new time.
fn apply(ev: &PulseEvent, pts: &mut Vec<ClassicalPoint>, t: f64, species: &Species) -> f64 {
    let vr = species.v_r();
    if let Some(b) = bloch_term(ev, species) {
        let (ts, te) = (b.t_start, b.t_end());
        let (xs, _) = b.kinematics(ts);
        let (xe, _) = b.kinematics(te);
        for p in pts.iter_mut() {
            p.x += p.v * (ts - t);
            if (p.v - b.v_start).abs() < RESONANCE_TOL * vr {
                p.x += xe - xs;
                p.v += 2.0 * b.n_bloch as f64 * vr;
            } else {
                p.x += p.v * (te - ts);
            }
        }
        return te;
    }
    let tc = event_time(ev);
    let mut next = Vec::new();
    for p in pts.iter() {
        let x = p.x + p.v * (tc - t);
        next.push(ClassicalPoint { x, v: p.v });
        for v in transitions(ev, p.v, vr) {
            next.push(ClassicalPoint { x, v });
        }
    }
    merge(&mut next);
    *pts = next;
    tc
}

/// All classical endpoints at `t_end` for a cloud starting at (x0, v0, t0).
pub fn enumerate_endpoints(
    events: &[PulseEvent],
    x0: f64,
    v0: f64,
    t0: f64,
    t_end: f64,
    species: &Species,
) -> Vec<ClassicalPoint> {
    let mut pts = vec![ClassicalPoint { x: x0, v: v0 }];
    let mut t = t0;
    for ev in events {
        t = apply(ev, &mut pts, t, species);
    }
    for p in pts.iter_mut() {
        p.x += p.v * (t_end - t);
    }
    merge(&mut pts);
    pts
}

/// Follows one path given its velocity after each event; returns its
/// position and the time of the last event.
pub fn follow(
    events: &[PulseEvent],
    velocities: &[f64],
    x0: f64,
    v0: f64,
    t0: f64,
    species: &Species,
) -> (f64, f64) {
    let (mut x, mut v, mut t) = (x0, v0, t0);
    for (ev, &target) in events.iter().zip(velocities) {
        if let Some(b) = bloch_term(ev, species) {
            let (ts, te) = (b.t_start, b.t_end());
            x += v * (ts - t);
            if (target - v).abs() > MERGE_TOL {
                x += b.kinematics(te).0 - b.kinematics(ts).0;
            } else {
                x += v * (te - ts);
            }
            t = te;
        } else {
            let tc = event_time(ev);
            x += v * (tc - t);
            t = tc;
        }
        v = target;
    }
    (x, t)
}
