//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary. FAIL lines are reported without failing the
//! process unless ACCEPTANCE_STRICT=1; ACCEPTANCE_ONLY=1,4 selects criteria.

use lightpulse::analysis::fringe::{dominant_harmonic, fit_fringe};
use lightpulse::analysis::models::{raman_nath_oracle, velocity_acceptance};
use lightpulse::calibration::{optimize_rabi, reference_grid, CalibrationProblem, PulseFamily, Target};
use lightpulse::grid::make_grid;
use lightpulse::ode::{complexity_benchmark, ode_pde_equivalence, ModeBasis};
use lightpulse::potentials::PulseEnvelope;
use lightpulse::propagator::{propagate, MeanField, StepScheme};
use lightpulse::sequences::*;
use lightpulse::state::gaussian_packet;
use lightpulse::units::g1d_from_transverse;
use lightpulse::{GridSpec, Species};
use std::f64::consts::PI;
use std::time::Instant;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, what: &str, start: Instant) {
        if !pass {
            self.failures += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {what} ({:.1} s)", start.elapsed().as_secs_f64());
    }
}

fn rb() -> Species {
    Species::rb87()
}

fn mz_grid() -> GridSpec {
    GridSpec { x_min: -1.0e-3, x_max: 2.0e-3, n_points: 65536 }
}

fn calibrate(order: u32, tau: f64, target: Target, bracket_wr: (f64, f64)) -> f64 {
    let s = rb();
    let wr = s.omega_r();
    let p = CalibrationProblem {
        grid: reference_grid(&s, order.max(2)),
        species: s.clone(),
        order,
        family: PulseFamily::Bragg,
        envelope: EnvelopeKind::Gaussian,
        truncation: 4.0,
        tau,
        target,
        sigma_p: 0.01 * s.hbar_k(),
        source_hk: 0.0,
        dest_hk: None,
        bracket: (bracket_wr.0 * wr, bracket_wr.1 * wr),
        numerics: StepScheme::strang(1e-6, 1e-5),
        samples: 9,
    };
    optimize_rabi(&p).expect("calibration").omega / wr
}

fn c1(r: &mut Report) {
    let t = Instant::now();
    let s = rb();
    let grid = GridSpec { x_min: -0.45e-3, x_max: 0.45e-3, n_points: 32768 };
    let mut spec = mach_zehnder_spec(grid, 0.01, 1, 50.0, 0.0, 1e-6, 0.0, 0.0, 20e-3, StepScheme::strang(0.01e-6, 1e-5));
    spec.geometry = "raman_nath".into();
    let res = run_raman_nath(&spec).expect("raman-nath run");
    let orders: Vec<i32> = (-3..=3).collect();
    let oracle = raman_nath_oracle(50.0 * s.omega_r(), 1e-6, &orders);
    let err = orders
        .iter()
        .zip(&oracle)
        .map(|(&j, o)| (res.populations.raw[(j + 3) as usize] - o).abs())
        .fold(0.0, f64::max);
    let pass = err <= 2e-3 && t.elapsed().as_secs_f64() < 30.0;
    r.line("1", pass, &format!("Raman-Nath max |P - J_n^2| = {err:.2e} (tol 2e-3, < 30 s)"), t);
}

fn c2(r: &mut Report) {
    let t = Instant::now();
    let w1 = calibrate(1, 25e-6, Target::Half, (0.5, 2.0));
    let w2 = calibrate(2, 25e-6, Target::Half, (2.0, 5.0));
    let w3 = calibrate(3, 25e-6, Target::Half, (6.0, 11.0));
    let e1 = (w1 / 1.0573 - 1.0).abs();
    let e2 = (w2 / 3.7 - 1.0).abs();
    let e3 = (w3 / 8.4 - 1.0).abs();
    let pass = e1 <= 5e-3 && e2 <= 0.03 && e3 <= 0.03 && t.elapsed().as_secs_f64() < 600.0;
    r.line(
        "2",
        pass,
        &format!(
            "calibrated Omega = {w1:.4} / {w2:.4} / {w3:.4} w_r, rel. err {e1:.1e} (tol 5e-3) / {e2:.1e} / {e3:.1e} (tol 3e-2)"
        ),
        t,
    );
}

fn c3(r: &mut Report) {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (n, w) in [(1u32, 1.0573), (2, 3.70), (3, 8.4)] {
        let grid = GridSpec { x_min: -0.5e-3, x_max: 2.0e-3, n_points: 65536 };
        let spec = mach_zehnder_spec(grid, 0.01, n, w, w, 25e-6, 50e-6, 10e-3, 20e-3, StepScheme::strang(1e-6, 1e-5));
        let phis = scan_phases(24);
        let scan = fringe_scan(&spec, &phis).expect("fringe scan");
        let h = dominant_harmonic(&phis, &scan.signal());
        pass &= scan.fit.residual_rms < 1e-3 && h == n;
        parts.push(format!("n={n}: rms {:.1e}, harmonic {h}", scan.fit.residual_rms));
    }
    r.line("3", pass, &format!("fringe law {} (tol rms < 1e-3, harmonic = n)", parts.join("; ")), t);
}

fn plateau_spec(sigma_p: f64) -> SequenceSpec {
    mach_zehnder_spec(mz_grid(), sigma_p, 1, 0.53, 0.53, 50e-6, 100e-6, 10e-3, 20e-3, StepScheme::strang(1e-6, 1e-5))
}

fn c4(r: &mut Report) {
    let t = Instant::now();
    let single = Instant::now();
    run_mach_zehnder(&plateau_spec(0.03)).expect("single run");
    let single = single.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for sp in [0.03, 0.01] {
        let scan = fringe_scan(&plateau_spec(sp), &scan_phases(24)).expect("fringe scan");
        worst = worst.max(scan.fit.delta_phi.abs());
        parts.push(format!("sigma_p={sp}: |dphi| = {:.2e}", scan.fit.delta_phi.abs()));
    }
    let pass = worst <= 1e-10 && single <= 5.0 * 12.7;
    r.line(
        "4",
        pass,
        &format!("phase plateau {} (tol 1e-10); single run {single:.1} s (tol 63.5 s)", parts.join(", ")),
        t,
    );
}

fn c5(r: &mut Report) {
    let t = Instant::now();
    let s = rb();
    let sv = velocity_acceptance(50e-6, &s) / s.v_r();
    let fr: Vec<f64> = [0.1, 0.03, 0.01]
        .iter()
        .map(|&sp| run_mach_zehnder(&plateau_spec(sp)).expect("mz run").parasitic_fraction)
        .collect();
    let formula = (sv * 1e3).round() == 105.0;
    let mono = fr[0] > fr[1] && fr[1] > fr[2];
    let pass = formula && mono && fr[0] >= 0.01 && fr[2] <= 1e-4;
    r.line(
        "5",
        pass,
        &format!(
            "sigma_v = {sv:.5} v_r (0.105); parasitic {:.3e} / {:.3e} / {:.3e} at sigma_p 0.1 / 0.03 / 0.01 (tol >= 1e-2, monotone, <= 1e-4)",
            fr[0], fr[1], fr[2]
        ),
        t,
    );
}

fn c6(r: &mut Report) {
    let t = Instant::now();
    let s = rb();
    let wr = s.omega_r();
    let sp = 0.1;
    let db = |tau: f64, target, src: f64, dst: Vec<f64>| {
        let p = CalibrationProblem {
            species: s.clone(),
            grid: GridSpec { x_min: -0.2e-3, x_max: 0.2e-3, n_points: 8192 },
            order: 1,
            family: PulseFamily::DoubleBragg,
            envelope: EnvelopeKind::Gaussian,
            truncation: 4.0,
            tau,
            target,
            sigma_p: sp * s.hbar_k(),
            source_hk: src,
            dest_hk: Some(dst),
            bracket: (1.0 * wr, 2.0 * wr),
            numerics: StepScheme::strang(1e-6, 1e-5),
            samples: 9,
        };
        optimize_rabi(&p).expect("double-Bragg calibration").omega / wr
    };
    let split = db(25e-6, Target::Full, 0.0, vec![-2.0, 2.0]);
    let mirror = db(50e-6, Target::Full, 2.0, vec![-2.0]);
    let grid = GridSpec { x_min: -0.8e-3, x_max: 0.8e-3, n_points: 32768 };
    let mut spec = mach_zehnder_spec(grid, sp, 1, split, mirror, 25e-6, 50e-6, 10e-3, 20e-3, StepScheme::strang(1e-6, 1e-5));
    spec.geometry = "double_bragg".into();
    spec.params.recombiner = Some(PulseParams { omega: 0.5 * split * wr, tau: 25e-6 });
    let res = run_double_bragg(&spec).expect("double-Bragg run");
    let p = &res.populations.normalized;
    let dev = [(p[0] - 0.25).abs(), (p[1] - 0.5).abs(), (p[2] - 0.25).abs()].into_iter().fold(0.0, f64::max);
    let pass = dev <= 0.03 && t.elapsed().as_secs_f64() < 300.0;
    r.line(
        "6",
        pass,
        &format!(
            "double-Bragg ports {:.3}/{:.3}/{:.3} (Omega {split:.3}/{mirror:.3}/{:.3} w_r), max dev {dev:.3} (tol 0.03)",
            p[0],
            p[1],
            p[2],
            0.5 * split
        ),
        t,
    );
}

fn gradiometer(bloch: bool, fractions: &[f64]) -> GradiometerResult {
    let s = rb();
    let wr = s.omega_r();
    let gamma = 3e-3 / (0.068 * 4.0 * s.k() * 2.0 * 1e-4);
    let scheme = StepScheme::strang(1e-6, 1e-5);
    let mut spec = if bloch {
        let mut sp = mach_zehnder_spec(mz_grid(), 0.01, 1, 1.0573, 3.797, 25e-6, 50e-6, 10e-3, 20e-3, scheme);
        sp.geometry = "bragg_bloch".into();
        sp.params.bloch = Some(BlochParams {
            omega: 4.0 * wr,
            n_bloch: 1,
            tau_load: 0.5e-3,
            tau_chirp: 0.5e-3,
            tau_unload: 0.5e-3,
            delay: 0.0,
        });
        sp
    } else {
        mach_zehnder_spec(mz_grid(), 0.01, 2, 3.70, 3.797, 25e-6, 50e-6, 10e-3, 20e-3, scheme)
    };
    spec.gravity = Some(GravitySpec { g: 9.81, gamma });
    let dkb = 0.5 * gamma * 4.0 * s.k() * 1e-4;
    let g = GradiometerSpec {
        base: spec,
        upper_offset: 2.0,
        lower_offset: 0.0,
        delta_k: fractions.iter().map(|f| f * dkb).collect(),
        fringe_points: 8,
    };
    run_gradiometer(&g).expect("gradiometer")
}

fn c7(r: &mut Report) {
    let t = Instant::now();
    let bragg = gradiometer(false, &[0.9, 1.0, 1.1]);
    let bloch = gradiometer(true, &[0.85, 0.95, 1.05]);
    let rb_ = bragg.crossing_ratio().unwrap_or(f64::NAN);
    let rl = bloch.crossing_ratio().unwrap_or(f64::NAN);
    let phi = bloch.phase_at(bragg.bragg_delta_k);
    let ok_bragg = (rb_ - 1.0).abs() <= 0.02;
    let ok_bloch = (rl / 0.932 - 1.0).abs() <= 0.02;
    let ok_phi = (phi + 3e-3).abs() <= 0.5e-3;
    let pass = ok_bragg && ok_bloch && ok_phi && t.elapsed().as_secs_f64() < 1800.0;
    r.line(
        "7",
        pass,
        &format!(
            "gradiometer crossing 4hk Bragg {rb_:.4} (1 +- 2%), Bragg+Bloch {rl:.4} (0.932 +- 2%), Phi(dk_B) = {:.2} mrad (-3 +- 0.5)",
            phi * 1e3
        ),
        t,
    );
}

fn c8(r: &mut Report) {
    let t = Instant::now();
    let s = rb();
    let g1d = g1d_from_transverse(0.01 * s.a_s, 2.0 * PI * 50.0);
    let (wx, n) = (2.0 * PI, 6e4);
    let t_int = 2.1e-3 / lightpulse::analysis::models::meanfield_phase_model(0.07, n, g1d, wx, &s, 1.0);
    let grid = GridSpec { x_min: -80e-6, x_max: 220e-6, n_points: 8192 };
    let mut spec =
        mach_zehnder_spec(grid, 0.01, 1, 1.0573, 1.0573, 25e-6, 50e-6, t_int, 10e-3, StepScheme::strang(1e-6, 1e-5));
    spec.initial = InitialState::Bec { omega_x: wx, tol: 1e-12 };
    spec.mean_field = Some(MeanField { g1d, n_atoms: n });
    let ts = TrappedSpec {
        base: spec,
        imbalances: (0..=7).map(|i| 0.01 * i as f64).collect(),
        bracket: (0.7, 1.3),
        fringe_points: 12,
    };
    let res = run_trapped_mz(&ts).expect("trapped run");
    let last = res.points.last().expect("points");
    let rel = last.delta_phi / last.model - 1.0;
    let cmin = res.points.iter().map(|p| p.contrast).fold(1.0, f64::min);
    let pass = rel.abs() <= 0.2 && res.r_squared >= 0.99 && cmin > 0.99 && t.elapsed().as_secs_f64() < 1800.0;
    r.line(
        "8",
        pass,
        &format!(
            "mean field at dN = {:.3}: dphi = {:.3} mrad vs model {:.3} mrad ({:+.1}%, tol 20%); R^2 = {:.5}; min contrast {cmin:.4}",
            last.delta_n,
            last.delta_phi * 1e3,
            last.model * 1e3,
            rel * 100.0,
            res.r_squared
        ),
        t,
    );
}

fn c9(r: &mut Report) {
    let t = Instant::now();
    let s = rb();
    let wr = s.omega_r();
    let lam = s.lambda_light;
    let grid = GridSpec { x_min: -100e-6, x_max: 150e-6, n_points: 8192 };
    let mut spec =
        mach_zehnder_spec(grid, 0.01, 1, 1.0573, 1.0573, 25e-6, 50e-6, 1e-3, 0.0, StepScheme::third_order(1e-6, 1e-6));
    spec.geometry = "custom".into();
    spec.initial = InitialState::Bec { omega_x: 2.0 * PI, tol: 1e-12 };
    spec.mean_field = Some(MeanField { g1d: g1d_from_transverse(0.01 * s.a_s, 2.0 * PI * 50.0), n_atoms: 6e4 });
    let bragg = PulseKind::Bragg {
        order: 1,
        envelope: PulseEnvelope::gaussian(1.0573 * wr, 0.0, 50e-6),
        velocity_offset: 0.0,
        direction: 1,
    };
    let bloch = PulseKind::Bloch {
        peak_rabi: 4.0 * wr,
        v_start: 2.0 * s.v_r(),
        n_bloch: 1,
        tau_load: 0.5e-3,
        tau_chirp: 0.5e-3,
        tau_unload: 0.5e-3,
        t_start: 0.0,
    };
    spec.pulses = vec![PulseEvent::new("bragg", bragg), PulseEvent { composite: true, ..PulseEvent::new("bloch", bloch) }];
    spec.measurement.ports = Some(vec![0.0, 2.0, 4.0]);
    spec.measurement.mode = Some(MeasurementMode::Momentum);
    let tab = convergence_scan(&spec, &[1e-6, 0.5e-6], &[0.236 * lam, 0.06 * lam, 0.03 * lam], 4.0).expect("scan");
    let ddt = tab.dt_pair_deviation.unwrap_or(f64::NAN);
    let ddx = tab.dx_pair_deviation.unwrap_or(f64::NAN);
    let flagged = tab
        .cells
        .iter()
        .filter(|c| (c.dx - 0.236 * lam).abs() < 1e-15)
        .all(|c| c.flags.iter().any(|f| f == "momentum_truncation"));
    let value = tab.cell(0.5e-6, 0.03 * lam).map_or(f64::NAN, |c| c.value);
    let pass = ddt < 1e-3 && ddx < 1e-3 && flagged;
    r.line(
        "9",
        pass,
        &format!(
            "convergence P(4hk) = {value:.5}: dt pair {ddt:.1e}, dx pair {ddx:.1e} (tol 1e-3); 0.236 lambda flagged: {flagged}"
        ),
        t,
    );
}

fn c10(r: &mut Report) {
    let t = Instant::now();
    let s = rb();
    // Unitarity over a full Mach-Zehnder.
    let grid = GridSpec { x_min: -0.25e-3, x_max: 0.5e-3, n_points: 16384 };
    let mut mz = mach_zehnder_spec(grid, 0.1, 1, 1.0573, 1.0573, 25e-6, 50e-6, 2e-3, 2e-3, StepScheme::strang(1e-6, 1e-5));
    mz.measurement.mode = Some(MeasurementMode::Momentum);
    let run = run_mach_zehnder(&mz).expect("mz");
    let drift = (run.final_norm - run.initial_norm).abs();
    // Strang order: error ratio between dt and dt/4 against a fine reference.
    let g = make_grid(-30e-6, 30e-6, 2048).expect("grid");
    let terms = PulseEvent::new(
        "bragg",
        PulseKind::Bragg {
            order: 1,
            envelope: PulseEnvelope::gaussian(2.0 * s.omega_r(), 40e-6, 10e-6),
            velocity_offset: 0.0,
            direction: 1,
        },
    )
    .terms(&s, 0.0, 0.0, 0.3);
    let psi0 = gaussian_packet(&g, 0.2 * s.hbar_k(), 0.0, 0.0).expect("packet");
    let evolve = |dt: f64| {
        let mut p = psi0.clone();
        propagate(&mut p, &terms, s.mass, &StepScheme::strang(dt, dt), None, 80e-6, None).expect("propagate");
        p
    };
    let reference = evolve(0.01e-6);
    let err = |dt: f64| {
        let p = evolve(dt);
        p.amplitudes().iter().zip(reference.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let order = (err(1e-6) / err(0.25e-6)).ln() / 4f64.ln();
    // FFT round trip.
    let mut buf: Vec<_> = psi0.amplitudes().to_vec();
    g.forward(&mut buf);
    g.inverse(&mut buf);
    let nn = g.n_points() as f64;
    let fft = buf
        .iter()
        .zip(psi0.amplitudes())
        .map(|(a, b)| (a / nn - b).norm())
        .fold(0.0, f64::max);
    // Fringe fit on synthetic data.
    let phis = scan_phases(24);
    let ys: Vec<f64> = phis.iter().map(|p| 0.5 + 0.4 * (2.0 * p + 0.7).cos()).collect();
    let fit = fit_fringe(&phis, &ys, 2).expect("fit");
    let fit_err = (fit.delta_phi - 0.7).abs().max((fit.contrast - 0.8).abs()).max((fit.offset - 0.5).abs());
    // ODE against split-operator on a plane-wave pulse.
    let n = 2048;
    let dx = s.lambda_light / 32.0;
    let pg = make_grid(-0.5 * n as f64 * dx, (0.5 * n as f64 - 1.0) * dx, n).expect("grid");
    let basis = ModeBasis::gaussian(8, 64, 0.01, -1).expect("basis");
    let env = PulseEnvelope::gaussian(1.0573 * s.omega_r(), 0.0, 25e-6);
    let eq = ode_pde_equivalence(&basis, &env, &s, &pg, &StepScheme::third_order(0.05e-6, 0.05e-6), 5e-9)
        .expect("equivalence");
    // Benchmark scaling.
    let bench = complexity_benchmark(&[4096, 8192, 16384, 32768, 65536], 40, 3).expect("benchmark");
    let slope = bench.pde_slope.unwrap_or(f64::NAN);
    let pass = drift <= 1e-9
        && (order - 2.0).abs() <= 0.2
        && fft <= 1e-12
        && fit_err <= 1e-10
        && eq.max_abs_diff <= 1e-6
        && (0.9..=1.3).contains(&slope);
    r.line(
        "10",
        pass,
        &format!(
            "norm drift {drift:.1e} (1e-9); Strang order {order:.3}; FFT round trip {fft:.1e} (1e-12); fit error {fit_err:.1e} (1e-10); ODE-PDE {:.1e} (1e-6); PDE slope {slope:.3} ([0.9, 1.3])",
            eq.max_abs_diff
        ),
        t,
    );
}

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(&str, fn(&mut Report)); 10] = [
        ("1", c1),
        ("2", c2),
        ("3", c3),
        ("4", c4),
        ("5", c5),
        ("6", c6),
        ("7", c7),
        ("8", c8),
        ("9", c9),
        ("10", c10),
    ];
    let mut report = Report { failures: 0 };
    for (id, f) in criteria {
        if only.as_ref().is_none_or(|o| o.iter().any(|x| x == id)) {
            f(&mut report);
        }
    }
    println!("acceptance: {} criteria failed", report.failures);
    if strict && report.failures > 0 {
        std::process::exit(1);
    }
}
