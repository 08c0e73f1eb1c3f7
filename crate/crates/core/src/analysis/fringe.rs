use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Fit of P(φ₀) = offset·(1 + C·cos(Δφ + n·φ₀)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub delta_phi: f64,
    pub contrast: f64,
    pub offset: f64,
    pub residual_rms: f64,
    pub n_order: u32,
    pub iterations: u32,
}

impl FringeFit {
    pub fn model(&self, phi0: f64) -> f64 {
        self.offset * (1.0 + self.contrast * (self.delta_phi + self.n_order as f64 * phi0).cos())
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// (1/N) Σ P_j e^{i h φ_j}.
fn harmonic(phis: &[f64], pops: &[f64], h: f64) -> (f64, f64) {
    let n = phis.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (&p, &y) in phis.iter().zip(pops) {
        let (s, c) = (h * p).sin_cos();
        re += y * c;
        im += y * s;
    }
    (re / n, im / n)
}

/// Harmonic index with the largest Fourier amplitude.
pub fn dominant_harmonic(phis: &[f64], pops: &[f64]) -> u32 {
    let mean = pops.iter().sum::<f64>() / pops.len() as f64;
    let centred: Vec<f64> = pops.iter().map(|p| p - mean).collect();
    (1..=(phis.len() / 2) as u32)
        .map(|h| {
            let (re, im) = harmonic(phis, &centred, h as f64);
            (h, re * re + im * im)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(h, _)| h)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        *xk = det(m) / d;
    }
    Some(x)
}

fn sum_sq(phis: &[f64], pops: &[f64], n: f64, p: [f64; 3]) -> f64 {
    phis.iter()
        .zip(pops)
        .map(|(&f, &y)| {
            let r = p[2] * (1.0 + p[1] * (p[0] + n * f).cos()) - y;
            r * r
        })
        .sum()
}

/// Least-squares fringe fit: harmonic-n DFT estimate refined by damped Gauss-Newton.
pub fn fit_fringe(phis: &[f64], pops: &[f64], n_order: u32) -> Result<FringeFit> {
    let fail = |m: String| Error::Fit { message: m, trace: Vec::new() };
    if phis.len() != pops.len() {
        return Err(fail("phase and population lists differ in length".into()));
    }
    if phis.len() < 5 {
        return Err(fail(format!("{} scan points, need at least 5", phis.len())));
    }
    if n_order == 0 {
        return Err(fail("harmonic order must be at least 1".into()));
    }
    let n = n_order as f64;
    let lo = phis.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spacing = (hi - lo) / (phis.len() - 1) as f64;
    if hi - lo + spacing < TAU / n - 1e-9 {
        return Err(fail(format!("scan span {:.3} rad is shorter than one period", hi - lo)));
    }
    let mean = pops.iter().sum::<f64>() / pops.len() as f64;
    let (re, im) = harmonic(phis, pops, n);
    let amp = (re * re + im * im).sqrt();
    let mut p = [-im.atan2(re), if mean != 0.0 { 2.0 * amp / mean } else { 0.0 }, mean];
    let mut trace = Vec::new();
    let mut lambda = 0.0;
    let mut s = sum_sq(phis, pops, n, p);
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..200 {
        iterations = it + 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&f, &y) in phis.iter().zip(pops) {
            let (sn, cs) = (p[0] + n * f).sin_cos();
            let r = p[2] * (1.0 + p[1] * cs) - y;
            let j = [-p[2] * p[1] * sn, p[2] * cs, 1.0 + p[1] * cs];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut m = jtj;
            for a in 0..3 {
                m[a][a] *= 1.0 + lambda;
            }
            let Some(d) = solve3(m, jtr) else {
                lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                continue;
            };
            let q = [p[0] - d[0], p[1] - d[1], p[2] - d[2]];
            let sq = sum_sq(phis, pops, n, q);
            if sq <= s {
                let step = d.iter().map(|x| x.abs()).fold(0.0, f64::max);
                p = q;
                s = sq;
                lambda *= 0.1;
                accepted = true;
                trace.push(format!("it {iterations}: dphi={:.15} C={:.15} a={:.15} ss={sq:.3e}", p[0], p[1], p[2]));
                if step < 1e-15 * (1.0 + p[0].abs()) {
                    converged = true;
                }
                break;
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
        }
        if !accepted {
            // No descent direction left: the iterate is at a minimum to machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged || !p.iter().all(|x| x.is_finite()) {
        return Err(Error::Fit { message: "Gauss-Newton did not converge".into(), trace });
    }
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[0] += PI;
    }
    let residual_rms = (s / phis.len() as f64).sqrt();
    let fit = FringeFit {
        delta_phi: wrap_phase(p[0]),
        contrast: p[1],
        offset: p[2],
        residual_rms,
        n_order,
        iterations,
    };
    if fit.contrast < 3.0 * residual_rms {
        return Err(Error::LowContrast { contrast: fit.contrast, residual: residual_rms });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn scan(n_pts: usize) -> Vec<f64> {
        (0..n_pts).map(|i| TAU * i as f64 / n_pts as f64).collect()
    }

    fn synth(phis: &[f64], dphi: f64, c: f64, a: f64, n: u32) -> Vec<f64> {
        phis.iter().map(|&f| a * (1.0 + c * (dphi + n as f64 * f).cos())).collect()
    }

    #[test]
    fn noiseless_example() {
        let phis = scan(24);
        let pops = synth(&phis, 0.3, 0.8, 0.5, 2);
        let f = fit_fringe(&phis, &pops, 2).unwrap();
        assert!((f.delta_phi - 0.3).abs() < 1e-10);
        assert!((f.contrast - 0.8).abs() < 1e-10);
        assert_eq!(dominant_harmonic(&phis, &pops), 2);
    }

    #[test]
    fn minimum_points() {
        let phis = scan(5);
        let pops = synth(&phis, -1.0, 0.9, 0.5, 1);
        let f = fit_fringe(&phis, &pops, 1).unwrap();
        assert!((f.delta_phi + 1.0).abs() < 1e-10);
        assert!(fit_fringe(&phis[..4], &pops[..4], 1).is_err());
    }

    #[test]
    fn short_span_rejected() {
        let phis: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
        let pops = synth(&phis, 0.0, 0.9, 0.5, 1);
        assert!(fit_fringe(&phis, &pops, 1).is_err());
    }

    #[test]
    fn flat_data_is_low_contrast() {
        let phis = scan(12);
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let pops: Vec<f64> = phis.iter().map(|_| 0.5 + noise.sample(&mut rng)).collect();
        assert!(matches!(fit_fringe(&phis, &pops, 1), Err(Error::LowContrast { .. })));
    }

    #[test]
    fn noisy_fits_within_bound() {
        let n_pts = 24;
        let phis = scan(n_pts);
        let (c, sig) = (0.9, 1e-3);
        let clean = synth(&phis, 0.4, c, 0.5, 1);
        let noise = Normal::new(0.0, sig).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        let bound = 3.0 * sig / (c * (n_pts as f64).sqrt()) * 3.0;
        let mut inside = 0;
        for _ in 0..1000 {
            let pops: Vec<f64> = clean.iter().map(|p| p + noise.sample(&mut rng)).collect();
            let f = fit_fringe(&phis, &pops, 1).unwrap();
            if wrap_phase(f.delta_phi - 0.4).abs() <= bound {
                inside += 1;
            }
        }
        assert!(inside >= 990, "{inside} of 1000 within bound");
    }

    proptest! {
        #[test]
        fn exact_on_synthetic(dphi in -3.1f64..3.1, c in 0.05f64..1.0, a in 0.2f64..0.8, n in 1u32..4, pts in 8usize..40) {
            let phis = scan(pts.max(4 * n as usize));
            let pops = synth(&phis, dphi, c, a, n);
            let f = fit_fringe(&phis, &pops, n).unwrap();
            prop_assert!(wrap_phase(f.delta_phi - dphi).abs() < 1e-10);
            prop_assert!((f.contrast - c).abs() < 1e-10);
            prop_assert!((f.offset - a).abs() < 1e-10);
        }

        #[test]
        fn equivariant_under_scan_shift(dphi in -3.0f64..3.0, s in -2.0f64..2.0, n in 1u32..4) {
            let phis = scan(24);
            let pops = synth(&phis, dphi, 0.7, 0.5, n);
            let shifted: Vec<f64> = phis.iter().map(|f| f + s).collect();
            let a = fit_fringe(&phis, &pops, n).unwrap();
            let b = fit_fringe(&shifted, &pops, n).unwrap();
            prop_assert!(wrap_phase(b.delta_phi - (a.delta_phi - n as f64 * s)).abs() < 1e-10);
        }
    }
}
