use crate::state::thomas_fermi;
use crate::units::{Species, HBAR};
use serde::{Deserialize, Serialize};

/// Fourier-limited velocity width of a pulse of duration τ: v_r/(8 ω_r τ).
pub fn velocity_acceptance(tau: f64, species: &Species) -> f64 {
    species.v_r() / (8.0 * species.omega_r() * tau)
}

/// Bessel function of the first kind J_n(x) by Miller's backward recurrence,
/// normalized with J₀ + 2ΣJ₂ₖ = 1.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nu = n as usize;
    let big = (nu as f64).max(x);
    let mut m = (big + 30.0 + (60.0 * big).sqrt()) as usize;
    m += m % 2;
    let (mut jp, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut result = 0.0;
    for k in (1..=m).rev() {
        // J_{k−1} = (2k/x) J_k − J_{k+1}
        let jm = 2.0 * k as f64 / x * j - jp;
        jp = j;
        j = jm;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
        let idx = k - 1;
        if idx == nu {
            result = j;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * j;
        }
    }
    norm += j;
    result / norm
}

/// Raman-Nath populations J_n²(Ωτ) for each requested order.
pub fn raman_nath_oracle(omega: f64, tau: f64, orders: &[i32]) -> Vec<f64> {
    orders.iter().map(|&n| bessel_j(n, omega * tau).powi(2)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldModel {
    pub r_tf: f64,
    pub mu_arm1: f64,
    pub mu_arm2: f64,
    pub delta_phi: f64,
}

/// Uniform-density estimate of the mean-field phase between two arms holding
/// N/2 ± δN/2 atoms over the Thomas-Fermi length 2R, with δN = delta_n·N.
pub fn meanfield_model(
    delta_n: f64,
    n_atoms: f64,
    g1d: f64,
    omega_x: f64,
    species: &Species,
    t_interrogation: f64,
) -> MeanFieldModel {
    let (_, r_tf) = thomas_fermi(species, omega_x, g1d, n_atoms);
    let dn = delta_n * n_atoms;
    let per_atom = g1d / (2.0 * r_tf);
    let mu_arm1 = (0.5 * n_atoms + 0.5 * dn) * per_atom;
    let mu_arm2 = (0.5 * n_atoms - 0.5 * dn) * per_atom;
    MeanFieldModel {
        r_tf,
        mu_arm1,
        mu_arm2,
        delta_phi: meanfield_phase_model(delta_n, n_atoms, g1d, omega_x, species, t_interrogation),
    }
}

/// Δφ = (2T/ħ)(√m g ω_x/(2√3))^{2/3} δN/N^{1/3}, with δN = delta_n·N.
pub fn meanfield_phase_model(
    delta_n: f64,
    n_atoms: f64,
    g1d: f64,
    omega_x: f64,
    species: &Species,
    t_interrogation: f64,
) -> f64 {
    let c = (species.mass.sqrt() * g1d * omega_x / (2.0 * 3f64.sqrt())).powf(2.0 / 3.0);
    2.0 * t_interrogation / HBAR * c * (delta_n * n_atoms) / n_atoms.cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::g1d_from_transverse;
    use std::f64::consts::PI;

    /// Power series Σ (−1)^k (x/2)^{2k+n} / (k!(k+n)!), adequate for small x.
    fn series(n: i32, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..80 {
            term *= -(0.25 * x * x) / (k as f64 * (k + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_against_series_and_libm() {
        for n in 0..8 {
            for i in 0..60 {
                let x = 0.1 * i as f64;
                let b = bessel_j(n, x);
                assert!((b - series(n, x)).abs() < 1e-13, "n={n} x={x}");
                assert!((b - libm::jn(n, x)).abs() < 1e-13, "n={n} x={x}");
            }
        }
        for &x in &[10.0, 25.5, 80.0] {
            for n in [0, 1, 5, 30] {
                assert!((bessel_j(n, x) - libm::jn(n, x)).abs() < 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn bessel_zero_and_symmetry() {
        assert!(bessel_j(0, 2.404825557695773).abs() < 1e-12);
        assert_eq!(bessel_j(-3, 1.7), -bessel_j(3, 1.7));
        assert_eq!(bessel_j(0, 0.0), 1.0);
    }

    #[test]
    fn raman_nath_sum_rule() {
        // Ten orders leave a tail of 6.5e-12 at x = 3, so the bound needs twelve there.
        let ten: Vec<i32> = (-10..=10).collect();
        let twelve: Vec<i32> = (-12..=12).collect();
        for i in 0..=30 {
            let x = 0.1 * i as f64;
            let orders = if x <= 2.7 { &ten } else { &twelve };
            let s: f64 = raman_nath_oracle(x, 1.0, orders).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "x={x}");
        }
        assert_eq!(raman_nath_oracle(5.0, 0.0, &[0, 1]), vec![1.0, 0.0]);
    }

    #[test]
    fn raman_nath_target_split() {
        let s = Species::rb87();
        let p = raman_nath_oracle(50.0 * s.omega_r(), 1e-6, &[0, 1]);
        assert!((p[0] - 0.5).abs() < 0.05 && (p[1] - 0.25).abs() < 0.01, "{p:?}");
    }

    #[test]
    fn acceptance_values() {
        let s = Species::rb87();
        let a = velocity_acceptance(50e-6, &s) / s.v_r();
        assert!((a - 0.105).abs() < 0.0005, "{a}");
        assert!((velocity_acceptance(25e-6, &s) / s.v_r() - 0.21).abs() < 0.001);
        assert!(velocity_acceptance(1e9, &s) < 1e-12 * s.v_r());
    }

    #[test]
    fn meanfield_properties() {
        let s = Species::rb87();
        let g = g1d_from_transverse(1e-2 * s.a_s, 2.0 * PI * 50.0);
        let w = 2.0 * PI;
        let f = |d: f64| meanfield_phase_model(d, 6e4, g, w, &s, 10e-3);
        assert_eq!(f(0.0), 0.0);
        assert_eq!(f(0.14), 2.0 * f(0.07));
        let m = meanfield_model(0.07, 6e4, g, w, &s, 10e-3);
        let via_mu = 2.0 * 10e-3 * (m.mu_arm1 - m.mu_arm2) / HBAR;
        assert!((via_mu / m.delta_phi - 1.0).abs() < 1e-12);
    }
}
