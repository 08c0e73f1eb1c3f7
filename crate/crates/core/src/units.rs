//! Physical constants and atomic species.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Bohr radius, used for scattering-length unit strings.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS_UNIT;
pub const RB87_WAVELENGTH: f64 = 780e-9;
pub const RB87_SCATTERING_LENGTH: f64 = 5.272e-9;

/// An atomic species driven by light of a given wavelength.
///
/// Only the mass, wavelength and scattering length are stored; the recoil
/// quantities are derived on demand so they can never drift out of sync.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    pub mass: f64,
    pub lambda_light: f64,
    pub a_s: f64,
}

impl Species {
    pub fn rb87() -> Self {
        Species {
            name: "Rb87".into(),
            mass: RB87_MASS,
            lambda_light: RB87_WAVELENGTH,
            a_s: RB87_SCATTERING_LENGTH,
        }
    }

    pub fn k(&self) -> f64 {
        2.0 * PI / self.lambda_light
    }

    pub fn hbar_k(&self) -> f64 {
        HBAR * self.k()
    }

    pub fn omega_r(&self) -> f64 {
        let k = self.k();
        HBAR * k * k / (2.0 * self.mass)
    }

    pub fn v_r(&self) -> f64 {
        HBAR * self.k() / self.mass
    }
}

impl Default for Species {
    fn default() -> Self {
        Species::rb87()
    }
}

/// Effective 1D coupling g = 2ħ a ω⊥ for a tight transverse harmonic guide.
pub fn g1d_from_transverse(a_eff: f64, omega_perp: f64) -> f64 {
    2.0 * HBAR * a_eff * omega_perp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recoil_relations_hold() {
        let s = Species::rb87();
        let k = 2.0 * PI / 780e-9;
        assert!((s.omega_r() / (HBAR * k * k / (2.0 * s.mass)) - 1.0).abs() < 1e-12);
        assert!((s.v_r() / (HBAR * k / s.mass) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rb87_defaults() {
        let s = Species::rb87();
        let f_r = s.omega_r() / (2.0 * PI);
        assert!((f_r - 3.8e3).abs() < 0.05e3, "{f_r}");
        assert!((s.v_r() - 5.9e-3).abs() < 0.05e-3);
        assert_eq!(s.a_s, 5.272e-9);
    }
}
