//! Measurement and reference models.

pub mod fringe;
pub mod models;
pub mod ports;

pub use fringe::{dominant_harmonic, fit_fringe, FringeFit};
pub use models::{
    bessel_j, meanfield_model, meanfield_phase_model, raman_nath_oracle, velocity_acceptance, MeanFieldModel,
};
pub use ports::{detect_ports, port_populations, port_populations_density, Port, PortPopulations};
