//! One-dimensional light-pulse atom interferometry simulator.
//!
//! Wavefunctions are propagated through sequences of Bragg, double-Bragg,
//! Bloch and Raman-Nath pulses with a split-operator spectral method.

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod error;
pub mod grid;
pub mod ode;
pub mod potentials;
pub mod propagator;
pub mod sequences;
pub mod state;
pub mod units;

pub use error::{Error, Result};
pub use grid::{check_resolution, make_grid, Grid, GridSpec, ResolutionReport};
pub use potentials::{
    apply_mirror_k_correction, bloch_lattice_state, eval_potential, BlochTerm, EnvelopeShape, GravityTerm,
    HarmonicTerm, LatticeTerm, PulseEnvelope, Term,
};
pub use propagator::{propagate, split_step, DensityRecorder, MeanField, StepScheme};
pub use state::{gaussian_packet, ground_state_gpe, MomentumSpectrum, WaveFunction};
pub use units::Species;
