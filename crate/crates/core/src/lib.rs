//! Numerical laboratory for damped polaritons: a privileged dielectric
//! oscillator coupled to a finite reservoir and to the electromagnetic
//! field, with position-dependent parameters.
//!
//! The crate constructs the frequency-dependent wave operator, solves and
//! tracks its eigenvalue branches, gathers the normal-mode table, evolves
//! Gaussian field states by mode resummation, takes the reservoir continuum
//! limit (branch cuts, decay rates, long-time fluctuations), and ships a
//! numerical identity suite that certifies the model's sum rules.
//!
//! Internal units: c = ε₀ = ħ = 1.

pub mod continuum;
pub mod evolution;
pub mod green;
pub mod model;
pub mod modes;
pub mod quad;
pub mod spectral;
pub mod verify;

pub use model::{
    build_model, omega_tilde_sq, ContinuumReservoir, DiscreteReservoir, Geometry, MediumProfile,
    Model, ModelConfig, ModelError, Reservoir, UnitSystem,
};
pub use modes::{BranchTable, ModeEntry, ModeTable, ModesError, OperatorMatrix};
pub use spectral::{BranchSelector, SpectralContext, SpectralError};

/// Speed of light in internal units.
pub const C_LIGHT: f64 = 1.0;
/// Vacuum permittivity in internal units.
pub const EPS_0: f64 = 1.0;
/// Vacuum permeability, fixed by c and ε₀.
pub const MU_0: f64 = 1.0 / (EPS_0 * C_LIGHT * C_LIGHT);
/// Reduced Planck constant in internal units.
pub const HBAR: f64 = 1.0;
