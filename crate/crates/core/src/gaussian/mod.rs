//! Two-mode Gaussian states and their propagation under the linearized
//! binding master equation, with a truncated-Fock oracle.

pub mod dynamics;
pub mod fock;
pub mod state;

pub use dynamics::{build_drift_diffusion, evolve_gaussian, evolve_time_dependent, to_rotating_frame, AdaptiveOptions, DriftDiffusion};
pub use fock::{fock_oracle_evolve, FockState};
pub use state::{symplectic_form, GaussianState};
