//! Quantum optical binding between two tweezer-trapped nanoparticles.
//!
//! The crate is layered bottom-up:
//!
//! - [`fields`]: SI optics of the tweezer pair, dipole Green tensor, potentials,
//!   scattering amplitudes and mean forces.
//! - [`linearize`]: linearized coupling and diffusion rates of the axial motion.
//! - [`gaussian`]: two-mode Gaussian states, moment propagation, entanglement
//!   witness and a truncated-Fock reference integrator.
//! - [`modes`]: non-Hermitian normal modes, exceptional points and regime maps.
//! - [`stochastic`]: Langevin ensembles, homodyne conditioning, feed-forward
//!   unravelling and the modulated-phase squeezing drive.

pub mod constants;
pub mod error;
pub mod fields;
pub mod gaussian;
pub mod linearize;
pub mod modes;
pub mod quadrature;
pub mod stochastic;

pub use constants::Constants;
pub use error::{Error, Result};
pub use fields::{Particle, ScatterDirection, TweezerPair};
pub use gaussian::{AdaptiveOptions, DriftDiffusion, GaussianState};
pub use linearize::{CouplingSet, SystemParams, TrapFrequencies};
pub use modes::{ModeSpectrum, PtPhase, Regime, RegimeLabel};
pub use stochastic::locc::{FeedForwardPlan, SdeScheme};
pub use stochastic::{EnsembleMoments, MeasurementConfig, NoiseModel, TrajectoryRecord};
