//! Trajectory-level simulation: Langevin ensembles, conditional homodyne
//! dynamics, feed-forward unravelling and the modulated-phase squeezing drive.

pub mod homodyne;
pub mod langevin;
pub mod locc;
pub mod noise;
pub mod record;
pub mod squeeze;

pub use homodyne::MeasurementConfig;
pub use noise::{trajectory_rng, NoiseModel};
pub use record::{EnsembleMoments, TrajectoryRecord};
