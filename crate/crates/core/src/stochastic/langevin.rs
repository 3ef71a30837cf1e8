//! Ensembles of the rotating-frame Langevin equations with correlated recoil noise.

use nalgebra::{Matrix2, Vector2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{trajectory_rng, NoiseModel};
use super::record::{EnsembleMoments, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linearize::{CouplingSet, TrapFrequencies};
use crate::modes::dynamical_matrix;

/// Integration and output settings of a Langevin ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinOptions {
    pub t_final: f64,
    /// Number of equally spaced samples after t = 0.
    pub samples: usize,
    /// Occupation |a_j|² beyond which a trajectory is abandoned.
    pub abort_quanta: f64,
}

impl Default for LangevinOptions {
    fn default() -> Self {
        LangevinOptions { t_final: 1.0, samples: 10, abort_quanta: 1e6 }
    }
}

/// Amplitudes as quadratures (X₁, P₁, X₂, P₂) with a = (X + iP)/√2.
pub fn amplitudes_to_quadratures(a: &Vector2<Complex64>) -> Vector4<f64> {
    let s = std::f64::consts::SQRT_2;
    Vector4::new(s * a[0].re, s * a[0].im, s * a[1].re, s * a[1].im)
}

fn sample_initial(st: &GaussianState, rng: &mut impl rand::Rng) -> Vector4<f64> {
    let chol = st.cov.cholesky().map(|c| c.l()).unwrap_or_else(|| {
        let eig = nalgebra::SymmetricEigen::new(st.cov);
        eig.eigenvectors * nalgebra::Matrix4::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()))
    });
    let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    st.mean + chol * z
}

/// One Euler–Maruyama trajectory of d a = −iH_NH a dt + dξ, started from a
/// sample of the symmetrically ordered Wigner distribution of `initial`.
pub fn langevin_trajectory(
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    initial: &GaussianState,
    nm: &NoiseModel,
    opts: &LangevinOptions,
    index: u64,
    config_hash: &str,
) -> TrajectoryRecord {
    let mut rng = trajectory_rng(nm.seed, index);
    let drift: Matrix2<Complex64> = dynamical_matrix(cs, trap) * Complex64::new(0.0, -1.0);
    let x0 = sample_initial(initial, &mut rng);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = Vector2::new(Complex64::new(x0[0], x0[1]) * s, Complex64::new(x0[2], x0[3]) * s);
    let steps_per_sample = ((opts.t_final / opts.samples.max(1) as f64) / nm.dt).ceil().max(1.0) as usize;
    let dt = opts.t_final / (opts.samples.max(1) * steps_per_sample) as f64;
    let model = nm.with_dt(dt);
    let mut rec = TrajectoryRecord {
        index,
        seed: nm.seed,
        config_hash: config_hash.to_string(),
        times: vec![0.0],
        means: vec![amplitudes_to_quadratures(&a)],
        covariances: Vec::new(),
        signals: vec![Vector2::new(f64::NAN, f64::NAN)],
        aborted_at: None,
    };
    let mut t = 0.0;
    'outer: for _ in 0..opts.samples {
        for _ in 0..steps_per_sample {
            a += drift * a * Complex64::from(dt) + model.increment(&mut rng);
            t += dt;
            if a.iter().any(|x| x.norm_sqr() > opts.abort_quanta || !x.is_finite()) {
                rec.aborted_at = Some(t);
                break 'outer;
            }
        }
        rec.times.push(t);
        rec.means.push(amplitudes_to_quadratures(&a));
        rec.signals.push(Vector2::new(f64::NAN, f64::NAN));
    }
    rec
}

/// Runs `n_traj` independent trajectories in parallel, ordered by index.
pub fn langevin_trajectories(
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    initial: &GaussianState,
    n_traj: usize,
    nm: &NoiseModel,
    opts: &LangevinOptions,
    config_hash: &str,
) -> Vec<TrajectoryRecord> {
    (0..n_traj as u64)
        .into_par_iter()
        .map(|i| langevin_trajectory(cs, trap, initial, nm, opts, i, config_hash))
        .collect()
}

/// Ensemble moments at each sample time; aborted trajectories are an error.
pub fn ensemble_moments(records: &[TrajectoryRecord]) -> Result<Vec<EnsembleMoments>> {
    if let Some(r) = records.iter().find(|r| r.aborted_at.is_some()) {
        return Err(Error::Domain(format!(
            "trajectory {} left the linear regime at t = {:e}",
            r.index,
            r.aborted_at.unwrap_or(f64::NAN)
        )));
    }
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    Ok((0..first.times.len())
        .map(|k| {
            let pts: Vec<Vector4<f64>> = records.iter().map(|r| r.means[k]).collect();
            EnsembleMoments::from_samples(&pts, None)
        })
        .collect())
}

/// Quadrature covariance rate of the sampled noise, E[dy dyᵀ]/dt.
pub fn noise_quadrature_covariance(nm: &NoiseModel) -> nalgebra::Matrix4<f64> {
    let c = nm.correlation;
    let mut out = nalgebra::Matrix4::zeros();
    for j in 0..2 {
        for k in 0..2 {
            let z = c[(j, k)];
            out[(2 * j, 2 * k)] = z.re;
            out[(2 * j + 1, 2 * k + 1)] = z.re;
        }
    }
    out
}
