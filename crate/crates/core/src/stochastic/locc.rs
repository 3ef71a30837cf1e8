//! Feed-forward unravelling of the binding master equation: each particle's
//! position is measured locally and the records drive local displacements of
//! the other particle. No coherent interaction term appears.

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::homodyne::MeasurementConfig;
use super::noise::{trajectory_rng, wiener};
use super::record::{EnsembleMoments, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::gaussian::{DriftDiffusion, GaussianState};
use crate::linearize::{CouplingSet, TrapFrequencies};

/// Measurement rate and residual common-bath diffusion of a feasible unravelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardPlan {
    pub gamma: f64,
    /// Feasible measurement rates [Γ₋, Γ₊] before the positivity check.
    pub interval: (f64, f64),
    /// D^ff with diagonals D_jj − Γ − (g_r ± g_a)²/4Γ and off-diagonal Re D₁₂.
    pub diffusion: Matrix2<f64>,
}

fn shifts(cs: &CouplingSet) -> [f64; 2] {
    [cs.freq_shift_1(), cs.freq_shift_2()]
}

/// Γ-interval on which both feed-forward diagonal rates are non-negative,
/// bounded by the roots of Γ² − D_jjΓ + (g_r ± g_a)²/4.
pub fn feasible_gamma_interval(cs: &CouplingSet) -> Result<(f64, f64)> {
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for (j, g) in shifts(cs).iter().enumerate() {
        let d = cs.diffusion[(j, j)].re;
        let disc = d * d - g * g;
        if disc < 0.0 {
            return Err(Error::Infeasible {
                reason: format!("recoil rate D{0}{0} is below |g_r ± g_a| for particle {0}", j + 1),
                lower: f64::NAN,
                upper: f64::NAN,
            });
        }
        let r = disc.sqrt();
        lo = lo.max((d - r) / 2.0);
        hi = hi.min((d + r) / 2.0);
    }
    if lo > hi || hi <= 0.0 {
        return Err(Error::Infeasible {
            reason: "per-particle Γ intervals do not intersect".into(),
            lower: lo,
            upper: hi,
        });
    }
    Ok((lo.max(f64::MIN_POSITIVE), hi))
}

pub fn feedforward_diffusion(cs: &CouplingSet, gamma: f64) -> Matrix2<f64> {
    let g = shifts(cs);
    let diag = |j: usize| cs.diffusion[(j, j)].re - gamma - g[j] * g[j] / (4.0 * gamma);
    let off = cs.d12().re;
    Matrix2::new(diag(0), off, off, diag(1))
}

fn psd_margin(m: &Matrix2<f64>) -> f64 {
    let tr = m.trace();
    let det = m.determinant();
    0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
}

/// Chooses Γ: the configured value if feasible, else D₁₁/2 projected into the
/// feasible interval, else the rate maximizing det D^ff.
pub fn plan_feedforward(cs: &CouplingSet, mc: &MeasurementConfig) -> Result<FeedForwardPlan> {
    mc.validate()?;
    let interval = feasible_gamma_interval(cs)?;
    let tol = 1e-12 * (cs.d11() + cs.d22());
    let ok = |g: f64| psd_margin(&feedforward_diffusion(cs, g)) >= -tol;
    let gamma = match mc.gamma {
        Some(g) => {
            if g < interval.0 || g > interval.1 || !ok(g) {
                return Err(Error::Infeasible {
                    reason: format!("Γ = {g:e} leaves the feed-forward diffusion matrix indefinite"),
                    lower: interval.0,
                    upper: interval.1,
                });
            }
            g
        }
        None => {
            let g0 = (cs.d11() / 2.0).clamp(interval.0, interval.1);
            if ok(g0) {
                g0
            } else {
                let det = |g: f64| feedforward_diffusion(cs, g).determinant();
                let (mut a, mut b) = interval;
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..200 {
                    let x1 = b - phi * (b - a);
                    let x2 = a + phi * (b - a);
                    if det(x1) < det(x2) {
                        a = x1;
                    } else {
                        b = x2;
                    }
                }
                let g = 0.5 * (a + b);
                if !ok(g) {
                    return Err(Error::Infeasible {
                        reason: "no Γ makes the feed-forward diffusion matrix positive".into(),
                        lower: interval.0,
                        upper: interval.1,
                    });
                }
                g
            }
        }
    };
    Ok(FeedForwardPlan { gamma, interval, diffusion: feedforward_diffusion(cs, gamma) })
}

/// Itô–Euler or Stratonovich–Heun discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdeScheme {
    Ito,
    Stratonovich,
}

/// Local generator, measurement gains and feedback of one unravelling.
struct Unravelling {
    local: DriftDiffusion,
    gamma: f64,
    /// Feedback displacement per unit signal dy_j.
    feedback: [Vector4<f64>; 2],
}

impl Unravelling {
    fn new(plan: &FeedForwardPlan, cs: &CouplingSet, trap: &TrapFrequencies) -> Self {
        let (w1, w2) = (trap.particle_1(), trap.particle_2());
        let mut h = Matrix4::from_diagonal(&Vector4::new(w1, w1, w2, w2));
        h[(0, 0)] += 2.0 * cs.freq_shift_1();
        h[(2, 2)] += 2.0 * cs.freq_shift_2();
        let mut z1 = Vector4::zeros();
        z1[0] = Complex64::from(1.0);
        let mut z2 = Vector4::zeros();
        z2[2] = Complex64::from(1.0);
        let rates = DMatrix::from_fn(2, 2, |j, k| {
            let m = plan.diffusion[(j, k)] + if j == k { plan.gamma } else { 0.0 };
            Complex64::from(2.0 * m)
        });
        let local = DriftDiffusion::from_lindblad(&h, &[z1, z2], &rates).expect("dimensions agree");
        let mut b1 = Vector4::zeros();
        b1[3] = 2.0 * cs.freq_shift_2();
        let mut b2 = Vector4::zeros();
        b2[1] = 2.0 * cs.freq_shift_1();
        Unravelling { local, gamma: plan.gamma, feedback: [b1, b2] }
    }

    fn gains(&self, cov: &Matrix4<f64>) -> [Vector4<f64>; 2] {
        let s = (8.0 * self.gamma).sqrt();
        [cov.column(0) * s, cov.column(2) * s]
    }

    fn cov_rate(&self, cov: &Matrix4<f64>) -> Matrix4<f64> {
        let a = self.local.drift;
        let k = self.gains(cov);
        a * cov + cov * a.transpose() + self.local.diffusion - k[0] * k[0].transpose() - k[1] * k[1].transpose()
    }

    /// Mean drift including the feedback response to the deterministic part of dy.
    fn mean_rate(&self, m: &Vector4<f64>) -> Vector4<f64> {
        self.local.drift * m + self.feedback[0] * m[0] + self.feedback[1] * m[2]
    }

    /// Noise loading of dW_j on the mean: measurement gain plus feedback.
    fn noise(&self, cov: &Matrix4<f64>) -> [Vector4<f64>; 2] {
        let k = self.gains(cov);
        let s = 1.0 / (8.0 * self.gamma).sqrt();
        [k[0] + self.feedback[0] * s, k[1] + self.feedback[1] * s]
    }

    fn step_cov(&self, cov: &Matrix4<f64>, dt: f64, scheme: SdeScheme) -> Matrix4<f64> {
        let out = match scheme {
            SdeScheme::Ito => cov + self.cov_rate(cov) * dt,
            SdeScheme::Stratonovich => {
                let k1 = self.cov_rate(cov);
                let k2 = self.cov_rate(&(cov + k1 * dt));
                cov + (k1 + k2) * (0.5 * dt)
            }
        };
        (out + out.transpose()) * 0.5
    }

    /// Mean update given covariances at both ends of the step.
    fn step_mean(
        &self,
        m: &Vector4<f64>,
        cov0: &Matrix4<f64>,
        cov1: &Matrix4<f64>,
        dt: f64,
        dw: &Vector2<f64>,
        scheme: SdeScheme,
    ) -> (Vector4<f64>, Vector2<f64>) {
        let s = 1.0 / (8.0 * self.gamma).sqrt();
        let n0 = self.noise(cov0);
        let kick0 = n0[0] * dw[0] + n0[1] * dw[1];
        match scheme {
            SdeScheme::Ito => {
                let dy = Vector2::new(m[0] * dt + dw[0] * s, m[2] * dt + dw[1] * s);
                (m + self.mean_rate(m) * dt + kick0, dy)
            }
            SdeScheme::Stratonovich => {
                let f0 = self.mean_rate(m);
                let pred = m + f0 * dt + kick0;
                let n1 = self.noise(cov1);
                let kick1 = n1[0] * dw[0] + n1[1] * dw[1];
                let next = m + (f0 + self.mean_rate(&pred)) * (0.5 * dt) + (kick0 + kick1) * 0.5;
                let zbar = (m + pred) * 0.5;
                let dy = Vector2::new(zbar[0] * dt + dw[0] * s, zbar[2] * dt + dw[1] * s);
                (next, dy)
            }
        }
    }
}

/// One step of the feed-forward conditional dynamics; returns the state and
/// the two position records dy_j = ⟨z_j⟩dt + dW_j/√(8Γ).
pub fn locc_feedforward_step(
    st: &GaussianState,
    plan: &FeedForwardPlan,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    dt: f64,
    dw: &Vector2<f64>,
    scheme: SdeScheme,
) -> (GaussianState, Vector2<f64>) {
    let u = Unravelling::new(plan, cs, trap);
    let cov = u.step_cov(&st.cov, dt, scheme);
    let (mean, dy) = u.step_mean(&st.mean, &st.cov, &cov, dt, dw, scheme);
    (GaussianState { mean, cov }, dy)
}

/// Time grid shared by all trajectories: `samples` intervals of `per` steps.
fn grid(t_final: f64, dt: f64, samples: usize) -> (usize, f64) {
    let per = ((t_final / samples.max(1) as f64) / dt).ceil().max(1.0) as usize;
    (per, t_final / (samples.max(1) * per) as f64)
}

fn covariance_path(u: &Unravelling, cov0: &Matrix4<f64>, steps: usize, h: f64, scheme: SdeScheme) -> Vec<Matrix4<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(*cov0);
    for k in 0..steps {
        out.push(u.step_cov(&out[k], h, scheme));
    }
    out
}

/// Feed-forward settings of an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoccOptions {
    pub t_final: f64,
    pub dt: f64,
    pub samples: usize,
    pub scheme: SdeScheme,
}

/// A single feed-forward trajectory with its conditional moments and records.
pub fn locc_trajectory(
    initial: &GaussianState,
    plan: &FeedForwardPlan,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    opts: &LoccOptions,
    seed: u64,
    index: u64,
    config_hash: &str,
) -> TrajectoryRecord {
    let u = Unravelling::new(plan, cs, trap);
    let (per, h) = grid(opts.t_final, opts.dt, opts.samples);
    let covs = covariance_path(&u, &initial.cov, per * opts.samples, h, opts.scheme);
    let mut rng = trajectory_rng(seed, index);
    let mut m = initial.mean;
    let mut rec = TrajectoryRecord {
        index,
        seed,
        config_hash: config_hash.to_string(),
        times: vec![0.0],
        means: vec![m],
        covariances: vec![initial.cov],
        signals: vec![Vector2::new(f64::NAN, f64::NAN)],
        aborted_at: None,
    };
    for s in 0..opts.samples {
        let mut y = Vector2::zeros();
        for k in s * per..(s + 1) * per {
            let dw = Vector2::new(wiener(&mut rng, h), wiener(&mut rng, h));
            let (next, dy) = u.step_mean(&m, &covs[k], &covs[k + 1], h, &dw, opts.scheme);
            m = next;
            y += dy;
        }
        let k = (s + 1) * per;
        rec.times.push(k as f64 * h);
        rec.means.push(m);
        rec.covariances.push(covs[k]);
        rec.signals.push(y);
    }
    rec
}

/// Ensemble moments E[m] and E[m mᵀ] + Σ of `n_traj` feed-forward trajectories
/// at each sample time, to be compared with the unconditional dynamics.
pub fn locc_ensemble(
    initial: &GaussianState,
    plan: &FeedForwardPlan,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    opts: &LoccOptions,
    n_traj: usize,
    seed: u64,
) -> Vec<EnsembleMoments> {
    let u = Unravelling::new(plan, cs, trap);
    let (per, h) = grid(opts.t_final, opts.dt, opts.samples);
    let covs = covariance_path(&u, &initial.cov, per * opts.samples, h, opts.scheme);
    let paths: Vec<Vec<Vector4<f64>>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut m = initial.mean;
            let mut out = Vec::with_capacity(opts.samples + 1);
            out.push(m);
            for s in 0..opts.samples {
                for k in s * per..(s + 1) * per {
                    let dw = Vector2::new(wiener(&mut rng, h), wiener(&mut rng, h));
                    m = u.step_mean(&m, &covs[k], &covs[k + 1], h, &dw, opts.scheme).0;
                }
                out.push(m);
            }
            out
        })
        .collect();
    (0..=opts.samples)
        .map(|s| {
            let pts: Vec<Vector4<f64>> = paths.iter().map(|p| p[s]).collect();
            EnsembleMoments::from_samples(&pts, Some(&covs[s * per]))
        })
        .collect()
}
