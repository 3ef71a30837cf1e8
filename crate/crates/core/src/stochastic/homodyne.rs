//! Conditional Gaussian dynamics under continuous homodyne detection of the
//! scattered light, in Itô form and as an explicit Kraus decomposition.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::{trajectory_rng, wiener};
use super::record::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::gaussian::{symplectic_form, DriftDiffusion, GaussianState};
use crate::linearize::{CouplingSet, TrapFrequencies};

/// Detection settings shared by homodyne conditioning and feed-forward unravelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Position-measurement rate Γ of the feed-forward unravelling (1/s);
    /// `None` selects the default inside the feasible interval.
    pub gamma: Option<f64>,
    pub eta_det: f64,
    /// Local-oscillator phase; 0 measures position, ±π/2 the conjugate quadrature.
    pub lo_phase: f64,
    /// Detector j registers Σ_k overlap[j,k] z_k.
    pub overlap: Matrix2<f64>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            gamma: None,
            eta_det: 0.0,
            lo_phase: 0.0,
            overlap: Matrix2::identity(),
        }
    }
}

impl MeasurementConfig {
    pub fn homodyne(eta_det: f64, lo_phase: f64) -> Self {
        MeasurementConfig { eta_det, lo_phase, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_det) {
            return Err(Error::param("eta_det", "must lie in [0, 1]"));
        }
        if !self.lo_phase.is_finite() {
            return Err(Error::param("lo_phase", "must be finite"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::param("gamma", "must be finite and positive"));
            }
        }
        Ok(())
    }

    /// Measurement strength κ_j = √(2 D_jj η) of detector j.
    fn kappa(&self, cs: &CouplingSet, j: usize) -> f64 {
        (2.0 * cs.diffusion[(j, j)].re * self.eta_det).sqrt()
    }
}

/// The detected share of the recoil noise must not exceed the total: 2D − Σ_j κ_j² o_j o_jᵀ ⪰ 0.
fn check_detectable(mc: &MeasurementConfig, cs: &CouplingSet) -> Result<()> {
    let mut residual = cs.diffusion * nalgebra::Complex::from(2.0);
    for j in 0..2 {
        let k2 = mc.kappa(cs, j).powi(2);
        let o = mc.overlap.row(j).transpose();
        residual -= (o * o.transpose() * k2).map(nalgebra::Complex::from);
    }
    let tr = residual.trace().re;
    let det = (residual[(0, 0)] * residual[(1, 1)] - residual[(0, 1)] * residual[(1, 0)]).re;
    let min = 0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt();
    if min < -1e-12 * (cs.d11() + cs.d22()) {
        return Err(Error::NotPositive { what: "undetected recoil diffusion 2D − Σκ²oo^T", min_eigenvalue: min });
    }
    Ok(())
}

/// Gain vectors K_j of both detectors for the current covariance.
fn gains(cov: &Matrix4<f64>, mc: &MeasurementConfig, cs: &CouplingSet) -> [Vector4<f64>; 2] {
    let (s, c) = mc.lo_phase.sin_cos();
    let omega = symplectic_form();
    [0, 1].map(|j| {
        let kappa = mc.kappa(cs, j);
        let ez = Vector4::new(mc.overlap[(j, 0)], 0.0, mc.overlap[(j, 1)], 0.0);
        cov * ez * (2.0 * kappa * c) - omega * ez * (kappa * s)
    })
}

/// One Euler–Maruyama step of the conditional moments driven by Wiener
/// increments `dw`; returns the new state and the signals
/// dy_j = ⟨z_j⟩cos φ dt + dW_j/√(8D_jjη) (NaN for an idle detector).
pub fn homodyne_conditional_step(
    st: &GaussianState,
    mc: &MeasurementConfig,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    dt: f64,
    dw: &Vector2<f64>,
) -> Result<(GaussianState, Vector2<f64>)> {
    mc.validate()?;
    check_detectable(mc, cs)?;
    let dd = DriftDiffusion::lab_frame(cs, trap);
    let k = gains(&st.cov, mc, cs);
    let a = dd.drift;
    let mut cov = st.cov + (a * st.cov + st.cov * a.transpose() + dd.diffusion) * dt;
    let mut mean = st.mean + a * st.mean * dt;
    let mut dy = Vector2::new(f64::NAN, f64::NAN);
    let c = mc.lo_phase.cos();
    for j in 0..2 {
        cov -= k[j] * k[j].transpose() * dt;
        mean += k[j] * dw[j];
        let kappa = mc.kappa(cs, j);
        if kappa > 0.0 {
            let zj = mc.overlap[(j, 0)] * st.mean[0] + mc.overlap[(j, 1)] * st.mean[2];
            dy[j] = zj * c * dt + dw[j] / (2.0 * kappa);
        }
    }
    Ok((GaussianState { mean, cov: (cov + cov.transpose()) * 0.5 }, dy))
}

fn kraus_preconditions(mc: &MeasurementConfig, cs: &CouplingSet) -> Result<()> {
    mc.validate()?;
    if cs.d12().norm() > 1e-14 * (cs.d11() + cs.d22()) {
        return Err(Error::Domain("Kraus decomposition requires uncorrelated recoil (D12 = 0)".into()));
    }
    if mc.overlap != Matrix2::identity() {
        return Err(Error::Domain("Kraus decomposition requires an identity mode overlap".into()));
    }
    Ok(())
}

fn shear(st: &mut GaussianState, s: &Matrix4<f64>, shift: &Vector4<f64>) {
    st.mean = s * st.mean + shift;
    st.cov = s * st.cov * s.transpose();
}

/// Deterministic and measurement parts of the Kraus map for a recorded `dy`.
fn kraus_conditional(
    st: &GaussianState,
    dy: &Vector2<f64>,
    mc: &MeasurementConfig,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    dt: f64,
) -> GaussianState {
    let dd = DriftDiffusion::lab_frame(cs, trap);
    let unitary = (dd.drift * dt).exp();
    let mut out = *st;
    shear(&mut out, &unitary, &Vector4::zeros());
    let (s, c) = mc.lo_phase.sin_cos();
    for j in 0..2 {
        let kappa = mc.kappa(cs, j);
        if kappa == 0.0 {
            continue;
        }
        let (z, p) = (2 * j, 2 * j + 1);
        // State-dependent Hermitian part: p → p + 2κ² sinφ (dy − cosφ z dt).
        let mut m = Matrix4::identity();
        m[(p, z)] = -2.0 * kappa * kappa * s * c * dt;
        let mut shift = Vector4::zeros();
        shift[p] = 2.0 * kappa * kappa * s * dy[j];
        shear(&mut out, &m, &shift);
        if c.abs() > 0.0 {
            // Gaussian localization around z₀ = dy/(cosφ dt) with variance R.
            let r = 1.0 / (4.0 * kappa * kappa * c * c * dt);
            let z0 = dy[j] / (c * dt);
            let col = out.cov.column(z).into_owned();
            let denom = out.cov[(z, z)] + r;
            out.mean += col * ((z0 - out.mean[z]) / denom);
            out.cov -= col * col.transpose() / denom;
            out.cov[(p, p)] += kappa * kappa * c * c * dt;
        }
    }
    out.cov = (out.cov + out.cov.transpose()) * 0.5;
    out
}

/// Kraus step W(u): unitary evolution, detection with recorded signal `dy`, and
/// the recoil displacement p_j → p_j − u_j√(2D_jj(1−η)dt) of the unobserved light.
pub fn kraus_step(
    st: &GaussianState,
    dy: &Vector2<f64>,
    u: &Vector2<f64>,
    mc: &MeasurementConfig,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    dt: f64,
) -> Result<GaussianState> {
    kraus_preconditions(mc, cs)?;
    let mut out = kraus_conditional(st, dy, mc, cs, trap, dt);
    for j in 0..2 {
        out.mean[2 * j + 1] -= u[j] * (2.0 * cs.diffusion[(j, j)].re * (1.0 - mc.eta_det) * dt).sqrt();
    }
    Ok(out)
}

/// Kraus step averaged over the Gaussian recoil variable u.
pub fn kraus_step_averaged(
    st: &GaussianState,
    dy: &Vector2<f64>,
    mc: &MeasurementConfig,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    dt: f64,
) -> Result<GaussianState> {
    kraus_preconditions(mc, cs)?;
    let mut out = kraus_conditional(st, dy, mc, cs, trap, dt);
    for j in 0..2 {
        out.cov[(2 * j + 1, 2 * j + 1)] += 2.0 * cs.diffusion[(j, j)].re * (1.0 - mc.eta_det) * dt;
    }
    Ok(out)
}

/// Signals integrated over each sampling interval, NaN for idle detectors.
fn accumulate(acc: &mut Vector2<f64>, dy: &Vector2<f64>) {
    for j in 0..2 {
        acc[j] = if dy[j].is_nan() { f64::NAN } else { acc[j] + dy[j] };
    }
}

/// A conditional homodyne trajectory sampled `samples` times over `t_final`.
#[allow(clippy::too_many_arguments)]
pub fn homodyne_trajectory(
    initial: &GaussianState,
    mc: &MeasurementConfig,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    t_final: f64,
    dt: f64,
    samples: usize,
    seed: u64,
    index: u64,
    config_hash: &str,
) -> Result<TrajectoryRecord> {
    let mut rng = trajectory_rng(seed, index);
    let per = ((t_final / samples.max(1) as f64) / dt).ceil().max(1.0) as usize;
    let h = t_final / (samples.max(1) * per) as f64;
    let mut st = *initial;
    let mut rec = TrajectoryRecord {
        index,
        seed,
        config_hash: config_hash.to_string(),
        times: vec![0.0],
        means: vec![st.mean],
        covariances: vec![st.cov],
        signals: vec![Vector2::new(f64::NAN, f64::NAN)],
        aborted_at: None,
    };
    let mut t = 0.0;
    for _ in 0..samples {
        let mut y = Vector2::zeros();
        for _ in 0..per {
            let dw = Vector2::new(wiener(&mut rng, h), wiener(&mut rng, h));
            let (next, dy) = homodyne_conditional_step(&st, mc, cs, trap, h, &dw)?;
            accumulate(&mut y, &dy);
            st = next;
            t += h;
        }
        rec.times.push(t);
        rec.means.push(st.mean);
        rec.covariances.push(st.cov);
        rec.signals.push(y);
    }
    Ok(rec)
}

/// Quadratic variation rate of the recoil displacements along a u-unravelled
/// Kraus trajectory, per particle, divided by two (the momentum diffusion constant).
pub fn kraus_recoil_diffusion(
    initial: &GaussianState,
    mc: &MeasurementConfig,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    steps: usize,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<Vector2<f64>> {
    let mut st = *initial;
    let mut qv = Vector2::zeros();
    for _ in 0..steps {
        let dw = Vector2::new(wiener(rng, dt), wiener(rng, dt));
        let (_, dy) = homodyne_conditional_step(&st, mc, cs, trap, dt, &dw)?;
        let dy = dy.map(|x| if x.is_nan() { 0.0 } else { x });
        let u = Vector2::new(wiener(rng, 1.0), wiener(rng, 1.0));
        let conditioned = kraus_step_averaged(&st, &dy, mc, cs, trap, dt)?;
        let next = kraus_step(&st, &dy, &u, mc, cs, trap, dt)?;
        for j in 0..2 {
            let d = next.mean[2 * j + 1] - conditioned.mean[2 * j + 1];
            qv[j] += d * d;
        }
        st = next;
    }
    Ok(qv / (2.0 * steps as f64 * dt))
}
