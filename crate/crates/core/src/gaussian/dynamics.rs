//! Moment equations of quadratic Lindblad dynamics.
//!
//! With H = ½ yᵀ H y and jump operators L_k = c_kᵀ y at rate matrix M, the
//! first and second moments obey dm/dt = A m and dΣ/dt = AΣ + ΣAᵀ + D with
//! C = Σ_kl M_kl c_k c_l†, A = Ω(H − Im C) and D = Ω Re C Ωᵀ.

use nalgebra::{DMatrix, Matrix2, Matrix4, SMatrix, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use super::state::{symplectic_form, uncertainty_margin, GaussianState, UNCERTAINTY_TOL};
use crate::error::{Error, Result};
use crate::linearize::{CouplingSet, TrapFrequencies};

/// Drift A and diffusion D of the moment equations (units 1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusion {
    pub drift: Matrix4<f64>,
    pub diffusion: Matrix4<f64>,
}

/// Unit vector of quadrature `a`.
fn e(a: usize) -> Vector4<Complex64> {
    let mut v = Vector4::zeros();
    v[a] = Complex64::new(1.0, 0.0);
    v
}

/// Coefficients of the annihilation operator a_j = (z_j + i p_j)/√2.
fn annihilation(j: usize) -> Vector4<Complex64> {
    (e(2 * j) + e(2 * j + 1) * Complex64::i()) * Complex64::from(FRAC_1_SQRT_2)
}

fn creation(j: usize) -> Vector4<Complex64> {
    annihilation(j).conjugate()
}

impl DriftDiffusion {
    /// Moment equations for H = ½yᵀHy and Σ_kl M_kl (L_k ρ L_l† − ½{L_l†L_k, ρ}).
    pub fn from_lindblad(
        hamiltonian: &Matrix4<f64>,
        operators: &[Vector4<Complex64>],
        rates: &DMatrix<Complex64>,
    ) -> Result<Self> {
        let n = operators.len();
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::param("rates", "rate matrix must match the operator count"));
        }
        let mut c = Matrix4::<Complex64>::zeros();
        for k in 0..n {
            for l in 0..n {
                c += operators[k] * operators[l].adjoint() * rates[(k, l)];
            }
        }
        let o = symplectic_form();
        let h = (hamiltonian + hamiltonian.transpose()) * 0.5;
        let drift = o * (h - c.map(|x| x.im));
        let diffusion = o * c.map(|x| x.re) * o.transpose();
        Ok(DriftDiffusion {
            drift,
            diffusion: (diffusion + diffusion.transpose()) * 0.5,
        })
    }

    /// Adds the moment terms of another generator acting on the same modes.
    pub fn plus(&self, other: &DriftDiffusion) -> DriftDiffusion {
        DriftDiffusion {
            drift: self.drift + other.drift,
            diffusion: self.diffusion + other.diffusion,
        }
    }

    /// Adds zero-temperature damping √γ a_j on both modes.
    pub fn with_local_damping(&self, gamma: f64) -> DriftDiffusion {
        let ops = [annihilation(0), annihilation(1)];
        let rates = DMatrix::from_diagonal_element(2, 2, Complex64::from(gamma));
        let damp = DriftDiffusion::from_lindblad(&Matrix4::zeros(), &ops, &rates)
            .expect("dimensions agree");
        self.plus(&damp)
    }

    /// Laboratory-frame moment equations of the linearized binding master equation.
    pub fn lab_frame(cs: &CouplingSet, trap: &TrapFrequencies) -> DriftDiffusion {
        let (w1, w2) = (trap.particle_1(), trap.particle_2());
        let mut h = Matrix4::from_diagonal(&Vector4::new(w1, w1, w2, w2));
        h[(0, 0)] += 2.0 * cs.freq_shift_1();
        h[(2, 2)] += 2.0 * cs.freq_shift_2();
        h[(0, 2)] = -2.0 * cs.g_r;
        h[(2, 0)] = -2.0 * cs.g_r;
        let rates = DMatrix::from_fn(2, 2, |j, k| cs.diffusion[(j, k)] * 2.0);
        DriftDiffusion::from_lindblad(&h, &[e(0), e(2)], &rates).expect("dimensions agree")
    }

    /// Rotating-wave moment equations in quadratures X_j, P_j co-rotating at the
    /// mean trap frequency; the mean amplitudes follow −iH_NH.
    pub fn rotating_frame(cs: &CouplingSet, trap: &TrapFrequencies) -> DriftDiffusion {
        let h2 = Matrix2::new(
            -trap.detuning / 2.0 + cs.g_a,
            -cs.g_r,
            -cs.g_r,
            trap.detuning / 2.0 - cs.g_a,
        );
        let mut h = Matrix4::zeros();
        for j in 0..2 {
            for k in 0..2 {
                h[(2 * j, 2 * k)] = h2[(j, k)];
                h[(2 * j + 1, 2 * k + 1)] = h2[(j, k)];
            }
        }
        let ops = [annihilation(0), annihilation(1), creation(0), creation(1)];
        let d = cs.diffusion;
        let rates = DMatrix::from_fn(4, 4, |k, l| match (k / 2, l / 2) {
            (0, 0) | (1, 1) => d[(k % 2, l % 2)],
            _ => Complex64::new(0.0, 0.0),
        });
        DriftDiffusion::from_lindblad(&h, &ops, &rates).expect("dimensions agree")
    }

    pub fn validate(&self) -> Result<()> {
        let eig = nalgebra::SymmetricEigen::new(self.diffusion).eigenvalues.min();
        if eig < -1e-12 * self.diffusion.abs().max().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositive {
                what: "diffusion matrix",
                min_eigenvalue: eig,
            });
        }
        Ok(())
    }

    /// Largest real part of the drift spectrum.
    pub fn spectral_abscissa(&self) -> f64 {
        self.drift
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact propagator (Φ, Q) with m(t) = Φm(0) and Σ(t) = ΦΣ(0)Φᵀ + Q.
    pub fn propagator(&self, t: f64) -> (Matrix4<f64>, Matrix4<f64>) {
        let norm = self.drift.abs().max();
        let steps = (norm * t).ceil().max(1.0) as u64;
        let h = t / steps as f64;
        let (phi_h, q_h) = van_loan(&self.drift, &self.diffusion, h);
        let mut phi = Matrix4::identity();
        let mut q = Matrix4::zeros();
        for _ in 0..steps {
            q = phi_h * q * phi_h.transpose() + q_h;
            phi = phi_h * phi;
        }
        (phi, (q + q.transpose()) * 0.5)
    }

    /// Solves AΣ + ΣAᵀ + D = 0; requires a Hurwitz drift.
    pub fn stationary_covariance(&self) -> Result<Matrix4<f64>> {
        let abscissa = self.spectral_abscissa();
        if abscissa >= 0.0 {
            return Err(Error::Domain(format!(
                "no stationary state: drift has an eigenvalue with real part {abscissa:.3e}"
            )));
        }
        let i4 = Matrix4::<f64>::identity();
        let mut big = SMatrix::<f64, 16, 16>::zeros();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        // vec index (row r, col s) → s*4 + r
                        big[(b * 4 + a, d * 4 + c)] =
                            i4[(b, d)] * self.drift[(a, c)] + self.drift[(b, d)] * i4[(a, c)];
                    }
                }
            }
        }
        let rhs = SMatrix::<f64, 16, 1>::from_iterator(self.diffusion.iter().map(|x| -x));
        let sol = big
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain("singular Lyapunov system".into()))?;
        let sigma = Matrix4::from_iterator(sol.iter().copied());
        Ok((sigma + sigma.transpose()) * 0.5)
    }
}

fn van_loan(a: &Matrix4<f64>, d: &Matrix4<f64>, h: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    let mut m = SMatrix::<f64, 8, 8>::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(&(-a * h));
    m.fixed_view_mut::<4, 4>(0, 4).copy_from(&(d * h));
    m.fixed_view_mut::<4, 4>(4, 4).copy_from(&(a.transpose() * h));
    let f = m.exp();
    let phi = f.fixed_view::<4, 4>(4, 4).transpose();
    let q = phi * f.fixed_view::<4, 4>(0, 4);
    (phi, q)
}

/// Moment equations of the linearized binding master equation in the lab frame.
pub fn build_drift_diffusion(cs: &CouplingSet, trap: &TrapFrequencies) -> DriftDiffusion {
    DriftDiffusion::lab_frame(cs, trap)
}

/// Propagates a Gaussian state under constant moment equations.
pub fn evolve_gaussian(st: &GaussianState, dd: &DriftDiffusion, t: f64) -> Result<GaussianState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", "must be finite and non-negative"));
    }
    let (phi, q) = dd.propagator(t);
    let out = GaussianState {
        mean: phi * st.mean,
        cov: phi * st.cov * phi.transpose() + q,
    };
    check_uncertainty(&out, t)?;
    Ok(out)
}

fn check_uncertainty(st: &GaussianState, t: f64) -> Result<()> {
    let scale = st.cov.abs().max().max(1.0);
    let margin = uncertainty_margin(&st.cov);
    if margin < -UNCERTAINTY_TOL * scale {
        return Err(Error::Accuracy {
            what: "uncertainty relation after propagation",
            achieved: -margin,
            required: UNCERTAINTY_TOL * scale,
        });
    }
    if !st.cov.iter().all(|x| x.is_finite()) {
        return Err(Error::StepSize { time: t, step: 0.0 });
    }
    Ok(())
}

/// Tolerances of the adaptive Dormand–Prince integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 1e-3,
            min_step: 1e-14,
            max_step: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy)]
struct Moments {
    m: Vector4<f64>,
    s: Matrix4<f64>,
}

impl Moments {
    fn axpy(&self, h: f64, ks: &[(f64, &Moments)]) -> Moments {
        let mut out = *self;
        for (c, k) in ks {
            out.m += k.m * (h * c);
            out.s += k.s * (h * c);
        }
        out
    }
}

fn rhs(dd: &DriftDiffusion, y: &Moments) -> Moments {
    let a = dd.drift;
    Moments {
        m: a * y.m,
        s: a * y.s + y.s * a.transpose() + dd.diffusion,
    }
}

/// Propagates Gaussian moments under time-dependent moment equations with an
/// adaptive Dormand–Prince 5(4) scheme, returning the state at each of `times`
/// (ascending, starting at or after `t0`). Steps that break the uncertainty
/// relation are rejected and retried with a smaller step.
pub fn evolve_time_dependent<F>(
    st: &GaussianState,
    generator: F,
    t0: f64,
    times: &[f64],
    opts: &AdaptiveOptions,
) -> Result<Vec<GaussianState>>
where
    F: Fn(f64) -> DriftDiffusion,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut y = Moments { m: st.mean, s: st.cov };
    let mut t = t0;
    let mut h = opts.initial_step;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::param("times", "must be ascending and not before t0"));
        }
        while t < target {
            let step = h.min(target - t).min(opts.max_step);
            let mut k: Vec<Moments> = Vec::with_capacity(7);
            for i in 0..7 {
                let ks: Vec<(f64, &Moments)> = (0..i).map(|j| (A[i][j], &k[j])).collect();
                let yi = y.axpy(step, &ks);
                k.push(rhs(&generator(t + C[i] * step), &yi));
            }
            let y_new = {
                let ks: Vec<(f64, &Moments)> = (0..6).map(|j| (A[6][j], &k[j])).collect();
                y.axpy(step, &ks)
            };
            let mut err: f64 = 0.0;
            let err_m: Vector4<f64> = (0..7).map(|i| k[i].m * (E[i] * step)).sum();
            let err_s: Matrix4<f64> = (0..7).map(|i| k[i].s * (E[i] * step)).sum();
            for (e, v) in err_m.iter().zip(y_new.m.iter()) {
                err = err.max(e.abs() / (opts.atol + opts.rtol * v.abs()));
            }
            for (e, v) in err_s.iter().zip(y_new.s.iter()) {
                err = err.max(e.abs() / (opts.atol + opts.rtol * v.abs()));
            }
            let sym = (y_new.s + y_new.s.transpose()) * 0.5;
            let physical = uncertainty_margin(&sym) >= -UNCERTAINTY_TOL * sym.abs().max().max(1.0);
            if err <= 1.0 && physical && err.is_finite() {
                t += step;
                y = Moments { m: y_new.m, s: sym };
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * factor;
            } else {
                let factor = if err.is_finite() { (0.9 * err.powf(-0.25)).clamp(0.1, 0.5) } else { 0.1 };
                h = step * factor;
            }
            if h < opts.min_step {
                return Err(Error::StepSize { time: t, step: h });
            }
        }
        out.push(GaussianState { mean: y.m, cov: y.s });
    }
    Ok(out)
}

/// Rotates lab-frame quadratures into a frame co-rotating at ω: a → a e^{iωt}.
pub fn to_rotating_frame(st: &GaussianState, omega: f64, t: f64) -> GaussianState {
    let (s, c) = (omega * t).sin_cos();
    let mut r = Matrix4::zeros();
    for j in 0..2 {
        r[(2 * j, 2 * j)] = c;
        r[(2 * j, 2 * j + 1)] = -s;
        r[(2 * j + 1, 2 * j)] = s;
        r[(2 * j + 1, 2 * j + 1)] = c;
    }
    st.transformed(&r)
}
