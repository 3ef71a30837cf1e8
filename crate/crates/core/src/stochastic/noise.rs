//! Random streams and correlated noise increments.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearize::CouplingSet;

/// Independent stream `index` of the generator seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Wiener increment with variance `dt`.
pub fn wiener(rng: &mut impl Rng, dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * dt.sqrt()
}

/// Circular complex Gaussian with E|w|² = `dt`.
pub fn complex_wiener(rng: &mut impl Rng, dt: f64) -> Complex64 {
    let s = (dt / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Lower-triangular L with L L† = `m` for a 2×2 Hermitian PSD matrix.
pub fn hermitian_factor(m: &Matrix2<Complex64>) -> Result<Matrix2<Complex64>> {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let (a, b, d) = (m[(0, 0)].re, m[(1, 0)], m[(1, 1)].re);
    let det = a * d - b.norm_sqr();
    if a < -1e-14 * scale || d < -1e-14 * scale || det < -1e-12 * scale * scale {
        return Err(Error::NotPositive {
            what: "noise correlation matrix",
            min_eigenvalue: 0.5 * (a + d) - (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt(),
        });
    }
    let zero = Complex64::new(0.0, 0.0);
    if a <= 1e-14 * scale {
        return Ok(Matrix2::new(zero, zero, zero, Complex64::from(d.max(0.0).sqrt())));
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (d - l21.norm_sqr()).max(0.0).sqrt();
    Ok(Matrix2::new(Complex64::from(l11), zero, l21, Complex64::from(l22)))
}

/// Correlated complex noise driving the rotating-frame amplitudes.
///
/// `correlation` is the normally ordered matrix ⟨ξ_k†ξ_j⟩ = D_jk. Sampled
/// increments carry its symmetrically ordered part, E[dξ_j dξ_k*] = Re D_jk dt;
/// the antisymmetric part Im D₁₂ = g_a acts only through the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub correlation: Matrix2<Complex64>,
    pub seed: u64,
    pub dt: f64,
    factor: Matrix2<Complex64>,
}

impl NoiseModel {
    pub fn new(cs: &CouplingSet, seed: u64, dt: f64) -> Result<Self> {
        Self::from_correlation(cs.diffusion, seed, dt)
    }

    pub fn from_correlation(correlation: Matrix2<Complex64>, seed: u64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be finite and positive"));
        }
        if (correlation - correlation.adjoint()).norm() > 1e-12 * correlation.norm() {
            return Err(Error::param("correlation", "must be Hermitian"));
        }
        let symmetric = correlation.map(|z| Complex64::new(z.re, 0.0));
        let factor = hermitian_factor(&symmetric)?;
        Ok(NoiseModel { correlation, seed, dt, factor })
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        NoiseModel { dt, ..*self }
    }

    pub fn increment(&self, rng: &mut impl Rng) -> Vector2<Complex64> {
        let w = Vector2::new(complex_wiener(rng, self.dt), complex_wiener(rng, self.dt));
        self.factor * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| trajectory_rng(9, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| trajectory_rng(9, 3).random()).collect();
        assert_eq!(a, b);
        let mut r1 = trajectory_rng(9, 3);
        let mut r2 = trajectory_rng(9, 4);
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
    }

    #[test]
    fn factor_reproduces_matrix() {
        let m = Matrix2::new(
            Complex64::from(2.0),
            Complex64::new(0.3, 0.4),
            Complex64::new(0.3, -0.4),
            Complex64::from(1.0),
        );
        let l = hermitian_factor(&m).unwrap();
        assert!((l * l.adjoint() - m).norm() < 1e-14);
        let singular = Matrix2::new(
            Complex64::from(0.0),
            Complex64::from(0.0),
            Complex64::from(0.0),
            Complex64::from(1.0),
        );
        let l = hermitian_factor(&singular).unwrap();
        assert!((l * l.adjoint() - singular).norm() < 1e-14);
        let bad = Matrix2::new(
            Complex64::from(1.0),
            Complex64::from(2.0),
            Complex64::from(2.0),
            Complex64::from(1.0),
        );
        assert!(hermitian_factor(&bad).is_err());
    }

    #[test]
    fn sample_correlation_converges() {
        let cs = CouplingSet::from_couplings(0.0, 0.2, 1.0, 0.5, 0.3);
        let nm = NoiseModel::new(&cs, 1, 0.01).unwrap();
        let mut rng = trajectory_rng(1, 0);
        let n = 200_000;
        let mut acc = Matrix2::<Complex64>::zeros();
        for _ in 0..n {
            let x = nm.increment(&mut rng);
            acc += x * x.adjoint();
        }
        let est = acc / Complex64::from(n as f64 * nm.dt);
        let expect = cs.diffusion.map(|z| Complex64::new(z.re, 0.0));
        assert!((est - expect).norm() < 0.02, "{est}");
    }
}
