//! Two-mode Gaussian states in the quadrature ordering (z₁, p₁, z₂, p₂).

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for the uncertainty relation Σ + iΩ/2 ≥ 0.
pub const UNCERTAINTY_TOL: f64 = 1e-10;

/// Symplectic form with Ω_ab = −i[y_a, y_b].
pub fn symplectic_form() -> Matrix4<f64> {
    let mut o = Matrix4::zeros();
    o[(0, 1)] = 1.0;
    o[(1, 0)] = -1.0;
    o[(2, 3)] = 1.0;
    o[(3, 2)] = -1.0;
    o
}

/// First and symmetrized second central moments of a two-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl GaussianState {
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Result<Self> {
        let st = GaussianState { mean, cov };
        st.validate(UNCERTAINTY_TOL)?;
        Ok(st)
    }

    pub fn vacuum() -> Self {
        GaussianState {
            mean: Vector4::zeros(),
            cov: Matrix4::identity() * 0.5,
        }
    }

    /// Product of coherent states with amplitudes a_j = (z_j + i p_j)/√2.
    pub fn coherent(alpha_1: Complex64, alpha_2: Complex64) -> Self {
        let s = std::f64::consts::SQRT_2;
        GaussianState {
            mean: Vector4::new(s * alpha_1.re, s * alpha_1.im, s * alpha_2.re, s * alpha_2.im),
            cov: Matrix4::identity() * 0.5,
        }
    }

    /// Product of thermal states with mean occupations n₁, n₂.
    pub fn thermal(n_1: f64, n_2: f64) -> Self {
        let v = Vector4::new(n_1 + 0.5, n_1 + 0.5, n_2 + 0.5, n_2 + 0.5);
        GaussianState {
            mean: Vector4::zeros(),
            cov: Matrix4::from_diagonal(&v),
        }
    }

    /// Two-mode squeezed vacuum exp(s(a₁a₂ − a₁†a₂†)).
    pub fn two_mode_squeezed(s: f64) -> Self {
        let c = 0.5 * (2.0 * s).cosh();
        let h = 0.5 * (2.0 * s).sinh();
        let mut cov = Matrix4::identity() * c;
        cov[(0, 2)] = h;
        cov[(2, 0)] = h;
        cov[(1, 3)] = -h;
        cov[(3, 1)] = -h;
        GaussianState {
            mean: Vector4::zeros(),
            cov,
        }
    }

    /// Smallest eigenvalue of the Hermitian matrix Σ + iΩ/2.
    pub fn uncertainty_margin(&self) -> f64 {
        uncertainty_margin(&self.cov)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.mean.iter().chain(self.cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite Gaussian moments".into()));
        }
        let asym = (self.cov - self.cov.transpose()).abs().max();
        if asym > 1e-12 * self.cov.abs().max().max(1.0) {
            return Err(Error::param("cov", "covariance must be symmetric"));
        }
        let margin = self.uncertainty_margin();
        if margin < -tol {
            return Err(Error::NotPositive {
                what: "cov + iΩ/2",
                min_eigenvalue: margin,
            });
        }
        Ok(())
    }

    /// ⟨a_j†a_j⟩ for mode j ∈ {0, 1}.
    pub fn occupation(&self, j: usize) -> f64 {
        let (z, p) = (2 * j, 2 * j + 1);
        0.5 * (self.cov[(z, z)] + self.cov[(p, p)] + self.mean[z].powi(2) + self.mean[p].powi(2)) - 0.5
    }

    /// Raw second moments ⟨{y_a, y_b}⟩/2.
    pub fn second_moments(&self) -> Matrix4<f64> {
        self.cov + self.mean * self.mean.transpose()
    }

    pub fn purity(&self) -> f64 {
        1.0 / (16.0 * self.cov.determinant()).sqrt()
    }

    /// Symplectic eigenvalues ν₋ ≤ ν₊.
    pub fn symplectic_eigenvalues(&self) -> Result<[f64; 2]> {
        symplectic_eigenvalues(&self.cov)
    }

    /// Covariance after transposing mode 2 (p₂ → −p₂).
    pub fn partial_transpose(&self) -> Matrix4<f64> {
        let flip = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0));
        flip * self.cov * flip
    }

    /// Logarithmic negativity E_N = max(0, −ln 2ν̃₋).
    pub fn log_negativity(&self) -> Result<f64> {
        self.validate(UNCERTAINTY_TOL)?;
        let [nu, _] = symplectic_eigenvalues(&self.partial_transpose())?;
        Ok((-(2.0 * nu).ln()).max(0.0))
    }

    /// State after applying a phase-space map y → S y.
    pub fn transformed(&self, s: &Matrix4<f64>) -> Self {
        GaussianState {
            mean: s * self.mean,
            cov: s * self.cov * s.transpose(),
        }
    }

    /// Single-mode marginal of mode j.
    pub fn mode(&self, j: usize) -> (nalgebra::Vector2<f64>, Matrix2<f64>) {
        let o = 2 * j;
        (
            self.mean.fixed_rows::<2>(o).into_owned(),
            self.cov.fixed_view::<2, 2>(o, o).into_owned(),
        )
    }
}

fn hermitian(cov: &Matrix4<f64>, omega_scale: f64) -> Matrix4<Complex64> {
    let o = symplectic_form();
    Matrix4::from_fn(|a, b| Complex64::new(cov[(a, b)], omega_scale * o[(a, b)]))
}

pub fn uncertainty_margin(cov: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new(hermitian(cov, 0.5)).eigenvalues.min()
}

/// Symplectic eigenvalues of a positive-definite covariance matrix, ascending.
pub fn symplectic_eigenvalues(cov: &Matrix4<f64>) -> Result<[f64; 2]> {
    let eig = SymmetricEigen::new(*cov);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::NotPositive {
            what: "covariance matrix",
            min_eigenvalue: eig.eigenvalues.min(),
        });
    }
    let root = eig.eigenvectors
        * Matrix4::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let k = root * symplectic_form() * root;
    // i·K is Hermitian with eigenvalues ±ν.
    let ik = k.map(|x| Complex64::new(0.0, x));
    let mut ev: Vec<f64> = SymmetricEigen::new(ik)
        .eigenvalues
        .iter()
        .copied()
        .filter(|x| *x > 0.0)
        .collect();
    ev.sort_by(f64::total_cmp);
    match ev.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Domain("degenerate symplectic spectrum".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_is_pure_and_saturates_uncertainty() {
        let v = GaussianState::vacuum();
        assert!(v.uncertainty_margin().abs() < 1e-14);
        assert!((v.purity() - 1.0).abs() < 1e-14);
        let nu = v.symplectic_eigenvalues().unwrap();
        assert!((nu[0] - 0.5).abs() < 1e-14 && (nu[1] - 0.5).abs() < 1e-14);
        assert_eq!(v.log_negativity().unwrap(), 0.0);
        assert!(v.occupation(0).abs() < 1e-15);
    }

    #[test]
    fn two_mode_squeezed_negativity() {
        for s in [0.0, 0.1, 0.7, 1.5] {
            let st = GaussianState::two_mode_squeezed(s);
            st.validate(1e-12).unwrap();
            assert!((st.log_negativity().unwrap() - 2.0 * s).abs() < 1e-10, "s = {s}");
            assert!((st.purity() - 1.0).abs() < 1e-9);
            assert!((st.occupation(0) - s.sinh().powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn thermal_symplectic_spectrum() {
        let st = GaussianState::thermal(2.0, 0.25);
        let nu = st.symplectic_eigenvalues().unwrap();
        assert!((nu[0] - 0.75).abs() < 1e-13 && (nu[1] - 2.5).abs() < 1e-13);
        assert_eq!(st.log_negativity().unwrap(), 0.0);
    }

    #[test]
    fn rejects_unphysical_covariance() {
        let mut cov = Matrix4::identity() * 0.5;
        cov[(0, 0)] = 0.1;
        assert!(GaussianState::new(Vector4::zeros(), cov).is_err());
        let mut cov = Matrix4::identity();
        cov[(0, 1)] = 0.3;
        assert!(GaussianState::new(Vector4::zeros(), cov).is_err());
    }

    #[test]
    fn coherent_mean() {
        let st = GaussianState::coherent(Complex64::new(1.0, -2.0), Complex64::new(0.0, 0.5));
        assert!((st.occupation(0) - 5.0).abs() < 1e-14);
        assert!((st.occupation(1) - 0.25).abs() < 1e-14);
    }
}
