//! Trajectory records and ensemble statistics.

use nalgebra::{Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::gaussian::GaussianState;

/// One simulated trajectory: sampled conditional moments and measurement signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub config_hash: String,
    pub times: Vec<f64>,
    /// Quadrature means (z₁, p₁, z₂, p₂) or sampled amplitudes.
    pub means: Vec<Vector4<f64>>,
    /// Conditional covariances; empty when the record holds samples.
    pub covariances: Vec<Matrix4<f64>>,
    /// Integrated measurement signals y_j over each sampling interval; NaN when unmeasured.
    pub signals: Vec<Vector2<f64>>,
    /// Time at which the trajectory left the linear regime.
    pub aborted_at: Option<f64>,
}

/// Monte-Carlo estimates of ⟨y⟩ and ⟨y yᵀ⟩ with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub samples: usize,
    pub mean: Vector4<f64>,
    pub mean_se: Vector4<f64>,
    /// Symmetrized raw second moments, including any per-sample covariance.
    pub second: Matrix4<f64>,
    pub second_se: Matrix4<f64>,
}

impl EnsembleMoments {
    /// Statistics over `points`; `shared_cov` is a deterministic covariance that
    /// every sample carries in addition to its mean.
    pub fn from_samples(points: &[Vector4<f64>], shared_cov: Option<&Matrix4<f64>>) -> Self {
        let n = points.len();
        let nf = n as f64;
        let mut sum = Vector4::zeros();
        let mut sum_sq = Vector4::zeros();
        let mut sum2 = Matrix4::zeros();
        let mut sum2_sq = Matrix4::zeros();
        for p in points {
            let outer = p * p.transpose();
            sum += p;
            sum_sq += p.component_mul(p);
            sum2 += outer;
            sum2_sq += outer.component_mul(&outer);
        }
        let mean = sum / nf;
        let var = (sum_sq / nf - mean.component_mul(&mean)) * (nf / (nf - 1.0).max(1.0));
        let second = sum2 / nf;
        let var2 = (sum2_sq / nf - second.component_mul(&second)) * (nf / (nf - 1.0).max(1.0));
        EnsembleMoments {
            samples: n,
            mean,
            mean_se: var.map(|v| (v.max(0.0) / nf).sqrt()),
            second: second + shared_cov.copied().unwrap_or_else(Matrix4::zeros),
            second_se: var2.map(|v| (v.max(0.0) / nf).sqrt()),
        }
    }

    /// Largest deviation from a reference Gaussian state, in standard errors.
    /// Entries whose standard error vanishes are compared against `floor`.
    pub fn max_z_score(&self, reference: &GaussianState, floor: f64) -> f64 {
        let ref_second = reference.second_moments();
        let mut worst: f64 = 0.0;
        for a in 0..4 {
            let z = (self.mean[a] - reference.mean[a]).abs() / self.mean_se[a].max(floor);
            worst = worst.max(z);
            for b in 0..4 {
                let z = (self.second[(a, b)] - ref_second[(a, b)]).abs() / self.second_se[(a, b)].max(floor);
                worst = worst.max(z);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_fixed_points() {
        let pts = [Vector4::new(1.0, 0.0, 0.0, 0.0), Vector4::new(-1.0, 0.0, 2.0, 0.0)];
        let m = EnsembleMoments::from_samples(&pts, None);
        assert_eq!(m.mean, Vector4::new(0.0, 0.0, 1.0, 0.0));
        assert_eq!(m.second[(0, 0)], 1.0);
        assert_eq!(m.second[(0, 2)], -1.0);
        assert_eq!(m.second[(2, 2)], 2.0);
        assert!((m.mean_se[0] - 1.0).abs() < 1e-15);
    }
}
