//! Non-Hermitian normal modes of the coupled oscillators in the rotating frame.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linearize::{CouplingSet, TrapFrequencies};

/// Largest rate, relative to ω, for which the rotating-wave picture is trusted.
pub const RWA_LIMIT: f64 = 0.1;

/// Exceptional points must have eigenvector condition numbers above this.
pub const EP_CONDITION_MIN: f64 = 1e6;

/// Residual eigenvalue gap accepted at a detected exceptional point, relative
/// to the coupling scale. Eigenvalues near a coalescence are only determined
/// to about √ε, so this cannot be made much smaller.
pub const EP_GAP_TOL: f64 = 1e-6;

/// Margin, relative to the largest rate, by which a regime inequality must hold.
/// Keeps rounding at the pure points from raising spurious flags.
pub const REGIME_TOL: f64 = 1e-12;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Non-Hermitian matrix H_NH with d(a₁, a₂)/dt = −i H_NH (a₁, a₂) + noise.
pub fn dynamical_matrix(cs: &CouplingSet, trap: &TrapFrequencies) -> Matrix2<Complex64> {
    let half = trap.detuning / 2.0;
    Matrix2::new(
        c(-half + cs.g_a),
        c(-cs.g_r - cs.g_a),
        c(-cs.g_r + cs.g_a),
        c(half - cs.g_a),
    )
}

/// Whether the coupling rates and detuning are small against the trap frequency.
pub fn rwa_valid(cs: &CouplingSet, trap: &TrapFrequencies) -> bool {
    let largest = cs.g_r.abs().max(cs.g_a.abs()).max(trap.detuning.abs());
    largest < RWA_LIMIT * trap.mean
}

fn discriminant(g_r: f64, g_a: f64, detuning: f64) -> f64 {
    detuning * detuning + 4.0 * g_r * g_r - 4.0 * g_a * detuning
}

/// Eigenfrequencies ω± = ±½√(δω² + 4g_r² − 4g_aδω), principal branch.
pub fn eigenfrequencies(cs: &CouplingSet, trap: &TrapFrequencies) -> (Complex64, Complex64) {
    let root = c(discriminant(cs.g_r, cs.g_a, trap.detuning)).sqrt() * 0.5;
    (root, -root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PtPhase {
    Unbroken,
    Broken,
    Exceptional,
}

impl fmt::Display for PtPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PtPhase::Unbroken => "pt-unbroken",
            PtPhase::Broken => "pt-broken",
            PtPhase::Exceptional => "exceptional",
        })
    }
}

/// Spectrum of the dynamical matrix at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub h_nh: Matrix2<Complex64>,
    pub omega_plus: Complex64,
    pub omega_minus: Complex64,
    /// Right eigenvectors as columns, ordered as (ω₊, ω₋).
    pub eigenvectors: Matrix2<Complex64>,
    pub condition_number: f64,
    pub phase: PtPhase,
}

fn coupling_scale(g_r: f64, g_a: f64, detuning: f64) -> f64 {
    g_r.abs().max(g_a.abs()).max(detuning.abs()).max(f64::MIN_POSITIVE)
}

fn right_eigenvector(h: &Matrix2<Complex64>, lambda: Complex64) -> nalgebra::Vector2<Complex64> {
    let a = nalgebra::Vector2::new(h[(0, 1)], lambda - h[(0, 0)]);
    let b = nalgebra::Vector2::new(lambda - h[(1, 1)], h[(1, 0)]);
    let v = if a.norm() >= b.norm() { a } else { b };
    if v.norm() == 0.0 {
        nalgebra::Vector2::new(c(1.0), c(0.0))
    } else {
        v / c(v.norm())
    }
}

fn condition_number(m: &Matrix2<Complex64>) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn mode_spectrum(cs: &CouplingSet, trap: &TrapFrequencies) -> ModeSpectrum {
    let h = dynamical_matrix(cs, trap);
    let (wp, wm) = eigenfrequencies(cs, trap);
    let v = Matrix2::from_columns(&[right_eigenvector(&h, wp), right_eigenvector(&h, wm)]);
    let scale = coupling_scale(cs.g_r, cs.g_a, trap.detuning);
    let disc = discriminant(cs.g_r, cs.g_a, trap.detuning);
    let phase = if disc.abs() <= 1e-14 * scale * scale {
        PtPhase::Exceptional
    } else if disc < 0.0 {
        PtPhase::Broken
    } else {
        PtPhase::Unbroken
    };
    ModeSpectrum {
        h_nh: h,
        omega_plus: wp,
        omega_minus: wm,
        eigenvectors: v,
        condition_number: condition_number(&v),
        phase,
    }
}

/// Squared eigenvalue gap of H_NH from a numerical Schur decomposition.
fn numerical_gap_squared(g_r: f64, g_a: f64, detuning: f64) -> Complex64 {
    let cs = CouplingSet::from_couplings(g_r, g_a, 0.0, 0.0, 0.0);
    let h = dynamical_matrix(&cs, &TrapFrequencies::new(1.0, detuning));
    let ev = h.schur().eigenvalues().expect("complex Schur form is triangular");
    (ev[0] - ev[1]).powi(2)
}

/// Detuning at which the eigenvalues of H_NH coalesce, with the numerical
/// evidence for coalescence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalPoint {
    pub detuning: f64,
    /// |ω₊ − ω₋| evaluated numerically at `detuning`.
    pub gap: f64,
    pub condition_number: f64,
}

/// Closed-form exceptional points δω = 2g_a ± 2√(g_a² − g_r²).
pub fn exceptional_points_closed_form(g_r: f64, g_a: f64) -> Vec<f64> {
    let d = g_a * g_a - g_r * g_r;
    if d < 0.0 {
        Vec::new()
    } else if d == 0.0 {
        vec![2.0 * g_a]
    } else {
        let r = 2.0 * d.sqrt();
        vec![2.0 * g_a - r, 2.0 * g_a + r]
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exceptional points located numerically from the eigenvalues of H_NH and
/// verified by eigenvalue coalescence and eigenvector degeneracy.
pub fn exceptional_points(cs: &CouplingSet) -> Result<Vec<ExceptionalPoint>> {
    let (g_r, g_a) = (cs.g_r, cs.g_a);
    let scale = coupling_scale(g_r, g_a, 0.0);
    let f = |x: f64| numerical_gap_squared(g_r, g_a, x).re;
    // The squared gap is convex in δω; locate its minimum by golden section.
    let span = 8.0 * scale;
    let (mut a, mut b) = (-span, span);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if f(x1) < f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let centre = 0.5 * (a + b);
    let depth = f(centre);
    let tol = (EP_GAP_TOL * scale).powi(2);
    let roots = if depth > tol {
        Vec::new()
    } else if depth > -tol {
        vec![centre]
    } else {
        vec![bisect(f, -span, centre), bisect(f, centre, span)]
    };
    roots
        .into_iter()
        .map(|x| {
            let gap = numerical_gap_squared(g_r, g_a, x).norm().sqrt();
            let trap = TrapFrequencies::new(1.0, x);
            let spec = mode_spectrum(&CouplingSet::from_couplings(g_r, g_a, 0.0, 0.0, 0.0), &trap);
            let ep = ExceptionalPoint {
                detuning: x,
                gap,
                condition_number: spec.condition_number,
            };
            if gap > EP_GAP_TOL * scale {
                return Err(Error::Accuracy {
                    what: "eigenvalue coalescence at exceptional point",
                    achieved: gap / scale,
                    required: EP_GAP_TOL,
                });
            }
            if spec.condition_number < EP_CONDITION_MIN {
                return Err(Error::Accuracy {
                    what: "eigenvector degeneracy at exceptional point",
                    achieved: spec.condition_number,
                    required: EP_CONDITION_MIN,
                });
            }
            Ok(ep)
        })
        .collect()
}

/// Parameters of the particle- and tweezer-swapped system, (δω, φ) → (−δω, −φ).
pub fn pt_partner(cs: &CouplingSet, trap: &TrapFrequencies) -> (CouplingSet, TrapFrequencies) {
    let mut out = *cs;
    out.g_a = -cs.g_a;
    out.diffusion = Matrix2::new(
        cs.diffusion[(1, 1)],
        cs.diffusion[(1, 0)],
        cs.diffusion[(0, 1)],
        cs.diffusion[(0, 0)],
    );
    (out, TrapFrequencies::new(trap.mean, -trap.detuning))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Directional,
    Antireciprocal,
    Reciprocal,
    RecoilCorrelated,
    Mixed,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Directional => "directional",
            Regime::Antireciprocal => "antireciprocal",
            Regime::Reciprocal => "reciprocal",
            Regime::RecoilCorrelated => "recoil-correlated",
            Regime::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the four coupling regimes dominate at a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub reciprocal: bool,
    pub directional: bool,
    pub antireciprocal: bool,
    pub recoil_correlated: bool,
    /// Precedence: directional, antireciprocal, reciprocal, recoil-correlated.
    pub dominant: Regime,
}

impl RegimeLabel {
    pub fn flag_count(&self) -> usize {
        [self.reciprocal, self.directional, self.antireciprocal, self.recoil_correlated]
            .iter()
            .filter(|b| **b)
            .count()
    }
}

pub fn classify_regime(cs: &CouplingSet) -> RegimeLabel {
    let (gr, ga) = (cs.g_r.abs(), cs.g_a.abs());
    let re12 = cs.d12().re.abs();
    let plus = (cs.g_r + cs.g_a).abs();
    let minus = (cs.g_r - cs.g_a).abs();
    let tol = REGIME_TOL * gr.max(ga).max(re12);
    let gt = |a: f64, b: f64| a > b + tol;
    let reciprocal = gt(gr, ga) && gt(gr, re12);
    let directional = gt(plus, 2.0 * minus) || gt(minus, 2.0 * plus);
    let antireciprocal = gt(ga, gr) && gt(ga, re12);
    let recoil_correlated = gt(re12, 2.0 * plus.max(minus));
    let dominant = if directional {
        Regime::Directional
    } else if antireciprocal {
        Regime::Antireciprocal
    } else if reciprocal {
        Regime::Reciprocal
    } else if recoil_correlated {
        Regime::RecoilCorrelated
    } else {
        Regime::Mixed
    };
    RegimeLabel {
        reciprocal,
        directional,
        antireciprocal,
        recoil_correlated,
        dominant,
    }
}

/// Coefficients (u₁, u₂) of the collective mode u₁a₁ + u₂a₂ that decays when
/// g_r = 0 and δω = 2g_a.
pub fn damped_mode(cs: &CouplingSet) -> (Complex64, Complex64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (c(s), Complex64::new(0.0, -s * cs.g_a.signum()))
}

/// Saturated occupation D₁₁kd/2G − 1/2 of the damped collective mode.
pub fn stationary_occupation_damped_mode(cs: &CouplingSet, d11: f64, kd: f64) -> Result<f64> {
    let rate = cs.g / kd;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param("kd", "G/kd must be positive and finite"));
    }
    if cs.g_r.abs() > 1e-9 * rate {
        return Err(Error::Domain("damped-mode saturation requires g_r = 0".into()));
    }
    if (cs.g_a.abs() - rate).abs() > 1e-9 * rate {
        return Err(Error::Domain("damped-mode saturation requires |g_a| = G/kd".into()));
    }
    let n = d11 * kd / (2.0 * cs.g) - 0.5;
    if n < -1e-12 {
        return Err(Error::Domain(format!(
            "D11 kd / G = {} is below 1; the recoil rate is unphysically small",
            d11 * kd / cs.g
        )));
    }
    Ok(n.max(0.0))
}
