//! Linearized rates of the axial two-particle dynamics.
//!
//! Rates are angular (rad/s) throughout; conversion to Hz happens only at the
//! command-line boundary.

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{EPSILON_0, HBAR};
use crate::error::{Error, Result};
use crate::fields::{wrap_phase, ScatterDirection, TweezerPair, Particle};
use crate::quadrature::SphereRule;

/// Below this value of kd the far-field expansion is flagged as unreliable.
pub const FAR_FIELD_KD: f64 = 10.0;

/// Mechanical frequencies: particle 1 oscillates at ω − δω/2, particle 2 at ω + δω/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapFrequencies {
    pub mean: f64,
    pub detuning: f64,
}

impl TrapFrequencies {
    pub fn new(mean: f64, detuning: f64) -> Self {
        TrapFrequencies { mean, detuning }
    }

    pub fn particle_1(&self) -> f64 {
        self.mean - self.detuning / 2.0
    }

    pub fn particle_2(&self) -> f64 {
        self.mean + self.detuning / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) {
            return Err(Error::param("mean_frequency", "must be finite and positive"));
        }
        if !(self.detuning.abs() < self.mean) {
            return Err(Error::param("detuning", "|δω| must be smaller than ω"));
        }
        Ok(())
    }
}

/// Physical configuration of the tweezer pair, particles and detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub tweezers: TweezerPair,
    pub particle: Particle,
    pub trap: TrapFrequencies,
    /// φ = φ₁ − φ₂ in (−π, π].
    pub relative_phase: f64,
    pub detection_efficiency: f64,
    /// Vacuum squeezing parameter r ≥ 0.
    pub squeezing: f64,
    /// Spatial overlap ζ of the squeezed mode with the scattered field.
    pub squeezing_overlap: Complex64,
    /// Keep the Gouy correction k → k − 1/z_R in the recoil rates.
    pub retain_gouy: bool,
}

impl SystemParams {
    /// Derives trap frequencies and relative phase from the tweezer amplitudes.
    pub fn from_tweezers(tweezers: TweezerPair, particle: Particle) -> Result<Self> {
        tweezers.validate()?;
        particle.validate()?;
        let (w1, w2) = trap_frequencies(&tweezers, &particle);
        let sp = SystemParams {
            tweezers,
            particle,
            trap: TrapFrequencies::new((w1 + w2) / 2.0, w2 - w1),
            relative_phase: tweezers.relative_phase().unwrap_or(0.0),
            detection_efficiency: 0.0,
            squeezing: 0.0,
            squeezing_overlap: Complex64::new(0.0, 0.0),
            retain_gouy: false,
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn kd(&self) -> f64 {
        self.tweezers.kd()
    }

    pub fn validate(&self) -> Result<()> {
        self.tweezers.validate()?;
        self.particle.validate()?;
        self.trap.validate()?;
        let phi = self.relative_phase;
        if !(phi > -PI && phi <= PI) {
            return Err(Error::param("relative_phase", "must lie in (-π, π]"));
        }
        if let Some(from_fields) = self.tweezers.relative_phase() {
            if wrap_phase(from_fields - phi).abs() > 1e-9 {
                return Err(Error::param(
                    "relative_phase",
                    format!("{phi} disagrees with the tweezer amplitudes ({from_fields})"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.detection_efficiency) {
            return Err(Error::param("detection_efficiency", "must lie in [0, 1]"));
        }
        if !(self.squeezing >= 0.0) {
            return Err(Error::param("squeezing", "must be non-negative"));
        }
        if !(self.squeezing_overlap.norm() <= 1.0) {
            return Err(Error::param("squeezing_overlap", "|ζ| must not exceed 1"));
        }
        Ok(())
    }

    /// Checks m ω_j² = α|E_j|²/2z_R² against the supplied frequencies.
    pub fn check_frequency_consistency(&self, rel_tol: f64) -> Result<()> {
        let (w1, w2) = trap_frequencies(&self.tweezers, &self.particle);
        for (name, derived, given) in [
            ("trap frequency 1", w1, self.trap.particle_1()),
            ("trap frequency 2", w2, self.trap.particle_2()),
        ] {
            let rel = (derived - given).abs() / derived.max(f64::MIN_POSITIVE);
            if rel > rel_tol {
                return Err(Error::param(
                    "mean_frequency",
                    format!("{name}: supplied {given:.6e} rad/s, field-derived {derived:.6e} rad/s"),
                ));
            }
        }
        Ok(())
    }
}

/// Axial trapping frequencies (ω₁, ω₂) implied by the tweezer intensities.
pub fn trap_frequencies(tw: &TweezerPair, p: &Particle) -> (f64, f64) {
    let f = |e: f64| (p.polarizability * e / (2.0 * tw.rayleigh_range.powi(2) * p.mass)).sqrt();
    (f(tw.amplitude_1.norm_squared()), f(tw.amplitude_2.norm_squared()))
}

/// Linearized optical-binding rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    /// Coupling constant G (rad/s).
    pub g: f64,
    pub kd: f64,
    pub g_r: f64,
    pub g_a: f64,
    /// Hermitian diffusion-rate matrix D_jj' (1/s).
    pub diffusion: Matrix2<Complex64>,
    /// Set when kd is small enough that the 1/kd expansion is questionable.
    pub far_field_warning: bool,
}

impl CouplingSet {
    /// Builds the rate set from G, kd, φ and the local recoil rates.
    pub fn from_rates(g: f64, kd: f64, phi: f64, d11: f64, d22: f64) -> Self {
        let (g_r, g_a) = rates(g, kd, phi);
        let d12 = cross_diffusion(g, kd, phi);
        CouplingSet {
            g,
            kd,
            g_r,
            g_a,
            diffusion: Matrix2::new(
                Complex64::from(d11),
                d12,
                d12.conj(),
                Complex64::from(d22),
            ),
            far_field_warning: kd < FAR_FIELD_KD,
        }
    }

    /// Rates with explicit g_r, g_a and D₁₂, bypassing the far-field formulas.
    pub fn from_couplings(g_r: f64, g_a: f64, d11: f64, d22: f64, re_d12: f64) -> Self {
        let d12 = Complex64::new(re_d12, g_a);
        CouplingSet {
            g: f64::NAN,
            kd: f64::NAN,
            g_r,
            g_a,
            diffusion: Matrix2::new(Complex64::from(d11), d12, d12.conj(), Complex64::from(d22)),
            far_field_warning: false,
        }
    }

    pub fn d11(&self) -> f64 {
        self.diffusion[(0, 0)].re
    }

    pub fn d22(&self) -> f64 {
        self.diffusion[(1, 1)].re
    }

    pub fn d12(&self) -> Complex64 {
        self.diffusion[(0, 1)]
    }

    /// Local stiffness shift of particle 1.
    pub fn freq_shift_1(&self) -> f64 {
        self.g_r + self.g_a
    }

    pub fn freq_shift_2(&self) -> f64 {
        self.g_r - self.g_a
    }

    /// D₁₁D₂₂ − |D₁₂|²; positive for completely positive dynamics.
    pub fn positivity_margin(&self) -> f64 {
        self.d11() * self.d22() - self.d12().norm_sqr()
    }

    /// Replaces the local recoil rates, keeping couplings and correlations.
    pub fn with_local_diffusion(mut self, d11: f64, d22: f64) -> Self {
        self.diffusion[(0, 0)] = Complex64::from(d11);
        self.diffusion[(1, 1)] = Complex64::from(d22);
        self
    }

    /// Recoil heating rates (quanta/s) of the common and differential modes.
    pub fn normal_mode_heating(&self) -> (f64, f64) {
        let mean = (self.d11() + self.d22()) / 2.0;
        (mean + self.d12().re, mean - self.d12().re)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.diffusion;
        if (d[(0, 1)] - d[(1, 0)].conj()).norm() > 1e-12 * d.norm() {
            return Err(Error::param("diffusion", "D must be Hermitian"));
        }
        if d[(0, 0)].im != 0.0 || d[(1, 1)].im != 0.0 || d[(0, 0)].re < 0.0 || d[(1, 1)].re < 0.0 {
            return Err(Error::param("diffusion", "diagonal rates must be real and non-negative"));
        }
        if (d[(0, 1)].im - self.g_a).abs() > 1e-12 * (self.g_a.abs() + d.norm()) {
            return Err(Error::param("diffusion", "Im D12 must equal g_a"));
        }
        if self.positivity_margin() < 0.0 {
            return Err(Error::NotPositive {
                what: "diffusion matrix D",
                min_eigenvalue: self.positivity_margin(),
            });
        }
        Ok(())
    }
}

fn rates(g: f64, kd: f64, phi: f64) -> (f64, f64) {
    let s = g / kd;
    (s * kd.cos() * phi.cos(), s * kd.sin() * phi.sin())
}

fn cross_diffusion(g: f64, kd: f64, phi: f64) -> Complex64 {
    let s = g / kd;
    Complex64::new(s * kd.sin() * phi.cos(), s * kd.sin() * phi.sin())
}

/// G = α²k⁵|E₁||E₂|cos²θ / (16π m ε₀ ω).
pub fn coupling_constant_g(sp: &SystemParams) -> f64 {
    let tw = &sp.tweezers;
    let p = &sp.particle;
    p.polarizability.powi(2)
        * tw.wavenumber.powi(5)
        * tw.amplitude_1.norm()
        * tw.amplitude_2.norm()
        * tw.polarization_angle.cos().powi(2)
        / (16.0 * PI * p.mass * EPSILON_0 * sp.trap.mean)
}

/// Reciprocal and antireciprocal coupling rates (g_r, g_a).
pub fn coupling_rates(sp: &SystemParams) -> (f64, f64) {
    rates(coupling_constant_g(sp), sp.kd(), sp.relative_phase)
}

/// Squared linear scattering coefficient of particle `j`, integrated over
/// directions and polarizations, using `polar` Gauss–Legendre nodes.
fn local_recoil_rate(sp: &SystemParams, amplitude: &Vector3<Complex64>, polar: usize) -> f64 {
    let tw = &sp.tweezers;
    let p = &sp.particle;
    let k = tw.wavenumber;
    let k_eff = if sp.retain_gouy { k - 1.0 / tw.rayleigh_range } else { k };
    let c2 = k.powi(3) * p.polarizability.powi(2) / (32.0 * PI * PI * EPSILON_0 * HBAR);
    let zpf2 = HBAR / (p.mass * sp.trap.mean);
    let rule = SphereRule::new(Vector3::z(), polar, 16);
    let integral: f64 = rule.integrate(|n| {
        let weight = (k_eff - k * n.z).powi(2);
        ScatterDirection::pair(*n)
            .expect("unit vector")
            .iter()
            .map(|d| d.t.dotc(amplitude).norm_sqr())
            .sum::<f64>()
            * weight
    });
    0.5 * c2 * zpf2 * integral
}

/// Diffusion-rate matrix D: local recoil rates by quadrature of the linearized
/// Lindblad operators, cross term in closed form.
pub fn diffusion_matrix(sp: &SystemParams) -> Result<Matrix2<Complex64>> {
    let mut out = [0.0; 2];
    for (j, amp) in [sp.tweezers.amplitude_1, sp.tweezers.amplitude_2].iter().enumerate() {
        let a = local_recoil_rate(sp, amp, 12);
        let b = local_recoil_rate(sp, amp, 20);
        let err = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        if err > 1e-12 {
            return Err(Error::Accuracy {
                what: "recoil-rate quadrature",
                achieved: err,
                required: 1e-12,
            });
        }
        out[j] = b;
    }
    let d12 = cross_diffusion(coupling_constant_g(sp), sp.kd(), sp.relative_phase);
    Ok(Matrix2::new(
        Complex64::from(out[0]),
        d12,
        d12.conj(),
        Complex64::from(out[1]),
    ))
}

/// D₁₂ obtained by angular quadrature of the linearized Lindblad coefficients,
/// keeping the inter-particle phase exp(ik n·(r₂ − r₁)). Agrees with the
/// closed form up to O(1/kd) corrections.
pub fn cross_diffusion_quadrature(sp: &SystemParams) -> Complex64 {
    let tw = &sp.tweezers;
    let p = &sp.particle;
    let k = tw.wavenumber;
    let c2 = k.powi(3) * p.polarizability.powi(2) / (32.0 * PI * PI * EPSILON_0 * HBAR);
    let zpf2 = HBAR / (p.mass * sp.trap.mean);
    let kd = tw.kd();
    let rule = SphereRule::new(Vector3::x(), kd.ceil() as usize + 48, 16);
    let integral: Complex64 = rule.integrate(|n| {
        let weight = (k - k * n.z).powi(2);
        let phase = Complex64::new(0.0, kd * n.x).exp();
        ScatterDirection::pair(*n)
            .expect("unit vector")
            .iter()
            .map(|d| d.t.dotc(&tw.amplitude_1) * d.t.dotc(&tw.amplitude_2).conj())
            .sum::<Complex64>()
            * (weight * phase)
    });
    integral * (0.5 * c2 * zpf2)
}

/// Local recoil rate reduced by homodyne detection and squeezed-vacuum injection.
pub fn effective_recoil(d11: f64, sp: &SystemParams) -> f64 {
    let detection = 1.0 - sp.detection_efficiency;
    let squeezing = 1.0 - sp.squeezing_overlap.norm_sqr() * (1.0 - (-sp.squeezing).exp());
    d11 * detection * squeezing
}

/// All linearized rates for a physical configuration.
pub fn coupling_set(sp: &SystemParams) -> Result<CouplingSet> {
    sp.validate()?;
    let g = coupling_constant_g(sp);
    let (g_r, g_a) = rates(g, sp.kd(), sp.relative_phase);
    Ok(CouplingSet {
        g,
        kd: sp.kd(),
        g_r,
        g_a,
        diffusion: diffusion_matrix(sp)?,
        far_field_warning: sp.kd() < FAR_FIELD_KD,
    })
}
