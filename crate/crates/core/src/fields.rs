//! Microscopic optics: tweezer fields, the free-space dipole Green tensor,
//! optical potentials, photon-scattering amplitudes and mean forces.
//!
//! Everything here is strict SI. Positions are in metres, fields in V/m.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{EPSILON_0, HBAR};
use crate::error::{Error, Result};
use crate::quadrature::SphereRule;

pub type CVector3 = Vector3<Complex64>;
pub type CMatrix3 = Matrix3<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Scalar polarizability in C·m²/V.
    pub polarizability: f64,
    /// Mass in kg.
    pub mass: f64,
}

impl Particle {
    /// Homogeneous dielectric sphere of radius `radius` (m), relative permittivity
    /// `permittivity` and mass density `density` (kg/m³).
    pub fn dielectric_sphere(radius: f64, permittivity: f64, density: f64) -> Self {
        let volume = 4.0 / 3.0 * PI * radius.powi(3);
        Particle {
            polarizability: 3.0 * EPSILON_0 * volume * (permittivity - 1.0) / (permittivity + 2.0),
            mass: density * volume,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.polarizability >= 0.0 && self.polarizability.is_finite()) {
            return Err(Error::param("polarizability", "must be finite and non-negative"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::param("mass", "must be finite and positive"));
        }
        Ok(())
    }
}

/// Two identical focused tweezers whose foci sit at the origin and at `separation`·e_x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweezerPair {
    pub wavenumber: f64,
    pub waist: f64,
    pub rayleigh_range: f64,
    pub separation: f64,
    pub amplitude_1: CVector3,
    pub amplitude_2: CVector3,
    /// Polarization makes the angle π/2 − θ with the connecting axis e_x.
    pub polarization_angle: f64,
}

impl TweezerPair {
    /// Both tweezers linearly polarized along the same focal-plane direction.
    #[allow(clippy::too_many_arguments)]
    pub fn linear(
        wavenumber: f64,
        waist: f64,
        rayleigh_range: f64,
        separation: f64,
        field_1: f64,
        field_2: f64,
        phase_1: f64,
        phase_2: f64,
        polarization_angle: f64,
    ) -> Self {
        let e = polarization(polarization_angle);
        TweezerPair {
            wavenumber,
            waist,
            rayleigh_range,
            separation,
            amplitude_1: e.map(Complex64::from) * Complex64::from_polar(field_1, phase_1),
            amplitude_2: e.map(Complex64::from) * Complex64::from_polar(field_2, phase_2),
            polarization_angle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavenumber", self.wavenumber),
            ("waist", self.waist),
            ("rayleigh_range", self.rayleigh_range),
            ("separation", self.separation),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and positive"));
            }
        }
        Ok(())
    }

    pub fn kd(&self) -> f64 {
        self.wavenumber * self.separation
    }

    pub fn polarization(&self) -> Vector3<f64> {
        polarization(self.polarization_angle)
    }

    /// Relative tweezer phase φ₁ − φ₂ wrapped to (−π, π], if both amplitudes are nonzero.
    pub fn relative_phase(&self) -> Option<f64> {
        let e = self.polarization().map(Complex64::from);
        let p1 = e.dotc(&self.amplitude_1);
        let p2 = e.dotc(&self.amplitude_2);
        if p1.norm() == 0.0 || p2.norm() == 0.0 {
            return None;
        }
        Some(wrap_phase(p1.arg() - p2.arg()))
    }

    pub fn focus_2(&self) -> Vector3<f64> {
        Vector3::new(self.separation, 0.0, 0.0)
    }
}

/// Unit polarization at angle π/2 − θ to e_x in the focal plane.
pub fn polarization(theta: f64) -> Vector3<f64> {
    Vector3::new(theta.sin(), theta.cos(), 0.0)
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Gaussian tweezer envelope, normalized to one at the focus.
pub fn envelope(r: &Vector3<f64>, waist: f64, rayleigh_range: f64) -> Complex64 {
    let q = Complex64::new(1.0, r.z / rayleigh_range);
    let rho2 = r.x * r.x + r.y * r.y;
    (-rho2 / (waist * waist * q)).exp() / q
}

pub fn tweezer_field(r: &Vector3<f64>, tw: &TweezerPair) -> CVector3 {
    let plane = (I * tw.wavenumber * r.z).exp();
    let f1 = envelope(r, tw.waist, tw.rayleigh_range);
    let f2 = envelope(&(r - tw.focus_2()), tw.waist, tw.rayleigh_range);
    (tw.amplitude_1 * f1 + tw.amplitude_2 * f2) * plane
}

/// Free-space dipole Green tensor, including near-, intermediate- and far-field terms.
pub fn green_tensor(r: &Vector3<f64>, k: f64) -> Result<CMatrix3> {
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(Error::Domain("Green tensor is singular at r = 0".into()));
    }
    let rr = r * r.transpose();
    let id = Matrix3::<f64>::identity();
    let near = (rr * 3.0 - id * (dist * dist)) / dist.powi(5);
    let far = (id * (dist * dist) - rr) * (k * k / dist.powi(3));
    let phase = (I * k * dist).exp() / (4.0 * PI);
    let a = Complex64::new(1.0, -k * dist);
    Ok(CMatrix3::from_fn(|i, j| {
        phase * (a * near[(i, j)] + far[(i, j)])
    }))
}

fn fd_step(k: f64, separation: f64) -> f64 {
    (1e-6 / k).max(1e-9 * separation)
}

/// Central-difference gradient of a scalar function of position.
fn gradient<F: Fn(&Vector3<f64>) -> Result<f64>>(f: F, at: &Vector3<f64>, h: f64) -> Result<Vector3<f64>> {
    let mut g = Vector3::zeros();
    for a in 0..3 {
        let mut plus = *at;
        let mut minus = *at;
        plus[a] += h;
        minus[a] -= h;
        g[a] = (f(&plus)? - f(&minus)?) / (2.0 * h);
    }
    Ok(g)
}

fn field_gradient(at: &Vector3<f64>, tw: &TweezerPair, h: f64) -> [CVector3; 3] {
    std::array::from_fn(|a| {
        let mut plus = *at;
        let mut minus = *at;
        plus[a] += h;
        minus[a] -= h;
        (tweezer_field(&plus, tw) - tweezer_field(&minus, tw)) / Complex64::from(2.0 * h)
    })
}

fn check_distinct(r1: &Vector3<f64>, r2: &Vector3<f64>) -> Result<f64> {
    let sep = (r1 - r2).norm();
    if sep > 0.0 {
        Ok(sep)
    } else {
        Err(Error::Domain("particle positions coincide".into()))
    }
}

/// Mean optical binding force on particle 1 due to particle 2 (N).
pub fn binding_force(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    tw: &TweezerPair,
    p: &Particle,
) -> Result<Vector3<f64>> {
    let sep = check_distinct(r1, r2)?;
    let e2 = tweezer_field(r2, tw);
    let k = tw.wavenumber;
    let scalar = |x: &Vector3<f64>| -> Result<f64> {
        let g = green_tensor(&(x - r2), k)?;
        Ok(tweezer_field(x, tw).dotc(&(g * e2)).re)
    };
    let grad = gradient(scalar, r1, fd_step(k, sep))?;
    Ok(grad * (p.polarizability * p.polarizability / (2.0 * EPSILON_0)))
}

/// Time-averaged dipole potential of both particles (J).
pub fn dipole_potential(r1: &Vector3<f64>, r2: &Vector3<f64>, tw: &TweezerPair, p: &Particle) -> f64 {
    let i1 = tweezer_field(r1, tw).norm_squared();
    let i2 = tweezer_field(r2, tw).norm_squared();
    -p.polarizability / 4.0 * (i1 + i2)
}

/// Conservative binding potential from the real part of the Green tensor (J).
pub fn binding_potential(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    tw: &TweezerPair,
    p: &Particle,
) -> Result<f64> {
    check_distinct(r1, r2)?;
    let re_g = green_tensor(&(r1 - r2), tw.wavenumber)?.map(|z| Complex64::from(z.re));
    let e1 = tweezer_field(r1, tw);
    let e2 = tweezer_field(r2, tw);
    // Re G is symmetric and even, so the (1,2) and (2,1) terms are complex conjugates.
    let sum = e2.dotc(&(re_g * e1)) + e1.dotc(&(re_g * e2));
    Ok(-p.polarizability * p.polarizability / (4.0 * EPSILON_0) * sum.re)
}

/// Scattering direction with a transverse polarization vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterDirection {
    pub n: Vector3<f64>,
    pub s: u8,
    pub t: CVector3,
}

impl ScatterDirection {
    /// Polarization 1 is the polar unit vector θ̂ of `n`, polarization 2 the azimuthal φ̂.
    /// At the poles the azimuth is taken as zero.
    pub fn new(n: Vector3<f64>, s: u8) -> Result<Self> {
        let n = n
            .try_normalize(0.0)
            .ok_or_else(|| Error::param("n", "direction must be nonzero"))?;
        let theta = n.z.clamp(-1.0, 1.0).acos();
        let phi = n.y.atan2(n.x);
        let t = match s {
            1 => Vector3::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), -theta.sin()),
            2 => Vector3::new(-phi.sin(), phi.cos(), 0.0),
            _ => return Err(Error::param("s", "polarization index must be 1 or 2")),
        };
        Ok(ScatterDirection {
            n,
            s,
            t: t.map(Complex64::from),
        })
    }

    /// Both polarizations for direction `n`.
    pub fn pair(n: Vector3<f64>) -> Result<[ScatterDirection; 2]> {
        Ok([Self::new(n, 1)?, Self::new(n, 2)?])
    }
}

fn amplitude_prefactor(k: f64, alpha: f64) -> f64 {
    (k.powi(3) / (2.0 * EPSILON_0 * HBAR)).sqrt() * alpha / (4.0 * PI)
}

/// Scattering amplitude of an arbitrary set of point dipoles into `dir` (units s^-1/2).
pub fn lindblad_amplitude_for(
    dir: &ScatterDirection,
    positions: &[Vector3<f64>],
    tw: &TweezerPair,
    p: &Particle,
) -> Complex64 {
    let k = tw.wavenumber;
    let sum: Complex64 = positions
        .iter()
        .map(|r| dir.t.dotc(&tweezer_field(r, tw)) * (-I * k * dir.n.dot(r)).exp())
        .sum();
    sum * amplitude_prefactor(k, p.polarizability)
}

/// Coherent two-particle scattering amplitude.
pub fn lindblad_amplitude(
    dir: &ScatterDirection,
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    tw: &TweezerPair,
    p: &Particle,
) -> Complex64 {
    lindblad_amplitude_for(dir, &[*r1, *r2], tw, p)
}

/// Mean force on particle 1 split by physical origin (N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrenfestForce {
    /// −∂V/∂r₁ from the dipole potential.
    pub trap_gradient: Vector3<f64>,
    /// Single-particle radiation pressure (self term of the dissipator).
    pub radiation_pressure: Vector3<f64>,
    /// −∂V_opt/∂r₁.
    pub conservative_binding: Vector3<f64>,
    /// Two-particle interference term of the dissipator.
    pub dissipative_binding: Vector3<f64>,
    /// Relative change of the dissipator terms between the two quadrature orders.
    pub quadrature_error: f64,
}

impl EhrenfestForce {
    /// Force mediated by the second particle; equals the classical binding force.
    pub fn interaction(&self) -> Vector3<f64> {
        self.conservative_binding + self.dissipative_binding
    }

    pub fn total(&self) -> Vector3<f64> {
        self.trap_gradient + self.radiation_pressure + self.interaction()
    }
}

/// Quadrature tolerance on the dissipator contribution to the mean force.
pub const EHRENFEST_QUADRATURE_TOL: f64 = 1e-9;

/// Mean force on point particle 1 obtained from the structure of the full
/// master equation: potential gradients plus the dissipator term
/// ħ Σ_s ∫d²n Im(L* ∂L/∂r₁), evaluated by angular quadrature.
pub fn ehrenfest_force(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    tw: &TweezerPair,
    p: &Particle,
) -> Result<EhrenfestForce> {
    let sep = check_distinct(r1, r2)?;
    let k = tw.wavenumber;
    let h = fd_step(k, sep);

    let trap_gradient = -gradient(|x| Ok(dipole_potential(x, r2, tw, p)), r1, h)?;
    let conservative_binding = -gradient(|x| binding_potential(x, r2, tw, p), r1, h)?;

    let e1 = tweezer_field(r1, tw);
    let e2 = tweezer_field(r2, tw);
    let de1 = field_gradient(r1, tw, h);
    let u = r1 - r2;
    let c2 = amplitude_prefactor(k, p.polarizability).powi(2);

    let integrate = |polar: usize| -> (Vector3<f64>, Vector3<f64>) {
        let rule = SphereRule::new(u, polar, 16);
        let mut own = Vector3::zeros();
        let mut cross = Vector3::zeros();
        for pt in &rule.points {
            let n = pt.n;
            let phase = (-I * k * n.dot(&u)).exp();
            for dir in ScatterDirection::pair(n).expect("unit vector") {
                // Amplitudes stripped of the common factor exp(-ik n·r₂).
                let a1 = dir.t.dotc(&e1) * phase;
                let a2 = dir.t.dotc(&e2);
                for ax in 0..3 {
                    let da1 = (dir.t.dotc(&de1[ax]) - I * k * n[ax] * dir.t.dotc(&e1)) * phase;
                    own[ax] += pt.weight * (a1.conj() * da1).im;
                    cross[ax] += pt.weight * (a2.conj() * da1).im;
                }
            }
        }
        (own * (HBAR * c2), cross * (HBAR * c2))
    };

    let base = (k * sep).ceil() as usize + 48;
    let (own_a, cross_a) = integrate(base);
    let (own_b, cross_b) = integrate(base + base / 2 + 16);
    let scale = own_b.norm().max(cross_b.norm()).max(f64::MIN_POSITIVE);
    let err = ((own_a - own_b).norm() + (cross_a - cross_b).norm()) / scale;
    if err > EHRENFEST_QUADRATURE_TOL && scale > 0.0 {
        return Err(Error::Accuracy {
            what: "dissipator angular quadrature",
            achieved: err,
            required: EHRENFEST_QUADRATURE_TOL,
        });
    }
    Ok(EhrenfestForce {
        trap_gradient,
        radiation_pressure: own_b,
        conservative_binding,
        dissipative_binding: cross_b,
        quadrature_error: err,
    })
}
