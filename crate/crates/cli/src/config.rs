//! TOML run configuration. Physical keys carry their SI unit in the name.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Matrix2;
use num_complex::Complex64;
use optibind_core::linearize::{coupling_set, CouplingSet, SystemParams, TrapFrequencies};
use optibind_core::{MeasurementConfig, Particle, SdeScheme, TweezerPair};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
    #[serde(default)]
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub trajectories: TrajectoriesSection,
    #[serde(default)]
    pub squeeze: SqueezeSection,
    #[serde(default)]
    pub entanglement: EntanglementSection,
    #[serde(default)]
    pub reheating: ReheatingSection,
    #[serde(default)]
    pub phase_diagram: PhaseDiagramSection,
    #[serde(default)]
    pub ep_scan: EpScanSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

/// Tweezer pair and particle in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub wavelength_m: f64,
    pub waist_m: f64,
    pub rayleigh_range_m: f64,
    pub separation_d_m: f64,
    pub field_1_v_per_m: f64,
    pub field_2_v_per_m: f64,
    #[serde(default)]
    pub relative_phase_phi_rad: f64,
    #[serde(default)]
    pub polarization_angle_theta_rad: f64,
    pub particle_radius_m: f64,
    pub relative_permittivity: f64,
    pub density_kg_per_m3: f64,
    /// Checked against the field-derived value when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_frequency_omega_rad_per_s: Option<f64>,
    #[serde(default)]
    pub squeeze_r: f64,
    #[serde(default)]
    pub overlap_zeta_re: f64,
    #[serde(default)]
    pub overlap_zeta_im: f64,
    #[serde(default)]
    pub retain_gouy: bool,
}

/// Linearized rates given directly, either through (G, kd, φ) or (g_r, g_a, Re D₁₂).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub mean_frequency_omega_rad_per_s: f64,
    #[serde(default)]
    pub detuning_delta_omega_rad_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_g_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_phase_phi_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_r_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_a_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re_d12_rad_per_s: Option<f64>,
    pub d11_rad_per_s: f64,
    pub d22_rad_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementSection {
    pub eta_det: f64,
    pub lo_phase_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_rad_per_s: Option<f64>,
    pub overlap: [[f64; 2]; 2],
}

impl Default for MeasurementSection {
    fn default() -> Self {
        MeasurementSection { eta_det: 0.0, lo_phase_rad: 0.0, gamma_rad_per_s: None, overlap: [[1.0, 0.0], [0.0, 1.0]] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Rotating,
}

/// Initial coherent amplitudes on top of thermal occupations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub alpha_1: [f64; 2],
    pub alpha_2: [f64; 2],
    pub thermal_n1: f64,
    pub thermal_n2: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState { alpha_1: [0.0; 2], alpha_2: [0.0; 2], thermal_n1: 0.0, thermal_n2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub t_final_s: f64,
    pub samples: usize,
    pub frame: Frame,
    pub local_damping_rad_per_s: f64,
    pub initial: InitialState,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection { t_final_s: 1.0, samples: 100, frame: Frame::Lab, local_damping_rad_per_s: 0.0, initial: InitialState::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Langevin,
    Homodyne,
    Locc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoriesSection {
    pub kind: TrajectoryKind,
    pub n_traj: usize,
    pub t_final_s: f64,
    pub samples: usize,
    /// Defaults to 10⁻³·min(1/ω, 1/D₁₁).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    pub scheme: SdeScheme,
    pub abort_quanta: f64,
    pub initial: InitialState,
}

impl Default for TrajectoriesSection {
    fn default() -> Self {
        TrajectoriesSection {
            kind: TrajectoryKind::Langevin,
            n_traj: 100,
            t_final_s: 1.0,
            samples: 10,
            dt_s: None,
            scheme: SdeScheme::Ito,
            abort_quanta: 1e6,
            initial: InitialState::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqueezeSection {
    pub t_final_s: f64,
    pub samples: usize,
    /// Replace D₁₁, D₂₂ by the detection- and squeezing-reduced recoil rates.
    pub use_effective_recoil: bool,
}

impl Default for SqueezeSection {
    fn default() -> Self {
        SqueezeSection { t_final_s: 1.0, samples: 100, use_effective_recoil: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntanglementSection {
    pub configurations: usize,
    pub kd_min: f64,
    pub kd_max: f64,
    /// Local damping drawn uniformly in these multiples of G/kd.
    pub damping_min: f64,
    pub damping_max: f64,
    /// Relative spread of the second tweezer amplitude (physical configs only).
    pub field_spread: f64,
}

impl Default for EntanglementSection {
    fn default() -> Self {
        EntanglementSection { configurations: 1000, kd_min: 10.0, kd_max: 300.0, damping_min: 2.0, damping_max: 4.0, field_spread: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReheatingSection {
    /// Langevin trajectories for the fitted rates; 0 reports the analytic split only.
    pub n_traj: usize,
    pub t_final_s: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
}

impl Default for ReheatingSection {
    fn default() -> Self {
        ReheatingSection { n_traj: 0, t_final_s: 1.0, samples: 10, dt_s: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagramKind {
    /// Regime flags over relative phase φ and kd.
    Regime,
    /// PT classification over g_a/g_r and δω/g_r.
    Pt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseDiagramSection {
    pub kind: DiagramKind,
    pub phi_points: usize,
    pub kd_min: f64,
    pub kd_max: f64,
    pub kd_points: usize,
    pub g_a_over_g_r: [f64; 2],
    pub g_a_points: usize,
    pub detuning_over_g_r: [f64; 2],
    pub detuning_points: usize,
}

impl Default for PhaseDiagramSection {
    fn default() -> Self {
        PhaseDiagramSection {
            kind: DiagramKind::Regime,
            phi_points: 100,
            kd_min: 10.0,
            kd_max: 20.0,
            kd_points: 100,
            g_a_over_g_r: [-3.0, 3.0],
            g_a_points: 100,
            detuning_over_g_r: [-10.0, 10.0],
            detuning_points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpScanSection {
    /// |g_a|/|g_r| values scanned at the configured g_r.
    pub g_a_over_g_r: [f64; 2],
    pub points: usize,
}

impl Default for EpScanSection {
    fn default() -> Self {
        EpScanSection { g_a_over_g_r: [1.05, 3.0], points: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSection {
    pub ep_relative: f64,
    pub frequency_consistency: f64,
    pub entanglement: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection { ep_relative: 1e-8, frequency_consistency: 1e-6, entanglement: 1e-12 }
    }
}

/// Rates and frequencies every subcommand works from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cs: CouplingSet,
    pub trap: TrapFrequencies,
    pub system: Option<SystemParams>,
    pub measurement: MeasurementConfig,
}

/// Physical parameters of a `[system]` section with detection efficiency `eta`.
pub fn build_system(s: &SystemSection, eta: f64) -> Result<SystemParams, CliError> {
    let k = 2.0 * PI / s.wavelength_m;
    let tw = TweezerPair::linear(
        k,
        s.waist_m,
        s.rayleigh_range_m,
        s.separation_d_m,
        s.field_1_v_per_m,
        s.field_2_v_per_m,
        s.relative_phase_phi_rad,
        0.0,
        s.polarization_angle_theta_rad,
    );
    let particle = Particle::dielectric_sphere(s.particle_radius_m, s.relative_permittivity, s.density_kg_per_m3);
    let mut sp = SystemParams::from_tweezers(tw, particle)?;
    sp.detection_efficiency = eta;
    sp.squeezing = s.squeeze_r;
    sp.squeezing_overlap = Complex64::new(s.overlap_zeta_re, s.overlap_zeta_im);
    sp.retain_gouy = s.retain_gouy;
    sp.validate()?;
    Ok(sp)
}

pub(crate) fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let bytes = std::fs::read(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| config_error(format!("{}: not UTF-8", path.display())))?;
        Ok((Self::parse(&text)?, hex::encode(Sha256::digest(&bytes))))
    }

    fn check(&self) -> Result<(), CliError> {
        match (&self.system, &self.rates) {
            (Some(_), Some(_)) => return Err(config_error("give either [system] or [rates], not both")),
            (None, None) => return Err(config_error("missing [system] or [rates] section")),
            _ => {}
        }
        if let Some(r) = &self.rates {
            let physical = [r.coupling_g_rad_per_s, r.kd, r.relative_phase_phi_rad];
            let direct = [r.g_r_rad_per_s, r.g_a_rad_per_s, r.re_d12_rad_per_s];
            let full = |v: &[Option<f64>; 3]| v.iter().all(Option::is_some);
            let empty = |v: &[Option<f64>; 3]| v.iter().all(Option::is_none);
            if !((full(&physical) && empty(&direct)) || (empty(&physical) && full(&direct))) {
                return Err(config_error(
                    "[rates] needs either coupling_g_rad_per_s, kd, relative_phase_phi_rad or g_r_rad_per_s, g_a_rad_per_s, re_d12_rad_per_s",
                ));
            }
        }
        let positive = |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(config_error(format!("{name} must be positive"))) };
        positive("evolve.t_final_s", self.evolve.t_final_s)?;
        positive("trajectories.t_final_s", self.trajectories.t_final_s)?;
        positive("squeeze.t_final_s", self.squeeze.t_final_s)?;
        positive("reheating.t_final_s", self.reheating.t_final_s)?;
        for (name, v) in [("trajectories.dt_s", self.trajectories.dt_s), ("reheating.dt_s", self.reheating.dt_s)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if self.entanglement.kd_min > self.entanglement.kd_max || self.entanglement.damping_min > self.entanglement.damping_max {
            return Err(config_error("entanglement ranges must have min <= max"));
        }
        Ok(())
    }

    pub fn measurement_config(&self) -> MeasurementConfig {
        let m = &self.measurement;
        MeasurementConfig {
            gamma: m.gamma_rad_per_s,
            eta_det: m.eta_det,
            lo_phase: m.lo_phase_rad,
            overlap: Matrix2::new(m.overlap[0][0], m.overlap[0][1], m.overlap[1][0], m.overlap[1][1]),
        }
    }

    pub fn system_params(&self) -> Result<Option<SystemParams>, CliError> {
        let Some(s) = &self.system else { return Ok(None) };
        let sp = build_system(s, self.measurement.eta_det)?;
        if let Some(w) = s.mean_frequency_omega_rad_per_s {
            let derived = sp.trap.mean;
            if (w - derived).abs() > self.tolerances.frequency_consistency * derived {
                return Err(config_error(format!(
                    "system.mean_frequency_omega_rad_per_s = {w:e} disagrees with the field-derived {derived:e}"
                )));
            }
        }
        Ok(Some(sp))
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let measurement = self.measurement_config();
        measurement.validate()?;
        if let Some(sp) = self.system_params()? {
            return Ok(Resolved { cs: coupling_set(&sp)?, trap: sp.trap, system: Some(sp), measurement });
        }
        let r = self.rates.as_ref().expect("checked in parse");
        let trap = TrapFrequencies::new(r.mean_frequency_omega_rad_per_s, r.detuning_delta_omega_rad_per_s);
        trap.validate()?;
        let cs = match (r.coupling_g_rad_per_s, r.kd, r.relative_phase_phi_rad) {
            (Some(g), Some(kd), Some(phi)) => CouplingSet::from_rates(g, kd, phi, r.d11_rad_per_s, r.d22_rad_per_s),
            _ => CouplingSet::from_couplings(
                r.g_r_rad_per_s.unwrap_or(0.0),
                r.g_a_rad_per_s.unwrap_or(0.0),
                r.d11_rad_per_s,
                r.d22_rad_per_s,
                r.re_d12_rad_per_s.unwrap_or(0.0),
            ),
        };
        cs.validate().map_err(|e| config_error(format!("[rates]: {e}")))?;
        Ok(Resolved { cs, trap, system: None, measurement })
    }
}
