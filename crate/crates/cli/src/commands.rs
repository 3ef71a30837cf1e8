//! Subcommand implementations. Each returns its tables, a JSON summary for the
//! manifest and a short text report.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use optibind_core::gaussian::evolve_gaussian;
use optibind_core::linearize::{coupling_set, effective_recoil};
use optibind_core::modes::{classify_regime, exceptional_points, exceptional_points_closed_form, mode_spectrum};
use optibind_core::stochastic::homodyne::homodyne_trajectory;
use optibind_core::stochastic::langevin::{ensemble_moments, langevin_trajectories, LangevinOptions};
use optibind_core::stochastic::locc::{locc_trajectory, plan_feedforward, LoccOptions};
use optibind_core::stochastic::squeeze::{squeezing_drive, stationary_squashed_variance};
use optibind_core::{
    AdaptiveOptions, CouplingSet, DriftDiffusion, EnsembleMoments, GaussianState, NoiseModel, PtPhase, RegimeLabel,
    TrajectoryRecord, TrapFrequencies,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{build_system, config_error, DiagramKind, Frame, InitialState, Resolved, RunConfig, TrajectoryKind};
use crate::output::Table;
use crate::{CliError, Command};

/// Everything a subcommand produces.
#[derive(Debug)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Extra JSON documents written next to the tables, as (file name, text).
    pub documents: Vec<(String, String)>,
    pub summary: Value,
    pub report: String,
    /// Set when outputs are complete but a numerical check failed.
    pub tolerance_failure: Option<String>,
}

impl Outcome {
    fn new(tables: Vec<Table>, summary: Value, report: String) -> Self {
        Outcome { tables, documents: Vec::new(), summary, report, tolerance_failure: None }
    }
}

pub fn dispatch(cmd: &Command, cfg: &RunConfig, seed: u64, hash: &str) -> Result<Outcome, CliError> {
    let r = cfg.resolve()?;
    match cmd {
        Command::Rates(_) => rates(&r),
        Command::PhaseDiagram(_) => phase_diagram(cfg, &r),
        Command::Evolve(_) => evolve(cfg, &r),
        Command::Trajectories(_) => trajectories(cfg, &r, seed, hash),
        Command::Squeeze(_) => squeeze(cfg, &r),
        Command::Entanglement(_) => entanglement(cfg, &r, seed),
        Command::Reheating(_) => reheating(cfg, &r, seed, hash),
        Command::EpScan(_) => ep_scan(cfg, &r),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn sample_times(t_final: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|k| t_final * k as f64 / samples.max(1) as f64).collect()
}

/// Default integration step 10⁻³·min(1/ω, 1/D₁₁).
fn default_dt(cs: &CouplingSet, trap: &TrapFrequencies) -> f64 {
    1e-3 * (1.0 / trap.mean).min(1.0 / cs.d11())
}

fn initial_state(init: &InitialState) -> Result<GaussianState, CliError> {
    if init.thermal_n1 < 0.0 || init.thermal_n2 < 0.0 {
        return Err(config_error("thermal occupations must be non-negative"));
    }
    let coherent = GaussianState::coherent(
        Complex64::new(init.alpha_1[0], init.alpha_1[1]),
        Complex64::new(init.alpha_2[0], init.alpha_2[1]),
    );
    Ok(GaussianState::new(coherent.mean, GaussianState::thermal(init.thermal_n1, init.thermal_n2).cov)?)
}

/// Rates of the configured geometry moved to phase `phi` and separation `kd`.
fn rates_at(cfg: &RunConfig, r: &Resolved, kd: f64, phi: f64, field_scale: f64) -> Result<(CouplingSet, TrapFrequencies), CliError> {
    if let Some(s) = &cfg.system {
        let mut s = s.clone();
        s.separation_d_m = kd * s.wavelength_m / (2.0 * PI);
        s.relative_phase_phi_rad = phi;
        s.field_2_v_per_m = s.field_1_v_per_m * field_scale;
        let sp = build_system(&s, 0.0)?;
        return Ok((coupling_set(&sp)?, sp.trap));
    }
    let rs = cfg.rates.as_ref().expect("resolved configs carry one rate source");
    if rs.coupling_g_rad_per_s.is_none() {
        return Err(config_error("this subcommand scans kd and φ; [rates] must give coupling_g_rad_per_s, kd and relative_phase_phi_rad"));
    }
    Ok((CouplingSet::from_rates(r.cs.g, kd, phi, r.cs.d11(), r.cs.d22()), r.trap))
}

/// Machine-readable result of `rates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub couplings: CouplingSet,
    pub trap: TrapFrequencies,
    pub regime: RegimeLabel,
    /// |g_r| = |g_a|: one particle drives the other without back-action.
    pub maximally_unidirectional: bool,
    pub omega_plus: [f64; 2],
    pub omega_minus: [f64; 2],
    pub pt_phase: PtPhase,
    pub heating_common: f64,
    pub heating_differential: f64,
    pub positivity_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_d11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_d22: Option<f64>,
}

fn rates(r: &Resolved) -> Result<Outcome, CliError> {
    let cs = &r.cs;
    let label = classify_regime(cs);
    let spectrum = mode_spectrum(cs, &r.trap);
    let (d_plus, d_minus) = cs.normal_mode_heating();
    let scale = cs.g_r.abs().max(cs.g_a.abs());
    let report = RatesReport {
        couplings: *cs,
        trap: r.trap,
        regime: label,
        maximally_unidirectional: scale > 0.0 && (cs.g_r.abs() - cs.g_a.abs()).abs() <= 1e-12 * scale,
        omega_plus: [spectrum.omega_plus.re, spectrum.omega_plus.im],
        omega_minus: [spectrum.omega_minus.re, spectrum.omega_minus.im],
        pt_phase: spectrum.phase,
        heating_common: d_plus,
        heating_differential: d_minus,
        positivity_margin: cs.positivity_margin(),
        effective_d11: r.system.as_ref().map(|sp| effective_recoil(cs.d11(), sp)),
        effective_d22: r.system.as_ref().map(|sp| effective_recoil(cs.d22(), sp)),
    };
    let d12 = cs.d12();
    let mut t = Table::new("rates", &["quantity", "value", "unit"]);
    let rows: Vec<(&str, f64, &str)> = vec![
        ("coupling_g", cs.g, "rad/s"),
        ("kd", cs.kd, "1"),
        ("g_r", cs.g_r, "rad/s"),
        ("g_a", cs.g_a, "rad/s"),
        ("d11", cs.d11(), "1/s"),
        ("d22", cs.d22(), "1/s"),
        ("re_d12", d12.re, "1/s"),
        ("im_d12", d12.im, "1/s"),
        ("freq_shift_1", cs.freq_shift_1(), "rad/s"),
        ("freq_shift_2", cs.freq_shift_2(), "rad/s"),
        ("positivity_margin", report.positivity_margin, "1/s^2"),
        ("mean_frequency", r.trap.mean, "rad/s"),
        ("detuning", r.trap.detuning, "rad/s"),
        ("re_omega_plus", report.omega_plus[0], "rad/s"),
        ("im_omega_plus", report.omega_plus[1], "rad/s"),
        ("re_omega_minus", report.omega_minus[0], "rad/s"),
        ("im_omega_minus", report.omega_minus[1], "rad/s"),
        ("heating_common", d_plus, "1/s"),
        ("heating_differential", d_minus, "1/s"),
    ];
    for (q, v, u) in rows {
        t.push(vec![q.into(), v.into(), u.into()]);
    }
    if let (Some(a), Some(b)) = (report.effective_d11, report.effective_d22) {
        t.push(vec!["effective_d11".into(), a.into(), "1/s".into()]);
        t.push(vec!["effective_d22".into(), b.into(), "1/s".into()]);
    }
    let mut text = format!(
        "G = {:e} rad/s, kd = {}\ng_r = {:e}, g_a = {:e} rad/s\nD11 = {:e}, D22 = {:e}, D12 = {:e} + {:e}i 1/s\n",
        cs.g, cs.kd, cs.g_r, cs.g_a, cs.d11(), cs.d22(), d12.re, d12.im
    );
    let flags: Vec<&str> = [
        (label.reciprocal, "reciprocal"),
        (label.directional, "directional"),
        (label.antireciprocal, "antireciprocal"),
        (label.recoil_correlated, "recoil-correlated"),
    ]
    .iter()
    .filter(|f| f.0)
    .map(|f| f.1)
    .collect();
    text += &format!("regime: {} (flags: {})\n", label.dominant, if flags.is_empty() { "none".into() } else { flags.join(", ") });
    if report.maximally_unidirectional {
        text += "maximally unidirectional: |g_r| = |g_a|\n";
    }
    if cs.far_field_warning {
        text += "warning: kd is small for the far-field expansion\n";
    }
    let doc = serde_json::to_string_pretty(&report)? + "\n";
    let summary = serde_json::to_value(&report)?;
    let mut out = Outcome::new(vec![t], summary, text);
    out.documents.push(("rates.json".into(), doc));
    Ok(out)
}

fn spectrum_cells(cs: &CouplingSet, trap: &TrapFrequencies) -> [f64; 4] {
    let s = mode_spectrum(cs, trap);
    [s.omega_plus.re, s.omega_plus.im, s.omega_minus.re, s.omega_minus.im]
}

fn phase_diagram(cfg: &RunConfig, r: &Resolved) -> Result<Outcome, CliError> {
    let pd = &cfg.phase_diagram;
    match pd.kind {
        DiagramKind::Regime => {
            let phis: Vec<f64> = (0..pd.phi_points).map(|i| -PI + 2.0 * PI * (i + 1) as f64 / pd.phi_points as f64).collect();
            let kds = linspace(pd.kd_min, pd.kd_max, pd.kd_points);
            let field_ratio = cfg.system.as_ref().map_or(1.0, |s| s.field_2_v_per_m / s.field_1_v_per_m);
            let cells = (0..phis.len() * kds.len())
                .into_par_iter()
                .map(|i| {
                    let (phi, kd) = (phis[i / kds.len()], kds[i % kds.len()]);
                    let (cs, trap) = rates_at(cfg, r, kd, phi, field_ratio)?;
                    Ok((phi, kd, cs, classify_regime(&cs), spectrum_cells(&cs, &trap), mode_spectrum(&cs, &trap).phase))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let mut t = Table::new(
                "phase_diagram",
                &[
                    "phi_rad", "kd", "g_r", "g_a", "re_d12", "reciprocal", "directional", "antireciprocal",
                    "recoil_correlated", "dominant", "re_omega_plus", "im_omega_plus", "re_omega_minus", "im_omega_minus",
                    "pt_phase",
                ],
            );
            let mut counts = std::collections::BTreeMap::<String, usize>::new();
            for (phi, kd, cs, l, w, phase) in &cells {
                *counts.entry(l.dominant.to_string()).or_default() += 1;
                t.push(vec![
                    (*phi).into(),
                    (*kd).into(),
                    cs.g_r.into(),
                    cs.g_a.into(),
                    cs.d12().re.into(),
                    l.reciprocal.into(),
                    l.directional.into(),
                    l.antireciprocal.into(),
                    l.recoil_correlated.into(),
                    l.dominant.as_str().into(),
                    w[0].into(),
                    w[1].into(),
                    w[2].into(),
                    w[3].into(),
                    phase.to_string().into(),
                ]);
            }
            let text = format!("{} cells; dominant regimes {:?}\n", cells.len(), counts);
            Ok(Outcome::new(vec![t], json!({ "kind": "regime", "cells": cells.len(), "dominant_counts": counts }), text))
        }
        DiagramKind::Pt => {
            let g_r = r.cs.g_r;
            if g_r == 0.0 {
                return Err(config_error("the PT diagram is scaled by g_r, which vanishes for this configuration"));
            }
            let xs = linspace(pd.g_a_over_g_r[0], pd.g_a_over_g_r[1], pd.g_a_points);
            let ys = linspace(pd.detuning_over_g_r[0], pd.detuning_over_g_r[1], pd.detuning_points);
            let cells: Vec<(f64, f64, [f64; 4], PtPhase)> = (0..xs.len() * ys.len())
                .into_par_iter()
                .map(|i| {
                    let (x, y) = (xs[i / ys.len()], ys[i % ys.len()]);
                    let cs = CouplingSet::from_couplings(g_r, x * g_r, 0.0, 0.0, 0.0);
                    let trap = TrapFrequencies::new(r.trap.mean, y * g_r);
                    (x, y, spectrum_cells(&cs, &trap), mode_spectrum(&cs, &trap).phase)
                })
                .collect();
            let mut t = Table::new(
                "pt_diagram",
                &["g_a_over_g_r", "detuning_over_g_r", "re_omega_plus", "im_omega_plus", "re_omega_minus", "im_omega_minus", "pt_phase"],
            );
            let mut broken = 0usize;
            for (x, y, w, phase) in &cells {
                broken += usize::from(*phase == PtPhase::Broken);
                t.push(vec![(*x).into(), (*y).into(), w[0].into(), w[1].into(), w[2].into(), w[3].into(), phase.to_string().into()]);
            }
            let text = format!("{} cells, {} PT-broken\n", cells.len(), broken);
            Ok(Outcome::new(vec![t], json!({ "kind": "pt", "cells": cells.len(), "broken": broken, "g_r": g_r }), text))
        }
    }
}

const COV_COLUMNS: [(usize, usize, &str); 10] = [
    (0, 0, "cov_z1z1"),
    (0, 1, "cov_z1p1"),
    (0, 2, "cov_z1z2"),
    (0, 3, "cov_z1p2"),
    (1, 1, "cov_p1p1"),
    (1, 2, "cov_p1z2"),
    (1, 3, "cov_p1p2"),
    (2, 2, "cov_z2z2"),
    (2, 3, "cov_z2p2"),
    (3, 3, "cov_p2p2"),
];

fn evolve(cfg: &RunConfig, r: &Resolved) -> Result<Outcome, CliError> {
    let ev = &cfg.evolve;
    let initial = initial_state(&ev.initial)?;
    let dd = match ev.frame {
        Frame::Lab => DriftDiffusion::lab_frame(&r.cs, &r.trap),
        Frame::Rotating => DriftDiffusion::rotating_frame(&r.cs, &r.trap),
    }
    .with_local_damping(ev.local_damping_rad_per_s);
    let mut columns = vec!["t_s", "mean_z1", "mean_p1", "mean_z2", "mean_p2"];
    columns.extend(COV_COLUMNS.iter().map(|c| c.2));
    columns.extend(["n1", "n2", "purity", "log_negativity"]);
    let mut t = Table::new("evolve", &columns);
    let mut max_en: f64 = 0.0;
    let mut last = initial.clone();
    for time in sample_times(ev.t_final_s, ev.samples) {
        let st = evolve_gaussian(&initial, &dd, time)?;
        let en = st.log_negativity()?;
        max_en = max_en.max(en);
        let mut row = vec![time.into()];
        row.extend(st.mean.iter().map(|&v| v.into()));
        row.extend(COV_COLUMNS.iter().map(|&(a, b, _)| st.cov[(a, b)].into()));
        row.extend([st.occupation(0).into(), st.occupation(1).into(), st.purity().into(), en.into()]);
        t.push(row);
        last = st;
    }
    let text = format!(
        "t = {:e} s: n1 = {:e}, n2 = {:e}, log-negativity {:e} (max {:e})\n",
        ev.t_final_s,
        last.occupation(0),
        last.occupation(1),
        last.log_negativity()?,
        max_en
    );
    let summary = json!({
        "frame": ev.frame,
        "final_n1": last.occupation(0),
        "final_n2": last.occupation(1),
        "final_log_negativity": last.log_negativity()?,
        "max_log_negativity": max_en,
        "spectral_abscissa": dd.spectral_abscissa(),
    });
    Ok(Outcome::new(vec![t], summary, text))
}

fn trajectory_table(records: &[TrajectoryRecord]) -> Table {
    let mut t = Table::new(
        "trajectories",
        &["traj", "t_s", "z1", "p1", "z2", "p2", "signal_1", "signal_2", "aborted"],
    );
    for rec in records {
        for k in 0..rec.times.len() {
            let mut row = vec![rec.index.into(), rec.times[k].into()];
            row.extend(rec.means[k].iter().map(|&v| v.into()));
            let y = rec.signals.get(k).map_or([f64::NAN; 2], |s| [s[0], s[1]]);
            row.extend([y[0].into(), y[1].into(), rec.aborted_at.is_some().into()]);
            t.push(row);
        }
    }
    t
}

/// Ensemble statistics at each sample time compared with the unconditional
/// moments `reference`.
fn ensemble_table(times: &[f64], ensemble: &[EnsembleMoments], reference: &[GaussianState]) -> (Table, f64) {
    let names = ["z1", "p1", "z2", "p2"];
    let mut columns = vec!["t_s".to_string(), "samples".to_string()];
    for prefix in ["mean", "mean_se", "ref_mean", "second", "second_se", "ref_second"] {
        columns.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    }
    columns.push("max_z".into());
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = Table::new("ensemble", &cols);
    let mut worst: f64 = 0.0;
    for ((time, e), st) in times.iter().zip(ensemble).zip(reference) {
        let z = e.max_z_score(st, 1e-12);
        if *time > 0.0 {
            worst = worst.max(z);
        }
        let second_ref: Matrix4<f64> = st.second_moments();
        let mut row = vec![(*time).into(), e.samples.into()];
        for v in [&e.mean, &e.mean_se, &st.mean] {
            row.extend(v.iter().map(|&x| x.into()));
        }
        for m in [&e.second, &e.second_se, &second_ref] {
            row.extend((0..4).map(|a| m[(a, a)].into()));
        }
        row.push(z.into());
        t.push(row);
    }
    (t, worst)
}

fn conditional_ensemble(records: &[TrajectoryRecord]) -> Vec<EnsembleMoments> {
    (0..records[0].times.len())
        .map(|k| {
            let pts: Vec<Vector4<f64>> = records.iter().map(|r| r.means[k]).collect();
            EnsembleMoments::from_samples(&pts, Some(&records[0].covariances[k]))
        })
        .collect()
}

fn trajectories(cfg: &RunConfig, r: &Resolved, seed: u64, hash: &str) -> Result<Outcome, CliError> {
    let tc = &cfg.trajectories;
    if tc.n_traj == 0 || tc.samples == 0 {
        return Err(config_error("trajectories.n_traj and trajectories.samples must be positive"));
    }
    let initial = initial_state(&tc.initial)?;
    let dt = tc.dt_s.unwrap_or_else(|| default_dt(&r.cs, &r.trap));
    let mut summary = json!({ "kind": tc.kind, "n_traj": tc.n_traj, "dt_s": dt });
    let (records, ensemble, reference_dd) = match tc.kind {
        TrajectoryKind::Langevin => {
            let nm = NoiseModel::new(&r.cs, seed, dt)?;
            let opts = LangevinOptions { t_final: tc.t_final_s, samples: tc.samples, abort_quanta: tc.abort_quanta };
            let records = langevin_trajectories(&r.cs, &r.trap, &initial, tc.n_traj, &nm, &opts, hash);
            let aborted = records.iter().filter(|x| x.aborted_at.is_some()).count();
            summary["aborted"] = json!(aborted);
            let ensemble = if aborted == 0 { Some(ensemble_moments(&records)?) } else { None };
            (records, ensemble, DriftDiffusion::rotating_frame(&r.cs, &r.trap))
        }
        TrajectoryKind::Homodyne => {
            let records = (0..tc.n_traj as u64)
                .into_par_iter()
                .map(|i| homodyne_trajectory(&initial, &r.measurement, &r.cs, &r.trap, tc.t_final_s, dt, tc.samples, seed, i, hash))
                .collect::<Result<Vec<_>, _>>()?;
            let ensemble = conditional_ensemble(&records);
            (records, Some(ensemble), DriftDiffusion::lab_frame(&r.cs, &r.trap))
        }
        TrajectoryKind::Locc => {
            let plan = plan_feedforward(&r.cs, &r.measurement)?;
            summary["gamma"] = json!(plan.gamma);
            summary["gamma_interval"] = json!([plan.interval.0, plan.interval.1]);
            let opts = LoccOptions { t_final: tc.t_final_s, dt, samples: tc.samples, scheme: tc.scheme };
            let records: Vec<TrajectoryRecord> = (0..tc.n_traj as u64)
                .into_par_iter()
                .map(|i| locc_trajectory(&initial, &plan, &r.cs, &r.trap, &opts, seed, i, hash))
                .collect();
            let ensemble = conditional_ensemble(&records);
            (records, Some(ensemble), DriftDiffusion::lab_frame(&r.cs, &r.trap))
        }
    };
    let mut tables = vec![trajectory_table(&records)];
    let mut text = format!("{} {:?} trajectories, dt = {dt:e} s\n", records.len(), tc.kind);
    if let Some(ensemble) = ensemble {
        let times = &records[0].times;
        let reference = times.iter().map(|&time| evolve_gaussian(&initial, &reference_dd, time)).collect::<Result<Vec<_>, _>>()?;
        let (t, worst) = ensemble_table(times, &ensemble, &reference);
        tables.push(t);
        summary["max_z_score"] = json!(worst);
        text += &format!("largest ensemble deviation from the unconditional moments: {worst:.3} standard errors\n");
    } else {
        text += "some trajectories left the linear regime; ensemble statistics skipped\n";
    }
    Ok(Outcome::new(tables, summary, text))
}

fn squeeze(cfg: &RunConfig, r: &Resolved) -> Result<Outcome, CliError> {
    let sq = &cfg.squeeze;
    let cs = if sq.use_effective_recoil {
        let sp = r.system.as_ref().ok_or_else(|| config_error("squeeze.use_effective_recoil needs a [system] section"))?;
        r.cs.with_local_diffusion(effective_recoil(r.cs.d11(), sp), effective_recoil(r.cs.d22(), sp))
    } else {
        r.cs
    };
    let times = sample_times(sq.t_final_s, sq.samples);
    let (ode, full) = squeezing_drive(&cs, &r.trap, &GaussianState::vacuum(), &times, &AdaptiveOptions::default())?;
    let mut t = Table::new("squeeze", &["t_s", "var_plus_ode", "var_minus_ode", "var_plus_full", "var_minus_full"]);
    for k in 0..times.len() {
        t.push(vec![times[k].into(), ode.var_plus[k].into(), ode.var_minus[k].into(), full.var_plus[k].into(), full.var_minus[k].into()]);
    }
    let floor = stationary_squashed_variance(&cs);
    let text = format!(
        "stationary squashed variance {floor:.6}; final ODE {:.6}, full {:.6}\n",
        ode.last_plus(),
        full.last_plus()
    );
    let summary = json!({
        "stationary_prediction": floor,
        "final_var_plus_ode": ode.last_plus(),
        "final_var_plus_full": full.last_plus(),
        "min_var_plus_full": full.var_plus.iter().cloned().fold(f64::INFINITY, f64::min),
        "d11": cs.d11(),
        "d22": cs.d22(),
    });
    Ok(Outcome::new(vec![t], summary, text))
}

fn entanglement(cfg: &RunConfig, r: &Resolved, seed: u64) -> Result<Outcome, CliError> {
    let en = &cfg.entanglement;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<[f64; 4]> = (0..en.configurations)
        .map(|_| {
            [
                rng.random_range(en.kd_min..=en.kd_max),
                rng.random_range(-PI..PI),
                rng.random_range(-1.0..=1.0),
                rng.random_range(en.damping_min..=en.damping_max),
            ]
        })
        .collect();
    let results = draws
        .par_iter()
        .map(|&[kd, phi, u, damping]| {
            let (cs, trap) = rates_at(cfg, r, kd, phi, 1.0 + en.field_spread * u)?;
            let gamma = damping * cs.g / cs.kd;
            let dd = DriftDiffusion::lab_frame(&cs, &trap).with_local_damping(gamma);
            let value = dd
                .stationary_covariance()
                .and_then(|cov| GaussianState::new(Vector4::zeros(), cov))
                .and_then(|st| st.log_negativity())
                .unwrap_or(f64::NAN);
            Ok((kd, phi, cs, gamma, value))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut t = Table::new(
        "entanglement",
        &["index", "kd", "phi_rad", "g_r", "g_a", "re_d12", "d11", "d22", "damping", "log_negativity"],
    );
    let (mut worst, mut failed, mut above): (f64, usize, usize) = (0.0, 0, 0);
    for (i, (kd, phi, cs, gamma, value)) in results.iter().enumerate() {
        if value.is_nan() {
            failed += 1;
        } else {
            worst = worst.max(*value);
            above += usize::from(*value > cfg.tolerances.entanglement);
        }
        t.push(vec![
            i.into(),
            (*kd).into(),
            (*phi).into(),
            cs.g_r.into(),
            cs.g_a.into(),
            cs.d12().re.into(),
            cs.d11().into(),
            cs.d22().into(),
            (*gamma).into(),
            (*value).into(),
        ]);
    }
    let text = format!(
        "{} configurations: max log-negativity {worst:e}, {above} above {:e}, {failed} without a stationary state\n",
        results.len(),
        cfg.tolerances.entanglement
    );
    let summary = json!({ "configurations": results.len(), "max_log_negativity": worst, "above_tolerance": above, "failed": failed });
    Ok(Outcome::new(vec![t], summary, text))
}

fn regression_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    cov / var
}

fn reheating(cfg: &RunConfig, r: &Resolved, seed: u64, hash: &str) -> Result<Outcome, CliError> {
    let rh = &cfg.reheating;
    let cs = &r.cs;
    let (d_plus, d_minus) = cs.normal_mode_heating();
    let re12 = cs.d12().re;
    let mut fitted = [f64::NAN; 2];
    let mut tables = Vec::new();
    if rh.n_traj > 0 {
        let dt = rh.dt_s.unwrap_or_else(|| default_dt(cs, &r.trap));
        let nm = NoiseModel::new(cs, seed, dt)?;
        let opts = LangevinOptions { t_final: rh.t_final_s, samples: rh.samples.max(1), abort_quanta: f64::INFINITY };
        let records = langevin_trajectories(cs, &r.trap, &GaussianState::vacuum(), rh.n_traj, &nm, &opts, hash);
        let mut series = Table::new("reheating_series", &["t_s", "n_common", "n_differential"]);
        let mut pts = [Vec::new(), Vec::new()];
        for k in 0..records[0].times.len() {
            let occ = |sign: f64| {
                records
                    .iter()
                    .map(|rec| {
                        let y = rec.means[k];
                        ((y[0] + sign * y[2]).powi(2) + (y[1] + sign * y[3]).powi(2)) / 4.0
                    })
                    .sum::<f64>()
                    / records.len() as f64
            };
            let time = records[0].times[k];
            let (nc, nd) = (occ(1.0), occ(-1.0));
            pts[0].push((time, nc));
            pts[1].push((time, nd));
            series.push(vec![time.into(), nc.into(), nd.into()]);
        }
        fitted = [regression_slope(&pts[0]), regression_slope(&pts[1])];
        tables.push(series);
    }
    let mut t = Table::new("reheating", &["quantity", "analytic", "fitted"]);
    t.push(vec!["heating_common".into(), d_plus.into(), fitted[0].into()]);
    t.push(vec!["heating_differential".into(), d_minus.into(), fitted[1].into()]);
    t.push(vec!["split".into(), (d_plus - d_minus).into(), (fitted[0] - fitted[1]).into()]);
    t.push(vec!["two_re_d12".into(), (2.0 * re12).into(), f64::NAN.into()]);
    let relative = 2.0 * re12.abs() / cs.d11();
    t.push(vec!["relative_split".into(), relative.into(), ((fitted[0] - fitted[1]).abs() / cs.d11()).into()]);
    tables.insert(0, t);
    let text = format!(
        "common heating {d_plus:e}, differential {d_minus:e} quanta/s; relative split 2|Re D12|/D11 = {relative:.6}\n"
    );
    let summary = json!({
        "heating_common": d_plus,
        "heating_differential": d_minus,
        "relative_split": relative,
        "fitted_common": if fitted[0].is_nan() { Value::Null } else { json!(fitted[0]) },
        "fitted_differential": if fitted[1].is_nan() { Value::Null } else { json!(fitted[1]) },
    });
    Ok(Outcome::new(tables, summary, text))
}

fn ep_scan(cfg: &RunConfig, r: &Resolved) -> Result<Outcome, CliError> {
    let g_r = r.cs.g_r;
    if g_r == 0.0 {
        return Err(config_error("ep-scan is scaled by g_r, which vanishes for this configuration"));
    }
    let tol = cfg.tolerances.ep_relative;
    let ratios = linspace(cfg.ep_scan.g_a_over_g_r[0], cfg.ep_scan.g_a_over_g_r[1], cfg.ep_scan.points);
    let mut t = Table::new(
        "ep_scan",
        &["g_a_over_g_r", "branch", "detuning_numeric", "detuning_closed_form", "relative_error", "gap", "condition_number"],
    );
    let mut worst: f64 = 0.0;
    let mut mismatched = 0usize;
    for x in ratios {
        let g_a = x * g_r;
        let cs = CouplingSet::from_couplings(g_r, g_a, 0.0, 0.0, 0.0);
        let mut numeric = exceptional_points(&cs)?;
        numeric.sort_by(|a, b| a.detuning.total_cmp(&b.detuning));
        let mut closed = exceptional_points_closed_form(g_r, g_a);
        closed.sort_by(f64::total_cmp);
        if numeric.len() != closed.len() {
            mismatched += 1;
            continue;
        }
        for (branch, (ep, exact)) in numeric.iter().zip(&closed).enumerate() {
            let rel = (ep.detuning - exact).abs() / exact.abs().max(g_r.abs());
            worst = worst.max(rel);
            t.push(vec![
                x.into(),
                branch.into(),
                ep.detuning.into(),
                (*exact).into(),
                rel.into(),
                ep.gap.into(),
                ep.condition_number.into(),
            ]);
        }
    }
    let text = format!("{} exceptional points; largest relative error {worst:e} (tolerance {tol:e})\n", t.rows.len());
    let summary = json!({ "points": t.rows.len(), "max_relative_error": worst, "tolerance": tol, "count_mismatches": mismatched });
    let mut out = Outcome::new(vec![t], summary, text);
    if worst > tol || mismatched > 0 {
        out.tolerance_failure = Some(format!(
            "exceptional-point relative error {worst:e} exceeds {tol:e} or branch count mismatched at {mismatched} ratios"
        ));
    }
    Ok(out)
}
