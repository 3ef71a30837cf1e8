//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;
use optibind_core::fields::{binding_force, ehrenfest_force, green_tensor};
use optibind_core::gaussian::fock::{fock_oracle_moments, FockOptions, FockState, DEFAULT_N_MAX};
use optibind_core::gaussian::{evolve_gaussian, AdaptiveOptions, DriftDiffusion, GaussianState};
use optibind_core::linearize::{coupling_set, effective_recoil, CouplingSet, SystemParams, TrapFrequencies};
use optibind_core::modes::{
    classify_regime, damped_mode, dynamical_matrix, eigenfrequencies, exceptional_points,
    exceptional_points_closed_form, stationary_occupation_damped_mode, Regime,
};
use optibind_core::stochastic::homodyne::{kraus_recoil_diffusion, kraus_step_averaged};
use optibind_core::stochastic::langevin::{langevin_trajectories, LangevinOptions};
use optibind_core::stochastic::locc::{locc_ensemble, plan_feedforward, LoccOptions, SdeScheme};
use optibind_core::stochastic::squeeze::squeezing_drive;
use optibind_core::stochastic::{trajectory_rng, MeasurementConfig, NoiseModel};
use optibind_core::{Particle, TweezerPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{verdict}] criterion {id:>2} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

const LAMBDA: f64 = 1.55e-6;

fn wavenumber() -> f64 {
    2.0 * PI / LAMBDA
}

fn silica() -> Particle {
    Particle::dielectric_sphere(100e-9, 2.1, 2200.0)
}

fn pair(kd: f64, phi: f64, field_2: f64, theta: f64) -> TweezerPair {
    let k = wavenumber();
    TweezerPair::linear(k, 1.0e-6, 2.0e-6, kd / k, 1.4e7, field_2, phi, 0.0, theta)
}

fn system(kd: f64, phi: f64) -> SystemParams {
    SystemParams::from_tweezers(pair(kd, phi, 1.4e7, 0.0), silica()).unwrap()
}

/// Rates at the four pure points of the regime map, with ω = 1 and G/kd = s.
fn pure_point(n: usize, s: f64, d: f64) -> CouplingSet {
    let base = 20.0 * PI;
    let (kd, phi) = match n {
        1 => (base, 0.0),
        2 => (base + PI / 4.0, PI / 4.0),
        3 => (base + PI / 2.0, PI / 2.0),
        _ => (base + PI / 2.0, 0.0),
    };
    CouplingSet::from_rates(s * kd, kd, phi, d, d)
}

#[test]
fn criterion_01_force_law() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..10 {
        let kd = rng.random_range(20.0..500.0);
        let phi = rng.random_range(-PI..PI);
        let tw = pair(kd, phi, rng.random_range(1.0e7..1.4e7), rng.random_range(0.0..0.5));
        let jitter = |rng: &mut ChaCha8Rng| Vector3::from_fn(|_, _| rng.random_range(-5e-8..5e-8));
        let r1 = jitter(&mut rng);
        let r2 = tw.focus_2() + jitter(&mut rng);
        match ehrenfest_force(&r1, &r2, &tw, &silica()) {
            Ok(f) => {
                let classical = binding_force(&r1, &r2, &tw, &silica()).unwrap();
                worst = worst.max((f.interaction() - classical).norm() / classical.norm());
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "force-law consistency",
        failures == 0 && worst < 1e-6 && within(elapsed, 60.0),
        format!("worst relative deviation {worst:.3e} (tol 1e-6), quadrature failures {failures}, {elapsed:.1?} (limit 60 s)"),
    );
}

/// Root of `f` in [a, b] by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn criterion_02_reciprocity_phases() {
    let k = wavenumber();
    // Transverse Green-tensor element along the connecting axis, as a function of kd.
    let g_yy = |x: f64| green_tensor(&Vector3::new(x / k, 0.0, 0.0), k).unwrap()[(1, 1)];
    let reciprocal_kd = bisect(|x| g_yy(x).im, 20.0 * PI - 0.3, 20.0 * PI + 0.3);
    let antireciprocal_kd = bisect(|x| g_yy(x).re, 20.5 * PI - 0.3, 20.5 * PI + 0.3);
    let ratio = |kd: f64, phi: f64, sign: f64| {
        let tw = pair(kd, phi, 1.4e7, 0.0);
        let (r1, r2) = (Vector3::zeros(), tw.focus_2());
        let f12 = binding_force(&r1, &r2, &tw, &silica()).unwrap();
        let f21 = binding_force(&r2, &r1, &tw, &silica()).unwrap();
        (f12 + f21 * sign).norm() / f12.norm()
    };
    let rec = ratio(reciprocal_kd, 0.0, 1.0);
    let anti = ratio(antireciprocal_kd, PI / 2.0, -1.0);
    let control = ratio(20.75 * PI, PI / 4.0, 1.0);
    report(
        2,
        "reciprocity phases",
        rec < 1e-4 && anti < 1e-4 && control > 0.1,
        format!("|F12+F21|/|F12| = {rec:.3e} at phi=0, kd={reciprocal_kd:.6}; |F12-F21|/|F12| = {anti:.3e} at phi=pi/2, kd={antireciprocal_kd:.6} (tol 1e-4); control |F12+F21|/|F12| = {control:.3} at phi=pi/4, kd=20.75pi"),
    );
}

#[test]
fn criterion_03_rate_positivity() {
    let mut worst = f64::INFINITY;
    let mut errors = 0;
    for i in 0..200 {
        let phi = -PI + 2.0 * PI * (i as f64 + 0.5) / 200.0;
        for j in 0..200 {
            let kd = 10.0 + 290.0 * j as f64 / 199.0;
            match coupling_set(&system(kd, phi)) {
                Ok(cs) => worst = worst.min(cs.positivity_margin() / (cs.d11() * cs.d22())),
                Err(_) => errors += 1,
            }
        }
    }
    report(
        3,
        "rate positivity",
        errors == 0 && worst > 0.0,
        format!("min (D11 D22 - |D12|^2)/(D11 D22) = {worst:.4} on 200x200 grid, kd in [10, 300]; rate errors {errors}"),
    );
}

#[test]
fn criterion_04_gaussian_fock_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let times: Vec<f64> = (0..=10).map(|i| 0.5 * i as f64).collect();
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..5 {
        let g = rng.random_range(0.02..0.08);
        let kd: f64 = rng.random_range(20.0..60.0);
        let phi: f64 = rng.random_range(-PI..PI);
        let d11 = rng.random_range(1.0..1.5) * 2.0 * g / kd;
        let d22 = rng.random_range(1.0..1.5) * 2.0 * g / kd;
        let cs = CouplingSet::from_rates(g, kd, phi, d11, d22);
        let trap = TrapFrequencies::new(1.0, rng.random_range(-0.1..0.1));
        let a1 = Complex64::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let a2 = Complex64::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let fock = fock_oracle_moments(&FockState::coherent(a1, a2, DEFAULT_N_MAX), &cs, &trap, &times, &FockOptions::default());
        let Ok(fock) = fock else {
            errors += 1;
            continue;
        };
        let dd = DriftDiffusion::lab_frame(&cs, &trap);
        let g0 = GaussianState::coherent(a1, a2);
        for (t, f) in times.iter().zip(&fock) {
            let g = evolve_gaussian(&g0, &dd, *t).unwrap();
            worst = worst.max((g.mean - f.mean).abs().max()).max((g.cov - f.cov).abs().max());
        }
    }
    let elapsed = start.elapsed();
    report(
        4,
        "Gaussian/Fock oracle",
        errors == 0 && worst < 1e-4 && within(elapsed, 300.0),
        format!("worst moment deviation {worst:.3e} (tol 1e-4) over 5 sets, n_max {DEFAULT_N_MAX}, wt in [0, 5]; errors {errors}; {elapsed:.1?} (limit 300 s)"),
    );
}

#[test]
fn criterion_05_exceptional_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..20 {
        let g_a: f64 = rng.random_range(0.01..0.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let g_r = g_a * rng.random_range(-0.95..0.95);
        let cs = CouplingSet::from_couplings(g_r, g_a, 1.0, 1.0, 0.0);
        let exact = exceptional_points_closed_form(g_r, g_a);
        match exceptional_points(&cs) {
            Ok(found) if found.len() == exact.len() => {
                for (f, e) in found.iter().zip(&exact) {
                    worst = worst.max((f.detuning - e).abs() / e.abs().max(f64::MIN_POSITIVE));
                }
            }
            _ => ok = false,
        }
    }
    report(
        5,
        "exceptional points",
        ok && worst < 1e-8,
        format!("worst relative error vs 2g_a +- 2 sqrt(g_a^2 - g_r^2): {worst:.3e} (tol 1e-8) over 20 cases"),
    );
}

#[test]
fn criterion_06_pt_phase_diagram() {
    let g_r = 0.05;
    let mut violations = 0;
    let mut worst_numeric: f64 = 0.0;
    let n = 201;
    for i in 0..n {
        let g_a = g_r * (-3.0 + 6.0 * i as f64 / (n - 1) as f64);
        for j in 0..n {
            let detuning = g_r * (-10.0 + 20.0 * j as f64 / (n - 1) as f64);
            let cs = CouplingSet::from_couplings(g_r, g_a, 1.0, 1.0, 0.0);
            let trap = TrapFrequencies::new(1.0, detuning);
            let (wp, wm) = eigenfrequencies(&cs, &trap);
            let window = exceptional_points_closed_form(g_r, g_a);
            let inside = g_a.abs() > g_r.abs() && window.len() == 2 && detuning > window[0] && detuning < window[1];
            if inside {
                violations += usize::from(wp.re != wm.re);
            } else {
                violations += usize::from(wp.im != 0.0 || wm.im != 0.0);
            }
            let ev = dynamical_matrix(&cs, &trap).schur().eigenvalues().unwrap();
            let scale = g_r.max(g_a.abs()).max(detuning.abs());
            let d = ((ev[0] - wp).norm().min((ev[0] - wm).norm()) + (ev[1] - wp).norm().min((ev[1] - wm).norm())) / scale;
            worst_numeric = worst_numeric.max(d);
        }
    }
    report(
        6,
        "PT phase diagram",
        violations == 0 && worst_numeric < 1e-6,
        format!("{violations} closed-form violations on {n}x{n} grid; numerical eigenvalues within {worst_numeric:.2e} of the closed form"),
    );
}

#[test]
fn criterion_07_regime_map() {
    let expected = [Regime::Reciprocal, Regime::Directional, Regime::Antireciprocal, Regime::RecoilCorrelated];
    let mut detail = Vec::new();
    let mut ok = true;
    for (n, want) in (1..=4).zip(expected) {
        let label = classify_regime(&pure_point(n, 0.05, 0.3));
        ok &= label.flag_count() == 1 && label.dominant == want;
        detail.push(format!("({n}) {} [{} flag]", label.dominant, label.flag_count()));
    }
    report(7, "regime map", ok, detail.join(", "));
}

/// Symmetrized occupation ⟨b†b⟩ of the mode b = u₁a₁ + u₂a₂.
fn mode_occupation(st: &GaussianState, u: (Complex64, Complex64)) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let i = Complex64::i();
    let w = [u.0 * r, u.0 * i * r, u.1 * r, u.1 * i * r];
    let s = st.second_moments();
    let mut acc = Complex64::from(0.0);
    for a in 0..4 {
        for b in 0..4 {
            acc += w[a].conj() * w[b] * s[(a, b)];
        }
    }
    acc.re - 0.5
}

#[test]
fn criterion_08_damped_mode_saturation() {
    let s = 0.05;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    let mut ok = true;
    for ratio in [3.0, 10.0, 30.0] {
        let cs = pure_point(3, s, ratio * s);
        let trap = TrapFrequencies::new(1.0, 2.0 * cs.g_a);
        let target = stationary_occupation_damped_mode(&cs, cs.d11(), cs.kd);
        let dd = DriftDiffusion::rotating_frame(&cs, &trap);
        let st = evolve_gaussian(&GaussianState::vacuum(), &dd, 8.0 / s);
        match (target, st) {
            (Ok(target), Ok(st)) => {
                let n = mode_occupation(&st, damped_mode(&cs));
                let rel = (n - target).abs() / target;
                worst = worst.max(rel);
                detail.push(format!("D11kd/G={ratio}: {n:.5} vs {target:.5}"));
            }
            _ => ok = false,
        }
    }
    report(
        8,
        "damped-mode saturation",
        ok && worst < 1e-2,
        format!("{}; worst relative deviation {worst:.2e} (tol 1e-2)", detail.join(", ")),
    );
}

#[test]
fn criterion_09_no_entanglement() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..1000 {
        let kd = rng.random_range(10.0..300.0);
        let tw = pair(kd, rng.random_range(-PI..PI), rng.random_range(1.2e7..1.6e7), rng.random_range(0.0..0.3));
        let Ok(sp) = SystemParams::from_tweezers(tw, silica()) else {
            errors += 1;
            continue;
        };
        let Ok(cs) = coupling_set(&sp) else {
            errors += 1;
            continue;
        };
        let gamma = rng.random_range(2.0..4.0) * cs.g / cs.kd;
        let dd = DriftDiffusion::lab_frame(&cs, &sp.trap).with_local_damping(gamma);
        match dd.stationary_covariance().and_then(|cov| GaussianState::new(nalgebra::Vector4::zeros(), cov)).and_then(|st| st.log_negativity()) {
            Ok(e) => worst = worst.max(e),
            Err(_) => errors += 1,
        }
    }

    // Conditional dynamics at the reciprocal point with the physical recoil-to-coupling ratio.
    let sp_phys = system(20.0 * PI, 0.0);
    let cs_phys = coupling_set(&sp_phys).unwrap();
    let physical_ratio = cs_phys.d11() * cs_phys.kd / (2.0 * cs_phys.g);
    let s = 0.05;
    let d = physical_ratio * 2.0 * s;
    let cs = pure_point(1, s, d);
    let trap = TrapFrequencies::new(1.0, 0.0);
    let max_conditional = |eta: f64| -> Result<(f64, f64), optibind_core::Error> {
        let mut sp = sp_phys;
        sp.detection_efficiency = eta;
        let reduced = effective_recoil(d, &sp) * cs.kd / (2.0 * cs.g);
        let mc = MeasurementConfig::homodyne(eta, 0.0);
        let mut st = GaussianState::vacuum();
        let dt = 1e-3;
        let mut best: f64 = 0.0;
        for k in 0..(60.0 / s / dt) as usize {
            st = kraus_step_averaged(&st, &Vector2::zeros(), &mc, &cs, &trap, dt)?;
            if k % 100 == 0 {
                st.validate(1e-9)?;
                best = best.max(st.log_negativity()?);
            }
        }
        Ok((reduced, best))
    };
    let eta = 1.0 - 0.1 / physical_ratio;
    let unconditional = max_conditional(0.0);
    let conditional = max_conditional(eta);
    let circumvented = matches!((&unconditional, &conditional), (Ok((_, e0)), Ok((r, e1))) if *e0 == 0.0 && *r < 0.5 && *e1 > 0.0);
    report(
        9,
        "no-entanglement theorem",
        errors == 0 && worst < 1e-12 && circumvented,
        format!(
            "max stationary E_N {worst:.3e} over 1000 damped far-field configurations (tol 1e-12), errors {errors}; \
             homodyne at eta_det = 0: {unconditional:?}, at eta_det = {eta:.5}: (D'kd/2G, max E_N) = {conditional:?}"
        ),
    );
}

#[test]
fn criterion_10_locc_equivalence() {
    let start = Instant::now();
    let s = 0.05;
    let initial = GaussianState::coherent(Complex64::new(0.7, 0.2), Complex64::new(-0.3, 0.4));
    let opts = LoccOptions { t_final: 10.0, dt: 2e-3, samples: 1, scheme: SdeScheme::Stratonovich };
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut detail = Vec::new();
    for n in 1..=4 {
        let cs = pure_point(n, s, 0.3);
        let trap = TrapFrequencies::new(1.0, 0.0);
        let Ok(plan) = plan_feedforward(&cs, &MeasurementConfig::default()) else {
            ok = false;
            continue;
        };
        let moments = locc_ensemble(&initial, &plan, &cs, &trap, &opts, 10_000, 1000 + n as u64);
        let dd = DriftDiffusion::lab_frame(&cs, &trap);
        let mut z: f64 = 0.0;
        for (k, m) in moments.iter().enumerate().skip(1) {
            let exact = evolve_gaussian(&initial, &dd, k as f64 * opts.t_final / opts.samples as f64).unwrap();
            z = z.max(m.max_z_score(&exact, 1e-12));
        }
        worst = worst.max(z);
        detail.push(format!("({n}) max |z| {z:.2}"));
    }
    let elapsed = start.elapsed();
    report(
        10,
        "LOCC equivalence",
        ok && worst < 3.0 && within(elapsed, 600.0),
        format!("{} over 10^4 trajectories (tol 3 standard errors); {elapsed:.1?} (limit 600 s)", detail.join(", ")),
    );
}

#[test]
fn criterion_11_homodyne_conditioning() {
    let cs = pure_point(1, 0.05, 0.3);
    let trap = TrapFrequencies::new(1.0, 0.0);
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    let mut ok = true;
    for eta in [0.0, 0.5, 0.9] {
        let mc = MeasurementConfig::homodyne(eta, 0.0);
        let mut sum = Vector2::zeros();
        for i in 0..1000u64 {
            let mut rng = trajectory_rng(11, i);
            match kraus_recoil_diffusion(&GaussianState::vacuum(), &mc, &cs, &trap, 1000, 1e-2, &mut rng) {
                Ok(d) => sum += d,
                Err(_) => ok = false,
            }
        }
        let fit = sum / 1000.0;
        let expect = 0.3 * (1.0 - eta);
        let rel = ((fit[0] - expect).abs().max((fit[1] - expect).abs())) / expect;
        worst = worst.max(rel);
        detail.push(format!("eta={eta}: ({:.5}, {:.5}) vs {expect:.5}", fit[0], fit[1]));
    }
    report(
        11,
        "homodyne conditioning",
        ok && worst < 0.02,
        format!("{}; worst relative deviation {worst:.2e} (tol 2e-2)", detail.join(", ")),
    );
}

#[test]
fn criterion_12_squeezing_floor() {
    let s = 2e-3;
    let kd = 20.0 * PI;
    let trap = TrapFrequencies::new(1.0, 0.0);
    let times: Vec<f64> = (0..=30).map(|k| 100.0 * k as f64).collect();
    let run = |ratio: f64| {
        let d = ratio * 2.0 * s;
        let cs = CouplingSet::from_rates(s * kd, kd, 0.0, d, d);
        squeezing_drive(&cs, &trap, &GaussianState::vacuum(), &times, &AdaptiveOptions::default())
    };
    let floor = run(5.0);
    let mut sp = system(kd, 0.0);
    sp.detection_efficiency = 0.94;
    let reduced = effective_recoil(5.0 * 2.0 * s, &sp) / (2.0 * s);
    let below = run(reduced);
    let verdict = match (&floor, &below) {
        (Ok((ode, full)), Ok((ode_b, full_b))) => {
            let e1 = (ode.last_plus() - 5.0).abs() / 5.0;
            let e2 = (full.last_plus() - 5.0).abs() / 5.0;
            let min_full = full.var_plus.iter().cloned().fold(f64::INFINITY, f64::min);
            let e3 = (full_b.last_plus() - reduced).abs() / reduced;
            let pass = e1 < 1e-2 && e2 < 1e-2 && min_full > 0.5 * (1.0 - 1e-2) && e3 < 1e-2 && full_b.last_plus() < 0.5;
            (
                pass,
                format!(
                    "D11kd/2G = 5: stationary var(Z+) ODE {:.5}, full {:.5} (tol 1%), min full {min_full:.4} >= 1/2; \
                     eta_det 0.94 -> D'kd/2G = {reduced:.3}: ODE {:.5}, full {:.5}",
                    ode.last_plus(),
                    full.last_plus(),
                    ode_b.last_plus(),
                    full_b.last_plus()
                ),
            )
        }
        _ => (false, format!("propagation failed: {:?} {:?}", floor.err(), below.err())),
    };
    report(12, "squeezing floor", verdict.0, verdict.1);
}

#[test]
fn criterion_13_reheating_correlation() {
    let s = 0.05;
    let cs = pure_point(4, s, 0.06);
    let trap = TrapFrequencies::new(1.0, 0.0);
    let (d_plus, d_minus) = cs.normal_mode_heating();
    let analytic = d_plus - d_minus - 2.0 * cs.d12().re;
    let opts = LangevinOptions { t_final: 10.0, samples: 10, ..Default::default() };
    let nm = NoiseModel::new(&cs, 1313, 1e-2).unwrap();
    let records = langevin_trajectories(&cs, &trap, &GaussianState::vacuum(), 10_000, &nm, &opts, "");
    let slope = |sign: f64| {
        let pts: Vec<(f64, f64)> = (0..=opts.samples)
            .map(|k| {
                let t = records[0].times[k];
                let n = records
                    .iter()
                    .map(|r| {
                        let y = r.means[k];
                        ((y[0] + sign * y[2]).powi(2) + (y[1] + sign * y[3]).powi(2)) / 4.0
                    })
                    .sum::<f64>()
                    / records.len() as f64;
                (t, n)
            })
            .collect();
        let nf = pts.len() as f64;
        let (mt, mn) = (pts.iter().map(|p| p.0).sum::<f64>() / nf, pts.iter().map(|p| p.1).sum::<f64>() / nf);
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mn)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        cov / var
    };
    let split = slope(1.0) - slope(-1.0);
    let expect = 2.0 * cs.d12().re;
    let rel = (split - expect).abs() / expect;
    report(
        13,
        "reheating correlation",
        analytic.abs() < 1e-15 && rel < 0.05,
        format!("D+ - D- - 2Re D12 = {analytic:.1e}; fitted split {split:.5} vs 2Re D12 = {expect:.5} (relative {rel:.2e}, tol 5e-2)"),
    );
}
