//! Spectral properties of the non-Hermitian dynamical matrix.

use optibind_core::linearize::{CouplingSet, TrapFrequencies};
use optibind_core::modes::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn detected_exceptional_points_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g_a: f64 = rng.random_range(-1.0..1.0);
        let g_r = g_a * rng.random_range(-0.95..0.95);
        let cs = CouplingSet::from_couplings(g_r, g_a, 1.0, 1.0, 0.0);
        let found = exceptional_points(&cs).unwrap();
        let exact = exceptional_points_closed_form(g_r, g_a);
        assert_eq!(found.len(), 2);
        for (f, e) in found.iter().zip(exact) {
            let rel = (f.detuning - e).abs() / e.abs().max(g_a.abs());
            worst = worst.max(rel);
            assert!(f.condition_number > EP_CONDITION_MIN);
        }
    }
    eprintln!("worst relative EP error {worst:.2e}");
    assert!(worst < 1e-8);
}

proptest! {
    #[test]
    fn spectrum_is_antisymmetric(g_r in -1.0..1.0f64, g_a in -1.0..1.0f64, dw in -3.0..3.0f64) {
        let cs = CouplingSet::from_couplings(g_r, g_a, 1.0, 1.0, 0.0);
        let (wp, wm) = eigenfrequencies(&cs, &TrapFrequencies::new(10.0, dw));
        prop_assert_eq!(wp, -wm);
    }

    #[test]
    fn unbroken_phase_is_real(g_r in -1.0..1.0f64, frac in -1.0..1.0f64, dw in -3.0..3.0f64) {
        let cs = CouplingSet::from_couplings(g_r, g_r * frac, 1.0, 1.0, 0.0);
        let (wp, wm) = eigenfrequencies(&cs, &TrapFrequencies::new(10.0, dw));
        prop_assert_eq!(wp.im, 0.0);
        prop_assert_eq!(wm.im, 0.0);
    }

    #[test]
    fn broken_window_has_degenerate_real_parts(g_a in 0.01..1.0f64, frac in -0.99..0.99f64, pos in 0.001..0.999f64) {
        let g_r = g_a * frac;
        let eps = exceptional_points_closed_form(g_r, g_a);
        let dw = eps[0] + pos * (eps[1] - eps[0]);
        let cs = CouplingSet::from_couplings(g_r, g_a, 1.0, 1.0, 0.0);
        let (wp, wm) = eigenfrequencies(&cs, &TrapFrequencies::new(10.0, dw));
        prop_assert_eq!(wp.re, wm.re);
        prop_assert!(wp.im != 0.0);
    }

    #[test]
    fn pt_map_preserves_spectrum(g in 0.1..2.0f64, kd in 10.0..300.0f64, phi in -3.1..3.1f64, dw in -0.5..0.5f64) {
        let cs = CouplingSet::from_rates(g, kd, phi, 1.0, 1.5);
        let trap = TrapFrequencies::new(10.0, dw);
        let (p_cs, p_trap) = pt_partner(&cs, &trap);
        prop_assert_eq!(eigenfrequencies(&cs, &trap), eigenfrequencies(&p_cs, &p_trap));
        prop_assert_eq!(mode_spectrum(&cs, &trap).phase, mode_spectrum(&p_cs, &p_trap).phase);
    }
}
