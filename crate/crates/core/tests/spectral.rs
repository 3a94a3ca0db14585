mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use common::*;
use kerrphase::experiment::meanfield_nonlinear_phase;
use kerrphase::meanfield::{integrate, IntegrateOptions, MeanFieldTrajectory, PostPulseOracle};
use kerrphase::ode::Tolerances;
use kerrphase::spectral::{
    fid_window, fit_alpha, phase_spectrum, relative_phase, time_delay_series, window_phase, Baseline, FidWindow,
    FitOptions, PhaseSpectrum, Source, WindowPolicy,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn run(u: f64, f: f64) -> MeanFieldTrajectory {
    let cfg = homogeneous(u, f);
    integrate(&cfg, &IntegrateOptions::for_config(&cfg)).unwrap()
}

/// Anharmonic run and its harmonic twin, computed once.
fn pair() -> &'static (FidWindow, FidWindow) {
    static PAIR: OnceLock<(FidWindow, FidWindow)> = OnceLock::new();
    PAIR.get_or_init(|| {
        let p = WindowPolicy::default();
        (
            fid_window(&run(0.5, 0.2), Source::Cavity, &p).unwrap(),
            fid_window(&run(0.0, 0.2), Source::Cavity, &p).unwrap(),
        )
    })
}

/// Checks `b − a − offset(ω)` is one multiple of 2π on every bin valid in both.
fn differs_by(a: &PhaseSpectrum, b: &PhaseSpectrum, offset: impl Fn(f64) -> f64, tol: f64) -> bool {
    let mut turns = None;
    for j in 0..a.omega.len() {
        if !(a.valid[j] && b.valid[j]) {
            continue;
        }
        let d = b.phase[j] - a.phase[j] - offset(a.omega[j]);
        let k = (d / (2.0 * PI)).round();
        if (d - 2.0 * PI * k).abs() > tol || *turns.get_or_insert(k) != k {
            return false;
        }
    }
    turns.is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn global_phase_shifts_every_bin(phi in -3.0..3.0f64) {
        let (w, h) = pair();
        let a = window_phase(w).unwrap();
        let b = window_phase(&w.rotated(phi)).unwrap();
        prop_assert!(differs_by(&a, &b, |_| phi, 1e-9));
        let d0 = relative_phase(&a, &window_phase(h).unwrap()).unwrap().at_center;
        let d1 = relative_phase(&b, &window_phase(&h.rotated(phi)).unwrap()).unwrap().at_center;
        prop_assert!((d0 - d1).abs() < 1e-9);
    }

    #[test]
    fn delay_adds_linear_phase(tau in -0.05..0.05f64) {
        let (w, h) = pair();
        let a = window_phase(w).unwrap();
        let b = window_phase(&w.delayed(tau)).unwrap();
        prop_assert!(differs_by(&a, &b, |om| om * tau, 1e-7));
        let d0 = relative_phase(&a, &window_phase(h).unwrap()).unwrap().at_center;
        let d1 = relative_phase(&b, &window_phase(&h.delayed(tau)).unwrap()).unwrap().at_center;
        prop_assert!((d0 - d1).abs() < 1e-9);
    }
}

#[test]
fn oracle_delay_matches_stationary_phase() {
    let (w0, gt) = (OMEGA0, 0.6 * (1.0 + 4.0 / 7.2));
    let strong = PostPulseOracle::new(1.0, 0.2, 0.0, gt, 0.6, 2).unwrap();
    let weak = PostPulseOracle { anharmonicity: 0.0, ..strong };
    let times: Vec<f64> = (0..=8000).map(|k| k as f64 * 0.001).collect();
    let lab = |o: &PostPulseOracle| -> Vec<Complex64> {
        times.iter().map(|&t| kerrphase::meanfield::post_pulse_analytic_lab(o, t, w0).unwrap()).collect()
    };
    let d = time_delay_series(&times, &lab(&strong), &lab(&weak), w0).unwrap();
    let expected = kerrphase::meanfield::stationary_phase(&strong) / w0;
    let late = d.terminal_plateau(10).unwrap();
    assert!((late - expected).abs() < 0.05 * expected, "{late} vs {expected}");
}

fn phase(u: f64, f: f64, baseline: Baseline) -> kerrphase::experiment::MeanFieldPhase {
    meanfield_nonlinear_phase(&homogeneous(u, f), baseline, &WindowPolicy::default(), &Tolerances::default())
        .unwrap()
        .0
}

#[test]
fn identical_runs_have_zero_relative_phase() {
    let (w, _) = pair();
    let a = window_phase(w).unwrap();
    let d = relative_phase(&a, &a).unwrap();
    assert_eq!(d.at_center, 0.0);
    assert!(d.delta.iter().all(|x| x.is_nan() || *x == 0.0));
}

#[test]
fn harmonic_run_has_no_nonlinear_phase() {
    let p = phase(0.0, 0.2, Baseline::Weak);
    assert!(p.cavity.abs() < 1e-3 && p.dipole.abs() < 1e-3);
    let p = phase(0.0, 0.2, Baseline::Harmonic);
    assert!(p.cavity.abs() < 1e-12 && p.dipole.abs() < 1e-12);
}

#[test]
fn baselines_agree_for_homogeneous_runs() {
    for u in [0.1, 0.5, 1.0] {
        for f in [0.05, 0.1, 0.2] {
            let h = phase(u, f, Baseline::Harmonic).cavity;
            let w = phase(u, f, Baseline::Weak).cavity;
            assert!((h - w).abs() < 0.05 * h.abs(), "U/gamma = {u}, F0/kappa = {f}: {h} vs {w}");
        }
    }
}

#[test]
fn stronger_anharmonicity_gives_larger_phase() {
    assert!(phase(1.0, 0.2, Baseline::Harmonic).cavity > phase(0.5, 0.2, Baseline::Harmonic).cavity);
}

#[test]
fn cavity_and_dipole_phases_agree() {
    let p = phase(0.5, 0.2, Baseline::Harmonic);
    assert!((p.cavity - p.dipole).abs() < 0.01);
    let offsets: Vec<f64> = [0.02, 0.1, 0.2, 0.4].iter().map(|&f| phase(0.5, f, Baseline::Harmonic).filter_offset).collect();
    for o in &offsets {
        assert!((o - offsets[0]).abs() < 0.01, "{offsets:?}");
    }
}

#[test]
fn fitted_exponent_is_quadratic_in_regime() {
    for u in [0.1, 0.5] {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let f = 0.02 * k as f64;
                (f, phase(u, f, Baseline::Harmonic).cavity)
            })
            .collect();
        let cfg = homogeneous(u, 0.2);
        let gt = kerrphase::model::purcell_rate(&cfg).unwrap();
        let r = fit_alpha(&pts, u * GAMMA, 2, gt, &FitOptions::default()).unwrap();
        assert!((r.exponent - 2.0).abs() < 0.1, "U/gamma = {u}: exponent {}", r.exponent);
        assert!(!r.regime_breakdown);
    }
}

#[test]
fn zero_trajectory_gives_masked_phase() {
    let w = fid_window(&run(0.5, 0.0), Source::Cavity, &WindowPolicy::default()).unwrap();
    assert!(w.samples.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    let ps = phase_spectrum(&kerrphase::spectral::fourier(&w).unwrap());
    assert!(ps.valid.iter().all(|v| !v));
    assert!(ps.phase_at_center().is_err());
}
