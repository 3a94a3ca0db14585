mod common;

use common::*;
use kerrphase::experiment::{lindblad_nonlinear_phase, meanfield_nonlinear_phase};
use kerrphase::lindblad::{
    evolve, evolve_from_vacuum, second_level_population, DensityMatrix, EvolveOptions, HilbertConfig,
};
use kerrphase::meanfield::{integrate, IntegrateOptions};
use kerrphase::model::purcell_rate;
use kerrphase::ode::Tolerances;
use kerrphase::spectral::{Baseline, WindowPolicy};
use kerrphase::{PulseParams, SystemConfig};

fn bare_cavity(f0: f64, width: f64) -> SystemConfig {
    let p = PulseParams::new(f0, OMEGA0, 6.0 * width, width).unwrap();
    SystemConfig::homogeneous(1, OMEGA0, KAPPA, GAMMA, 0.0, 0.0, p).unwrap()
}

fn max_p2(u_over_gamma: f64, f: f64) -> f64 {
    let cfg = homogeneous(u_over_gamma, f);
    let h = HilbertConfig::for_config(&cfg).unwrap();
    let s = evolve_from_vacuum(&cfg, &h, &EvolveOptions::for_config(&cfg)).unwrap();
    assert!(s.hygiene.is_clean(), "{:?}", s.hygiene);
    second_level_population(&s).unwrap().into_iter().fold(0.0, f64::max)
}

#[test]
fn single_photon_decays_exponentially() {
    let cfg = bare_cavity(0.0, WIDTH);
    let h = HilbertConfig::new(3, 1, 1).unwrap();
    let opts = EvolveOptions {
        t_end: 1.0,
        dt: 0.001,
        tolerances: Tolerances::new(1e-12, 1e-15),
        ..Default::default()
    };
    let e = evolve(&DensityMatrix::fock(&h, 1).unwrap(), &cfg, &h, &opts, &[0.5]).unwrap();
    for (t, n) in e.series.times.iter().zip(&e.series.photon_number) {
        assert!((n - (-KAPPA * t).exp()).abs() < 1e-6, "t = {t}");
    }
    assert_eq!(e.checkpoints.len(), 1);
    assert!(e.series.hygiene.is_clean());
}

#[test]
fn weak_drive_flux_matches_steady_state() {
    let f0 = 0.01 * KAPPA;
    // a pulse much longer than 1/κ behaves like a CW drive near its peak
    let cfg = bare_cavity(f0, 3.0);
    let h = HilbertConfig::new(4, 1, 1).unwrap();
    let opts = EvolveOptions {
        t_end: cfg.pulse.center + 0.5,
        dt: 0.01,
        ..Default::default()
    };
    let s = evolve_from_vacuum(&cfg, &h, &opts).unwrap();
    let k = s.times.iter().position(|&t| t >= cfg.pulse.center - 1e-9).unwrap();
    let flux = KAPPA * s.photon_number[k];
    let expected = 4.0 * f0 * f0 / KAPPA;
    assert!((flux - expected).abs() < 0.02 * expected, "{flux} vs {expected}");
}

#[test]
fn vacuum_stays_empty_without_drive() {
    let cfg = homogeneous(0.5, 0.0);
    let h = HilbertConfig::for_config(&cfg).unwrap();
    let mut opts = EvolveOptions::for_config(&cfg);
    opts.t_end = 2.0;
    let s = evolve_from_vacuum(&cfg, &h, &opts).unwrap();
    assert!(s.a.iter().chain(&s.bright).all(|z| z.norm() == 0.0));
    assert!(second_level_population(&s).unwrap().iter().all(|&p| p == 0.0));
}

#[test]
fn weak_drive_agrees_with_mean_field() {
    for (u, f) in [(0.0, 0.05), (0.5, 0.02), (0.5, 0.05)] {
        let cfg = homogeneous(u, f);
        let h = HilbertConfig::for_config(&cfg).unwrap();
        let lb = evolve_from_vacuum(&cfg, &h, &EvolveOptions::for_config(&cfg)).unwrap();
        assert!(lb.hygiene.is_clean());
        let mf = integrate(&cfg, &IntegrateOptions::for_config(&cfg)).unwrap();
        assert_eq!(lb.times.len(), mf.times.len());
        let t_end = cfg.pulse.center + 3.0 * cfg.pulse.duration + 5.0 / purcell_rate(&cfg).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for ((t, x), y) in lb.times.iter().zip(&lb.a).zip(mf.field()) {
            if *t > t_end {
                break;
            }
            num += (x - y).norm_sqr();
            den += y.norm_sqr();
        }
        let err = (num / den).sqrt();
        assert!(err < 0.05, "U/gamma = {u}, F0/kappa = {f}: L2 error {err}");
    }
}

#[test]
fn linear_response_has_no_nonlinear_phase() {
    for u in [0.5, 2.0] {
        let cfg = homogeneous(u, 0.01);
        let h = HilbertConfig::for_config(&cfg).unwrap();
        let (p, _) = lindblad_nonlinear_phase(
            &cfg,
            Baseline::Harmonic,
            &WindowPolicy::default(),
            &h,
            &EvolveOptions::for_config(&cfg),
        )
        .unwrap();
        assert!(p.delta_phi.abs() < 1e-3, "U/gamma = {u}: {}", p.delta_phi);
        assert!(p.hygiene.is_clean() && p.baseline_hygiene.is_clean());
    }
}

#[test]
fn blockade_suppresses_second_level() {
    let p: Vec<f64> = [0.0, 0.5, 2.0].iter().map(|&u| max_p2(u, 0.3)).collect();
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
}

#[test]
fn truncation_is_converged_at_default() {
    let cfg = homogeneous(0.5, 0.2);
    let h = HilbertConfig::for_config(&cfg).unwrap();
    let opts = EvolveOptions::for_config(&cfg);
    let policy = WindowPolicy::default();
    let a = lindblad_nonlinear_phase(&cfg, Baseline::Harmonic, &policy, &h, &opts).unwrap().0;
    let b = lindblad_nonlinear_phase(&cfg, Baseline::Harmonic, &policy, &h.with_photons(h.n_photon_max + 2).unwrap(), &opts)
        .unwrap()
        .0;
    assert!((a.delta_phi - b.delta_phi).abs() < 0.01 * a.delta_phi.abs());
}

#[test]
fn lindblad_phase_is_within_factor_two_of_mean_field() {
    let cfg = homogeneous(0.5, 0.2);
    let h = HilbertConfig::for_config(&cfg).unwrap();
    let lb = lindblad_nonlinear_phase(&cfg, Baseline::Harmonic, &WindowPolicy::default(), &h, &EvolveOptions::for_config(&cfg))
        .unwrap()
        .0
        .delta_phi;
    let mf = meanfield_nonlinear_phase(&cfg, Baseline::Harmonic, &WindowPolicy::default(), &Tolerances::default())
        .unwrap()
        .0
        .cavity;
    let r = lb / mf;
    assert!(r > 0.5 && r < 2.0, "ratio {r}");
}
