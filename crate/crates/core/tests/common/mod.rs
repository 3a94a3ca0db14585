#![allow(dead_code)]

use kerrphase::{PulseParams, SystemConfig};

pub const OMEGA0: f64 = 40.0;
pub const KAPPA: f64 = 12.0;
pub const GAMMA: f64 = 0.6;
pub const SQRT_N_G: f64 = 1.0;
pub const T0: f64 = 0.6;
pub const WIDTH: f64 = 0.155;

pub fn pulse(f0_over_kappa: f64) -> PulseParams {
    PulseParams::new(f0_over_kappa * KAPPA, OMEGA0, T0, WIDTH).unwrap()
}

/// Two identical wells with the reference parameters.
pub fn homogeneous(u_over_gamma: f64, f0_over_kappa: f64) -> SystemConfig {
    SystemConfig::homogeneous(2, OMEGA0, KAPPA, GAMMA, u_over_gamma * GAMMA, SQRT_N_G, pulse(f0_over_kappa)).unwrap()
}

/// Reference pair with the second well's rate or frequency changed.
pub fn two_well(u_over_gamma: f64, f0_over_kappa: f64, gamma2: f64, omega2: f64) -> SystemConfig {
    let mut c = homogeneous(u_over_gamma, f0_over_kappa);
    c.set("dipoles[1].gamma", gamma2).unwrap();
    c.set("dipoles[1].omega", omega2).unwrap();
    c
}
