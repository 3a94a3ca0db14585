//! Physical parameters of the cavity–quantum-well system.
//!
//! Frequencies and rates are angular (rad/ps), times are in ps. The bare
//! dipole is a Kerr oscillator `ω b†b − U b†b†bb` whose ladder is
//! `E_ν = ων − U(ν² − ν)`; the cavity is driven by a Gaussian pulse
//! `F₀ φ(t) e^{−iω_d t}` with `φ(t) = exp[−(t−t₀)²/(2T²)]`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether wells are identical.
const HOMOGENEITY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleParams {
    /// Fundamental transition frequency ωₙ.
    pub omega: f64,
    /// Kerr anharmonicity Uₙ.
    #[serde(rename = "U")]
    pub anharmonicity: f64,
    /// Local relaxation rate γₙ.
    pub gamma: f64,
    /// Light–matter coupling gₙ.
    #[serde(rename = "g")]
    pub coupling: f64,
}

impl DipoleParams {
    pub fn new(omega: f64, anharmonicity: f64, gamma: f64, coupling: f64) -> Result<Self> {
        let d = DipoleParams {
            omega,
            anharmonicity,
            gamma,
            coupling,
        };
        d.validate("dipole")?;
        Ok(d)
    }

    fn validate(&self, ctx: &str) -> Result<()> {
        finite(ctx, "omega", self.omega)?;
        finite(ctx, "U", self.anharmonicity)?;
        finite(ctx, "gamma", self.gamma)?;
        finite(ctx, "g", self.coupling)?;
        if self.omega <= 0.0 {
            return Err(Error::invalid(format!("{ctx}.omega"), "must be > 0"));
        }
        if self.anharmonicity < 0.0 {
            return Err(Error::invalid(format!("{ctx}.U"), "must be >= 0"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid(format!("{ctx}.gamma"), "must be > 0"));
        }
        if self.coupling < 0.0 {
            return Err(Error::invalid(format!("{ctx}.g"), "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    pub omega_c: f64,
    pub kappa: f64,
}

impl CavityParams {
    pub fn new(omega_c: f64, kappa: f64) -> Result<Self> {
        let c = CavityParams { omega_c, kappa };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        finite("cavity", "omega_c", self.omega_c)?;
        finite("cavity", "kappa", self.kappa)?;
        if self.kappa <= 0.0 {
            return Err(Error::invalid("cavity.kappa", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseParams {
    /// Drive strength F₀.
    #[serde(rename = "F0")]
    pub amplitude: f64,
    /// Carrier frequency ω_d.
    #[serde(rename = "omega_d")]
    pub carrier: f64,
    /// Pulse center t₀.
    #[serde(rename = "t0")]
    pub center: f64,
    /// Gaussian width T.
    #[serde(rename = "T")]
    pub duration: f64,
}

impl PulseParams {
    pub fn new(amplitude: f64, carrier: f64, center: f64, duration: f64) -> Result<Self> {
        let p = PulseParams {
            amplitude,
            carrier,
            center,
            duration,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        finite("pulse", "F0", self.amplitude)?;
        finite("pulse", "omega_d", self.carrier)?;
        finite("pulse", "t0", self.center)?;
        finite("pulse", "T", self.duration)?;
        if self.duration <= 0.0 {
            return Err(Error::invalid("pulse.T", "must be > 0"));
        }
        if self.amplitude < 0.0 {
            return Err(Error::invalid("pulse.F0", "must be >= 0"));
        }
        Ok(())
    }
}

/// Frame in which coherences are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    #[default]
    RotatingAtDrive,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Lab => "lab",
            Frame::RotatingAtDrive => "rotating_at_drive",
        }
    }
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lab" => Ok(Frame::Lab),
            "rotating_at_drive" | "rotating" => Ok(Frame::RotatingAtDrive),
            other => Err(Error::invalid("frame", format!("unknown frame `{other}`"))),
        }
    }
}

/// Full parameter set: one cavity mode, `N ≥ 1` dipoles, one drive pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub cavity: CavityParams,
    pub dipoles: Vec<DipoleParams>,
    pub pulse: PulseParams,
    #[serde(default)]
    pub frame: Frame,
}

/// Parameters shared by every well of a homogeneous configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousParams {
    pub n: usize,
    pub dipole: DipoleParams,
}

impl HomogeneousParams {
    /// Collective coupling √N g.
    pub fn collective_coupling(&self) -> f64 {
        (self.n as f64).sqrt() * self.dipole.coupling
    }
}

impl SystemConfig {
    pub fn new(
        cavity: CavityParams,
        dipoles: Vec<DipoleParams>,
        pulse: PulseParams,
        frame: Frame,
    ) -> Result<Self> {
        let cfg = SystemConfig {
            cavity,
            dipoles,
            pulse,
            frame,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n` identical wells with collective coupling `√N g = sqrt_n_g`.
    #[allow(clippy::too_many_arguments)]
    pub fn homogeneous(
        n: usize,
        omega0: f64,
        kappa: f64,
        gamma: f64,
        anharmonicity: f64,
        sqrt_n_g: f64,
        pulse: PulseParams,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dipoles", "need at least one dipole"));
        }
        let g = sqrt_n_g / (n as f64).sqrt();
        let d = DipoleParams::new(omega0, anharmonicity, gamma, g)?;
        SystemConfig::new(
            CavityParams::new(omega0, kappa)?,
            vec![d; n],
            pulse,
            Frame::RotatingAtDrive,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dipoles.is_empty() {
            return Err(Error::invalid("dipoles", "need at least one dipole"));
        }
        self.cavity.validate()?;
        self.pulse.validate()?;
        for (i, d) in self.dipoles.iter().enumerate() {
            d.validate(&format!("dipoles[{i}]"))?;
        }
        Ok(())
    }

    pub fn n_wells(&self) -> usize {
        self.dipoles.len()
    }

    /// Returns the shared well parameters, or the first field that differs.
    pub fn homogeneous_params(&self) -> Result<HomogeneousParams> {
        let first = self.dipoles[0];
        for d in &self.dipoles[1..] {
            if !close(d.omega, first.omega) {
                return Err(Error::Inhomogeneous("omega"));
            }
            if !close(d.anharmonicity, first.anharmonicity) {
                return Err(Error::Inhomogeneous("U"));
            }
            if !close(d.gamma, first.gamma) {
                return Err(Error::Inhomogeneous("gamma"));
            }
            if !close(d.coupling, first.coupling) {
                return Err(Error::Inhomogeneous("g"));
            }
        }
        Ok(HomogeneousParams {
            n: self.dipoles.len(),
            dipole: first,
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous_params().is_ok()
    }

    /// Copy with every well's anharmonicity replaced.
    pub fn with_anharmonicity(&self, u: f64) -> Self {
        let mut c = self.clone();
        for d in &mut c.dipoles {
            d.anharmonicity = u;
        }
        c
    }

    pub fn with_amplitude(&self, f0: f64) -> Self {
        let mut c = self.clone();
        c.pulse.amplitude = f0;
        c
    }

    pub fn with_frame(&self, frame: Frame) -> Self {
        let mut c = self.clone();
        c.frame = frame;
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SystemConfig always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Reads a parameter by its configuration key, e.g. `pulse.F0` or `dipoles[1].gamma`.
    pub fn get(&self, key: &str) -> Result<f64> {
        let mut c = self.clone();
        let mut out = None;
        c.visit_key(key, |slot| {
            if out.is_none() {
                out = Some(*slot);
            }
        })?;
        out.ok_or_else(|| Error::UnknownKey(key.to_string()))
    }

    /// Sets a parameter by key. `dipoles[*].U` addresses every well.
    /// The result is re-validated.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let mut next = self.clone();
        next.visit_key(key, |slot| *slot = value)?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Applies a `key=value` override; `frame` accepts a frame name.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let value = value.trim();
        if key == "frame" {
            self.frame = value.parse()?;
            return Ok(());
        }
        let v: f64 = value
            .parse()
            .map_err(|_| Error::ConfigParse(format!("override `{assignment}`: `{value}` is not a number")))?;
        self.set(key, v)
    }

    fn visit_key(&mut self, key: &str, mut f: impl FnMut(&mut f64)) -> Result<()> {
        let unknown = || Error::UnknownKey(key.to_string());
        let (head, field) = key.split_once('.').ok_or_else(unknown)?;
        match head {
            "cavity" => match field {
                "omega_c" => f(&mut self.cavity.omega_c),
                "kappa" => f(&mut self.cavity.kappa),
                _ => return Err(unknown()),
            },
            "pulse" => match field {
                "F0" => f(&mut self.pulse.amplitude),
                "omega_d" => f(&mut self.pulse.carrier),
                "t0" => f(&mut self.pulse.center),
                "T" => f(&mut self.pulse.duration),
                _ => return Err(unknown()),
            },
            _ => {
                let idx = head
                    .strip_prefix("dipoles[")
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(unknown)?;
                let targets: Vec<usize> = if idx == "*" {
                    (0..self.dipoles.len()).collect()
                } else {
                    let i: usize = idx.parse().map_err(|_| unknown())?;
                    if i >= self.dipoles.len() {
                        return Err(unknown());
                    }
                    vec![i]
                };
                for i in targets {
                    let d = &mut self.dipoles[i];
                    match field {
                        "omega" => f(&mut d.omega),
                        "U" => f(&mut d.anharmonicity),
                        "gamma" => f(&mut d.gamma),
                        "g" => f(&mut d.coupling),
                        _ => return Err(unknown()),
                    }
                }
            }
        }
        Ok(())
    }
}

fn finite(ctx: &str, field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{ctx}.{field}"), "must be finite"))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= HOMOGENEITY_RTOL * a.abs().max(b.abs())
}

/// Kerr ladder energy `E_ν = ων − U(ν² − ν)`.
pub fn eigenenergy(nu: u32, d: &DipoleParams) -> f64 {
    let nu = f64::from(nu);
    d.omega * nu - d.anharmonicity * (nu * nu - nu)
}

/// Transition frequency `E_{ν+1} − E_ν = ω − 2Uν`.
///
/// Computed as the difference of the two levels so it matches
/// [`eigenenergy`] bit for bit.
pub fn level_spacing(nu: u32, d: &DipoleParams) -> f64 {
    eigenenergy(nu + 1, d) - eigenenergy(nu, d)
}

/// Purcell-enhanced dipole decay rate `γ̃ = γ(1 + 4Ng²/(κγ))`.
///
/// Only defined for wells with identical `γ` and `g`; inhomogeneous sets
/// must go through the two-well model instead.
pub fn purcell_rate(cfg: &SystemConfig) -> Result<f64> {
    let first = cfg.dipoles[0];
    for d in &cfg.dipoles[1..] {
        if !close(d.gamma, first.gamma) {
            return Err(Error::Inhomogeneous("gamma"));
        }
        if !close(d.coupling, first.coupling) {
            return Err(Error::Inhomogeneous("g"));
        }
    }
    let n = cfg.n_wells() as f64;
    let g = first.coupling;
    let gamma = first.gamma;
    Ok(gamma * (1.0 + 4.0 * n * g * g / (cfg.cavity.kappa * gamma)))
}

/// Gaussian envelope `φ(t) = exp[−(t−t₀)²/(2T²)]`.
pub fn envelope(t: f64, p: &PulseParams) -> f64 {
    let x = (t - p.center) / p.duration;
    (-0.5 * x * x).exp()
}

/// Complex drive `F₀φ(t)e^{−iω_d t}` in the lab frame, `F₀φ(t)` in the frame rotating at `ω_d`.
pub fn drive_amplitude(t: f64, p: &PulseParams, frame: Frame) -> Complex64 {
    let f = p.amplitude * envelope(t, p);
    match frame {
        Frame::Lab => Complex64::from_polar(f, -p.carrier * t),
        Frame::RotatingAtDrive => Complex64::new(f, 0.0),
    }
}

/// Unitary map between local dipole amplitudes `bₙ` and collective modes
/// `B_α = N^{-1/2} Σₙ exp(i2παn/N) bₙ`, with wells labelled `n = 1..N`.
///
/// Row `α = 0` is the bright mode; for `N = 2` row 1 is `(−b₁ + b₂)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveCoefficients {
    n: usize,
    forward: Vec<Complex64>,
}

impl CollectiveCoefficients {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "collective transform needs N >= 1");
        let scale = 1.0 / (n as f64).sqrt();
        let mut forward = Vec::with_capacity(n * n);
        for alpha in 0..n {
            for well in 1..=n {
                let phase = 2.0 * PI * (alpha * well % n) as f64 / n as f64;
                forward.push(Complex64::from_polar(scale, phase));
            }
        }
        CollectiveCoefficients { n, forward }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Scaled coefficient `c_{α,n}/√N` (0-based well index).
    pub fn coefficient(&self, alpha: usize, well: usize) -> Complex64 {
        self.forward[alpha * self.n + well]
    }

    pub fn to_collective(&self, local: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(local.len())?;
        Ok((0..self.n)
            .map(|alpha| {
                (0..self.n)
                    .map(|w| self.coefficient(alpha, w) * local[w])
                    .sum()
            })
            .collect())
    }

    pub fn to_local(&self, collective: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(collective.len())?;
        Ok((0..self.n)
            .map(|w| {
                (0..self.n)
                    .map(|alpha| self.coefficient(alpha, w).conj() * collective[alpha])
                    .sum()
            })
            .collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dip(omega: f64, u: f64) -> DipoleParams {
        DipoleParams::new(omega, u, 0.6, 0.5).unwrap()
    }

    fn pulse() -> PulseParams {
        PulseParams::new(2.4, 40.0, 0.6, 0.155).unwrap()
    }

    #[test]
    fn eigenenergy_examples() {
        let d = dip(40.0, 0.6);
        assert_eq!(eigenenergy(0, &d), 0.0);
        assert_eq!(eigenenergy(1, &d), 40.0);
        assert_abs_diff_eq!(eigenenergy(2, &d), 78.8, epsilon = 1e-12);
        assert_abs_diff_eq!(eigenenergy(2, &d) - eigenenergy(1, &d), 38.8, epsilon = 1e-12);
    }

    #[test]
    fn level_spacing_examples() {
        assert_eq!(level_spacing(0, &dip(40.0, 0.6)), 40.0);
        assert_abs_diff_eq!(level_spacing(1, &dip(40.0, 0.6)), 38.8, epsilon = 1e-12);
        assert_eq!(level_spacing(1, &dip(40.0, 0.0)), 40.0);
    }

    #[test]
    fn purcell_examples() {
        // reference parameters: κ = 12, γ = 0.6, √N g = 1.
        let cfg = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.6, 1.0, pulse()).unwrap();
        assert_abs_diff_eq!(purcell_rate(&cfg).unwrap(), 0.6 * (1.0 + 4.0 / 7.2), epsilon = 1e-12);

        let uncoupled = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.6, 0.0, pulse()).unwrap();
        assert_eq!(purcell_rate(&uncoupled).unwrap(), 0.6);

        let doubled = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.6, 2f64.sqrt(), pulse()).unwrap();
        let base = purcell_rate(&cfg).unwrap() - 0.6;
        assert_abs_diff_eq!(purcell_rate(&doubled).unwrap() - 0.6, 2.0 * base, epsilon = 1e-12);
    }

    #[test]
    fn purcell_rejects_inhomogeneous_rates() {
        let mut cfg = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.3, 1.0, pulse()).unwrap();
        cfg.dipoles[1].gamma = 0.9;
        assert!(matches!(purcell_rate(&cfg), Err(Error::Inhomogeneous("gamma"))));
        // Frequency detuning alone does not matter for the rate.
        let mut det = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.3, 1.0, pulse()).unwrap();
        det.dipoles[1].omega = 41.6;
        assert!(purcell_rate(&det).is_ok());
    }

    #[test]
    fn envelope_examples() {
        let p = pulse();
        assert_eq!(envelope(p.center, &p), 1.0);
        let e2 = (-2.0f64).exp();
        assert_abs_diff_eq!(envelope(p.center + 2.0 * p.duration, &p), e2, epsilon = 1e-15);
        assert_abs_diff_eq!(envelope(p.center - 2.0 * p.duration, &p), e2, epsilon = 1e-15);
        assert_abs_diff_eq!(e2, 0.13534, epsilon = 1e-5);
    }

    #[test]
    fn drive_amplitude_examples() {
        let mut p = pulse();
        p.amplitude = 0.0;
        assert_eq!(drive_amplitude(0.3, &p, Frame::Lab), Complex64::new(0.0, 0.0));
        p.amplitude = 1.5;
        assert_eq!(drive_amplitude(p.center, &p, Frame::RotatingAtDrive), Complex64::new(1.5, 0.0));
        // ω_d t₀ = π
        p.carrier = PI / p.center;
        let z = drive_amplitude(p.center, &p, Frame::Lab);
        assert_abs_diff_eq!(z.re, -1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn collective_examples() {
        let t = CollectiveCoefficients::new(2);
        let z = Complex64::new(0.3, -0.7);
        let sym = t.to_collective(&[z, z]).unwrap();
        assert_abs_diff_eq!((sym[0] - z * 2f64.sqrt()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sym[1].norm(), 0.0, epsilon = 1e-15);

        let anti = t.to_collective(&[z, -z]).unwrap();
        assert_abs_diff_eq!(anti[0].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(anti[1].norm(), 2f64.sqrt() * z.norm(), epsilon = 1e-15);

        // Dark mode of a pair is (−b₁ + b₂)/√2.
        let b1 = Complex64::new(1.0, 0.0);
        let b2 = Complex64::new(0.0, 2.0);
        let c = t.to_collective(&[b1, b2]).unwrap();
        let expect = (-b1 + b2) / 2f64.sqrt();
        assert_abs_diff_eq!((c[1] - expect).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn collective_round_trip_n3() {
        let t = CollectiveCoefficients::new(3);
        let v = vec![
            Complex64::new(0.12, -1.3),
            Complex64::new(-0.7, 0.25),
            Complex64::new(2.0, 0.9),
        ];
        let back = t.to_local(&t.to_collective(&v).unwrap()).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn collective_length_checked() {
        let t = CollectiveCoefficients::new(3);
        assert!(t.to_collective(&[Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DipoleParams::new(40.0, 0.6, 0.0, 1.0).is_err());
        assert!(DipoleParams::new(40.0, -0.1, 0.6, 1.0).is_err());
        assert!(DipoleParams::new(0.0, 0.1, 0.6, 1.0).is_err());
        assert!(CavityParams::new(40.0, 0.0).is_err());
        assert!(PulseParams::new(1.0, 40.0, 0.6, 0.0).is_err());
        assert!(PulseParams::new(-1.0, 40.0, 0.6, 0.1).is_err());
        let c = CavityParams::new(40.0, 12.0).unwrap();
        assert!(SystemConfig::new(c, vec![], pulse(), Frame::Lab).is_err());
    }

    #[test]
    fn config_keys_round_trip() {
        let mut cfg = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.3, 1.0, pulse()).unwrap();
        cfg.set("dipoles[1].gamma", 0.9).unwrap();
        assert_eq!(cfg.get("dipoles[1].gamma").unwrap(), 0.9);
        cfg.set("dipoles[*].U", 0.45).unwrap();
        assert_eq!(cfg.dipoles[0].anharmonicity, 0.45);
        assert_eq!(cfg.dipoles[1].anharmonicity, 0.45);
        cfg.apply_override("pulse.F0 = 1.2").unwrap();
        assert_eq!(cfg.pulse.amplitude, 1.2);
        cfg.apply_override("frame=lab").unwrap();
        assert_eq!(cfg.frame, Frame::Lab);
        assert!(matches!(cfg.set("pulse.width", 1.0), Err(Error::UnknownKey(_))));
        assert!(matches!(cfg.set("dipoles[5].U", 1.0), Err(Error::UnknownKey(_))));
        // invalid value leaves the config untouched
        assert!(cfg.set("cavity.kappa", -1.0).is_err());
        assert_eq!(cfg.cavity.kappa, 12.0);
    }

    #[test]
    fn toml_uses_normative_keys() {
        let text = r#"
frame = "lab"

[cavity]
omega_c = 40.0
kappa = 12.0

[[dipoles]]
omega = 40.0
U = 0.3
gamma = 0.6
g = 0.7

[pulse]
F0 = 2.4
omega_d = 40.0
t0 = 0.6
T = 0.155
"#;
        let cfg = SystemConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.frame, Frame::Lab);
        assert_eq!(cfg.dipoles[0].anharmonicity, 0.3);
        assert_eq!(cfg.pulse.duration, 0.155);
        let back = SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(SystemConfig::from_toml_str(&text.replace("kappa", "kapa")).is_err());
    }

    proptest! {
        #[test]
        fn spacing_matches_energy_difference(
            omega in 1.0f64..100.0, u in 0.0f64..5.0, nu in 0u32..10
        ) {
            let d = dip(omega, u);
            prop_assert_eq!(level_spacing(nu, &d), eigenenergy(nu + 1, &d) - eigenenergy(nu, &d));
        }

        #[test]
        fn harmonic_spacing_is_flat(omega in 1.0f64..100.0, nu in 0u32..10) {
            let d = dip(omega, 0.0);
            // ω(ν+1) − ων can differ from ω in the last bit
            prop_assert!((level_spacing(nu, &d) - level_spacing(0, &d)).abs() <= 4.0 * f64::EPSILON * omega * 10.0);
        }

        #[test]
        fn collective_transform_is_unitary(
            n in 1usize..=8,
            re in proptest::collection::vec(-3.0f64..3.0, 8),
            im in proptest::collection::vec(-3.0f64..3.0, 8),
        ) {
            let t = CollectiveCoefficients::new(n);
            let v: Vec<Complex64> = (0..n).map(|i| Complex64::new(re[i], im[i])).collect();
            let fwd = t.to_collective(&v).unwrap();
            let back = t.to_local(&fwd).unwrap();
            let err: f64 = v.iter().zip(&back).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err < 1e-12);
            let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let n1: f64 = fwd.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((n0 - n1).abs() < 1e-10 * (1.0 + n0));
        }

        #[test]
        fn purcell_increases_with_coupling(g2a in 0.0f64..4.0, delta in 0.01f64..4.0) {
            let a = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.3, g2a.sqrt(), pulse()).unwrap();
            let b = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.3, (g2a + delta).sqrt(), pulse()).unwrap();
            prop_assert!(purcell_rate(&b).unwrap() > purcell_rate(&a).unwrap());
        }
    }
}
