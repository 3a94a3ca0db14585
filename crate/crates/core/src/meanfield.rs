//! Mean-field dynamics of the cavity field `⟨a⟩` and the dipole coherences.
//!
//! Two models are provided:
//!
//! * identical wells, where only the bright mode `⟨B₀⟩` couples to the field
//!   and the Kerr term reduces to `i(2U/N)|B₀|²B₀`;
//! * an asymmetric pair (`N = 2`), integrated either in the local basis
//!   `(⟨b₁⟩, ⟨b₂⟩)` or in the bright/dark basis `(⟨B₀⟩, ⟨B₁⟩)`.
//!
//! Integration runs in the frame rotating at the drive carrier by default;
//! lab-frame coherences are recovered as `X_lab(t) = X_rot(t) e^{−iω_d t}`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drive_amplitude, purcell_rate, CollectiveCoefficients, Frame, SystemConfig};
use crate::ode::{self, Tolerances};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// `modes = [B₀]` or `[B₀, B₁]`.
    Collective,
    /// `modes = [b₁, b₂]`.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldModel {
    Identical,
    TwoWell(Representation),
}

impl MeanFieldModel {
    /// Identical-well model for homogeneous sets, local two-well model otherwise.
    pub fn for_config(cfg: &SystemConfig) -> Result<Self> {
        if cfg.is_homogeneous() {
            Ok(MeanFieldModel::Identical)
        } else if cfg.n_wells() == 2 {
            Ok(MeanFieldModel::TwoWell(Representation::Local))
        } else {
            Err(Error::invalid(
                "dipoles",
                "inhomogeneous mean-field model is only available for N = 2",
            ))
        }
    }

    pub fn representation(self) -> Representation {
        match self {
            MeanFieldModel::Identical => Representation::Collective,
            MeanFieldModel::TwoWell(r) => r,
        }
    }

    fn n_modes(self) -> usize {
        match self {
            MeanFieldModel::Identical => 1,
            MeanFieldModel::TwoWell(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub a: Complex64,
    pub modes: Vec<Complex64>,
    pub repr: Representation,
}

impl MeanFieldState {
    pub fn vacuum(model: MeanFieldModel) -> Self {
        MeanFieldState {
            a: ZERO,
            modes: vec![ZERO; model.n_modes()],
            repr: model.representation(),
        }
    }

    fn from_flat(y: &[Complex64], repr: Representation) -> Self {
        MeanFieldState {
            a: y[0],
            modes: y[1..].to_vec(),
            repr,
        }
    }

    fn to_flat(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(1 + self.modes.len());
        v.push(self.a);
        v.extend_from_slice(&self.modes);
        v
    }

    /// Bright-mode coherence `⟨B₀⟩`.
    pub fn bright(&self) -> Complex64 {
        match self.repr {
            Representation::Collective => self.modes[0],
            Representation::Local => {
                self.modes.iter().sum::<Complex64>() / (self.modes.len() as f64).sqrt()
            }
        }
    }

    /// Dark-mode coherence `⟨B₁⟩` of a pair, if the state has two modes.
    pub fn dark(&self) -> Option<Complex64> {
        if self.modes.len() != 2 {
            return None;
        }
        Some(match self.repr {
            Representation::Collective => self.modes[1],
            Representation::Local => (self.modes[1] - self.modes[0]) / 2f64.sqrt(),
        })
    }

    /// Same physical state expressed in the other basis.
    pub fn to_representation(&self, repr: Representation) -> Result<Self> {
        if repr == self.repr || self.modes.len() == 1 {
            return Ok(MeanFieldState {
                repr,
                ..self.clone()
            });
        }
        let t = CollectiveCoefficients::new(self.modes.len());
        let modes = match repr {
            Representation::Collective => t.to_collective(&self.modes)?,
            Representation::Local => t.to_local(&self.modes)?,
        };
        Ok(MeanFieldState {
            a: self.a,
            modes,
            repr,
        })
    }

    fn scaled(&self, phase: Complex64) -> Self {
        MeanFieldState {
            a: self.a * phase,
            modes: self.modes.iter().map(|z| z * phase).collect(),
            repr: self.repr,
        }
    }
}

/// Frequency offset subtracted in the given frame.
fn frame_shift(cfg: &SystemConfig) -> f64 {
    match cfg.frame {
        Frame::Lab => 0.0,
        Frame::RotatingAtDrive => cfg.pulse.carrier,
    }
}

/// Precomputed coefficients of the identical-well equations.
#[derive(Debug, Clone)]
struct IdenticalRhs {
    cfg: SystemConfig,
    field_decay: Complex64,
    dipole_decay: Complex64,
    collective_g: f64,
    kerr: f64,
}

impl IdenticalRhs {
    fn new(cfg: &SystemConfig) -> Result<Self> {
        let h = cfg.homogeneous_params()?;
        let s = frame_shift(cfg);
        Ok(IdenticalRhs {
            cfg: cfg.clone(),
            field_decay: Complex64::new(cfg.cavity.kappa / 2.0, cfg.cavity.omega_c - s),
            dipole_decay: Complex64::new(h.dipole.gamma / 2.0, h.dipole.omega - s),
            collective_g: h.collective_coupling(),
            kerr: 2.0 * h.dipole.anharmonicity / h.n as f64,
        })
    }

    fn eval(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let a = y[0];
        let b = y[1];
        let f = drive_amplitude(t, &self.cfg.pulse, self.cfg.frame);
        dy[0] = -self.field_decay * a - I * self.collective_g * b - I * f;
        dy[1] = -self.dipole_decay * b + I * self.kerr * b.norm_sqr() * b - I * self.collective_g * a;
    }
}

#[derive(Debug, Clone)]
struct TwoWellRhs {
    cfg: SystemConfig,
    repr: Representation,
    field_decay: Complex64,
    well_decay: [Complex64; 2],
    couplings: [f64; 2],
    kerr: [f64; 2],
    // collective-form coefficients
    mean_decay: Complex64,
    mismatch: Complex64,
    bright_g: f64,
    u: f64,
}

impl TwoWellRhs {
    fn new(cfg: &SystemConfig, repr: Representation) -> Result<Self> {
        if cfg.n_wells() != 2 {
            return Err(Error::WellCount {
                expected: 2,
                got: cfg.n_wells(),
            });
        }
        let s = frame_shift(cfg);
        let [d1, d2] = [cfg.dipoles[0], cfg.dipoles[1]];
        if repr == Representation::Collective {
            let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            if !same(d1.coupling, d2.coupling) {
                return Err(Error::Inhomogeneous("g"));
            }
            if !same(d1.anharmonicity, d2.anharmonicity) {
                return Err(Error::Inhomogeneous("U"));
            }
        }
        let w1 = Complex64::new(d1.gamma / 2.0, d1.omega - s);
        let w2 = Complex64::new(d2.gamma / 2.0, d2.omega - s);
        Ok(TwoWellRhs {
            cfg: cfg.clone(),
            repr,
            field_decay: Complex64::new(cfg.cavity.kappa / 2.0, cfg.cavity.omega_c - s),
            well_decay: [w1, w2],
            couplings: [d1.coupling, d2.coupling],
            kerr: [2.0 * d1.anharmonicity, 2.0 * d2.anharmonicity],
            // (γ̄/2 + iω̄) and (Δγ/2 + iΔω) with ζ̄ = (ζ₁+ζ₂)/2, Δζ = (ζ₂−ζ₁)/2
            mean_decay: (w1 + w2) / 2.0,
            mismatch: (w2 - w1) / 2.0,
            bright_g: 2f64.sqrt() * d1.coupling,
            u: d1.anharmonicity,
        })
    }

    fn eval(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let a = y[0];
        let f = drive_amplitude(t, &self.cfg.pulse, self.cfg.frame);
        match self.repr {
            Representation::Local => {
                let (b1, b2) = (y[1], y[2]);
                dy[0] = -self.field_decay * a - I * (self.couplings[0] * b1 + self.couplings[1] * b2) - I * f;
                dy[1] = -self.well_decay[0] * b1 - I * self.couplings[0] * a + I * self.kerr[0] * b1.norm_sqr() * b1;
                dy[2] = -self.well_decay[1] * b2 - I * self.couplings[1] * a + I * self.kerr[1] * b2.norm_sqr() * b2;
            }
            Representation::Collective => {
                let (b0, b1) = (y[1], y[2]);
                // ω̄(t) = ω̄ − U(|B₀|² + |B₁|²),  Δω(t) = Δω − 2U Re[B₀* B₁]
                let mean = self.mean_decay - I * self.u * (b0.norm_sqr() + b1.norm_sqr());
                let mism = self.mismatch - I * 2.0 * self.u * (b0.conj() * b1).re;
                dy[0] = -self.field_decay * a - I * self.bright_g * b0 - I * f;
                dy[1] = -mean * b0 - mism * b1 - I * self.bright_g * a;
                dy[2] = -mean * b1 - mism * b0;
            }
        }
    }
}

/// Identical-well equations of motion for `(⟨a⟩, ⟨B₀⟩)` in `cfg.frame`.
pub fn rhs_identical(s: &MeanFieldState, t: f64, cfg: &SystemConfig) -> Result<MeanFieldState> {
    if s.modes.len() != 1 {
        return Err(Error::LengthMismatch {
            expected: 1,
            got: s.modes.len(),
        });
    }
    let rhs = IdenticalRhs::new(cfg)?;
    let mut dy = [ZERO; 2];
    rhs.eval(t, &[s.a, s.modes[0]], &mut dy);
    Ok(MeanFieldState::from_flat(&dy, Representation::Collective))
}

/// Two-well equations in the representation carried by `s`.
pub fn rhs_two_well(s: &MeanFieldState, t: f64, cfg: &SystemConfig) -> Result<MeanFieldState> {
    if s.modes.len() != 2 {
        return Err(Error::LengthMismatch {
            expected: 2,
            got: s.modes.len(),
        });
    }
    let rhs = TwoWellRhs::new(cfg, s.repr)?;
    let mut dy = [ZERO; 3];
    rhs.eval(t, &s.to_flat(), &mut dy);
    Ok(MeanFieldState::from_flat(&dy, s.repr))
}

enum Rhs {
    Identical(IdenticalRhs),
    TwoWell(TwoWellRhs),
}

impl ode::System for Rhs {
    fn dim(&self) -> usize {
        match self {
            Rhs::Identical(_) => 2,
            Rhs::TwoWell(_) => 3,
        }
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        match self {
            Rhs::Identical(r) => r.eval(t, y, dy),
            Rhs::TwoWell(r) => r.eval(t, y, dy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub tolerances: Tolerances,
    /// Model override; `None` picks [`MeanFieldModel::for_config`].
    pub model: Option<MeanFieldModel>,
    /// Frame used for the numerical integration (results are stored in `cfg.frame`).
    pub integration_frame: Frame,
    pub initial: Option<MeanFieldState>,
}

impl IntegrateOptions {
    /// Grid from 0 to `t₀ + 3T + 20/γ_slow`, with `dt` from [`default_dt`].
    pub fn for_config(cfg: &SystemConfig) -> Self {
        let t_off = cfg.pulse.center + 3.0 * cfg.pulse.duration;
        IntegrateOptions {
            t_start: 0.0,
            t_end: t_off + 20.0 / slowest_decay(cfg),
            dt: default_dt(cfg),
            tolerances: Tolerances::default(),
            model: None,
            integration_frame: Frame::RotatingAtDrive,
            initial: None,
        }
    }
}

/// Slowest dipole decay scale: Purcell rate when defined, else the smallest γₙ.
pub fn slowest_decay(cfg: &SystemConfig) -> f64 {
    let gmin = cfg.dipoles.iter().map(|d| d.gamma).fold(f64::INFINITY, f64::min);
    match purcell_rate(cfg) {
        Ok(g) => g.min(gmin.max(g)),
        Err(_) => gmin,
    }
}

/// Largest grid spacing with at least 20 samples per cavity decay time and
/// per shortest oscillation period in the stored frame.
pub fn max_dt(cfg: &SystemConfig) -> f64 {
    let shift = frame_shift(cfg);
    let mut fastest = (cfg.cavity.omega_c - shift).abs();
    for d in &cfg.dipoles {
        fastest = fastest.max((d.omega - shift).abs());
    }
    let period = if fastest > 0.0 {
        2.0 * std::f64::consts::PI / fastest
    } else {
        f64::INFINITY
    };
    let decay = 1.0 / cfg.cavity.kappa.max(cfg.dipoles.iter().map(|d| d.gamma).fold(0.0, f64::max));
    period.min(decay) / 20.0
}

/// Default sample spacing: the resolution bound for both frames, capped at 2 fs.
pub fn default_dt(cfg: &SystemConfig) -> f64 {
    let bound = max_dt(&cfg.with_frame(Frame::Lab)).min(max_dt(&cfg.with_frame(Frame::RotatingAtDrive)));
    let dt = bound.min(0.002);
    // round down to a clean value so grids are reproducible across platforms
    let scale = 10f64.powi(dt.log10().floor() as i32);
    (dt / scale).floor() * scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub frame: Frame,
    pub model: MeanFieldModel,
    pub config: SystemConfig,
}

impl MeanFieldTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn field(&self) -> Vec<Complex64> {
        self.states.iter().map(|s| s.a).collect()
    }

    pub fn bright(&self) -> Vec<Complex64> {
        self.states.iter().map(MeanFieldState::bright).collect()
    }

    pub fn dark(&self) -> Option<Vec<Complex64>> {
        self.states.iter().map(MeanFieldState::dark).collect()
    }

    /// Copy with every coherence re-expressed in `frame`.
    pub fn in_frame(&self, frame: Frame) -> Self {
        if frame == self.frame {
            return self.clone();
        }
        let wd = self.config.pulse.carrier;
        // lab = rot · e^{−iω_d t}
        let sign = if frame == Frame::Lab { -1.0 } else { 1.0 };
        let states = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| s.scaled(Complex64::from_polar(1.0, sign * wd * t)))
            .collect();
        MeanFieldTrajectory {
            times: self.times.clone(),
            states,
            frame,
            model: self.model,
            config: self.config.with_frame(frame),
        }
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at_or_after(&self, t: f64) -> Option<usize> {
        let eps = 1e-9 * self.dt().max(1e-12);
        self.times.iter().position(|&x| x >= t - eps)
    }

    /// Writes `t, a_re, a_im, <mode>_re, <mode>_im, …` with a `#` header naming the frame.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&str> = match self.model.representation() {
            Representation::Collective if self.model == MeanFieldModel::Identical => vec!["B0"],
            Representation::Collective => vec!["B0", "B1"],
            Representation::Local => vec!["b1", "b2"],
        };
        writeln!(
            w,
            "# frame={} model={} representation={}",
            self.frame.as_str(),
            model_name(self.model),
            repr_name(self.model.representation())
        )?;
        write!(w, "t,a_re,a_im")?;
        for n in &names {
            write!(w, ",{n}_re,{n}_im")?;
        }
        writeln!(w)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t},{},{}", s.a.re, s.a.im)?;
            for m in &s.modes {
                write!(w, ",{},{}", m.re, m.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// CSV next to a JSON sidecar carrying the config snapshot.
    pub fn export(&self, csv_path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
        let sidecar = csv_path.with_extension("json");
        let meta = TrajectoryMetadata {
            frame: self.frame,
            model: self.model,
            samples: self.len(),
            dt: self.dt(),
            config: self.config.clone(),
        };
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub frame: Frame,
    pub model: MeanFieldModel,
    pub samples: usize,
    pub dt: f64,
    pub config: SystemConfig,
}

fn model_name(m: MeanFieldModel) -> &'static str {
    match m {
        MeanFieldModel::Identical => "identical",
        MeanFieldModel::TwoWell(_) => "two_well",
    }
}

fn repr_name(r: Representation) -> &'static str {
    match r {
        Representation::Collective => "collective",
        Representation::Local => "local",
    }
}

/// Integrates the mean-field equations on a uniform grid.
///
/// The system starts in vacuum unless `opts.initial` is set. Results are
/// stored in `cfg.frame`.
pub fn integrate(cfg: &SystemConfig, opts: &IntegrateOptions) -> Result<MeanFieldTrajectory> {
    cfg.validate()?;
    let model = match opts.model {
        Some(m) => m,
        None => MeanFieldModel::for_config(cfg)?,
    };
    let times = ode::uniform_grid(opts.t_start, opts.t_end, opts.dt)?;
    let work_cfg = cfg.with_frame(opts.integration_frame);
    let rhs = match model {
        MeanFieldModel::Identical => Rhs::Identical(IdenticalRhs::new(&work_cfg)?),
        MeanFieldModel::TwoWell(r) => Rhs::TwoWell(TwoWellRhs::new(&work_cfg, r)?),
    };

    let initial = match &opts.initial {
        Some(s) => {
            if s.modes.len() != model.n_modes() {
                return Err(Error::LengthMismatch {
                    expected: model.n_modes(),
                    got: s.modes.len(),
                });
            }
            // initial state is given in cfg.frame at t_start
            let s = s.to_representation(model.representation())?;
            convert_frame(&s, opts.t_start, cfg.frame, opts.integration_frame, cfg.pulse.carrier)
        }
        None => MeanFieldState::vacuum(model),
    };

    let repr = model.representation();
    let mut states = Vec::with_capacity(times.len());
    ode::integrate(&rhs, &initial.to_flat(), &times, &opts.tolerances, |_, t, y| {
        let s = MeanFieldState::from_flat(y, repr);
        states.push(convert_frame(&s, t, opts.integration_frame, cfg.frame, cfg.pulse.carrier));
        Ok(())
    })?;

    Ok(MeanFieldTrajectory {
        times,
        states,
        frame: cfg.frame,
        model,
        config: cfg.clone(),
    })
}

fn convert_frame(s: &MeanFieldState, t: f64, from: Frame, to: Frame, carrier: f64) -> MeanFieldState {
    match (from, to) {
        (Frame::RotatingAtDrive, Frame::Lab) => s.scaled(Complex64::from_polar(1.0, -carrier * t)),
        (Frame::Lab, Frame::RotatingAtDrive) => s.scaled(Complex64::from_polar(1.0, carrier * t)),
        _ => s.clone(),
    }
}

/// Chirped bright-mode frequency `ω₀ − (2U/N)|⟨B₀(t)⟩|²` on the trajectory grid.
pub fn instantaneous_frequency(traj: &MeanFieldTrajectory) -> Result<Vec<f64>> {
    let h = traj.config.homogeneous_params()?;
    let kerr = 2.0 * h.dipole.anharmonicity / h.n as f64;
    Ok(traj
        .states
        .iter()
        .map(|s| h.dipole.omega - kerr * s.bright().norm_sqr())
        .collect())
}

/// Bad-cavity conditions under which the field can be eliminated adiabatically:
/// `κ ≥ 10γ` and `(κ − γ)/4 > √N g`.
pub fn bad_cavity_regime(cfg: &SystemConfig) -> Result<bool> {
    let h = cfg.homogeneous_params()?;
    let k = cfg.cavity.kappa;
    let g = h.dipole.gamma;
    Ok(k >= 10.0 * g && (k - g) / 4.0 > h.collective_coupling())
}

/// Adiabatically eliminated field `−i(2√N g/κ)⟨B₀⟩ − i(2/κ)F_d(t)` in `cfg.frame`.
///
/// Logs a warning when the configuration is outside the bad-cavity regime.
pub fn adiabatic_field(b0: Complex64, t: f64, cfg: &SystemConfig) -> Result<Complex64> {
    let h = cfg.homogeneous_params()?;
    if !bad_cavity_regime(cfg)? {
        log::warn!(
            "adiabatic elimination outside the bad-cavity regime (kappa = {}, gamma = {}, sqrt(N) g = {})",
            cfg.cavity.kappa,
            h.dipole.gamma,
            h.collective_coupling()
        );
    }
    let k = cfg.cavity.kappa;
    let f = drive_amplitude(t, &cfg.pulse, cfg.frame);
    Ok(-I * (2.0 * h.collective_coupling() / k) * b0 - I * (2.0 / k) * f)
}

/// Free Stuart–Landau decay of the bright mode after the pulse, in the
/// resonant rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostPulseOracle {
    pub b_off: f64,
    pub phi_off: f64,
    pub t_off: f64,
    pub gamma_tilde: f64,
    pub anharmonicity: f64,
    pub n: usize,
}

impl PostPulseOracle {
    pub fn new(b_off: f64, phi_off: f64, t_off: f64, gamma_tilde: f64, anharmonicity: f64, n: usize) -> Result<Self> {
        if !(b_off >= 0.0) {
            return Err(Error::invalid("b_off", "must be >= 0"));
        }
        if !(gamma_tilde > 0.0) {
            return Err(Error::invalid("gamma_tilde", "must be > 0"));
        }
        if n == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        Ok(PostPulseOracle {
            b_off,
            phi_off,
            t_off,
            gamma_tilde,
            anharmonicity,
            n,
        })
    }

    /// Reads `B_off` and the unwrapped `φ_off` from the rotating-frame bright
    /// mode at the first sample at or after `t_off`.
    pub fn from_trajectory(traj: &MeanFieldTrajectory, t_off: f64) -> Result<Self> {
        let h = traj.config.homogeneous_params()?;
        let rot = traj.in_frame(Frame::RotatingAtDrive);
        let idx = rot.index_at_or_after(t_off).ok_or(Error::TrajectoryTooShort {
            end: *traj.times.last().unwrap_or(&0.0),
            needed: t_off,
        })?;
        let bright = rot.bright();
        let phases = unwrapped_phase(&bright[..=idx]);
        PostPulseOracle::new(
            bright[idx].norm(),
            phases[idx],
            rot.times[idx],
            purcell_rate(&traj.config)?,
            h.dipole.anharmonicity,
            h.n,
        )
    }

    pub fn phase(&self, t: f64) -> f64 {
        let tau = t - self.t_off;
        self.phi_off + stationary_phase(self) * (1.0 - (-self.gamma_tilde * tau).exp())
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        self.b_off * (-0.5 * self.gamma_tilde * (t - self.t_off)).exp()
    }
}

/// `⟨B₀(t)⟩ = B_off e^{−γ̃(t−t_off)/2} e^{iφ(t)}` for `t ≥ t_off` (rotating frame).
pub fn post_pulse_analytic(oracle: &PostPulseOracle, t: f64) -> Result<Complex64> {
    if t < oracle.t_off {
        return Err(Error::invalid("t", "analytic solution holds only for t >= t_off"));
    }
    Ok(Complex64::from_polar(oracle.amplitude(t), oracle.phase(t)))
}

/// Lab-frame form: the rotating-frame solution times `e^{−iω_d t}`.
pub fn post_pulse_analytic_lab(oracle: &PostPulseOracle, t: f64, carrier: f64) -> Result<Complex64> {
    Ok(post_pulse_analytic(oracle, t)? * Complex64::from_polar(1.0, -carrier * t))
}

/// Accumulated nonlinear phase `Δφ_ss = 2U B_off² / (N γ̃)`.
pub fn stationary_phase(oracle: &PostPulseOracle) -> f64 {
    2.0 * oracle.anharmonicity * oracle.b_off * oracle.b_off / (oracle.n as f64 * oracle.gamma_tilde)
}

/// Continuous phase of a complex series; zero-amplitude leading samples get phase 0.
pub fn unwrapped_phase(z: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut prev: Option<f64> = None;
    let mut offset = 0.0;
    for v in z {
        if v.norm() == 0.0 {
            out.push(prev.map_or(0.0, |p| p + offset));
            continue;
        }
        let p = v.arg();
        if let Some(q) = prev {
            let mut d = p - q;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
                offset -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
                offset += 2.0 * std::f64::consts::PI;
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}
