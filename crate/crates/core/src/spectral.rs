//! Free-induction-decay windows, Fourier transform and phase spectra.
//!
//! Transform convention: `S(ω) = (2π)^{-1/2} ∫ dt x(t) e^{+iωt}`, evaluated
//! with trapezoid weights over the window on absolute time. With this sign a
//! lab-frame coherence `∝ e^{−iω₀t}` peaks at `+ω₀`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::MeanFieldTrajectory;
use crate::model::{envelope, Frame, PulseParams, SystemConfig};

pub const CONVENTION: &str = "S(w) = (2 pi)^(-1/2) * integral dt x(t) exp(+i w t), trapezoid rule, lab frame";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Cavity,
    Dipole,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Cavity => "cavity",
            Source::Dipole => "dipole",
        }
    }
}

/// Rule for the start of the post-pulse window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TOff {
    /// `t₀ + k·T`.
    PulseWidths(f64),
    /// Fixed time in ps.
    Absolute(f64),
}

impl TOff {
    pub fn resolve(self, pulse: &PulseParams) -> f64 {
        match self {
            TOff::PulseWidths(k) => pulse.center + k * pulse.duration,
            TOff::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPolicy {
    pub t_off: TOff,
    /// Frequency resolution target as a fraction of γ̃ (Δω ≤ γ̃/resolution).
    pub resolution: f64,
    /// Half-width of the unwrapping band in units of γ̃.
    pub band: f64,
    /// Minimum window length after `t_off` in units of 1/γ̃.
    pub min_length: f64,
    /// Multiplies the window by `e^{+γ̃(t−t_off)/2}`. Off by default.
    pub compensate_decay: bool,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            t_off: TOff::PulseWidths(3.0),
            resolution: 50.0,
            band: 10.0,
            min_length: 5.0,
            compensate_decay: false,
        }
    }
}

/// Decay rate used to size windows and bands: the Purcell-enhanced rate,
/// evaluated with the mean dipole rate for inhomogeneous sets.
pub fn effective_rate(cfg: &SystemConfig) -> f64 {
    let n = cfg.n_wells() as f64;
    let gamma = cfg.dipoles.iter().map(|d| d.gamma).sum::<f64>() / n;
    let g2 = cfg.dipoles.iter().map(|d| d.coupling * d.coupling).sum::<f64>() / n;
    gamma * (1.0 + 4.0 * n * g2 / (cfg.cavity.kappa * gamma))
}

/// Centre frequency where ΔΦ is read: the fundamental frequency ω₀ of the
/// first (reference) well. Detuned pairs vary the second well only.
pub fn read_frequency(cfg: &SystemConfig) -> f64 {
    cfg.dipoles[0].omega
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidWindow {
    pub t_off: f64,
    pub dt: f64,
    /// Lab-frame samples at `t_off + k·dt`.
    pub samples: Vec<Complex64>,
    pub source: Source,
    pub center: f64,
    pub gamma_tilde: f64,
    pub policy: WindowPolicy,
}

impl FidWindow {
    /// Cuts a window out of a uniformly sampled series.
    ///
    /// `frame` tells how `samples` are expressed; rotating-frame input is
    /// moved to the lab frame with `e^{−iω_d t}`.
    pub fn from_series(
        times: &[f64],
        samples: &[Complex64],
        frame: Frame,
        cfg: &SystemConfig,
        source: Source,
        policy: &WindowPolicy,
    ) -> Result<Self> {
        if times.len() != samples.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: samples.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::TrajectoryTooShort {
                end: times.last().copied().unwrap_or(0.0),
                needed: 0.0,
            });
        }
        let dt = times[1] - times[0];
        let gamma_tilde = effective_rate(cfg);
        let t_off = policy.t_off.resolve(&cfg.pulse);
        let needed = t_off + policy.min_length / gamma_tilde;
        let end = *times.last().unwrap();
        if end < needed - 1e-9 * dt {
            return Err(Error::TrajectoryTooShort { end, needed });
        }
        let start = times
            .iter()
            .position(|&t| t >= t_off - 1e-9 * dt)
            .ok_or(Error::TrajectoryTooShort { end, needed })?;

        if cfg.pulse.amplitude > 0.0 {
            let ratio = envelope(times[start], &cfg.pulse);
            // the default t₀ + 3T start sits at e^{-4.5} ≈ 1.1e-2, so warn only well above that
            if ratio >= 2e-2 {
                log::warn!("pulse envelope at window start is {ratio:.3e} of its peak");
            }
        }

        let wd = cfg.pulse.carrier;
        let t0 = times[start];
        let rate = 0.5 * gamma_tilde;
        let out = times[start..]
            .iter()
            .zip(&samples[start..])
            .map(|(&t, &x)| {
                let mut v = match frame {
                    Frame::Lab => x,
                    Frame::RotatingAtDrive => x * Complex64::from_polar(1.0, -wd * t),
                };
                if policy.compensate_decay {
                    v *= (rate * (t - t0)).exp();
                }
                v
            })
            .collect();
        Ok(FidWindow {
            t_off: t0,
            dt,
            samples: out,
            source,
            center: read_frequency(cfg),
            gamma_tilde,
            policy: *policy,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_off + k as f64 * self.dt
    }

    /// Same window delayed by `tau` (signal `x(t − τ)`).
    pub fn delayed(&self, tau: f64) -> Self {
        FidWindow {
            t_off: self.t_off + tau,
            ..self.clone()
        }
    }

    pub fn rotated(&self, phi: f64) -> Self {
        let r = Complex64::from_polar(1.0, phi);
        FidWindow {
            samples: self.samples.iter().map(|z| z * r).collect(),
            ..self.clone()
        }
    }
}

/// Post-pulse window of a mean-field trajectory.
pub fn fid_window(traj: &MeanFieldTrajectory, source: Source, policy: &WindowPolicy) -> Result<FidWindow> {
    let series = match source {
        Source::Cavity => traj.field(),
        Source::Dipole => traj.bright(),
    };
    FidWindow::from_series(&traj.times, &series, traj.frame, &traj.config, source, policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending angular frequencies (rad/ps).
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub source: Source,
    pub center: f64,
    pub gamma_tilde: f64,
    pub band: f64,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        if self.omega.len() < 2 {
            0.0
        } else {
            self.omega[1] - self.omega[0]
        }
    }
}

/// Discrete version of the transform on an ascending grid that contains the
/// window centre frequency exactly.
///
/// The window is demodulated at the centre frequency before a zero-padded
/// FFT, so only the band `centre ± π/dt` is returned.
pub fn fourier(w: &FidWindow) -> Result<Spectrum> {
    let nyquist = PI / w.dt;
    let required = w.center + w.policy.band * w.gamma_tilde;
    if nyquist <= required {
        return Err(Error::Aliasing { nyquist, required });
    }
    let n = w.samples.len();
    let target = w.gamma_tilde / w.policy.resolution;
    let min_len = (2.0 * PI / (w.dt * target)).ceil() as usize;
    let len = min_len.max(n).next_power_of_two();

    let wr = w.center;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (k, &x) in w.samples.iter().enumerate() {
        let t = w.time(k);
        let weight = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
        buf[k] = weight * x * Complex64::from_polar(1.0, wr * t);
    }
    // Σ_k y_k e^{+2πi mk/len} is the unnormalised inverse transform
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);

    let dw = 2.0 * PI / (len as f64 * w.dt);
    let norm = w.dt / (2.0 * PI).sqrt();
    let half = len / 2;
    let mut omega = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    // reorder to ascending δ = m·dω for m in [−len/2, len/2)
    for j in 0..len {
        let m = j as i64 - half as i64;
        let idx = if m < 0 { (m + len as i64) as usize } else { m as usize };
        let delta = m as f64 * dw;
        omega.push(wr + delta);
        values.push(norm * buf[idx] * Complex64::from_polar(1.0, delta * w.t_off));
    }
    Ok(Spectrum {
        omega,
        values,
        source: w.source,
        center: w.center,
        gamma_tilde: w.gamma_tilde,
        band: w.policy.band,
    })
}

/// Direct trapezoid evaluation of the transform at one frequency.
pub fn fourier_at(w: &FidWindow, omega: f64) -> Complex64 {
    let n = w.samples.len();
    let sum: Complex64 = w
        .samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let weight = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
            weight * x * Complex64::from_polar(1.0, omega * w.time(k))
        })
        .sum();
    sum * w.dt / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpectrum {
    pub omega: Vec<f64>,
    /// Unwrapped inside the band, raw four-quadrant angle outside.
    pub phase: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Bins inside the band and above the noise floor.
    pub valid: Vec<bool>,
    pub source: Source,
    pub center: f64,
}

const NOISE_FLOOR: f64 = 1e-12;

/// Four-quadrant phase, unwrapped outward from the centre bin over the band
/// `|ω − ω₀| ≤ band·γ̃`. Bins below `1e-12` of the peak magnitude are masked.
pub fn phase_spectrum(spec: &Spectrum) -> PhaseSpectrum {
    let magnitude: Vec<f64> = spec.values.iter().map(|z| z.norm()).collect();
    let peak = magnitude.iter().cloned().fold(0.0, f64::max);
    let half_band = spec.band * spec.gamma_tilde;
    let valid: Vec<bool> = spec
        .omega
        .iter()
        .zip(&magnitude)
        .map(|(&w, &m)| (w - spec.center).abs() <= half_band && peak > 0.0 && m > NOISE_FLOOR * peak)
        .collect();
    let mut phase: Vec<f64> = spec.values.iter().map(|z| z.arg()).collect();

    if let Some(start) = nearest_valid(&spec.omega, &valid, spec.center) {
        let mut prev = phase[start];
        for j in start + 1..phase.len() {
            if !valid[j] {
                break;
            }
            phase[j] = unwrap_step(prev, phase[j]);
            prev = phase[j];
        }
        let mut prev = phase[start];
        for j in (0..start).rev() {
            if !valid[j] {
                break;
            }
            phase[j] = unwrap_step(prev, phase[j]);
            prev = phase[j];
        }
    }
    PhaseSpectrum {
        omega: spec.omega.clone(),
        phase,
        magnitude,
        values: spec.values.clone(),
        valid,
        source: spec.source,
        center: spec.center,
    }
}

fn nearest_valid(omega: &[f64], valid: &[bool], center: f64) -> Option<usize> {
    (0..omega.len())
        .filter(|&j| valid[j])
        .min_by(|&a, &b| (omega[a] - center).abs().total_cmp(&(omega[b] - center).abs()))
}

fn unwrap_step(prev: f64, raw: f64) -> f64 {
    let mut v = raw;
    while v - prev > PI {
        v -= 2.0 * PI;
    }
    while v - prev < -PI {
        v += 2.0 * PI;
    }
    v
}

impl PhaseSpectrum {
    /// Unwrapped phase linearly interpolated to `omega`.
    pub fn phase_at(&self, omega: f64) -> Result<f64> {
        let j = self.omega.partition_point(|&w| w <= omega);
        if j == 0 || j >= self.omega.len() {
            return Err(Error::invalid("omega", "outside the spectrum grid"));
        }
        let (a, b) = (j - 1, j);
        if !self.valid[a] || !self.valid[b] {
            return Err(Error::invalid("omega", "phase undefined (masked bin)"));
        }
        let s = (omega - self.omega[a]) / (self.omega[b] - self.omega[a]);
        Ok(self.phase[a] + s * (self.phase[b] - self.phase[a]))
    }

    pub fn phase_at_center(&self) -> Result<f64> {
        self.phase_at(self.center)
    }

    /// Writes `omega, re, im, abs, phase` rows, masked bins with an empty phase.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# source={} convention: {}", self.source.as_str(), CONVENTION)?;
        writeln!(w, "omega,re,im,abs,phase")?;
        for j in 0..self.omega.len() {
            if !self.valid[j] {
                continue;
            }
            let z = self.values[j];
            writeln!(w, "{},{},{},{},{}", self.omega[j], z.re, z.im, self.magnitude[j], self.phase[j])?;
        }
        Ok(())
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Window, transform and phase in one step.
pub fn window_phase(w: &FidWindow) -> Result<PhaseSpectrum> {
    Ok(phase_spectrum(&fourier(w)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Same drive with `U = 0`.
    #[default]
    Harmonic,
    /// Same anharmonicity at `F₀/κ = 0.01`.
    Weak,
}

impl std::str::FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Baseline::Harmonic),
            "weak" => Ok(Baseline::Weak),
            other => Err(Error::invalid("baseline", format!("unknown baseline `{other}`"))),
        }
    }
}

pub const WEAK_DRIVE: f64 = 0.01;

/// Configuration of the reference run for `cfg`.
pub fn baseline_config(cfg: &SystemConfig, baseline: Baseline) -> SystemConfig {
    match baseline {
        Baseline::Harmonic => cfg.with_anharmonicity(0.0),
        Baseline::Weak => cfg.with_amplitude(WEAK_DRIVE * cfg.cavity.kappa),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePhase {
    pub omega: Vec<f64>,
    /// `NaN` where either phase is masked.
    pub delta: Vec<f64>,
    pub at_center: f64,
}

/// `ΔΦ(ω) = Φ_run(ω) − Φ_baseline(ω)`, shifted by a multiple of 2π so that
/// the value at the centre lies in `(−π, π]`.
pub fn relative_phase(run: &PhaseSpectrum, baseline: &PhaseSpectrum) -> Result<RelativePhase> {
    if run.omega.len() != baseline.omega.len()
        || run.center != baseline.center
        || run.omega.iter().zip(&baseline.omega).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::GridMismatch);
    }
    let raw = run.phase_at_center()? - baseline.phase_at_center()?;
    let shift = -2.0 * PI * (raw / (2.0 * PI)).round();
    let delta = (0..run.omega.len())
        .map(|j| {
            if run.valid[j] && baseline.valid[j] {
                run.phase[j] - baseline.phase[j] + shift
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(RelativePhase {
        omega: run.omega.clone(),
        delta,
        at_center: raw + shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEquivalence {
    pub cavity: f64,
    pub dipole: f64,
    pub difference: f64,
    /// `Φ_cavity(ω₀) − Φ_dipole(ω₀)` of the run itself.
    pub filter_offset: f64,
}

/// ΔΦ(ω₀) from the cavity and from the bright-mode coherence of the same
/// run/baseline pair.
pub fn dipole_phase_equivalence(
    run: &MeanFieldTrajectory,
    baseline: &MeanFieldTrajectory,
    policy: &WindowPolicy,
) -> Result<PhaseEquivalence> {
    let phase = |t: &MeanFieldTrajectory, s| window_phase(&fid_window(t, s, policy)?);
    let rc = phase(run, Source::Cavity)?;
    let rd = phase(run, Source::Dipole)?;
    let cavity = relative_phase(&rc, &phase(baseline, Source::Cavity)?)?.at_center;
    let dipole = relative_phase(&rd, &phase(baseline, Source::Dipole)?)?.at_center;
    Ok(PhaseEquivalence {
        cavity,
        dipole,
        difference: cavity - dipole,
        filter_offset: rc.phase_at_center()? - rd.phase_at_center()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Inclusive range of F₀/κ used in the fit.
    pub range: (f64, f64),
    /// Relative RMS residual above which the quadratic regime is considered broken.
    pub residual_threshold: f64,
    pub min_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            range: (0.0, f64::INFINITY),
            residual_threshold: 0.1,
            min_points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearPhaseResult {
    /// `(F₀/κ, ΔΦ(ω₀))`.
    pub points: Vec<(f64, f64)>,
    /// Points actually used in the fit.
    pub fitted: Vec<(f64, f64)>,
    pub range: (f64, f64),
    /// `C` in `ΔΦ = C·(F₀/κ)²`.
    pub coefficient: f64,
    pub alpha: f64,
    /// Free power-law exponent from a log-log regression.
    pub exponent: f64,
    pub relative_residual: f64,
    /// True if points had to be dropped from the top of the range.
    pub regime_breakdown: bool,
}

/// Least-squares fit of `ΔΦ = C x²` and `α = C N γ̃ / (2U)`.
///
/// Points are dropped from the strong-drive end while the relative residual
/// exceeds the threshold and more than `min_points` remain.
pub fn fit_alpha(points: &[(f64, f64)], scale_u: f64, n: usize, gamma_tilde: f64, opts: &FitOptions) -> Result<NonlinearPhaseResult> {
    if scale_u == 0.0 {
        return Err(Error::invalid("U", "alpha is undefined for a harmonic system"));
    }
    let mut sel: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| x >= opts.range.0 && x <= opts.range.1)
        .collect();
    sel.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sel.len() < opts.min_points {
        return Err(Error::InsufficientPoints {
            needed: opts.min_points,
            got: sel.len(),
        });
    }
    let mut breakdown = false;
    let (c, res) = loop {
        let (c, res) = quadratic_fit(&sel);
        if res <= opts.residual_threshold || sel.len() <= opts.min_points {
            if res > opts.residual_threshold {
                breakdown = true;
            }
            break (c, res);
        }
        sel.pop();
        breakdown = true;
    };
    let exponent = power_law_exponent(&sel).unwrap_or(f64::NAN);
    Ok(NonlinearPhaseResult {
        points: points.to_vec(),
        range: (sel[0].0, sel[sel.len() - 1].0),
        fitted: sel,
        coefficient: c,
        alpha: c * n as f64 * gamma_tilde / (2.0 * scale_u),
        exponent,
        relative_residual: res,
        regime_breakdown: breakdown,
    })
}

fn quadratic_fit(p: &[(f64, f64)]) -> (f64, f64) {
    let sxy: f64 = p.iter().map(|&(x, y)| x * x * y).sum();
    let sxx: f64 = p.iter().map(|&(x, _)| x.powi(4)).sum();
    let c = sxy / sxx;
    let ss: f64 = p.iter().map(|&(x, y)| (y - c * x * x).powi(2)).sum();
    let sy: f64 = p.iter().map(|&(_, y)| y * y).sum();
    let res = if sy > 0.0 { (ss / sy).sqrt() } else { 0.0 };
    (c, res)
}

/// Slope of `ln|y|` against `ln x`; `None` when fewer than two usable points.
pub fn power_law_exponent(p: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = p
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y != 0.0)
        .map(|&(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

impl NonlinearPhaseResult {
    pub fn export(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Peak,
    Dip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDelay {
    /// Weak-trace extremum times.
    pub times: Vec<f64>,
    /// `t_strong − t_weak` for each matched extremum.
    pub delays: Vec<f64>,
    pub kinds: Vec<ExtremumKind>,
}

impl TimeDelay {
    /// Largest `|δτ|` among extrema at or before `t_end`.
    pub fn max_abs_until(&self, t_end: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.delays)
            .filter(|(&t, _)| t <= t_end)
            .map(|(_, d)| d.abs())
            .fold(0.0, f64::max)
    }

    /// Median of the last `count` delays.
    pub fn terminal_plateau(&self, count: usize) -> Option<f64> {
        if self.delays.is_empty() {
            return None;
        }
        let k = count.min(self.delays.len()).max(1);
        let mut tail: Vec<f64> = self.delays[self.delays.len() - k..].to_vec();
        tail.sort_by(f64::total_cmp);
        Some(if k % 2 == 1 {
            tail[k / 2]
        } else {
            0.5 * (tail[k / 2 - 1] + tail[k / 2])
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,delay,kind")?;
        for ((t, d), k) in self.times.iter().zip(&self.delays).zip(&self.kinds) {
            let k = match k {
                ExtremumKind::Peak => "peak",
                ExtremumKind::Dip => "dip",
            };
            writeln!(w, "{t},{d},{k}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    t: f64,
    kind: ExtremumKind,
}

/// Parabola-refined local extrema of a uniformly sampled real series, with
/// `|value| ≥ floor`.
fn extrema(times: &[f64], x: &[f64], floor: f64) -> Vec<Extremum> {
    let mut out = Vec::new();
    for k in 1..x.len().saturating_sub(1) {
        let (a, b, c) = (x[k - 1], x[k], x[k + 1]);
        let kind = if b > a && b >= c {
            ExtremumKind::Peak
        } else if b < a && b <= c {
            ExtremumKind::Dip
        } else {
            continue;
        };
        if b.abs() < floor {
            continue;
        }
        let den = a - 2.0 * b + c;
        let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        let dt = times[k + 1] - times[k];
        out.push(Extremum {
            t: times[k] + shift.clamp(-0.5, 0.5) * dt,
            kind,
        });
    }
    out
}

/// Extremum-matching delay between two lab-frame coherences on a shared grid.
///
/// Every extremum of `Re weak` is paired with the nearest extremum of the same
/// kind of `Re strong` within half a carrier period; extrema below `1e-6` of
/// each trace's peak amplitude are ignored and unmatched ones are dropped.
pub fn time_delay_series(times: &[f64], strong: &[Complex64], weak: &[Complex64], carrier: f64) -> Result<TimeDelay> {
    if strong.len() != times.len() || weak.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: strong.len().min(weak.len()),
        });
    }
    let floor = |z: &[Complex64]| 1e-6 * z.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let re = |z: &[Complex64]| z.iter().map(|v| v.re).collect::<Vec<_>>();
    let es = extrema(times, &re(strong), floor(strong));
    let ew = extrema(times, &re(weak), floor(weak));
    let half_period = PI / carrier;

    let mut out = TimeDelay {
        times: Vec::new(),
        delays: Vec::new(),
        kinds: Vec::new(),
    };
    let mut j = 0;
    for e in &ew {
        while j < es.len() && es[j].t < e.t - half_period {
            j += 1;
        }
        let best = es[j..]
            .iter()
            .take_while(|s| s.t <= e.t + half_period)
            .filter(|s| s.kind == e.kind)
            .min_by(|a, b| (a.t - e.t).abs().total_cmp(&(b.t - e.t).abs()));
        if let Some(s) = best {
            out.times.push(e.t);
            out.delays.push(s.t - e.t);
            out.kinds.push(e.kind);
        }
    }
    Ok(out)
}

/// Delay of the strong-drive bright mode relative to the weak-drive one.
pub fn time_delay(strong: &MeanFieldTrajectory, weak: &MeanFieldTrajectory) -> Result<TimeDelay> {
    if strong.times.len() != weak.times.len()
        || strong.times.iter().zip(&weak.times).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::GridMismatch);
    }
    let mut a = strong.config.with_amplitude(0.0);
    a.frame = Frame::Lab;
    let mut b = weak.config.with_amplitude(0.0);
    b.frame = Frame::Lab;
    if a != b {
        return Err(Error::invalid("weak", "trajectories must differ only in F0"));
    }
    let s = strong.in_frame(Frame::Lab).bright();
    let w = weak.in_frame(Frame::Lab).bright();
    time_delay_series(&strong.times, &s, &w, strong.config.pulse.carrier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PulseParams;
    use approx::assert_abs_diff_eq;

    fn cfg() -> SystemConfig {
        let p = PulseParams::new(2.4, 40.0, 0.6, 0.155).unwrap();
        SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, 0.3, 1.0, p).unwrap()
    }

    /// Lab-frame decaying tone starting at `t_off`.
    fn tone(c: &SystemConfig, phi0: f64, dt: f64, len: f64) -> FidWindow {
        let g = effective_rate(c);
        let t_off = TOff::PulseWidths(3.0).resolve(&c.pulse);
        let n = (len / dt) as usize;
        let times: Vec<f64> = (0..n).map(|k| t_off + k as f64 * dt).collect();
        let x: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::from_polar((-0.5 * g * (t - t_off)).exp(), phi0 - 40.0 * t))
            .collect();
        FidWindow::from_series(&times, &x, Frame::Lab, c, Source::Cavity, &WindowPolicy::default()).unwrap()
    }

    #[test]
    fn default_t_off() {
        let c = cfg();
        assert_abs_diff_eq!(TOff::PulseWidths(3.0).resolve(&c.pulse), 1.065, epsilon = 1e-12);
        let ratio = envelope(1.065, &c.pulse) / envelope(0.6, &c.pulse);
        assert_abs_diff_eq!(ratio, (-4.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn short_trajectory_rejected() {
        let c = cfg();
        let times: Vec<f64> = (0..700).map(|k| k as f64 * 0.002).collect();
        let x = vec![Complex64::new(0.0, 0.0); times.len()];
        let r = FidWindow::from_series(&times, &x, Frame::Lab, &c, Source::Cavity, &WindowPolicy::default());
        assert!(matches!(r, Err(Error::TrajectoryTooShort { .. })));
    }

    #[test]
    fn zero_window_gives_zero_spectrum() {
        let c = cfg();
        let mut w = tone(&c, 0.0, 0.002, 10.0);
        w.samples.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let s = fourier(&w).unwrap();
        assert!(s.values.iter().all(|z| z.norm() == 0.0));
        let p = phase_spectrum(&s);
        assert!(p.valid.iter().all(|v| !v));
        assert!(p.phase_at_center().is_err());
    }

    #[test]
    fn lorentzian_peak_and_width() {
        let c = cfg();
        let g = effective_rate(&c);
        let w = tone(&c, 0.0, 0.002, 40.0);
        let s = fourier(&w).unwrap();
        assert!(s.resolution() <= g / 50.0);
        let mag: Vec<f64> = s.values.iter().map(|z| z.norm()).collect();
        let (ipk, &pk) = mag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert!((s.omega[ipk] - 40.0).abs() <= s.resolution());
        // one-sided Lorentzian: |S| halves at |δ| = (√3/2)γ̃, |S|² halves at γ̃/2
        let expected = 3f64.sqrt() * g;
        let width = crossing_width(&s.omega, &mag, 0.5 * pk);
        assert!((width - expected).abs() / expected < 0.02, "width {width} vs {expected}");
        let power: Vec<f64> = mag.iter().map(|m| m * m).collect();
        let fwhm = crossing_width(&s.omega, &power, 0.5 * pk * pk);
        assert!((fwhm - g).abs() / g < 0.02, "fwhm {fwhm} vs {g}");
    }

    /// Distance between the outermost level crossings, linearly interpolated.
    fn crossing_width(x: &[f64], y: &[f64], level: f64) -> f64 {
        let first = y.iter().position(|&v| v >= level).unwrap();
        let last = y.iter().rposition(|&v| v >= level).unwrap();
        let lerp = |a: usize, b: usize| x[a] + (level - y[a]) / (y[b] - y[a]) * (x[b] - x[a]);
        lerp(last, last + 1) - lerp(first - 1, first)
    }

    #[test]
    fn fft_matches_direct_sum() {
        let c = cfg();
        let w = tone(&c, 0.4, 0.002, 12.0);
        let s = fourier(&w).unwrap();
        for j in [s.omega.len() / 2 - 37, s.omega.len() / 2, s.omega.len() / 2 + 11] {
            let d = fourier_at(&w, s.omega[j]);
            assert!((d - s.values[j]).norm() < 1e-10 * d.norm().max(1e-3));
        }
    }

    #[test]
    fn tone_phase_offset_is_recovered() {
        let c = cfg();
        let base = window_phase(&tone(&c, 0.0, 0.002, 30.0)).unwrap();
        let shifted = window_phase(&tone(&c, 0.3, 0.002, 30.0)).unwrap();
        let d = relative_phase(&shifted, &base).unwrap();
        assert_abs_diff_eq!(d.at_center, 0.3, epsilon = 1e-10);
    }

    #[test]
    fn quadrant_checks() {
        let s = Spectrum {
            omega: vec![39.0, 40.0, 41.0],
            values: vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(0.0, 3.0)],
            source: Source::Cavity,
            center: 40.0,
            gamma_tilde: 1.0,
            band: 10.0,
        };
        let p = phase_spectrum(&s);
        assert_eq!(p.phase[0], 0.0);
        assert_eq!(p.phase_at(40.0).unwrap(), 0.0);
        assert_abs_diff_eq!(p.phase[2], PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn unwrap_removes_jumps_in_band() {
        let c = cfg();
        let w = tone(&c, 0.0, 0.002, 20.0).delayed(3.0);
        let p = window_phase(&w).unwrap();
        for j in 1..p.omega.len() {
            if p.valid[j] && p.valid[j - 1] {
                assert!((p.phase[j] - p.phase[j - 1]).abs() < PI);
            }
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let c = cfg();
        let a = window_phase(&tone(&c, 0.0, 0.002, 30.0)).unwrap();
        let b = window_phase(&tone(&c, 0.0, 0.001, 30.0)).unwrap();
        assert!(matches!(relative_phase(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn aliasing_detected() {
        let c = cfg();
        let w = tone(&c, 0.0, 0.1, 30.0);
        assert!(matches!(fourier(&w), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn fit_recovers_generator() {
        let (u, n, g) = (0.3, 2, 0.933_333);
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let x = 0.02 * k as f64;
                (x, 3.5 * (2.0 * u / (n as f64 * g)) * x * x)
            })
            .collect();
        let r = fit_alpha(&pts, u, n, g, &FitOptions::default()).unwrap();
        assert_abs_diff_eq!(r.alpha, 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.exponent, 2.0, epsilon = 1e-12);
        assert!(!r.regime_breakdown);
        assert!(matches!(
            fit_alpha(&pts[..4], u, n, g, &FitOptions::default()),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn fit_drops_saturated_points() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let x = 0.05 * k as f64;
                let y = if x > 0.35 { 1.0 } else { x * x };
                (x, y)
            })
            .collect();
        let r = fit_alpha(&pts, 1.0, 2, 1.0, &FitOptions::default()).unwrap();
        assert!(r.regime_breakdown);
        assert!(r.range.1 <= 0.35 + 1e-12);
        assert_abs_diff_eq!(r.coefficient, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_traces_have_zero_delay() {
        let times: Vec<f64> = (0..4000).map(|k| k as f64 * 0.001).collect();
        let z: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::from_polar((-(t - 2.0) * (t - 2.0)).exp(), -40.0 * t))
            .collect();
        let d = time_delay_series(&times, &z, &z, 40.0).unwrap();
        assert!(!d.delays.is_empty());
        assert!(d.delays.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_phase_lag_gives_constant_delay() {
        let phi = 0.05;
        let times: Vec<f64> = (0..6000).map(|k| k as f64 * 0.001).collect();
        let weak: Vec<Complex64> = times.iter().map(|&t| Complex64::from_polar(1.0, -40.0 * t)).collect();
        let strong: Vec<Complex64> = weak.iter().map(|z| z * Complex64::from_polar(1.0, phi)).collect();
        let d = time_delay_series(&times, &strong, &weak, 40.0).unwrap();
        for x in &d.delays {
            assert_abs_diff_eq!(*x, phi / 40.0, epsilon = 2e-6);
        }
    }
}
