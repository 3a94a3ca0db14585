//! Configuration-driven runs: sweeps, figure presets, result bundles.
//!
//! A bundle is a directory holding `spec.json`, per-point series (CSV),
//! `results.json`, optional fits and time-delay tables, and `manifest.json`,
//! which is written last. Only the manifest carries a timestamp.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lindblad::{self, EvolveOptions, Hygiene, HilbertConfig, LindbladSeries};
use crate::meanfield::{self, IntegrateOptions, MeanFieldTrajectory};
use crate::model::{purcell_rate, PulseParams, SystemConfig};
use crate::ode::Tolerances;
use crate::spectral::{
    self, baseline_config, relative_phase, window_phase, Baseline, FidWindow, FitOptions, NonlinearPhaseResult,
    Source, WindowPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Meanfield,
    Lindblad,
    Both,
}

impl Solver {
    pub fn meanfield(self) -> bool {
        matches!(self, Solver::Meanfield | Solver::Both)
    }

    pub fn lindblad(self) -> bool {
        matches!(self, Solver::Lindblad | Solver::Both)
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanfield" | "mf" => Ok(Solver::Meanfield),
            "lindblad" => Ok(Solver::Lindblad),
            "both" => Ok(Solver::Both),
            other => Err(Error::invalid("solver", format!("unknown solver `{other}`"))),
        }
    }
}

/// One sweep dimension. With `relative_to`, each value is multiplied by that
/// key's value in the base configuration (`F₀/κ`, `U/γ`, …).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_to: Option<String>,
}

impl SweepAxis {
    pub fn absolute(key: &str, values: &[f64]) -> Self {
        SweepAxis {
            key: key.into(),
            values: values.to_vec(),
            relative_to: None,
        }
    }

    pub fn relative(key: &str, to: &str, values: &[f64]) -> Self {
        SweepAxis {
            key: key.into(),
            values: values.to_vec(),
            relative_to: Some(to.into()),
        }
    }

    /// Column label, e.g. `pulse.F0/cavity.kappa`.
    pub fn label(&self) -> String {
        match &self.relative_to {
            Some(r) => format!("{}/{}", self.key, r),
            None => self.key.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralPolicy {
    pub window: WindowPolicy,
    pub baseline: Baseline,
    /// Inclusive F₀/κ range for α fits.
    pub fit_range: (f64, f64),
}

impl Default for SpectralPolicy {
    fn default() -> Self {
        SpectralPolicy {
            window: WindowPolicy::default(),
            baseline: Baseline::Harmonic,
            fit_range: (0.0, f64::MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    /// Fit ΔΦ(ω₀) = C(F₀/κ)² per group of points sharing all other axes.
    pub fit_alpha: bool,
    /// Extremum delay of each point relative to a weak-drive run.
    pub time_delay: bool,
    pub weak_drive: f64,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            fit_alpha: false,
            time_delay: false,
            weak_drive: spectral::WEAK_DRIVE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
    #[serde(default)]
    pub spectral: SpectralPolicy,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub analyses: Analyses,
    /// Lindblad runs: raise the photon truncation until ΔΦ(ω₀) is stable.
    #[serde(default)]
    pub auto_truncation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<FigurePreset>,
}

impl ExperimentSpec {
    pub fn single(base: SystemConfig, solver: Solver) -> Self {
        ExperimentSpec {
            hilbert: HilbertConfig {
                n_wells: base.n_wells(),
                ..HilbertConfig::default()
            },
            base,
            solver,
            axes: Vec::new(),
            spectral: SpectralPolicy::default(),
            tolerances: Tolerances::default(),
            analyses: Analyses::default(),
            auto_truncation: false,
            preset: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Axis keys resolve, every point validates and Lindblad runs fit under the cap.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(Error::AxisMismatch(format!("axis `{}` has no values", axis.key)));
            }
            self.base.get(&axis.key)?;
            if let Some(r) = &axis.relative_to {
                self.base.get(r)?;
            }
        }
        if self.solver.lindblad() {
            self.hilbert_for(&self.base)?;
        }
        for p in self.points()? {
            p.config.validate()?;
        }
        Ok(())
    }

    fn hilbert_for(&self, cfg: &SystemConfig) -> Result<HilbertConfig> {
        let h = HilbertConfig {
            n_wells: cfg.n_wells(),
            ..self.hilbert
        };
        h.validate()?;
        Ok(h)
    }

    /// Cartesian product of the axes, first axis slowest.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let mut pts = vec![SweepPoint {
            index: 0,
            coords: Vec::new(),
            config: self.base.clone(),
        }];
        for axis in &self.axes {
            let scale = match &axis.relative_to {
                Some(r) => self.base.get(r)?,
                None => 1.0,
            };
            let mut next = Vec::with_capacity(pts.len() * axis.values.len());
            for p in &pts {
                for &v in &axis.values {
                    let mut cfg = p.config.clone();
                    cfg.set(&axis.key, v * scale)?;
                    let mut coords = p.coords.clone();
                    coords.push((axis.label(), v));
                    next.push(SweepPoint {
                        index: 0,
                        coords,
                        config: cfg,
                    });
                }
            }
            pts = next;
        }
        for (i, p) in pts.iter_mut().enumerate() {
            p.index = i;
        }
        Ok(pts)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// `(axis label, axis value)` in axis order.
    pub coords: Vec<(String, f64)>,
    pub config: SystemConfig,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        if self.coords.is_empty() {
            return "base".into();
        }
        self.coords
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Nonlinear phase of a mean-field run read from both coherences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPhase {
    pub cavity: f64,
    pub dipole: f64,
    pub filter_offset: f64,
}

fn mf_options(cfg: &SystemConfig, tol: &Tolerances) -> IntegrateOptions {
    IntegrateOptions {
        tolerances: *tol,
        ..IntegrateOptions::for_config(cfg)
    }
}

/// Runs `cfg` and its baseline and returns ΔΦ(ω₀) from `⟨a⟩` and `⟨B₀⟩`.
pub fn meanfield_nonlinear_phase(
    cfg: &SystemConfig,
    baseline: Baseline,
    policy: &WindowPolicy,
    tol: &Tolerances,
) -> Result<(MeanFieldPhase, MeanFieldTrajectory)> {
    let opts = mf_options(cfg, tol);
    let run = meanfield::integrate(cfg, &opts)?;
    let base = meanfield::integrate(&baseline_config(cfg, baseline), &opts)?;
    let eq = spectral::dipole_phase_equivalence(&run, &base, policy)?;
    Ok((
        MeanFieldPhase {
            cavity: eq.cavity,
            dipole: eq.dipole,
            filter_offset: eq.filter_offset,
        },
        run,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladPhase {
    pub delta_phi: f64,
    pub max_p2: Option<f64>,
    pub hygiene: Hygiene,
    pub baseline_hygiene: Hygiene,
    pub hilbert: HilbertConfig,
}

fn lindblad_window(s: &LindbladSeries, policy: &WindowPolicy) -> Result<FidWindow> {
    FidWindow::from_series(&s.times, &s.a, s.frame, &s.config, Source::Cavity, policy)
}

/// Lindblad ΔΦ(ω₀) from the cavity coherence, relative to `baseline`.
pub fn lindblad_nonlinear_phase(
    cfg: &SystemConfig,
    baseline: Baseline,
    policy: &WindowPolicy,
    h: &HilbertConfig,
    opts: &EvolveOptions,
) -> Result<(LindbladPhase, LindbladSeries)> {
    let run = lindblad::evolve_from_vacuum(cfg, h, opts)?;
    let base = lindblad::evolve_from_vacuum(&baseline_config(cfg, baseline), h, opts)?;
    let d = relative_phase(
        &window_phase(&lindblad_window(&run, policy)?)?,
        &window_phase(&lindblad_window(&base, policy)?)?,
    )?;
    let max_p2 = lindblad::second_level_population(&run)
        .ok()
        .map(|p| p.into_iter().fold(0.0, f64::max));
    Ok((
        LindbladPhase {
            delta_phi: d.at_center,
            max_p2,
            hygiene: run.hygiene,
            baseline_hygiene: base.hygiene,
            hilbert: *h,
        },
        run,
    ))
}

/// Like [`lindblad_nonlinear_phase`], raising `n_photon_max` by 2 until ΔΦ(ω₀)
/// changes by less than 1% (or the dimension cap is hit).
pub fn lindblad_nonlinear_phase_converged(
    cfg: &SystemConfig,
    baseline: Baseline,
    policy: &WindowPolicy,
    h: &HilbertConfig,
    opts: &EvolveOptions,
) -> Result<(LindbladPhase, LindbladSeries)> {
    let mut cur = *h;
    let mut best = lindblad_nonlinear_phase(cfg, baseline, policy, &cur, opts)?;
    loop {
        let next = match cur.with_photons(cur.n_photon_max + 2) {
            Ok(n) => n,
            Err(Error::DimensionCap { .. }) => return Ok(best),
            Err(e) => return Err(e),
        };
        let trial = lindblad_nonlinear_phase(cfg, baseline, policy, &next, opts)?;
        let (a, b) = (best.0.delta_phi, trial.0.delta_phi);
        if (a - b).abs() <= 0.01 * a.abs() + 1e-7 {
            return Ok(best);
        }
        cur = next;
        best = trial;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    /// Largest |δτ| up to `t₀ + 2T` (ps).
    pub in_pulse_max: f64,
    /// Median δτ over the last ten matched extrema (ps).
    pub terminal_plateau: f64,
    /// Smallest |δτ| after `t₀ + 2T` (ps).
    pub post_pulse_min: f64,
    pub matched: usize,
}

/// Delay of `cfg` against the same system at weak drive.
pub fn delay_against_weak(cfg: &SystemConfig, weak_drive: f64, dt: f64, tol: &Tolerances) -> Result<(spectral::TimeDelay, DelaySummary)> {
    let weak = cfg.with_amplitude(weak_drive * cfg.cavity.kappa);
    // extremum times near signal death need phase accuracy well below the defaults
    let tight = Tolerances {
        rtol: tol.rtol.min(1e-12),
        atol: tol.atol.min(1e-18),
        ..*tol
    };
    let mut opts = mf_options(cfg, &tight);
    opts.dt = dt;
    // follow the free decay down to the 1e-6 extremum floor
    opts.t_end = cfg.pulse.center + 3.0 * cfg.pulse.duration + 30.0 / meanfield::slowest_decay(cfg);
    let s = meanfield::integrate(cfg, &opts)?;
    let w = meanfield::integrate(&weak, &opts)?;
    let d = spectral::time_delay(&s, &w)?;
    let pulse_end = cfg.pulse.center + 2.0 * cfg.pulse.duration;
    let summary = DelaySummary {
        in_pulse_max: d.max_abs_until(pulse_end),
        terminal_plateau: d.terminal_plateau(10).unwrap_or(0.0),
        post_pulse_min: d
            .times
            .iter()
            .zip(&d.delays)
            .filter(|(&t, _)| t > pulse_end)
            .map(|(_, x)| x.abs())
            .fold(f64::INFINITY, f64::min),
        matched: d.delays.len(),
    };
    Ok((d, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub label: String,
    pub coords: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meanfield: Option<MeanFieldPhase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lindblad: Option<LindbladPhase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySummary>,
    /// Set when the drive is zero and no phase can be defined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGroup {
    /// Coordinates shared by all points of the group.
    pub fixed: Vec<(String, f64)>,
    pub solver: Solver,
    pub result: Option<NonlinearPhaseResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub config_hash: String,
    pub axes: Vec<String>,
    pub points: Vec<PointResult>,
    #[serde(default)]
    pub fits: Vec<FitGroup>,
}

impl Results {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("results.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub generated_unix: u64,
    pub files: Vec<ManifestEntry>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<String> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

fn run_point(spec: &ExperimentSpec, p: &SweepPoint, dir: &Path) -> Result<PointResult> {
    let cfg = &p.config;
    let mut out = PointResult {
        index: p.index,
        label: p.label(),
        coords: p.coords.clone(),
        meanfield: None,
        lindblad: None,
        delay: None,
        note: None,
        files: Vec::new(),
    };
    let stem = format!("point_{:03}", p.index);
    let policy = &spec.spectral.window;
    let undriven = cfg.pulse.amplitude == 0.0;
    if undriven {
        out.note = Some("zero drive: nonlinear phase undefined".into());
    }

    if spec.solver.meanfield() {
        let traj = if undriven {
            meanfield::integrate(cfg, &mf_options(cfg, &spec.tolerances))?
        } else {
            let (phase, traj) = meanfield_nonlinear_phase(cfg, spec.spectral.baseline, policy, &spec.tolerances)?;
            out.meanfield = Some(phase);
            traj
        };
        let mut csv = Vec::new();
        traj.write_csv(&mut csv).map_err(|e| Error::io(dir, e))?;
        out.files.push(write_file(dir, &format!("{stem}_meanfield.csv"), &csv)?);
    }

    if spec.solver.lindblad() {
        let h = spec.hilbert_for(cfg)?;
        let opts = EvolveOptions {
            tolerances: Tolerances::new(1e-10, 1e-13),
            ..EvolveOptions::for_config(cfg)
        };
        let series = if undriven {
            lindblad::evolve_from_vacuum(cfg, &h, &opts)?
        } else {
            let (phase, series) = if spec.auto_truncation {
                lindblad_nonlinear_phase_converged(cfg, spec.spectral.baseline, policy, &h, &opts)?
            } else {
                lindblad_nonlinear_phase(cfg, spec.spectral.baseline, policy, &h, &opts)?
            };
            out.lindblad = Some(phase);
            series
        };
        let mut csv = Vec::new();
        series.write_csv(&mut csv).map_err(|e| Error::io(dir, e))?;
        out.files.push(write_file(dir, &format!("{stem}_lindblad.csv"), &csv)?);
    }

    if spec.analyses.time_delay && !undriven {
        let dt = (meanfield::default_dt(cfg) / 2.0).min(0.001);
        let (d, summary) = delay_against_weak(cfg, spec.analyses.weak_drive, dt, &spec.tolerances)?;
        let mut csv = Vec::new();
        d.write_csv(&mut csv).map_err(|e| Error::io(dir, e))?;
        out.files.push(write_file(dir, &format!("{stem}_time_delay.csv"), &csv)?);
        out.delay = Some(summary);
    }
    Ok(out)
}

const F0_LABEL: &str = "pulse.F0/cavity.kappa";

fn fit_groups(spec: &ExperimentSpec, points: &[SweepPoint], results: &[PointResult]) -> Vec<FitGroup> {
    let Some(f_axis) = spec.axes.iter().position(|a| a.label() == F0_LABEL) else {
        return Vec::new();
    };
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for p in points {
        let key = p
            .coords
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f_axis)
            .map(|(_, (k, v))| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",");
        groups.entry(key).or_default().push(p.index);
    }
    let opts = FitOptions {
        range: spec.spectral.fit_range,
        ..FitOptions::default()
    };
    let mut fits = Vec::new();
    for members in groups.values() {
        let first = &points[members[0]];
        let fixed: Vec<(String, f64)> = first
            .coords
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f_axis)
            .map(|(_, c)| c.clone())
            .collect();
        for solver in [Solver::Meanfield, Solver::Lindblad] {
            let pts: Vec<(f64, f64)> = members
                .iter()
                .filter_map(|&i| {
                    let r = &results[i];
                    let x = r.coords[f_axis].1;
                    let y = match solver {
                        Solver::Lindblad => r.lindblad.map(|l| l.delta_phi),
                        _ => r.meanfield.map(|m| m.cavity),
                    };
                    y.map(|y| (x, y))
                })
                .collect();
            if pts.is_empty() {
                continue;
            }
            let cfg = &first.config;
            let fit = purcell_rate(cfg).and_then(|g| {
                let h = cfg.homogeneous_params()?;
                spectral::fit_alpha(&pts, h.dipole.anharmonicity, h.n, g, &opts)
            });
            let (result, error) = match fit {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            fits.push(FitGroup {
                fixed: fixed.clone(),
                solver,
                result,
                error,
            });
        }
    }
    fits
}

/// Runs every sweep point on the current rayon pool and writes the bundle to `dir`.
pub fn run(spec: &ExperimentSpec, dir: &Path) -> Result<Results> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = spec.config_hash()?;
    let points = spec.points()?;

    let results: Vec<PointResult> = points
        .par_iter()
        .map(|p| {
            run_point(spec, p, dir).map_err(|e| Error::SweepPoint {
                index: p.index,
                label: p.label(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let fits = if spec.analyses.fit_alpha {
        fit_groups(spec, &points, &results)
    } else {
        Vec::new()
    };
    let out = Results {
        config_hash: hash.clone(),
        axes: spec.axes.iter().map(SweepAxis::label).collect(),
        points: results,
        fits,
    };

    let mut files = vec![write_file(dir, "spec.json", serde_json::to_string_pretty(spec)?.as_bytes())?];
    for p in &out.points {
        files.extend(p.files.iter().cloned());
    }
    files.push(write_file(dir, "results.json", serde_json::to_string_pretty(&out)?.as_bytes())?);
    if !out.fits.is_empty() {
        files.push(write_file(dir, "fit_alpha.json", serde_json::to_string_pretty(&out.fits)?.as_bytes())?);
    }
    files.push(write_file(dir, "plot_data.csv", &plot_data(&out))?);
    write_manifest(dir, &hash, &files)?;
    Ok(out)
}

fn write_manifest(dir: &Path, hash: &str, files: &[String]) -> Result<()> {
    let mut entries = Vec::with_capacity(files.len());
    for name in files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            path: name.clone(),
            sha256: hex(&Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash.into(),
        generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        files: entries,
    };
    write_file(dir, "manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

/// Long-format table `point,label,quantity,value` of every scalar result.
pub fn plot_data(r: &Results) -> Vec<u8> {
    let mut s = String::from("point,label,quantity,value\n");
    let mut row = |i: usize, label: &str, q: &str, v: f64| {
        s.push_str(&format!("{i},\"{label}\",{q},{v}\n"));
    };
    for p in &r.points {
        for (k, v) in &p.coords {
            row(p.index, &p.label, k, *v);
        }
        if let Some(m) = p.meanfield {
            row(p.index, &p.label, "meanfield.dphi_cavity", m.cavity);
            row(p.index, &p.label, "meanfield.dphi_dipole", m.dipole);
        }
        if let Some(l) = p.lindblad {
            row(p.index, &p.label, "lindblad.dphi", l.delta_phi);
            if let Some(p2) = l.max_p2 {
                row(p.index, &p.label, "lindblad.max_p2", p2);
            }
        }
        if let Some(d) = p.delay {
            row(p.index, &p.label, "delay.in_pulse_max", d.in_pulse_max);
            row(p.index, &p.label, "delay.terminal_plateau", d.terminal_plateau);
        }
    }
    s.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Ratio within [1/2, 2].
    Agreement,
    Breakdown,
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub meanfield: f64,
    pub lindblad: f64,
    /// `lindblad / meanfield`.
    pub ratio: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub max_ratio_deviation: f64,
}

/// Per-point Lindblad/mean-field ΔΦ(ω₀) ratios of two bundles with matching axes.
///
/// Each side contributes its Lindblad value if present, else its mean-field
/// value; with the same bundle twice the Lindblad and mean-field columns of a
/// `both` run are compared.
pub fn compare(meanfield: &Results, lindblad: &Results) -> Result<ComparisonReport> {
    if meanfield.axes != lindblad.axes || meanfield.points.len() != lindblad.points.len() {
        return Err(Error::AxisMismatch("bundles have different sweep axes".into()));
    }
    let mut rows = Vec::new();
    for (a, b) in meanfield.points.iter().zip(&lindblad.points) {
        if a.coords != b.coords {
            return Err(Error::AxisMismatch(format!("point {} differs: {} vs {}", a.index, a.label, b.label)));
        }
        let mf = a.meanfield.map(|m| m.cavity).or(a.lindblad.map(|l| l.delta_phi));
        let lb = b.lindblad.map(|l| l.delta_phi).or(b.meanfield.map(|m| m.cavity));
        let (Some(mf), Some(lb)) = (mf, lb) else {
            continue;
        };
        let ratio = if mf == lb { 1.0 } else { lb / mf };
        let regime = if !ratio.is_finite() {
            Regime::Undefined
        } else if (0.5..=2.0).contains(&ratio) {
            Regime::Agreement
        } else {
            Regime::Breakdown
        };
        rows.push(ComparisonRow {
            label: a.label.clone(),
            meanfield: mf,
            lindblad: lb,
            ratio,
            regime,
        });
    }
    let max_ratio_deviation = rows
        .iter()
        .filter(|r| r.ratio.is_finite() && r.ratio > 0.0)
        .map(|r| r.ratio.max(1.0 / r.ratio))
        .fold(1.0, f64::max);
    Ok(ComparisonReport { rows, max_ratio_deviation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigurePreset {
    Fig2,
    Fig3,
    Fig4a,
    Fig4b,
    Fig5a,
    Fig5b,
    Fig5c,
}

impl std::str::FromStr for FigurePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig2" => FigurePreset::Fig2,
            "fig3" => FigurePreset::Fig3,
            "fig4a" => FigurePreset::Fig4a,
            "fig4b" => FigurePreset::Fig4b,
            "fig5a" => FigurePreset::Fig5a,
            "fig5b" => FigurePreset::Fig5b,
            "fig5c" => FigurePreset::Fig5c,
            other => return Err(Error::UnknownPreset(other.into())),
        })
    }
}

impl FigurePreset {
    pub const ALL: [FigurePreset; 7] = [
        FigurePreset::Fig2,
        FigurePreset::Fig3,
        FigurePreset::Fig4a,
        FigurePreset::Fig4b,
        FigurePreset::Fig5a,
        FigurePreset::Fig5b,
        FigurePreset::Fig5c,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FigurePreset::Fig2 => "fig2",
            FigurePreset::Fig3 => "fig3",
            FigurePreset::Fig4a => "fig4a",
            FigurePreset::Fig4b => "fig4b",
            FigurePreset::Fig5a => "fig5a",
            FigurePreset::Fig5b => "fig5b",
            FigurePreset::Fig5c => "fig5c",
        }
    }

    /// Frozen experiment definition.
    pub fn spec(self) -> ExperimentSpec {
        let drive: Vec<f64> = (1..=10).map(|k| 0.05 * k as f64).collect();
        let (u, solver, axes, analyses, fit_range) = match self {
            FigurePreset::Fig2 => (
                0.6,
                Solver::Meanfield,
                vec![
                    SweepAxis::absolute("dipoles[*].gamma", &[0.6, 10.0]),
                    SweepAxis::relative("pulse.F0", "cavity.kappa", &[0.2]),
                ],
                Analyses {
                    time_delay: true,
                    ..Analyses::default()
                },
                None,
            ),
            FigurePreset::Fig3 => (
                0.3,
                Solver::Meanfield,
                vec![
                    SweepAxis::relative("dipoles[*].U", "dipoles[0].gamma", &[0.1, 0.5, 1.0]),
                    SweepAxis::relative("pulse.F0", "cavity.kappa", &(1..=10).map(|k| 0.02 * k as f64).collect::<Vec<_>>()),
                ],
                Analyses {
                    fit_alpha: true,
                    ..Analyses::default()
                },
                Some((0.02, 0.2)),
            ),
            FigurePreset::Fig4a => (
                0.3,
                Solver::Meanfield,
                vec![
                    SweepAxis::absolute("dipoles[1].gamma", &[0.3, 0.45, 0.6, 0.75, 0.9]),
                    SweepAxis::relative("pulse.F0", "cavity.kappa", &drive),
                ],
                Analyses::default(),
                None,
            ),
            FigurePreset::Fig4b => (
                0.3,
                Solver::Meanfield,
                vec![
                    SweepAxis::absolute("dipoles[1].omega", &[40.0, 40.8, 41.6, 44.0, 48.0]),
                    SweepAxis::relative("pulse.F0", "cavity.kappa", &drive),
                ],
                Analyses::default(),
                None,
            ),
            FigurePreset::Fig5a => (
                0.3,
                Solver::Both,
                vec![SweepAxis::relative("pulse.F0", "cavity.kappa", &drive)],
                Analyses::default(),
                None,
            ),
            FigurePreset::Fig5b => (
                1.2,
                Solver::Lindblad,
                vec![SweepAxis::relative("pulse.F0", "cavity.kappa", &drive)],
                Analyses::default(),
                None,
            ),
            FigurePreset::Fig5c => (
                0.0,
                Solver::Lindblad,
                vec![
                    SweepAxis::relative("pulse.F0", "cavity.kappa", &[0.3]),
                    SweepAxis::relative("dipoles[*].U", "dipoles[0].gamma", &[0.0, 0.5, 1.0, 2.0]),
                ],
                Analyses::default(),
                None,
            ),
        };
        let pulse = PulseParams {
            amplitude: 0.0,
            carrier: 40.0,
            center: 0.6,
            duration: 0.155,
        };
        let base = SystemConfig::homogeneous(2, 40.0, 12.0, 0.6, u, 1.0, pulse).expect("preset parameters are valid");
        let mut spec = ExperimentSpec::single(base, solver);
        spec.axes = axes;
        spec.analyses = analyses;
        if let Some(r) = fit_range {
            spec.spectral.fit_range = r;
        }
        spec.preset = Some(self);
        spec
    }
}

/// Directory name used for a preset bundle under `root`.
pub fn preset_dir(root: &Path, preset: FigurePreset) -> PathBuf {
    root.join(preset.id())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_expand_in_order() {
        let spec = FigurePreset::Fig3.spec();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 30);
        assert_eq!(pts[0].coords[0].1, 0.1);
        assert_eq!(pts[1].coords[1].1, 0.04);
        assert!((pts[1].config.pulse.amplitude - 0.48).abs() < 1e-12);
        assert!((pts[29].config.dipoles[1].anharmonicity - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_axis_key_rejected() {
        let mut spec = FigurePreset::Fig5a.spec();
        spec.axes.push(SweepAxis::absolute("pulse.phase", &[0.0]));
        assert!(matches!(spec.validate(), Err(Error::UnknownKey(_))));
    }

    #[test]
    fn lindblad_cap_enforced() {
        let mut spec = FigurePreset::Fig5b.spec();
        spec.hilbert.n_photon_max = 1000;
        assert!(matches!(spec.validate(), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn presets_round_trip_through_parser() {
        for p in FigurePreset::ALL {
            let spec = p.spec();
            let text = spec.to_toml_string().unwrap();
            let back = ExperimentSpec::from_toml_str(&text).unwrap();
            assert_eq!(back, spec, "{}", p.id());
            let cfg = SystemConfig::from_toml_str(&spec.base.to_toml_string()).unwrap();
            assert_eq!(cfg, spec.base);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!("fig9".parse::<FigurePreset>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = FigurePreset::Fig3.spec();
        let mut b = a.clone();
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        b.base.cavity.kappa = 11.0;
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
        assert_eq!(a.config_hash().unwrap().len(), 64);
    }

    fn row(index: usize, x: f64, mf: Option<f64>, lb: Option<f64>) -> PointResult {
        PointResult {
            index,
            label: format!("x={x}"),
            coords: vec![("x".into(), x)],
            meanfield: mf.map(|v| MeanFieldPhase {
                cavity: v,
                dipole: v,
                filter_offset: 0.0,
            }),
            lindblad: lb.map(|v| LindbladPhase {
                delta_phi: v,
                max_p2: None,
                hygiene: Hygiene {
                    max_trace_error: 0.0,
                    max_hermiticity_error: 0.0,
                    min_eigenvalue: 0.0,
                    max_top_photon_population: 0.0,
                    eigen_checks: 0,
                },
                baseline_hygiene: Hygiene {
                    max_trace_error: 0.0,
                    max_hermiticity_error: 0.0,
                    min_eigenvalue: 0.0,
                    max_top_photon_population: 0.0,
                    eigen_checks: 0,
                },
                hilbert: HilbertConfig::default(),
            }),
            delay: None,
            note: None,
            files: Vec::new(),
        }
    }

    fn results(points: Vec<PointResult>) -> Results {
        Results {
            config_hash: String::new(),
            axes: vec!["x".into()],
            points,
            fits: Vec::new(),
        }
    }

    #[test]
    fn identical_bundles_compare_to_one() {
        let r = results(vec![row(0, 0.1, Some(0.01), None), row(1, 0.2, Some(0.04), None)]);
        let c = compare(&r, &r).unwrap();
        assert!(c.rows.iter().all(|x| x.ratio == 1.0 && x.regime == Regime::Agreement));
        assert_eq!(c.max_ratio_deviation, 1.0);
    }

    #[test]
    fn compare_classifies_breakdown() {
        let mf = results(vec![row(0, 0.1, Some(0.01), None), row(1, 0.2, Some(0.04), None)]);
        let lb = results(vec![row(0, 0.1, None, Some(0.008)), row(1, 0.2, None, Some(0.1))]);
        let c = compare(&mf, &lb).unwrap();
        assert_eq!(c.rows[0].regime, Regime::Agreement);
        assert_eq!(c.rows[1].regime, Regime::Breakdown);
        let mut other = lb.clone();
        other.axes = vec!["y".into()];
        assert!(matches!(compare(&mf, &other), Err(Error::AxisMismatch(_))));
    }
}
