use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kerrphase::experiment::{self, ExperimentSpec, FigurePreset, Results, Solver};
use kerrphase::lindblad::{self, EvolveOptions, HilbertConfig};
use kerrphase::meanfield::{self, IntegrateOptions};
use kerrphase::spectral::{self, Baseline, FidWindow, FitOptions, Source, WindowPolicy};
use kerrphase::{Error, Result, SystemConfig};

#[derive(Parser)]
#[command(name = "kerrphase", version, about = "Cavity-dipole anharmonicity transfer simulator")]
struct Cli {
    /// Worker threads for sweeps (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "kerrphase-out")]
    out: PathBuf,

    #[arg(long, value_parser = parse_solver)]
    solver: Option<Solver>,

    #[arg(long, value_parser = parse_baseline)]
    baseline: Option<Baseline>,

    /// `key=value` parameter override, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Single run of a system configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep described by an experiment spec.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Phase spectra of a run and its baseline.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "cavity", value_parser = parse_source)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
    /// Quadratic fit of ΔΦ(ω₀) against F₀/κ from a bundle's results.
    FitAlpha {
        bundle: PathBuf,
        /// Fit range in F₀/κ as `lo,hi`.
        #[arg(long)]
        range: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-field vs Lindblad ΔΦ(ω₀) ratios of two bundles.
    Compare {
        meanfield: PathBuf,
        lindblad: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce a figure preset.
    Preset {
        id: String,
        /// Allow `--override` / `--solver` / `--baseline` on a frozen preset.
        #[arg(long)]
        unfreeze: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Long-format CSV of a bundle's scalar results.
    PlotData {
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_solver(s: &str) -> std::result::Result<Solver, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_source(s: &str) -> std::result::Result<Source, String> {
    match s {
        "cavity" => Ok(Source::Cavity),
        "dipole" => Ok(Source::Dipole),
        _ => Err(format!("unknown source `{s}` (cavity|dipole)")),
    }
}

fn apply_common(spec: &mut ExperimentSpec, c: &Common) -> Result<()> {
    for o in &c.overrides {
        spec.base.apply_override(o)?;
    }
    if let Some(s) = c.solver {
        spec.solver = s;
    }
    if let Some(b) = c.baseline {
        spec.spectral.baseline = b;
    }
    spec.hilbert.n_wells = spec.base.n_wells();
    spec.validate()
}

fn report(r: &Results, out: &Path) {
    for p in &r.points {
        let mut line = format!("[{:>3}] {}", p.index, p.label);
        if let Some(m) = p.meanfield {
            line += &format!("  mf dphi={:.6e} (dipole {:.6e})", m.cavity, m.dipole);
        }
        if let Some(l) = p.lindblad {
            line += &format!("  lindblad dphi={:.6e}", l.delta_phi);
            if let Some(p2) = l.max_p2 {
                line += &format!(" maxP2={p2:.4e}");
            }
        }
        if let Some(d) = p.delay {
            line += &format!("  delay in-pulse={:.3e} plateau={:.3e}", d.in_pulse_max, d.terminal_plateau);
        }
        println!("{line}");
    }
    for f in &r.fits {
        match &f.result {
            Some(res) => println!(
                "fit {:?} {:?}: alpha={:.4} exponent={:.3} residual={:.2e}",
                f.solver, f.fixed, res.alpha, res.exponent, res.relative_residual
            ),
            None => println!("fit {:?} {:?}: {}", f.solver, f.fixed, f.error.as_deref().unwrap_or("")),
        }
    }
    println!("bundle written to {}", out.display());
}

fn run_spec(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    let r = experiment::run(spec, out)?;
    report(&r, out);
    Ok(())
}

fn spectrum(config: &Path, source: Source, c: &Common) -> Result<()> {
    let mut cfg = SystemConfig::load(config)?;
    for o in &c.overrides {
        cfg.apply_override(o)?;
    }
    let baseline = spectral::baseline_config(&cfg, c.baseline.unwrap_or_default());
    let policy = WindowPolicy::default();
    let phases = |cfg: &SystemConfig| -> Result<spectral::PhaseSpectrum> {
        let w = match c.solver.unwrap_or_default() {
            Solver::Lindblad => {
                let h = HilbertConfig::for_config(cfg)?;
                let s = lindblad::evolve_from_vacuum(cfg, &h, &EvolveOptions::for_config(cfg))?;
                if source == Source::Dipole {
                    FidWindow::from_series(&s.times, &s.bright, s.frame, cfg, source, &policy)?
                } else {
                    FidWindow::from_series(&s.times, &s.a, s.frame, cfg, source, &policy)?
                }
            }
            _ => {
                let t = meanfield::integrate(cfg, &IntegrateOptions::for_config(cfg))?;
                spectral::fid_window(&t, source, &policy)?
            }
        };
        spectral::window_phase(&w)
    };
    let run = phases(&cfg)?;
    let base = phases(&baseline)?;
    let rel = spectral::relative_phase(&run, &base)?;
    std::fs::create_dir_all(&c.out).map_err(|e| Error::Io {
        path: c.out.clone(),
        source: e,
    })?;
    run.export(&c.out.join("spectrum_run.csv"))?;
    base.export(&c.out.join("spectrum_baseline.csv"))?;
    let mut csv = String::from("omega,delta_phi\n");
    for (w, d) in rel.omega.iter().zip(&rel.delta) {
        if d.is_finite() {
            csv += &format!("{w},{d}\n");
        }
    }
    let path = c.out.join("relative_phase.csv");
    std::fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?;
    println!("dphi(omega0) = {:.6e} rad", rel.at_center);
    Ok(())
}

fn fit_alpha(bundle: &Path, range: Option<&str>, out: Option<&Path>) -> Result<()> {
    let spec: ExperimentSpec = {
        let path = bundle.join("spec.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
        serde_json::from_str(&text)?
    };
    let results = Results::load(bundle)?;
    let f_axis = results
        .axes
        .iter()
        .position(|a| a == "pulse.F0/cavity.kappa")
        .ok_or_else(|| Error::AxisMismatch("bundle has no F0/kappa axis".into()))?;
    let mut opts = FitOptions::default();
    if let Some(r) = range {
        let (lo, hi) = r
            .split_once(',')
            .ok_or_else(|| Error::ConfigParse(format!("range `{r}` is not lo,hi")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::ConfigParse(format!("bad number `{s}`")));
        opts.range = (num(lo)?, num(hi)?);
    } else {
        opts.range = spec.spectral.fit_range;
    }
    let points = spec.points()?;
    let mut fits = Vec::new();
    let mut groups: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for p in &points {
        let key: Vec<String> = p
            .coords
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f_axis)
            .map(|(_, (k, v))| format!("{k}={v}"))
            .collect();
        groups.entry(key.join(",")).or_default().push(p.index);
    }
    for (key, members) in groups {
        let pts: Vec<(f64, f64)> = members
            .iter()
            .filter_map(|&i| {
                let r = &results.points[i];
                let y = r.lindblad.map(|l| l.delta_phi).or(r.meanfield.map(|m| m.cavity));
                y.map(|y| (r.coords[f_axis].1, y))
            })
            .collect();
        let cfg = &points[members[0]].config;
        let h = cfg.homogeneous_params()?;
        let g = kerrphase::model::purcell_rate(cfg)?;
        let r = spectral::fit_alpha(&pts, h.dipole.anharmonicity, h.n, g, &opts)?;
        println!("{key}: alpha={:.4} exponent={:.3} residual={:.2e}", r.alpha, r.exponent, r.relative_residual);
        fits.push(serde_json::json!({ "group": key, "fit": r }));
    }
    let text = serde_json::to_string_pretty(&fits)?;
    if let Some(path) = out {
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    } else {
        println!("{text}");
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let report = experiment::compare(&Results::load(a)?, &Results::load(b)?)?;
    for r in &report.rows {
        println!(
            "{:<40} mf={:.6e} lindblad={:.6e} ratio={:.3} {:?}",
            r.label, r.meanfield, r.lindblad, r.ratio, r.regime
        );
    }
    println!("max ratio deviation: {:.3}", report.max_ratio_deviation);
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, common } => {
            let base = SystemConfig::load(&config)?;
            let mut spec = ExperimentSpec::single(base, Solver::Meanfield);
            apply_common(&mut spec, &common)?;
            run_spec(&spec, &common.out)
        }
        Command::Sweep { config, common } => {
            let mut spec = ExperimentSpec::load(&config)?;
            apply_common(&mut spec, &common)?;
            run_spec(&spec, &common.out)
        }
        Command::Spectrum { config, source, common } => spectrum(&config, source, &common),
        Command::FitAlpha { bundle, range, out } => fit_alpha(&bundle, range.as_deref(), out.as_deref()),
        Command::Compare { meanfield, lindblad, out } => compare(&meanfield, &lindblad, out.as_deref()),
        Command::Preset { id, unfreeze, common } => {
            let preset: FigurePreset = id.parse()?;
            let mut spec = preset.spec();
            let touched = !common.overrides.is_empty() || common.solver.is_some() || common.baseline.is_some();
            if touched && !unfreeze {
                return Err(Error::invalid("preset", "presets are frozen; pass --unfreeze to modify them"));
            }
            apply_common(&mut spec, &common)?;
            run_spec(&spec, &experiment::preset_dir(&common.out, preset))
        }
        Command::PlotData { bundle, out } => {
            let r = Results::load(&bundle)?;
            let data = experiment::plot_data(&r);
            let path = out.unwrap_or_else(|| bundle.join("plot_data.csv"));
            std::fs::write(&path, data).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
