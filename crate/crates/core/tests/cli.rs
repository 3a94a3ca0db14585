mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use kerrphase::experiment::{ExperimentSpec, FigurePreset, Manifest, Results, Solver, SweepAxis};
use kerrphase::lindblad::HilbertConfig;
use kerrphase::SystemConfig;

fn kerrphase(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kerrphase")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn sweep_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::single(homogeneous(0.5, 0.1), Solver::Meanfield);
    spec.axes.push(SweepAxis::relative("pulse.F0", "cavity.kappa", &[0.05, 0.1, 0.15, 0.2, 0.25]));
    spec.analyses.fit_alpha = true;
    spec
}

#[test]
fn undriven_simulation_writes_zero_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "system.toml", &homogeneous(0.5, 0.0).to_toml_string());
    let out = tmp.path().join("out");
    let o = kerrphase(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.files.iter().any(|f| f.path == "results.json"));
    for f in &manifest.files {
        assert!(out.join(&f.path).exists(), "{}", f.path);
    }
    let csv = std::fs::read_to_string(out.join("point_000_meanfield.csv")).unwrap();
    assert!(csv.starts_with("# frame=rotating"));
    for line in csv.lines().skip(2) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "sweep.toml", &sweep_spec().to_toml_string().unwrap());
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for (d, jobs) in dirs.iter().zip(["1", "2"]) {
        let o = kerrphase(&["--jobs", jobs, "sweep", "--config", &spec, "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read_manifest = |d: &Path| -> Manifest { serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap() };
    let (ma, mb) = (read_manifest(&dirs[0]), read_manifest(&dirs[1]));
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.config_hash, mb.config_hash);
    for f in &ma.files {
        assert_eq!(std::fs::read(dirs[0].join(&f.path)).unwrap(), std::fs::read(dirs[1].join(&f.path)).unwrap());
    }

    let r = Results::load(&dirs[0]).unwrap();
    assert_eq!(r.points.len(), 5);
    assert!(!r.fits.is_empty());
    let fit = tmp.path().join("fit.json");
    let o = kerrphase(&["fit-alpha", dirs[0].to_str().unwrap(), "--range", "0.05,0.25", "--out", fit.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(fit).unwrap().contains("alpha"));

    let o = kerrphase(&["compare", dirs[0].to_str().unwrap(), dirs[1].to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("max ratio deviation: 1.000"));
}

#[test]
fn spectrum_reports_relative_phase() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "system.toml", &homogeneous(1.0, 0.2).to_toml_string());
    let out = tmp.path().join("spec");
    let o = kerrphase(&["spectrum", "--config", &cfg, "--source", "dipole", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("dphi(omega0) = "));
    let phase = std::fs::read_to_string(out.join("spectrum_run.csv")).unwrap();
    assert_eq!(phase.lines().nth(1), Some("omega,re,im,abs,phase"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    assert_eq!(kerrphase(&["preset", "fig9", "--out", out]).status.code(), Some(2));
    let o = kerrphase(&["preset", "fig3", "--override", "cavity.kappa=10", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--unfreeze"));

    let bad = write(tmp.path(), "bad.toml", &homogeneous(0.5, 0.1).to_toml_string().replace("kappa", "kapa"));
    assert_eq!(kerrphase(&["simulate", "--config", &bad, "--out", out]).status.code(), Some(2));
    let cfg = write(tmp.path(), "ok.toml", &homogeneous(0.5, 0.1).to_toml_string());
    let o = kerrphase(&["simulate", "--config", &cfg, "--override", "dipoles[0].gamma=-1", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    // too few photon levels for a strong pulse
    let mut spec = ExperimentSpec::single(homogeneous(0.5, 0.5), Solver::Lindblad);
    spec.hilbert = HilbertConfig::new(1, 2, 2).unwrap();
    let path = write(tmp.path(), "tiny.toml", &spec.to_toml_string().unwrap());
    let o = kerrphase(&["sweep", "--config", &path, "--out", out]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncation overflow"));
}

#[test]
fn presets_round_trip_and_hash_stably() {
    for p in FigurePreset::ALL {
        let spec = p.spec();
        let text = spec.to_toml_string().unwrap();
        let back = ExperimentSpec::from_toml_str(&text).unwrap();
        assert_eq!(back, spec, "{}", p.id());
        assert_eq!(back.config_hash().unwrap(), spec.config_hash().unwrap());
        assert_eq!(SystemConfig::from_toml_str(&spec.base.to_toml_string()).unwrap(), spec.base);
    }
}
