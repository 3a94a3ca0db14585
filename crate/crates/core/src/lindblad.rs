//! Density-matrix propagation on a truncated cavity ⊗ wells Hilbert space.
//!
//! Basis ordering: the cavity Fock index is the slowest, then well 1, well 2, …
//! Each well keeps levels `ν = 0..=nu_max` of its Kerr ladder and `b` carries
//! bosonic `√ν` matrix elements.
//!
//! The master equation is applied directly to the `D×D` matrix,
//! `dρ/dt = K + K†` with `K = −iH_eff ρ + ½ Σ LρL†` and
//! `H_eff = H − (i/2) Σ L†L`, which keeps the right-hand side Hermitian to the
//! last bit.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drive_amplitude, envelope, CollectiveCoefficients, Frame, SystemConfig};
use crate::ode::{self, Tolerances};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub const DEFAULT_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HilbertConfig {
    pub n_photon_max: usize,
    pub nu_max: usize,
    pub n_wells: usize,
    pub cap: usize,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        HilbertConfig {
            n_photon_max: 8,
            nu_max: 2,
            n_wells: 2,
            cap: DEFAULT_CAP,
        }
    }
}

impl HilbertConfig {
    pub fn new(n_photon_max: usize, nu_max: usize, n_wells: usize) -> Result<Self> {
        let h = HilbertConfig {
            n_photon_max,
            nu_max,
            n_wells,
            cap: DEFAULT_CAP,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn for_config(cfg: &SystemConfig) -> Result<Self> {
        HilbertConfig::new(8, 2, cfg.n_wells())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_photon_max < 1 {
            return Err(Error::invalid("n_photon_max", "must be >= 1"));
        }
        if self.nu_max < 1 {
            return Err(Error::invalid("nu_max", "must be >= 1"));
        }
        if self.n_wells < 1 {
            return Err(Error::invalid("n_wells", "must be >= 1"));
        }
        let dim = self.dim_unchecked();
        if dim > self.cap {
            return Err(Error::DimensionCap { dim, cap: self.cap });
        }
        Ok(())
    }

    fn dim_unchecked(&self) -> usize {
        let levels = (self.nu_max + 1).saturating_pow(self.n_wells as u32);
        (self.n_photon_max + 1).saturating_mul(levels)
    }

    /// `D = (n_photon_max + 1)(nu_max + 1)^N`.
    pub fn dim(&self) -> usize {
        self.dim_unchecked()
    }

    /// Linear index of `|m; ν₁, …, ν_N⟩`.
    pub fn index(&self, photons: usize, levels: &[usize]) -> usize {
        let l = self.nu_max + 1;
        let mut idx = photons;
        for &nu in levels {
            idx = idx * l + nu;
        }
        idx
    }

    /// Inverse of [`index`](Self::index).
    pub fn decode(&self, mut idx: usize) -> (usize, Vec<usize>) {
        let l = self.nu_max + 1;
        let mut levels = vec![0; self.n_wells];
        for k in (0..self.n_wells).rev() {
            levels[k] = idx % l;
            idx /= l;
        }
        (idx, levels)
    }

    pub fn with_photons(&self, n_photon_max: usize) -> Result<Self> {
        let h = HilbertConfig { n_photon_max, ..*self };
        h.validate()?;
        Ok(h)
    }
}

/// Sparse `D×D` matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, ONE)))
    }

    /// Sums duplicates and drops exact zeros.
    pub fn from_triplets(dim: usize, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut t: Vec<(usize, usize, Complex64)> = entries.into_iter().collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != ZERO);
        let mut row_ptr = vec![0; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        OperatorMatrix {
            dim,
            row_ptr,
            cols: merged.iter().map(|e| e.1).collect(),
            vals: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k])))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.cols[k] == c)
            .map_or(ZERO, |k| self.vals[k])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_triplets(self.dim, self.triplets().chain(other.triplets()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (j, v) = (self.cols[k], self.vals[k]);
                for q in other.row_ptr[j]..other.row_ptr[j + 1] {
                    out.push((r, other.cols[q], v * other.vals[q]));
                }
            }
        }
        Self::from_triplets(self.dim, out)
    }

    /// Largest element magnitude.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// `out += s · (self · x)` for row-major dense `x`.
    fn mul_dense_acc(&self, s: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        for r in 0..d {
            let orow = &mut out[r * d..(r + 1) * d];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = s * self.vals[k];
                let xrow = &x[self.cols[k] * d..(self.cols[k] + 1) * d];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
    }

    /// `out += s · (x · self†)` for row-major dense `x`.
    fn dense_mul_adjoint_acc(&self, s: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        // (x L†)[i,k] = Σ_j x[i,j] conj(L[k,j])
        for k in 0..d {
            for q in self.row_ptr[k]..self.row_ptr[k + 1] {
                let (j, v) = (self.cols[q], s * self.vals[q].conj());
                for i in 0..d {
                    out[i * d + k] += x[i * d + j] * v;
                }
            }
        }
    }

    /// `tr(self · ρ)`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Complex64 {
        let d = self.dim;
        let mut s = ZERO;
        for r in 0..d {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * rho.data[self.cols[k] * d + r];
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operators {
    pub hilbert: HilbertConfig,
    pub a: OperatorMatrix,
    pub b: Vec<OperatorMatrix>,
}

/// Cavity and dipole annihilation operators embedded in the full space.
pub fn build_operators(h: &HilbertConfig) -> Result<Operators> {
    h.validate()?;
    let d = h.dim();
    let mut a = Vec::new();
    let mut b: Vec<Vec<(usize, usize, Complex64)>> = vec![Vec::new(); h.n_wells];
    for col in 0..d {
        let (m, levels) = h.decode(col);
        if m > 0 {
            a.push((h.index(m - 1, &levels), col, Complex64::new((m as f64).sqrt(), 0.0)));
        }
        for (n, bn) in b.iter_mut().enumerate() {
            let nu = levels[n];
            if nu > 0 {
                let mut lower = levels.clone();
                lower[n] -= 1;
                bn.push((h.index(m, &lower), col, Complex64::new((nu as f64).sqrt(), 0.0)));
            }
        }
    }
    Ok(Operators {
        hilbert: *h,
        a: OperatorMatrix::from_triplets(d, a),
        b: b.into_iter().map(|t| OperatorMatrix::from_triplets(d, t)).collect(),
    })
}

fn frame_shift(cfg: &SystemConfig) -> f64 {
    match cfg.frame {
        Frame::Lab => 0.0,
        Frame::RotatingAtDrive => cfg.pulse.carrier,
    }
}

fn check_wells(cfg: &SystemConfig, h: &HilbertConfig) -> Result<()> {
    if cfg.n_wells() != h.n_wells {
        return Err(Error::WellCount {
            expected: h.n_wells,
            got: cfg.n_wells(),
        });
    }
    Ok(())
}

/// Undriven Hamiltonian in `cfg.frame`:
/// `Δ_c a†a + Σₙ [Δₙ bₙ†bₙ − Uₙ bₙ†bₙ†bₙbₙ + gₙ(a bₙ† + a† bₙ)]`.
pub fn build_hamiltonian(cfg: &SystemConfig, h: &HilbertConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    check_wells(cfg, h)?;
    let ops = build_operators(h)?;
    Ok(hamiltonian_from(cfg, &ops))
}

fn hamiltonian_from(cfg: &SystemConfig, ops: &Operators) -> OperatorMatrix {
    let h = &ops.hilbert;
    let s = frame_shift(cfg);
    let d = h.dim();
    // diagonal part from the number basis
    let diag = (0..d).map(|i| {
        let (m, levels) = h.decode(i);
        let mut e = (cfg.cavity.omega_c - s) * m as f64;
        for (dp, &nu) in cfg.dipoles.iter().zip(&levels) {
            let nu = nu as f64;
            e += (dp.omega - s) * nu - dp.anharmonicity * (nu * nu - nu);
        }
        (i, i, Complex64::new(e, 0.0))
    });
    let mut ham = OperatorMatrix::from_triplets(d, diag);
    let ad = ops.a.adjoint();
    for (dp, bn) in cfg.dipoles.iter().zip(&ops.b) {
        let g = Complex64::new(dp.coupling, 0.0);
        let hop = ad.matmul(bn);
        ham = ham.add(&hop.add(&hop.adjoint()).scale(g));
    }
    ham
}

/// Full Hamiltonian including the drive term at time `t`.
pub fn hamiltonian_at(cfg: &SystemConfig, h: &HilbertConfig, t: f64) -> Result<OperatorMatrix> {
    let ops = build_operators(h)?;
    check_wells(cfg, h)?;
    let f = drive_amplitude(t, &cfg.pulse, cfg.frame);
    // F a† + F* a
    let drive = ops.a.adjoint().scale(f).add(&ops.a.scale(f.conj()));
    Ok(hamiltonian_from(cfg, &ops).add(&drive))
}

/// Dense density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub t: f64,
    pub data: Vec<Complex64>,
}

impl DensityMatrix {
    /// Global ground state `|0; 0, …, 0⟩`.
    pub fn vacuum(h: &HilbertConfig) -> Self {
        Self::basis_projector(h, 0)
    }

    /// `|m; 0, …⟩⟨m; 0, …|`.
    pub fn fock(h: &HilbertConfig, photons: usize) -> Result<Self> {
        if photons > h.n_photon_max {
            return Err(Error::invalid("photons", "exceeds n_photon_max"));
        }
        Ok(Self::basis_projector(h, h.index(photons, &vec![0; h.n_wells])))
    }

    pub fn basis_projector(h: &HilbertConfig, idx: usize) -> Self {
        let d = h.dim();
        let mut data = vec![ZERO; d * d];
        data[idx * d + idx] = ONE;
        DensityMatrix { dim: d, t: 0.0, data }
    }

    pub fn from_dense(m: &DMatrix<Complex64>, t: f64) -> Self {
        let d = m.nrows();
        let mut data = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                data.push(m[(r, c)]);
            }
        }
        DensityMatrix { dim: d, t, data }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// `max |ρ_ij − ρ_ji*|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim;
        let mut m = 0.0f64;
        for r in 0..d {
            for c in r..d {
                m = m.max((self.data[r * d + c] - self.data[c * d + r].conj()).norm());
            }
        }
        m
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim;
        // subnormal entries stall the QR sweeps; dropping them moves eigenvalues by < D·1e-40
        let flush = |z: Complex64| if z.norm() < 1e-40 { ZERO } else { z };
        let m = DMatrix::from_fn(d, d, |r, c| flush(0.5 * (self.data[r * d + c] + self.data[c * d + r].conj())));
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Writes a JSON header line followed by little-endian `(re, im)` f64 pairs, row-major.
    pub fn dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "format": "density-matrix",
            "dim": self.dim,
            "t": self.t,
            "layout": "row-major complex128 (re, im) little-endian",
        });
        writeln!(w, "{header}")?;
        for z in &self.data {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the format written by [`dump`](Self::dump).
    pub fn load(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::ConfigParse("missing checkpoint header".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])?;
        let dim = header["dim"]
            .as_u64()
            .ok_or_else(|| Error::ConfigParse("checkpoint header lacks dim".into()))? as usize;
        let t = header["t"].as_f64().unwrap_or(0.0);
        let body = &bytes[nl + 1..];
        if body.len() != dim * dim * 16 {
            return Err(Error::LengthMismatch {
                expected: dim * dim * 16,
                got: body.len(),
            });
        }
        let data = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Ok(DensityMatrix { dim, t, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.dump(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Prebuilt generator of the master equation.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    cfg: SystemConfig,
    ops: Operators,
    h_eff: OperatorMatrix,
    jumps: Vec<OperatorMatrix>,
    a_dag: OperatorMatrix,
}

impl Liouvillian {
    pub fn new(cfg: &SystemConfig, h: &HilbertConfig) -> Result<Self> {
        cfg.validate()?;
        check_wells(cfg, h)?;
        let ops = build_operators(h)?;
        let ham = hamiltonian_from(cfg, &ops);
        let mut jumps = vec![ops.a.scale(Complex64::new(cfg.cavity.kappa.sqrt(), 0.0))];
        for (dp, bn) in cfg.dipoles.iter().zip(&ops.b) {
            jumps.push(bn.scale(Complex64::new(dp.gamma.sqrt(), 0.0)));
        }
        let mut h_eff = ham;
        for l in &jumps {
            h_eff = h_eff.add(&l.adjoint().matmul(l).scale(Complex64::new(0.0, -0.5)));
        }
        Ok(Liouvillian {
            cfg: cfg.clone(),
            a_dag: ops.a.adjoint(),
            ops,
            h_eff,
            jumps,
        })
    }

    pub fn dim(&self) -> usize {
        self.ops.hilbert.dim()
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    fn apply(&self, t: f64, rho: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim();
        out.iter_mut().for_each(|z| *z = ZERO);
        // K = −i H_eff ρ − i(F a† + F* a) ρ + ½ Σ L ρ L†
        self.h_eff.mul_dense_acc(-I, rho, out);
        let f = drive_amplitude(t, &self.cfg.pulse, self.cfg.frame);
        if f != ZERO {
            self.a_dag.mul_dense_acc(-I * f, rho, out);
            self.ops.a.mul_dense_acc(-I * f.conj(), rho, out);
        }
        for l in &self.jumps {
            scratch.iter_mut().for_each(|z| *z = ZERO);
            l.mul_dense_acc(ONE, rho, scratch);
            l.dense_mul_adjoint_acc(Complex64::new(0.5, 0.0), scratch, out);
        }
        // out ← K + K†
        for r in 0..d {
            for c in r..d {
                let (x, y) = (out[r * d + c], out[c * d + r]);
                let v = x + y.conj();
                out[r * d + c] = v;
                out[c * d + r] = v.conj();
            }
        }
    }
}

/// Right-hand side of the master equation at `(ρ, t)`.
pub fn lindblad_rhs(rho: &DensityMatrix, t: f64, cfg: &SystemConfig, h: &HilbertConfig) -> Result<DensityMatrix> {
    let l = Liouvillian::new(cfg, h)?;
    if rho.dim != l.dim() {
        return Err(Error::LengthMismatch {
            expected: l.dim(),
            got: rho.dim,
        });
    }
    let mut out = vec![ZERO; rho.data.len()];
    let mut scratch = vec![ZERO; rho.data.len()];
    l.apply(t, &rho.data, &mut out, &mut scratch);
    Ok(DensityMatrix { dim: rho.dim, t, data: out })
}

struct LindbladSystem<'a> {
    l: &'a Liouvillian,
    scratch: std::cell::RefCell<Vec<Complex64>>,
}

impl ode::System for LindbladSystem<'_> {
    fn dim(&self) -> usize {
        self.l.dim() * self.l.dim()
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let mut s = self.scratch.borrow_mut();
        self.l.apply(t, y, dy, &mut s);
    }

    // long free decays drive far-off-diagonal entries into subnormal range,
    // where arithmetic is orders of magnitude slower
    fn project(&self, y: &mut [Complex64]) {
        for z in y.iter_mut() {
            if z.re.abs() < 1e-150 {
                z.re = 0.0;
            }
            if z.im.abs() < 1e-150 {
                z.im = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub tolerances: Tolerances,
    /// Eigenvalue check every this many output samples (and at the end).
    pub eigen_every: usize,
    /// Largest allowed population of the top photon level.
    pub truncation_limit: f64,
    /// Negative eigenvalues below `−positivity_abort` abort the run.
    pub positivity_abort: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            t_start: 0.0,
            t_end: 10.0,
            dt: 0.002,
            tolerances: Tolerances::new(1e-10, 1e-13),
            eigen_every: 100,
            truncation_limit: 1e-4,
            positivity_abort: 1e-6,
        }
    }
}

impl EvolveOptions {
    /// Same grid as [`crate::meanfield::IntegrateOptions::for_config`].
    pub fn for_config(cfg: &SystemConfig) -> Self {
        let m = crate::meanfield::IntegrateOptions::for_config(cfg);
        EvolveOptions {
            t_start: m.t_start,
            t_end: m.t_end,
            dt: m.dt,
            ..Default::default()
        }
    }
}

/// Worst-case invariant deviations seen during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hygiene {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub max_top_photon_population: f64,
    pub eigen_checks: usize,
}

impl Hygiene {
    fn new() -> Self {
        Hygiene {
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_top_photon_population: 0.0,
            eigen_checks: 0,
        }
    }

    /// Trace within 1e-8, Hermiticity within 1e-10, eigenvalues ≥ −1e-8.
    pub fn is_clean(&self) -> bool {
        self.max_trace_error < 1e-8 && self.max_hermiticity_error < 1e-10 && self.min_eigenvalue >= -1e-8
    }
}

/// Expectation values on the output grid, with coherences in `frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindbladSeries {
    pub times: Vec<f64>,
    pub a: Vec<Complex64>,
    /// `⟨bₙ⟩` per well.
    pub b: Vec<Vec<Complex64>>,
    pub bright: Vec<Complex64>,
    /// `⟨B₁⟩` for `N = 2`.
    pub dark: Option<Vec<Complex64>>,
    /// `populations[n][ν][k]`: population of level ν of well n at sample k.
    pub populations: Vec<Vec<Vec<f64>>>,
    pub photon_number: Vec<f64>,
    pub top_photon_population: Vec<f64>,
    pub frame: Frame,
    pub config: SystemConfig,
    pub hilbert: HilbertConfig,
    pub hygiene: Hygiene,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub series: LindbladSeries,
    pub final_state: DensityMatrix,
    pub checkpoints: Vec<DensityMatrix>,
    pub stats: ode::Stats,
}

/// Propagates `rho0` (given in the frame rotating at the drive) and records
/// expectations on a uniform grid.
///
/// `checkpoint_times` selects output samples whose full state is kept.
pub fn evolve(
    rho0: &DensityMatrix,
    cfg: &SystemConfig,
    h: &HilbertConfig,
    opts: &EvolveOptions,
    checkpoint_times: &[f64],
) -> Result<Evolution> {
    let work = cfg.with_frame(Frame::RotatingAtDrive);
    let l = Liouvillian::new(&work, h)?;
    let d = l.dim();
    if rho0.dim != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: rho0.dim,
        });
    }
    let times = ode::uniform_grid(opts.t_start, opts.t_end, opts.dt)?;
    let n = h.n_wells;
    let ops = l.operators();
    let number = ops.a.adjoint().matmul(&ops.a);
    let top: Vec<usize> = (0..d).filter(|&i| h.decode(i).0 == h.n_photon_max).collect();
    let level_index: Vec<Vec<usize>> = (0..d).map(|i| h.decode(i).1).collect();
    let collective = CollectiveCoefficients::new(n);

    let mut s = LindbladSeries {
        times: times.clone(),
        a: Vec::with_capacity(times.len()),
        b: vec![Vec::with_capacity(times.len()); n],
        bright: Vec::with_capacity(times.len()),
        dark: if n == 2 { Some(Vec::with_capacity(times.len())) } else { None },
        populations: vec![vec![Vec::with_capacity(times.len()); h.nu_max + 1]; n],
        photon_number: Vec::with_capacity(times.len()),
        top_photon_population: Vec::with_capacity(times.len()),
        frame: cfg.frame,
        config: cfg.clone(),
        hilbert: *h,
        hygiene: Hygiene::new(),
    };
    let mut checkpoints = Vec::new();
    let mut last = rho0.clone();

    let sys = LindbladSystem {
        l: &l,
        scratch: std::cell::RefCell::new(vec![ZERO; d * d]),
    };
    let wd = cfg.pulse.carrier;
    let to_frame = |t: f64| match cfg.frame {
        Frame::Lab => Complex64::from_polar(1.0, -wd * t),
        Frame::RotatingAtDrive => ONE,
    };

    let stats = ode::integrate(&sys, &rho0.data, &times, &opts.tolerances, |k, t, y| {
        let rho = DensityMatrix {
            dim: d,
            t,
            data: y.to_vec(),
        };
        let hy = &mut s.hygiene;
        hy.max_trace_error = hy.max_trace_error.max((rho.trace() - ONE).norm());
        hy.max_hermiticity_error = hy.max_hermiticity_error.max(rho.hermiticity_deviation());
        if k % opts.eigen_every.max(1) == 0 || k + 1 == times.len() {
            let e = rho.min_eigenvalue();
            hy.min_eigenvalue = hy.min_eigenvalue.min(e);
            hy.eigen_checks += 1;
            if e < -opts.positivity_abort {
                return Err(Error::StateInvariant {
                    t,
                    what: format!("minimum eigenvalue {e:.3e}"),
                });
            }
        }
        let top_pop: f64 = top.iter().map(|&i| y[i * d + i].re).sum();
        hy.max_top_photon_population = hy.max_top_photon_population.max(top_pop);
        if top_pop > opts.truncation_limit {
            return Err(Error::TruncationOverflow {
                population: top_pop,
                limit: opts.truncation_limit,
            });
        }

        let phase = to_frame(t);
        s.a.push(ops.a.expectation(&rho) * phase);
        let bs: Vec<Complex64> = ops.b.iter().map(|bn| bn.expectation(&rho) * phase).collect();
        let coll = collective.to_collective(&bs)?;
        s.bright.push(coll[0]);
        if let Some(dark) = s.dark.as_mut() {
            dark.push(coll[1]);
        }
        for (w, v) in bs.into_iter().enumerate() {
            s.b[w].push(v);
        }
        for (w, pops) in s.populations.iter_mut().enumerate() {
            let mut acc = vec![0.0; h.nu_max + 1];
            for i in 0..d {
                acc[level_index[i][w]] += y[i * d + i].re;
            }
            for (p, v) in pops.iter_mut().zip(acc) {
                p.push(v);
            }
        }
        s.photon_number.push(number.expectation(&rho).re);
        s.top_photon_population.push(top_pop);
        if checkpoint_times.iter().any(|&c| (c - t).abs() <= 0.5 * opts.dt) {
            checkpoints.push(rho.clone());
        }
        if k + 1 == times.len() {
            last = rho;
        }
        Ok(())
    })?;

    Ok(Evolution {
        series: s,
        final_state: last,
        checkpoints,
        stats,
    })
}

/// Vacuum start with default truncation-check options for `cfg`.
pub fn evolve_from_vacuum(cfg: &SystemConfig, h: &HilbertConfig, opts: &EvolveOptions) -> Result<LindbladSeries> {
    Ok(evolve(&DensityMatrix::vacuum(h), cfg, h, opts, &[])?.series)
}

/// `P₂(t)` of the first well (identical wells share it).
pub fn second_level_population(series: &LindbladSeries) -> Result<Vec<f64>> {
    if series.hilbert.nu_max < 2 {
        return Err(Error::invalid("nu_max", "second level is truncated away"));
    }
    Ok(series.populations[0][2].iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

impl LindbladSeries {
    /// Mean-field-shaped CSV with `P0, P1, …` columns per well.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# frame={} model=lindblad n_photon_max={} nu_max={}",
            self.frame.as_str(),
            self.hilbert.n_photon_max,
            self.hilbert.nu_max
        )?;
        write!(w, "t,a_re,a_im,B0_re,B0_im")?;
        if self.dark.is_some() {
            write!(w, ",B1_re,B1_im")?;
        }
        for n in 0..self.populations.len() {
            for nu in 0..self.populations[n].len() {
                write!(w, ",P{nu}_well{}", n + 1)?;
            }
        }
        writeln!(w, ",photons")?;
        for k in 0..self.times.len() {
            let (a, b) = (self.a[k], self.bright[k]);
            write!(w, "{},{},{},{},{}", self.times[k], a.re, a.im, b.re, b.im)?;
            if let Some(dk) = &self.dark {
                write!(w, ",{},{}", dk[k].re, dk[k].im)?;
            }
            for pops in &self.populations {
                for p in pops {
                    write!(w, ",{}", p[k])?;
                }
            }
            writeln!(w, ",{}", self.photon_number[k])?;
        }
        Ok(())
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Drive envelope at every sample, for plotting alongside the series.
    pub fn envelope(&self) -> Vec<f64> {
        self.times.iter().map(|&t| envelope(t, &self.config.pulse)).collect()
    }
}

/// Runs at `h` and at `h` with two more photons, raising the truncation until
/// `metric` changes by less than 1% (plus `abs_floor`) or the cap is reached.
pub fn converge_truncation<F>(
    cfg: &SystemConfig,
    h: &HilbertConfig,
    opts: &EvolveOptions,
    abs_floor: f64,
    metric: F,
) -> Result<(HilbertConfig, LindbladSeries)>
where
    F: Fn(&LindbladSeries) -> Result<f64>,
{
    let mut cur = *h;
    let mut series = evolve_from_vacuum(cfg, &cur, opts)?;
    let mut value = metric(&series)?;
    loop {
        let next = match cur.with_photons(cur.n_photon_max + 2) {
            Ok(n) => n,
            Err(Error::DimensionCap { .. }) => return Ok((cur, series)),
            Err(e) => return Err(e),
        };
        let s2 = evolve_from_vacuum(cfg, &next, opts)?;
        let v2 = metric(&s2)?;
        if (v2 - value).abs() <= 0.01 * value.abs() + abs_floor {
            return Ok((cur, series));
        }
        cur = next;
        series = s2;
        value = v2;
    }
}
