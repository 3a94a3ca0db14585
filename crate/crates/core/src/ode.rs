//! Adaptive Dormand–Prince 5(4) integration of complex-valued systems.
//!
//! Step sizes follow the error estimate alone; output times inside a step are
//! filled from the fourth-order continuous extension, and the final step is
//! clipped to land on the last output time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step accepted before reporting underflow.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-9,
            atol: 1e-12,
            h_min: 1e-14,
            max_steps: 50_000_000,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerances {
            rtol,
            atol,
            ..Tolerances::default()
        }
    }
}

/// Right-hand side `dy/dt = f(t, y)` of a complex ODE system.
pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]);

    /// Applied to the state after every accepted step.
    fn project(&self, _y: &mut [Complex64]) {}
}

impl<F> System for (usize, F)
where
    F: Fn(f64, &[Complex64], &mut [Complex64]),
{
    fn dim(&self) -> usize {
        self.0
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        (self.1)(t, y, dy)
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error coefficients (5th minus embedded 4th order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates `sys` from `y0` at `times[0]` and calls `observe(i, t, y)` at
/// each of the strictly increasing `times`.
pub fn integrate<S, O>(
    sys: &S,
    y0: &[Complex64],
    times: &[f64],
    tol: &Tolerances,
    mut observe: O,
) -> Result<Stats>
where
    S: System + ?Sized,
    O: FnMut(usize, f64, &[Complex64]) -> Result<()>,
{
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: y0.len(),
        });
    }
    if times.is_empty() {
        return Ok(Stats::default());
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times", "output grid must be strictly increasing"));
    }

    let mut stats = Stats::default();
    let mut y = y0.to_vec();
    let mut t = times[0];
    observe(0, t, &y)?;
    if times.len() == 1 {
        return Ok(stats);
    }

    let mut k = vec![vec![Complex64::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    let mut ynew = vec![Complex64::new(0.0, 0.0); n];

    sys.rhs(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let span = times[times.len() - 1] - times[0];
    let mut h = initial_step(sys, t, &y, &k[0], tol, span, &mut tmp, &mut ynew);
    stats.evaluations += 1;
    let mut err_prev: f64 = 1e-4;

    let t_end = times[times.len() - 1];
    let mut next = 1;
    let mut dense = vec![vec![Complex64::new(0.0, 0.0); n]; 5];
    while next < times.len() {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(Error::TooManySteps(tol.max_steps));
        }
        let remaining = t_end - t;
        let clipped = h >= remaining;
        let h_try = if clipped { remaining } else { h };
        if h_try < tol.h_min && !clipped {
            return Err(Error::StepSizeUnderflow { t, h: h_try });
        }

        stage(sys, t, &y, h_try, &mut k, &mut tmp);
        stats.evaluations += 6;
        for j in 0..n {
            ynew[j] = y[j] + h_try * (A71 * k[0][j] + A73 * k[2][j] + A74 * k[3][j] + A75 * k[4][j] + A76 * k[5][j]);
        }
        sys.rhs(t + h_try, &ynew, &mut k[6]);
        stats.evaluations += 1;

        let mut sum = 0.0;
        for j in 0..n {
            let e = h_try * (E1 * k[0][j] + E3 * k[2][j] + E4 * k[3][j] + E5 * k[4][j] + E6 * k[5][j] + E7 * k[6][j]);
            let sc = tol.atol + tol.rtol * y[j].norm().max(ynew[j].norm());
            sum += e.norm_sqr() / (sc * sc);
        }
        let err = (sum / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            if h_try <= tol.h_min {
                return Err(Error::NonFinite(t));
            }
            h = h_try * FAC_MIN;
            stats.rejected += 1;
            continue;
        }

        // PI step-size control
        let expo = 0.2 - 0.75 * BETA;
        if err > 1.0 {
            let fac = (SAFETY * err.powf(-expo)).clamp(FAC_MIN, 1.0);
            h = h_try * fac;
            stats.rejected += 1;
            if h < tol.h_min {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            continue;
        }
        let fac = if err == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * err.powf(-expo) * err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
        };
        err_prev = err.max(1e-4);
        let t_new = if clipped { t_end } else { t + h_try };
        if ynew.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(t_new));
        }

        // outputs inside the step come from the continuous extension
        if next < times.len() && times[next] <= t_new {
            let mut prepared = false;
            while next < times.len() && times[next] <= t_new {
                if times[next] == t_new {
                    observe(next, t_new, &ynew)?;
                } else {
                    if !prepared {
                        prepare_dense(&y, &ynew, &k, h_try, &mut dense);
                        prepared = true;
                    }
                    let theta = (times[next] - t) / h_try;
                    eval_dense(&dense, theta, &mut tmp);
                    observe(next, times[next], &tmp)?;
                }
                next += 1;
            }
        }

        t = t_new;
        std::mem::swap(&mut y, &mut ynew);
        sys.project(&mut y);
        k.swap(0, 6);
        stats.accepted += 1;
        h = h_try * fac;
    }
    Ok(stats)
}

fn prepare_dense(y: &[Complex64], ynew: &[Complex64], k: &[Vec<Complex64>], h: f64, r: &mut [Vec<Complex64>]) {
    for j in 0..y.len() {
        let diff = ynew[j] - y[j];
        let bspl = h * k[0][j] - diff;
        r[0][j] = y[j];
        r[1][j] = diff;
        r[2][j] = bspl;
        r[3][j] = diff - h * k[6][j] - bspl;
        r[4][j] = h * (D1 * k[0][j] + D3 * k[2][j] + D4 * k[3][j] + D5 * k[4][j] + D6 * k[5][j] + D7 * k[6][j]);
    }
}

fn eval_dense(r: &[Vec<Complex64>], theta: f64, out: &mut [Complex64]) {
    let th1 = 1.0 - theta;
    for j in 0..out.len() {
        out[j] = r[0][j] + theta * (r[1][j] + th1 * (r[2][j] + theta * (r[3][j] + th1 * r[4][j])));
    }
}

fn stage<S: System + ?Sized>(
    sys: &S,
    t: f64,
    y: &[Complex64],
    h: f64,
    k: &mut [Vec<Complex64>],
    tmp: &mut [Complex64],
) {
    let n = y.len();
    for j in 0..n {
        tmp[j] = y[j] + h * A21 * k[0][j];
    }
    sys.rhs(t + C2 * h, tmp, &mut k[1]);
    for j in 0..n {
        tmp[j] = y[j] + h * (A31 * k[0][j] + A32 * k[1][j]);
    }
    sys.rhs(t + C3 * h, tmp, &mut k[2]);
    for j in 0..n {
        tmp[j] = y[j] + h * (A41 * k[0][j] + A42 * k[1][j] + A43 * k[2][j]);
    }
    sys.rhs(t + C4 * h, tmp, &mut k[3]);
    for j in 0..n {
        tmp[j] = y[j] + h * (A51 * k[0][j] + A52 * k[1][j] + A53 * k[2][j] + A54 * k[3][j]);
    }
    sys.rhs(t + C5 * h, tmp, &mut k[4]);
    for j in 0..n {
        tmp[j] = y[j] + h * (A61 * k[0][j] + A62 * k[1][j] + A63 * k[2][j] + A64 * k[3][j] + A65 * k[4][j]);
    }
    sys.rhs(t + h, tmp, &mut k[5]);
}

#[allow(clippy::too_many_arguments)]
fn initial_step<S: System + ?Sized>(
    sys: &S,
    t: f64,
    y: &[Complex64],
    f0: &[Complex64],
    tol: &Tolerances,
    span: f64,
    tmp: &mut [Complex64],
    f1: &mut [Complex64],
) -> f64 {
    // Hairer–Wanner starting step heuristic.
    let n = y.len().max(1) as f64;
    let sc = |z: Complex64| tol.atol + tol.rtol * z.norm();
    let d0 = (y.iter().map(|&z| (z.norm() / sc(z)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y
        .iter()
        .zip(f0)
        .map(|(&z, &f)| (f.norm() / sc(z)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for j in 0..y.len() {
        tmp[j] = y[j] + h0 * f0[j];
    }
    sys.rhs(t + h0, tmp, f1);
    let d2 = (y
        .iter()
        .zip(f0.iter().zip(f1.iter()))
        .map(|(&z, (&a, &b))| ((b - a).norm() / sc(z)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).max(tol.h_min)
}

/// Uniform grid `t_start, t_start + dt, …` covering `[t_start, t_end]`.
pub fn uniform_grid(t_start: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end > t_start) {
        return Err(Error::invalid("grid", "need dt > 0 and t_end > t_start"));
    }
    let n = ((t_end - t_start) / dt).round() as usize;
    Ok((0..=n).map(|i| t_start + i as f64 * dt).collect())
}
