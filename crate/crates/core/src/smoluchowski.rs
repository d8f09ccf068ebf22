//! Truncated discrete Smoluchowski equations, classical and Flory form.
//!
//! Densities `f_1..f_{n_max}` evolve by
//!
//! ```text
//! df_n/dt = 1/2 Σ_{m<n} α(m, n-m) f_m f_{n-m} - f_n Σ_{m<=n_max} α(n, m) f_m  [- ᾱ(n) f_n g_∞]
//! ```
//!
//! where the bracketed sol-gel term is present in Flory mode only. Mass that
//! leaves the truncated range, through coagulations producing sizes above
//! `n_max` or through the sol-gel term, is booked into `flux_out` (classical)
//! or `g_inf` (Flory), so `Σ n f_n + g_inf + flux_out` is conserved exactly by
//! the right-hand side.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Factorization, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeMode {
    /// Mass past `n_max` is removed from the system.
    Classical,
    /// Mass past `n_max` forms a gel that keeps absorbing the sol.
    Flory,
}

impl FromStr for OdeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classical" => Ok(OdeMode::Classical),
            "flory" => Ok(OdeMode::Flory),
            other => Err(Error::config(format!("unknown ode mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeConfig {
    pub n_max: usize,
    pub mode: OdeMode,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    /// Times at which the full state is recorded; `t_end` is always added.
    pub output_times: Vec<f64>,
    /// Number of densities written per CSV row.
    pub n_report: usize,
    pub max_steps: u64,
}

impl OdeConfig {
    pub fn new(n_max: usize, mode: OdeMode, t_end: f64) -> Self {
        Self {
            n_max,
            mode,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            t_end,
            output_times: Vec::new(),
            n_report: 10,
            max_steps: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::config(format!("ode.n_max must be at least 2, got {}", self.n_max)));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::config("ode tolerances must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(format!("ode.t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.output_times.iter().any(|&t| !(t >= 0.0 && t <= self.t_end)) {
            return Err(Error::config("ode output times must lie in [0, t_end]"));
        }
        Ok(())
    }
}

/// Densities and the two out-of-range mass reservoirs at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeState {
    pub t: f64,
    /// `f[i]` is the density of size `i + 1`.
    pub f: Vec<f64>,
    pub g_inf: f64,
    pub flux_out: f64,
}

impl OdeState {
    /// `f_1 = 1`, all other sizes empty.
    pub fn monodisperse(n_max: usize) -> Self {
        let mut f = vec![0.0; n_max];
        f[0] = 1.0;
        Self {
            t: 0.0,
            f,
            g_inf: 0.0,
            flux_out: 0.0,
        }
    }

    /// Density of size `n` (zero outside `1..=n_max`).
    pub fn density(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.f.get(n - 1).copied().unwrap_or(0.0)
        }
    }

    /// Sol mass `M = Σ n f_n`.
    pub fn sol_mass(&self) -> f64 {
        self.f.iter().enumerate().map(|(i, f)| (i + 1) as f64 * f).sum()
    }

    /// `Σ f_n`.
    pub fn zeroth_moment(&self) -> f64 {
        self.f.iter().sum()
    }

    /// `Σ n f_n + g_inf + flux_out`.
    pub fn ledger(&self) -> f64 {
        self.sol_mass() + self.g_inf + self.flux_out
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = self.f.clone();
        y.push(self.g_inf);
        y.push(self.flux_out);
        y
    }

    fn unpack(t: f64, y: &[f64]) -> Self {
        let n = y.len() - 2;
        Self {
            t,
            f: y[..n].to_vec(),
            g_inf: y[n],
            flux_out: y[n + 1],
        }
    }
}

/// Time derivative of an [`OdeState`].
#[derive(Debug, Clone, PartialEq)]
pub struct OdeDerivative {
    pub df: Vec<f64>,
    pub dg_inf: f64,
    pub dflux_out: f64,
}

enum Coupling {
    Product { scale: f64, u: Vec<f64> },
    Symmetric { scale: f64, u: Vec<f64>, v: Vec<f64> },
    Dense { alpha: Vec<f64> },
}

/// Right-hand side with kernel weights tabulated once for a fixed truncation.
pub struct Smoluchowski {
    n_max: usize,
    mode: OdeMode,
    coupling: Coupling,
    abar: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    rev: Vec<f64>,
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| p * q).sum();
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += p[k] * q[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

impl Smoluchowski {
    /// Fails in Flory mode when `α(m, n) / m` has no limit, and for tabulated
    /// kernels smaller than `n_max`.
    pub fn new(n_max: usize, mode: OdeMode, kernel: &KernelSpec) -> Result<Self> {
        let sizes = 1..=n_max as u64;
        let coupling = match kernel.factorization() {
            Factorization::Product { scale, u } => Coupling::Product {
                scale,
                u: sizes.map(|n| u.at(n)).collect(),
            },
            Factorization::Symmetric { scale, u, v } => Coupling::Symmetric {
                scale,
                u: sizes.clone().map(|n| u.at(n)).collect(),
                v: sizes.map(|n| v.at(n)).collect(),
            },
            Factorization::Dense => {
                if kernel.max_size().is_some_and(|m| m < n_max as u64) {
                    return Err(Error::config(format!(
                        "kernel table covers sizes up to {}, below ode.n_max = {n_max}",
                        kernel.max_size().unwrap_or(0)
                    )));
                }
                let mut alpha = Vec::with_capacity(n_max * n_max);
                for m in 1..=n_max as u64 {
                    for n in 1..=n_max as u64 {
                        alpha.push(kernel.evaluate(m, n)?);
                    }
                }
                Coupling::Dense { alpha }
            }
        };
        let abar = match mode {
            OdeMode::Classical => vec![0.0; n_max],
            OdeMode::Flory => {
                let lr = kernel.hypothesis_check().limit_ratio.ok_or_else(|| {
                    Error::config(format!("Flory mode needs lim α(m, n)/m to exist; {kernel} has none"))
                })?;
                (1..=n_max as u64).map(|n| lr.at(n)).collect()
            }
        };
        Ok(Self {
            n_max,
            mode,
            coupling,
            abar,
            x: vec![0.0; n_max],
            y: vec![0.0; n_max],
            rev: vec![0.0; n_max],
        })
    }

    /// Writes the derivative of the packed vector `[f_1..f_{n_max}, g_inf, flux_out]`.
    fn eval(&mut self, state: &[f64], out: &mut [f64]) {
        let nm = self.n_max;
        let f = &state[..nm];
        let g_inf = state[nm];
        match &self.coupling {
            Coupling::Product { scale, u } => {
                for i in 0..nm {
                    self.x[i] = u[i] * f[i];
                }
                for i in 0..nm {
                    self.rev[nm - 1 - i] = self.x[i];
                }
                let (x, rev) = (&self.x, &self.rev);
                let total: f64 = x.iter().sum();
                out[0] = -scale * x[0] * total;
                for i in 1..nm {
                    // x[i-1-j] == rev[nm-i+j]; pairs (j, i-1-j) are summed once
                    let half = i / 2;
                    let mut gain = 2.0 * dot(&x[..half], &rev[nm - i..nm - i + half]);
                    if i % 2 == 1 {
                        gain += x[half] * x[half];
                    }
                    out[i] = 0.5 * scale * gain - scale * x[i] * total;
                }
            }
            Coupling::Symmetric { scale, u, v } => {
                for i in 0..nm {
                    self.x[i] = u[i] * f[i];
                    self.y[i] = v[i] * f[i];
                }
                for i in 0..nm {
                    self.rev[nm - 1 - i] = self.y[i];
                }
                let (x, y, rev) = (&self.x, &self.y, &self.rev);
                let xt: f64 = x.iter().sum();
                let yt: f64 = y.iter().sum();
                out[0] = -scale * (x[0] * yt + y[0] * xt);
                for i in 1..nm {
                    let gain = dot(&x[..i], &rev[nm - i..]);
                    out[i] = scale * gain - scale * (x[i] * yt + y[i] * xt);
                }
            }
            Coupling::Dense { alpha } => {
                for i in 0..nm {
                    let row = &alpha[i * nm..(i + 1) * nm];
                    let loss: f64 = row.iter().zip(f).map(|(a, fm)| a * fm).sum();
                    let mut gain = 0.0;
                    for j in 0..i {
                        gain += alpha[j * nm + (i - 1 - j)] * f[j] * f[i - 1 - j];
                    }
                    out[i] = 0.5 * gain - f[i] * loss;
                }
            }
        }
        if self.mode == OdeMode::Flory && g_inf != 0.0 {
            for i in 0..nm {
                out[i] -= self.abar[i] * f[i] * g_inf;
            }
        }
        let sink: f64 = -(0..nm).map(|i| (i + 1) as f64 * out[i]).sum::<f64>();
        match self.mode {
            OdeMode::Classical => {
                out[nm] = 0.0;
                out[nm + 1] = sink;
            }
            OdeMode::Flory => {
                out[nm] = sink;
                out[nm + 1] = 0.0;
            }
        }
    }

    pub fn rhs(&mut self, state: &OdeState) -> Result<OdeDerivative> {
        if state.f.len() != self.n_max {
            return Err(Error::domain(format!(
                "state has {} sizes, solver expects {}",
                state.f.len(),
                self.n_max
            )));
        }
        let y = state.pack();
        let mut out = vec![0.0; y.len()];
        self.eval(&y, &mut out);
        Ok(OdeDerivative {
            dg_inf: out[self.n_max],
            dflux_out: out[self.n_max + 1],
            df: out[..self.n_max].to_vec(),
        })
    }
}

/// Right-hand side at `state` for a one-off evaluation.
pub fn rhs(state: &OdeState, config: &OdeConfig, kernel: &KernelSpec) -> Result<OdeDerivative> {
    Smoluchowski::new(state.f.len(), config.mode, kernel)?.rhs(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeDiagnostics {
    /// First time the sol mass drops below `M(0) (1 - 10 rel_tol)`,
    /// interpolated linearly inside the step.
    pub t_gel_estimate: Option<f64>,
    /// `(t, M(t))` at every accepted step.
    pub mass_curve: Vec<(f64, f64)>,
    /// Largest `|Σ n f_n + g_inf + flux_out - M(0)|` over accepted steps.
    pub max_ledger_defect: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSolution {
    /// State at each requested output time, in increasing order.
    pub outputs: Vec<OdeState>,
    pub diagnostics: OdeDiagnostics,
}

impl OdeSolution {
    pub fn final_state(&self) -> &OdeState {
        self.outputs.last().expect("t_end is always an output")
    }

    /// State recorded at output time `t`, if any.
    pub fn at(&self, t: f64) -> Option<&OdeState> {
        self.outputs.iter().find(|s| s.t == t)
    }

    /// CSV with header `t,M,g_inf,flux_out,f_1..f_{n_report}`.
    pub fn to_csv(&self, n_report: usize) -> String {
        let mut out = String::from("t,M,g_inf,flux_out");
        for n in 1..=n_report {
            let _ = write!(out, ",f_{n}");
        }
        out.push('\n');
        for s in &self.outputs {
            let _ = write!(out, "{},{},{},{}", s.t, s.sol_mass(), s.g_inf, s.flux_out);
            for n in 1..=n_report {
                let _ = write!(out, ",{}", s.density(n));
            }
            out.push('\n');
        }
        out
    }
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Negative densities above this magnitude reject the step.
const NEGATIVITY: f64 = 1e-12;

/// Integrates from `init` (densities of sizes `1..`) to `config.t_end`.
///
/// `init` is zero-padded or must fit within `n_max`.
pub fn integrate(config: &OdeConfig, kernel: &KernelSpec, init: &[f64]) -> Result<OdeSolution> {
    config.validate()?;
    let nm = config.n_max;
    if init.len() > nm {
        return Err(Error::config(format!(
            "initial profile has {} sizes, more than ode.n_max = {nm}",
            init.len()
        )));
    }
    if init.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::domain("initial densities must be finite and non-negative"));
    }
    let mut sys = Smoluchowski::new(nm, config.mode, kernel)?;
    let mut start = OdeState {
        t: 0.0,
        f: vec![0.0; nm],
        g_inf: 0.0,
        flux_out: 0.0,
    };
    start.f[..init.len()].copy_from_slice(init);
    let m0 = start.sol_mass();
    let threshold = m0 * (1.0 - 10.0 * config.rel_tol);

    let mut stops: Vec<f64> = config.output_times.clone();
    stops.push(config.t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let dim = nm + 2;
    let mut y = start.pack();
    let mut t = 0.0;
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    sys.eval(&y, &mut k[0]);

    let mut diag = OdeDiagnostics {
        t_gel_estimate: (m0 < threshold).then_some(0.0),
        mass_curve: vec![(0.0, m0)],
        max_ledger_defect: 0.0,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut outputs = Vec::with_capacity(stops.len());
    let mut next_stop = 0;
    while next_stop < stops.len() && stops[next_stop] <= t {
        outputs.push(OdeState::unpack(t, &y));
        next_stop += 1;
    }

    // initial step from the derivative scale
    let d0 = rms(&y, &y, config);
    let d1 = rms(&k[0], &y, config);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(config.t_end.max(1e-12));
    let mut steps = 0u64;

    while next_stop < stops.len() {
        let target = stops[next_stop];
        let hit_stop = t + h >= target;
        let h_step = if hit_stop { target - t } else { h };
        if h_step < 1e-14 * t.abs().max(1.0) {
            if hit_stop && h_step <= 0.0 {
                outputs.push(OdeState::unpack(target, &y));
                next_stop += 1;
                continue;
            }
            return Err(Error::Stiffness { t });
        }
        steps += 1;
        if steps > config.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("exceeded {} steps", config.max_steps),
            });
        }

        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += h_step * a * kj[i];
                    }
                }
                stage[i] = acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
            sys.eval(&stage, &mut k[s]);
        }

        let mut err = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = h_step * e / sc;
            err += r * r;
        }
        let err = (err / dim as f64).sqrt();
        let min_f = y_new[..nm].iter().copied().fold(f64::INFINITY, f64::min);

        if !err.is_finite() || err > 1.0 || min_f < -NEGATIVITY {
            diag.rejected_steps += 1;
            let factor = if err.is_finite() && min_f >= -NEGATIVITY {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h = h_step * factor;
            continue;
        }

        for v in &mut y_new[..nm] {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let m_prev = diag.mass_curve.last().map_or(m0, |p| p.1);
        let t_new = t + h_step;
        std::mem::swap(&mut y, &mut y_new);
        t = if hit_stop { target } else { t_new };
        diag.accepted_steps += 1;
        // FSAL: the last stage was evaluated at the accepted point
        let last = k.pop().expect("seven stages");
        k[0] = last;
        k.push(vec![0.0; dim]);
        if min_f < 0.0 {
            sys.eval(&y, &mut k[0]);
        }

        let m: f64 = y[..nm].iter().enumerate().map(|(i, f)| (i + 1) as f64 * f).sum();
        let ledger = m + y[nm] + y[nm + 1];
        diag.max_ledger_defect = diag.max_ledger_defect.max((ledger - m0).abs());
        if diag.t_gel_estimate.is_none() && m < threshold {
            let prev_t = t - h_step;
            let w = if m_prev > m { (m_prev - threshold) / (m_prev - m) } else { 1.0 };
            diag.t_gel_estimate = Some(prev_t + w.clamp(0.0, 1.0) * h_step);
        }
        diag.mass_curve.push((t, m));

        if hit_stop {
            outputs.push(OdeState::unpack(t, &y));
            next_stop += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if !hit_stop || h_step >= h {
            h = h_step * factor;
        }
    }

    Ok(OdeSolution {
        outputs,
        diagnostics: diag,
    })
}

fn rms(v: &[f64], y: &[f64], config: &OdeConfig) -> f64 {
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = a / (config.abs_tol + config.rel_tol * b.abs());
            r * r
        })
        .sum();
    (s / v.len() as f64).sqrt()
}
