//! Conservative finite-volume solver for the nonlinear Fokker-Planck
//! equation `f_t = (lambda/2) (f_v + f(0,t) f)_v` with the no-flux Robin
//! condition at `v = 0`.
//!
//! Interface fluxes use exponential fitting (Scharfetter-Gummel): for a
//! drift coefficient `b` the flux of `f_v + b f` across the interface
//! between cells `j` and `j+1` is `w (e^{bh} f_{j+1} - f_j)` with
//! `w = b / (e^{bh} - 1)`. Both end fluxes are exactly zero, so mass is
//! conserved by telescoping.
//!
//! The drift coefficient is the unique value that makes the discrete mean
//! invariant. For a smooth solution obeying the Robin condition it agrees
//! with `f(0,t)` to second order, and for exact exponential cell averages it
//! equals `1/mu`, so the Boltzmann-Gibbs state is a fixed point to machine
//! precision.

use crate::diagnostics::{dissipation, relative_entropy, DiagnosticsRow};
use crate::error::{invalid, Error, Result};
use crate::model::{boltzmann_gibbs, GridFunction, ModelParams};
use crate::timeline::{substeps, Schedule, Snapshot, Trajectory};

/// Bound on `(lambda/2) dt / h^2`.
pub const DIFFUSION_CFL: f64 = 0.5;
/// Bound on `dt (lambda/2) |b| / h`.
pub const ADVECTION_CFL: f64 = 0.4;
/// Default diffusion number `(lambda/2) dt / h^2`.
pub const DEFAULT_DIFFUSION_NUMBER: f64 = 0.4;

/// Estimate of `f(0,t)` from the first two cell averages, `(3 f_0 - f_1)/2`
/// floored at zero.
pub fn boundary_value(f: &GridFunction) -> f64 {
    boundary_extrapolation(f.values()).max(0.0)
}

/// Signed one-sided extrapolation `(3 g_0 - g_1)/2` to `v = 0`.
pub fn boundary_extrapolation(values: &[f64]) -> f64 {
    assert!(values.len() >= 2, "boundary extrapolation needs two cells");
    0.5 * (3.0 * values[0] - values[1])
}

/// Largest stable step for the given grid.
pub fn default_dt(params: &ModelParams) -> f64 {
    let h = params.h();
    DEFAULT_DIFFUSION_NUMBER * h * h / (0.5 * params.lambda)
}

pub fn check_cfl(params: &ModelParams, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let h = params.h();
    let number = 0.5 * params.lambda * dt / (h * h);
    if number > DIFFUSION_CFL * (1.0 + 1e-12) {
        return Err(Error::Cfl(format!(
            "diffusion number (lambda/2) dt/h^2 = {number} exceeds {DIFFUSION_CFL}"
        )));
    }
    Ok(())
}

/// Drift coefficient that keeps the discrete mean fixed:
/// `e^{bh} = (S - f_{n-1}) / (S - f_0)` with `S = sum f_j`.
pub fn drift_coefficient(values: &[f64], h: f64) -> Result<f64> {
    let total: f64 = values.iter().sum();
    drift_from_total(values, total, h)
}

fn drift_from_total(values: &[f64], total: f64, h: f64) -> Result<f64> {
    let n = values.len();
    let upper = total - values[0];
    if !(upper > 0.0) {
        return Err(Error::Domain(
            "density has no mass beyond the first cell".to_string(),
        ));
    }
    Ok(((values[0] - values[n - 1]) / upper).ln_1p() / h)
}

/// Exponentially fitted flux weight `b / (e^{bh} - 1)`.
fn fitted_weight(b: f64, h: f64) -> f64 {
    let x = b * h;
    if x.abs() < 1e-6 {
        (1.0 - 0.5 * x + x * x / 12.0) / h
    } else {
        b / x.exp_m1()
    }
}

/// One explicit step in place. `total` is `sum f_j` on entry; the new sum
/// is returned.
fn step_values(values: &mut [f64], total: f64, h: f64, lambda: f64, dt: f64) -> Result<f64> {
    let b = drift_from_total(values, total, h)?;
    let advection = dt * 0.5 * lambda * b.abs() / h;
    if advection > ADVECTION_CFL {
        return Err(Error::Cfl(format!(
            "advection number {advection} exceeds {ADVECTION_CFL} (drift {b})"
        )));
    }
    let e = (b * h).exp();
    let c = dt / h * 0.5 * lambda * fitted_weight(b, h);
    if c * (1.0 + e) > 1.0 {
        return Err(Error::Cfl(format!(
            "update coefficient {} would break positivity",
            c * (1.0 + e)
        )));
    }
    let ce = c * e;
    let n = values.len();
    let mut prev = 0.0;
    let mut sum = 0.0;
    for j in 0..n - 1 {
        let fj = values[j];
        let flux = ce * values[j + 1] - c * fj;
        let new = fj + flux - prev;
        values[j] = new;
        sum += new;
        prev = flux;
    }
    let last = values[n - 1] - prev;
    values[n - 1] = last;
    Ok(sum + last)
}

/// One explicit conservative step with the interaction rate from `f.params()`.
pub fn step_fp(f: &GridFunction, dt: f64) -> Result<GridFunction> {
    let mut g = f.clone();
    step_fp_in_place(&mut g, dt)?;
    Ok(g)
}

pub fn step_fp_in_place(f: &mut GridFunction, dt: f64) -> Result<()> {
    let params = *f.params();
    check_cfl(&params, dt)?;
    let total = f.values().iter().sum();
    step_values(f.values_mut(), total, params.h(), params.lambda, dt)?;
    Ok(())
}

/// Advances `f` by `span` with uniform steps of at most `dt`.
pub fn evolve(f: &mut GridFunction, span: f64, dt: f64) -> Result<()> {
    let params = *f.params();
    check_cfl(&params, dt)?;
    let (n, step) = substeps(0.0, span, dt);
    let h = params.h();
    let mut total: f64 = f.values().iter().sum();
    for _ in 0..n {
        total = step_values(f.values_mut(), total, h, params.lambda, step)?;
    }
    Ok(())
}

fn check_state(f: &GridFunction, t: f64) -> Result<()> {
    let mut worst = (0usize, 0.0f64);
    for (j, &v) in f.values().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NumericalAbort {
                t,
                detail: format!(
                    "non-finite value {v} in cell {j}; mass {}, f0 {}",
                    f.mass(),
                    boundary_value(f)
                ),
            });
        }
        if v < worst.1 {
            worst = (j, v);
        }
    }
    if worst.1 < -1e-14 {
        return Err(Error::NumericalAbort {
            t,
            detail: format!(
                "negative value {} in cell {}; mass {}, f0 {}",
                worst.1,
                worst.0,
                f.mass(),
                boundary_value(f)
            ),
        });
    }
    Ok(())
}

/// Time grid and output requests for [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Spacing of diagnostics rows.
    pub sample_dt: f64,
    pub snapshot_times: Vec<f64>,
}

impl SolveOptions {
    /// Default step, 200 diagnostics samples, snapshot at the end only.
    pub fn new(params: &ModelParams, t_end: f64) -> Self {
        Self {
            dt: default_dt(params),
            t_end,
            sample_dt: (t_end / 200.0).max(f64::MIN_POSITIVE),
            snapshot_times: vec![t_end],
        }
    }
}

/// Integrates from `f0`, recording diagnostics against the Boltzmann-Gibbs
/// state of mean `f0.params().mu`.
pub fn solve(f0: &GridFunction, opts: &SolveOptions) -> Result<Trajectory> {
    let params = *f0.params();
    check_cfl(&params, opts.dt)?;
    let schedule = Schedule::new(opts.t_end, opts.sample_dt, &opts.snapshot_times)?;
    let f_inf = boltzmann_gibbs(&params);
    let h = params.h();

    let mut f = f0.clone();
    check_state(&f, 0.0)?;
    let mut total: f64 = f.values().iter().sum();
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut t = 0.0;
    for (k, &tk) in schedule.times().iter().enumerate() {
        let (n, step) = substeps(t, tk, opts.dt);
        for _ in 0..n {
            total = step_values(f.values_mut(), total, h, params.lambda, step).map_err(|e| {
                match e {
                    Error::Domain(detail) => Error::NumericalAbort { t, detail },
                    other => other,
                }
            })?;
        }
        t = tk;
        if n > 0 {
            check_state(&f, t)?;
        }
        if schedule.is_sample(k) {
            rows.push(DiagnosticsRow::evaluate(t, &f, &f_inf)?);
        }
        if schedule.is_snapshot(k) {
            snapshots.push(Snapshot { t, f: f.clone() });
        }
    }
    log::debug!("fokker-planck run finished at t = {t}, {} rows", rows.len());
    Ok(Trajectory {
        rows,
        snapshots,
        final_state: f,
    })
}

/// One-step entropy identity along a run: at every sample time `t_k` the
/// relative residual
/// `|(H(S f) - H(f)) / dt + (lambda/2) D(f)| / ((lambda/2) D(f))`, where `S`
/// is a single scheme step of size `opts.dt`. Snapshot requests are ignored.
pub fn step_identity_residuals(f0: &GridFunction, opts: &SolveOptions) -> Result<Vec<(f64, f64)>> {
    let params = *f0.params();
    check_cfl(&params, opts.dt)?;
    let schedule = Schedule::new(opts.t_end, opts.sample_dt, &[])?;
    let f_inf = boltzmann_gibbs(&params);
    let mut f = f0.clone();
    let mut out = Vec::with_capacity(schedule.len());
    let mut t = 0.0;
    for &tk in schedule.times() {
        evolve(&mut f, tk - t, opts.dt).map_err(|e| match e {
            Error::Domain(detail) => Error::NumericalAbort { t, detail },
            other => other,
        })?;
        t = tk;
        check_state(&f, t)?;
        let d = 0.5 * params.lambda * dissipation(&f);
        let next = step_fp(&f, opts.dt)?;
        let rate = (relative_entropy(&next, &f_inf)? - relative_entropy(&f, &f_inf)?) / opts.dt;
        out.push((t, (rate + d).abs() / d.max(f64::MIN_POSITIVE)));
    }
    Ok(out)
}

/// Derivative at `x` of the quadratic through three points.
pub(crate) fn lagrange_derivative(xs: [f64; 3], ys: [f64; 3], x: f64) -> f64 {
    let [x0, x1, x2] = xs;
    let l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
    let l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
    let l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
    ys[0] * l0 + ys[1] * l1 + ys[2] * l2
}

/// Finite-difference derivative of a sampled series at every sample,
/// centered in the interior and one-sided at the ends.
pub(crate) fn series_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|k| {
            let s = k.saturating_sub(1).min(n - 3);
            lagrange_derivative(
                [t[s], t[s + 1], t[s + 2]],
                [y[s], y[s + 1], y[s + 2]],
                t[k],
            )
        })
        .collect()
}

/// Finite-difference moment rates next to their closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSample {
    pub t: f64,
    pub dm2_fd: f64,
    pub dm2_formula: f64,
    pub dm3_fd: f64,
    pub dm3_formula: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub samples: Vec<MomentSample>,
}

impl MomentReport {
    /// Largest relative error of the `M2` and `M3` rates. Denominators
    /// below `floor` are replaced by `floor`, so equilibrium runs report
    /// absolute errors.
    pub fn max_relative_error(&self, floor: f64) -> (f64, f64) {
        let rel = |fd: f64, formula: f64| (fd - formula).abs() / formula.abs().max(floor);
        self.samples.iter().fold((0.0f64, 0.0f64), |(a, b), s| {
            (
                a.max(rel(s.dm2_fd, s.dm2_formula)),
                b.max(rel(s.dm3_fd, s.dm3_formula)),
            )
        })
    }
}

/// Compares finite-difference `dM2/dt`, `dM3/dt` with
/// `lambda (1 - mu f(0))` and `lambda (3 mu - 1.5 f(0) M2)`.
pub fn moment_ode_check(rows: &[DiagnosticsRow], lambda: f64) -> Result<MomentReport> {
    if rows.len() < 3 {
        return Err(Error::Domain(format!(
            "moment check needs at least 3 samples, got {}",
            rows.len()
        )));
    }
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let m2: Vec<f64> = rows.iter().map(|r| r.m2).collect();
    let m3: Vec<f64> = rows.iter().map(|r| r.m3).collect();
    let d2 = series_derivative(&t, &m2);
    let d3 = series_derivative(&t, &m3);
    let samples = rows
        .iter()
        .enumerate()
        .map(|(k, r)| MomentSample {
            t: r.t,
            dm2_fd: d2[k],
            dm2_formula: lambda * (r.mass - r.mean * r.f0),
            dm3_fd: d3[k],
            dm3_formula: lambda * (3.0 * r.mean - 1.5 * r.f0 * r.m2),
        })
        .collect();
    Ok(MomentReport { samples })
}
