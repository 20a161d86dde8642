//! Kinetic equation for exchanges of a fixed quantum `eps`:
//!
//! ```text
//! f_t = (lambda/2) [ f(v+eps) - r f(v) + (r f(v-eps) - f(v)) 1{v >= eps} ]
//! ```
//!
//! with `r = int_{v >= eps} f` the fraction able to pay. The grid is
//! aligned with the quantum (`eps = k h`), so the shifts are exact index
//! shifts and the semi-discrete system is exact for cell averages. Gain
//! from beyond `v_max` is taken as zero; the matching outflow is the
//! truncation budget.
//!
//! In the scaled regime the rate is `lambda / eps^2`, so that the solution
//! approaches the Fokker-Planck limit as `eps -> 0`.

use crate::diagnostics::DiagnosticsRow;
use crate::error::{invalid, Error, Result};
use crate::fokker_planck::boundary_value;
use crate::model::{boltzmann_gibbs, GridFunction};
use crate::timeline::{substeps, Schedule, Snapshot, Trajectory};

/// Positivity bound on `dt * rate * (1 + r)`.
pub const POSITIVITY_BOUND: f64 = 1.0;
/// Default `dt * rate * (1 + r_max)`.
pub const DEFAULT_STEP_NUMBER: f64 = 0.2;
/// Boundary values above this multiple of the reference are flagged.
pub const BOUNDARY_GROWTH_FACTOR: f64 = 4.0;

/// Number of cells per quantum, or [`Error::Misaligned`].
pub fn cells_per_quantum(eps: f64, h: f64) -> Result<usize> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {eps}")));
    }
    let ratio = eps / h;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::Misaligned { epsilon: eps, h });
    }
    Ok(k as usize)
}

/// Partial sums over the cells with `v_j >= eps`: `(h sum f, h sum v f, h sum v^2 f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSums {
    pub r: f64,
    pub r1: f64,
    pub r2: f64,
}

pub fn tail_sums(f: &GridFunction, eps: f64) -> Result<TailSums> {
    let h = f.h();
    if eps >= f.params().v_max {
        return Ok(TailSums {
            r: 0.0,
            r1: 0.0,
            r2: 0.0,
        });
    }
    let k = cells_per_quantum(eps, h)?;
    let (mut r, mut r1, mut r2) = (0.0, 0.0, 0.0);
    for (j, fj) in f.values().iter().enumerate().skip(k) {
        let v = (j as f64 + 0.5) * h;
        r += fj;
        r1 += v * fj;
        r2 += v * v * fj;
    }
    Ok(TailSums {
        r: h * r,
        r1: h * r1,
        r2: h * r2,
    })
}

/// Fraction of mass on cells with `v_j >= eps`.
pub fn r_of_f(f: &GridFunction, eps: f64) -> Result<f64> {
    Ok(tail_sums(f, eps)?.r)
}

fn check_step(rate: f64, dt: f64, r: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let number = dt * rate * (1.0 + r);
    if number >= POSITIVITY_BOUND {
        return Err(Error::Cfl(format!(
            "dt * rate * (1 + r) = {number} must stay below {POSITIVITY_BOUND}"
        )));
    }
    Ok(())
}

/// Explicit Euler step from `src` into `dst` at collision rate `rate`.
fn step_into(src: &[f64], dst: &mut [f64], k: usize, h: f64, rate: f64, dt: f64) -> Result<()> {
    let n = src.len();
    let r = h * src[k.min(n)..].iter().sum::<f64>();
    check_step(rate, dt, r)?;
    let a = 0.5 * rate * dt;
    for j in 0..n {
        let up = if j + k < n { src[j + k] } else { 0.0 };
        let down = if j >= k { r * src[j - k] - src[j] } else { 0.0 };
        dst[j] = src[j] + a * (up - r * src[j] + down);
    }
    Ok(())
}

/// One explicit step at rate `lambda` (unscaled).
pub fn step_epsilon_pde(f: &GridFunction, eps: f64, lambda: f64, dt: f64) -> Result<GridFunction> {
    let k = cells_per_quantum(eps, f.h())?;
    let mut out = f.clone();
    step_into(f.values(), out.values_mut(), k, f.h(), lambda, dt)?;
    Ok(out)
}

/// Mass lost per unit time through the truncation at `v_max`,
/// `(lambda/2) r h sum_{top k cells} f`.
pub fn truncation_outflow(f: &GridFunction, eps: f64, lambda: f64) -> Result<f64> {
    let k = cells_per_quantum(eps, f.h())?;
    let n = f.len();
    let r = r_of_f(f, eps)?;
    let top: f64 = f.values()[n.saturating_sub(k)..].iter().sum();
    Ok(0.5 * lambda * r * f.h() * top)
}

/// Exact rates of `M2` and `M3` under the kinetic equation at rate
/// `lambda`, up to the truncation at `v_max`:
///
/// ```text
/// dM2/dt = (lambda/2) [ 2 eps (r M1 - r1) + eps^2 r (1 + m) ]
/// dM3/dt = (lambda/2) [ 3 eps (r M2 - r2) + 3 eps^2 (r1 + r M1) + eps^3 r (m - 1) ]
/// ```
///
/// For unit mass the first reduces to `lambda (eps^2 r + eps (mu r - r1))`.
pub fn moment_rates(f: &GridFunction, eps: f64, lambda: f64) -> Result<(f64, f64)> {
    let s = tail_sums(f, eps)?;
    let m = f.mass();
    let m1 = f.moment(1);
    let m2 = f.moment(2);
    let dm2 = 0.5 * lambda * (2.0 * eps * (s.r * m1 - s.r1) + eps * eps * s.r * (1.0 + m));
    let dm3 = 0.5
        * lambda
        * (3.0 * eps * (s.r * m2 - s.r2)
            + 3.0 * eps * eps * (s.r1 + s.r * m1)
            + eps.powi(3) * s.r * (m - 1.0));
    Ok((dm2, dm3))
}

/// Time grid and output requests for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonOptions {
    pub eps: f64,
    /// Use the rate `lambda / eps^2` instead of `lambda`.
    pub scaled: bool,
    pub t_end: f64,
    /// Step; `None` picks `0.2 / (rate (1 + mass))`.
    pub dt: Option<f64>,
    pub sample_dt: f64,
    pub snapshot_times: Vec<f64>,
}

impl EpsilonOptions {
    pub fn scaled(eps: f64, t_end: f64) -> Self {
        Self {
            eps,
            scaled: true,
            t_end,
            dt: None,
            sample_dt: (t_end / 200.0).max(f64::MIN_POSITIVE),
            snapshot_times: vec![t_end],
        }
    }

    pub fn rate(&self, lambda: f64) -> f64 {
        if self.scaled {
            lambda / (self.eps * self.eps)
        } else {
            lambda
        }
    }
}

/// Result of a kinetic run.
#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub trajectory: Trajectory,
    /// Largest sampled `f(0, t)`.
    pub max_boundary_value: f64,
    /// Set when `f(0, t)` exceeded [`BOUNDARY_GROWTH_FACTOR`] times the
    /// larger of `f(0, 0)` and `1/mu`.
    pub boundary_flagged: bool,
    /// Integrated truncation outflow (left Riemann sum over steps).
    pub truncation_loss: f64,
}

/// Integrates the kinetic equation, recording diagnostics against the
/// Boltzmann-Gibbs state of mean `f0.params().mu`.
pub fn run(f0: &GridFunction, opts: &EpsilonOptions) -> Result<EpsilonRun> {
    let params = *f0.params();
    let h = params.h();
    let k = cells_per_quantum(opts.eps, h)?;
    let rate = opts.rate(params.lambda);
    let dt = opts
        .dt
        .unwrap_or(DEFAULT_STEP_NUMBER / (rate * (1.0 + f0.mass().max(1.0))));
    let schedule = Schedule::new(opts.t_end, opts.sample_dt, &opts.snapshot_times)?;
    let f_inf = boltzmann_gibbs(&params);

    let mut f = f0.clone();
    let mut scratch = f0.clone();
    let reference = boundary_value(f0).max(1.0 / params.mu);
    let mut out = EpsilonRun {
        trajectory: Trajectory {
            rows: Vec::new(),
            snapshots: Vec::new(),
            final_state: f0.clone(),
        },
        max_boundary_value: 0.0,
        boundary_flagged: false,
        truncation_loss: 0.0,
    };
    let n = f.len();
    let mut t = 0.0;
    for (s, &ts) in schedule.times().iter().enumerate() {
        let (steps, step) = substeps(t, ts, dt);
        for _ in 0..steps {
            let top: f64 = f.values()[n.saturating_sub(k)..].iter().sum();
            let r = h * f.values()[k.min(n)..].iter().sum::<f64>();
            out.truncation_loss += step * 0.5 * rate * r * h * top;
            step_into(f.values(), scratch.values_mut(), k, h, rate, step)?;
            std::mem::swap(&mut f, &mut scratch);
        }
        t = ts;
        if !f.is_finite() || f.min() < -1e-14 {
            return Err(Error::NumericalAbort {
                t,
                detail: format!("min value {}, mass {}", f.min(), f.mass()),
            });
        }
        let b = boundary_value(&f);
        out.max_boundary_value = out.max_boundary_value.max(b);
        if b > BOUNDARY_GROWTH_FACTOR * reference && !out.boundary_flagged {
            log::warn!("f(0, t) = {b} at t = {t} exceeds {BOUNDARY_GROWTH_FACTOR} x {reference}");
            out.boundary_flagged = true;
        }
        if schedule.is_sample(s) {
            out.trajectory
                .rows
                .push(DiagnosticsRow::evaluate(t, &f, &f_inf)?);
        }
        if schedule.is_snapshot(s) {
            out.trajectory.snapshots.push(Snapshot { t, f: f.clone() });
        }
    }
    out.trajectory.final_state = f;
    Ok(out)
}

/// Scaled run to `t_end` returning only the final state.
pub fn run_scaled(f0: &GridFunction, eps: f64, t_end: f64) -> Result<GridFunction> {
    let opts = EpsilonOptions {
        sample_dt: t_end.max(f64::MIN_POSITIVE),
        snapshot_times: vec![],
        ..EpsilonOptions::scaled(eps, t_end)
    };
    Ok(run(f0, &opts)?.trajectory.final_state)
}
