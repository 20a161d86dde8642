//! Truncated mean-field ODE system for the occupation probabilities
//! `p_n(t)` of the unit-exchange process:
//!
//! ```text
//! p_0' = p_1 - r p_0
//! p_n' = p_{n+1} + r p_{n-1} - (1 + r) p_n,   n >= 1
//! ```
//!
//! with `r = sum_{n>=1} p_n` the fraction of agents able to pay. The system
//! is closed by `p_{n_max+1} = 0`; the resulting leak `r p_{n_max}` is
//! accumulated and reported rather than renormalized away.

use crate::error::{Error, Result};
use crate::model::Pmf;
use crate::timeline::{substeps, Schedule};

/// Largest accepted RK4 step.
pub const MAX_DT: f64 = 0.1;
/// Default RK4 step.
pub const DEFAULT_DT: f64 = 0.01;
/// Undershoot clipped to zero after a step; anything deeper aborts.
pub const CLIP_TOL: f64 = 1e-12;

/// State of the ODE system at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub pmf: Pmf,
    pub t: f64,
    /// Fraction of mass at `n >= 1`.
    pub r: f64,
}

impl OdeState {
    pub fn new(pmf: Pmf, t: f64) -> Self {
        let r = pmf.rich_fraction();
        Self { pmf, t, r }
    }
}

fn rich(p: &[f64]) -> f64 {
    p[1..].iter().sum()
}

fn rhs_into(p: &[f64], out: &mut [f64]) {
    let n = p.len();
    let r = rich(p);
    out[0] = p.get(1).copied().unwrap_or(0.0) - r * p[0];
    for k in 1..n {
        let up = if k + 1 < n { p[k + 1] } else { 0.0 };
        out[k] = up + r * p[k - 1] - (1.0 + r) * p[k];
    }
}

/// Right-hand side of the truncated system.
pub fn rhs(p: &Pmf) -> Vec<f64> {
    let mut out = vec![0.0; p.probs().len()];
    rhs_into(p.probs(), &mut out);
    out
}

/// Rate `r p_{n_max}` at which probability leaves through the truncation.
pub fn truncation_flux(p: &Pmf) -> f64 {
    let probs = p.probs();
    rich(probs) * probs[probs.len() - 1]
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, p: &mut [f64], dt: f64) {
        rhs_into(p, &mut self.k1);
        for (t, (x, k)) in self.tmp.iter_mut().zip(p.iter().zip(&self.k1)) {
            *t = x + 0.5 * dt * k;
        }
        rhs_into(&self.tmp, &mut self.k2);
        for (t, (x, k)) in self.tmp.iter_mut().zip(p.iter().zip(&self.k2)) {
            *t = x + 0.5 * dt * k;
        }
        rhs_into(&self.tmp, &mut self.k3);
        for (t, (x, k)) in self.tmp.iter_mut().zip(p.iter().zip(&self.k3)) {
            *t = x + dt * k;
        }
        rhs_into(&self.tmp, &mut self.k4);
        for (j, x) in p.iter_mut().enumerate() {
            *x += dt / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
    }
}

/// Sampled solution of the ODE system.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub states: Vec<OdeState>,
    /// Total undershoot clipped to zero.
    pub clipped: f64,
    /// Time integral of the truncation flux (left Riemann sum over steps).
    pub leaked: f64,
    /// Largest truncation flux seen at a step start.
    pub max_flux: f64,
}

impl OdeTrajectory {
    pub fn last(&self) -> &OdeState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Integrates with classical RK4 from `p0`, recording states at
/// `0, sample_dt, 2 sample_dt, ...` and at `t_end`.
pub fn integrate(p0: &Pmf, t_end: f64, dt: f64, sample_dt: f64) -> Result<OdeTrajectory> {
    if !(dt.is_finite() && dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::Cfl(format!("RK4 step {dt} must lie in (0, {MAX_DT}]")));
    }
    let schedule = Schedule::new(t_end, sample_dt, &[])?;
    let mut p = p0.probs().to_vec();
    let mut rk = Rk4::new(p.len());
    let mut out = OdeTrajectory {
        states: Vec::with_capacity(schedule.len()),
        clipped: 0.0,
        leaked: 0.0,
        max_flux: 0.0,
    };
    let mut t = 0.0;
    for &tk in schedule.times() {
        let (n, step) = substeps(t, tk, dt);
        for s in 0..n {
            let flux = rich(&p) * p[p.len() - 1];
            out.leaked += step * flux;
            out.max_flux = out.max_flux.max(flux);
            rk.step(&mut p, step);
            let now = t + (s + 1) as f64 * step;
            for (k, x) in p.iter_mut().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NumericalAbort {
                        t: now,
                        detail: format!("p_{k} is {x}"),
                    });
                }
                if *x < 0.0 {
                    if *x < -CLIP_TOL {
                        return Err(Error::NumericalAbort {
                            t: now,
                            detail: format!("p_{k} = {x} fell below -{CLIP_TOL}"),
                        });
                    }
                    out.clipped -= *x;
                    *x = 0.0;
                }
            }
        }
        t = tk;
        out.states
            .push(OdeState::new(Pmf::from_vec_unchecked(p.clone()), t));
    }
    if out.clipped > 0.0 {
        log::debug!("mean-field run clipped a total undershoot of {:e}", out.clipped);
    }
    Ok(out)
}

/// Relative entropy `sum p_n ln(p_n / q_n)` with `0 ln 0 = 0`; entries past
/// the end of either pmf count as zero.
pub fn entropy_pmf(p: &Pmf, q: &Pmf) -> Result<f64> {
    let qs = q.probs();
    let mut sum = 0.0;
    for (n, &pn) in p.probs().iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        let qn = qs.get(n).copied().unwrap_or(0.0);
        if qn <= 0.0 {
            return Err(Error::Domain(format!(
                "reference pmf vanishes at n = {n} where p_n = {pn}"
            )));
        }
        sum += pn * (pn / qn).ln();
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometric_equilibrium;

    #[test]
    fn equilibrium_is_stationary() {
        let p = geometric_equilibrium(1.0, 60).unwrap();
        let max = rhs(&p).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max <= 1e-12, "{max}");
    }

    #[test]
    fn all_poor_state_is_absorbing() {
        let p = Pmf::delta(0, 5).unwrap();
        assert!(rhs(&p).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn hand_evaluated_rhs() {
        let p = Pmf::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(rhs(&p), vec![0.25, -0.5, 0.25, 0.0]);
    }

    #[test]
    fn rhs_sums_to_minus_truncation_flux() {
        let p = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s: f64 = rhs(&p).iter().sum();
        assert!((s + truncation_flux(&p)).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_trajectory_is_constant() {
        let p = geometric_equilibrium(2.0, 80).unwrap();
        let traj = integrate(&p, 5.0, DEFAULT_DT, 1.0).unwrap();
        assert_eq!(traj.states.len(), 6);
        assert!(traj.last().pmf.l1(&p) < 1e-10);
    }

    #[test]
    fn entropy_examples() {
        let q = geometric_equilibrium(1.0, 60).unwrap();
        assert_eq!(entropy_pmf(&q, &q).unwrap(), 0.0);
        let p = Pmf::delta(0, 60).unwrap();
        assert!((entropy_pmf(&p, &q).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let short = Pmf::new(vec![1.0]).unwrap();
        assert!(entropy_pmf(&Pmf::delta(3, 5).unwrap(), &short).is_err());
    }

    #[test]
    fn delta_start_conserves_and_relaxes() {
        let mu = 5.0;
        let p0 = Pmf::delta(5, 200).unwrap();
        let pstar = geometric_equilibrium(mu, 200).unwrap();
        let traj = integrate(&p0, 100.0, DEFAULT_DT, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for s in &traj.states {
            assert!((s.pmf.total() - 1.0).abs() <= 1e-10);
            assert!((s.pmf.mean() - mu).abs() <= 1e-10);
            assert!((s.r - (1.0 - s.pmf.probs()[0])).abs() <= 1e-14);
            let h = entropy_pmf(&s.pmf, &pstar).unwrap();
            assert!(h <= prev + 1e-12);
            prev = h;
        }
        // high-accuracy reference integration of the same system
        let l1 = traj.last().pmf.l1(&pstar);
        assert!((l1 - 0.017_148_2).abs() < 1e-6, "{l1}");
    }

    #[test]
    fn rejects_large_steps() {
        let p = Pmf::delta(1, 10).unwrap();
        assert!(integrate(&p, 1.0, 0.5, 0.1).is_err());
    }
}
