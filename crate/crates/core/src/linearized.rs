//! Linearization of the Fokker-Planck flow around `f_inf = e^{-v/mu}/mu`:
//!
//! ```text
//! r_t = (lambda/2) (r_v + r/mu + r(0,t) f_inf)_v,   r_v + (2/mu) r = 0 at v = 0
//! ```
//!
//! The scheme is the exact linearization of the exponentially fitted
//! finite-volume scheme in [`crate::fokker_planck`]. With `a = 1/mu`,
//! `E = e^{ah}` and `w = a / (E - 1)` the interface flux is
//!
//! ```text
//! G_{j+1/2} = w (E r_{j+1} - r_j) + rho w h f_inf_j
//! ```
//!
//! where `rho`, the linearized drift coefficient, plays the role of
//! `r(0,t)` and is fixed so that the first moment is invariant. Both end
//! fluxes vanish, which encodes the boundary condition, and mass and mean
//! of `r` are conserved up to rounding.

use rand::Rng;

use crate::diagnostics::gradient;
use crate::error::{Error, Result};
use crate::fokker_planck::{boundary_extrapolation, check_cfl};
use crate::model::{boltzmann_gibbs, boltzmann_gibbs_density, GridFunction, ModelParams};
use crate::timeline::{substeps, Schedule};

/// Signed perturbation of the equilibrium, stored as cell averages.
pub type Perturbation = GridFunction;

/// Relative tolerance on the two moment constraints, measured against
/// `h sum |r_j|` and `h sum v_j |r_j|`. Truncating a constrained function
/// at `v_max = 25 mu` leaves moments of order `1e-8`.
pub const CONSTRAINT_TOL: f64 = 1e-6;

/// Parameters for linearized runs: `lambda = 2`, `v_max = 25 mu`.
pub fn default_params(mu: f64, n_cells: usize) -> Result<ModelParams> {
    ModelParams::new(mu, 2.0, 0.1 * mu, 25.0 * mu, n_cells)
}

/// Linearized evolution operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    params: ModelParams,
    f_inf: Vec<f64>,
    /// `1 / f_inf(v_j)` at cell centers.
    inv_weight: Vec<f64>,
    e: f64,
    w: f64,
    /// `sum_{j < n-1} f_inf_j`.
    lower_sum: f64,
}

impl LinearOperator {
    pub fn new(params: ModelParams) -> Self {
        let f_inf = boltzmann_gibbs(&params).into_values();
        let inv_weight = params
            .centers()
            .map(|v| 1.0 / boltzmann_gibbs_density(params.mu, v))
            .collect();
        let h = params.h();
        let a = 1.0 / params.mu;
        let lower_sum = f_inf[..f_inf.len() - 1].iter().sum();
        Self {
            params,
            f_inf,
            inv_weight,
            e: (a * h).exp(),
            w: a / (a * h).exp_m1(),
            lower_sum,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Linearized drift coefficient `rho` for the current perturbation.
    pub fn drift(&self, r: &[f64]) -> f64 {
        let n = r.len();
        let lo: f64 = r[..n - 1].iter().sum();
        let hi: f64 = r[1..].iter().sum();
        (lo - self.e * hi) / (self.params.h() * self.lower_sum)
    }

    fn step_values(&self, r: &mut [f64], dt: f64) {
        let h = self.params.h();
        let c = dt / h * 0.5 * self.params.lambda * self.w;
        let ce = c * self.e;
        let forcing = c * self.drift(r) * h;
        let n = r.len();
        let mut prev = 0.0;
        for j in 0..n - 1 {
            let flux = ce * r[j + 1] - c * r[j] + forcing * self.f_inf[j];
            r[j] += flux - prev;
            prev = flux;
        }
        r[n - 1] -= prev;
    }

    /// Advances `r` by one explicit step.
    pub fn step(&self, r: &mut Perturbation, dt: f64) -> Result<()> {
        check_cfl(&self.params, dt)?;
        self.step_values(r.values_mut(), dt);
        Ok(())
    }

    /// Weighted energy `(1/2) h sum r_j^2 / f_inf(v_j)`.
    pub fn energy(&self, r: &Perturbation) -> f64 {
        let sum: f64 = r
            .values()
            .iter()
            .zip(&self.inv_weight)
            .map(|(x, w)| x * x * w)
            .sum();
        0.5 * self.params.h() * sum
    }

    /// `h sum |r'_j|^2 / f_inf(v_j)` with the derivative from
    /// [`gradient`].
    pub fn weighted_gradient_norm(&self, r: &Perturbation) -> f64 {
        let d = gradient(r.values(), self.params.h());
        let sum: f64 = d.iter().zip(&self.inv_weight).map(|(x, w)| x * x * w).sum();
        self.params.h() * sum
    }

    /// Right-hand side of the energy identity,
    /// `(lambda/2) (2 r(0)^2 - int |r'|^2 / f_inf)`.
    pub fn energy_rate(&self, r: &Perturbation) -> f64 {
        let r0 = boundary_extrapolation(r.values());
        0.5 * self.params.lambda * (2.0 * r0 * r0 - self.weighted_gradient_norm(r))
    }

    /// Removes the components along `f_inf` and `v f_inf` so that the
    /// discrete mass and first moment vanish.
    pub fn project_constraints(&self, r: &Perturbation) -> Perturbation {
        let p = &self.params;
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, (x, f)) in r.values().iter().zip(&self.f_inf).enumerate() {
            let v = p.center(j);
            s0 += f;
            s1 += v * f;
            s2 += v * v * f;
            t0 += x;
            t1 += v * x;
        }
        // Solve [s0 s1; s1 s2] (alpha, beta) = (t0, t1).
        let det = s0 * s2 - s1 * s1;
        let alpha = (t0 * s2 - t1 * s1) / det;
        let beta = (s0 * t1 - s1 * t0) / det;
        let values = r
            .values()
            .iter()
            .zip(&self.f_inf)
            .enumerate()
            .map(|(j, (x, f))| x - (alpha + beta * p.center(j)) * f)
            .collect();
        GridFunction::new(*p, values).expect("same grid")
    }

    /// Checks both moment constraints against [`CONSTRAINT_TOL`].
    pub fn check_constraints(&self, r: &Perturbation) -> Result<()> {
        let p = &self.params;
        let (mut m0, mut m1, mut a0, mut a1) = (0.0, 0.0, 0.0, 0.0);
        for (j, x) in r.values().iter().enumerate() {
            let v = p.center(j);
            m0 += x;
            m1 += v * x;
            a0 += x.abs();
            a1 += v * x.abs();
        }
        if m0.abs() > CONSTRAINT_TOL * a0 || m1.abs() > CONSTRAINT_TOL * a1 {
            return Err(Error::Domain(format!(
                "perturbation violates the moment constraints (mass {:e}, first moment {:e})",
                p.h() * m0,
                p.h() * m1
            )));
        }
        Ok(())
    }

    /// `(r(0)^2, (1/3) int |r'|^2 / f_inf)` for a constrained perturbation.
    pub fn check_lemma_boundary(&self, r: &Perturbation) -> Result<(f64, f64)> {
        self.check_constraints(r)?;
        let r0 = boundary_extrapolation(r.values());
        Ok((r0 * r0, self.weighted_gradient_norm(r) / 3.0))
    }

    /// `(int r^2 / f_inf, 4 mu^2 int |r'|^2 / f_inf)`.
    pub fn check_poincare(&self, r: &Perturbation) -> (f64, f64) {
        let mu = self.params.mu;
        (
            2.0 * self.energy(r),
            4.0 * mu * mu * self.weighted_gradient_norm(r),
        )
    }

    /// Energy series `(t, E(t))` sampled every `sample_dt` up to `t_end`.
    pub fn decay_experiment(
        &self,
        r0: &Perturbation,
        t_end: f64,
        dt: f64,
        sample_dt: f64,
    ) -> Result<Vec<(f64, f64)>> {
        self.check_constraints(r0)?;
        check_cfl(&self.params, dt)?;
        let schedule = Schedule::new(t_end, sample_dt, &[])?;
        let mut r = r0.clone();
        let mut out = Vec::with_capacity(schedule.len());
        let mut t = 0.0;
        for &ts in schedule.times() {
            let (n, step) = substeps(t, ts, dt);
            for _ in 0..n {
                self.step_values(r.values_mut(), step);
            }
            t = ts;
            let e = self.energy(&r);
            if !e.is_finite() {
                return Err(Error::NumericalAbort {
                    t,
                    detail: format!("energy is {e}"),
                });
            }
            out.push((t, e));
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`LinearOperator::step`].
pub fn step_linear(r: &Perturbation, dt: f64) -> Result<Perturbation> {
    let op = LinearOperator::new(*r.params());
    let mut next = r.clone();
    op.step(&mut next, dt)?;
    Ok(next)
}

pub fn energy(r: &Perturbation) -> f64 {
    LinearOperator::new(*r.params()).energy(r)
}

/// Decay rate of the energy bound, `1 / (6 mu^2)`.
pub fn energy_bound_rate(mu: f64) -> f64 {
    1.0 / (6.0 * mu * mu)
}

/// Least-squares slope of `-ln E` against `t` over samples with `t >= t_min`.
pub fn fitted_decay_rate(series: &[(f64, f64)], t_min: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, e)| *t >= t_min && *e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// `f_inf(v) P(v) e^{-kappa v}` with a random polynomial `P` of degree at
/// most four and `kappa` in `[0.1, 1] / mu`, projected onto the constraints.
pub fn random_perturbation<R: Rng + ?Sized>(op: &LinearOperator, rng: &mut R) -> Perturbation {
    let p = *op.params();
    let mu = p.mu;
    let degree = rng.random_range(1..=4);
    let coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
    let kappa = rng.random_range(0.1..1.0) / mu;
    let r = GridFunction::from_fn(p, |v| {
        let x = v / mu;
        let poly = coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        boltzmann_gibbs_density(mu, v) * poly * (-kappa * v).exp()
    });
    op.project_constraints(&r)
}

/// Laguerre-type perturbation `(2 - 4v/mu + (v/mu)^2) e^{-v/mu} / mu`, the
/// extremal case of the boundary inequality.
pub fn laguerre_perturbation(params: &ModelParams) -> Perturbation {
    let mu = params.mu;
    GridFunction::from_fn(*params, |v| {
        let x = v / mu;
        (2.0 - 4.0 * x + x * x) * (-x).exp() / mu
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::seeded_rng;
    use crate::fokker_planck::series_derivative;

    fn op(n: usize) -> LinearOperator {
        LinearOperator::new(default_params(1.0, n).unwrap())
    }

    #[test]
    fn zero_stays_zero() {
        let o = op(500);
        let mut r = GridFunction::zeros(*o.params());
        o.step(&mut r, 1e-4).unwrap();
        assert!(r.values().iter().all(|x| *x == 0.0));
        assert_eq!(o.energy(&r), 0.0);
        assert_eq!(o.check_lemma_boundary(&r).unwrap(), (0.0, 0.0));
        assert_eq!(o.check_poincare(&r), (0.0, 0.0));
    }

    #[test]
    fn projection_examples() {
        let o = op(2500);
        let p = *o.params();
        let finf = boltzmann_gibbs(&p);
        let z = o.project_constraints(&finf);
        assert!(z.values().iter().all(|x| x.abs() < 1e-13));

        let lag = laguerre_perturbation(&p);
        let proj = o.project_constraints(&lag);
        let diff = proj
            .values()
            .iter()
            .zip(lag.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // only the midpoint-rule moment defect and the truncated tail are removed
        assert!(diff < 1e-4, "{diff}");
        let again = o.project_constraints(&proj);
        let drift = again
            .values()
            .iter()
            .zip(proj.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(drift < 1e-15, "{drift}");
        assert!(proj.mass().abs() < 1e-14 && proj.moment(1).abs() < 1e-13);
    }

    #[test]
    fn energy_examples() {
        let o = op(5000);
        let lag = laguerre_perturbation(o.params());
        assert!((o.energy(&lag) - 2.0).abs() < 1e-3);
        let scaled = lag.scaled(3.0);
        assert!((o.energy(&scaled) - 9.0 * o.energy(&lag)).abs() < 1e-12);
    }

    #[test]
    fn poincare_pair_for_simple_profile() {
        let o = op(5000);
        let r = GridFunction::from_fn(*o.params(), |v| v * (-v).exp());
        let (lhs, rhs) = o.check_poincare(&r);
        assert!((lhs - 2.0).abs() < 1e-3 && (rhs - 4.0).abs() < 1e-3, "{lhs} {rhs}");
    }

    #[test]
    fn lemma_rejects_unconstrained_input() {
        let o = op(500);
        let r = GridFunction::from_fn(*o.params(), |v| v * (-v).exp());
        assert!(o.check_lemma_boundary(&r).is_err());
    }

    #[test]
    fn moments_are_invariant() {
        let o = op(1000);
        let mut rng = seeded_rng(1, 0);
        let mut r = random_perturbation(&o, &mut rng);
        let h = o.params().h();
        for _ in 0..10_000 {
            o.step(&mut r, 0.4 * h * h).unwrap();
        }
        assert!(r.mass().abs() <= 1e-10);
        assert!(r.moment(1).abs() <= 1e-10);
    }

    #[test]
    fn energy_identity_at_start() {
        let o = op(5000);
        let r = o.project_constraints(&laguerre_perturbation(o.params()));
        let h = o.params().h();
        let series = o.decay_experiment(&r, 2e-3, 0.4 * h * h, 1e-3).unwrap();
        let t: Vec<f64> = series.iter().map(|s| s.0).collect();
        let e: Vec<f64> = series.iter().map(|s| s.1).collect();
        let fd = series_derivative(&t, &e)[0];
        let rate = o.energy_rate(&r);
        assert!((fd - rate).abs() < 0.05 * rate.abs(), "{fd} vs {rate}");
    }

    #[test]
    fn linearity_of_the_energy_curve() {
        let o = op(500);
        let mut rng = seeded_rng(2, 0);
        let r = random_perturbation(&o, &mut rng);
        let h = o.params().h();
        let a = o.decay_experiment(&r, 0.5, 0.4 * h * h, 0.1).unwrap();
        let b = o.decay_experiment(&r.scaled(10.0), 0.5, 0.4 * h * h, 0.1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y.1 - 100.0 * x.1).abs() <= 1e-10 * y.1);
        }
    }

    #[test]
    fn fitted_rate_of_pure_exponential() {
        let s: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 3.0 * (-0.5 * k as f64).exp())).collect();
        assert!((fitted_decay_rate(&s, 0.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(fitted_decay_rate(&s[..1], 0.0).is_none());
    }
}
