//! Shared domain types: model parameters, cell-averaged densities on a
//! uniform grid, probability mass functions on the integers, and the two
//! reference equilibria.
//!
//! Densities live on the truncated interval `[0, v_max]` split into
//! `n_cells` cells of width `h`. Values are cell averages, so `h * sum(f)`
//! is the exact mass of the piecewise-constant reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Physical and numerical parameters shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mean wealth per agent.
    pub mu: f64,
    /// Interaction rate. With the default of 2 the Fokker-Planck prefactor is 1.
    pub lambda: f64,
    /// Exchange quantum of the kinetic model.
    pub epsilon: f64,
    /// Right end of the truncated wealth interval.
    pub v_max: f64,
    pub n_cells: usize,
}

impl ModelParams {
    pub const MIN_CELLS: usize = 16;

    pub fn new(mu: f64, lambda: f64, epsilon: f64, v_max: f64, n_cells: usize) -> Result<Self> {
        let p = Self {
            mu,
            lambda,
            epsilon,
            v_max,
            n_cells,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults for a given mean: `lambda = 2`, `epsilon = 0.1 mu`,
    /// `v_max = 40 mu` and `h = 0.01 mu`.
    pub fn for_mean(mu: f64) -> Result<Self> {
        Self::new(mu, 2.0, 0.1 * mu, 40.0 * mu, 4000)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(invalid("mu", format!("must be positive, got {}", self.mu)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid(
                "lambda",
                format!("must be positive, got {}", self.lambda),
            ));
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(invalid(
                "v_max",
                format!("must be positive, got {}", self.v_max),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < self.v_max) {
            return Err(invalid(
                "epsilon",
                format!("must lie in (0, v_max), got {}", self.epsilon),
            ));
        }
        if self.n_cells < Self::MIN_CELLS {
            return Err(invalid(
                "n_cells",
                format!("need at least {} cells, got {}", Self::MIN_CELLS, self.n_cells),
            ));
        }
        Ok(())
    }

    /// Cell width.
    #[inline]
    pub fn h(&self) -> f64 {
        self.v_max / self.n_cells as f64
    }

    /// Center of cell `j`.
    #[inline]
    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.h();
        (0..self.n_cells).map(move |j| (j as f64 + 0.5) * h)
    }

    /// Same parameters with a different grid resolution.
    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        Self::new(self.mu, self.lambda, self.epsilon, self.v_max, n_cells)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.mu, self.lambda, epsilon, self.v_max, self.n_cells)
    }
}

// Three-point Gauss-Legendre rule on [-1, 1].
const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Cell-averaged function on the uniform grid described by `params`.
///
/// Densities are non-negative; the linearized module reuses the layout for
/// signed perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    params: ModelParams,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(params: ModelParams, values: Vec<f64>) -> Result<Self> {
        if values.len() != params.n_cells {
            return Err(invalid(
                "values",
                format!("expected {} cells, got {}", params.n_cells, values.len()),
            ));
        }
        Ok(Self { params, values })
    }

    pub fn zeros(params: ModelParams) -> Self {
        Self {
            params,
            values: vec![0.0; params.n_cells],
        }
    }

    /// Projects a pointwise function onto cell averages with three-point
    /// Gauss quadrature per cell.
    pub fn from_fn(params: ModelParams, f: impl Fn(f64) -> f64) -> Self {
        let h = params.h();
        let values = params
            .centers()
            .map(|c| {
                GAUSS_NODES
                    .iter()
                    .zip(GAUSS_WEIGHTS.iter())
                    .map(|(x, w)| w * f(c + 0.5 * h * x))
                    .sum()
            })
            .collect();
        Self { params, values }
    }

    #[inline]
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.params.h()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.h() * compensated_sum(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Midpoint-rule raw moment `h * sum v_j^n g_j`.
    pub fn moment(&self, n: u32) -> f64 {
        let h = self.h();
        let terms = self
            .values
            .iter()
            .enumerate()
            .map(|(j, g)| ((j as f64 + 0.5) * h).powi(n as i32) * g);
        compensated_sum(terms) * h
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            params: self.params,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Rescales to unit mass.
    pub fn normalized(&self) -> Self {
        let m = self.mass();
        self.scaled(1.0 / m)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_grid(&self, other: &GridFunction) -> bool {
        self.values.len() == other.values.len()
            && (self.h() - other.h()).abs() <= 1e-14 * self.h()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Cell averages of `exp(-v/mu)/mu`, integrated exactly per cell.
pub fn boltzmann_gibbs(params: &ModelParams) -> GridFunction {
    let mu = params.mu;
    let h = params.h();
    // Integral over the cell [a, a+h] divided by h.
    let cell = -(-h / mu).exp_m1() / h;
    let values = (0..params.n_cells)
        .map(|j| (-(j as f64) * h / mu).exp() * cell)
        .collect();
    GridFunction {
        params: *params,
        values,
    }
}

/// Pointwise Boltzmann-Gibbs density.
#[inline]
pub fn boltzmann_gibbs_density(mu: f64, v: f64) -> f64 {
    (-v / mu).exp() / mu
}

/// Gamma-type datum `(2/mu)(1 - v/(2mu))^2 exp(-v/mu)`: unit mass, mean `mu`,
/// and compatible with the nonlinear Robin condition `f'(0) + f(0)^2 = 0`.
pub fn gamma_initial_density(mu: f64, v: f64) -> f64 {
    let s = 1.0 - v / (2.0 * mu);
    2.0 / mu * s * s * (-v / mu).exp()
}

pub fn gamma_initial(params: &ModelParams) -> GridFunction {
    let mu = params.mu;
    GridFunction::from_fn(*params, |v| gamma_initial_density(mu, v))
}

/// Probability mass function on `{0, ..., n_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Builds a pmf, rejecting negative or non-finite entries.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("probs", "empty pmf"));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(invalid("probs", format!("entry {n} is {p}")));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    /// Point mass at `n` on `{0, ..., n_max}`.
    pub fn delta(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(invalid("n", format!("{n} exceeds n_max = {n_max}")));
        }
        let mut probs = vec![0.0; n_max + 1];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Fraction of mass at `n >= 1`.
    pub fn rich_fraction(&self) -> f64 {
        self.probs[1..].iter().sum()
    }

    /// L1 distance, padding the shorter pmf with zeros.
    pub fn l1(&self, other: &Pmf) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        (0..n)
            .map(|i| {
                let a = self.probs.get(i).copied().unwrap_or(0.0);
                let b = other.probs.get(i).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .sum()
    }
}

/// Default truncation index `ceil(40 mu)`.
pub fn default_n_max(mu: f64) -> usize {
    (40.0 * mu).ceil() as usize
}

/// Geometric equilibrium `p_n = (1/(1+mu)) (mu/(1+mu))^n`, truncated at `n_max`.
pub fn geometric_equilibrium(mu: f64, n_max: usize) -> Result<Pmf> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    if n_max < 1 {
        return Err(invalid("n_max", "must be at least 1"));
    }
    let q = mu / (1.0 + mu);
    let p0 = 1.0 / (1.0 + mu);
    let probs = (0..=n_max).map(|n| p0 * q.powi(n as i32)).collect();
    Ok(Pmf { probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, v_max: f64, n: usize) -> ModelParams {
        ModelParams::new(mu, 2.0, 0.1, v_max, n).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 2.0, 0.1, 40.0, 100).is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.1, 40.0, 100).is_err());
        assert!(ModelParams::new(1.0, 2.0, 50.0, 40.0, 100).is_err());
        assert!(ModelParams::new(1.0, 2.0, 0.1, 40.0, 8).is_err());
    }

    #[test]
    fn boltzmann_gibbs_mass_is_exact() {
        let p = params(1.0, 40.0, 4000);
        let f = boltzmann_gibbs(&p);
        assert!((f.mass() - (1.0 - (-40.0f64).exp())).abs() < 1e-15);
        assert!((f.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boltzmann_gibbs_moments() {
        let p = params(1.0, 40.0, 4000);
        let f = boltzmann_gibbs(&p);
        // n! mu^n up to O(h^2)
        assert!((f.mean() - 1.0).abs() < 1e-4);
        assert!((f.moment(2) - 2.0).abs() < 1e-3);
        assert!((f.moment(3) - 6.0).abs() < 1e-3);
        assert!((boltzmann_gibbs_density(1.0, 0.0) - 1.0).abs() < 1e-15);

        let p = params(2.0, 80.0, 8000);
        let f = boltzmann_gibbs(&p);
        assert!((f.moment(2) - 8.0).abs() < 1e-3);
        assert!((f.moment(3) - 48.0).abs() < 1e-2);
    }

    #[test]
    fn moments_shrink_quadratically_with_h() {
        let e = |n| {
            let f = boltzmann_gibbs(&params(1.0, 40.0, n));
            (f.moment(2) - 2.0).abs()
        };
        let ratio = e(1000) / e(2000);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn zero_function_has_zero_moments() {
        let g = GridFunction::zeros(params(1.0, 40.0, 100));
        for n in 0..4 {
            assert_eq!(g.moment(n), 0.0);
        }
    }

    #[test]
    fn gamma_initial_matches_symbolic_values() {
        // f0(0) = 2, f0'(0) = -4 for mu = 1 (Robin compatible)
        let f0 = |v| gamma_initial_density(1.0, v);
        assert_eq!(f0(0.0), 2.0);
        let d = 1e-6;
        let slope = (f0(d) - f0(-d)) / (2.0 * d);
        assert!((slope + 4.0).abs() < 1e-6);
        assert!((slope + f0(0.0).powi(2)).abs() < 1e-6);
        assert_eq!(gamma_initial_density(2.0, 0.0), 1.0);

        let g = gamma_initial(&params(1.0, 40.0, 4000));
        assert!((g.mass() - 1.0).abs() < 1e-12);
        assert!((g.mean() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn geometric_values() {
        let p = geometric_equilibrium(1.0, 60).unwrap();
        assert_eq!(&p.probs()[..3], &[0.5, 0.25, 0.125]);
        assert!((p.total() - (1.0 - 2f64.powi(-61))).abs() < 1e-15);
        let p = geometric_equilibrium(4.0, 2000).unwrap();
        assert!((p.mean() - 4.0).abs() < 1e-10);
        assert!(geometric_equilibrium(1.0, 0).is_err());
    }

    #[test]
    fn geometric_approaches_exponential_for_large_mean() {
        for mu in [20.0, 40.0] {
            let n_max = (40.0 * mu) as usize;
            let p = geometric_equilibrium(mu, n_max).unwrap();
            let l1: f64 = p
                .probs()
                .iter()
                .enumerate()
                .map(|(n, pn)| (pn - boltzmann_gibbs_density(mu, n as f64)).abs())
                .sum();
            assert!(l1 <= 2.0 / mu, "mu = {mu}: l1 = {l1}");
        }
    }

    #[test]
    fn pmf_rejects_negative() {
        assert!(Pmf::new(vec![0.5, -0.1]).is_err());
        assert!(Pmf::new(vec![]).is_err());
        assert_eq!(Pmf::delta(2, 3).unwrap().mean(), 2.0);
    }
}
