//! Event-driven Monte Carlo simulation of the agent exchange process.
//!
//! Events arrive at total rate `lambda * N / 2`, so each agent initiates
//! exchanges at rate `lambda / 2`. An event draws an ordered pair `(i, j)`
//! with `i != j` uniformly; agent `i` hands one unit (or one quantum `eps`)
//! to agent `j` if it can afford it, and the event is void otherwise. Void
//! events still advance the clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Result};
use crate::model::{compensated_sum, GridFunction, ModelParams, Pmf};

/// Relative slack in the `X_i >= eps` test so that wealths which are
/// multiples of `eps` up to rounding still count as able to pay.
const EPS_GUARD: f64 = 1e-9;

/// Initial allocation of wealth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Every agent holds exactly `mu`.
    Equal,
    /// Total wealth dropped coin by coin onto uniformly chosen agents.
    Multinomial,
}

/// Generator used throughout the agent simulation. `stream` separates the
/// initialization draws from the event draws of the same seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Agent wealths plus the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    wealths: Vec<f64>,
    time: f64,
    total_wealth: f64,
}

impl ParticleEnsemble {
    pub fn from_wealths(wealths: Vec<f64>) -> Result<Self> {
        if wealths.len() < 2 {
            return Err(invalid("n_agents", "need at least two agents"));
        }
        if let Some((i, w)) = wealths
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(invalid("wealths", format!("agent {i} holds {w}")));
        }
        let total_wealth = compensated_sum(wealths.iter().copied());
        Ok(Self {
            wealths,
            time: 0.0,
            total_wealth,
        })
    }

    pub fn wealths(&self) -> &[f64] {
        &self.wealths
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Total wealth at construction.
    pub fn total_wealth(&self) -> f64 {
        self.total_wealth
    }

    /// Compensated sum of the current wealths.
    pub fn current_total(&self) -> f64 {
        compensated_sum(self.wealths.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.wealths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealths.is_empty()
    }

    /// Fraction of agents holding at least `unit`.
    pub fn rich_fraction(&self, unit: f64) -> f64 {
        let threshold = unit * (1.0 - EPS_GUARD);
        let rich = self.wealths.iter().filter(|w| **w >= threshold).count();
        rich as f64 / self.len() as f64
    }
}

/// Builds an ensemble of integer wealths with mean `mu`.
pub fn init_ensemble(n_agents: usize, mu: f64, mode: InitMode, seed: u64) -> Result<ParticleEnsemble> {
    init_quantized(n_agents, mu, 1.0, mode, seed)
}

/// Builds an ensemble whose wealths are multiples of `eps` with mean `mu`.
pub fn init_ensemble_epsilon(
    n_agents: usize,
    mu: f64,
    eps: f64,
    mode: InitMode,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {eps}")));
    }
    init_quantized(n_agents, mu, eps, mode, seed)
}

fn init_quantized(
    n_agents: usize,
    mu: f64,
    unit: f64,
    mode: InitMode,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if n_agents < 2 {
        return Err(invalid("n_agents", format!("need at least two agents, got {n_agents}")));
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(invalid("mu", format!("must be non-negative, got {mu}")));
    }
    let wealths = match mode {
        InitMode::Equal => {
            let per_agent = (mu / unit).round();
            if (per_agent * unit - mu).abs() > 1e-9 * mu.max(unit) {
                return Err(invalid(
                    "mu",
                    format!("{mu} is not a whole number of units of size {unit}"),
                ));
            }
            vec![per_agent * unit; n_agents]
        }
        InitMode::Multinomial => {
            let coins = mu * n_agents as f64 / unit;
            if (coins - coins.round()).abs() > 1e-9 * coins.max(1.0) {
                return Err(invalid(
                    "mu",
                    format!("total wealth {} is not a whole number of units", mu * n_agents as f64),
                ));
            }
            let mut rng = seeded_rng(seed, 0);
            let mut counts = vec![0u64; n_agents];
            for _ in 0..coins.round() as u64 {
                counts[rng.random_range(0..n_agents)] += 1;
            }
            counts.into_iter().map(|c| c as f64 * unit).collect()
        }
    };
    ParticleEnsemble::from_wealths(wealths)
}

/// Outcome of one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Transfer { giver: usize, receiver: usize },
    Void { giver: usize, receiver: usize },
}

fn draw_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn holding_time<R: Rng + ?Sized>(n: usize, lambda: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * lambda * n as f64;
    Exp::new(rate).expect("positive event rate").sample(rng)
}

/// Hands one unit from `giver` to `receiver` if the giver holds at least one.
pub fn exchange_discrete(e: &mut ParticleEnsemble, giver: usize, receiver: usize) -> Event {
    if e.wealths[giver] >= 1.0 {
        e.wealths[giver] -= 1.0;
        e.wealths[receiver] += 1.0;
        Event::Transfer { giver, receiver }
    } else {
        Event::Void { giver, receiver }
    }
}

/// Hands `eps` from `giver` to `receiver` if the giver holds at least `eps`.
/// The amount credited is the amount actually debited, and a giver short by
/// rounding only hands over what it holds.
pub fn exchange_epsilon(e: &mut ParticleEnsemble, giver: usize, receiver: usize, eps: f64) -> Event {
    let x = e.wealths[giver];
    if x >= eps * (1.0 - EPS_GUARD) {
        let remaining = (x - eps).max(0.0);
        let moved = x - remaining;
        e.wealths[giver] = remaining;
        e.wealths[receiver] += moved;
        Event::Transfer { giver, receiver }
    } else {
        Event::Void { giver, receiver }
    }
}

/// One event of the unit-exchange process.
pub fn step_discrete<R: Rng + ?Sized>(e: &mut ParticleEnsemble, lambda: f64, rng: &mut R) -> Event {
    e.time += holding_time(e.len(), lambda, rng);
    let (i, j) = draw_pair(e.len(), rng);
    exchange_discrete(e, i, j)
}

/// One event of the `eps`-exchange process.
pub fn step_epsilon<R: Rng + ?Sized>(
    e: &mut ParticleEnsemble,
    eps: f64,
    lambda: f64,
    rng: &mut R,
) -> Event {
    e.time += holding_time(e.len(), lambda, rng);
    let (i, j) = draw_pair(e.len(), rng);
    exchange_epsilon(e, i, j, eps)
}

/// Exchange rule used by [`advance_to`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exchange {
    Unit,
    Quantum(f64),
}

/// Runs events until the clock reaches `t`. The overshooting holding time is
/// discarded and the clock set to `t`, which the memoryless arrivals allow.
/// Returns the number of events performed.
pub fn advance_to<R: Rng + ?Sized>(
    e: &mut ParticleEnsemble,
    t: f64,
    lambda: f64,
    rule: Exchange,
    rng: &mut R,
) -> u64 {
    let n = e.len();
    let exp = Exp::new(0.5 * lambda * n as f64).expect("positive event rate");
    let mut events = 0;
    loop {
        let dt = exp.sample(rng);
        if e.time + dt > t {
            e.time = e.time.max(t);
            return events;
        }
        e.time += dt;
        let (i, j) = draw_pair(n, rng);
        match rule {
            Exchange::Unit => exchange_discrete(e, i, j),
            Exchange::Quantum(eps) => exchange_epsilon(e, i, j, eps),
        };
        events += 1;
    }
}

/// Normalized histogram of integer wealths.
pub fn empirical_pmf(e: &ParticleEnsemble) -> Result<Pmf> {
    let mut counts: Vec<u64> = Vec::new();
    for (i, &w) in e.wealths.iter().enumerate() {
        if w.fract() != 0.0 {
            return Err(invalid("wealths", format!("agent {i} holds non-integer {w}")));
        }
        let k = w as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    let n = e.len() as f64;
    Pmf::new(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Histogram density on the grid of `params`; wealth beyond `v_max` is
/// counted in the last cell so the mass is exactly one. Bin edges are
/// shifted down by a relative `1e-9` of the cell width so that wealths on a
/// lattice aligned with the grid land in the intended cell despite rounding.
pub fn empirical_density(e: &ParticleEnsemble, params: &ModelParams) -> GridFunction {
    let h = params.h();
    let n = params.n_cells;
    let mut counts = vec![0u64; n];
    for &w in &e.wealths {
        let k = ((w / h) + EPS_GUARD).floor() as usize;
        counts[k.min(n - 1)] += 1;
    }
    let scale = 1.0 / (e.len() as f64 * h);
    let values = counts.into_iter().map(|c| c as f64 * scale).collect();
    GridFunction::new(*params, values).expect("histogram has one value per cell")
}
