//! The named experiments. Each `*_run` function returns typed results so the
//! acceptance suite can inspect them; [`run_experiment`] adds file output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{Config, Experiment};
use super::output::{git_describe, num, write_snapshots, write_timeseries, CsvWriter, Manifest};
use crate::agent::{
    advance_to, empirical_density, empirical_pmf, init_ensemble, init_ensemble_epsilon,
    seeded_rng, Exchange, InitMode,
};
use crate::diagnostics::{
    d2_fourier, entropy_identity_residuals, fisher, hellinger, l1, DiagnosticsRow,
};
use crate::epsilon::{self, moment_rates, EpsilonOptions};
use crate::error::{invalid, Error, Result};
use crate::fokker_planck::{self, moment_ode_check, series_derivative, SolveOptions};
use crate::linearized::{
    default_params, energy_bound_rate, fitted_decay_rate, laguerre_perturbation,
    random_perturbation, LinearOperator,
};
use crate::meanfield::{self, entropy_pmf, OdeTrajectory};
use crate::model::{
    boltzmann_gibbs, default_n_max, gamma_initial, geometric_equilibrium, GridFunction,
    ModelParams, Pmf,
};
use crate::timeline::Trajectory;

/// Relative slack allowed by the randomized inequality checks.
pub const INEQUALITY_SLACK: f64 = 0.01;

const DEFAULT_LAMBDA: f64 = 2.0;

/// Grid parameters from the config, falling back to `v_max = vmax_per_mu * mu`
/// and the given cell count.
fn grid_params(cfg: &Config, mu: f64, vmax_per_mu: f64, cells: usize) -> Result<ModelParams> {
    let mu = cfg.mu.unwrap_or(mu);
    let v_max = cfg.v_max.unwrap_or(vmax_per_mu * mu);
    let eps = cfg.epsilon.unwrap_or(0.1 * mu).min(0.5 * v_max);
    ModelParams::new(
        mu,
        cfg.lambda.unwrap_or(DEFAULT_LAMBDA),
        eps,
        v_max,
        cfg.n_cells.unwrap_or(cells),
    )
}

fn seed(cfg: &Config) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn whole_units(mu: f64) -> Result<usize> {
    let n = mu.round();
    if (n - mu).abs() > 1e-12 || n < 0.0 {
        return Err(invalid("mu", format!("must be a whole number here, got {mu}")));
    }
    Ok(n as usize)
}

// ---------------------------------------------------------------------------
// entropy-decay

/// Fokker-Planck run from the Gamma-type datum.
#[derive(Debug, Clone)]
pub struct EntropyDecay {
    pub params: ModelParams,
    pub options: SolveOptions,
    pub trajectory: Trajectory,
}

impl EntropyDecay {
    /// Relative residuals of the entropy identity between samples.
    pub fn identity_residuals(&self) -> Vec<f64> {
        entropy_identity_residuals(&self.trajectory.rows, self.params.lambda)
    }

    /// One-step entropy identity residuals `(t, residual)` at every sample,
    /// recomputed along a second pass of the same run.
    pub fn step_identity_residuals(&self) -> Result<Vec<(f64, f64)>> {
        fokker_planck::step_identity_residuals(&gamma_initial(&self.params), &self.options)
    }

    /// `[l1, 2 d_H, 2 d_H^2, fisher, d_H^2]` at every stored snapshot.
    pub fn snapshot_inequalities(&self) -> Result<Vec<(f64, [f64; 5])>> {
        let f_inf = boltzmann_gibbs(&self.params);
        self.trajectory
            .snapshots
            .iter()
            .map(|s| {
                let dh = hellinger(&s.f, &f_inf)?;
                Ok((
                    s.t,
                    [
                        l1(&s.f, &f_inf)?,
                        2.0 * dh,
                        2.0 * dh * dh,
                        fisher(&s.f, &f_inf)?,
                        dh * dh,
                    ],
                ))
            })
            .collect()
    }
}

pub fn entropy_decay_run(cfg: &Config) -> Result<EntropyDecay> {
    let params = grid_params(cfg, 1.0, 40.0, 4000)?;
    let t_end = cfg.t_end.unwrap_or(20.0);
    let dt = cfg.dt.unwrap_or(fokker_planck::default_dt(&params));
    let snapshot_times = match &cfg.snapshot_times {
        Some(times) => times.clone(),
        None => [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
            .into_iter()
            .filter(|t| *t < t_end)
            .chain([t_end])
            .collect(),
    };
    let opts = SolveOptions {
        dt,
        t_end,
        sample_dt: cfg.sample_dt.unwrap_or(0.05),
        snapshot_times,
    };
    let trajectory = fokker_planck::solve(&gamma_initial(&params), &opts)?;
    Ok(EntropyDecay {
        params,
        options: opts,
        trajectory,
    })
}

fn entropy_decay(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let run = entropy_decay_run(cfg)?;
    let rows = &run.trajectory.rows;
    let files = vec![
        write_timeseries(&out.join("timeseries.csv"), rows)?,
        write_snapshots(&out.join("snapshots.csv"), &run.trajectory.snapshots)?,
    ];
    let first = rows.first().expect("at least one sample");
    let last = rows.last().expect("at least one sample");
    let mu = run.params.mu;
    let max_mass_defect = rows.iter().map(|r| (r.mass - 1.0).abs()).fold(0.0, f64::max);
    let max_mean_defect = rows.iter().map(|r| (r.mean - mu).abs()).fold(0.0, f64::max);
    let residual = run.identity_residuals().into_iter().fold(0.0, f64::max);
    let step_residual = run
        .step_identity_residuals()?
        .into_iter()
        .map(|(_, r)| r)
        .fold(0.0, f64::max);
    let pairs = run.snapshot_inequalities()?;
    let times_where = |bad: fn(&[f64; 5]) -> bool| -> Vec<f64> {
        pairs.iter().filter(|(_, p)| bad(p)).map(|(t, _)| *t).collect()
    };
    let summary = json!({
        "h": run.params.h(),
        "dt": run.options.dt,
        "samples": rows.len(),
        "max_mass_defect": max_mass_defect,
        "max_mean_defect": max_mean_defect,
        "entropy_initial": first.entropy,
        "entropy_final": last.entropy,
        "entropy_ratio": last.entropy / first.entropy,
        "entropy_increases": run.trajectory.entropy_increases(1e-10).len(),
        "hellinger_increases": run.trajectory.hellinger_increases(0.0).len(),
        "max_sample_identity_residual": residual,
        "max_step_identity_residual": step_residual,
        "l1_above_2dh_times": times_where(|p| p[0] > p[1]),
        "l1_above_2dh2_times": times_where(|p| p[0] > p[2]),
        "johnson_barron_violation_times": times_where(|p| p[3] < p[4]),
    });
    Ok((files, summary))
}

// ---------------------------------------------------------------------------
// quasi-invariant

/// One epsilon leg of the quasi-invariant sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiInvariantLeg {
    pub eps: f64,
    pub d2: f64,
    pub l1: f64,
    pub max_boundary_value: f64,
    pub boundary_flagged: bool,
}

pub fn quasi_invariant_run(cfg: &Config) -> Result<Vec<QuasiInvariantLeg>> {
    let params = grid_params(cfg, 1.0, 40.0, 4000)?;
    let t_end = cfg.t_end.unwrap_or(2.0);
    let f0 = gamma_initial(&params);
    let fp_opts = SolveOptions {
        dt: cfg.dt.unwrap_or(fokker_planck::default_dt(&params)),
        snapshot_times: vec![],
        sample_dt: t_end.max(f64::MIN_POSITIVE),
        ..SolveOptions::new(&params, t_end)
    };
    let eps_list = cfg.epsilons(&[0.4, 0.2, 0.1, 0.05]);
    let (fp, legs) = rayon::join(
        || fokker_planck::solve(&f0, &fp_opts),
        || {
            eps_list
                .par_iter()
                .map(|&eps| {
                    let opts = EpsilonOptions {
                        sample_dt: t_end.max(f64::MIN_POSITIVE),
                        snapshot_times: vec![],
                        ..EpsilonOptions::scaled(eps, t_end)
                    };
                    epsilon::run(&f0, &opts).map(|r| (eps, r))
                })
                .collect::<Result<Vec<_>>>()
        },
    );
    let f_fp = fp?.final_state;
    legs?
        .into_iter()
        .map(|(eps, r)| {
            let f = &r.trajectory.final_state;
            Ok(QuasiInvariantLeg {
                eps,
                d2: d2_fourier(f, &f_fp)?,
                l1: l1(f, &f_fp)?,
                max_boundary_value: r.max_boundary_value,
                boundary_flagged: r.boundary_flagged,
            })
        })
        .collect()
}

fn quasi_invariant(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let legs = quasi_invariant_run(cfg)?;
    let mut w = CsvWriter::create(&out.join("d2_vs_eps.csv"), "eps,d2,l1,max_f0,flagged")?;
    for leg in &legs {
        w.row(&[
            num(leg.eps),
            num(leg.d2),
            num(leg.l1),
            num(leg.max_boundary_value),
            u8::from(leg.boundary_flagged).to_string(),
        ])?;
    }
    let ratios: Vec<f64> = legs.windows(2).map(|w| w[0].d2 / w[1].d2).collect();
    let summary = json!({
        "legs": legs.len(),
        "fan_out": "one thread-pool task per epsilon plus the Fokker-Planck reference",
        "d2": legs.iter().map(|l| l.d2).collect::<Vec<_>>(),
        "d2_ratios": ratios,
        "boundary_flagged": legs.iter().filter(|l| l.boundary_flagged).map(|l| l.eps).collect::<Vec<_>>(),
    });
    Ok((vec![w.finish()?], summary))
}

// ---------------------------------------------------------------------------
// linear-decay

/// Energy series of one linearized run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCase {
    pub label: String,
    pub series: Vec<(f64, f64)>,
}

impl DecayCase {
    /// Largest `E(t) / (E(0) e^{-rate t})` over the samples.
    pub fn max_envelope_ratio(&self, rate: f64) -> f64 {
        let e0 = self.series[0].1;
        self.series
            .iter()
            .map(|(t, e)| e / (e0 * (-rate * t).exp()))
            .fold(0.0, f64::max)
    }

    /// Energy at `t`, interpolating `ln E` linearly between samples.
    pub fn energy_at(&self, t: f64) -> Option<f64> {
        let k = self.series.windows(2).position(|w| w[0].0 <= t && t <= w[1].0)?;
        let ((t0, e0), (t1, e1)) = (self.series[k], self.series[k + 1]);
        if t1 == t0 {
            return Some(e0);
        }
        let s = (t - t0) / (t1 - t0);
        Some((e0.ln() * (1.0 - s) + e1.ln() * s).exp())
    }
}

#[derive(Debug, Clone)]
pub struct LinearDecay {
    pub params: ModelParams,
    pub bound_rate: f64,
    pub cases: Vec<DecayCase>,
}

/// Number of random perturbations in the linear-decay experiment.
pub const RANDOM_DECAY_CASES: usize = 5;

pub fn linear_decay_run(cfg: &Config) -> Result<LinearDecay> {
    let mu = cfg.mu.unwrap_or(1.0);
    let mut params = default_params(mu, cfg.n_cells.unwrap_or(2500))?;
    if let Some(v_max) = cfg.v_max {
        params = ModelParams::new(mu, params.lambda, params.epsilon.min(0.5 * v_max), v_max, params.n_cells)?;
    }
    if let Some(lambda) = cfg.lambda {
        params.lambda = lambda;
        params.validate()?;
    }
    let op = LinearOperator::new(params);
    let t_end = cfg.t_end.unwrap_or(12.0 * mu * mu);
    let dt = cfg.dt.unwrap_or(fokker_planck::default_dt(&params));
    let sample_dt = cfg.sample_dt.unwrap_or(0.05 * mu * mu);
    let mut rng = seeded_rng(seed(cfg), 0);
    let mut inputs: Vec<(String, GridFunction)> = (0..RANDOM_DECAY_CASES)
        .map(|k| (format!("random-{k}"), random_perturbation(&op, &mut rng)))
        .collect();
    inputs.push((
        "laguerre".to_string(),
        op.project_constraints(&laguerre_perturbation(&params)),
    ));
    let cases = inputs
        .into_par_iter()
        .map(|(label, r0)| {
            op.decay_experiment(&r0, t_end, dt, sample_dt)
                .map(|series| DecayCase { label, series })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearDecay {
        params,
        bound_rate: energy_bound_rate(mu),
        cases,
    })
}

fn linear_decay(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let run = linear_decay_run(cfg)?;
    let mut w = CsvWriter::create(&out.join("linear_decay.csv"), "case,t,energy,envelope")?;
    let mut per_case = Vec::new();
    for case in &run.cases {
        let e0 = case.series[0].1;
        for (t, e) in &case.series {
            w.row(&[
                case.label.clone(),
                num(*t),
                num(*e),
                num(e0 * (-run.bound_rate * t).exp()),
            ])?;
        }
        let t_end = case.series.last().map_or(0.0, |s| s.0);
        per_case.push(json!({
            "case": case.label,
            "max_envelope_ratio": case.max_envelope_ratio(run.bound_rate),
            "fitted_rate": fitted_decay_rate(&case.series, 0.25 * t_end),
        }));
    }
    let summary = json!({
        "bound_rate": run.bound_rate,
        "cases": per_case,
    });
    Ok((vec![w.finish()?], summary))
}

// ---------------------------------------------------------------------------
// inequality-suite

/// Which inequality a randomized case exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalityKind {
    /// `r(0)^2 <= (1/3) int |r'|^2 / f_inf`.
    Boundary,
    /// `int r^2 / f_inf <= 4 mu^2 int |r'|^2 / f_inf`.
    Poincare,
    /// `d_H^2(f, f_inf) <= I(f | f_inf)`.
    JohnsonBarron,
}

impl InequalityKind {
    pub fn name(&self) -> &'static str {
        match self {
            InequalityKind::Boundary => "boundary",
            InequalityKind::Poincare => "poincare",
            InequalityKind::JohnsonBarron => "johnson-barron",
        }
    }
}

/// One randomized case, `lhs <= rhs` expected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCase {
    pub kind: InequalityKind,
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCase {
    pub fn violated(&self, slack: f64) -> bool {
        self.lhs > self.rhs * (1.0 + slack)
    }
}

/// Number of random cases per inequality.
pub const INEQUALITY_CASES: usize = 50;

/// Densities `f_inf + delta r` with `delta` chosen so that
/// `|delta r| <= f_inf / 2` everywhere.
pub fn near_equilibrium_density(op: &LinearOperator, r: &GridFunction) -> GridFunction {
    let f_inf = boltzmann_gibbs(op.params());
    let worst = r
        .values()
        .iter()
        .zip(f_inf.values())
        .map(|(x, f)| (x / f).abs())
        .fold(0.0, f64::max);
    let delta = if worst > 0.0 { 0.5 / worst } else { 0.0 };
    let values = f_inf
        .values()
        .iter()
        .zip(r.values())
        .map(|(f, x)| f + delta * x)
        .collect();
    GridFunction::new(*op.params(), values).expect("same grid")
}

pub fn inequality_suite_run(cfg: &Config) -> Result<Vec<InequalityCase>> {
    let mu = cfg.mu.unwrap_or(1.0);
    let params = default_params(mu, cfg.n_cells.unwrap_or(5000))?;
    let op = LinearOperator::new(params);
    let f_inf = boltzmann_gibbs(&params);
    let mut rng = seeded_rng(seed(cfg), 0);
    let perturbations: Vec<GridFunction> = (0..3 * INEQUALITY_CASES)
        .map(|_| random_perturbation(&op, &mut rng))
        .collect();
    let mut cases = Vec::with_capacity(perturbations.len());
    for (k, r) in perturbations.iter().enumerate() {
        let index = k % INEQUALITY_CASES;
        let case = match k / INEQUALITY_CASES {
            0 => {
                let (lhs, rhs) = op.check_lemma_boundary(r)?;
                InequalityCase { kind: InequalityKind::Boundary, index, lhs, rhs }
            }
            1 => {
                let (lhs, rhs) = op.check_poincare(r);
                InequalityCase { kind: InequalityKind::Poincare, index, lhs, rhs }
            }
            _ => {
                let f = near_equilibrium_density(&op, r);
                let dh = hellinger(&f, &f_inf)?;
                InequalityCase {
                    kind: InequalityKind::JohnsonBarron,
                    index,
                    lhs: dh * dh,
                    rhs: fisher(&f, &f_inf)?,
                }
            }
        };
        cases.push(case);
    }
    Ok(cases)
}

fn inequality_suite(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let cases = inequality_suite_run(cfg)?;
    let mut w = CsvWriter::create(&out.join("inequalities.csv"), "kind,case,lhs,rhs,ratio")?;
    for c in &cases {
        w.row(&[
            c.kind.name().to_string(),
            c.index.to_string(),
            num(c.lhs),
            num(c.rhs),
            num(c.lhs / c.rhs),
        ])?;
    }
    let mut summary = serde_json::Map::new();
    for kind in [
        InequalityKind::Boundary,
        InequalityKind::Poincare,
        InequalityKind::JohnsonBarron,
    ] {
        let of_kind: Vec<&InequalityCase> = cases.iter().filter(|c| c.kind == kind).collect();
        summary.insert(
            kind.name().to_string(),
            json!({
                "cases": of_kind.len(),
                "violations": of_kind.iter().filter(|c| c.violated(INEQUALITY_SLACK)).count(),
                "max_ratio": of_kind.iter().map(|c| c.lhs / c.rhs).fold(0.0, f64::max),
            }),
        );
    }
    Ok((vec![w.finish()?], Value::Object(summary)))
}

// ---------------------------------------------------------------------------
// moment-odes

/// Finite-difference moment rates of one solver next to the closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRates {
    pub solver: &'static str,
    pub t: f64,
    pub dm2_fd: f64,
    pub dm2_formula: f64,
    pub dm3_fd: f64,
    pub dm3_formula: f64,
}

impl MomentRates {
    pub fn relative_errors(&self) -> (f64, f64) {
        (
            (self.dm2_fd - self.dm2_formula).abs() / self.dm2_formula.abs(),
            (self.dm3_fd - self.dm3_formula).abs() / self.dm3_formula.abs(),
        )
    }
}

pub fn moment_odes_run(cfg: &Config) -> Result<Vec<MomentRates>> {
    let params = grid_params(cfg, 1.0, 40.0, 4000)?;
    let f0 = gamma_initial(&params);
    let t_end = cfg.t_end.unwrap_or(0.004);
    let sample_dt = cfg.sample_dt.unwrap_or(1e-3);
    let mut out = Vec::new();

    let fp_opts = SolveOptions {
        dt: cfg.dt.unwrap_or(fokker_planck::default_dt(&params)),
        t_end,
        sample_dt,
        snapshot_times: vec![],
    };
    let fp = fokker_planck::solve(&f0, &fp_opts)?;
    for s in moment_ode_check(&fp.rows, params.lambda)?.samples {
        out.push(MomentRates {
            solver: "fokker-planck",
            t: s.t,
            dm2_fd: s.dm2_fd,
            dm2_formula: s.dm2_formula,
            dm3_fd: s.dm3_fd,
            dm3_formula: s.dm3_formula,
        });
    }

    let eps = cfg.epsilon.unwrap_or(0.2);
    let fp_schedule = crate::timeline::Schedule::new(t_end, sample_dt, &[])?;
    let eps_opts = EpsilonOptions {
        eps,
        scaled: false,
        t_end,
        dt: cfg.dt,
        sample_dt,
        snapshot_times: fp_schedule.times().to_vec(),
    };
    let run = epsilon::run(&f0, &eps_opts)?;
    let rows: &[DiagnosticsRow] = &run.trajectory.rows;
    if rows.len() < 3 {
        return Err(Error::Domain(format!(
            "moment check needs at least 3 samples, got {}",
            rows.len()
        )));
    }
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let d2 = series_derivative(&t, &rows.iter().map(|r| r.m2).collect::<Vec<_>>());
    let d3 = series_derivative(&t, &rows.iter().map(|r| r.m3).collect::<Vec<_>>());
    for (k, snap) in run.trajectory.snapshots.iter().enumerate() {
        let (dm2, dm3) = moment_rates(&snap.f, eps, params.lambda)?;
        out.push(MomentRates {
            solver: "epsilon",
            t: snap.t,
            dm2_fd: d2[k],
            dm2_formula: dm2,
            dm3_fd: d3[k],
            dm3_formula: dm3,
        });
    }
    Ok(out)
}

fn moment_odes(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let rates = moment_odes_run(cfg)?;
    let mut w = CsvWriter::create(
        &out.join("moment_odes.csv"),
        "solver,t,dm2_fd,dm2_formula,dm3_fd,dm3_formula",
    )?;
    for r in &rates {
        w.row(&[
            r.solver.to_string(),
            num(r.t),
            num(r.dm2_fd),
            num(r.dm2_formula),
            num(r.dm3_fd),
            num(r.dm3_formula),
        ])?;
    }
    let mut summary = serde_json::Map::new();
    for solver in ["fokker-planck", "epsilon"] {
        if let Some(r) = rates.iter().find(|r| r.solver == solver) {
            let (e2, e3) = r.relative_errors();
            summary.insert(
                solver.to_string(),
                json!({ "rel_err_dm2_t0": e2, "rel_err_dm3_t0": e3 }),
            );
        }
    }
    Ok((vec![w.finish()?], Value::Object(summary)))
}

// ---------------------------------------------------------------------------
// meanfield-entropy

#[derive(Debug, Clone)]
pub struct MeanfieldEntropy {
    pub mu: f64,
    pub equilibrium: Pmf,
    pub trajectory: OdeTrajectory,
    /// Relative entropy to the equilibrium at every sample.
    pub entropy: Vec<f64>,
}

impl MeanfieldEntropy {
    pub fn max_mass_drift(&self) -> f64 {
        self.trajectory
            .states
            .iter()
            .map(|s| (s.pmf.total() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_mean_drift(&self) -> f64 {
        self.trajectory
            .states
            .iter()
            .map(|s| (s.pmf.mean() - self.mu).abs())
            .fold(0.0, f64::max)
    }

    /// Sample indices where the entropy grows by more than `tol`.
    pub fn entropy_increases(&self, tol: f64) -> Vec<usize> {
        self.entropy
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] + tol)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn final_l1(&self) -> f64 {
        self.trajectory.last().pmf.l1(&self.equilibrium)
    }
}

pub fn meanfield_entropy_run(cfg: &Config) -> Result<MeanfieldEntropy> {
    let mu = cfg.mu.unwrap_or(5.0);
    let start = whole_units(mu)?;
    let n_max = cfg.n_max.unwrap_or(default_n_max(mu));
    let p0 = Pmf::delta(start, n_max)?;
    let equilibrium = geometric_equilibrium(mu, n_max)?;
    let trajectory = meanfield::integrate(
        &p0,
        cfg.t_end.unwrap_or(100.0),
        cfg.dt.unwrap_or(meanfield::DEFAULT_DT),
        cfg.sample_dt.unwrap_or(0.5),
    )?;
    let entropy = trajectory
        .states
        .iter()
        .map(|s| entropy_pmf(&s.pmf, &equilibrium))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanfieldEntropy {
        mu,
        equilibrium,
        trajectory,
        entropy,
    })
}

fn meanfield_entropy(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let run = meanfield_entropy_run(cfg)?;
    let mut w = CsvWriter::create(&out.join("meanfield.csv"), "t,mass,mean,r,entropy,l1")?;
    for (s, h) in run.trajectory.states.iter().zip(&run.entropy) {
        w.numbers(&[
            s.t,
            s.pmf.total(),
            s.pmf.mean(),
            s.r,
            *h,
            s.pmf.l1(&run.equilibrium),
        ])?;
    }
    let summary = json!({
        "max_mass_drift": run.max_mass_drift(),
        "max_mean_drift": run.max_mean_drift(),
        "entropy_increases": run.entropy_increases(1e-12).len(),
        "final_l1": run.final_l1(),
        "leaked": run.trajectory.leaked,
        "clipped": run.trajectory.clipped,
    });
    Ok((vec![w.finish()?], summary))
}

// ---------------------------------------------------------------------------
// agent-equilibrium

/// One sample of the agent simulation against the mean-field solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSample {
    pub t: f64,
    pub l1_meanfield: f64,
    pub l1_geometric: f64,
    pub rich_fraction: f64,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct AgentEquilibrium {
    pub samples: Vec<AgentSample>,
    pub empirical: Pmf,
    pub meanfield: Pmf,
    pub geometric: Pmf,
    /// Kinetic-quantum variant: histogram against the exponential state.
    pub quantum: Option<QuantumAgents>,
}

#[derive(Debug, Clone)]
pub struct QuantumAgents {
    pub eps: f64,
    pub density: GridFunction,
    pub equilibrium: GridFunction,
    pub l1: f64,
}

/// Histogram bin for the quantum variant: the smallest multiple of `eps`
/// not below `0.2 mu`, so every bin covers the same number of lattice points.
pub fn quantum_bin(eps: f64, mu: f64) -> f64 {
    eps * (0.2 * mu / eps - 1e-9).ceil().max(1.0)
}

pub fn agent_equilibrium_run(cfg: &Config) -> Result<AgentEquilibrium> {
    let mu = cfg.mu.unwrap_or(5.0);
    whole_units(mu)?;
    let lambda = cfg.lambda.unwrap_or(DEFAULT_LAMBDA);
    let n_agents = cfg.n_agents.unwrap_or(10_000);
    let t_end = cfg.t_end.unwrap_or(200.0);
    let sample_dt = cfg.sample_dt.unwrap_or(t_end / 20.0);
    let n_max = cfg.n_max.unwrap_or(default_n_max(mu));
    let seed = seed(cfg);

    let mut ensemble = init_ensemble(n_agents, mu, InitMode::Equal, seed)?;
    let p0 = empirical_pmf(&ensemble)?;
    let p0 = Pmf::new({
        let mut v = p0.probs().to_vec();
        v.resize(n_max + 1, 0.0);
        v
    })?;
    // Mean-field time runs at the per-agent rate lambda / 2 of the simulation.
    let time_scale = 0.5 * lambda;
    let ode = meanfield::integrate(
        &p0,
        time_scale * t_end,
        meanfield::DEFAULT_DT,
        time_scale * sample_dt,
    )?;
    let geometric = geometric_equilibrium(mu, n_max)?;
    let mut rng = seeded_rng(seed, 1);
    let mut samples = Vec::with_capacity(ode.states.len());
    let mut empirical = p0.clone();
    for state in &ode.states {
        let t = state.t / time_scale;
        let events = advance_to(&mut ensemble, t, lambda, Exchange::Unit, &mut rng);
        empirical = empirical_pmf(&ensemble)?;
        samples.push(AgentSample {
            t,
            l1_meanfield: empirical.l1(&state.pmf),
            l1_geometric: empirical.l1(&geometric),
            rich_fraction: ensemble.rich_fraction(1.0),
            events,
        });
    }

    let quantum = match cfg.epsilon {
        None => None,
        Some(eps) => {
            let bin = quantum_bin(eps, mu);
            let cells = (40.0 * mu / bin).ceil() as usize;
            let params = ModelParams::new(mu, lambda, eps, bin * cells as f64, cells)?;
            let mut e = init_ensemble_epsilon(n_agents, mu, eps, InitMode::Equal, seed)?;
            let mut rng = seeded_rng(seed, 2);
            advance_to(&mut e, t_end, lambda / (eps * eps), Exchange::Quantum(eps), &mut rng);
            let density = empirical_density(&e, &params);
            let equilibrium = boltzmann_gibbs(&params);
            let l1 = l1(&density, &equilibrium)?;
            Some(QuantumAgents {
                eps,
                density,
                equilibrium,
                l1,
            })
        }
    };

    Ok(AgentEquilibrium {
        samples,
        empirical,
        meanfield: ode.last().pmf.clone(),
        geometric,
        quantum,
    })
}

fn agent_equilibrium(cfg: &Config, out: &Path) -> Result<(Vec<PathBuf>, Value)> {
    let run = agent_equilibrium_run(cfg)?;
    let mut files = Vec::new();
    let mut w = CsvWriter::create(
        &out.join("agent_timeseries.csv"),
        "t,l1_meanfield,l1_geometric,rich_fraction,events",
    )?;
    for s in &run.samples {
        w.row(&[
            num(s.t),
            num(s.l1_meanfield),
            num(s.l1_geometric),
            num(s.rich_fraction),
            s.events.to_string(),
        ])?;
    }
    files.push(w.finish()?);
    let mut w = CsvWriter::create(&out.join("agent_pmf.csv"), "n,empirical,meanfield,geometric")?;
    let len = run
        .empirical
        .probs()
        .len()
        .max(run.meanfield.probs().len());
    let at = |p: &Pmf, n: usize| p.probs().get(n).copied().unwrap_or(0.0);
    for n in 0..len {
        w.row(&[
            n.to_string(),
            num(at(&run.empirical, n)),
            num(at(&run.meanfield, n)),
            num(at(&run.geometric, n)),
        ])?;
    }
    files.push(w.finish()?);
    let last = run.samples.last().expect("at least one sample");
    let mut summary = json!({
        "final_l1_meanfield": last.l1_meanfield,
        "final_l1_geometric": last.l1_geometric,
        "final_rich_fraction": last.rich_fraction,
    });
    if let Some(q) = &run.quantum {
        let mut w = CsvWriter::create(&out.join("agent_density.csv"), "v,empirical,equilibrium")?;
        for (j, (a, b)) in q.density.values().iter().zip(q.equilibrium.values()).enumerate() {
            w.numbers(&[q.density.params().center(j), *a, *b])?;
        }
        files.push(w.finish()?);
        summary["quantum"] = json!({
            "eps": q.eps,
            "bin": q.density.h(),
            "l1_exponential": q.l1,
        });
    }
    Ok((files, summary))
}

// ---------------------------------------------------------------------------

/// Files written and summary of a completed run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    pub wall_time_s: f64,
}

/// Runs the configured experiment and writes its CSV files plus
/// `manifest.json` into the output directory.
pub fn run_experiment(cfg: &Config) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    log::info!("running {} into {}", cfg.experiment, out.display());
    let (mut files, summary) = match cfg.experiment {
        Experiment::AgentEquilibrium => agent_equilibrium(cfg, &out)?,
        Experiment::MeanfieldEntropy => meanfield_entropy(cfg, &out)?,
        Experiment::EntropyDecay => entropy_decay(cfg, &out)?,
        Experiment::QuasiInvariant => quasi_invariant(cfg, &out)?,
        Experiment::LinearDecay => linear_decay(cfg, &out)?,
        Experiment::InequalitySuite => inequality_suite(cfg, &out)?,
        Experiment::MomentOdes => moment_odes(cfg, &out)?,
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        config: cfg.clone(),
        seed: seed(cfg),
        git_describe: git_describe(),
        wall_time_s,
        threads: rayon::current_num_threads(),
        outputs: files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect(),
        summary: summary.clone(),
    };
    files.push(manifest.write(&out.join("manifest.json"))?);
    Ok(RunReport {
        out_dir: out,
        files,
        summary,
        wall_time_s,
    })
}
