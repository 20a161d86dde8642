//! Flat JSON run configuration.
//!
//! Every key is optional except `experiment`; missing keys take
//! experiment-specific defaults. Unknown keys and values of the wrong type
//! are reported with the offending key.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    AgentEquilibrium,
    MeanfieldEntropy,
    EntropyDecay,
    QuasiInvariant,
    LinearDecay,
    InequalitySuite,
    MomentOdes,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::AgentEquilibrium,
        Experiment::MeanfieldEntropy,
        Experiment::EntropyDecay,
        Experiment::QuasiInvariant,
        Experiment::LinearDecay,
        Experiment::InequalitySuite,
        Experiment::MomentOdes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::AgentEquilibrium => "agent-equilibrium",
            Experiment::MeanfieldEntropy => "meanfield-entropy",
            Experiment::EntropyDecay => "entropy-decay",
            Experiment::QuasiInvariant => "quasi-invariant",
            Experiment::LinearDecay => "linear-decay",
            Experiment::InequalitySuite => "inequality-suite",
            Experiment::MomentOdes => "moment-odes",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Experiment::AgentEquilibrium => {
                "agent simulation against the geometric and exponential equilibria"
            }
            Experiment::MeanfieldEntropy => "mean-field ODE conservation and entropy decay",
            Experiment::EntropyDecay => "Fokker-Planck run from the Gamma-type datum",
            Experiment::QuasiInvariant => "d2 distance between kinetic and Fokker-Planck solutions per epsilon",
            Experiment::LinearDecay => "linearized energy against the exp(-t/(6 mu^2)) envelope",
            Experiment::InequalitySuite => "randomized boundary, Poincare and Johnson-Barron checks",
            Experiment::MomentOdes => "finite-difference moment rates against their closed forms",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config {
                key: "experiment".into(),
                reason: format!("unknown experiment `{s}`"),
            })
    }
}

/// Parsed configuration. `None` means "use the experiment default".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub experiment: Experiment,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilon_list: Option<Vec<f64>>,
    pub v_max: Option<f64>,
    pub n_cells: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Spacing of diagnostics rows.
    pub sample_dt: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub n_agents: Option<usize>,
    pub n_max: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub const KEYS: [&str; 15] = [
    "experiment",
    "mu",
    "lambda",
    "epsilon",
    "epsilon_list",
    "v_max",
    "n_cells",
    "dt",
    "t_end",
    "sample_dt",
    "snapshot_times",
    "n_agents",
    "n_max",
    "seed",
    "out_dir",
];

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn take<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str) -> Result<Option<T>> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| config_err(key, e.to_string())),
    }
}

impl Config {
    /// A configuration with every optional key unset.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            mu: None,
            lambda: None,
            epsilon: None,
            epsilon_list: None,
            v_max: None,
            n_cells: None,
            dt: None,
            t_end: None,
            sample_dt: None,
            snapshot_times: None,
            n_agents: None,
            n_max: None,
            seed: None,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| config_err("<document>", e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(config_err("<document>", "expected a JSON object"));
        };
        if let Some(key) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(config_err(key, "unknown key"));
        }
        let name: String =
            take(&mut map, "experiment")?.ok_or_else(|| config_err("experiment", "missing"))?;
        let cfg = Self {
            experiment: name.parse()?,
            mu: take(&mut map, "mu")?,
            lambda: take(&mut map, "lambda")?,
            epsilon: take(&mut map, "epsilon")?,
            epsilon_list: take(&mut map, "epsilon_list")?,
            v_max: take(&mut map, "v_max")?,
            n_cells: take(&mut map, "n_cells")?,
            dt: take(&mut map, "dt")?,
            t_end: take(&mut map, "t_end")?,
            sample_dt: take(&mut map, "sample_dt")?,
            snapshot_times: take(&mut map, "snapshot_times")?,
            n_agents: take(&mut map, "n_agents")?,
            n_max: take(&mut map, "n_max")?,
            seed: take(&mut map, "seed")?,
            out_dir: take(&mut map, "out_dir")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the values that can be judged without running anything.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => {
                Err(config_err(key, format!("must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("mu", self.mu)?;
        positive("lambda", self.lambda)?;
        positive("epsilon", self.epsilon)?;
        positive("v_max", self.v_max)?;
        positive("dt", self.dt)?;
        positive("sample_dt", self.sample_dt)?;
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t >= 0.0) {
                return Err(config_err("t_end", format!("must be non-negative, got {t}")));
            }
        }
        if self.epsilon.is_some() && self.epsilon_list.is_some() {
            return Err(config_err(
                "epsilon_list",
                "give either `epsilon` or `epsilon_list`, not both",
            ));
        }
        if let Some(list) = &self.epsilon_list {
            if list.is_empty() {
                return Err(config_err("epsilon_list", "must not be empty"));
            }
            if let Some(x) = list.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(config_err("epsilon_list", format!("entry {x} is not positive")));
            }
        }
        if let Some(n) = self.n_cells {
            if n < crate::model::ModelParams::MIN_CELLS {
                return Err(config_err("n_cells", format!("need at least 16 cells, got {n}")));
            }
        }
        if let Some(n) = self.n_agents {
            if n < 2 {
                return Err(config_err("n_agents", format!("need at least two agents, got {n}")));
            }
        }
        if let Some(n) = self.n_max {
            if n < 1 {
                return Err(config_err("n_max", "must be at least 1"));
            }
        }
        if let Some(times) = &self.snapshot_times {
            if let Some(x) = times.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(config_err("snapshot_times", format!("entry {x} is negative")));
            }
        }
        Ok(())
    }

    /// `epsilon_list`, or the single `epsilon`, or `default`.
    pub fn epsilons(&self, default: &[f64]) -> Vec<f64> {
        match (&self.epsilon_list, self.epsilon) {
            (Some(list), _) => list.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => default.to_vec(),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(self.experiment.name()))
    }
}
