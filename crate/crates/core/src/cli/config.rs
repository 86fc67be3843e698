use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid_bvp::{DEFAULT_NODES, MIN_NODES};
use crate::params::{named_set, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Steady,
    Modes,
    MuSweep,
    Gap,
    Distinctness,
    LemmaSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Steady => "steady",
            ExperimentKind::Modes => "modes",
            ExperimentKind::MuSweep => "mu_sweep",
            ExperimentKind::Gap => "gap",
            ExperimentKind::Distinctness => "distinctness",
            ExperimentKind::LemmaSuite => "lemma_suite",
        }
    }
}

/// Optional `g_n(mu)` sampling for `mu_sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Raw TOML form. Exactly one of `parameter_set` and `parameters` is given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: ExperimentKind,
    parameter_set: Option<String>,
    parameters: Option<Parameters>,
    mu: Option<f64>,
    epsilons: Option<Vec<f64>>,
    #[serde(default)]
    modes: Vec<u32>,
    grid: Option<Vec<usize>>,
    out: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    mu_range: Option<MuRange>,
    trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Name of the built-in set, or `"inline"`.
    pub set_name: String,
    pub params: Parameters,
    pub epsilons: Vec<f64>,
    pub modes: Vec<u32>,
    pub grid: Vec<usize>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub mu_range: Option<MuRange>,
    /// Random forcings drawn by the lemma suite.
    pub trials: usize,
}

fn default_modes(kind: ExperimentKind) -> Vec<u32> {
    match kind {
        ExperimentKind::Modes => vec![0, 1],
        ExperimentKind::Distinctness => vec![0, 1, 2, 3, 4],
        _ => vec![2, 3, 4],
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let (set_name, mut params) = match (raw.parameter_set, raw.parameters) {
            (Some(name), None) => {
                let p = named_set(&name)?;
                (name, p)
            }
            (None, Some(p)) => ("inline".to_string(), p),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either parameter_set or [parameters], not both".into()))
            }
            (None, None) => return Err(Error::Config("missing parameter_set or [parameters]".into())),
        };
        if let Some(mu) = raw.mu {
            params.mu = mu;
        }
        let epsilons = raw.epsilons.unwrap_or_else(|| vec![params.epsilon]);
        let cfg = ExperimentConfig {
            kind: raw.kind,
            set_name,
            params,
            epsilons,
            modes: if raw.modes.is_empty() { default_modes(raw.kind) } else { raw.modes },
            grid: raw.grid.unwrap_or_else(|| vec![DEFAULT_NODES]),
            out: raw.out,
            seed: raw.seed,
            mu_range: raw.mu_range,
            trials: raw.trials.unwrap_or(1000),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epsilons.is_empty() {
            return bad("epsilon ladder is empty".into());
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(format!("epsilon ladder {:?} is not strictly decreasing", self.epsilons));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 0.25)) {
            return bad(format!("epsilon {e} outside (0, 1/4)"));
        }
        if self.kind == ExperimentKind::Gap && self.epsilons.len() < 2 {
            return bad("gap study needs at least two epsilons".into());
        }
        if self.grid.is_empty() {
            return bad("grid list is empty".into());
        }
        if let Some(n) = self.grid.iter().find(|n| **n < MIN_NODES || **n % 2 == 0) {
            return bad(format!("grid size {n} must be odd and at least {MIN_NODES}"));
        }
        if let Some(r) = self.mu_range {
            if !(r.min < r.max) || r.points < 2 {
                return bad(format!("mu_range needs min < max and at least 2 points, got {r:?}"));
            }
        }
        if self.kind == ExperimentKind::LemmaSuite && self.trials == 0 {
            return bad("trials must be positive".into());
        }
        Ok(())
    }

    /// Applies the command-line overrides.
    pub fn with_overrides(mut self, out: Option<PathBuf>, grid: Option<usize>, seed: Option<u64>) -> Result<Self> {
        if out.is_some() {
            self.out = out;
        }
        if let Some(n) = grid {
            self.grid = vec![n];
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        self.check()?;
        Ok(self)
    }

    /// The primary grid size.
    pub fn nodes(&self) -> usize {
        self.grid[0]
    }
}
