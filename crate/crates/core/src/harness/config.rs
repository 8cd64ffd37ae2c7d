//! Line-oriented `key = value` experiment configuration.
//!
//! ```text
//! # comments run to end of line
//! kernel.family = matern
//! kernel.nu = 0.5
//! env.grid_per_dim = 32
//! agent.c_beta = 0.1
//! experiment.agents = pi-krvi, kovi, random
//! experiment.seeds = 1, 2, 3
//! ```
//!
//! Every key is optional and falls back to the standard environment. Unknown
//! keys, duplicates and unparsable values are errors naming the offending key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::{AgentConfig, BetaMode};
use crate::envs::{InitialStates, SynthParams};
use crate::error::{Error, Result};
use crate::kernels::{EigendecayProfile, KernelSpec};
use crate::theory::BoundConstants;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelConfig {
    Matern { nu: f64, lengthscale: f64 },
    SquaredExponential { lengthscale: f64 },
    FiniteSpectrum { profile: EigendecayProfile, num_features: usize, seed: u64 },
}

impl KernelConfig {
    pub fn build(&self, dimension: usize) -> Result<KernelSpec> {
        let spec = match *self {
            KernelConfig::Matern { nu, lengthscale } => KernelSpec::matern(nu, lengthscale, dimension),
            KernelConfig::SquaredExponential { lengthscale } => {
                KernelSpec::squared_exponential(lengthscale, dimension)
            }
            KernelConfig::FiniteSpectrum { profile, num_features, seed } => {
                KernelSpec::finite_spectrum(profile, num_features, seed, dimension)
            }
        };
        spec.map_err(|e| Error::config("kernel", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    PiKrvi,
    Kovi,
    Random,
    Oracle,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::PiKrvi => "pi-krvi",
            AgentKind::Kovi => "kovi",
            AgentKind::Random => "random",
            AgentKind::Oracle => "oracle",
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pi-krvi" => Ok(AgentKind::PiKrvi),
            "kovi" => Ok(AgentKind::Kovi),
            "random" => Ok(AgentKind::Random),
            "oracle" => Ok(AgentKind::Oracle),
            other => Err(format!("unknown agent `{other}` (pi-krvi, kovi, random, oracle)")),
        }
    }
}

/// Parameters of the Monte-Carlo confidence check.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageConfig {
    /// Observations per trial.
    pub design_size: usize,
    /// Query grid points per axis.
    pub grid_per_dim: usize,
    /// Half-width of the uniform observation noise.
    pub noise: f64,
    pub target_norm: f64,
    pub num_centers: usize,
    /// Slack added to the confidence width.
    pub eps: f64,
    /// Overrides the theoretical width multiplier.
    pub beta: Option<f64>,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            design_size: 50,
            grid_per_dim: 20,
            noise: 0.5,
            target_norm: 1.0,
            num_centers: 5,
            eps: 0.0,
            beta: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    pub env: SynthParams,
    pub initial_states: InitialStates,
    pub agent: AgentConfig,
    pub agents: Vec<AgentKind>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub checks: Vec<String>,
    pub burn_in: f64,
    pub coverage: CoverageConfig,
}

impl Default for ExperimentConfig {
    /// The standard environment.
    fn default() -> Self {
        ExperimentConfig {
            kernel: KernelConfig::Matern {
                nu: 0.5,
                lengthscale: 0.5,
            },
            env: SynthParams {
                d_s: 1,
                d_a: 1,
                grid_per_dim: 32,
                num_actions: 8,
                horizon: 3,
                num_centers: 8,
                seed: 0,
            },
            initial_states: InitialStates::Cycle,
            agent: AgentConfig {
                lambda: 0.3,
                beta_mode: BetaMode::FixedConstant(0.3),
                ..AgentConfig::default()
            },
            agents: vec![AgentKind::PiKrvi, AgentKind::Kovi, AgentKind::Random],
            episodes: 5000,
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            checks: Vec::new(),
            burn_in: 0.2,
            coverage: CoverageConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
        }
        let mut e = Entries(entries);
        let mut cfg = ExperimentConfig::default();

        let family = e.take("kernel.family")?.unwrap_or_else(|| "matern".into());
        let lengthscale = e.parse("kernel.lengthscale")?.unwrap_or(0.5);
        cfg.kernel = match family.as_str() {
            "matern" => KernelConfig::Matern {
                nu: e.parse("kernel.nu")?.unwrap_or(0.5),
                lengthscale,
            },
            "squared_exponential" | "se" => KernelConfig::SquaredExponential { lengthscale },
            "finite_spectrum" => {
                let profile = EigendecayProfile::new(
                    e.parse("kernel.p")?.unwrap_or(6.0),
                    e.parse("kernel.alpha")?.unwrap_or(5.0),
                    e.parse("kernel.eta")?.unwrap_or(0.0),
                    e.parse("kernel.c_p")?.unwrap_or(1.0),
                )
                .map_err(|err| Error::config("kernel.p", err.to_string()))?;
                KernelConfig::FiniteSpectrum {
                    profile,
                    num_features: e.parse("kernel.num_features")?.unwrap_or(16),
                    seed: e.parse("kernel.seed")?.unwrap_or(0),
                }
            }
            other => {
                return Err(Error::config(
                    "kernel.family",
                    format!("unknown family `{other}` (matern, squared_exponential, finite_spectrum)"),
                ))
            }
        };

        let env = &mut cfg.env;
        e.set(&mut env.d_s, "env.d_s")?;
        e.set(&mut env.d_a, "env.d_a")?;
        e.set(&mut env.grid_per_dim, "env.grid_per_dim")?;
        e.set(&mut env.num_actions, "env.num_actions")?;
        e.set(&mut env.horizon, "env.horizon")?;
        e.set(&mut env.num_centers, "env.num_centers")?;
        e.set(&mut env.seed, "env.seed")?;
        if let Some(mode) = e.take("env.initial_state")? {
            cfg.initial_states = match mode.as_str() {
                "cycle" => InitialStates::Cycle,
                "adversarial" => InitialStates::Adversarial,
                other => match other.strip_prefix("fixed:").map(str::parse) {
                    Some(Ok(s)) => InitialStates::Fixed(s),
                    _ => {
                        return Err(Error::config(
                            "env.initial_state",
                            format!("expected cycle, adversarial or fixed:<index>, got `{other}`"),
                        ))
                    }
                },
            };
        }

        let agent = &mut cfg.agent;
        e.set(&mut agent.lambda, "agent.lambda")?;
        e.set(&mut agent.delta, "agent.delta")?;
        agent.alpha_override = e.parse("agent.alpha")?;
        let default_c = match agent.beta_mode {
            BetaMode::FixedConstant(c) => c,
            BetaMode::TheoryFixedPoint => 1.0,
        };
        let c_beta = e.parse("agent.c_beta")?.unwrap_or(default_c);
        agent.beta_mode = match e.take("agent.beta")?.as_deref() {
            None | Some("fixed") => BetaMode::FixedConstant(c_beta),
            Some("theory") => BetaMode::TheoryFixedPoint,
            Some(other) => {
                return Err(Error::config(
                    "agent.beta",
                    format!("expected fixed or theory, got `{other}`"),
                ))
            }
        };
        let mut constants = BoundConstants::default();
        for (field, key) in [
            (&mut constants.c2, "theory.c2"),
            (&mut constants.c3, "theory.c3"),
            (&mut constants.c4, "theory.c4"),
            (&mut constants.c5, "theory.c5"),
            (&mut constants.c6, "theory.c6"),
            (&mut constants.regret, "theory.c_regret"),
        ] {
            e.set(field, key)?;
        }
        agent.constants = constants;

        if let Some(list) = e.list::<AgentKind>("experiment.agents")? {
            cfg.agents = list;
        }
        e.set(&mut cfg.episodes, "experiment.episodes")?;
        if let Some(list) = e.list::<u64>("experiment.seeds")? {
            cfg.seeds = list;
        }
        if let Some(dir) = e.take("experiment.output_dir")? {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(list) = e.list::<String>("experiment.checks")? {
            cfg.checks = list;
        }
        e.set(&mut cfg.burn_in, "experiment.burn_in")?;

        let cov = &mut cfg.coverage;
        e.set(&mut cov.design_size, "coverage.design_size")?;
        e.set(&mut cov.grid_per_dim, "coverage.grid_per_dim")?;
        e.set(&mut cov.noise, "coverage.noise")?;
        e.set(&mut cov.target_norm, "coverage.target_norm")?;
        e.set(&mut cov.num_centers, "coverage.num_centers")?;
        e.set(&mut cov.eps, "coverage.eps")?;
        e.set(&mut cov.seed, "coverage.seed")?;
        cov.beta = e.parse("coverage.beta")?;

        if let Some(key) = e.0.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every precondition; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.episodes == 0 {
            return Err(Error::config("experiment.episodes", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("experiment.seeds", "must list at least one seed"));
        }
        if self.agents.is_empty() {
            return Err(Error::config("experiment.agents", "must list at least one agent"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::config("experiment.burn_in", "must lie in [0, 1)"));
        }
        let spec = self.kernel_spec()?;
        let state_count = self.env.grid_per_dim.checked_pow(self.env.d_s as u32);
        if let (InitialStates::Fixed(s), Some(n)) = (self.initial_states, state_count) {
            if s >= n {
                return Err(Error::config(
                    "env.initial_state",
                    format!("state {s} out of range for {n} states"),
                ));
            }
        }
        if self.agents.contains(&AgentKind::PiKrvi) && self.agent.alpha_override.is_none() {
            spec.eigendecay_profile(1.0).map_err(|_| {
                Error::config("agent.alpha", "kernel has no polynomial eigendecay; set agent.alpha")
            })?;
        }
        let cov = &self.coverage;
        if cov.design_size == 0 || cov.grid_per_dim < 2 || cov.num_centers == 0 {
            return Err(Error::config(
                "coverage.design_size",
                "design size and centers must be >= 1, grid >= 2",
            ));
        }
        if !(cov.noise >= 0.0) || !(cov.target_norm > 0.0) || !(cov.eps >= 0.0) {
            return Err(Error::config("coverage.noise", "noise and eps must be >= 0, norm > 0"));
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        if self.env.d_s == 0 || self.env.d_a == 0 {
            return Err(Error::config("env.d_s", "state and action dimensions must be >= 1"));
        }
        self.kernel.build(self.env.d_s + self.env.d_a)
    }
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn take(&mut self, key: &str) -> Result<Option<String>> {
        Ok(self.0.remove(key))
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .remove(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    fn set<T: FromStr>(&mut self, target: &mut T, key: &str) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse(key)? {
            *target = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .remove(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|item| !item.is_empty())
                    .map(|item| {
                        item.parse::<T>()
                            .map_err(|e| Error::config(key, format!("cannot parse `{item}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}
