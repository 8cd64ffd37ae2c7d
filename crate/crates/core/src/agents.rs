//! Optimistic kernel ridge value iteration agents.
//!
//! Each episode the agent refreshes, backward in `h`, the regression targets
//! `r_h(z) + V_{h+1}(s')` of every stored transition against the current
//! value estimate, then acts greedily with respect to
//!
//! ```text
//! Q_h(z) = min(mu_h(z) + beta b_h(z), H - h)        (h = 0..H-1)
//! V_h(s) = max(0, max_a Q_h(s, a)),  V_H = 0
//! ```
//!
//! With partitioning enabled, `mu_h` and `b_h` come from the cover element
//! containing `z`; otherwise from one global regressor per step.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{argmax, EpisodicMdp};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Point};
use crate::partition::{CoverStats, CoverTree};
use crate::regression::{Prediction, Probe, RegressorState};
use crate::theory::{self, BoundConstants, BoundParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaMode {
    /// `c_beta H sqrt(log(T H / delta))`.
    FixedConstant(f64),
    /// Largest confidence-width fixed point over the cover elements the
    /// splitting rule can produce.
    TheoryFixedPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub lambda: f64,
    pub beta_mode: BetaMode,
    pub delta: f64,
    /// Splitting exponent; defaults to the kernel's eigendecay `alpha`.
    pub alpha_override: Option<f64>,
    /// `false` gives the global-regressor baseline.
    pub partition_enabled: bool,
    pub constants: BoundConstants,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            lambda: 1.0,
            beta_mode: BetaMode::FixedConstant(1.0),
            delta: 0.1,
            alpha_override: None,
            partition_enabled: true,
            constants: BoundConstants::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("agent.lambda", format!("must be positive, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("agent.delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if let BetaMode::FixedConstant(c) = self.beta_mode {
            if !(c > 0.0) {
                return Err(Error::config("agent.c_beta", format!("must be positive, got {c}")));
            }
        }
        if let Some(alpha) = self.alpha_override {
            if !(alpha > 0.0) {
                return Err(Error::config("agent.alpha", format!("must be positive, got {alpha}")));
            }
        }
        Ok(())
    }
}

/// Bound parameters for a kernel on the unit cube.
pub fn bound_params(
    config: &AgentConfig,
    spec: &KernelSpec,
    horizon: usize,
    episodes: usize,
) -> Result<BoundParams> {
    let profile = spec.eigendecay_profile(1.0)?;
    let matern_nu = match spec.family {
        crate::kernels::KernelFamily::Matern { nu, .. } => Some(nu),
        _ => None,
    };
    Ok(BoundParams {
        profile,
        lambda: config.lambda,
        c1: 1.0,
        rho: 1.0,
        horizon,
        episodes,
        delta: config.delta,
        dimension: spec.dimension,
        matern_nu,
        constants: config.constants,
    })
}

/// The confidence-width multiplier `beta_T(delta)`.
pub fn beta(config: &AgentConfig, spec: &KernelSpec, horizon: usize, episodes: usize) -> Result<f64> {
    if episodes == 0 || horizon == 0 {
        return Err(Error::InvalidInput("horizon and episodes must be >= 1".into()));
    }
    config.validate()?;
    match config.beta_mode {
        BetaMode::FixedConstant(c) => Ok(fixed_beta(c, horizon, episodes, config.delta)),
        BetaMode::TheoryFixedPoint => {
            let params = bound_params(config, spec, horizon, episodes)?;
            if !config.partition_enabled {
                return theory::solve_beta(&params, episodes, episodes, 1.0);
            }
            let alpha = config.alpha_override.unwrap_or(params.profile.alpha);
            // elements of side 2^-l hold fewer than 2^(l alpha) observations
            let mut best: f64 = 0.0;
            let mut depth = 0u32;
            loop {
                let rho = 0.5f64.powi(depth as i32);
                let capacity = (depth as f64 * alpha).exp2();
                let n = (capacity.floor() as usize).clamp(1, episodes);
                best = best.max(theory::solve_beta(&params, n, n, rho)?);
                if capacity >= episodes as f64 || depth >= crate::partition::MAX_DEPTH {
                    break;
                }
                depth += 1;
            }
            Ok(best)
        }
    }
}

/// `c H sqrt(log(max(T H / delta, e)))`.
pub fn fixed_beta(c_beta: f64, horizon: usize, episodes: usize, delta: f64) -> f64 {
    let arg = (episodes as f64 * horizon as f64 / delta).max(std::f64::consts::E);
    c_beta * horizon as f64 * arg.ln().sqrt()
}

/// Index of the first maximal Q value.
pub fn act(q_row: &[f64]) -> usize {
    argmax(q_row)
}

#[derive(Clone, Debug)]
enum ValueModel {
    Partitioned(CoverTree),
    Global(RegressorState),
}

impl ValueModel {
    fn record(&mut self, z: Point, y: f64) -> Result<()> {
        match self {
            ValueModel::Partitioned(tree) => tree.record(z, y).map(|_| ()),
            ValueModel::Global(reg) => reg.observe(z, y),
        }
    }

    fn refit(&mut self, targets: &[f64]) -> Result<()> {
        match self {
            ValueModel::Partitioned(tree) => tree.refit_targets(|id| targets[id]),
            ValueModel::Global(reg) => reg.set_targets(targets.to_vec()),
        }
    }

    fn regressor(&self, z: &Point) -> Result<&RegressorState> {
        match self {
            ValueModel::Partitioned(tree) => Ok(tree.locate(z)?.regressor()),
            ValueModel::Global(reg) => Ok(reg),
        }
    }

    fn predict(&self, z: &Point, probe: &mut Option<Probe>) -> Result<Prediction> {
        let reg = self.regressor(z)?;
        match probe {
            Some(p) => reg.sync_probe(p),
            None => *probe = Some(reg.probe(z)?),
        }
        reg.predict_probe(probe.as_ref().expect("probe set above"))
    }

    fn observation_count(&self) -> usize {
        match self {
            ValueModel::Partitioned(tree) => tree.observation_count(),
            ValueModel::Global(reg) => reg.len(),
        }
    }
}

/// One stored transition of step `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub z: Point,
    pub reward: f64,
    pub next_state: usize,
}

/// One executed step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    /// Q row at each visited state, as used for the action choice.
    pub q_rows: Vec<Vec<f64>>,
    pub realized_return: f64,
}

/// Lazily evaluated values of the current episode, `values[h][s]`.
#[derive(Clone, Debug)]
struct PlanCache {
    values: Vec<Vec<Option<f64>>>,
}

/// Optimistic value iteration with kernel ridge regression, partitioned or
/// global.
#[derive(Clone, Debug)]
pub struct KernelAgent {
    config: AgentConfig,
    beta: f64,
    horizon: usize,
    models: Vec<ValueModel>,
    history: Vec<Vec<Transition>>,
    episode: usize,
    probes: Vec<HashMap<(usize, usize), Probe>>,
    plan: Option<PlanCache>,
}

impl KernelAgent {
    /// An agent for `mdp` with `beta_T` computed for `episodes` episodes.
    pub fn new(
        spec: KernelSpec,
        mdp: &EpisodicMdp,
        config: AgentConfig,
        episodes: usize,
    ) -> Result<Self> {
        let beta = beta(&config, &spec, mdp.horizon(), episodes)?;
        Self::with_beta(spec, mdp, config, beta)
    }

    pub fn with_beta(spec: KernelSpec, mdp: &EpisodicMdp, config: AgentConfig, beta: f64) -> Result<Self> {
        config.validate()?;
        if spec.dimension != mdp.joint_dim() {
            return Err(Error::config(
                "kernel",
                format!(
                    "kernel dimension {} differs from state-action dimension {}",
                    spec.dimension,
                    mdp.joint_dim()
                ),
            ));
        }
        let spec = Arc::new(spec);
        let horizon = mdp.horizon();
        let alpha = match config.alpha_override {
            Some(a) => a,
            None if config.partition_enabled => spec.eigendecay_profile(1.0)?.alpha,
            None => 1.0,
        };
        let models = (0..horizon)
            .map(|_| {
                Ok(if config.partition_enabled {
                    ValueModel::Partitioned(CoverTree::new(
                        spec.dimension,
                        alpha,
                        Arc::clone(&spec),
                        config.lambda,
                    )?)
                } else {
                    ValueModel::Global(RegressorState::new(Arc::clone(&spec), config.lambda)?)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelAgent {
            config,
            beta,
            horizon,
            models,
            history: vec![Vec::new(); horizon],
            episode: 0,
            probes: vec![HashMap::new(); horizon],
            plan: None,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Completed episodes.
    pub fn episode_index(&self) -> usize {
        self.episode
    }

    pub fn history(&self, h: usize) -> &[Transition] {
        &self.history[h]
    }

    /// Per-step cover trees; `None` for the global baseline.
    pub fn tree(&self, h: usize) -> Option<&CoverTree> {
        match &self.models[h] {
            ValueModel::Partitioned(t) => Some(t),
            ValueModel::Global(_) => None,
        }
    }

    /// Per-step global regressor; `None` when partitioning.
    pub fn global_regressor(&self, h: usize) -> Option<&RegressorState> {
        match &self.models[h] {
            ValueModel::Global(r) => Some(r),
            ValueModel::Partitioned(_) => None,
        }
    }

    pub fn observation_count(&self, h: usize) -> usize {
        self.models[h].observation_count()
    }

    /// Refreshes all regression targets against the current value estimate,
    /// backward from the last step.
    pub fn plan_episode(&mut self, mdp: &EpisodicMdp) -> Result<()> {
        self.check_mdp(mdp)?;
        self.plan = Some(PlanCache {
            values: vec![vec![None; mdp.num_states()]; self.horizon + 1],
        });
        for h in (0..self.horizon).rev() {
            let mut targets = Vec::with_capacity(self.history[h].len());
            for i in 0..self.history[h].len() {
                let Transition { reward, next_state, .. } = self.history[h][i];
                targets.push(reward + self.value(mdp, h + 1, next_state)?);
            }
            self.models[h].refit(&targets)?;
        }
        Ok(())
    }

    fn check_mdp(&self, mdp: &EpisodicMdp) -> Result<()> {
        if mdp.horizon() != self.horizon {
            return Err(Error::InvalidInput(format!(
                "agent horizon {} differs from MDP horizon {}",
                self.horizon,
                mdp.horizon()
            )));
        }
        Ok(())
    }

    fn plan_mut(&mut self) -> Result<&mut PlanCache> {
        self.plan
            .as_mut()
            .ok_or_else(|| Error::InvalidInput("plan_episode must run before queries".into()))
    }

    /// `Q_h(s, a)` of the current plan.
    pub fn q_value(&mut self, mdp: &EpisodicMdp, h: usize, s: usize, a: usize) -> Result<f64> {
        self.plan_mut()?;
        let z = mdp.embed(s, a);
        let mut slot = self.probes[h].remove(&(s, a));
        let pred = self.models[h].predict(&z, &mut slot);
        if let Some(p) = slot {
            self.probes[h].insert((s, a), p);
        }
        let pred = pred?;
        let cap = (self.horizon - h) as f64;
        Ok((pred.mean + self.beta * pred.stddev).min(cap))
    }

    pub fn q_row(&mut self, mdp: &EpisodicMdp, h: usize, s: usize) -> Result<Vec<f64>> {
        (0..mdp.num_actions()).map(|a| self.q_value(mdp, h, s, a)).collect()
    }

    /// `V_h(s) = max(0, max_a Q_h(s, a))`, memoized within the episode.
    pub fn value(&mut self, mdp: &EpisodicMdp, h: usize, s: usize) -> Result<f64> {
        if h == self.horizon {
            return Ok(0.0);
        }
        if let Some(v) = self.plan_mut()?.values[h][s] {
            return Ok(v);
        }
        let v = self
            .q_row(mdp, h, s)?
            .into_iter()
            .fold(0.0, f64::max);
        self.plan_mut()?.values[h][s] = Some(v);
        Ok(v)
    }

    /// Greedy action at `(h, s)`.
    pub fn act(&mut self, mdp: &EpisodicMdp, h: usize, s: usize) -> Result<usize> {
        Ok(act(&self.q_row(mdp, h, s)?))
    }

    /// The greedy policy of the current plan at every `(h, s)`.
    pub fn greedy_policy(&mut self, mdp: &EpisodicMdp) -> Result<Vec<Vec<usize>>> {
        (0..self.horizon)
            .map(|h| (0..mdp.num_states()).map(|s| self.act(mdp, h, s)).collect())
            .collect()
    }

    /// Stores the episode's transitions with targets from the current plan,
    /// then closes the plan.
    pub fn record_episode(&mut self, mdp: &EpisodicMdp, steps: &[StepRecord]) -> Result<()> {
        let mut pending = Vec::with_capacity(steps.len());
        for step in steps {
            let target = step.reward + self.value(mdp, step.h + 1, step.next_state)?;
            pending.push((step, target));
        }
        for (step, target) in pending {
            let z = mdp.embed(step.state, step.action);
            self.models[step.h].record(z.clone(), target)?;
            self.history[step.h].push(Transition {
                z,
                reward: step.reward,
                next_state: step.next_state,
            });
        }
        self.plan = None;
        self.episode += 1;
        Ok(())
    }

    /// Plans, rolls out greedily from `initial_state`, and records the episode.
    pub fn run_episode<R: Rng + ?Sized>(
        &mut self,
        mdp: &EpisodicMdp,
        initial_state: usize,
        rng: &mut R,
    ) -> Result<EpisodeLog> {
        self.plan_episode(mdp)?;
        let mut s = initial_state;
        let mut steps = Vec::with_capacity(self.horizon);
        let mut q_rows = Vec::with_capacity(self.horizon);
        let mut realized_return = 0.0;
        for h in 0..self.horizon {
            let row = self.q_row(mdp, h, s)?;
            let a = act(&row);
            let (reward, next_state) = mdp.step(h, s, a, rng)?;
            realized_return += reward;
            steps.push(StepRecord {
                h,
                state: s,
                action: a,
                reward,
                next_state,
            });
            q_rows.push(row);
            s = next_state;
        }
        self.record_episode(mdp, &steps)?;
        Ok(EpisodeLog {
            steps,
            q_rows,
            realized_return,
        })
    }
}

/// Episode-level interface shared by the learning agents and the baselines.
pub trait Learner {
    fn label(&self) -> &str;

    /// Prepares the policy of the coming episode.
    fn begin_episode(&mut self, mdp: &EpisodicMdp) -> Result<()>;

    /// The deterministic policy `policy[h][s]` followed this episode.
    fn policy_table(&mut self, mdp: &EpisodicMdp) -> Result<Vec<Vec<usize>>>;

    fn end_episode(&mut self, mdp: &EpisodicMdp, steps: &[StepRecord]) -> Result<()>;

    /// Cover statistics per step, empty without a partition.
    fn cover_stats(&self) -> Vec<CoverStats> {
        Vec::new()
    }
}

impl Learner for KernelAgent {
    fn label(&self) -> &str {
        if self.config.partition_enabled {
            "pi-krvi"
        } else {
            "kovi"
        }
    }

    fn begin_episode(&mut self, mdp: &EpisodicMdp) -> Result<()> {
        self.plan_episode(mdp)
    }

    fn policy_table(&mut self, mdp: &EpisodicMdp) -> Result<Vec<Vec<usize>>> {
        self.greedy_policy(mdp)
    }

    fn end_episode(&mut self, mdp: &EpisodicMdp, steps: &[StepRecord]) -> Result<()> {
        self.record_episode(mdp, steps)
    }

    fn cover_stats(&self) -> Vec<CoverStats> {
        (0..self.horizon)
            .filter_map(|h| self.tree(h).map(|t| t.cover_stats()))
            .collect()
    }
}

/// Draws an independent uniformly random deterministic policy each episode,
/// so its expected value equals that of the uniform random policy.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
    policy: Vec<Vec<usize>>,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
            policy: Vec::new(),
        }
    }
}

impl Learner for RandomAgent {
    fn label(&self) -> &str {
        "random"
    }

    fn begin_episode(&mut self, mdp: &EpisodicMdp) -> Result<()> {
        let actions: Vec<usize> = (0..mdp.num_actions()).collect();
        self.policy = (0..mdp.horizon())
            .map(|_| {
                (0..mdp.num_states())
                    .map(|_| *actions.choose(&mut self.rng).expect("at least one action"))
                    .collect()
            })
            .collect();
        Ok(())
    }

    fn policy_table(&mut self, _mdp: &EpisodicMdp) -> Result<Vec<Vec<usize>>> {
        Ok(self.policy.clone())
    }

    fn end_episode(&mut self, _mdp: &EpisodicMdp, _steps: &[StepRecord]) -> Result<()> {
        Ok(())
    }
}

/// Follows the optimal policy computed by backward induction.
#[derive(Clone, Debug, Default)]
pub struct OracleAgent {
    policy: Option<Vec<Vec<usize>>>,
}

impl OracleAgent {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Learner for OracleAgent {
    fn label(&self) -> &str {
        "oracle"
    }

    fn begin_episode(&mut self, mdp: &EpisodicMdp) -> Result<()> {
        if self.policy.is_none() {
            self.policy = Some(mdp.solve_optimal().greedy_policy());
        }
        Ok(())
    }

    fn policy_table(&mut self, _mdp: &EpisodicMdp) -> Result<Vec<Vec<usize>>> {
        self.policy
            .clone()
            .ok_or_else(|| Error::InvalidInput("begin_episode must run first".into()))
    }

    fn end_episode(&mut self, _mdp: &EpisodicMdp, _steps: &[StepRecord]) -> Result<()> {
        Ok(())
    }
}
