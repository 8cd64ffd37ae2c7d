//! Seeded experiment execution and regret accounting.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{AgentKind, ExperimentConfig};
use crate::agents::{KernelAgent, Learner, OracleAgent, RandomAgent, StepRecord};
use crate::envs::{argmax, synth_mdp, EpisodicMdp, InitialStates};
use crate::error::{Error, Result};
use crate::partition::CoverStats;

/// One episode of a regret trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    /// Episode index, from 1.
    pub t: usize,
    pub initial_state: usize,
    pub realized_return: f64,
    pub v_star: f64,
    pub v_pi: f64,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
    pub leaf_counts: Vec<usize>,
    pub ever_created: Vec<usize>,
    pub max_depths: Vec<u32>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretTrace {
    pub agent: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// Greedy policy `[h][s]` frozen at each episode.
    pub policies: Vec<Vec<Vec<usize>>>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_regret)
    }

    /// `(t, R(t))` pairs.
    pub fn cumulative(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.t as f64, r.cumulative_regret))
            .collect()
    }
}

/// Runs `episodes` episodes of `learner`, computing each episode's policy
/// value exactly. `on_episode` sees the learner after each episode is recorded.
pub fn run_learner<L: Learner + ?Sized>(
    learner: &mut L,
    mdp: &EpisodicMdp,
    episodes: usize,
    seed: u64,
    initial_states: InitialStates,
    mut on_episode: impl FnMut(&L, &TraceRow) -> Result<()>,
) -> Result<RegretTrace> {
    let optimal = mdp.solve_optimal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(episodes);
    let mut policies = Vec::with_capacity(episodes);
    let mut cumulative = 0.0;
    for t in 1..=episodes {
        let start = Instant::now();
        learner.begin_episode(mdp)?;
        let policy = learner.policy_table(mdp)?;
        let v_pi = mdp.evaluate_policy(&policy)?;
        let s1 = match initial_states {
            InitialStates::Cycle => (t - 1) % mdp.num_states(),
            InitialStates::Fixed(s) => s,
            InitialStates::Adversarial => {
                let gaps: Vec<f64> = (0..mdp.num_states())
                    .map(|s| optimal.v_star[0][s] - v_pi[0][s])
                    .collect();
                argmax(&gaps)
            }
        };
        let mut steps = Vec::with_capacity(mdp.horizon());
        let mut s = s1;
        let mut realized_return = 0.0;
        for (h, row) in policy.iter().enumerate() {
            let action = row[s];
            let (reward, next_state) = mdp.step(h, s, action, &mut rng)?;
            realized_return += reward;
            steps.push(StepRecord {
                h,
                state: s,
                action,
                reward,
                next_state,
            });
            s = next_state;
        }
        learner.end_episode(mdp, &steps)?;
        let instant_regret = optimal.v_star[0][s1] - v_pi[0][s1];
        cumulative += instant_regret;
        let stats: Vec<CoverStats> = learner.cover_stats();
        let row = TraceRow {
            t,
            initial_state: s1,
            realized_return,
            v_star: optimal.v_star[0][s1],
            v_pi: v_pi[0][s1],
            instant_regret,
            cumulative_regret: cumulative,
            leaf_counts: stats.iter().map(|c| c.leaf_count).collect(),
            ever_created: stats.iter().map(|c| c.ever_created).collect(),
            max_depths: stats.iter().map(|c| c.max_depth).collect(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        on_episode(learner, &row)?;
        rows.push(row);
        policies.push(policy);
    }
    Ok(RegretTrace {
        agent: learner.label().to_string(),
        seed,
        rows,
        policies,
    })
}

/// Builds the configured environment.
pub fn build_env(config: &ExperimentConfig) -> Result<EpisodicMdp> {
    synth_mdp(&config.kernel_spec()?, &config.env)
}

/// Builds one learner of the given kind.
pub fn build_learner(
    config: &ExperimentConfig,
    kind: AgentKind,
    mdp: &EpisodicMdp,
    seed: u64,
) -> Result<Box<dyn Learner + Send>> {
    Ok(match kind {
        AgentKind::PiKrvi | AgentKind::Kovi => {
            let mut agent_cfg = config.agent.clone();
            agent_cfg.partition_enabled = kind == AgentKind::PiKrvi;
            Box::new(KernelAgent::new(config.kernel_spec()?, mdp, agent_cfg, config.episodes)?)
        }
        AgentKind::Random => Box::new(RandomAgent::new(seed.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        AgentKind::Oracle => Box::new(OracleAgent::new()),
    })
}

/// Runs every configured agent on every seed. The environment instance is
/// fixed by `env.seed`; the run seed drives transitions and random agents.
/// A run that fails is logged and left out.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RegretTrace>> {
    config.validate()?;
    let mdp = build_env(config)?;
    let jobs: Vec<(AgentKind, u64)> = config
        .agents
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<Result<RegretTrace>> = jobs
        .par_iter()
        .map(|&(kind, seed)| {
            let mut learner = build_learner(config, kind, &mdp, seed)?;
            let trace = run_learner(
                learner.as_mut(),
                &mdp,
                config.episodes,
                seed,
                config.initial_states,
                |_, _| Ok(()),
            )?;
            log::info!(
                "{} seed {}: final regret {:.4}",
                kind.label(),
                seed,
                trace.final_regret()
            );
            Ok(trace)
        })
        .collect();
    let mut traces = Vec::with_capacity(results.len());
    for ((kind, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok(trace) => traces.push(trace),
            Err(e @ Error::Config { .. }) => return Err(e),
            Err(e) => log::error!("{} seed {seed} aborted: {e}", kind.label()),
        }
    }
    if traces.is_empty() {
        return Err(Error::InvalidInput("every run failed".into()));
    }
    Ok(traces)
}

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `log y = slope log x + intercept` over the points with `x` past the
/// first `burn_in_fraction` of the range and `y > 0`.
pub fn fit_loglog(points: &[(f64, f64)], burn_in_fraction: f64) -> Result<LogLogFit> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::InvalidInput(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let x_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let cut = burn_in_fraction * x_max;
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > cut && x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} usable points, need at least 10",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all usable points share one x".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Empirical regret exponent: slope of `log R(t)` against `log t`.
pub fn fit_regret_exponent(trace: &RegretTrace, burn_in_fraction: f64) -> Result<LogLogFit> {
    fit_loglog(&trace.cumulative(), burn_in_fraction)
}

/// Recomputes `R(T)` from the stored policies and initial states.
pub fn recompute_regret(mdp: &EpisodicMdp, trace: &RegretTrace) -> Result<f64> {
    let v_star = &mdp.solve_optimal().v_star[0];
    let mut total = 0.0;
    for (row, policy) in trace.rows.iter().zip(&trace.policies) {
        let v_pi = &mdp.evaluate_policy(policy)?[0];
        total += v_star[row.initial_state] - v_pi[row.initial_state];
    }
    Ok(total)
}
