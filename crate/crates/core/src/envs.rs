//! Finite-grid episodic MDPs embedded in `[0, 1]^d`.
//!
//! States and actions are finite point sets, so optimal values and policy
//! values are computed exactly by backward induction. Agents only ever see
//! the embedded points.
//!
//! Steps are 0-based throughout: `h` ranges over `0..horizon` and the value
//! at step `h` lies in `[0, horizon - h]`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{KernelExpansion, KernelSpec, Point};

/// Uniform mass mixed into every synthetic transition score.
pub const TRANSITION_FLOOR: f64 = 1e-6;
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct EpisodicMdp {
    states: Vec<Point>,
    actions: Vec<Point>,
    horizon: usize,
    // [h][s][a]
    rewards: Vec<f64>,
    // [h][s][a][s']
    transitions: Vec<f64>,
    reward_models: Vec<KernelExpansion>,
}

/// Exact optimal values. `v[h][s]` has `horizon + 1` rows, the last one zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTables {
    pub v_star: Vec<Vec<f64>>,
    pub q_star: Vec<Vec<Vec<f64>>>,
}

impl ValueTables {
    /// The greedy policy of `q_star`, ties to the lowest action index.
    pub fn greedy_policy(&self) -> Vec<Vec<usize>> {
        self.q_star
            .iter()
            .map(|per_state| per_state.iter().map(|row| argmax(row)).collect())
            .collect()
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl EpisodicMdp {
    /// Builds an MDP from explicit tables laid out as `rewards[h][s][a]` and
    /// `transitions[h][s][a][s']`.
    pub fn from_tables(
        states: Vec<Point>,
        actions: Vec<Point>,
        horizon: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        let (ns, na) = (states.len(), actions.len());
        if ns == 0 || na == 0 || horizon == 0 {
            return Err(Error::InvalidInput(
                "need at least one state, one action and horizon >= 1".into(),
            ));
        }
        let ds = states[0].dim();
        let da = actions[0].dim();
        if states.iter().any(|s| s.dim() != ds) || actions.iter().any(|a| a.dim() != da) {
            return Err(Error::InvalidInput("inconsistent point dimensions".into()));
        }
        if rewards.len() != horizon * ns * na {
            return Err(Error::InvalidInput(format!(
                "expected {} rewards, got {}",
                horizon * ns * na,
                rewards.len()
            )));
        }
        if transitions.len() != horizon * ns * na * ns {
            return Err(Error::InvalidInput(format!(
                "expected {} transition entries, got {}",
                horizon * ns * na * ns,
                transitions.len()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidInput(format!("reward {r} outside [0, 1]")));
        }
        for (i, row) in transitions.chunks(ns).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "transition row {i} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(EpisodicMdp {
            states,
            actions,
            horizon,
            rewards,
            transitions,
            reward_models: Vec::new(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actions[0].dim()
    }

    /// `d = d_s + d_a`.
    pub fn joint_dim(&self) -> usize {
        self.state_dim() + self.action_dim()
    }

    pub fn states(&self) -> &[Point] {
        &self.states
    }

    pub fn actions(&self) -> &[Point] {
        &self.actions
    }

    /// Pre-clip reward functions of a synthetic MDP, one per step.
    pub fn reward_models(&self) -> &[KernelExpansion] {
        &self.reward_models
    }

    fn sa(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states.len() + s) * self.actions.len() + a
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.sa(h, s, a)]
    }

    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.states.len();
        let start = self.sa(h, s, a) * ns;
        &self.transitions[start..start + ns]
    }

    fn check_indices(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.states.len() || a >= self.actions.len() {
            return Err(Error::InvalidInput(format!(
                "index out of range: h = {h}, s = {s}, a = {a} (horizon {}, {} states, {} actions)",
                self.horizon,
                self.states.len(),
                self.actions.len()
            )));
        }
        Ok(())
    }

    /// Deterministic reward and a sampled next state.
    pub fn step<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(f64, usize)> {
        self.check_indices(h, s, a)?;
        let row = self.transition_row(h, s, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = i;
                break;
            }
        }
        // never land on a zero-probability tail state through roundoff
        while row[next] == 0.0 && next > 0 {
            next -= 1;
        }
        Ok((self.reward(h, s, a), next))
    }

    /// The state-action point `(s, a)` in `[0, 1]^(d_s + d_a)`.
    pub fn embed(&self, s: usize, a: usize) -> Point {
        self.states[s].concat(&self.actions[a])
    }

    /// `sum_s' P_h(s' | s, a) v(s')`.
    pub fn expected_next(&self, h: usize, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition_row(h, s, a)
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum()
    }

    pub fn solve_optimal(&self) -> ValueTables {
        let (ns, na, hz) = (self.num_states(), self.num_actions(), self.horizon);
        let mut v_star = vec![vec![0.0; ns]; hz + 1];
        let mut q_star = vec![vec![vec![0.0; na]; ns]; hz];
        for h in (0..hz).rev() {
            for s in 0..ns {
                for a in 0..na {
                    q_star[h][s][a] = self.reward(h, s, a) + self.expected_next(h, s, a, &v_star[h + 1]);
                }
                v_star[h][s] = q_star[h][s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        ValueTables { v_star, q_star }
    }

    /// Exact values `V^pi_h(s)` of a deterministic policy `policy[h][s]`;
    /// `horizon + 1` rows, the last one zero.
    pub fn evaluate_policy(&self, policy: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let (ns, hz) = (self.num_states(), self.horizon);
        if policy.len() != hz || policy.iter().any(|p| p.len() != ns) {
            return Err(Error::InvalidInput(
                "policy must define an action for every (h, s)".into(),
            ));
        }
        let mut v = vec![vec![0.0; ns]; hz + 1];
        for h in (0..hz).rev() {
            for s in 0..ns {
                let a = policy[h][s];
                self.check_indices(h, s, a)?;
                v[h][s] = self.reward(h, s, a) + self.expected_next(h, s, a, &v[h + 1]);
            }
        }
        Ok(v)
    }

    /// Writes the MDP as a flat text table.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        let (ns, na) = (self.num_states(), self.num_actions());
        writeln!(
            out,
            "mdp v1 d_s={} d_a={} states={} actions={} horizon={}",
            self.state_dim(),
            self.action_dim(),
            ns,
            na,
            self.horizon
        )?;
        for s in &self.states {
            writeln!(out, "state {}", join_floats(s.coords()))?;
        }
        for a in &self.actions {
            writeln!(out, "action {}", join_floats(a.coords()))?;
        }
        for h in 0..self.horizon {
            for s in 0..ns {
                let start = self.sa(h, s, 0);
                writeln!(out, "reward {h} {s} {}", join_floats(&self.rewards[start..start + na]))?;
            }
        }
        for h in 0..self.horizon {
            for s in 0..ns {
                for a in 0..na {
                    writeln!(
                        out,
                        "transition {h} {s} {a} {}",
                        join_floats(self.transition_row(h, s, a))
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Reads a table written by [`EpisodicMdp::dump`].
    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty MDP file".into()))??;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("mdp") || fields.next() != Some("v1") {
            return Err(Error::Parse(format!("bad MDP header `{header}`")));
        }
        let mut dims = [0usize; 5];
        for (slot, key) in dims
            .iter_mut()
            .zip(["d_s", "d_a", "states", "actions", "horizon"])
        {
            let field = fields
                .next()
                .ok_or_else(|| Error::Parse(format!("header missing `{key}`")))?;
            let value = field
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| Error::Parse(format!("expected `{key}=..`, got `{field}`")))?;
            *slot = value
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer in `{field}`")))?;
        }
        let [_, _, ns, na, hz] = dims;
        let mut states = Vec::with_capacity(ns);
        let mut actions = Vec::with_capacity(na);
        let mut rewards = vec![f64::NAN; hz * ns * na];
        let mut transitions = vec![f64::NAN; hz * ns * na * ns];
        for line in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(kind) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            match kind {
                "state" => states.push(Point::new(parse_floats(&rest)?)?),
                "action" => actions.push(Point::new(parse_floats(&rest)?)?),
                "reward" => {
                    let (idx, values) = split_indices::<2>(&rest)?;
                    let [h, s] = idx;
                    let values = parse_floats(values)?;
                    if h >= hz || s >= ns || values.len() != na {
                        return Err(Error::Parse(format!("bad reward row `{line}`")));
                    }
                    let start = (h * ns + s) * na;
                    rewards[start..start + na].copy_from_slice(&values);
                }
                "transition" => {
                    let (idx, values) = split_indices::<3>(&rest)?;
                    let [h, s, a] = idx;
                    let values = parse_floats(values)?;
                    if h >= hz || s >= ns || a >= na || values.len() != ns {
                        return Err(Error::Parse(format!("bad transition row `{line}`")));
                    }
                    let start = ((h * ns + s) * na + a) * ns;
                    transitions[start..start + ns].copy_from_slice(&values);
                }
                other => return Err(Error::Parse(format!("unknown record `{other}`"))),
            }
        }
        if rewards.iter().chain(&transitions).any(|x| x.is_nan()) {
            return Err(Error::Parse("MDP file is missing rows".into()));
        }
        EpisodicMdp::from_tables(states, actions, hz, rewards, transitions)
    }
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{}", format_float(*v)).unwrap();
    }
    s
}

/// Scientific notation with 17 significant digits; round-trips exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_floats(items: &[&str]) -> Result<Vec<f64>> {
    items
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{t}`")))
        })
        .collect()
}

fn split_indices<'a, const N: usize>(items: &'a [&'a str]) -> Result<([usize; N], &'a [&'a str])> {
    if items.len() < N {
        return Err(Error::Parse("row is missing indices".into()));
    }
    let mut idx = [0; N];
    for (slot, t) in idx.iter_mut().zip(items) {
        *slot = t
            .parse()
            .map_err(|_| Error::Parse(format!("bad index `{t}`")))?;
    }
    Ok((idx, &items[N..]))
}

/// Parameters of the synthetic kernel-structured MDP generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub d_s: usize,
    pub d_a: usize,
    pub grid_per_dim: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_centers: usize,
    pub seed: u64,
}

/// Evenly spaced lattice of `count` points in `[0, 1]^dim` (a full grid of
/// `per_dim` points per axis truncated to `count`, lexicographic order).
fn lattice(dim: usize, per_dim: usize, count: usize) -> Vec<Point> {
    let coord = |i: usize| {
        if per_dim == 1 {
            0.5
        } else {
            i as f64 / (per_dim - 1) as f64
        }
    };
    (0..count)
        .map(|mut idx| {
            let mut coords = vec![0.0; dim];
            for c in coords.iter_mut().rev() {
                *c = coord(idx % per_dim);
                idx /= per_dim;
            }
            Point::new(coords).expect("lattice coordinates lie in [0, 1]")
        })
        .collect()
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point {
    Point::new((0..d).map(|_| rng.random::<f64>()).collect()).expect("unit cube sample")
}

/// Generates an MDP whose rewards and transition scores are kernel
/// combinations with RKHS norm 1.
///
/// Rewards are `clip_[0,1](sum_j w_j k(z, c_j))` with nonnegative weights.
/// Transitions are `P(s' | z) ∝ max(0, sum_j u_{j,s'} k(z, c'_j)) + floor`,
/// normalized over the state grid; each unnormalized score has norm 1.
pub fn synth_mdp(spec: &KernelSpec, params: &SynthParams) -> Result<EpisodicMdp> {
    let SynthParams {
        d_s,
        d_a,
        grid_per_dim,
        num_actions,
        horizon,
        num_centers,
        seed,
    } = *params;
    if d_s == 0 || d_a == 0 {
        return Err(Error::config("env.d_s", "state and action dimensions must be >= 1"));
    }
    if grid_per_dim < 2 {
        return Err(Error::config("env.grid_per_dim", "must be >= 2"));
    }
    if num_actions == 0 {
        return Err(Error::config("env.num_actions", "must be >= 1"));
    }
    if horizon == 0 {
        return Err(Error::config("env.horizon", "must be >= 1"));
    }
    if num_centers == 0 {
        return Err(Error::config("env.num_centers", "must be >= 1"));
    }
    let d = d_s + d_a;
    if spec.dimension != d {
        return Err(Error::config(
            "kernel",
            format!("kernel dimension {} differs from d_s + d_a = {d}", spec.dimension),
        ));
    }
    let ns = grid_per_dim.checked_pow(d_s as u32).ok_or_else(|| {
        Error::config("env.grid_per_dim", "state grid is too large")
    })?;
    let states = lattice(d_s, grid_per_dim, ns);
    let per_axis = (num_actions as f64).powf(1.0 / d_a as f64).ceil() as usize;
    let per_axis = (per_axis..).find(|m| m.pow(d_a as u32) >= num_actions).unwrap();
    let actions = lattice(d_a, per_axis, num_actions);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reward_models = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon * ns * num_actions);
    let mut transitions = Vec::with_capacity(horizon * ns * num_actions * ns);
    for _ in 0..horizon {
        let mut reward = KernelExpansion {
            centers: (0..num_centers).map(|_| random_point(&mut rng, d)).collect(),
            weights: (0..num_centers).map(|_| rng.random::<f64>()).collect(),
        };
        reward.rescale_to_norm(spec, 1.0);

        let score_centers: Vec<Point> = (0..num_centers).map(|_| random_point(&mut rng, d)).collect();
        let scores: Vec<KernelExpansion> = (0..ns)
            .map(|_| {
                let mut e = KernelExpansion {
                    centers: score_centers.clone(),
                    weights: (0..num_centers)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect(),
                };
                e.rescale_to_norm(spec, 1.0);
                e
            })
            .collect();

        for s in 0..ns {
            for a in 0..num_actions {
                let z = states[s].concat(&actions[a]);
                rewards.push(reward.eval(spec, &z).clamp(0.0, 1.0));
                let kz: Vec<f64> = score_centers
                    .iter()
                    .map(|c| spec.eval_unchecked(z.coords(), c.coords()))
                    .collect();
                let raw: Vec<f64> = scores
                    .iter()
                    .map(|e| {
                        let v: f64 = e.weights.iter().zip(&kz).map(|(w, k)| w * k).sum();
                        v.max(0.0) + TRANSITION_FLOOR
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                transitions.extend(raw.iter().map(|x| x / total));
            }
        }
        reward_models.push(reward);
    }
    let mut mdp = EpisodicMdp::from_tables(states, actions, horizon, rewards, transitions)?;
    mdp.reward_models = reward_models;
    Ok(mdp)
}

/// An unstructured random MDP: rewards uniform in `[0, 1]`, transition rows
/// from normalized uniform weights. States and actions sit on 1-d grids.
pub fn random_tabular(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<EpisodicMdp> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(Error::InvalidInput("sizes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = lattice(1, num_states, num_states);
    let actions = lattice(1, num_actions, num_actions);
    let rewards = (0..horizon * num_states * num_actions)
        .map(|_| rng.random::<f64>())
        .collect();
    let mut transitions = Vec::with_capacity(horizon * num_states * num_actions * num_states);
    for _ in 0..horizon * num_states * num_actions {
        let raw: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        transitions.extend(raw.iter().map(|x| x / total));
    }
    EpisodicMdp::from_tables(states, actions, horizon, rewards, transitions)
}

/// How the initial state of each episode is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialStates {
    /// `s_1^t = (t - 1) mod |S|`.
    Cycle,
    Fixed(usize),
    /// The state where the current policy loses the most value.
    Adversarial,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn standard_params() -> SynthParams {
        SynthParams {
            d_s: 1,
            d_a: 1,
            grid_per_dim: 8,
            num_actions: 4,
            horizon: 3,
            num_centers: 5,
            seed: 3,
        }
    }

    /// Every deterministic policy of a small MDP, as `policy[h][s]`.
    fn all_policies(ns: usize, na: usize, hz: usize) -> Vec<Vec<Vec<usize>>> {
        let cells = ns * hz;
        let total = na.pow(cells as u32);
        (0..total)
            .map(|mut code| {
                (0..hz)
                    .map(|_| {
                        (0..ns)
                            .map(|_| {
                                let a = code % na;
                                code /= na;
                                a
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_center_peak() {
        let spec = KernelSpec::matern(0.5, 0.3, 2).unwrap();
        let mut e = KernelExpansion {
            centers: vec![pt(&[0.4, 0.6])],
            weights: vec![1.0],
        };
        e.rescale_to_norm(&spec, 1.0);
        assert_eq!(e.eval(&spec, &pt(&[0.4, 0.6])).min(1.0), 1.0);
    }

    #[test]
    fn synthetic_mdp_shape_and_invariants() {
        let spec = KernelSpec::matern(0.5, 0.5, 2).unwrap();
        let mdp = synth_mdp(&spec, &standard_params()).unwrap();
        assert_eq!(mdp.num_states(), 8);
        assert_eq!(mdp.num_actions(), 4);
        assert_eq!(mdp.joint_dim(), 2);
        for h in 0..3 {
            for s in 0..8 {
                for a in 0..4 {
                    let r = mdp.reward(h, s, a);
                    assert!((0.0..=1.0).contains(&r));
                    let sum: f64 = mdp.transition_row(h, s, a).iter().sum();
                    assert!((sum - 1.0).abs() <= ROW_SUM_TOL);
                }
            }
        }
        for model in mdp.reward_models() {
            assert!(model.rkhs_norm_sq(&spec) <= 1.0 + 1e-12);
        }
        // same seed, same MDP
        let again = synth_mdp(&spec, &standard_params()).unwrap();
        assert_eq!(again.rewards, mdp.rewards);
        assert_eq!(again.transitions, mdp.transitions);
    }

    #[test]
    fn synth_rejects_bad_params() {
        let spec = KernelSpec::matern(0.5, 0.5, 2).unwrap();
        let mut p = standard_params();
        p.grid_per_dim = 1;
        assert!(synth_mdp(&spec, &p).is_err());
        let mut p = standard_params();
        p.d_s = 2;
        assert!(synth_mdp(&spec, &p).is_err());
    }

    #[test]
    fn embed_concatenates_and_is_injective() {
        let spec = KernelSpec::matern(0.5, 0.5, 2).unwrap();
        let mdp = synth_mdp(&spec, &standard_params()).unwrap();
        let z = mdp.embed(2, 1);
        assert_eq!(z.coords(), &[2.0 / 7.0, 1.0 / 3.0]);
        let mut all = Vec::new();
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                all.push(mdp.embed(s, a));
            }
        }
        for i in 0..all.len() {
            for j in 0..i {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn multi_dimensional_action_lattice() {
        let pts = lattice(2, 3, 5);
        assert_eq!(pts[0].coords(), &[0.0, 0.0]);
        assert_eq!(pts[1].coords(), &[0.0, 0.5]);
        assert_eq!(pts[4].coords(), &[0.5, 0.5]);
    }

    #[test]
    fn step_on_deterministic_rows() {
        let states = vec![pt(&[0.0]), pt(&[1.0])];
        let actions = vec![pt(&[0.5])];
        let mdp = EpisodicMdp::from_tables(
            states,
            actions,
            1,
            vec![0.25, 0.75],
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(mdp.step(0, 0, 0, &mut rng).unwrap(), (0.25, 1));
            assert_eq!(mdp.step(0, 1, 0, &mut rng).unwrap(), (0.75, 0));
        }
        assert!(mdp.step(1, 0, 0, &mut rng).is_err());
        assert!(mdp.step(0, 2, 0, &mut rng).is_err());
    }

    #[test]
    fn step_frequencies_match_row() {
        let mdp = random_tabular(5, 2, 1, 11).unwrap();
        let row = mdp.transition_row(0, 3, 1).to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = vec![0usize; 5];
        for _ in 0..n {
            counts[mdp.step(0, 3, 1, &mut rng).unwrap().1] += 1;
        }
        for (c, p) in counts.iter().zip(&row) {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() <= 3.0 * sd + 1e-12);
        }
    }

    #[test]
    fn from_tables_validates() {
        let s = vec![pt(&[0.0])];
        let a = vec![pt(&[0.0])];
        assert!(EpisodicMdp::from_tables(s.clone(), a.clone(), 1, vec![1.5], vec![1.0]).is_err());
        assert!(EpisodicMdp::from_tables(s.clone(), a.clone(), 1, vec![0.5], vec![0.9]).is_err());
        assert!(EpisodicMdp::from_tables(s, a, 1, vec![0.5], vec![1.0]).is_ok());
    }

    #[test]
    fn one_step_and_zero_reward_values() {
        let mdp = random_tabular(4, 3, 1, 2).unwrap();
        let vt = mdp.solve_optimal();
        for s in 0..4 {
            let best = (0..3).map(|a| mdp.reward(0, s, a)).fold(0.0, f64::max);
            assert_eq!(vt.v_star[0][s], best);
        }
        let policy = vec![vec![1; 4]];
        let v = mdp.evaluate_policy(&policy).unwrap();
        for s in 0..4 {
            assert_eq!(v[0][s], mdp.reward(0, s, 1));
        }

        let zero = EpisodicMdp::from_tables(
            vec![pt(&[0.0]), pt(&[1.0])],
            vec![pt(&[0.0])],
            3,
            vec![0.0; 6],
            vec![0.5; 12],
        )
        .unwrap();
        let vt = zero.solve_optimal();
        assert!(vt.v_star.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn bellman_residual_and_greedy_consistency() {
        let mdp = random_tabular(10, 3, 3, 5).unwrap();
        let vt = mdp.solve_optimal();
        for h in 0..3 {
            for s in 0..10 {
                assert!(vt.v_star[h][s] <= (3 - h) as f64);
                for a in 0..3 {
                    let backup = mdp.reward(h, s, a) + mdp.expected_next(h, s, a, &vt.v_star[h + 1]);
                    assert!((vt.q_star[h][s][a] - backup).abs() <= 1e-12);
                }
            }
        }
        let v_pi = mdp.evaluate_policy(&vt.greedy_policy()).unwrap();
        assert_eq!(v_pi, vt.v_star);
    }

    #[test]
    fn optimal_values_match_policy_enumeration() {
        // 3 states keep the enumeration (3^9 policies) fast in unit tests;
        // the acceptance suite runs the 10-state per-start-state check
        let mdp = random_tabular(3, 3, 3, 8).unwrap();
        let vt = mdp.solve_optimal();
        let mut best = vec![f64::NEG_INFINITY; 3];
        for policy in all_policies(3, 3, 3) {
            let v = mdp.evaluate_policy(&policy).unwrap();
            for s in 0..3 {
                best[s] = best[s].max(v[0][s]);
            }
        }
        for s in 0..3 {
            assert_abs_diff_eq!(best[s], vt.v_star[0][s], epsilon = 1e-12);
        }
    }

    #[test]
    fn dump_load_round_trip() {
        let spec = KernelSpec::matern(0.5, 0.5, 2).unwrap();
        let mdp = synth_mdp(&spec, &standard_params()).unwrap();
        let mut buf = Vec::new();
        mdp.dump(&mut buf).unwrap();
        let back = EpisodicMdp::load(buf.as_slice()).unwrap();
        assert_eq!(back.states, mdp.states);
        assert_eq!(back.actions, mdp.actions);
        assert_eq!(back.rewards, mdp.rewards);
        assert_eq!(back.transitions, mdp.transitions);
        assert!(EpisodicMdp::load("mdp v2\n".as_bytes()).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.9, 0.9]), 1);
        assert_eq!(argmax(&[1.0]), 0);
        assert_eq!(argmax(&[3.0, 3.0]), 0);
    }
}
