//! The verification suite. Each check builds its own inputs, runs at desk
//! scale and reports a measured value alongside pass or fail.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{AgentKind, ExperimentConfig, KernelConfig};
use super::coverage::coverage_trial;
use super::experiment::{build_env, fit_loglog, run_experiment, run_learner};
use super::output::summarize;
use crate::agents::{act, beta, AgentConfig, BetaMode, KernelAgent, StepRecord};
use crate::envs::{random_tabular, EpisodicMdp, InitialStates};
use crate::error::Result;
use crate::kernels::{EigendecayProfile, KernelSpec, Point};
use crate::regression::RegressorState;
use crate::theory::{info_gain_bound, matern_regret_exponent, regret_exponent, BoundParams};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const CHECK_NAMES: [&str; 9] = [
    "krr-oracle",
    "partition-capacity",
    "cover-growth",
    "info-gain",
    "coverage",
    "regret",
    "exponent-identity",
    "reductions",
    "dp-oracle",
];

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs the named checks in suite order; an empty list runs all of them.
pub fn run_checks(names: &[String]) -> Vec<CheckOutcome> {
    let wanted = |n: &str| names.is_empty() || names.iter().any(|x| x == n);
    let mut out = Vec::new();
    if wanted("krr-oracle") {
        out.push(krr_oracle());
    }
    if wanted("partition-capacity") || wanted("cover-growth") {
        let (cap, growth) = partition_run(&ExperimentConfig::default());
        if wanted("partition-capacity") {
            out.push(cap);
        }
        if wanted("cover-growth") {
            out.push(growth);
        }
    }
    if wanted("info-gain") {
        out.push(info_gain_soundness());
    }
    if wanted("coverage") {
        out.push(confidence_coverage());
    }
    if wanted("regret") {
        out.push(regret_sublinearity(&ExperimentConfig::default()));
    }
    if wanted("exponent-identity") {
        out.push(exponent_identity());
    }
    if wanted("reductions") {
        out.push(reductions());
    }
    if wanted("dp-oracle") {
        out.push(dp_oracle());
    }
    out
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point {
    Point::new((0..d).map(|_| rng.random::<f64>()).collect()).expect("unit cube sample")
}

/// Incremental predictions against a dense solve of `(K + lambda^2 I)`.
pub fn krr_oracle() -> CheckOutcome {
    timed("krr-oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst: f64 = 0.0;
        for instance in 0..50 {
            let d = 1 + instance % 3;
            let spec = match instance % 5 {
                0 => KernelSpec::matern(0.5, 0.3, d)?,
                1 => KernelSpec::matern(1.5, 0.2, d)?,
                2 => KernelSpec::matern(2.5, 0.4, d)?,
                3 => KernelSpec::squared_exponential(0.3, d)?,
                _ => KernelSpec::finite_spectrum(EigendecayProfile::new(2.0, 1.0, 0.0, 1.0)?, 20, instance as u64, d)?,
            };
            let lambda = rng.random_range(0.3..2.0);
            let n = rng.random_range(1..=200);
            let mut points: Vec<Point> = Vec::with_capacity(n);
            for i in 0..n {
                // every fifth instance repeats earlier points
                if instance % 5 == 4 && i > 0 && rng.random::<f64>() < 0.3 {
                    let j = rng.random_range(0..i);
                    points.push(points[j].clone());
                } else {
                    points.push(random_point(&mut rng, d));
                }
            }
            let targets: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let reg = RegressorState::from_observations(spec.clone(), lambda, points.clone(), targets.clone())?;

            let k = spec.gram(&points)? + DMatrix::identity(n, n) * (lambda * lambda);
            let chol = k
                .cholesky()
                .ok_or_else(|| crate::Error::NumericalDegeneracy("dense oracle factorization failed".into()))?;
            let alpha = chol.solve(&DVector::from_vec(targets));
            for _ in 0..20 {
                let z = random_point(&mut rng, d);
                let kz = DVector::from_iterator(n, points.iter().map(|p| spec.evaluate(p, &z).unwrap()));
                let mean = kz.dot(&alpha);
                let var = (spec.evaluate(&z, &z)? - kz.dot(&chol.solve(&kz))).max(0.0);
                let fast = reg.predict(&z)?;
                let probed = reg.predict_probe(&reg.probe(&z)?)?;
                worst = worst
                    .max((fast.mean - mean).abs())
                    .max((fast.stddev - var.sqrt()).abs())
                    .max((probed.mean - mean).abs())
                    .max((probed.stddev - var.sqrt()).abs());
            }
        }
        Ok((worst <= 1e-8, format!("max deviation {worst:.3e} over 50 instances (tol 1e-8)")))
    })
}

/// One partitioned run at `T = 2000` on the configured environment: leaf
/// capacity after every episode, and the growth exponent of the number of
/// cover elements ever created.
pub fn partition_run(config: &ExperimentConfig) -> (CheckOutcome, CheckOutcome) {
    let start = Instant::now();
    let result = (|| -> Result<(usize, f64, Vec<(f64, f64)>, f64, f64)> {
        let mut cfg = config.clone();
        cfg.episodes = 2000;
        let mdp = build_env(&cfg)?;
        let spec = cfg.kernel_spec()?;
        let d = spec.dimension as f64;
        let mut agent_cfg = cfg.agent.clone();
        agent_cfg.partition_enabled = true;
        let mut agent = KernelAgent::new(spec, &mdp, agent_cfg, cfg.episodes)?;
        let alpha = agent.tree(0).map(|t| t.alpha()).unwrap_or(f64::NAN);
        let mut violations = 0;
        let mut worst_ratio: f64 = 0.0;
        let mut growth = Vec::with_capacity(cfg.episodes);
        run_learner(&mut agent, &mdp, cfg.episodes, cfg.seeds[0], cfg.initial_states, |a, row| {
            for h in 0..mdp.horizon() {
                let tree = a.tree(h).expect("partitioned agent");
                violations += tree.capacity_violations();
                worst_ratio = worst_ratio.max(tree.max_capacity_ratio());
            }
            growth.push((row.t as f64, row.ever_created.iter().sum::<usize>() as f64));
            Ok(())
        })?;
        Ok((violations, worst_ratio, growth, d, alpha))
    })();
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Err(e) => {
            let fail = |name: &str| CheckOutcome {
                name: name.into(),
                passed: false,
                detail: format!("error: {e}"),
                seconds,
            };
            (fail("partition-capacity"), fail("cover-growth"))
        }
        Ok((violations, ratio, growth, d, alpha)) => {
            let cap = CheckOutcome {
                name: "partition-capacity".into(),
                passed: violations == 0 && ratio <= 1.0,
                detail: format!("{violations} violations, max N / rho^-alpha = {ratio:.4}"),
                seconds,
            };
            let target = d / (d + alpha);
            let growth = match fit_loglog(&growth, config.burn_in) {
                Ok(fit) => CheckOutcome {
                    name: "cover-growth".into(),
                    passed: (fit.slope - target).abs() <= 0.15,
                    detail: format!(
                        "slope {:.4}, target {target:.4} +- 0.15 (r^2 {:.3})",
                        fit.slope, fit.r_squared
                    ),
                    seconds: 0.0,
                },
                Err(e) => CheckOutcome {
                    name: "cover-growth".into(),
                    passed: false,
                    detail: format!("error: {e}"),
                    seconds: 0.0,
                },
            };
            (cap, growth)
        }
    }
}

/// Exact information gain of greedy and random designs under a finite
/// spectrum kernel against the analytic bound, for every `t <= 2000`.
pub fn info_gain_soundness() -> CheckOutcome {
    timed("info-gain", || {
        let profile = EigendecayProfile::new(2.0, 1.0, 0.0, 1.0)?;
        let spec = KernelSpec::finite_spectrum(profile, 64, 5, 2)?;
        let params = BoundParams {
            profile,
            lambda: 1.0,
            c1: 1.0,
            rho: 1.0,
            horizon: 1,
            episodes: 2000,
            delta: 0.1,
            dimension: 2,
            matern_nu: None,
            constants: Default::default(),
        };
        let t_max = 2000;
        let bounds: Vec<f64> = (1..=t_max).map(|t| info_gain_bound(&params, t)).collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pool: Vec<Point> = (0..400).map(|_| random_point(&mut rng, 2)).collect();

        let mut worst_margin = f64::INFINITY;
        let mut last_gain = [0.0; 2];
        for (design, last) in last_gain.iter_mut().enumerate() {
            let mut reg = RegressorState::new(spec.clone(), 1.0)?;
            let mut probes = pool.iter().map(|z| reg.probe(z)).collect::<Result<Vec<_>>>()?;
            for t in 1..=t_max {
                let z = if design == 0 {
                    random_point(&mut rng, 2)
                } else {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for (i, p) in probes.iter_mut().enumerate() {
                        reg.sync_probe(p);
                        let sd = reg.predict_probe(p)?.stddev;
                        if sd > best.0 {
                            best = (sd, i);
                        }
                    }
                    pool[best.1].clone()
                };
                reg.observe(z, 0.0)?;
                worst_margin = worst_margin.min(bounds[t - 1] - reg.information_gain());
            }
            *last = reg.information_gain();
            // the incremental log-determinant against a dense one at t_max
            let k = spec.gram(reg.points())? + DMatrix::identity(t_max, t_max);
            let dense = k
                .cholesky()
                .map_or(f64::NAN, |c| c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>());
            if (dense - *last).abs() > 1e-6 * dense.abs().max(1.0) {
                return Ok((false, format!("incremental gain {last} differs from dense {dense}")));
            }
        }
        Ok((
            worst_margin >= 0.0,
            format!(
                "min (bound - gain) {worst_margin:.4} over t <= {t_max}; gain(2000) random {:.2}, greedy {:.2}, bound {:.2}",
                last_gain[0], last_gain[1], bounds[t_max - 1]
            ),
        ))
    })
}

/// Everywhere-coverage of the theoretical confidence width.
pub fn confidence_coverage() -> CheckOutcome {
    timed("coverage", || {
        let cfg = ExperimentConfig::parse(
            "kernel.family = finite_spectrum\nkernel.p = 6\nkernel.alpha = 5\n\
             kernel.num_features = 16\nagent.delta = 0.1\nagent.beta = theory\n\
             coverage.design_size = 50\ncoverage.grid_per_dim = 20\ncoverage.noise = 0.5",
        )?;
        let report = coverage_trial(&cfg, 500)?;
        Ok((
            report.rate() >= 0.9,
            format!(
                "coverage {:.3} over {} trials (beta {:.3}, need >= 0.90)",
                report.rate(),
                report.trials,
                report.beta
            ),
        ))
    })
}

/// Regret of the partitioned agent on the standard environment against
/// the global baseline and the random policy.
pub fn regret_sublinearity(config: &ExperimentConfig) -> CheckOutcome {
    timed("regret", || {
        let mut cfg = config.clone();
        cfg.agents = vec![AgentKind::PiKrvi, AgentKind::Kovi, AgentKind::Random];
        let traces = run_experiment(&cfg)?;
        let summary = summarize(&traces, cfg.burn_in);
        let get = |label: &str| summary.iter().find(|s| s.agent == label);
        let (Some(pi), Some(kovi), Some(random)) = (get("pi-krvi"), get("kovi"), get("random")) else {
            return Ok((false, "a run is missing".into()));
        };
        let nu = match cfg.kernel {
            KernelConfig::Matern { nu, .. } => nu,
            _ => f64::NAN,
        };
        let d = (cfg.env.d_s + cfg.env.d_a) as f64;
        let slope = pi.slope_mean;
        let a = slope < 0.95;
        let b = (slope - 0.75).abs() <= 0.15;
        let c = pi.mean_final_regret <= 0.5 * random.mean_final_regret;
        let dd = pi.mean_final_regret <= 1.1 * kovi.mean_final_regret;
        let flag = |ok: bool| if ok { "ok" } else { "FAIL" };
        Ok((
            a && b && c && dd,
            format!(
                "(a) slope {slope:.3} < 0.95 {}; (b) |slope - 0.75| <= 0.15 {} [Matern d = {d} gives {:.3}]; \
                 (c) R {:.1} <= 0.5 x random {:.1} {}; (d) R <= 1.1 x kovi {:.1} {}; kovi slope {:.3}",
                flag(a),
                flag(b),
                matern_regret_exponent(nu, d),
                pi.mean_final_regret,
                random.mean_final_regret,
                flag(c),
                kovi.mean_final_regret,
                flag(dd),
                kovi.slope_mean,
            ),
        ))
    })
}

/// `(d + alpha/2) / (d + alpha)` against `(nu + d) / (2 nu + d)` at
/// `alpha = 2 nu`.
pub fn exponent_identity() -> CheckOutcome {
    timed("exponent-identity", || {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for nu in [0.5, 1.5, 2.5, 0.75, 4.0] {
            for d in [1.0, 2.0, 3.0, 7.0] {
                worst = worst.max((regret_exponent(d, 2.0 * nu) - matern_regret_exponent(nu, d)).abs());
                count += 1;
            }
        }
        Ok((worst <= 1e-12, format!("max difference {worst:.2e} over {count} pairs")))
    })
}

/// The global-regressor agent against a standalone implementation, and the
/// one-step single-state problem against dense kernel UCB.
pub fn reductions() -> CheckOutcome {
    timed("reductions", || {
        let (ok_kovi, kovi_detail) = kovi_equivalence()?;
        let (ok_bandit, bandit_detail) = bandit_equivalence()?;
        Ok((ok_kovi && ok_bandit, format!("{kovi_detail}; {bandit_detail}")))
    })
}

fn small_agent_config(c_beta: f64) -> AgentConfig {
    AgentConfig {
        lambda: 0.5,
        beta_mode: BetaMode::FixedConstant(c_beta),
        partition_enabled: false,
        ..AgentConfig::default()
    }
}

/// Value iteration with one regressor per step rebuilt from scratch every
/// episode, compared bit for bit with the global-regressor agent.
fn kovi_equivalence() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::parse(
        "env.grid_per_dim = 6\nenv.num_actions = 3\nenv.horizon = 3\nkernel.nu = 1.5\nkernel.lengthscale = 0.3",
    )?;
    let mdp = build_env(&cfg)?;
    let spec = cfg.kernel_spec()?;
    let episodes = 60;
    let agent_cfg = small_agent_config(0.2);
    let beta_t = beta(&agent_cfg, &spec, mdp.horizon(), episodes)?;
    let mut agent = KernelAgent::new(spec.clone(), &mdp, agent_cfg.clone(), episodes)?;
    let horizon = mdp.horizon();
    let (ns, na) = (mdp.num_states(), mdp.num_actions());

    let mut rng_a = ChaCha8Rng::seed_from_u64(12);
    let mut rng_b = ChaCha8Rng::seed_from_u64(12);
    // (z, reward, next state) per step
    let mut data: Vec<Vec<(Point, f64, usize)>> = vec![Vec::new(); horizon];
    let mut mismatches = 0usize;
    for t in 0..episodes {
        // standalone backward pass over the full table
        let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
        let mut v = vec![vec![0.0; ns]; horizon + 1];
        for h in (0..horizon).rev() {
            let points: Vec<Point> = data[h].iter().map(|x| x.0.clone()).collect();
            let targets: Vec<f64> = data[h].iter().map(|x| x.1 + v[h + 1][x.2]).collect();
            let reg = RegressorState::from_observations(spec.clone(), agent_cfg.lambda, points, targets)?;
            for s in 0..ns {
                for a in 0..na {
                    let p = reg.predict(&mdp.embed(s, a))?;
                    q[h][s][a] = (p.mean + beta_t * p.stddev).min((horizon - h) as f64);
                }
                v[h][s] = q[h][s].iter().cloned().fold(0.0, f64::max);
            }
        }
        agent.plan_episode(&mdp)?;
        for h in 0..horizon {
            for s in 0..ns {
                let row = agent.q_row(&mdp, h, s)?;
                mismatches += row.iter().zip(&q[h][s]).filter(|(x, y)| x.to_bits() != y.to_bits()).count();
            }
        }
        let s1 = t % ns;
        let mut steps = Vec::new();
        let mut s = s1;
        for h in 0..horizon {
            let a = act(&q[h][s]);
            let (r, sp) = mdp.step(h, s, a, &mut rng_b)?;
            data[h].push((mdp.embed(s, a), r, sp));
            let agent_a = agent.act(&mdp, h, s)?;
            let (r2, sp2) = mdp.step(h, s, agent_a, &mut rng_a)?;
            if agent_a != a || r2 != r || sp2 != sp {
                mismatches += 1;
            }
            steps.push(StepRecord {
                h,
                state: s,
                action: agent_a,
                reward: r2,
                next_state: sp2,
            });
            s = sp;
        }
        agent.record_episode(&mdp, &steps)?;
    }
    Ok((
        mismatches == 0,
        format!("global agent vs standalone: {mismatches} bitwise mismatches over {episodes} episodes"),
    ))
}

/// Dense kernel UCB on a one-state, one-step problem.
fn dense_ucb(spec: &KernelSpec, mdp: &EpisodicMdp, lambda: f64, beta_t: f64, rounds: usize) -> Vec<usize> {
    let na = mdp.num_actions();
    let mut pts: Vec<Point> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut chosen = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let n = pts.len();
        let q: Vec<f64> = if n == 0 {
            vec![beta_t.min(1.0); na]
        } else {
            let k = spec.gram(&pts).expect("valid points") + DMatrix::identity(n, n) * (lambda * lambda);
            let chol = k.cholesky().expect("positive definite");
            let alpha = chol.solve(&DVector::from_vec(ys.clone()));
            (0..na)
                .map(|a| {
                    let z = mdp.embed(0, a);
                    let kz = DVector::from_iterator(n, pts.iter().map(|p| spec.evaluate(p, &z).unwrap()));
                    let var = spec.evaluate(&z, &z).unwrap() - kz.dot(&chol.solve(&kz));
                    (kz.dot(&alpha) + beta_t * var.max(0.0).sqrt()).min(1.0)
                })
                .collect()
        };
        let a = act(&q);
        chosen.push(a);
        pts.push(mdp.embed(0, a));
        ys.push(mdp.reward(0, 0, a));
    }
    chosen
}

fn bandit_equivalence() -> Result<(bool, String)> {
    let spec = KernelSpec::matern(1.5, 0.2, 2)?;
    let rounds = 150;
    let mut mismatched_seeds = 0;
    let mut regret_gap: f64 = 0.0;
    for seed in 1..=5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let na = 16;
        let actions: Vec<Point> = (0..na).map(|i| Point::new(vec![i as f64 / (na - 1) as f64]).unwrap()).collect();
        let rewards: Vec<f64> = (0..na).map(|_| rng.random::<f64>()).collect();
        let mdp = EpisodicMdp::from_tables(vec![Point::new(vec![0.5])?], actions, 1, rewards.clone(), vec![1.0; na])?;
        let cfg = small_agent_config(0.3);
        let beta_t = beta(&cfg, &spec, 1, rounds)?;
        let expected = dense_ucb(&spec, &mdp, cfg.lambda, beta_t, rounds);
        let mut agent = KernelAgent::new(spec.clone(), &mdp, cfg, rounds)?;
        let trace = run_learner(&mut agent, &mdp, rounds, seed, InitialStates::Fixed(0), |_, _| Ok(()))?;
        let best = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let got: Vec<usize> = trace.policies.iter().map(|p| p[0][0]).collect();
        let standalone: f64 = expected.iter().map(|&a| best - rewards[a]).sum();
        regret_gap = regret_gap.max((trace.final_regret() - standalone).abs());
        if got != expected {
            mismatched_seeds += 1;
        }
    }
    Ok((
        mismatched_seeds == 0 && regret_gap == 0.0,
        format!("one-step problem vs dense kernel UCB: {mismatched_seeds} of 5 seeds differ, regret gap {regret_gap:.1e}"),
    ))
}

/// Optimal values against exhaustive expectimax search, and policy values
/// against Monte-Carlo rollouts.
pub fn dp_oracle() -> CheckOutcome {
    timed("dp-oracle", || {
        let mdp = random_tabular(10, 3, 3, 31)?;
        let vt = mdp.solve_optimal();
        fn search(mdp: &EpisodicMdp, h: usize, s: usize) -> f64 {
            if h == mdp.horizon() {
                return 0.0;
            }
            (0..mdp.num_actions())
                .map(|a| {
                    let future: f64 = mdp
                        .transition_row(h, s, a)
                        .iter()
                        .enumerate()
                        .map(|(sp, p)| p * search(mdp, h + 1, sp))
                        .sum();
                    mdp.reward(h, s, a) + future
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        let mut dp_gap: f64 = 0.0;
        for h in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                dp_gap = dp_gap.max((search(&mdp, h, s) - vt.v_star[h][s]).abs());
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let actions: Vec<usize> = (0..mdp.num_actions()).collect();
        let policy: Vec<Vec<usize>> = (0..mdp.horizon())
            .map(|_| (0..mdp.num_states()).map(|_| *actions.choose(&mut rng).unwrap()).collect())
            .collect();
        let exact = mdp.evaluate_policy(&policy)?[0][0];
        let episodes = 100_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..episodes {
            let (mut s, mut ret) = (0, 0.0);
            for (h, row) in policy.iter().enumerate() {
                let (r, sp) = mdp.step(h, s, row[s], &mut rng)?;
                ret += r;
                s = sp;
            }
            sum += ret;
            sum_sq += ret * ret;
        }
        let n = episodes as f64;
        let mean = sum / n;
        let se = ((sum_sq / n - mean * mean) * n / (n - 1.0)).sqrt() / n.sqrt();
        let z = (mean - exact).abs() / se;
        Ok((
            dp_gap <= 1e-12 && z <= 3.0,
            format!("max |search - V*| {dp_gap:.1e}; Monte-Carlo {mean:.5} vs exact {exact:.5} ({z:.2} standard errors)"),
        ))
    })
}
