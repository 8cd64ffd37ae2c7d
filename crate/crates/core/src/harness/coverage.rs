//! Monte-Carlo check of the uniform confidence interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ExperimentConfig;
use crate::agents::bound_params;
use crate::error::{Error, Result};
use crate::kernels::{KernelExpansion, Point};
use crate::regression::RegressorState;
use crate::theory::solve_beta;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageReport {
    pub trials: usize,
    pub covered: usize,
    pub beta: f64,
}

impl CoverageReport {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.trials as f64
    }
}

/// Width multiplier used by [`coverage_trial`]: the override if set, else
/// the fixed point for the design size on the unit cube.
pub fn coverage_beta(config: &ExperimentConfig) -> Result<f64> {
    if let Some(b) = config.coverage.beta {
        return Ok(b);
    }
    let spec = config.kernel_spec()?;
    let n = config.coverage.design_size;
    let params = bound_params(&config.agent, &spec, config.env.horizon, n)?;
    solve_beta(&params, n, n, 1.0)
}

/// Fits a regressor to noisy observations of one fixed RKHS function on
/// `trials` independent uniform designs, and counts the trials in which
/// `|f(z) - mu(z)| <= beta b(z) + eps` held on the whole query grid.
pub fn coverage_trial(config: &ExperimentConfig, trials: usize) -> Result<CoverageReport> {
    if trials < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 trials, got {trials}")));
    }
    config.validate()?;
    let cov = &config.coverage;
    let spec = config.kernel_spec()?;
    let d = spec.dimension;
    let beta = coverage_beta(config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cov.seed);
    let mut target = KernelExpansion {
        centers: (0..cov.num_centers).map(|_| random_point(&mut rng, d)).collect(),
        weights: (0..cov.num_centers).map(|_| StandardNormal.sample(&mut rng)).collect(),
    };
    target.rescale_to_norm(&spec, cov.target_norm);

    let grid = grid_points(d, cov.grid_per_dim);
    let truth: Vec<f64> = grid.iter().map(|z| target.eval(&spec, z)).collect();

    let mut covered = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cov.seed ^ (trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut reg = RegressorState::new(spec.clone(), config.agent.lambda)?;
        for _ in 0..cov.design_size {
            let x = random_point(&mut rng, d);
            let noise = if cov.noise > 0.0 {
                rng.random_range(-cov.noise..=cov.noise)
            } else {
                0.0
            };
            let y = target.eval(&spec, &x) + noise;
            reg.observe(x, y)?;
        }
        let mut ok = true;
        for (z, f) in grid.iter().zip(&truth) {
            let p = reg.predict(z)?;
            if (f - p.mean).abs() > beta * p.stddev + cov.eps {
                ok = false;
                break;
            }
        }
        covered += ok as usize;
    }
    Ok(CoverageReport {
        trials,
        covered,
        beta,
    })
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point {
    Point::new((0..d).map(|_| rng.random::<f64>()).collect()).expect("unit cube sample")
}

fn grid_points(d: usize, per_dim: usize) -> Vec<Point> {
    let total = per_dim.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut coords = vec![0.0; d];
            for c in coords.iter_mut() {
                *c = (idx % per_dim) as f64 / (per_dim - 1) as f64;
                idx /= per_dim;
            }
            Point::new(coords).expect("grid point in the unit cube")
        })
        .collect()
}
