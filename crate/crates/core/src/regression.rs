//! Incremental kernel ridge regression.
//!
//! The state keeps a packed lower-triangular Cholesky factor `L` of
//! `K + (lambda^2 + jitter) I` and the whitened targets `u = L^-1 y`. Then
//!
//! ```text
//! mu(z)  = (L^-1 k_z) . u
//! b(z)^2 = k(z, z) - |L^-1 k_z|^2
//! ```
//!
//! Appending an observation adds one row to `L` (an O(n^2) forward solve).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Point};

/// Added to the diagonal before factorization.
pub const JITTER: f64 = 1e-10;
/// Negative posterior variances down to `-NEGATIVE_VARIANCE_TOL` are roundoff.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-10;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub stddev: f64,
}

/// Cached whitened kernel vector `L^-1 k_z` for a fixed query point.
///
/// A probe stays valid while its owner only grows by appends, so repeated
/// queries at the same point cost O(n) per new observation instead of a
/// full forward solve.
#[derive(Clone, Debug)]
pub struct Probe {
    owner: u64,
    coords: Vec<f64>,
    prior_variance: f64,
    whitened: Vec<f64>,
}

impl Probe {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

#[derive(Debug)]
pub struct RegressorState {
    id: u64,
    spec: Arc<KernelSpec>,
    lambda: f64,
    points: Vec<Point>,
    targets: Vec<f64>,
    // row i occupies chol[i(i+1)/2 .. (i+1)(i+2)/2]
    chol: Vec<f64>,
    whitened_targets: Vec<f64>,
    log_det_accum: f64,
}

impl Clone for RegressorState {
    fn clone(&self) -> Self {
        RegressorState {
            id: fresh_id(),
            spec: Arc::clone(&self.spec),
            lambda: self.lambda,
            points: self.points.clone(),
            targets: self.targets.clone(),
            chol: self.chol.clone(),
            whitened_targets: self.whitened_targets.clone(),
            log_det_accum: self.log_det_accum,
        }
    }
}

impl RegressorState {
    pub fn new(spec: impl Into<Arc<KernelSpec>>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(RegressorState {
            id: fresh_id(),
            spec: spec.into(),
            lambda,
            points: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            whitened_targets: Vec::new(),
            log_det_accum: 0.0,
        })
    }

    /// Builds a state from scratch from the given observations.
    pub fn from_observations(
        spec: impl Into<Arc<KernelSpec>>,
        lambda: f64,
        points: Vec<Point>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} targets",
                points.len(),
                targets.len()
            )));
        }
        let mut state = RegressorState::new(spec, lambda)?;
        state.points.reserve(points.len());
        for (z, y) in points.into_iter().zip(targets) {
            state.observe(z, y)?;
        }
        Ok(state)
    }

    pub fn spec(&self) -> &Arc<KernelSpec> {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `log det(I + K / lambda^2)` accumulated over the appends.
    pub fn log_det_accum(&self) -> f64 {
        self.log_det_accum
    }

    /// Appends `(z, y)`, extending the Cholesky factor by one row.
    pub fn observe(&mut self, z: Point, y: f64) -> Result<()> {
        if z.dim() != self.spec.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dimension,
                got: z.dim(),
            });
        }
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("target {y} is not finite")));
        }
        let prior_variance = self.spec.eval_unchecked(z.coords(), z.coords());
        let mut row = self.whiten_coords(z.coords());
        let reduction = dot(&row, &row);
        let posterior_variance = prior_variance - reduction;
        let pivot_sq = posterior_variance + self.lambda * self.lambda + JITTER;
        if !(pivot_sq > 0.0) || !pivot_sq.is_finite() {
            return Err(Error::NumericalDegeneracy(format!(
                "non-positive Cholesky pivot {pivot_sq} at observation {}",
                self.points.len()
            )));
        }
        let pivot = pivot_sq.sqrt();
        let u = (y - dot(&row, &self.whitened_targets)) / pivot;

        self.log_det_accum += ((posterior_variance + JITTER) / (self.lambda * self.lambda)).ln_1p();
        row.push(pivot);
        self.chol.extend_from_slice(&row);
        self.whitened_targets.push(u);
        self.points.push(z);
        self.targets.push(y);
        Ok(())
    }

    /// Replaces all targets, keeping the point set and the factor.
    pub fn set_targets(&mut self, targets: Vec<f64>) -> Result<()> {
        if targets.len() != self.points.len() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} points",
                targets.len(),
                self.points.len()
            )));
        }
        self.whitened_targets = self.forward_solve(&targets);
        self.targets = targets;
        Ok(())
    }

    pub fn predict(&self, z: &Point) -> Result<Prediction> {
        if z.dim() != self.spec.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dimension,
                got: z.dim(),
            });
        }
        let prior_variance = self.spec.eval_unchecked(z.coords(), z.coords());
        let whitened = self.whiten_coords(z.coords());
        self.finish_prediction(prior_variance, &whitened)
    }

    /// A probe at `z`, synchronized with the current state.
    pub fn probe(&self, z: &Point) -> Result<Probe> {
        if z.dim() != self.spec.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dimension,
                got: z.dim(),
            });
        }
        Ok(Probe {
            owner: self.id,
            coords: z.coords().to_vec(),
            prior_variance: self.spec.eval_unchecked(z.coords(), z.coords()),
            whitened: self.whiten_coords(z.coords()),
        })
    }

    /// Brings `probe` up to date with this state, recomputing it from scratch
    /// if it was built against a different state.
    pub fn sync_probe(&self, probe: &mut Probe) {
        if probe.owner != self.id || probe.whitened.len() > self.points.len() {
            probe.owner = self.id;
            probe.whitened = self.whiten_coords(&probe.coords);
            return;
        }
        for j in probe.whitened.len()..self.points.len() {
            let row = self.row(j);
            let kj = self.spec.eval_unchecked(&probe.coords, self.points[j].coords());
            let w = (kj - dot(&row[..j], &probe.whitened)) / row[j];
            probe.whitened.push(w);
        }
    }

    /// Prediction from a probe; the probe must be synchronized with `self`.
    pub fn predict_probe(&self, probe: &Probe) -> Result<Prediction> {
        debug_assert_eq!(probe.owner, self.id);
        debug_assert_eq!(probe.whitened.len(), self.points.len());
        self.finish_prediction(probe.prior_variance, &probe.whitened)
    }

    /// `Gamma = 1/2 log det(I + K / lambda^2)`.
    pub fn information_gain(&self) -> f64 {
        0.5 * self.log_det_accum
    }

    /// High-probability bound on the RKHS norm of the predictor:
    /// `|f| + (sigma / lambda) sqrt(2 (Gamma + 1 + log(1 / delta)))`.
    pub fn predictor_norm_bound(
        &self,
        f_norm: f64,
        sigma_sub_gaussian: f64,
        delta: f64,
    ) -> Result<f64> {
        predictor_norm_bound(
            self.information_gain(),
            self.lambda,
            f_norm,
            sigma_sub_gaussian,
            delta,
        )
    }

    /// The Cholesky factor as a dense lower-triangular matrix.
    pub fn cholesky_dense(&self) -> DMatrix<f64> {
        let n = self.points.len();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i).iter().enumerate() {
                l[(i, j)] = *v;
            }
        }
        l
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.chol[start..start + i + 1]
    }

    fn whiten_coords(&self, z: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self
            .points
            .iter()
            .map(|p| self.spec.eval_unchecked(z, p.coords()))
            .collect();
        self.forward_solve(&rhs)
    }

    fn forward_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(rhs.len());
        for (i, b) in rhs.iter().enumerate() {
            let row = self.row(i);
            let v = (b - dot(&row[..i], &x)) / row[i];
            x.push(v);
        }
        x
    }

    fn finish_prediction(&self, prior_variance: f64, whitened: &[f64]) -> Result<Prediction> {
        let mean = dot(whitened, &self.whitened_targets);
        let mut variance = prior_variance - dot(whitened, whitened);
        if variance < 0.0 {
            if variance < -NEGATIVE_VARIANCE_TOL {
                return Err(Error::NumericalDegeneracy(format!(
                    "posterior variance {variance} below roundoff tolerance"
                )));
            }
            variance = 0.0;
        }
        Ok(Prediction {
            mean,
            stddev: variance.sqrt(),
        })
    }
}

/// `f_norm + (sigma / lambda) sqrt(2 (gamma + 1 + log(1 / delta)))`.
pub fn predictor_norm_bound(
    information_gain: f64,
    lambda: f64,
    f_norm: f64,
    sigma_sub_gaussian: f64,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(f_norm
        + sigma_sub_gaussian / lambda
            * (2.0 * (information_gain + 1.0 + (1.0 / delta).ln())).sqrt())
}

/// Dot product with four accumulators; the fixed summation order keeps
/// results reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::EigendecayProfile;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn laplace(d: usize) -> KernelSpec {
        KernelSpec::matern(0.5, 0.5, d).unwrap()
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        assert!(RegressorState::new(laplace(1), 0.0).is_err());
        assert!(RegressorState::new(laplace(1), -1.0).is_err());
    }

    #[test]
    fn empty_state_predicts_prior() {
        let s = RegressorState::new(laplace(2), 1.0).unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!(s.log_det_accum(), 0.0);
        assert_eq!(s.information_gain(), 0.0);
        let p = s.predict(&pt(&[0.2, 0.4])).unwrap();
        assert_eq!(p, Prediction { mean: 0.0, stddev: 1.0 });
    }

    #[test]
    fn single_observation_by_hand() {
        let mut s = RegressorState::new(laplace(1), 1.0).unwrap();
        s.observe(pt(&[0.3]), 2.0).unwrap();
        let p = s.predict(&pt(&[0.3])).unwrap();
        assert_abs_diff_eq!(p.mean, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.stddev, 0.5f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(s.log_det_accum(), 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn orthogonal_points_information_gain() {
        // points far apart relative to the lengthscale give a Gram matrix of I
        let k = KernelSpec::squared_exponential(1e-3, 1).unwrap();
        let mut s = RegressorState::new(k, 1.0).unwrap();
        for i in 0..5 {
            s.observe(pt(&[i as f64 * 0.2]), 0.0).unwrap();
        }
        assert_abs_diff_eq!(s.information_gain(), 2.5 * 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn interpolation_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = 1e-3;
        let mut s = RegressorState::new(laplace(2), lambda).unwrap();
        let mut obs = Vec::new();
        for _ in 0..5 {
            let z = pt(&[rng.random(), rng.random()]);
            let y: f64 = rng.random_range(-1.0..1.0);
            s.observe(z.clone(), y).unwrap();
            obs.push((z, y));
        }
        let p = s.predict(&obs[0].0).unwrap();
        assert!((p.mean - obs[0].1).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = RegressorState::new(laplace(2), 1.0).unwrap();
        assert!(s.observe(pt(&[0.1]), 0.0).is_err());
        assert!(s.predict(&pt(&[0.1])).is_err());
    }

    #[test]
    fn repeated_points_do_not_break_factorization() {
        let mut s = RegressorState::new(laplace(1), 1e-3).unwrap();
        for _ in 0..200 {
            s.observe(pt(&[0.5]), 1.0).unwrap();
        }
        let p = s.predict(&pt(&[0.5])).unwrap();
        assert!(p.stddev >= 0.0 && p.stddev < 1e-3);
    }

    #[test]
    fn set_targets_matches_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = RegressorState::new(laplace(2), 0.7).unwrap();
        for _ in 0..30 {
            s.observe(pt(&[rng.random(), rng.random()]), rng.random()).unwrap();
        }
        let new_targets: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let rebuilt = RegressorState::from_observations(
            s.spec().clone(),
            0.7,
            s.points().to_vec(),
            new_targets.clone(),
        )
        .unwrap();
        s.set_targets(new_targets).unwrap();
        let q = pt(&[0.4, 0.6]);
        assert_abs_diff_eq!(
            s.predict(&q).unwrap().mean,
            rebuilt.predict(&q).unwrap().mean,
            epsilon = 1e-12
        );
        assert!(s.set_targets(vec![1.0]).is_err());
    }

    #[test]
    fn probes_match_fresh_predictions_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut s = RegressorState::new(laplace(2), 0.5).unwrap();
        let q = pt(&[0.25, 0.75]);
        let mut probe = s.probe(&q).unwrap();
        for _ in 0..40 {
            s.observe(pt(&[rng.random(), rng.random()]), rng.random()).unwrap();
            s.sync_probe(&mut probe);
            assert_eq!(s.predict_probe(&probe).unwrap(), s.predict(&q).unwrap());
        }
        // a probe from another state is rebuilt
        let other = s.clone();
        other.sync_probe(&mut probe);
        assert_eq!(other.predict_probe(&probe).unwrap(), s.predict(&q).unwrap());
    }

    #[test]
    fn finite_spectrum_regression_runs() {
        let profile = EigendecayProfile::new(2.0, 1.0, 0.0, 1.0).unwrap();
        let k = KernelSpec::finite_spectrum(profile, 8, 1, 1).unwrap();
        let mut s = RegressorState::new(k, 1.0).unwrap();
        for i in 0..50 {
            s.observe(pt(&[i as f64 / 49.0]), 0.5).unwrap();
        }
        let p = s.predict(&pt(&[0.5])).unwrap();
        assert!(p.stddev <= 1.0);
        // at most 8 features: the information gain saturates logarithmically
        assert!(s.information_gain() < 8.0 * (1.0 + 50.0f64).ln());
    }

    #[test]
    fn norm_bound_arithmetic() {
        let s = RegressorState::new(laplace(1), 2.0).unwrap();
        let h = 3.0;
        let v = s.predictor_norm_bound(h + 1.0, h / 2.0, 0.5).unwrap();
        let expected = h + 1.0 + (h / 4.0) * (2.0 * (1.0 + 2f64.ln())).sqrt();
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        let near_one = predictor_norm_bound(0.0, 1.0, 1.0, 1.0, 1.0 - 1e-12).unwrap();
        assert_abs_diff_eq!(near_one, 1.0 + 2f64.sqrt(), epsilon = 1e-9);
        assert!(s.predictor_norm_bound(1.0, 1.0, 0.0).is_err());
        assert!(s.predictor_norm_bound(1.0, 1.0, 1.0).is_err());
        let lo = predictor_norm_bound(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let hi = predictor_norm_bound(5.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        assert!(hi > lo);
    }
}
