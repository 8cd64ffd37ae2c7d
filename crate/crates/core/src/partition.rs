//! Adaptive dyadic cover of `[0, 1]^d`.
//!
//! Each leaf is a hypercube of side `rho = 2^-depth` with its own kernel ridge
//! regressor over the observations inside it. A leaf holding `N` observations
//! is split into `2^d` equal children whenever `rho^-alpha < N + 1`; the
//! observations move to the children and each child regressor is rebuilt.
//!
//! Boxes are half-open: a coordinate on a shared internal face belongs to the
//! upper child, and 1.0 belongs to the last child.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Point};
use crate::regression::{Prediction, RegressorState};

pub const MAX_DEPTH: u32 = 40;

#[derive(Clone, Debug)]
pub struct CoverElement {
    lower: Vec<f64>,
    depth: u32,
    regressor: RegressorState,
    obs_ids: Vec<usize>,
}

impl CoverElement {
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn side(&self) -> f64 {
        side(self.depth)
    }

    pub fn obs_count(&self) -> usize {
        self.regressor.len()
    }

    pub fn regressor(&self) -> &RegressorState {
        &self.regressor
    }

    /// Ids (insertion order in the tree) of the observations in this leaf.
    pub fn obs_ids(&self) -> &[usize] {
        &self.obs_ids
    }

    /// `rho^-alpha`.
    pub fn capacity(&self, alpha: f64) -> f64 {
        capacity(self.depth, alpha)
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        let s = self.side();
        self.lower.iter().zip(z).all(|(lo, x)| {
            let hi = lo + s;
            *x >= *lo && (*x < hi || (hi == 1.0 && *x == 1.0))
        })
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(CoverElement),
    Internal {
        lower: Vec<f64>,
        depth: u32,
        children: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverStats {
    pub leaf_count: usize,
    pub ever_created: usize,
    pub max_depth: u32,
    pub depth_histogram: BTreeMap<u32, usize>,
}

#[derive(Clone, Debug)]
pub struct CoverTree {
    dimension: usize,
    alpha: f64,
    spec: Arc<KernelSpec>,
    lambda: f64,
    nodes: Vec<Node>,
    leaf_count: usize,
    ever_created: usize,
    observations: usize,
}

fn side(depth: u32) -> f64 {
    0.5f64.powi(depth as i32)
}

fn capacity(depth: u32, alpha: f64) -> f64 {
    (depth as f64 * alpha).exp2()
}

fn violates(depth: u32, alpha: f64, n: usize) -> bool {
    capacity(depth, alpha) < (n + 1) as f64
}

impl CoverTree {
    pub fn new(
        dimension: usize,
        alpha: f64,
        spec: impl Into<Arc<KernelSpec>>,
        lambda: f64,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("cover dimension must be >= 1".into()));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "splitting exponent alpha must be positive, got {alpha}"
            )));
        }
        let spec = spec.into();
        if spec.dimension != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                got: spec.dimension,
            });
        }
        let root = CoverElement {
            lower: vec![0.0; dimension],
            depth: 0,
            regressor: RegressorState::new(Arc::clone(&spec), lambda)?,
            obs_ids: Vec::new(),
        };
        Ok(CoverTree {
            dimension,
            alpha,
            spec,
            lambda,
            nodes: vec![Node::Leaf(root)],
            leaf_count: 1,
            ever_created: 1,
            observations: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Number of cover elements that ever existed, including split ones.
    pub fn ever_created_count(&self) -> usize {
        self.ever_created
    }

    pub fn observation_count(&self) -> usize {
        self.observations
    }

    fn check_point(&self, z: &Point) -> Result<()> {
        if z.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: z.dim(),
            });
        }
        Ok(())
    }

    fn locate_index(&self, z: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(_) => return idx,
                Node::Internal {
                    lower,
                    depth,
                    children,
                } => {
                    idx = children[child_slot(lower, *depth, z)];
                }
            }
        }
    }

    /// The leaf containing `z`.
    pub fn locate(&self, z: &Point) -> Result<&CoverElement> {
        self.check_point(z)?;
        match &self.nodes[self.locate_index(z.coords())] {
            Node::Leaf(leaf) => Ok(leaf),
            Node::Internal { .. } => unreachable!("locate_index returns leaves"),
        }
    }

    pub fn query(&self, z: &Point) -> Result<Prediction> {
        self.locate(z)?.regressor.predict(z)
    }

    /// Appends `(z, y)` to its leaf and splits until every leaf satisfies
    /// `rho^-alpha >= N + 1`. Returns the observation id.
    pub fn record(&mut self, z: Point, y: f64) -> Result<usize> {
        self.check_point(&z)?;
        let idx = self.locate_index(z.coords());
        let id = self.observations;
        match &mut self.nodes[idx] {
            Node::Leaf(leaf) => {
                leaf.regressor.observe(z, y)?;
                leaf.obs_ids.push(id);
            }
            Node::Internal { .. } => unreachable!(),
        }
        self.observations += 1;
        self.maintain(idx)?;
        Ok(id)
    }

    fn maintain(&mut self, start: usize) -> Result<()> {
        let mut pending = vec![start];
        while let Some(idx) = pending.pop() {
            let (depth, n) = match &self.nodes[idx] {
                Node::Leaf(leaf) => (leaf.depth, leaf.obs_count()),
                Node::Internal { .. } => continue,
            };
            if !violates(depth, self.alpha, n) {
                continue;
            }
            if depth >= MAX_DEPTH {
                return Err(Error::config(
                    "agent.alpha",
                    format!(
                        "cover depth would exceed {MAX_DEPTH} (leaf with {n} observations); \
                         alpha = {} is too small",
                        self.alpha
                    ),
                ));
            }
            pending.extend(self.split(idx)?);
        }
        Ok(())
    }

    /// Splits leaf `idx` and returns the indices of children holding
    /// observations.
    fn split(&mut self, idx: usize) -> Result<Vec<usize>> {
        let Node::Leaf(leaf) = &self.nodes[idx] else {
            unreachable!("only leaves are split")
        };
        let lower = leaf.lower.clone();
        let depth = leaf.depth;
        let fanout = 1usize << self.dimension;
        let half = side(depth + 1);

        let mut buckets: Vec<(Vec<Point>, Vec<f64>, Vec<usize>)> =
            (0..fanout).map(|_| Default::default()).collect();
        let reg = &leaf.regressor;
        for ((z, y), id) in reg.points().iter().zip(reg.targets()).zip(&leaf.obs_ids) {
            let slot = child_slot(&lower, depth, z.coords());
            let b = &mut buckets[slot];
            b.0.push(z.clone());
            b.1.push(*y);
            b.2.push(*id);
        }

        let first_child = self.nodes.len();
        let mut occupied = Vec::new();
        for (slot, (points, targets, ids)) in buckets.into_iter().enumerate() {
            let child_lower: Vec<f64> = lower
                .iter()
                .enumerate()
                .map(|(i, lo)| if slot >> i & 1 == 1 { lo + half } else { *lo })
                .collect();
            if !ids.is_empty() {
                occupied.push(first_child + slot);
            }
            let regressor =
                RegressorState::from_observations(Arc::clone(&self.spec), self.lambda, points, targets)?;
            self.nodes.push(Node::Leaf(CoverElement {
                lower: child_lower,
                depth: depth + 1,
                regressor,
                obs_ids: ids,
            }));
        }
        self.nodes[idx] = Node::Internal {
            lower,
            depth,
            children: (first_child..first_child + fanout).collect(),
        };
        self.leaf_count += fanout - 1;
        self.ever_created += fanout;
        Ok(occupied)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &CoverElement> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(leaf) => Some(leaf),
            Node::Internal { .. } => None,
        })
    }

    /// Recomputes every leaf's targets from observation ids.
    pub fn refit_targets(&mut self, mut target: impl FnMut(usize) -> f64) -> Result<()> {
        for node in &mut self.nodes {
            if let Node::Leaf(leaf) = node {
                if leaf.obs_ids.is_empty() {
                    continue;
                }
                let ys: Vec<f64> = leaf.obs_ids.iter().map(|&id| target(id)).collect();
                leaf.regressor.set_targets(ys)?;
            }
        }
        Ok(())
    }

    pub fn cover_stats(&self) -> CoverStats {
        let mut depth_histogram = BTreeMap::new();
        for leaf in self.leaves() {
            *depth_histogram.entry(leaf.depth).or_insert(0) += 1;
        }
        CoverStats {
            leaf_count: self.leaf_count,
            ever_created: self.ever_created,
            max_depth: depth_histogram.keys().next_back().copied().unwrap_or(0),
            depth_histogram,
        }
    }

    /// Largest `N / rho^-alpha` over the leaves.
    pub fn max_capacity_ratio(&self) -> f64 {
        self.leaves()
            .map(|l| l.obs_count() as f64 / l.capacity(self.alpha))
            .fold(0.0, f64::max)
    }

    /// Number of leaves violating `N <= rho^-alpha`.
    pub fn capacity_violations(&self) -> usize {
        self.leaves()
            .filter(|l| l.obs_count() as f64 > l.capacity(self.alpha))
            .count()
    }
}

fn child_slot(lower: &[f64], depth: u32, z: &[f64]) -> usize {
    let half = side(depth + 1);
    lower
        .iter()
        .zip(z)
        .enumerate()
        .fold(0, |slot, (i, (lo, x))| {
            if *x >= lo + half {
                slot | 1 << i
            } else {
                slot
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn tree(d: usize, alpha: f64) -> CoverTree {
        CoverTree::new(d, alpha, KernelSpec::matern(0.5, 0.5, d).unwrap(), 1.0).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point {
        pt(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
    }

    #[test]
    fn fresh_tree() {
        let t = tree(2, 1.0);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.ever_created_count(), 1);
        let leaf = t.locate(&pt(&[0.3, 0.7])).unwrap();
        assert_eq!(leaf.side(), 1.0);
        assert_eq!(leaf.depth(), 0);
        let stats = t.cover_stats();
        assert_eq!(stats.leaf_count, 1);
        assert_eq!(stats.ever_created, 1);
        assert_eq!(stats.depth_histogram, BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn first_record_splits_root_in_one_dimension() {
        let mut t = tree(1, 1.0);
        t.record(pt(&[0.2]), 1.0).unwrap();
        let stats = t.cover_stats();
        assert_eq!(stats.leaf_count, 2);
        assert_eq!(stats.ever_created, 3);
        assert_eq!(stats.depth_histogram, BTreeMap::from([(1, 2)]));
        let left = t.locate(&pt(&[0.2])).unwrap();
        assert_eq!(left.obs_count(), 1);
        assert_eq!(left.lower(), &[0.0]);
        // the midpoint belongs to the upper child
        let right = t.locate(&pt(&[0.5])).unwrap();
        assert_eq!(right.lower(), &[0.5]);
        assert_eq!(right.obs_count(), 0);
        assert_eq!(t.locate(&pt(&[1.0])).unwrap().lower(), &[0.5]);
    }

    #[test]
    fn splitting_thresholds_two_dimensions() {
        let mut t = tree(2, 2.0);
        t.record(pt(&[0.1, 0.1]), 0.0).unwrap();
        assert_eq!(t.leaf_count(), 4);
        // children of side 1/2 have capacity 4: they hold at most 3
        for _ in 0..2 {
            t.record(pt(&[0.1, 0.1]), 0.0).unwrap();
        }
        assert_eq!(t.locate(&pt(&[0.1, 0.1])).unwrap().obs_count(), 3);
        assert_eq!(t.leaf_count(), 4);
        t.record(pt(&[0.2, 0.2]), 0.0).unwrap();
        assert!(t.leaf_count() > 4);
        assert_eq!(t.capacity_violations(), 0);
    }

    #[test]
    fn outside_points_are_rejected() {
        let t = tree(2, 1.0);
        assert!(t.locate(&pt(&[0.1])).is_err());
        assert!(Point::new(vec![1.5, 0.0]).is_err());
    }

    #[test]
    fn query_uses_leaf_observations_only() {
        let mut t = tree(1, 1.0);
        t.record(pt(&[0.1]), 4.0).unwrap();
        t.record(pt(&[0.9]), -3.0).unwrap();
        let leaf = t.locate(&pt(&[0.1])).unwrap();
        let local = RegressorState::from_observations(
            KernelSpec::matern(0.5, 0.5, 1).unwrap(),
            1.0,
            leaf.regressor().points().to_vec(),
            leaf.regressor().targets().to_vec(),
        )
        .unwrap();
        for q in [0.05, 0.1, 0.2, 0.3] {
            let z = pt(&[q]);
            assert_eq!(t.query(&z).unwrap(), local.predict(&z).unwrap());
        }
        let p = t.query(&pt(&[0.1])).unwrap();
        assert_abs_diff_eq!(p.mean, 2.0, epsilon = 1e-9);
        // an empty leaf gives the prior
        let mut t = tree(1, 1.0);
        t.record(pt(&[0.1]), 4.0).unwrap();
        assert_eq!(
            t.query(&pt(&[0.7])).unwrap(),
            Prediction { mean: 0.0, stddev: 1.0 }
        );
    }

    #[test]
    fn tiling_and_capacity_under_uniform_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = tree(2, 1.0);
        for _ in 0..1500 {
            t.record(random_point(&mut rng, 2), rng.random()).unwrap();
            assert_eq!(t.capacity_violations(), 0);
        }
        let volume: f64 = t.leaves().map(|l| l.side().powi(2)).sum();
        assert_eq!(volume, 1.0);
        assert_eq!(t.leaves().count(), t.leaf_count());
        let total: usize = t.leaves().map(|l| l.obs_count()).sum();
        assert_eq!(total, 1500);
        for _ in 0..10_000 {
            let z = random_point(&mut rng, 2);
            let hits = t.leaves().filter(|l| l.contains(z.coords())).count();
            assert_eq!(hits, 1);
            assert!(t.locate(&z).unwrap().contains(z.coords()));
        }
        for leaf in t.leaves() {
            for z in leaf.regressor().points() {
                assert!(leaf.contains(z.coords()));
            }
        }
        assert!(t.max_capacity_ratio() <= 1.0);
    }

    #[test]
    fn repeated_point_deepens_only_its_branch() {
        let mut t = tree(1, 1.0);
        for _ in 0..100 {
            t.record(pt(&[0.3]), 1.0).unwrap();
        }
        let leaf = t.locate(&pt(&[0.3])).unwrap();
        assert!(leaf.obs_count() as f64 <= leaf.capacity(1.0) - 1.0);
        assert_eq!(leaf.depth(), 7);
    }

    #[test]
    fn tiny_alpha_hits_depth_cap() {
        let mut t = tree(1, 0.01);
        let mut result = Ok(0);
        for _ in 0..10 {
            result = t.record(pt(&[0.3]), 1.0);
            if result.is_err() {
                break;
            }
        }
        assert!(matches!(result, Err(Error::Config { .. })));
    }

    #[test]
    fn refit_targets_by_id() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = tree(2, 1.0);
        let mut points = Vec::new();
        for _ in 0..60 {
            let z = random_point(&mut rng, 2);
            t.record(z.clone(), 0.0).unwrap();
            points.push(z);
        }
        t.refit_targets(|id| id as f64).unwrap();
        for leaf in t.leaves() {
            for (id, y) in leaf.obs_ids().iter().zip(leaf.regressor().targets()) {
                assert_eq!(*id as f64, *y);
                assert!(leaf.contains(points[*id].coords()));
            }
        }
    }
}
