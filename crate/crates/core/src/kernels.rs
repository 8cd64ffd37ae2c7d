//! Kernels over points of the unit hypercube.
//!
//! Every kernel here has unit variance cap, `k(z, z) <= 1`. Stationary
//! kernels use the Euclidean distance. The finite-spectrum kernel has an
//! exactly known eigenstructure and is used to check information-gain bounds
//! against exact log-determinants.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point of `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point must have dimension >= 1".into()));
        }
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidInput(format!(
                "coordinate {c} lies outside [0, 1]"
            )));
        }
        Ok(Point(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Concatenates `self` and `other` into a point of dimension
    /// `self.dim() + other.dim()`.
    pub fn concat(&self, other: &Point) -> Point {
        let mut coords = Vec::with_capacity(self.dim() + other.dim());
        coords.extend_from_slice(&self.0);
        coords.extend_from_slice(&other.0);
        Point(coords)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Polynomial eigendecay metadata: `sigma_m <= c_p * m^-p * rho^alpha`, with
/// eigenfunctions growing at most like `m^(p * eta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigendecayProfile {
    pub p: f64,
    pub alpha: f64,
    pub eta: f64,
    pub c_p: f64,
}

impl EigendecayProfile {
    pub fn new(p: f64, alpha: f64, eta: f64, c_p: f64) -> Result<Self> {
        let profile = EigendecayProfile { p, alpha, eta, c_p };
        profile.validate()?;
        Ok(profile)
    }

    pub fn p_tilde(&self) -> f64 {
        self.p * (1.0 - 2.0 * self.eta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::InvalidProfile(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "alpha = {} must be positive",
                self.alpha
            )));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidProfile(format!(
                "eta = {} must be nonnegative",
                self.eta
            )));
        }
        if !(self.c_p > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "c_p = {} must be positive",
                self.c_p
            )));
        }
        if !(self.p_tilde() > 1.0) {
            return Err(Error::InvalidProfile(format!(
                "p_tilde = {} must exceed 1",
                self.p_tilde()
            )));
        }
        Ok(())
    }

    /// Upper bound on the `m`-th eigenvalue (1-based) on a cube of side `rho`.
    pub fn eigenvalue_bound(&self, m: usize, rho: f64) -> f64 {
        self.c_p * (m as f64).powf(-self.p) * rho.powf(self.alpha)
    }
}

/// Truncated Mercer expansion `k(z, z') = sum_m sigma_m phi_m(z) phi_m(z')`.
///
/// `phi_1` is the constant 1. For `m >= 2`, `phi_m(z) = prod_i cos(pi n_i z_i + theta_i)`
/// for a multi-index `n` enumerated by increasing total degree and phases
/// `theta` drawn from `feature_seed`. All features are bounded by 1 (so the
/// uniform feature bound `C_1` is 1). Eigenvalues are `c_p m^-p / Z` with
/// `Z = max(1, c_p sum_m m^-p)`, which keeps `k(z, z) <= 1`.
#[derive(Clone, Debug)]
pub struct FiniteSpectrum {
    profile: EigendecayProfile,
    num_features: usize,
    feature_seed: u64,
    dimension: usize,
    eigenvalues: Arc<[f64]>,
    frequencies: Arc<[f64]>,
    phases: Arc<[f64]>,
}

impl FiniteSpectrum {
    pub fn new(
        profile: EigendecayProfile,
        num_features: usize,
        feature_seed: u64,
        dimension: usize,
    ) -> Result<Self> {
        profile.validate()?;
        if num_features == 0 {
            return Err(Error::InvalidInput("num_features must be >= 1".into()));
        }
        if dimension == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        let raw: Vec<f64> = (1..=num_features)
            .map(|m| profile.c_p * (m as f64).powf(-profile.p))
            .collect();
        let norm = raw.iter().sum::<f64>().max(1.0);
        let eigenvalues: Vec<f64> = raw.iter().map(|s| s / norm).collect();

        let indices = multi_indices(dimension, num_features - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
        let mut frequencies = vec![0.0; num_features * dimension];
        let mut phases = vec![0.0; num_features * dimension];
        for (m, index) in indices.iter().enumerate() {
            let row = (m + 1) * dimension;
            for i in 0..dimension {
                frequencies[row + i] = index[i] as f64;
                phases[row + i] = rng.random_range(0.0..2.0 * PI);
            }
        }
        Ok(FiniteSpectrum {
            profile,
            num_features,
            feature_seed,
            dimension,
            eigenvalues: eigenvalues.into(),
            frequencies: frequencies.into(),
            phases: phases.into(),
        })
    }

    pub fn profile(&self) -> &EigendecayProfile {
        &self.profile
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn feature_seed(&self) -> u64 {
        self.feature_seed
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Feature `phi_m(z)`, 0-based `m`.
    fn phi(&self, m: usize, z: &[f64]) -> f64 {
        let row = m * self.dimension;
        z.iter()
            .enumerate()
            .map(|(i, zi)| (PI * self.frequencies[row + i] * zi + self.phases[row + i]).cos())
            .product()
    }

    fn eval(&self, z: &[f64], z2: &[f64]) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(m, s)| s * (self.phi(m, z) * self.phi(m, z2)))
            .sum()
    }
}

/// The first `count` nonzero multi-indices in `N^d`, by increasing total
/// degree and lexicographically within a degree.
fn multi_indices(d: usize, count: usize) -> Vec<Vec<u32>> {
    fn fill(d: usize, degree: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>, cap: usize) {
        if out.len() >= cap {
            return;
        }
        if prefix.len() == d - 1 {
            prefix.push(degree);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=degree).rev() {
            prefix.push(first);
            fill(d, degree - first, prefix, out, cap);
            prefix.pop();
            if out.len() >= cap {
                return;
            }
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut degree = 1;
    while out.len() < count {
        fill(d, degree, &mut Vec::with_capacity(d), &mut out, count);
        degree += 1;
    }
    out
}

#[derive(Clone, Debug)]
pub enum KernelFamily {
    Matern { nu: f64, lengthscale: f64 },
    SquaredExponential { lengthscale: f64 },
    FiniteSpectrum(FiniteSpectrum),
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Matern { .. } => "matern",
            KernelFamily::SquaredExponential { .. } => "squared_exponential",
            KernelFamily::FiniteSpectrum(_) => "finite_spectrum",
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dimension: usize,
}

impl KernelSpec {
    pub fn matern(nu: f64, lengthscale: f64, dimension: usize) -> Result<Self> {
        if !(nu > 0.0) || !(lengthscale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "matern needs nu > 0 and lengthscale > 0, got nu = {nu}, lengthscale = {lengthscale}"
            )));
        }
        Self::checked(KernelFamily::Matern { nu, lengthscale }, dimension)
    }

    pub fn squared_exponential(lengthscale: f64, dimension: usize) -> Result<Self> {
        if !(lengthscale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        Self::checked(KernelFamily::SquaredExponential { lengthscale }, dimension)
    }

    pub fn finite_spectrum(
        profile: EigendecayProfile,
        num_features: usize,
        feature_seed: u64,
        dimension: usize,
    ) -> Result<Self> {
        let fs = FiniteSpectrum::new(profile, num_features, feature_seed, dimension)?;
        Self::checked(KernelFamily::FiniteSpectrum(fs), dimension)
    }

    fn checked(family: KernelFamily, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("kernel dimension must be >= 1".into()));
        }
        Ok(KernelSpec { family, dimension })
    }

    fn check_dim(&self, z: &Point) -> Result<()> {
        if z.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: z.dim(),
            });
        }
        Ok(())
    }

    /// `k(z, z2)`.
    pub fn evaluate(&self, z: &Point, z2: &Point) -> Result<f64> {
        self.check_dim(z)?;
        self.check_dim(z2)?;
        Ok(self.eval_unchecked(z.coords(), z2.coords()))
    }

    /// `k(z, z2)` without dimension checks. Callers guarantee matching
    /// dimensions.
    pub(crate) fn eval_unchecked(&self, z: &[f64], z2: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Matern { nu, lengthscale } => {
                matern(*nu, euclidean(z, z2) / lengthscale)
            }
            KernelFamily::SquaredExponential { lengthscale } => {
                let r = euclidean(z, z2) / lengthscale;
                (-0.5 * r * r).exp()
            }
            KernelFamily::FiniteSpectrum(fs) => fs.eval(z, z2),
        }
    }

    /// `k(z, z)`.
    pub fn variance(&self, z: &Point) -> Result<f64> {
        self.evaluate(z, z)
    }

    pub fn gram(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        for z in points {
            self.check_dim(z)?;
        }
        let n = points.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_unchecked(points[i].coords(), points[j].coords());
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        Ok(gram)
    }

    /// Polynomial eigendecay metadata on a cube of side `domain_side`.
    ///
    /// Matérn(nu) in dimension d has `p = (2 nu + d) / d` and `alpha = 2 nu`.
    /// The returned `c_p` absorbs the factor `domain_side^alpha`.
    pub fn eigendecay_profile(&self, domain_side: f64) -> Result<EigendecayProfile> {
        if !(domain_side > 0.0) {
            return Err(Error::InvalidInput(format!(
                "domain side must be positive, got {domain_side}"
            )));
        }
        let base = match &self.family {
            KernelFamily::Matern { nu, .. } => {
                let d = self.dimension as f64;
                EigendecayProfile {
                    p: (2.0 * nu + d) / d,
                    alpha: 2.0 * nu,
                    eta: 0.0,
                    c_p: 1.0,
                }
            }
            KernelFamily::FiniteSpectrum(fs) => fs.profile,
            KernelFamily::SquaredExponential { .. } => {
                return Err(Error::NotPolynomialEigendecay(self.family.name().into()))
            }
        };
        Ok(EigendecayProfile {
            c_p: base.c_p * domain_side.powf(base.alpha),
            ..base
        })
    }

    /// Weighted features `[sqrt(sigma_m) phi_m(z)]` of a finite-spectrum kernel.
    pub fn finite_spectrum_features(&self, z: &Point) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        match &self.family {
            KernelFamily::FiniteSpectrum(fs) => Ok(fs
                .eigenvalues
                .iter()
                .enumerate()
                .map(|(m, s)| s.sqrt() * fs.phi(m, z.coords()))
                .collect()),
            other => Err(Error::Unsupported(format!(
                "features are only defined for finite_spectrum kernels, not {}",
                other.name()
            ))),
        }
    }
}

/// A finite kernel combination `f(z) = sum_j w_j k(z, c_j)`.
///
/// Its squared RKHS norm is the quadratic form `w^T K_cc w`.
#[derive(Clone, Debug)]
pub struct KernelExpansion {
    pub centers: Vec<Point>,
    pub weights: Vec<f64>,
}

impl KernelExpansion {
    pub fn eval(&self, spec: &KernelSpec, z: &Point) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * spec.eval_unchecked(z.coords(), c.coords()))
            .sum()
    }

    pub fn rkhs_norm_sq(&self, spec: &KernelSpec) -> f64 {
        let n = self.centers.len();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += self.weights[i]
                    * self.weights[j]
                    * spec.eval_unchecked(self.centers[i].coords(), self.centers[j].coords());
            }
        }
        q
    }

    /// Rescales the weights so the RKHS norm equals `norm` (no-op for the
    /// zero function).
    pub fn rescale_to_norm(&mut self, spec: &KernelSpec, norm: f64) {
        let q = self.rkhs_norm_sq(spec);
        if q > 0.0 {
            let scale = norm / q.sqrt();
            self.weights.iter_mut().for_each(|w| *w *= scale);
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Matérn correlation at scaled distance `r = |z - z'| / lengthscale`.
fn matern(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    if nu == 0.5 {
        (-r).exp()
    } else if nu == 1.5 {
        let s = 3f64.sqrt() * r;
        (1.0 + s) * (-s).exp()
    } else if nu == 2.5 {
        let s = 5f64.sqrt() * r;
        (1.0 + s + s * s / 3.0) * (-s).exp()
    } else {
        matern_bessel(nu, r)
    }
}

/// General Matérn form `2^(1-nu) / Gamma(nu) * x^nu * K_nu(x)` with
/// `x = sqrt(2 nu) r`.
pub(crate) fn matern_bessel(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let x = (2.0 * nu).sqrt() * r;
    // log-space to avoid overflow of x^nu K_nu(x) pieces
    let log_value = (1.0 - nu) * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(nu)
        + nu * x.ln()
        + bessel_k(nu, x).ln();
    log_value.exp().min(1.0)
}

/// Modified Bessel function of the second kind, from
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule.
/// The integrand decays double-exponentially, so the rule converges fast.
pub(crate) fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const STEP: f64 = 1.0 / 128.0;
    // factor out exp(-x) so large x does not underflow to 0 prematurely
    let integrand = |t: f64| (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
    let mut sum = 0.5 * integrand(0.0);
    let mut t = STEP;
    loop {
        let term = integrand(t);
        sum += term;
        if term < 1e-18 * sum && t > 1.0 {
            break;
        }
        t += STEP;
    }
    sum * STEP * (-x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point {
        pt(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
    }

    #[test]
    fn laplace_unit_variance() {
        let k = KernelSpec::matern(0.5, 1.0, 2).unwrap();
        let z = pt(&[0.3, 0.9]);
        assert_eq!(k.evaluate(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn laplace_at_one_lengthscale() {
        let k = KernelSpec::matern(0.5, 0.2, 2).unwrap();
        let v = k.evaluate(&pt(&[0.1, 0.5]), &pt(&[0.3, 0.5])).unwrap();
        assert_abs_diff_eq!(v, 0.367_879_441_171_442_3, epsilon = 1e-12);
    }

    #[test]
    fn single_constant_feature_is_constant_kernel() {
        let profile = EigendecayProfile::new(2.0, 1.0, 0.0, 1.0).unwrap();
        let k = KernelSpec::finite_spectrum(profile, 1, 7, 3).unwrap();
        let a = pt(&[0.1, 0.2, 0.3]);
        let b = pt(&[0.9, 0.0, 1.0]);
        assert_eq!(k.evaluate(&a, &b).unwrap(), 1.0);
        assert_eq!(k.finite_spectrum_features(&a).unwrap(), vec![1.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let k = KernelSpec::matern(1.5, 1.0, 2).unwrap();
        let err = k.evaluate(&pt(&[0.1]), &pt(&[0.1, 0.2])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn points_outside_unit_cube_are_rejected() {
        assert!(Point::new(vec![0.5, 1.0000001]).is_err());
        assert!(Point::new(vec![]).is_err());
        assert!(Point::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn gram_edge_cases() {
        let k = KernelSpec::matern(0.5, 0.5, 1).unwrap();
        assert_eq!(k.gram(&[]).unwrap().shape(), (0, 0));
        let g = k.gram(&[pt(&[0.4])]).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn gram_matches_elementwise_and_is_psd() {
        let k = KernelSpec::matern(0.5, 0.3, 2).unwrap();
        let pts = vec![pt(&[0.1, 0.2]), pt(&[0.5, 0.5]), pt(&[0.9, 0.1])];
        let g = k.gram(&pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g[(i, j)], k.evaluate(&pts[i], &pts[j]).unwrap());
            }
        }
        let min_eig = g.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-10);
    }

    #[test]
    fn matern_profiles() {
        let p = KernelSpec::matern(0.5, 1.0, 2)
            .unwrap()
            .eigendecay_profile(1.0)
            .unwrap();
        assert_abs_diff_eq!(p.p, 1.5);
        assert_abs_diff_eq!(p.alpha, 1.0);
        let p = KernelSpec::matern(2.5, 1.0, 1)
            .unwrap()
            .eigendecay_profile(1.0)
            .unwrap();
        assert_abs_diff_eq!(p.p, 6.0);
        assert_abs_diff_eq!(p.alpha, 5.0);
        // side scaling goes into c_p
        let p = KernelSpec::matern(0.5, 1.0, 1)
            .unwrap()
            .eigendecay_profile(0.25)
            .unwrap();
        assert_abs_diff_eq!(p.c_p, 0.25);
    }

    #[test]
    fn finite_spectrum_profile_is_identity() {
        let profile = EigendecayProfile::new(3.0, 2.0, 0.1, 0.5).unwrap();
        let k = KernelSpec::finite_spectrum(profile, 10, 1, 2).unwrap();
        assert_eq!(k.eigendecay_profile(1.0).unwrap(), profile);
    }

    #[test]
    fn squared_exponential_has_no_polynomial_profile() {
        let k = KernelSpec::squared_exponential(0.5, 2).unwrap();
        assert!(matches!(
            k.eigendecay_profile(1.0),
            Err(Error::NotPolynomialEigendecay(_))
        ));
        assert!(matches!(
            k.finite_spectrum_features(&pt(&[0.1, 0.1])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn features_reproduce_kernel() {
        let profile = EigendecayProfile::new(2.0, 1.0, 0.0, 1.0).unwrap();
        let k = KernelSpec::finite_spectrum(profile, 40, 11, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_point(&mut rng, 2);
            let b = random_point(&mut rng, 2);
            let fa = k.finite_spectrum_features(&a).unwrap();
            let fb = k.finite_spectrum_features(&b).unwrap();
            let dot_ab: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
            let dot_aa: f64 = fa.iter().map(|x| x * x).sum();
            assert_abs_diff_eq!(dot_ab, k.evaluate(&a, &b).unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(dot_aa, k.evaluate(&a, &a).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn finite_spectrum_eigenvalues_respect_profile() {
        let profile = EigendecayProfile::new(2.0, 1.0, 0.0, 1.0).unwrap();
        let k = KernelSpec::finite_spectrum(profile, 200, 3, 1).unwrap();
        let KernelFamily::FiniteSpectrum(fs) = &k.family else {
            unreachable!()
        };
        let sigma = fs.eigenvalues();
        assert!(sigma.iter().sum::<f64>() <= 1.0 + 1e-15);
        for (m, s) in sigma.iter().enumerate() {
            assert!(*s <= profile.eigenvalue_bound(m + 1, 1.0));
            if m > 0 {
                assert!(*s < sigma[m - 1]);
            }
        }
    }

    #[test]
    fn multi_indices_by_degree() {
        let idx = multi_indices(2, 5);
        assert_eq!(idx, vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(1, 3), vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn bessel_route_agrees_with_closed_forms() {
        for r in [1e-6, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
            assert_abs_diff_eq!(matern_bessel(0.5, r), (-r).exp(), epsilon = 1e-12);
            let s = 3f64.sqrt() * r;
            assert_abs_diff_eq!(matern_bessel(1.5, r), (1.0 + s) * (-s).exp(), epsilon = 1e-12);
            let s = 5f64.sqrt() * r;
            assert_abs_diff_eq!(
                matern_bessel(2.5, r),
                (1.0 + s + s * s / 3.0) * (-s).exp(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn general_matern_is_monotone_in_distance() {
        let mut last = 1.0;
        for i in 1..100 {
            let v = matern_bessel(1.2, i as f64 * 0.05);
            assert!(v < last && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn symmetry_psd_and_unit_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let profile = EigendecayProfile::new(2.0, 1.0, 0.0, 1.0).unwrap();
        let kernels = [
            KernelSpec::matern(0.5, 0.3, 3).unwrap(),
            KernelSpec::matern(1.5, 0.3, 3).unwrap(),
            KernelSpec::matern(0.8, 0.3, 3).unwrap(),
            KernelSpec::squared_exponential(0.3, 3).unwrap(),
            KernelSpec::finite_spectrum(profile, 30, 2, 3).unwrap(),
        ];
        for k in &kernels {
            for _ in 0..1000 {
                let a = random_point(&mut rng, 3);
                let b = random_point(&mut rng, 3);
                let ab = k.evaluate(&a, &b).unwrap();
                assert_eq!(ab, k.evaluate(&b, &a).unwrap());
                let aa = k.variance(&a).unwrap();
                let bb = k.variance(&b).unwrap();
                assert!(ab <= (aa * bb).sqrt() + 1e-15 && aa <= 1.0 + 1e-15, "{ab} {aa}");
            }
            for _ in 0..100 {
                let n = rng.random_range(1..=30);
                let pts: Vec<Point> = (0..n).map(|_| random_point(&mut rng, 3)).collect();
                let g = k.gram(&pts).unwrap();
                assert!(g.symmetric_eigenvalues().min() >= -1e-8);
            }
        }
    }
}
