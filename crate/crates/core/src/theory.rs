//! Analytic bound calculators: maximum information gain, covering numbers of
//! the RKHS ball and of the optimistic Q-function class, the confidence-width
//! fixed point, and the regret bound.
//!
//! Constants hidden in big-O statements are explicit fields of
//! [`BoundConstants`] and default to 1.

use crate::error::{Error, Result};
use crate::kernels::EigendecayProfile;
use crate::regression::predictor_norm_bound;

pub const BETA_MAX_ITERATIONS: usize = 200;
pub const BETA_RELATIVE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    /// RKHS ball: truncation dimension constant.
    pub c2: f64,
    /// RKHS ball: finite-dimensional covering constant.
    pub c3: f64,
    /// Uncertainty class: truncation dimension constant.
    pub c4: f64,
    /// Uncertainty class: finite-dimensional covering constant.
    pub c5: f64,
    /// Growth of the number of cover elements.
    pub c6: f64,
    /// Regret bound prefactor.
    pub regret: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            c5: 1.0,
            c6: 1.0,
            regret: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundParams {
    /// Eigendecay on the unit cube; `rho` rescales it.
    pub profile: EigendecayProfile,
    pub lambda: f64,
    /// Uniform bound on the scaled eigenfunctions.
    pub c1: f64,
    /// Side of the hypercube domain.
    pub rho: f64,
    pub horizon: usize,
    pub episodes: usize,
    pub delta: f64,
    /// Dimension `d` of the state-action space.
    pub dimension: usize,
    /// Matérn smoothness, when the kernel is Matérn.
    pub matern_nu: Option<f64>,
    pub constants: BoundConstants,
}

impl BoundParams {
    fn p_tilde(&self) -> Result<f64> {
        self.profile.validate()?;
        Ok(self.profile.p_tilde())
    }

    fn rho_alpha(&self) -> f64 {
        self.rho.powf(self.profile.alpha)
    }

    pub fn with_rho(&self, rho: f64) -> BoundParams {
        BoundParams {
            rho,
            ..self.clone()
        }
    }

    /// The uncertainty-class exponent `2 / (p_tilde - 1)` exceeds 1 when
    /// `p_tilde < 3`, which makes the confidence-width map superlinear.
    pub fn steep_uncertainty_exponent(&self) -> bool {
        self.profile.p_tilde() <= 3.0
    }
}

/// Closed-form truncation dimension
/// `D = C t^(1/p~) rho^(alpha/p~) max(log t, 1)^(-1/p~)` with
/// `C = (C_1^2 C_p / ((p~ - 1) lambda^2))^(1/p~)`, rounded up to an integer >= 1.
pub fn info_gain_truncation(params: &BoundParams, t: usize) -> Result<usize> {
    let pt = params.p_tilde()?;
    let profile = &params.profile;
    let c = (params.c1 * params.c1 * profile.c_p / ((pt - 1.0) * params.lambda * params.lambda))
        .powf(1.0 / pt);
    let tf = t as f64;
    let log_t = tf.ln().max(1.0);
    let d = c * tf.powf(1.0 / pt) * params.rho.powf(profile.alpha / pt) * log_t.powf(-1.0 / pt);
    Ok(d.ceil().max(1.0) as usize)
}

/// `Gamma(t) <= D/2 log(1 + t / (lambda^2 D)) + t eps_D / (2 lambda^2)` with
/// `eps_D = C_1^2 C_p rho^alpha D^(1 - p~) / (p~ - 1)` and `D` from
/// [`info_gain_truncation`].
///
/// Rounding `D` up makes the raw expression dip slightly where `D` steps, so
/// the returned value is its running maximum over `1..=t`. Every earlier
/// value is at most this one, so the envelope is non-decreasing and still
/// bounds `Gamma(t)`. Within a run of equal `D` the expression increases with
/// `t`, so only the last `t` of each earlier run is evaluated.
pub fn info_gain_bound(params: &BoundParams, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidInput("t must be >= 1".into()));
    }
    let d_t = info_gain_truncation(params, t)?;
    let mut best = info_gain_bound_at(params, t, d_t);
    for d in info_gain_truncation(params, 1)?..d_t {
        // last t' < t whose truncation is at most d
        let (mut lo, mut hi) = (1usize, t - 1);
        if info_gain_truncation(params, lo)? > d {
            continue;
        }
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if info_gain_truncation(params, mid)? <= d {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        if info_gain_truncation(params, lo)? == d {
            best = best.max(info_gain_bound_at(params, lo, d));
        }
    }
    Ok(best)
}

/// The information-gain bound evaluated at truncation dimension `d`.
pub fn info_gain_bound_at(params: &BoundParams, t: usize, d: usize) -> f64 {
    let pt = params.profile.p_tilde();
    let lam2 = params.lambda * params.lambda;
    let (tf, df) = (t as f64, d as f64);
    let eps_d = params.c1 * params.c1 * params.profile.c_p * params.rho_alpha() / (pt - 1.0)
        * df.powf(1.0 - pt);
    0.5 * df * (tf / (lam2 * df)).ln_1p() + tf * eps_d / (2.0 * lam2)
}

/// `log N_{k,R}(eps) <= C_2 C_3 (R^2 rho^alpha / eps^2)^(1/(p~-1)) (1 + log(R/eps))`.
pub fn rkhs_covering_bound(params: &BoundParams, r: f64, eps: f64) -> Result<f64> {
    let pt = params.p_tilde()?;
    if !(eps > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need R > 0 and eps > 0, got R = {r}, eps = {eps}"
        )));
    }
    if eps > r {
        return Err(Error::DegenerateInput(format!(
            "eps = {eps} exceeds the ball radius R = {r}"
        )));
    }
    let c = params.constants.c2 * params.constants.c3;
    Ok(c * (r * r * params.rho_alpha() / (eps * eps)).powf(1.0 / (pt - 1.0)) * (1.0 + (r / eps).ln()))
}

/// `log N_{k,b}(eps) <= C_4^2 C_5 (rho^alpha / eps^2)^(2/(p~-1)) (1 + log(1/eps))`;
/// zero for `eps >= 1` since uncertainty functions lie in `[0, 1]`.
pub fn uncertainty_covering_bound(params: &BoundParams, eps: f64) -> Result<f64> {
    let pt = params.p_tilde()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if eps >= 1.0 {
        return Ok(0.0);
    }
    let k = &params.constants;
    Ok(k.c4 * k.c4 * k.c5 * (params.rho_alpha() / (eps * eps)).powf(2.0 / (pt - 1.0))
        * (1.0 - eps.ln()))
}

/// Itemized covering bound of `Q(z) = min(Q_0(z) + beta b(z), H - h + 1)` with
/// `|Q_0| <= R`, `beta <= B`: the RKHS ball at `eps/3`, the interval `[0, B]`
/// at `eps/3` and the uncertainty class at `eps/(3B)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoveringBreakdown {
    pub rkhs: f64,
    pub interval: f64,
    pub uncertainty: f64,
    pub total: f64,
}

pub fn ucb_class_covering_bound(
    params: &BoundParams,
    r: f64,
    b: f64,
    eps: f64,
) -> Result<CoveringBreakdown> {
    if !(eps > 0.0) || r < 0.0 || b < 0.0 {
        return Err(Error::InvalidInput(format!(
            "need eps > 0, R >= 0, B >= 0, got eps = {eps}, R = {r}, B = {b}"
        )));
    }
    let third = eps / 3.0;
    // a ball of radius R <= eps/3 is covered by the zero function
    let rkhs = if third >= r {
        0.0
    } else {
        rkhs_covering_bound(params, r, third)?
    };
    let interval = (3.0 * b / eps).ln_1p();
    let uncertainty = if b == 0.0 {
        0.0
    } else {
        uncertainty_covering_bound(params, eps / (3.0 * b))?
    };
    Ok(CoveringBreakdown {
        rkhs,
        interval,
        uncertainty,
        total: rkhs + interval + uncertainty,
    })
}

/// The pieces of the confidence-width inequality at a given `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaTerms {
    pub eps: f64,
    pub norm_radius: f64,
    pub info_gain: f64,
    pub covering: f64,
    pub rhs: f64,
}

/// Right-hand side of
/// `beta >= H + 1 + H/sqrt(2) sqrt(Gamma(t) + log N(eps; R_T, beta) + 1 + log(2TH/delta)) + 3 sqrt(t) eps / lambda`
/// with `eps = H sqrt(log(TH/delta)) / sqrt(N)` on a cover element of side
/// `rho_element` holding `N` observations.
pub fn beta_rhs(
    params: &BoundParams,
    t: usize,
    n_element: usize,
    rho_element: f64,
    beta: f64,
) -> Result<BetaTerms> {
    validate_beta_inputs(params, t, n_element, rho_element)?;
    let local = params.with_rho(rho_element);
    let h = params.horizon as f64;
    let big_t = params.episodes as f64;
    let delta = params.delta;
    let log_thd = (big_t * h / delta).ln().max(1.0);
    let eps = h * log_thd.sqrt() / (n_element as f64).sqrt();
    let info_gain = info_gain_bound(&local, t)?;
    let gamma_horizon = info_gain_bound(&local, params.episodes.max(1))?;
    let norm_radius = predictor_norm_bound(gamma_horizon, params.lambda, h + 1.0, h / 2.0, delta / 2.0)?;
    let covering = ucb_class_covering_bound(&local, norm_radius, beta, eps)?.total;
    let rhs = h + 1.0
        + h / 2f64.sqrt()
            * (info_gain + covering + 1.0 + (2.0 * big_t * h / delta).ln()).sqrt()
        + 3.0 * (t as f64).sqrt() * eps / params.lambda;
    Ok(BetaTerms {
        eps,
        norm_radius,
        info_gain,
        covering,
        rhs,
    })
}

fn validate_beta_inputs(params: &BoundParams, t: usize, n_element: usize, rho: f64) -> Result<()> {
    if t == 0 || n_element == 0 {
        return Err(Error::InvalidInput("t and N_element must be >= 1".into()));
    }
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "delta must lie in (0, 1), got {}",
            params.delta
        )));
    }
    if params.horizon == 0 || params.episodes == 0 {
        return Err(Error::InvalidInput("horizon and episodes must be >= 1".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidInput(format!("element side {rho} outside (0, 1]")));
    }
    Ok(())
}

/// Smallest fixed point of `beta -> rhs(beta)`, iterated from `H + 1`.
pub fn solve_beta(params: &BoundParams, t: usize, n_element: usize, rho_element: f64) -> Result<f64> {
    let mut beta = params.horizon as f64 + 1.0;
    for _ in 0..BETA_MAX_ITERATIONS {
        let next = beta_rhs(params, t, n_element, rho_element, beta)?.rhs;
        if !next.is_finite() {
            return Err(Error::NoFixedPoint {
                iterations: BETA_MAX_ITERATIONS,
                last: next,
            });
        }
        if (next - beta).abs() <= BETA_RELATIVE_TOL * next {
            return Ok(next);
        }
        beta = next;
    }
    Err(Error::NoFixedPoint {
        iterations: BETA_MAX_ITERATIONS,
        last: beta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegretBound {
    pub value: f64,
    /// `(d + alpha/2) / (d + alpha)`.
    pub exponent: f64,
    /// `(nu + d) / (2 nu + d)` for Matérn kernels.
    pub matern_exponent: Option<f64>,
}

pub fn regret_exponent(d: f64, alpha: f64) -> f64 {
    (d + alpha / 2.0) / (d + alpha)
}

pub fn matern_regret_exponent(nu: f64, d: f64) -> f64 {
    (nu + d) / (2.0 * nu + d)
}

/// `C H^2 T^e log(T) sqrt(log(H / delta))` with `e = (d + alpha/2) / (d + alpha)`.
pub fn regret_bound(params: &BoundParams) -> RegretBound {
    let d = params.dimension as f64;
    let exponent = regret_exponent(d, params.profile.alpha);
    let h = params.horizon as f64;
    let t = params.episodes as f64;
    let value = params.constants.regret
        * h
        * h
        * t.powf(exponent)
        * t.ln()
        * (h / params.delta).ln().max(0.0).sqrt();
    RegretBound {
        value,
        exponent,
        matern_exponent: params.matern_nu.map(|nu| matern_regret_exponent(nu, d)),
    }
}

/// `C_6 T^(d / (d + alpha))`, the growth of the number of cover elements.
pub fn cover_growth_bound(params: &BoundParams, episodes: usize) -> f64 {
    let d = params.dimension as f64;
    params.constants.c6 * (episodes as f64).powf(d / (d + params.profile.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(p: f64, alpha: f64) -> BoundParams {
        BoundParams {
            profile: EigendecayProfile::new(p, alpha, 0.0, 1.0).unwrap(),
            lambda: 1.0,
            c1: 1.0,
            rho: 1.0,
            horizon: 3,
            episodes: 1000,
            delta: 0.1,
            dimension: 2,
            matern_nu: None,
            constants: BoundConstants::default(),
        }
    }

    #[test]
    fn info_gain_bound_well_defined_and_monotone() {
        for p in [1.5, 2.0, 4.0] {
            let prm = params(p, 1.0);
            let first = info_gain_bound(&prm, 1).unwrap();
            assert!(first.is_finite() && first > 0.0);
            let mut last = first;
            for t in 2..=10_000 {
                let v = info_gain_bound(&prm, t).unwrap();
                assert!(v >= last, "p = {p}, t = {t}: {v} < {last}");
                let closed = info_gain_bound_at(&prm, t, info_gain_truncation(&prm, t).unwrap());
                assert!(v >= closed);
                last = v;
            }
        }
        assert!(info_gain_bound(&params(2.0, 1.0), 0).is_err());
    }

    #[test]
    fn info_gain_bound_rejects_bad_profile() {
        let mut prm = params(2.0, 1.0);
        prm.profile.eta = 0.4; // p_tilde = 0.4
        assert!(matches!(info_gain_bound(&prm, 10), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn rkhs_covering_examples() {
        let prm = params(2.0, 1.0);
        let v = rkhs_covering_bound(&prm, 2.0, 0.5).unwrap();
        assert_abs_diff_eq!(v, 16.0 * (1.0 + 4f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 38.180_709_777_918_25, epsilon = 1e-9);
        // boundary R = eps
        assert_abs_diff_eq!(rkhs_covering_bound(&prm, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            rkhs_covering_bound(&prm, 1.0, 2.0),
            Err(Error::DegenerateInput(_))
        ));
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let v = rkhs_covering_bound(&prm, 2.0, i as f64 * 0.02).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ucb_class_breakdown() {
        let prm = params(4.0, 1.0);
        let zero_b = ucb_class_covering_bound(&prm, 2.0, 0.0, 0.3).unwrap();
        assert_eq!(zero_b.interval, 0.0);
        assert_eq!(zero_b.uncertainty, 0.0);
        assert_abs_diff_eq!(
            zero_b.rkhs,
            rkhs_covering_bound(&prm, 2.0, 0.1).unwrap(),
            epsilon = 1e-12
        );
        let mut last = zero_b.total;
        for i in 1..200 {
            let c = ucb_class_covering_bound(&prm, 2.0, i as f64 * 0.1, 0.3).unwrap();
            assert_eq!(c.total, c.rkhs + c.interval + c.uncertainty);
            assert!(c.total >= last);
            last = c.total;
        }
    }

    #[test]
    fn solve_beta_is_a_fixed_point() {
        let prm = params(6.0, 5.0);
        let beta = solve_beta(&prm, 100, 100, 0.25).unwrap();
        let rhs = beta_rhs(&prm, 100, 100, 0.25, beta).unwrap().rhs;
        assert!(beta >= rhs - 1e-6);
        assert!((beta - rhs).abs() / beta < 1e-6);
        assert!(beta >= prm.horizon as f64 + 1.0);
    }

    #[test]
    fn solve_beta_monotone_in_t() {
        let prm = params(6.0, 5.0);
        let mut last = 0.0;
        for t in [1, 2, 5, 10, 50, 100, 500, 1000] {
            let beta = solve_beta(&prm, t, 50, 0.5).unwrap();
            assert!(beta >= last);
            last = beta;
        }
    }

    #[test]
    fn solve_beta_reports_divergence() {
        // p_tilde = 1.5: the covering term grows like beta^8 under the root
        let prm = params(1.5, 1.0);
        assert!(prm.steep_uncertainty_exponent());
        assert!(matches!(
            solve_beta(&prm, 1000, 1000, 1.0),
            Err(Error::NoFixedPoint { .. })
        ));
    }

    #[test]
    fn regret_exponents() {
        let prm = params(1.5, 1.0);
        let rb = regret_bound(&prm);
        assert_abs_diff_eq!(rb.exponent, 5.0 / 6.0, epsilon = 1e-15);
        assert!(rb.value > 0.0);
        assert_abs_diff_eq!(matern_regret_exponent(0.5, 1.0), 0.75, epsilon = 1e-15);
        for alpha in [0.1, 1.0, 3.0, 10.0] {
            assert!(regret_exponent(3.0, alpha) < 1.0);
        }
    }

    #[test]
    fn matern_substitution_identity() {
        for nu in [0.5, 1.0, 1.5, 2.5, 3.7] {
            for d in 1..=4 {
                let d = d as f64;
                let alpha = 2.0 * nu;
                assert_abs_diff_eq!(
                    regret_exponent(d, alpha),
                    matern_regret_exponent(nu, d),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn calculators_are_pure() {
        let prm = params(6.0, 5.0);
        assert_eq!(
            info_gain_bound(&prm, 77).unwrap().to_bits(),
            info_gain_bound(&prm, 77).unwrap().to_bits()
        );
        assert_eq!(
            solve_beta(&prm, 30, 30, 0.5).unwrap().to_bits(),
            solve_beta(&prm, 30, 30, 0.5).unwrap().to_bits()
        );
    }

    #[test]
    fn cover_growth_exponent() {
        let prm = params(1.5, 1.0);
        let ratio = cover_growth_bound(&prm, 8000) / cover_growth_bound(&prm, 1000);
        assert_abs_diff_eq!(ratio, 8f64.powf(2.0 / 3.0), epsilon = 1e-9);
    }
}
