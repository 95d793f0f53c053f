//! Closed-form power allocation maximizing the weighted sum of the common
//! and confidential rates, combined with dichotomic searches for the two
//! scalar duals.
//!
//! The weighted boundary problem is a max-min over the two users' common
//! rates. Its solution coincides with the solution of one of three auxiliary
//! problems: common rate pinned to user 1, to user 2, or mixed with a weight
//! `mu` chosen so both users decode the common message at the same rate. Each
//! auxiliary problem decomposes per sub-channel into closed forms driven by a
//! single power price `lambda`; `lambda` (and `mu` for the mixed problem) are
//! then found by bisection, and a three-step cascade selects which auxiliary
//! solution is the true optimum.

use crate::channel::{GainBounds, Partition, Subset};
use crate::rates::{common_rate_user, rate_triple, PowerAllocation, RateTriple, Weights};
use crate::{other, Error, Result, USERS};
use serde::{Deserialize, Serialize};

const LN_2: f64 = std::f64::consts::LN_2;

/// Dual variables of the weighted sum-rate problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Price of total power.
    pub lambda: f64,
    /// Common-rate mixing weight in (0,1); only used by the mixed problem.
    pub mu: Option<f64>,
}

/// Which denominator the follower-set confidential threshold uses. The main
/// statement and its derivation disagree in one subscript; both variants are
/// kept selectable so the oracle suite can adjudicate. `LowerOwn` compares
/// against the follower's guaranteed lower gain and is the variant the
/// stationarity analysis supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FollowerThreshold {
    /// Denominator alpha_follower^- - alpha_leader^+.
    #[default]
    LowerOwn,
    /// Denominator alpha_follower^+ - alpha_leader^+.
    UpperOwn,
}

/// Solver knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative tolerance on |total power - P| for the lambda search.
    pub lambda_tol: f64,
    /// Absolute tolerance in bits on the common-rate gap for the mu search;
    /// also the tie band of the step-selection cascade.
    pub mu_tol: f64,
    /// Iteration cap for each bisection and for bracket growth.
    pub max_iters: u32,
    /// Geometric factor used when growing the lambda bracket downward.
    pub bracket_growth: f64,
    /// Threshold variant for confidential power on the follower's set.
    pub follower_threshold: FollowerThreshold,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_tol: 1e-9,
            mu_tol: 1e-6,
            max_iters: 200,
            bracket_growth: 2.0,
            follower_threshold: FollowerThreshold::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_tol > 0.0) || !(self.mu_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !(self.bracket_growth > 1.0) {
            return Err(Error::InvalidInput("bracket_growth must exceed 1".into()));
        }
        Ok(())
    }
}

/// The auxiliary problem being solved at a fixed dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// Common rate pinned to `leader`'s channel (leader 0 = first problem,
    /// leader 1 = the user-swapped second problem).
    Pinned { leader: usize },
    /// Common rate mixed across users with weight `mu` on user 1.
    Mixed { mu: f64 },
}

// ---------------------------------------------------------------------------
// Appendix derivative functions. These drive both the closed forms and the
// stationarity residual checks in the oracle module.
// ---------------------------------------------------------------------------

/// Marginal utility of common power stacked on top of total power `x`,
/// for a single-user common rate with gain `a`.
#[inline]
pub fn u_common(a: f64, w0: f64, lambda: f64, x: f64) -> f64 {
    w0 / (2.0 * LN_2) * a / (1.0 + a * x) - lambda
}

/// Marginal utility of confidential power at level `x` with intended gain
/// `a` and eavesdropper gain `b`.
#[inline]
pub fn u_confidential(a: f64, b: f64, w: f64, lambda: f64, x: f64) -> f64 {
    w / (2.0 * LN_2) * (a / (1.0 + a * x) - b / (1.0 + b * x)) - lambda
}

/// Marginal utility of common power for the mixed problem: `mu` weighs user
/// 1's gain `a1`, `1 - mu` user 2's gain `a2`.
#[inline]
pub fn u_common_mixed(a1: f64, a2: f64, w0: f64, lambda: f64, mu: f64, x: f64) -> f64 {
    w0 / (2.0 * LN_2) * (mu * a1 / (1.0 + a1 * x) + (1.0 - mu) * a2 / (1.0 + a2 * x)) - lambda
}

// ---------------------------------------------------------------------------
// Scalar closed-form terms.
// ---------------------------------------------------------------------------

/// Largest root of the confidential derivative: the water level for pure
/// confidential power. `delta = 1/b - 1/a` must be positive for a root to
/// exist at positive power.
#[inline]
fn beta_term(a: f64, b: f64, w: f64, lambda: f64) -> f64 {
    let delta = 1.0 / b - 1.0 / a;
    if delta <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * (delta * (delta + 2.0 * w / (lambda * LN_2))).sqrt() - 0.5 * (1.0 / a + 1.0 / b)
}

/// Root of the single-user common derivative: the common water level.
#[inline]
fn gamma_term(a: f64, w0: f64, lambda: f64) -> f64 {
    w0 / (2.0 * lambda * LN_2) - 1.0 / a
}

/// Intersection of the confidential and common derivatives when both use the
/// same intended gain `a` (leader's own set).
#[inline]
fn zeta_term(a: f64, b: f64, w: f64, w0: f64) -> f64 {
    let delta = 1.0 / b - 1.0 / a;
    (w / w0) * delta - 1.0 / b
}

/// Larger intersection of the confidential derivative (gains `a`, `b`) with a
/// common derivative using a different gain `g` (follower's set). Returns the
/// discriminant and the intersection point.
#[inline]
fn theta_term(a: f64, b: f64, g: f64, w: f64, w0: f64) -> (f64, f64) {
    let delta = 1.0 / b - 1.0 / a;
    let r = w / w0;
    let big_delta =
        r * r * delta * delta + 2.0 * r * delta * (2.0 / g - 1.0 / a - 1.0 / b) + delta * delta;
    if big_delta < 0.0 {
        return (big_delta, f64::NEG_INFINITY);
    }
    let theta = 0.5 * (r * delta - (1.0 / a + 1.0 / b) + big_delta.sqrt());
    (big_delta, theta)
}

/// Positive root of the mixed common derivative with gains `a_own`, `a_other`
/// and mixing share `mu_own` on the own gain.
#[inline]
fn nu_term(a_own: f64, a_other: f64, w0: f64, lambda: f64, mu_own: f64) -> f64 {
    let k = w0 / (2.0 * lambda * LN_2);
    let d = 1.0 / a_other - 1.0 / a_own;
    let inner = (d - k) * (d - k) + 4.0 * k * mu_own * d;
    // inner >= 0 for mu in (0,1): it is (d)^2 + k^2 + 2kd(2 mu - 1).
    0.5 * inner.max(0.0).sqrt() - 0.5 * (1.0 / a_other + 1.0 / a_own - k)
}

/// Monic quadratic coefficients (B, C) of the intersection between the
/// confidential derivative (own gain `a`, eavesdropper `b`, weight `w`) and
/// the mixed common derivative (gains `a`, `c`, share `mu_own` on `a`). The
/// larger root is the split point `xi`; `B^2 - 4C` is its discriminant.
#[inline]
fn xi_quadratic(a: f64, b: f64, c: f64, w: f64, w0: f64, mu_own: f64) -> (f64, f64) {
    let delta = 1.0 / b - 1.0 / a;
    let mu_bar = 1.0 - mu_own;
    let qb = 1.0 / b + mu_own / c + mu_bar / a - (w / w0) * delta;
    let qc = mu_own / (b * c) + mu_bar / (a * b) - (w / w0) * delta / c;
    (qb, qc)
}

// ---------------------------------------------------------------------------
// Helper-term table (public surface mirroring the per-user definitions).
// ---------------------------------------------------------------------------

/// All per-sub-channel helper terms for one user at a dual point. The mixed
/// terms are present only when the dual carries `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct HelperTerms {
    pub delta: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub zeta: Vec<f64>,
    pub big_delta: Vec<f64>,
    pub theta: Vec<f64>,
    pub nu: Option<Vec<f64>>,
    pub big_lambda: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
}

/// Evaluates every helper term for `user` (0-based) at the dual point.
///
/// `delta`, `beta` describe the user's own confidential direction against the
/// other user's eavesdropping gain; `gamma`/`zeta` the pinned common rate on
/// the user's own channel; `big_delta`/`theta` the intersection with a common
/// rate pinned to the *other* user's channel; `nu`/`big_lambda`/`xi` the
/// mixed-common variants (require `mu`).
pub fn helper_terms(
    bounds: &GainBounds,
    weights: &Weights,
    dual: &DualState,
    user: usize,
) -> Result<HelperTerms> {
    if !(dual.lambda > 0.0) {
        return Err(Error::LambdaNotPositive);
    }
    bounds.require_positive()?;
    for u in 0..USERS {
        for idx in 0..bounds.subchannels() {
            if bounds.plus(u, idx) <= 0.0 {
                return Err(Error::NonPositiveGain {
                    user: u + 1,
                    subchannel: idx,
                    value: bounds.plus(u, idx),
                });
            }
        }
    }
    let l = bounds.subchannels();
    let w = weights.confidential(user);
    let mu_own = dual.mu.map(|mu| if user == 0 { mu } else { 1.0 - mu });

    let mut terms = HelperTerms {
        delta: Vec::with_capacity(l),
        beta: Vec::with_capacity(l),
        gamma: Vec::with_capacity(l),
        zeta: Vec::with_capacity(l),
        big_delta: Vec::with_capacity(l),
        theta: Vec::with_capacity(l),
        nu: mu_own.map(|_| Vec::with_capacity(l)),
        big_lambda: mu_own.map(|_| Vec::with_capacity(l)),
        xi: mu_own.map(|_| Vec::with_capacity(l)),
    };
    for idx in 0..l {
        let a = bounds.minus(user, idx);
        let b = bounds.plus(other(user), idx);
        let g = bounds.minus(other(user), idx);
        terms.delta.push(1.0 / b - 1.0 / a);
        terms.beta.push(beta_term(a, b, w, dual.lambda));
        terms.gamma.push(gamma_term(a, weights.w0, dual.lambda));
        terms.zeta.push(zeta_term(a, b, w, weights.w0));
        let (bd, th) = theta_term(a, b, g, w, weights.w0);
        terms.big_delta.push(bd);
        terms.theta.push(th);
        if let Some(mu_own) = mu_own {
            let (qb, qc) = xi_quadratic(a, b, g, w, weights.w0, mu_own);
            let disc = qb * qb - 4.0 * qc;
            terms
                .nu
                .as_mut()
                .unwrap()
                .push(nu_term(a, g, weights.w0, dual.lambda, mu_own));
            terms.big_lambda.as_mut().unwrap().push(disc);
            terms
                .xi
                .as_mut()
                .unwrap()
                .push(if disc >= 0.0 { 0.5 * (-qb + disc.sqrt()) } else { f64::NAN });
        }
    }
    Ok(terms)
}

// ---------------------------------------------------------------------------
// Per-sub-channel closed forms at a fixed dual point.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct SolveAtDual {
    p0: Vec<f64>,
    conf: [Vec<f64>; 2],
    theta_fallback: bool,
    nu_adjusted: bool,
}

impl SolveAtDual {
    fn total(&self) -> f64 {
        self.p0.iter().sum::<f64>()
            + self.conf[0].iter().sum::<f64>()
            + self.conf[1].iter().sum::<f64>()
    }

    fn into_allocation(self, budget: f64) -> PowerAllocation {
        let [p1, p2] = self.conf;
        PowerAllocation {
            p0: self.p0,
            p1,
            p2,
            budget,
        }
    }
}

fn conf_set_user(subset: Subset) -> Option<usize> {
    match subset {
        Subset::S1 => Some(0),
        Subset::S2 => Some(1),
        Subset::S3 => None,
    }
}

/// Closed-form solution of the pinned or mixed problem at a fixed dual point.
fn solve_at_dual(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    lambda: f64,
    kind: ProblemKind,
    cfg: &SolverConfig,
) -> SolveAtDual {
    let l = bounds.subchannels();
    let mut out = SolveAtDual {
        p0: vec![0.0; l],
        conf: [vec![0.0; l], vec![0.0; l]],
        theta_fallback: false,
        nu_adjusted: false,
    };
    for idx in 0..l {
        match kind {
            ProblemKind::Pinned { leader } => {
                let follower = other(leader);
                let gamma = gamma_term(bounds.minus(leader, idx), weights.w0, lambda);
                match conf_set_user(partition.subset(idx)) {
                    Some(user) if user == leader => {
                        // Leader's own set: single intersection zeta.
                        let a = bounds.minus(leader, idx);
                        let b = bounds.plus(follower, idx);
                        let w = weights.confidential(leader);
                        if a > b && w * (a - b) > weights.w0 * a {
                            let zeta = zeta_term(a, b, w, weights.w0);
                            let beta = beta_term(a, b, w, lambda);
                            out.conf[leader][idx] = beta.min(zeta).max(0.0);
                            out.p0[idx] = (gamma - zeta).max(0.0);
                        } else {
                            out.p0[idx] = gamma.max(0.0);
                        }
                    }
                    Some(user) => {
                        // Follower's set: two intersection points, use theta.
                        debug_assert_eq!(user, follower);
                        let a = bounds.minus(follower, idx);
                        let b = bounds.plus(leader, idx);
                        let g = bounds.minus(leader, idx);
                        let w = weights.confidential(follower);
                        let denom = match cfg.follower_threshold {
                            FollowerThreshold::LowerOwn => a - b,
                            FollowerThreshold::UpperOwn => bounds.plus(follower, idx) - b,
                        };
                        if denom > 0.0 && w * denom > weights.w0 * g {
                            let (big_delta, theta) = theta_term(a, b, g, w, weights.w0);
                            if big_delta < 0.0 {
                                // No real intersection: common power only.
                                out.theta_fallback = true;
                                out.p0[idx] = gamma.max(0.0);
                            } else {
                                let beta = beta_term(a, b, w, lambda);
                                out.conf[follower][idx] = beta.min(theta).max(0.0);
                                out.p0[idx] = (gamma - theta).max(0.0);
                            }
                        } else {
                            out.p0[idx] = gamma.max(0.0);
                        }
                    }
                    None => {
                        out.p0[idx] = gamma.max(0.0);
                    }
                }
            }
            ProblemKind::Mixed { mu } => {
                match conf_set_user(partition.subset(idx)) {
                    Some(user) => {
                        let mu_own = if user == 0 { mu } else { 1.0 - mu };
                        let a = bounds.minus(user, idx);
                        let b = bounds.plus(other(user), idx);
                        let c = bounds.minus(other(user), idx);
                        let w = weights.confidential(user);
                        let nu = checked_nu(a, c, weights.w0, lambda, mu_own, &mut out.nu_adjusted);
                        let (qb, qc) = xi_quadratic(a, b, c, w, weights.w0, mu_own);
                        let disc = qb * qb - 4.0 * qc;
                        let band = 1e-12 * (qb * qb + 4.0 * qc.abs()).max(1.0);
                        let split_threshold =
                            a > b && w * (a - b) > weights.w0 * (mu_own * a + (1.0 - mu_own) * c);
                        if disc > band {
                            if split_threshold {
                                let xi = 0.5 * (-qb + disc.sqrt());
                                let beta = beta_term(a, b, w, lambda);
                                out.conf[user][idx] = beta.min(xi).max(0.0);
                                out.p0[idx] = (nu - xi).max(0.0);
                            } else {
                                out.p0[idx] = nu.max(0.0);
                            }
                        } else if disc >= -band {
                            // Tangency: the split point is the double root.
                            let rhs = a + (1.0 - mu_own) * b + mu_own * a * b / c;
                            if a > b && w * (a - b) > weights.w0 * rhs {
                                let xi = -0.5 * qb;
                                let beta = beta_term(a, b, w, lambda);
                                out.conf[user][idx] = beta.min(xi).max(0.0);
                                out.p0[idx] = (nu - xi).max(0.0);
                            } else {
                                out.p0[idx] = nu.max(0.0);
                            }
                        } else if split_threshold {
                            // No intersection and the confidential derivative
                            // dominates at the origin: confidential only.
                            out.conf[user][idx] = beta_term(a, b, w, lambda).max(0.0);
                        } else {
                            out.p0[idx] = nu.max(0.0);
                        }
                    }
                    None => {
                        // Common-only set, user-1 indexing of the mixed root.
                        let nu = checked_nu(
                            bounds.minus(0, idx),
                            bounds.minus(1, idx),
                            weights.w0,
                            lambda,
                            mu,
                            &mut out.nu_adjusted,
                        );
                        out.p0[idx] = nu.max(0.0);
                    }
                }
            }
        }
    }
    out
}

/// The printed mixed-common root cross-checked against the stationarity
/// quadratic it must solve; on disagreement the direct root wins.
fn checked_nu(
    a_own: f64,
    a_other: f64,
    w0: f64,
    lambda: f64,
    mu_own: f64,
    adjusted: &mut bool,
) -> f64 {
    let nu = nu_term(a_own, a_other, w0, lambda, mu_own);
    if nu <= 0.0 {
        return nu;
    }
    let k = w0 / (2.0 * lambda * LN_2);
    // Stationarity quadratic: x^2 + Bx + C with the coefficients below.
    let qb = 1.0 / a_own + 1.0 / a_other - k;
    let qc = 1.0 / (a_own * a_other) - k * (mu_own / a_other + (1.0 - mu_own) / a_own);
    let disc = qb * qb - 4.0 * qc;
    if disc < 0.0 {
        return nu;
    }
    let root = 0.5 * (-qb + disc.sqrt());
    if (nu - root).abs() > 1e-6 * root.abs().max(1.0) {
        *adjusted = true;
        return root;
    }
    nu
}

// ---------------------------------------------------------------------------
// Dual searches.
// ---------------------------------------------------------------------------

/// Outcome of a lambda search: the dual, its allocation and diagnostics.
#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub allocation: PowerAllocation,
    pub iters: u32,
    pub power_gap: f64,
    pub theta_fallback: bool,
    pub nu_adjusted: bool,
}

/// Upper bracket for lambda: prices every derivative cap below zero, so the
/// closed forms allocate nothing.
fn lambda_upper(bounds: &GainBounds, weights: &Weights) -> f64 {
    let mut hi = 0.0f64;
    for user in 0..USERS {
        for idx in 0..bounds.subchannels() {
            let cap = (weights.w0 + weights.confidential(user)) * bounds.minus(user, idx)
                / (2.0 * LN_2);
            hi = hi.max(cap);
        }
    }
    hi.max(f64::MIN_POSITIVE)
}

/// Bisects lambda until the closed-form allocation meets the budget within
/// `cfg.lambda_tol * budget`. If even a vanishing lambda uses less than the
/// budget, the limit allocation is returned with total <= budget.
pub fn search_lambda(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    budget: f64,
    kind: ProblemKind,
    cfg: &SolverConfig,
) -> Result<LambdaSearch> {
    cfg.validate()?;
    bounds.require_positive()?;
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::InvalidInput("budget must be finite and >= 0".into()));
    }
    let solve = |lambda: f64| solve_at_dual(bounds, partition, weights, lambda, kind, cfg);
    let hi0 = lambda_upper(bounds, weights);
    if budget == 0.0 {
        let s = solve(hi0);
        return Ok(LambdaSearch {
            lambda: hi0,
            power_gap: s.total(),
            theta_fallback: s.theta_fallback,
            nu_adjusted: s.nu_adjusted,
            allocation: s.into_allocation(budget),
            iters: 0,
        });
    }

    let mut hi = hi0;
    let mut lo = hi * 2f64.powi(-40);
    let mut iters = 0u32;
    // Grow the bracket downward until the power crossing is enclosed.
    loop {
        let s = solve(lo);
        if s.total() >= budget {
            break;
        }
        if lo < 1e-280 {
            // Even a vanishing price does not exhaust the budget.
            let gap = budget - s.total();
            return Ok(LambdaSearch {
                lambda: lo,
                power_gap: gap,
                theta_fallback: s.theta_fallback,
                nu_adjusted: s.nu_adjusted,
                allocation: s.into_allocation(budget),
                iters,
            });
        }
        hi = lo;
        lo /= cfg.bracket_growth;
        iters += 1;
        if iters >= cfg.max_iters {
            return Err(Error::BracketNotFound { lo, hi, iters });
        }
    }

    let tol = cfg.lambda_tol * budget;
    let mut best: Option<(f64, SolveAtDual, f64)> = None;
    for _ in 0..cfg.max_iters {
        // Geometric midpoint: the bracket spans many orders of magnitude.
        let mid = (lo * hi).sqrt();
        let s = solve(mid);
        let gap = s.total() - budget;
        iters += 1;
        if best.as_ref().map(|b| gap.abs() < b.2.abs()).unwrap_or(true) {
            best = Some((mid, s.clone(), gap));
        }
        if gap.abs() <= tol {
            break;
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let (lambda, s, gap) = best.expect("bisection evaluates at least once");
    Ok(LambdaSearch {
        lambda,
        power_gap: gap,
        theta_fallback: s.theta_fallback,
        nu_adjusted: s.nu_adjusted,
        allocation: s.into_allocation(budget),
        iters,
    })
}

/// Outcome of the mu search for the mixed problem.
#[derive(Debug, Clone)]
pub struct MuSearch {
    pub mu: f64,
    pub inner: LambdaSearch,
    pub iters: u32,
    pub rate_gap: f64,
}

/// Outer bisection on `mu` over the common-rate gap g(mu) = R01 - R02, with
/// an inner lambda search per evaluation. Stops once |g| <= `cfg.mu_tol`.
pub fn search_mu(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    budget: f64,
    cfg: &SolverConfig,
) -> Result<MuSearch> {
    let eval = |mu: f64| -> Result<(LambdaSearch, f64)> {
        let inner = search_lambda(bounds, partition, weights, budget, ProblemKind::Mixed { mu }, cfg)?;
        let gap = common_rate_user(bounds, &inner.allocation, 0)
            - common_rate_user(bounds, &inner.allocation, 1);
        Ok((inner, gap))
    };

    let mut lo = 1e-7;
    let mut hi = 1.0 - 1e-7;
    let (inner_lo, g_lo) = eval(lo)?;
    if g_lo.abs() <= cfg.mu_tol {
        return Ok(MuSearch {
            mu: lo,
            inner: inner_lo,
            iters: 1,
            rate_gap: g_lo,
        });
    }
    let (inner_hi, g_hi) = eval(hi)?;
    if g_hi.abs() <= cfg.mu_tol {
        return Ok(MuSearch {
            mu: hi,
            inner: inner_hi,
            iters: 2,
            rate_gap: g_hi,
        });
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoSignChange { g_lo, g_hi });
    }

    let mut iters = 2u32;
    let mut best: Option<(f64, LambdaSearch, f64)> = None;
    let sign_lo = g_lo.signum();
    for _ in 0..cfg.max_iters {
        let mid = 0.5 * (lo + hi);
        let (inner, g) = eval(mid)?;
        iters += 1;
        if best.as_ref().map(|b| g.abs() < b.2.abs()).unwrap_or(true) {
            best = Some((mid, inner, g));
        }
        if g.abs() <= cfg.mu_tol {
            break;
        }
        if g.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    let (mu, inner, rate_gap) = best.expect("bisection evaluates at least once");
    Ok(MuSearch {
        mu,
        inner,
        iters,
        rate_gap,
    })
}

// ---------------------------------------------------------------------------
// Three-step cascade.
// ---------------------------------------------------------------------------

/// Which cascade step produced the returned allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    /// Common rate pinned to user 1 (accepted when user 1 is the common-rate
    /// bottleneck at the solution).
    One,
    /// Common rate pinned to user 2.
    Two,
    /// Mixed common rate with both users balanced.
    Three,
}

impl Step {
    pub fn as_u8(self) -> u8 {
        match self {
            Step::One => 1,
            Step::Two => 2,
            Step::Three => 3,
        }
    }

    /// Common-rate structure of the accepted step, for residual checks.
    pub fn problem(self, mu: Option<f64>) -> ProblemKind {
        match self {
            Step::One => ProblemKind::Pinned { leader: 0 },
            Step::Two => ProblemKind::Pinned { leader: 1 },
            Step::Three => ProblemKind::Mixed {
                mu: mu.unwrap_or(0.5),
            },
        }
    }
}

/// Solver provenance returned with every allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub step: Step,
    pub lambda: f64,
    pub mu: Option<f64>,
    pub lambda_iters: u32,
    pub mu_iters: u32,
    /// Achieved total power minus budget at the returned dual.
    pub power_gap: f64,
    /// R01 - R02 at the returned allocation.
    pub rate_gap: f64,
    pub theta_fallback: bool,
    pub nu_adjusted: bool,
}

impl Diagnostics {
    pub fn dual(&self) -> DualState {
        DualState {
            lambda: self.lambda,
            mu: self.mu,
        }
    }
}

/// Full allocation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub allocation: PowerAllocation,
    pub rates: RateTriple,
    pub diagnostics: Diagnostics,
}

/// Solves the boundary problem for a weight triple by the three-step
/// cascade: pin the common rate to user 1 and accept if user 1 turns out to
/// be the common bottleneck, then the user-2 mirror, otherwise balance the
/// common rates through the mixed problem. Ties within `mu_tol` fall through
/// to the mixed step.
pub fn allocate(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    budget: f64,
    cfg: &SolverConfig,
) -> Result<AllocationResult> {
    cfg.validate()?;
    bounds.require_positive()?;
    if partition.subchannels() != bounds.subchannels() {
        return Err(Error::InvalidInput(
            "partition and bounds dimensions must match".into(),
        ));
    }
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::InvalidInput("budget must be finite and >= 0".into()));
    }
    if budget == 0.0 {
        let allocation = PowerAllocation::zero(bounds.subchannels(), 0.0);
        return Ok(AllocationResult {
            rates: RateTriple::ZERO,
            diagnostics: Diagnostics {
                step: Step::Three,
                lambda: lambda_upper(bounds, weights),
                mu: Some(0.5),
                lambda_iters: 0,
                mu_iters: 0,
                power_gap: 0.0,
                rate_gap: 0.0,
                theta_fallback: false,
                nu_adjusted: false,
            },
            allocation,
        });
    }

    let finish = |step: Step,
                  lambda: LambdaSearch,
                  mu: Option<f64>,
                  mu_iters: u32,
                  rate_gap: f64|
     -> Result<AllocationResult> {
        let rates = rate_triple(bounds, partition, &lambda.allocation)?;
        Ok(AllocationResult {
            diagnostics: Diagnostics {
                step,
                lambda: lambda.lambda,
                mu,
                lambda_iters: lambda.iters,
                mu_iters,
                power_gap: lambda.power_gap,
                rate_gap,
                theta_fallback: lambda.theta_fallback,
                nu_adjusted: lambda.nu_adjusted,
            },
            rates,
            allocation: lambda.allocation,
        })
    };

    // Step 1: common rate pinned to user 1.
    let step1 = search_lambda(bounds, partition, weights, budget, ProblemKind::Pinned { leader: 0 }, cfg)?;
    let gap1 = common_rate_user(bounds, &step1.allocation, 0)
        - common_rate_user(bounds, &step1.allocation, 1);
    if gap1 < -cfg.mu_tol {
        return finish(Step::One, step1, None, 0, gap1);
    }

    // Step 2: user indices exchanged.
    let step2 = search_lambda(bounds, partition, weights, budget, ProblemKind::Pinned { leader: 1 }, cfg)?;
    let gap2 = common_rate_user(bounds, &step2.allocation, 0)
        - common_rate_user(bounds, &step2.allocation, 1);
    if gap2 > cfg.mu_tol {
        return finish(Step::Two, step2, None, 0, gap2);
    }

    // Step 3: balance the common rates.
    let m = search_mu(bounds, partition, weights, budget, cfg)?;
    let mu = m.mu;
    let iters = m.iters;
    let gap = m.rate_gap;
    finish(Step::Three, m.inner, Some(mu), iters, gap)
}
