//! Channel model and noisy estimation at the transmitter.
//!
//! Channel coefficients are real zero-mean Gaussian per sub-channel, so the
//! power gains are exponential with mean equal to the per-user SNR. The
//! transmitter sees estimates corrupted by additive Gaussian noise and turns
//! them into guaranteed gain margins: a lower bound playing the legitimate
//! channel role and an upper bound playing the eavesdropper role, each
//! holding up to an outage probability `epsilon`. The margins induce the
//! sub-channel partition that drives the whole allocation.

use crate::numeric::{bisect_increasing, normal_cdf, normal_pdf};
use crate::{Error, Result, USERS};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Per-user, per-sub-channel variance of the channel coefficient prior.
/// The variance equals the mean of the exponential power gain, i.e. the SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPrior {
    variance: [Vec<f64>; 2],
}

impl ChannelPrior {
    pub fn new(variance: [Vec<f64>; 2]) -> Result<Self> {
        if variance[0].len() != variance[1].len() || variance[0].is_empty() {
            return Err(Error::InvalidInput(
                "prior variance vectors must be nonempty and of equal length".into(),
            ));
        }
        for row in &variance {
            if row.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::InvalidInput(
                    "prior variances must be finite and strictly positive".into(),
                ));
            }
        }
        Ok(Self { variance })
    }

    /// Flat prior: every sub-channel of user i has variance equal to the
    /// linear SNR derived from `snr_db`.
    pub fn from_snr_db(snr1_db: f64, snr2_db: f64, subchannels: usize) -> Result<Self> {
        let s1 = 10f64.powf(snr1_db / 10.0);
        let s2 = 10f64.powf(snr2_db / 10.0);
        Self::new([vec![s1; subchannels], vec![s2; subchannels]])
    }

    pub fn subchannels(&self) -> usize {
        self.variance[0].len()
    }

    #[inline]
    pub fn variance(&self, user: usize, subchannel: usize) -> f64 {
        self.variance[user][subchannel]
    }
}

/// Estimation noise level and per-sub-channel outage threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationModel {
    pub sigma: f64,
    pub epsilon: f64,
}

impl EstimationModel {
    pub fn new(sigma: f64, epsilon: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidInput("sigma must be finite and >= 0".into()));
        }
        if !epsilon.is_finite() || !(0.0..0.5).contains(&epsilon) {
            return Err(Error::InvalidInput("epsilon must lie in [0, 0.5)".into()));
        }
        if sigma > 0.0 && epsilon == 0.0 {
            // The conditional gain has unbounded support, so an epsilon of
            // zero would force alpha_plus to infinity.
            return Err(Error::InvalidInput(
                "epsilon must be strictly positive when sigma > 0".into(),
            ));
        }
        Ok(Self { sigma, epsilon })
    }

    pub fn perfect() -> Self {
        Self {
            sigma: 0.0,
            epsilon: 0.0,
        }
    }

    pub fn is_perfect(&self) -> bool {
        self.sigma == 0.0
    }
}

/// True channel coefficients and the transmitter's noisy estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: [Vec<f64>; 2],
    pub h_hat: [Vec<f64>; 2],
}

impl ChannelRealization {
    pub fn subchannels(&self) -> usize {
        self.h[0].len()
    }

    /// True power gains h^2.
    pub fn gains(&self) -> [Vec<f64>; 2] {
        [
            self.h[0].iter().map(|x| x * x).collect(),
            self.h[1].iter().map(|x| x * x).collect(),
        ]
    }
}

/// Guaranteed lower/upper channel power gain margins per user, sub-channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    alpha_minus: [Vec<f64>; 2],
    alpha_plus: [Vec<f64>; 2],
}

impl GainBounds {
    pub fn new(alpha_minus: [Vec<f64>; 2], alpha_plus: [Vec<f64>; 2]) -> Result<Self> {
        let l = alpha_minus[0].len();
        if l == 0
            || alpha_minus[1].len() != l
            || alpha_plus[0].len() != l
            || alpha_plus[1].len() != l
        {
            return Err(Error::InvalidInput(
                "gain bound matrices must be nonempty and of equal length".into(),
            ));
        }
        for user in 0..USERS {
            for idx in 0..l {
                let lo = alpha_minus[user][idx];
                let hi = alpha_plus[user][idx];
                if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || lo > hi {
                    return Err(Error::InvalidInput(format!(
                        "need 0 <= alpha_minus <= alpha_plus, got ({lo}, {hi}) at user {user}, sub-channel {idx}"
                    )));
                }
            }
        }
        Ok(Self {
            alpha_minus,
            alpha_plus,
        })
    }

    /// Perfect-CSIT bounds: both margins collapse onto the true gains.
    pub fn from_gains(gains: [Vec<f64>; 2]) -> Result<Self> {
        Self::new(gains.clone(), gains)
    }

    pub fn subchannels(&self) -> usize {
        self.alpha_minus[0].len()
    }

    #[inline]
    pub fn minus(&self, user: usize, subchannel: usize) -> f64 {
        self.alpha_minus[user][subchannel]
    }

    #[inline]
    pub fn plus(&self, user: usize, subchannel: usize) -> f64 {
        self.alpha_plus[user][subchannel]
    }

    /// Swaps the two users' rows; used by symmetry tests.
    pub fn swapped_users(&self) -> Self {
        Self {
            alpha_minus: [self.alpha_minus[1].clone(), self.alpha_minus[0].clone()],
            alpha_plus: [self.alpha_plus[1].clone(), self.alpha_plus[0].clone()],
        }
    }

    /// Rejects bounds containing a non-positive entry; the allocator's closed
    /// forms divide by every gain.
    pub fn require_positive(&self) -> Result<()> {
        for user in 0..USERS {
            for idx in 0..self.subchannels() {
                if self.alpha_minus[user][idx] <= 0.0 {
                    return Err(Error::NonPositiveGain {
                        user: user + 1,
                        subchannel: idx,
                        value: self.alpha_minus[user][idx],
                    });
                }
            }
        }
        Ok(())
    }
}

/// Disjoint classification of sub-channels by guaranteed secrecy advantage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subset {
    /// User 1 has a guaranteed advantage: alpha1^- > alpha2^+.
    S1,
    /// User 2 has a guaranteed advantage (and the sub-channel is not in S1).
    S2,
    /// Neither: only the common message is worth power here.
    S3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<Subset>,
}

impl Partition {
    pub fn subchannels(&self) -> usize {
        self.assignment.len()
    }

    #[inline]
    pub fn subset(&self, subchannel: usize) -> Subset {
        self.assignment[subchannel]
    }

    /// Set carrying user `user`'s confidential message (S1 for user 1).
    pub fn own_set(user: usize) -> Subset {
        if user == 0 {
            Subset::S1
        } else {
            Subset::S2
        }
    }

    pub fn members(&self, subset: Subset) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == subset)
            .map(|(idx, _)| idx)
    }

    pub fn s1(&self) -> Vec<usize> {
        self.members(Subset::S1).collect()
    }

    pub fn s2(&self) -> Vec<usize> {
        self.members(Subset::S2).collect()
    }

    pub fn s3(&self) -> Vec<usize> {
        self.members(Subset::S3).collect()
    }

    /// Partition with user roles exchanged; pairs with
    /// [`GainBounds::swapped_users`].
    pub fn swapped_users(&self) -> Self {
        Self {
            assignment: self
                .assignment
                .iter()
                .map(|s| match s {
                    Subset::S1 => Subset::S2,
                    Subset::S2 => Subset::S1,
                    Subset::S3 => Subset::S3,
                })
                .collect(),
        }
    }
}

/// Classifies every sub-channel. S1 is tested first and its members are
/// excluded from the S2 test, so the sets are disjoint by construction.
pub fn partition(bounds: &GainBounds) -> Partition {
    let assignment = (0..bounds.subchannels())
        .map(|idx| {
            if bounds.minus(0, idx) > bounds.plus(1, idx) {
                Subset::S1
            } else if bounds.minus(1, idx) > bounds.plus(0, idx) {
                Subset::S2
            } else {
                Subset::S3
            }
        })
        .collect();
    Partition { assignment }
}

/// Posterior distribution of the channel coefficient given its estimate:
/// Gaussian prior plus Gaussian estimation noise conjugate update.
#[derive(Debug, Clone, Copy)]
struct Posterior {
    mean: f64,
    sd: f64,
}

impl Posterior {
    fn new(prior_variance: f64, sigma: f64, h_hat: f64) -> Self {
        let total = prior_variance + sigma * sigma;
        Posterior {
            mean: prior_variance * h_hat / total,
            sd: (prior_variance * sigma * sigma / total).sqrt(),
        }
    }
}

/// Conditional density of the power gain `a = h^2` given the estimate
/// `h_hat`, for a Gaussian prior with variance `prior_variance` and Gaussian
/// estimation noise of std dev `model.sigma`:
///
/// ```text
/// f(a | h_hat) = [ f_eta(h_hat - sqrt(a)) f_h(sqrt(a))
///                + f_eta(h_hat + sqrt(a)) f_h(-sqrt(a)) ]
///              / ( 2 sqrt(a) * (f_h conv f_eta)(h_hat) )
/// ```
///
/// The density has an integrable 1/sqrt(a) singularity at the origin and the
/// function returns `+inf` at `a = 0`.
pub fn conditional_gain_density(
    prior_variance: f64,
    model: &EstimationModel,
    h_hat: f64,
    a: f64,
) -> Result<f64> {
    if model.sigma == 0.0 {
        return Err(Error::DegenerateSigma);
    }
    if !h_hat.is_finite() {
        return Err(Error::InvalidInput("h_hat must be finite".into()));
    }
    if !(a >= 0.0) {
        return Err(Error::InvalidInput("gain must be nonnegative".into()));
    }
    if a == 0.0 {
        return Ok(f64::INFINITY);
    }
    let root = a.sqrt();
    let prior_sd = prior_variance.sqrt();
    let conv_sd = (prior_variance + model.sigma * model.sigma).sqrt();
    let num = normal_pdf(h_hat - root, model.sigma) * normal_pdf(root, prior_sd)
        + normal_pdf(h_hat + root, model.sigma) * normal_pdf(-root, prior_sd);
    Ok(num / (2.0 * root * normal_pdf(h_hat, conv_sd)))
}

/// Conditional CDF P(gain <= a | h_hat). Integrating the density with the
/// substitution a = t^2 collapses it onto the posterior coefficient law
/// h | h_hat ~ N(mean, sd^2), giving
/// `F(a) = Phi((sqrt(a)-mean)/sd) + Phi((sqrt(a)+mean)/sd) - 1`.
pub fn conditional_gain_cdf(
    prior_variance: f64,
    model: &EstimationModel,
    h_hat: f64,
    a: f64,
) -> Result<f64> {
    if model.sigma == 0.0 {
        return Err(Error::DegenerateSigma);
    }
    if !h_hat.is_finite() {
        return Err(Error::InvalidInput("h_hat must be finite".into()));
    }
    if a <= 0.0 {
        return Ok(0.0);
    }
    let post = Posterior::new(prior_variance, model.sigma, h_hat);
    let root = a.sqrt();
    Ok(
        (normal_cdf((root - post.mean) / post.sd) + normal_cdf((root + post.mean) / post.sd)
            - 1.0)
            .clamp(0.0, 1.0),
    )
}

/// Quantile of the conditional gain law by bisection on the CDF, to absolute
/// probability tolerance 1e-10.
fn conditional_gain_quantile(
    prior_variance: f64,
    model: &EstimationModel,
    h_hat: f64,
    q: f64,
) -> f64 {
    let post = Posterior::new(prior_variance, model.sigma, h_hat);
    // Bisect in u = sqrt(a); the CDF is smooth and increasing in u.
    let cdf_u = |u: f64| {
        normal_cdf((u - post.mean) / post.sd) + normal_cdf((u + post.mean) / post.sd) - 1.0
    };
    let mut hi = post.mean.abs() + 10.0 * post.sd;
    while cdf_u(hi) < q {
        hi *= 2.0;
    }
    let u = bisect_increasing(&cdf_u, 0.0, hi, q, 1e-10);
    u * u
}

/// Epsilon-quantile gain margins for every user and sub-channel.
///
/// `alpha_plus` is the smallest gain exceeded with probability at most
/// epsilon, i.e. the (1-epsilon) quantile, and `alpha_minus` the largest gain
/// undershot with probability at most epsilon, i.e. the epsilon quantile.
/// With sigma = 0 both collapse onto the squared estimate.
pub fn gain_bounds(
    prior: &ChannelPrior,
    model: &EstimationModel,
    h_hat: &[Vec<f64>; 2],
) -> Result<GainBounds> {
    let l = prior.subchannels();
    if h_hat[0].len() != l || h_hat[1].len() != l {
        return Err(Error::InvalidInput(
            "estimate matrix must match prior dimensions".into(),
        ));
    }
    for row in h_hat {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("estimates must be finite".into()));
        }
    }
    if model.is_perfect() {
        let gains = [
            h_hat[0].iter().map(|x| x * x).collect::<Vec<_>>(),
            h_hat[1].iter().map(|x| x * x).collect::<Vec<_>>(),
        ];
        return GainBounds::from_gains(gains);
    }
    if model.epsilon <= 0.0 {
        return Err(Error::InvalidInput(
            "epsilon must be strictly positive when sigma > 0".into(),
        ));
    }
    let mut minus = [vec![0.0; l], vec![0.0; l]];
    let mut plus = [vec![0.0; l], vec![0.0; l]];
    for user in 0..USERS {
        for idx in 0..l {
            let var = prior.variance(user, idx);
            let b = h_hat[user][idx];
            minus[user][idx] = conditional_gain_quantile(var, model, b, model.epsilon);
            plus[user][idx] = conditional_gain_quantile(var, model, b, 1.0 - model.epsilon);
        }
    }
    GainBounds::new(minus, plus)
}

/// Raw standard-normal material for one channel draw. Materialising the same
/// draw under different SNR/sigma settings yields common random numbers
/// across experiment sweep points.
#[derive(Debug, Clone)]
pub struct StandardDraw {
    pub z: [Vec<f64>; 2],
    pub eta: [Vec<f64>; 2],
}

impl StandardDraw {
    /// Deterministic draw for a seed: the coefficient normals for both users
    /// first, then the estimation-noise normals.
    pub fn sample(subchannels: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut block = || -> [Vec<f64>; 2] {
            let mut out = [vec![0.0; subchannels], vec![0.0; subchannels]];
            for row in out.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            out
        };
        let z = block();
        let eta = block();
        Self { z, eta }
    }

    /// Scales the raw material into coefficients and estimates.
    pub fn materialize(&self, prior: &ChannelPrior, model: &EstimationModel) -> ChannelRealization {
        let l = prior.subchannels();
        assert_eq!(self.z[0].len(), l, "draw and prior dimensions must match");
        let mut h = [vec![0.0; l], vec![0.0; l]];
        let mut h_hat = [vec![0.0; l], vec![0.0; l]];
        for user in 0..USERS {
            for idx in 0..l {
                h[user][idx] = self.z[user][idx] * prior.variance(user, idx).sqrt();
                h_hat[user][idx] = h[user][idx] + model.sigma * self.eta[user][idx];
            }
        }
        ChannelRealization { h, h_hat }
    }

    /// Exchanges the two users' random material.
    pub fn swapped_users(&self) -> Self {
        Self {
            z: [self.z[1].clone(), self.z[0].clone()],
            eta: [self.eta[1].clone(), self.eta[0].clone()],
        }
    }
}

/// Draws one channel realization: coefficients h ~ N(0, variance) per entry
/// and estimates h_hat = h + N(0, sigma^2). Fully determined by the seed.
pub fn sample_realization(
    prior: &ChannelPrior,
    model: &EstimationModel,
    seed: u64,
) -> ChannelRealization {
    StandardDraw::sample(prior.subchannels(), seed).materialize(prior, model)
}

/// Derives a per-trial seed from a master seed; splitmix64 finalizer over the
/// (seed, trial) pair.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut x = master ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491_4F6C_DD1D);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}
