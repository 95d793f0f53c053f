//! Rate formulas of the secrecy region and the weighted objective.
//!
//! Both receivers decode the common message first, treating the confidential
//! signals as noise; each then decodes its own confidential message. All
//! rates are in bits per channel use with the 1/2 pre-log of real-valued
//! signalling.

use crate::channel::{GainBounds, Partition, Subset};
use crate::{other, Error, Result, USERS};
use serde::{Deserialize, Serialize};

const LN_2: f64 = std::f64::consts::LN_2;

/// Negative per-term slack tolerated as floating-point noise before the
/// partition contract is considered violated.
const SECRECY_TERM_TOL: f64 = 1e-9;

/// Strictly positive weight triple selecting a boundary point of the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub fn new(w0: f64, w1: f64, w2: f64) -> Result<Self> {
        for w in [w0, w1, w2] {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidInput(
                    "weights must be finite and strictly positive".into(),
                ));
            }
        }
        Ok(Self { w0, w1, w2 })
    }

    /// Weight on user `user`'s confidential message.
    #[inline]
    pub fn confidential(&self, user: usize) -> f64 {
        if user == 0 {
            self.w1
        } else {
            self.w2
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w0: self.w0 * c,
            w1: self.w1 * c,
            w2: self.w2 * c,
        }
    }

    pub fn swapped_users(&self) -> Self {
        Self {
            w0: self.w0,
            w1: self.w2,
            w2: self.w1,
        }
    }
}

/// Per-sub-channel powers for the common message and the two confidential
/// messages, under a total budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub budget: f64,
}

impl PowerAllocation {
    pub fn zero(subchannels: usize, budget: f64) -> Self {
        Self {
            p0: vec![0.0; subchannels],
            p1: vec![0.0; subchannels],
            p2: vec![0.0; subchannels],
            budget,
        }
    }

    pub fn subchannels(&self) -> usize {
        self.p0.len()
    }

    #[inline]
    pub fn confidential(&self, user: usize) -> &[f64] {
        if user == 0 {
            &self.p1
        } else {
            &self.p2
        }
    }

    pub fn total(&self) -> f64 {
        self.p0.iter().sum::<f64>() + self.p1.iter().sum::<f64>() + self.p2.iter().sum::<f64>()
    }

    /// Checks nonnegativity and the total power budget (with a relative
    /// tolerance for accumulated rounding).
    pub fn validate(&self) -> Result<()> {
        let l = self.p0.len();
        if self.p1.len() != l || self.p2.len() != l || l == 0 {
            return Err(Error::InvalidInput(
                "power vectors must be nonempty and of equal length".into(),
            ));
        }
        if !(self.budget >= 0.0) {
            return Err(Error::InvalidInput("budget must be nonnegative".into()));
        }
        for row in [&self.p0, &self.p1, &self.p2] {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput(
                    "powers must be finite and nonnegative".into(),
                ));
            }
        }
        let total = self.total();
        if total > self.budget * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "total power {total} exceeds budget {}",
                self.budget
            )));
        }
        Ok(())
    }

    /// Confidential power spent on sub-channels where it earns no rate:
    /// p1 off S1 plus p2 off S2 plus both on S3. Such allocations are legal
    /// inputs to the rate formulas but waste budget.
    pub fn off_set_confidential_power(&self, partition: &Partition) -> f64 {
        let mut wasted = 0.0;
        for idx in 0..self.subchannels() {
            match partition.subset(idx) {
                Subset::S1 => wasted += self.p2[idx],
                Subset::S2 => wasted += self.p1[idx],
                Subset::S3 => wasted += self.p1[idx] + self.p2[idx],
            }
        }
        wasted
    }

    pub fn swapped_users(&self) -> Self {
        Self {
            p0: self.p0.clone(),
            p1: self.p2.clone(),
            p2: self.p1.clone(),
            budget: self.budget,
        }
    }
}

/// Achieved rate triple in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RateTriple {
    pub const ZERO: Self = Self {
        r0: 0.0,
        r1: 0.0,
        r2: 0.0,
    };

    pub fn confidential(&self, user: usize) -> f64 {
        if user == 0 {
            self.r1
        } else {
            self.r2
        }
    }

    pub fn weighted(&self, w: &Weights) -> f64 {
        w.w0 * self.r0 + w.w1 * self.r1 + w.w2 * self.r2
    }
}

#[inline]
fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Common-message rate decodable by `user`:
/// 1/2 sum_l [ log2(1 + a_l (p0+p1+p2)) - log2(1 + a_l (p1+p2)) ]
/// with a_l the user's guaranteed lower gain.
pub fn common_rate_user(bounds: &GainBounds, p: &PowerAllocation, user: usize) -> f64 {
    debug_assert!(user < USERS);
    let mut sum = 0.0;
    for idx in 0..p.subchannels() {
        let a = bounds.minus(user, idx);
        let interference = p.p1[idx] + p.p2[idx];
        sum += log2_1p(a * (p.p0[idx] + interference)) - log2_1p(a * interference);
    }
    0.5 * sum
}

/// Common-message rate: the minimum of the two users' decodable rates.
pub fn common_rate(bounds: &GainBounds, p: &PowerAllocation) -> f64 {
    common_rate_user(bounds, p, 0).min(common_rate_user(bounds, p, 1))
}

/// Confidential rate guaranteed to `user` over its own sub-channel set:
/// 1/2 sum_{l in S_i} [ log2(1 + a_i^- p_i) - log2(1 + a_{other}^+ p_i) ].
///
/// Every term is nonnegative whenever the bounds satisfy the partition
/// definition; a genuinely negative term means the caller's bounds violate
/// that contract and is reported as an error rather than clamped away.
pub fn confidential_rate(
    bounds: &GainBounds,
    partition: &Partition,
    p: &PowerAllocation,
    user: usize,
) -> Result<f64> {
    debug_assert!(user < USERS);
    let own = Partition::own_set(user);
    let powers = p.confidential(user);
    let mut sum = 0.0;
    for idx in partition.members(own) {
        let x = powers[idx];
        let term = log2_1p(bounds.minus(user, idx) * x) - log2_1p(bounds.plus(other(user), idx) * x);
        if term < -SECRECY_TERM_TOL {
            return Err(Error::NegativeSecrecyTerm {
                user: user + 1,
                subchannel: idx,
                term,
            });
        }
        sum += term.max(0.0);
    }
    Ok(0.5 * sum)
}

/// Rates actually achieved by an allocation.
pub fn rate_triple(
    bounds: &GainBounds,
    partition: &Partition,
    p: &PowerAllocation,
) -> Result<RateTriple> {
    Ok(RateTriple {
        r0: common_rate(bounds, p),
        r1: confidential_rate(bounds, partition, p, 0)?,
        r2: confidential_rate(bounds, partition, p, 1)?,
    })
}

/// The boundary-point objective: w0 R0 + w1 R1 + w2 R2.
pub fn weighted_sum_rate(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    p: &PowerAllocation,
) -> Result<f64> {
    Ok(rate_triple(bounds, partition, p)?.weighted(weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::partition;

    fn single(am1: f64, ap1: f64, am2: f64, ap2: f64) -> GainBounds {
        GainBounds::new([vec![am1], vec![am2]], [vec![ap1], vec![ap2]]).unwrap()
    }

    fn alloc(p0: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>, budget: f64) -> PowerAllocation {
        PowerAllocation { p0, p1, p2, budget }
    }

    #[test]
    fn common_rate_hand_case() {
        // alpha1^- = 1, p0 = 3 on a single sub-channel: 1/2 log2(4) = 1.
        let b = single(1.0, 1.0, 1.0, 1.0);
        let p = alloc(vec![3.0], vec![0.0], vec![0.0], 3.0);
        assert!((common_rate_user(&b, &p, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn common_rate_zero_without_common_power() {
        let b = single(2.0, 2.0, 0.7, 0.7);
        let p = alloc(vec![0.0], vec![1.3], vec![0.2], 2.0);
        assert_eq!(common_rate_user(&b, &p, 0), 0.0);
        assert_eq!(common_rate_user(&b, &p, 1), 0.0);
    }

    #[test]
    fn common_rate_is_min_and_dominance_applies() {
        // Symmetric users: the min equals the per-user value.
        let b = single(1.5, 1.5, 1.5, 1.5);
        let p = alloc(vec![2.0], vec![0.5], vec![0.0], 2.5);
        assert_eq!(common_rate(&b, &p), common_rate_user(&b, &p, 0));

        // User 1 uniformly weaker: the min is user 1's rate.
        let b = GainBounds::new(
            [vec![0.5, 0.8], vec![1.0, 2.0]],
            [vec![0.5, 0.8], vec![1.0, 2.0]],
        )
        .unwrap();
        let p = alloc(vec![1.0, 0.7], vec![0.0, 0.0], vec![0.3, 0.1], 2.5);
        assert_eq!(common_rate(&b, &p), common_rate_user(&b, &p, 0));
        assert!(common_rate_user(&b, &p, 0) < common_rate_user(&b, &p, 1));
    }

    #[test]
    fn common_rate_matches_term_by_term_reevaluation() {
        let b = GainBounds::new(
            [vec![1.1, 0.4], vec![0.9, 2.3]],
            [vec![1.3, 0.6], vec![1.2, 2.9]],
        )
        .unwrap();
        let p = alloc(vec![0.7, 1.1], vec![0.2, 0.0], vec![0.0, 0.4], 3.0);
        for user in 0..USERS {
            let mut expect = 0.0;
            for idx in 0..2 {
                let a = b.minus(user, idx);
                let s = p.p1[idx] + p.p2[idx];
                expect += 0.5
                    * ((1.0 + a * (p.p0[idx] + s)).log2() - (1.0 + a * s).log2());
            }
            assert!((common_rate_user(&b, &p, user) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn confidential_rate_hand_case() {
        // alpha1^- = 3, alpha2^+ = 1, p1 = 1: 1/2 (log2 4 - log2 2) = 0.5.
        let b = single(3.0, 3.0, 0.5, 1.0);
        let part = partition(&b);
        assert_eq!(part.s1(), vec![0]);
        let p = alloc(vec![0.0], vec![1.0], vec![0.0], 1.0);
        let r1 = confidential_rate(&b, &part, &p, 0).unwrap();
        assert!((r1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn confidential_rate_zero_power_zero_rate() {
        let b = single(3.0, 3.0, 0.5, 1.0);
        let part = partition(&b);
        let p = alloc(vec![2.0], vec![0.0], vec![0.0], 2.0);
        assert_eq!(confidential_rate(&b, &part, &p, 0).unwrap(), 0.0);
        assert_eq!(confidential_rate(&b, &part, &p, 1).unwrap(), 0.0);
    }

    #[test]
    fn confidential_rate_rejects_contract_violation() {
        // Bounds claim S1 membership per a hand-built partition while the
        // margin ordering is inverted; the negative term must surface.
        let b = single(1.0, 1.0, 1.0, 2.0); // alpha2^+ = 2 > alpha1^- = 1
        let good = single(3.0, 3.0, 0.5, 1.0);
        let part = partition(&good); // S1 = {0}
        let p = alloc(vec![0.0], vec![1.0], vec![0.0], 1.0);
        let res = confidential_rate(&b, &part, &p, 0);
        assert!(matches!(res, Err(Error::NegativeSecrecyTerm { .. })));
    }

    #[test]
    fn weighted_sum_rate_composes_linearly() {
        let b = single(3.0, 3.0, 0.5, 1.0);
        let part = partition(&b);
        let p = alloc(vec![3.0], vec![1.0], vec![0.0], 4.0);
        let w = Weights::new(1.0, 1.0, 1.0).unwrap();
        let r0 = common_rate(&b, &p);
        let r1 = confidential_rate(&b, &part, &p, 0).unwrap();
        let total = weighted_sum_rate(&b, &part, &w, &p).unwrap();
        assert!((total - (r0 + r1)).abs() < 1e-12);

        let zero = PowerAllocation::zero(1, 0.0);
        assert_eq!(weighted_sum_rate(&b, &part, &w, &zero).unwrap(), 0.0);

        // Scaling weights scales the value.
        let w3 = w.scaled(3.0);
        let scaled = weighted_sum_rate(&b, &part, &w3, &p).unwrap();
        assert!((scaled - 3.0 * total).abs() < 1e-12);
    }

    #[test]
    fn off_set_confidential_power_is_flagged() {
        let b = single(3.0, 3.0, 0.5, 1.0);
        let part = partition(&b); // S1 = {0}
        let p = alloc(vec![0.0], vec![0.3], vec![0.4], 1.0);
        assert!((p.off_set_confidential_power(&part) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn user_swap_symmetry() {
        let b = GainBounds::new(
            [vec![3.0, 0.4], vec![0.4, 2.0]],
            [vec![3.2, 0.5], vec![0.5, 2.5]],
        )
        .unwrap();
        let part = partition(&b);
        let p = alloc(vec![0.5, 0.7], vec![0.9, 0.0], vec![0.0, 0.8], 3.0);

        let bs = b.swapped_users();
        let ps = p.swapped_users();
        let parts = part.swapped_users();
        assert_eq!(partition(&bs), parts);

        assert!(
            (common_rate_user(&b, &p, 0) - common_rate_user(&bs, &ps, 1)).abs() < 1e-12
        );
        let r1 = confidential_rate(&b, &part, &p, 0).unwrap();
        let r2s = confidential_rate(&bs, &parts, &ps, 1).unwrap();
        assert!((r1 - r2s).abs() < 1e-12);
    }
}
