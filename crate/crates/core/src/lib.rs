//! Power allocation for a parallel broadcast channel that carries one common
//! message and two confidential messages, one per receiver, with either
//! perfect or noisy channel knowledge at the transmitter.
//!
//! The library is organised around the pipeline
//!
//! ```text
//! channel   -> gain margins + sub-channel partition
//! allocator -> closed-form powers + dual (lambda, mu) searches
//! rates     -> common / confidential rate evaluation
//! oracle    -> brute-force grid search + stationarity residual checks
//! sim       -> Monte Carlo experiment drivers and baselines
//! ```
//!
//! All solver outputs can be cross-validated against the `oracle` module,
//! which searches the feasible power simplex exhaustively and checks the
//! first-order conditions of the returned solution.

pub mod allocator;
pub mod channel;
pub mod numeric;
pub mod oracle;
pub mod rates;
pub mod sim;

/// Number of receiving users. The model is fixed at two.
pub const USERS: usize = 2;

/// Index of the other user.
#[inline]
pub fn other(user: usize) -> usize {
    debug_assert!(user < USERS);
    1 - user
}

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("conditional gain density undefined for sigma = 0 (point mass at the squared estimate)")]
    DegenerateSigma,

    #[error("dual variable lambda must be strictly positive")]
    LambdaNotPositive,

    #[error("channel gain bound must be strictly positive, got {value} for user {user} sub-channel {subchannel}")]
    NonPositiveGain {
        user: usize,
        subchannel: usize,
        value: f64,
    },

    #[error("mixing weight mu required for this operation but missing")]
    MissingMu,

    #[error("power bracket not found after {iters} growth steps (last bracket [{lo:e}, {hi:e}])")]
    BracketNotFound { lo: f64, hi: f64, iters: u32 },

    #[error("common-rate gap has no sign change over mu in (0,1): g(lo)={g_lo:e}, g(hi)={g_hi:e}")]
    NoSignChange { g_lo: f64, g_hi: f64 },

    #[error("negative secrecy term {term:e} for user {user} on sub-channel {subchannel}: bounds violate the partition contract")]
    NegativeSecrecyTerm {
        user: usize,
        subchannel: usize,
        term: f64,
    },

    #[error("grid produced no feasible candidate point")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, Error>;

/// Runs `op` over `items` in parallel when the `parallel` feature is enabled,
/// preserving input order in the output. Results must not depend on
/// evaluation order; the fixed output order keeps reductions deterministic
/// for any thread count.
pub(crate) fn map_collect<T, U, F>(items: Vec<T>, op: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(op).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(op).collect()
    }
}
