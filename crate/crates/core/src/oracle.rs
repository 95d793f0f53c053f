//! Independent validation machinery for the closed-form allocator: an
//! exhaustive lattice search over the feasible power simplex and first-order
//! stationarity residual checks at a returned solution.

use crate::allocator::{u_common, u_common_mixed, u_confidential, Diagnostics, ProblemKind};
use crate::channel::{GainBounds, Partition, Subset};
use crate::rates::{weighted_sum_rate, PowerAllocation, Weights};
use crate::{Error, Result};
use serde::Serialize;

/// Lattice specification for the brute-force search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Per-variable upper bound (the full budget unless tightened).
    pub upper: f64,
    /// Coarse lattice step.
    pub coarse_step: f64,
    /// Number of 10x local refinement passes around the incumbent.
    pub refinement_levels: usize,
}

impl GridSpec {
    pub fn new(upper: f64, coarse_step: f64, refinement_levels: usize) -> Result<Self> {
        if !(upper >= 0.0) || !upper.is_finite() {
            return Err(Error::InvalidInput("grid upper bound must be >= 0".into()));
        }
        if !(coarse_step > 0.0) {
            return Err(Error::InvalidInput("grid step must be positive".into()));
        }
        Ok(Self {
            upper,
            coarse_step,
            refinement_levels,
        })
    }

    /// A spec that resolves the budget to about `cells` coarse cells.
    pub fn for_budget(budget: f64, cells: usize, refinement_levels: usize) -> Result<Self> {
        let step = if budget > 0.0 {
            budget / cells.max(1) as f64
        } else {
            1.0
        };
        Self::new(budget, step, refinement_levels)
    }
}

/// One optimization variable of the lattice search.
#[derive(Debug, Clone, Copy)]
enum Var {
    Common(usize),
    Confidential { user: usize, subchannel: usize },
}

struct GridProblem<'a> {
    bounds: &'a GainBounds,
    partition: &'a Partition,
    weights: &'a Weights,
    budget: f64,
    vars: Vec<Var>,
}

impl GridProblem<'_> {
    fn evaluate(&self, values: &[f64]) -> Result<f64> {
        let l = self.bounds.subchannels();
        let mut alloc = PowerAllocation::zero(l, self.budget);
        for (var, v) in self.vars.iter().zip(values) {
            match var {
                Var::Common(idx) => alloc.p0[*idx] = *v,
                Var::Confidential { user: 0, subchannel } => alloc.p1[*subchannel] = *v,
                Var::Confidential { subchannel, .. } => alloc.p2[*subchannel] = *v,
            }
        }
        weighted_sum_rate(self.bounds, self.partition, self.weights, &alloc)
    }
}

/// Exhaustive lattice maximization of the weighted sum rate over the budget
/// simplex, with confidential variables restricted to their own sets,
/// followed by `refinement_levels` local passes shrinking the step tenfold
/// in a box of two previous steps around the incumbent.
///
/// The final variable in the enumeration order is a common power; because
/// the objective is nondecreasing in every common power, that variable is
/// resolved directly to the largest feasible lattice value instead of being
/// looped over, which leaves the lattice argmax unchanged.
///
/// Cost grows exponentially in L; intended for L <= 3.
pub fn grid_search_optimum(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    budget: f64,
    grid: &GridSpec,
) -> Result<(PowerAllocation, f64)> {
    if partition.subchannels() != bounds.subchannels() {
        return Err(Error::InvalidInput(
            "partition and bounds dimensions must match".into(),
        ));
    }
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::InvalidInput("budget must be finite and >= 0".into()));
    }
    let l = bounds.subchannels();
    let mut vars: Vec<Var> = Vec::new();
    for idx in 0..l {
        match partition.subset(idx) {
            Subset::S1 => vars.push(Var::Confidential { user: 0, subchannel: idx }),
            Subset::S2 => vars.push(Var::Confidential { user: 1, subchannel: idx }),
            Subset::S3 => {}
        }
    }
    for idx in 0..l {
        vars.push(Var::Common(idx));
    }
    let problem = GridProblem {
        bounds,
        partition,
        weights,
        budget,
        vars,
    };
    let cap = grid.upper.min(budget);
    let n = problem.vars.len();

    // Coarse pass over the full simplex.
    let mut lo = vec![0.0; n];
    let mut hi = vec![cap; n];
    let mut step = grid.coarse_step;
    let mut incumbent = search_box(&problem, &lo, &hi, step)?.ok_or(Error::EmptyGrid)?;

    for _ in 0..grid.refinement_levels {
        let prev_step = step;
        step /= 10.0;
        for j in 0..n {
            lo[j] = (incumbent.1[j] - 2.0 * prev_step).max(0.0);
            hi[j] = (incumbent.1[j] + 2.0 * prev_step).min(cap);
        }
        // A refinement box may be empty near the simplex boundary; the
        // incumbent then stands.
        if let Some(refined) = search_box(&problem, &lo, &hi, step)? {
            if refined.0 > incumbent.0 {
                incumbent = refined;
            }
        }
    }

    let (objective, values) = incumbent;
    let mut alloc = PowerAllocation::zero(l, budget);
    for (var, v) in problem.vars.iter().zip(values.iter()) {
        match var {
            Var::Common(idx) => alloc.p0[*idx] = *v,
            Var::Confidential { user: 0, subchannel } => alloc.p1[*subchannel] = *v,
            Var::Confidential { subchannel, .. } => alloc.p2[*subchannel] = *v,
        }
    }
    alloc.validate()?;
    Ok((alloc, objective))
}

/// Enumerates the lattice inside `[lo, hi]^n` intersected with the budget
/// simplex in lexicographic order, replacing the incumbent only on strict
/// improvement so equal maxima resolve to the lexicographically smallest
/// point.
fn search_box(
    problem: &GridProblem<'_>,
    lo: &[f64],
    hi: &[f64],
    step: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    let n = problem.vars.len();
    let mut values = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    descend(problem, lo, hi, step, 0, problem.budget, &mut values, &mut best)?;
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    problem: &GridProblem<'_>,
    lo: &[f64],
    hi: &[f64],
    step: f64,
    depth: usize,
    remaining: f64,
    values: &mut Vec<f64>,
    best: &mut Option<(f64, Vec<f64>)>,
) -> Result<()> {
    let n = problem.vars.len();
    if depth == n - 1 {
        // Last variable is a common power: the objective is nondecreasing in
        // it, so the largest feasible lattice value is optimal for this
        // prefix. All box anchors are multiples of the current step, so the
        // zero-anchored lattice contains the box lattice.
        let cap = hi[depth].min(remaining);
        let v = if cap >= 0.0 {
            (cap / step + 1e-9).floor().max(0.0) * step
        } else {
            0.0
        };
        values[depth] = v;
        let objective = problem.evaluate(values)?;
        if best.as_ref().map(|b| objective > b.0).unwrap_or(true) {
            *best = Some((objective, values.clone()));
        }
        return Ok(());
    }
    // Box anchors are multiples of the step, so the lattice starts exactly
    // at the rounded lower corner.
    let mut k = (lo[depth] / step).round() as i64;
    if k < 0 {
        k = 0;
    }
    loop {
        let v = k as f64 * step;
        if v > hi[depth] + 1e-9 * step || v > remaining + 1e-9 * step {
            break;
        }
        values[depth] = v;
        descend(problem, lo, hi, step, depth + 1, remaining - v, values, best)?;
        k += 1;
    }
    Ok(())
}

/// Stationarity tolerance for residual checks.
pub const KKT_TOL: f64 = 1e-6;
/// Powers below this are treated as inactive.
const POWER_EPS: f64 = 1e-11;

/// Per-sub-channel stationarity record.
#[derive(Debug, Clone, Serialize)]
pub struct KktRow {
    pub subchannel: usize,
    pub subset: Subset,
    /// |u0(total)| when common power is active.
    pub common_stationarity: Option<f64>,
    /// Positive part of u0 at the top when common power is inactive.
    pub common_sign: Option<f64>,
    /// Active confidential power: |u_i - u0| at the split when common power
    /// sits on top, |u_i| alone otherwise.
    pub confidential_stationarity: Option<f64>,
    /// Inactive confidential power: positive part of the entry derivative.
    pub confidential_sign: Option<f64>,
    /// Confidential power found outside its own set.
    pub discipline_violation: f64,
    pub violation: f64,
}

/// Aggregate stationarity report.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub rows: Vec<KktRow>,
    pub max_violation: f64,
    pub tolerance: f64,
}

impl KktReport {
    pub fn ok(&self) -> bool {
        self.max_violation <= self.tolerance
    }
}

/// Evaluates the derivative functions of the accepted problem at the
/// allocation's breakpoints: active powers must sit at roots or
/// intersections, inactive powers must see a nonpositive derivative at
/// entry. Requires the solver diagnostics for the duals; the mixed problem
/// additionally needs `mu`.
pub fn kkt_residuals(
    bounds: &GainBounds,
    partition: &Partition,
    weights: &Weights,
    allocation: &PowerAllocation,
    diagnostics: &Diagnostics,
) -> Result<KktReport> {
    if !(diagnostics.lambda > 0.0) {
        return Err(Error::LambdaNotPositive);
    }
    let problem = diagnostics.step.problem(diagnostics.mu);
    if matches!(problem, ProblemKind::Mixed { .. }) && diagnostics.mu.is_none() {
        return Err(Error::MissingMu);
    }
    let lambda = diagnostics.lambda;
    let w0 = weights.w0;
    let u0 = |idx: usize, x: f64| -> f64 {
        match problem {
            ProblemKind::Pinned { leader } => u_common(bounds.minus(leader, idx), w0, lambda, x),
            ProblemKind::Mixed { mu } => {
                u_common_mixed(bounds.minus(0, idx), bounds.minus(1, idx), w0, lambda, mu, x)
            }
        }
    };

    let mut rows = Vec::with_capacity(allocation.subchannels());
    let mut max_violation = 0.0f64;
    for idx in 0..allocation.subchannels() {
        let subset = partition.subset(idx);
        let conf_user = match subset {
            Subset::S1 => Some(0),
            Subset::S2 => Some(1),
            Subset::S3 => None,
        };
        let p0 = allocation.p0[idx];
        let (p_conf, stray) = match conf_user {
            Some(0) => (allocation.p1[idx], allocation.p2[idx]),
            Some(_) => (allocation.p2[idx], allocation.p1[idx]),
            None => (0.0, allocation.p1[idx] + allocation.p2[idx]),
        };
        let top = p0 + p_conf;

        let mut row = KktRow {
            subchannel: idx,
            subset,
            common_stationarity: None,
            common_sign: None,
            confidential_stationarity: None,
            confidential_sign: None,
            discipline_violation: stray,
            violation: stray,
        };

        if p0 > POWER_EPS {
            let r = u0(idx, top).abs();
            row.common_stationarity = Some(r);
            row.violation = row.violation.max(r);
        } else {
            let r = u0(idx, top).max(0.0);
            row.common_sign = Some(r);
            row.violation = row.violation.max(r);
        }

        if let Some(user) = conf_user {
            let a = bounds.minus(user, idx);
            let b = bounds.plus(crate::other(user), idx);
            let w = weights.confidential(user);
            if p_conf > POWER_EPS {
                let r = if p0 > POWER_EPS {
                    // Split point: confidential and common derivatives meet.
                    (u_confidential(a, b, w, lambda, p_conf) - u0(idx, p_conf)).abs()
                } else {
                    u_confidential(a, b, w, lambda, p_conf).abs()
                };
                row.confidential_stationarity = Some(r);
                row.violation = row.violation.max(r);
            } else {
                let entry = u_confidential(a, b, w, lambda, 0.0);
                let r = if p0 > POWER_EPS {
                    // Swapping common for confidential at the bottom must not
                    // help.
                    (entry - u0(idx, 0.0)).max(0.0)
                } else {
                    entry.max(0.0)
                };
                row.confidential_sign = Some(r);
                row.violation = row.violation.max(r);
            }
        }

        max_violation = max_violation.max(row.violation);
        rows.push(row);
    }
    Ok(KktReport {
        rows,
        max_violation,
        tolerance: KKT_TOL,
    })
}

// ---------------------------------------------------------------------------
// Randomized validation suite (shared by the CLI validator and the
// acceptance tests).
// ---------------------------------------------------------------------------

use crate::allocator::{allocate, SolverConfig, Step};
use crate::channel::{partition as partition_of, sample_realization, ChannelPrior, EstimationModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// One randomly generated problem instance.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub bounds: GainBounds,
    pub partition: Partition,
    pub weights: Weights,
    pub budget: f64,
    pub imperfect: bool,
}

/// Draws an instance with `l` sub-channels: Rayleigh-drawn gains, perfect or
/// margin-based bounds, log-uniform positive weights and a moderate budget.
pub fn random_instance(l: usize, imperfect: bool, rng: &mut ChaCha12Rng) -> Result<RandomInstance> {
    let snr1 = rng.random_range(0.0..12.0);
    let snr2 = rng.random_range(0.0..12.0);
    let prior = ChannelPrior::from_snr_db(snr1, snr2, l)?;
    let model = if imperfect {
        EstimationModel::new(rng.random_range(0.05..0.4), rng.random_range(0.02..0.3))?
    } else {
        EstimationModel::perfect()
    };
    let bounds = loop {
        let real = sample_realization(&prior, &model, rng.random());
        let b = crate::channel::gain_bounds(&prior, &model, &real.h_hat)?;
        if b.require_positive().is_ok() {
            break b;
        }
    };
    let partition = partition_of(&bounds);
    let log_w = |rng: &mut ChaCha12Rng| (rng.random_range(0.2f64.ln()..5.0f64.ln())).exp();
    let weights = Weights::new(log_w(rng), log_w(rng), log_w(rng))?;
    let budget = rng.random_range(0.5..4.0);
    Ok(RandomInstance {
        bounds,
        partition,
        weights,
        budget,
        imperfect,
    })
}

/// Result of validating one instance: both routes are reported so that a
/// disagreement between them is visible rather than auto-resolved.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationOutcome {
    pub instance: usize,
    pub l: usize,
    pub imperfect: bool,
    pub step: Step,
    /// Oracle objective minus solver objective (positive = solver worse).
    pub objective_gap: f64,
    pub kkt_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub outcomes: Vec<ValidationOutcome>,
    pub max_objective_gap: f64,
    pub max_kkt_violation: f64,
    pub objective_tol: f64,
    pub kkt_tol: f64,
}

impl ValidationSummary {
    pub fn pass(&self) -> bool {
        self.max_objective_gap <= self.objective_tol && self.max_kkt_violation <= self.kkt_tol
    }
}

/// Validates the closed-form allocator on random instances against the
/// lattice oracle (objective agreement within 1e-3 bits) and the
/// stationarity residuals (within 1e-6).
pub fn validation_suite(
    instances: usize,
    max_l: usize,
    seed: u64,
    solver: &SolverConfig,
) -> Result<ValidationSummary> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut outcomes = Vec::with_capacity(instances);
    for i in 0..instances {
        let l = rng.random_range(1..=max_l.max(1));
        let imperfect = i % 2 == 1;
        let inst = random_instance(l, imperfect, &mut rng)?;
        let result = allocate(&inst.bounds, &inst.partition, &inst.weights, inst.budget, solver)?;
        let solver_obj =
            weighted_sum_rate(&inst.bounds, &inst.partition, &inst.weights, &result.allocation)?;
        let grid = GridSpec::for_budget(inst.budget, 12, 3)?;
        let (_, oracle_obj) =
            grid_search_optimum(&inst.bounds, &inst.partition, &inst.weights, inst.budget, &grid)?;
        let report = kkt_residuals(
            &inst.bounds,
            &inst.partition,
            &inst.weights,
            &result.allocation,
            &result.diagnostics,
        )?;
        outcomes.push(ValidationOutcome {
            instance: i,
            l,
            imperfect,
            step: result.diagnostics.step,
            objective_gap: oracle_obj - solver_obj,
            kkt_violation: report.max_violation,
        });
    }
    let max_objective_gap = outcomes
        .iter()
        .map(|o| o.objective_gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_kkt_violation = outcomes
        .iter()
        .map(|o| o.kkt_violation)
        .fold(0.0f64, f64::max);
    Ok(ValidationSummary {
        outcomes,
        max_objective_gap,
        max_kkt_violation,
        objective_tol: 1e-3,
        kkt_tol: KKT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::partition;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn weights(w0: f64, w1: f64, w2: f64) -> Weights {
        Weights::new(w0, w1, w2).unwrap()
    }

    #[test]
    fn zero_budget_gives_zero_objective() {
        let b = GainBounds::from_gains([vec![2.0], vec![1.0]]).unwrap();
        let part = partition(&b);
        let w = weights(1.0, 1.0, 1.0);
        let grid = GridSpec::for_budget(0.0, 10, 2).unwrap();
        let (alloc, obj) = grid_search_optimum(&b, &part, &w, 0.0, &grid).unwrap();
        assert_eq!(obj, 0.0);
        assert_eq!(alloc.total(), 0.0);
    }

    #[test]
    fn common_only_instance_spends_everything_on_common() {
        // Single sub-channel without secrecy advantage: all power on p0.
        let b = GainBounds::from_gains([vec![1.0], vec![1.0]]).unwrap();
        let part = partition(&b);
        assert_eq!(part.s3(), vec![0]);
        let w = weights(1.0, 1.0, 1.0);
        let grid = GridSpec::for_budget(2.0, 20, 3).unwrap();
        let (alloc, obj) = grid_search_optimum(&b, &part, &w, 2.0, &grid).unwrap();
        assert!((alloc.p0[0] - 2.0).abs() < 1e-9);
        assert!((obj - 0.5 * (3.0f64).log2()).abs() < 1e-9);
    }

    #[test]
    fn objective_nondecreasing_across_refinement_levels() {
        let b = GainBounds::new(
            [vec![3.0, 0.5], vec![0.6, 2.0]],
            [vec![3.1, 0.6], vec![0.7, 2.2]],
        )
        .unwrap();
        let part = partition(&b);
        let w = weights(1.0, 1.4, 0.9);
        let mut last = f64::NEG_INFINITY;
        for levels in 0..=3 {
            let grid = GridSpec::for_budget(2.0, 12, levels).unwrap();
            let (_, obj) = grid_search_optimum(&b, &part, &w, 2.0, &grid).unwrap();
            assert!(obj >= last - 1e-12, "objective dropped at level {levels}");
            last = obj;
        }
    }

    #[test]
    fn oracle_never_returns_infeasible_points() {
        let b = GainBounds::new(
            [vec![2.4, 0.8], vec![0.5, 1.7]],
            [vec![2.6, 0.9], vec![0.6, 1.9]],
        )
        .unwrap();
        let part = partition(&b);
        let w = weights(1.0, 2.0, 1.0);
        let grid = GridSpec::for_budget(1.5, 10, 2).unwrap();
        let (alloc, _) = grid_search_optimum(&b, &part, &w, 1.5, &grid).unwrap();
        alloc.validate().unwrap();
        assert_eq!(alloc.off_set_confidential_power(&part), 0.0);
    }

    #[test]
    fn kkt_trivial_all_zero_allocation() {
        // lambda above every derivative cap: the zero allocation passes all
        // entry-sign conditions.
        let b = GainBounds::from_gains([vec![2.0], vec![1.0]]).unwrap();
        let part = partition(&b);
        let w = weights(1.0, 1.0, 1.0);
        let alloc = PowerAllocation::zero(1, 0.0);
        let diag = Diagnostics {
            step: Step::One,
            lambda: 10.0,
            mu: None,
            lambda_iters: 0,
            mu_iters: 0,
            power_gap: 0.0,
            rate_gap: 0.0,
            theta_fallback: false,
            nu_adjusted: false,
        };
        let report = kkt_residuals(&b, &part, &w, &alloc, &diag).unwrap();
        assert!(report.ok(), "max violation {}", report.max_violation);
    }

    #[test]
    fn kkt_hand_computed_common_root() {
        // w0/(2 lambda ln2) = 2 and alpha = 1 puts the common water level at
        // p0 = 1 with an exactly zero residual.
        let lambda = 0.25;
        let w0 = 4.0 * lambda * LN_2;
        let b = GainBounds::from_gains([vec![1.0], vec![1.0]]).unwrap();
        let part = partition(&b);
        let w = weights(w0, 1.0, 1.0);
        let alloc = PowerAllocation {
            p0: vec![1.0],
            p1: vec![0.0],
            p2: vec![0.0],
            budget: 1.0,
        };
        let diag = Diagnostics {
            step: Step::One,
            lambda,
            mu: None,
            lambda_iters: 0,
            mu_iters: 0,
            power_gap: 0.0,
            rate_gap: 0.0,
            theta_fallback: false,
            nu_adjusted: false,
        };
        let report = kkt_residuals(&b, &part, &w, &alloc, &diag).unwrap();
        assert!(report.rows[0].common_stationarity.unwrap() < 1e-12);
        assert!(report.ok());
    }

    #[test]
    fn kkt_validates_allocator_outputs() {
        let b = GainBounds::new(
            [vec![3.0, 0.4, 1.0], vec![0.6, 2.0, 1.0]],
            [vec![3.2, 0.5, 1.1], vec![0.7, 2.2, 1.1]],
        )
        .unwrap();
        let part = partition(&b);
        let w = weights(1.0, 2.0, 1.5);
        let r = allocate(&b, &part, &w, 5.0, &SolverConfig::default()).unwrap();
        let report = kkt_residuals(&b, &part, &w, &r.allocation, &r.diagnostics).unwrap();
        assert!(
            report.ok(),
            "max violation {} at step {:?}",
            report.max_violation,
            r.diagnostics.step
        );
    }

    #[test]
    fn kkt_rejects_missing_duals() {
        let b = GainBounds::from_gains([vec![2.0], vec![1.0]]).unwrap();
        let part = partition(&b);
        let w = weights(1.0, 1.0, 1.0);
        let alloc = PowerAllocation::zero(1, 1.0);
        let diag = Diagnostics {
            step: Step::Three,
            lambda: 1.0,
            mu: None,
            lambda_iters: 0,
            mu_iters: 0,
            power_gap: 0.0,
            rate_gap: 0.0,
            theta_fallback: false,
            nu_adjusted: false,
        };
        // Step three without mu: the mixed derivative cannot be formed.
        let res = kkt_residuals(&b, &part, &w, &alloc, &diag);
        assert!(res.is_err());
    }

    #[test]
    fn grid_agrees_with_allocator_on_small_instances() {
        // A stronger version runs in the acceptance suite; this is a smoke
        // check on one pinned and one mixed instance.
        let cases = [
            GainBounds::new([vec![3.0], vec![0.5]], [vec![3.0], vec![0.8]]).unwrap(),
            GainBounds::new(
                [vec![2.5, 0.5], vec![0.5, 2.5]],
                [vec![2.5, 0.6], vec![0.6, 2.5]],
            )
            .unwrap(),
        ];
        let w = weights(1.0, 1.0, 1.0);
        for b in cases {
            let part = partition(&b);
            let budget = 2.0;
            let r = allocate(&b, &part, &w, budget, &SolverConfig::default()).unwrap();
            let solver_obj =
                weighted_sum_rate(&b, &part, &w, &r.allocation).unwrap();
            let grid = GridSpec::for_budget(budget, 16, 3).unwrap();
            let (_, oracle_obj) = grid_search_optimum(&b, &part, &w, budget, &grid).unwrap();
            assert!(
                solver_obj >= oracle_obj - 1e-3,
                "solver {solver_obj} vs oracle {oracle_obj}"
            );
        }
    }
}
