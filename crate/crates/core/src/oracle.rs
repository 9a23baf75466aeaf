//! Exact Whittle-index computation and indexability certification.
//!
//! For a single arm with activation cost `λ`, value iteration solves
//! `V(s) = max{ r_pass(s) + β·p_pass(s)·V,  r_act(s) − λ + β·p_act(s)·V }`
//! and yields the active set `S(λ)` (ties activate, so `S(λ)` is closed from
//! below and `W(s) = sup{λ : s ∈ S(λ)}` is the exact membership boundary).
//! An arm is *indexable* when `S(λ)` only shrinks as `λ` grows; it is
//! *strongly indexable* when, additionally, each state's activation advantage
//! `A(s; λ) = Q_act − Q_pass` falls monotonically with the subsidy and
//! activation decisions nest consistently with the index ordering: a state
//! with a higher index is active at every subsidy where a lower-index state
//! is. Chain truncation perturbs near-tied advantage values by `O(κ^T)`
//! (κ the belief-update slope), so cross-state *advantage magnitudes* are not
//! certified, only decisions.
//!
//! Certification is grid-based: membership is certified on the caller's λ
//! grid plus two analytic limits at `±lambda_limit`, beyond which the active
//! set is provably full/empty. The certificate is therefore qualified by the
//! grid resolution recorded in the report.

use serde::Serialize;
use thiserror::Error;

use crate::envs::FiniteArm;

/// Default sup-norm value-iteration tolerance.
pub const DEFAULT_VI_TOL: f64 = 1e-9;
/// Default bisection tolerance for Whittle indices.
pub const DEFAULT_BISECT_TOL: f64 = 1e-6;
/// Default value-iteration cap; catches β ≈ 1 misconfiguration.
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("value iteration did not converge in {iterations} iterations (residual {residual}, threshold {threshold})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        threshold: f64,
    },
    #[error("bisection bracket for state {state} expanded past {bound}; arm is suspected non-indexable")]
    NotIndexableSuspected { state: usize, bound: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("discount factor must lie strictly inside (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("lambda grid must be strictly increasing")]
    InvalidGrid,
    #[error("warm-start values have length {found}, arm has {expected} states")]
    BadWarmStart { expected: usize, found: usize },
    #[error("state {state} out of range for arm with {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("arm is not a belief MDP: {0}")]
    NotBeliefMdp(&'static str),
}

/// Tolerances and caps for oracle computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveParams {
    pub vi_tol: f64,
    pub bisect_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            vi_tol: DEFAULT_VI_TOL,
            bisect_tol: DEFAULT_BISECT_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// A subsidy magnitude past which the active set is provably full (at `−limit`)
/// or empty (at `+limit`).
///
/// The advantage satisfies `|A(s; λ) + λ| ≤ 2·r_max + β·span(V)` and
/// `span(V) ≤ 2·r_max / (1 − β)` independent of λ, so
/// `2·r_max / (1 − β) + 1` bounds every membership boundary.
pub fn lambda_limit(arm: &FiniteArm, beta: f64) -> f64 {
    2.0 * arm.max_abs_reward() / (1.0 - beta) + 1.0
}

// ── Value iteration ───────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    pub q_active: Vec<f64>,
    pub q_passive: Vec<f64>,
    /// `active_set[s]` is true iff `Q_act(s) ≥ Q_pass(s)` (ties activate).
    pub active_set: Vec<bool>,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm residual after each sweep; consecutive entries shrink by a
    /// factor of at most β.
    pub residual_trace: Vec<f64>,
}

impl ValueIterationResult {
    /// Activation advantage `A(s) = Q_act(s) − Q_pass(s)`.
    pub fn advantage(&self, state: usize) -> f64 {
        self.q_active[state] - self.q_passive[state]
    }
}

fn dot(row: &[f64], v: &[f64]) -> f64 {
    row.iter().zip(v).map(|(p, x)| p * x).sum()
}

/// Solves the λ-subsidized single-arm problem to sup-norm value error ≤ `tol`.
///
/// Iteration stops when the Bellman residual drops below
/// `tol·(1 − β)/(2β)`, which bounds `‖V − V*‖∞` by `tol/2`.
pub fn value_iteration(
    arm: &FiniteArm,
    lambda: f64,
    beta: f64,
    tol: f64,
) -> Result<ValueIterationResult, OracleError> {
    value_iteration_warm(arm, lambda, beta, tol, DEFAULT_MAX_ITERATIONS, None)
}

pub fn value_iteration_warm(
    arm: &FiniteArm,
    lambda: f64,
    beta: f64,
    tol: f64,
    max_iterations: usize,
    warm_start: Option<&[f64]>,
) -> Result<ValueIterationResult, OracleError> {
    if !(tol > 0.0) {
        return Err(OracleError::InvalidTolerance(tol));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(OracleError::InvalidDiscount(beta));
    }
    let n = arm.num_states();
    let mut values = match warm_start {
        Some(w) if w.len() != n => {
            return Err(OracleError::BadWarmStart {
                expected: n,
                found: w.len(),
            })
        }
        Some(w) => w.to_vec(),
        None => vec![0.0; n],
    };
    let threshold = tol * (1.0 - beta) / (2.0 * beta);
    let mut next = vec![0.0; n];
    let mut residual_trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            let qp = arm.r_pass()[s] + beta * dot(&arm.p_pass()[s], &values);
            let qa = arm.r_act()[s] - lambda + beta * dot(&arm.p_act()[s], &values);
            let val = if qa >= qp { qa } else { qp };
            let diff = (val - values[s]).abs();
            if diff > residual {
                residual = diff;
            }
            next[s] = val;
        }
        std::mem::swap(&mut values, &mut next);
        residual_trace.push(residual);
        if residual <= threshold {
            let mut q_active = vec![0.0; n];
            let mut q_passive = vec![0.0; n];
            let mut active_set = vec![false; n];
            for s in 0..n {
                q_passive[s] = arm.r_pass()[s] + beta * dot(&arm.p_pass()[s], &values);
                q_active[s] = arm.r_act()[s] - lambda + beta * dot(&arm.p_act()[s], &values);
                active_set[s] = q_active[s] >= q_passive[s];
            }
            return Ok(ValueIterationResult {
                values,
                q_active,
                q_passive,
                active_set,
                iterations,
                residual,
                residual_trace,
            });
        }
    }
    Err(OracleError::NonConvergence {
        iterations,
        residual,
        threshold,
    })
}

// ── Whittle index by bisection ────────────────────────────────────────────

/// Whittle indices of every state, in subsidy units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhittleTable {
    pub w: Vec<f64>,
    pub tol: f64,
}

/// Locates `W(state) = sup{λ : state ∈ S(λ)}` by bisection on an
/// auto-expanding bracket.
///
/// Assumes membership in λ is monotone for this state, i.e. the arm passed
/// [`check_indexability`] on a coarse grid first. Bracket expansion past the
/// reward-derived bound reports a suspected indexability failure.
pub fn whittle_bisect(
    arm: &FiniteArm,
    state: usize,
    beta: f64,
    params: &SolveParams,
) -> Result<f64, OracleError> {
    let mut warm = None;
    whittle_bisect_cached(arm, state, beta, params, &mut warm)
}

fn whittle_bisect_cached(
    arm: &FiniteArm,
    state: usize,
    beta: f64,
    params: &SolveParams,
    warm: &mut Option<Vec<f64>>,
) -> Result<f64, OracleError> {
    if state >= arm.num_states() {
        return Err(OracleError::StateOutOfRange {
            state,
            num_states: arm.num_states(),
        });
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(OracleError::InvalidDiscount(beta));
    }
    let member = |lambda: f64, warm: &mut Option<Vec<f64>>| -> Result<bool, OracleError> {
        let res = value_iteration_warm(
            arm,
            lambda,
            beta,
            params.vi_tol,
            params.max_iterations,
            warm.as_deref(),
        )?;
        let active = res.active_set[state];
        *warm = Some(res.values);
        Ok(active)
    };

    let half = (arm.max_abs_reward() / (1.0 - beta)).max(1.0);
    let hard_cap = 4.0 * lambda_limit(arm, beta).max(half);
    let mut lo = -half;
    let mut hi = half;
    while member(hi, warm)? {
        lo = hi;
        hi *= 2.0;
        if hi > hard_cap {
            return Err(OracleError::NotIndexableSuspected { state, bound: hi });
        }
    }
    while !member(lo, warm)? {
        hi = lo;
        lo *= 2.0;
        if lo < -hard_cap {
            return Err(OracleError::NotIndexableSuspected { state, bound: lo });
        }
    }
    while hi - lo > 2.0 * params.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if member(mid, warm)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Whittle index of every state of an indexable arm.
pub fn whittle_table(
    arm: &FiniteArm,
    beta: f64,
    params: &SolveParams,
) -> Result<WhittleTable, OracleError> {
    let mut warm = None;
    let mut w = Vec::with_capacity(arm.num_states());
    for state in 0..arm.num_states() {
        w.push(whittle_bisect_cached(arm, state, beta, params, &mut warm)?);
    }
    Ok(WhittleTable {
        w,
        tol: params.bisect_tol,
    })
}

// ── Active-set tables and indexability ────────────────────────────────────

/// Per-λ active-set membership over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveSetTable {
    /// Strictly increasing λ grid.
    pub lambdas: Vec<f64>,
    /// `membership[g][s]`: state `s` is in `S(lambdas[g])`.
    pub membership: Vec<Vec<bool>>,
}

fn validate_grid(lambdas: &[f64]) -> Result<(), OracleError> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(OracleError::InvalidGrid);
    }
    Ok(())
}

struct GridSweep {
    lambdas: Vec<f64>,
    membership: Vec<Vec<bool>>,
    advantage: Vec<Vec<f64>>,
}

fn grid_sweep(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    params: &SolveParams,
) -> Result<GridSweep, OracleError> {
    validate_grid(lambdas)?;
    let mut membership = Vec::with_capacity(lambdas.len());
    let mut advantage = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in lambdas {
        let res = value_iteration_warm(
            arm,
            lambda,
            beta,
            params.vi_tol,
            params.max_iterations,
            warm.as_deref(),
        )?;
        membership.push(res.active_set.clone());
        advantage.push(
            (0..arm.num_states())
                .map(|s| res.advantage(s))
                .collect(),
        );
        warm = Some(res.values);
    }
    Ok(GridSweep {
        lambdas: lambdas.to_vec(),
        membership,
        advantage,
    })
}

/// Computes `S(λ)` membership over a λ grid.
pub fn active_set_table(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    params: &SolveParams,
) -> Result<ActiveSetTable, OracleError> {
    let sweep = grid_sweep(arm, lambdas, beta, params)?;
    Ok(ActiveSetTable {
        lambdas: sweep.lambdas,
        membership: sweep.membership,
    })
}

/// A state re-entering the active set as λ grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexabilityViolation {
    pub state: usize,
    /// Grid λ at which the state had left the active set.
    pub lambda_low: f64,
    /// Grid λ at which the state re-entered.
    pub lambda_high: f64,
}

/// A failure of one of the strong-indexability clauses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StrongViolation {
    /// A state's activation advantage rose as the subsidy increased.
    AdvantageIncrease {
        state: usize,
        lambda_prev: f64,
        lambda: f64,
        increase: f64,
    },
    /// A lower-index state was active at a subsidy where a higher-index
    /// state rested.
    OrderingBreak {
        state_high: usize,
        state_low: usize,
        lambda: f64,
        adv_high: f64,
        adv_low: f64,
    },
}

/// Grid-resolution-qualified indexability certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexabilityReport {
    pub indexable: bool,
    pub violations: Vec<IndexabilityViolation>,
    pub strong: bool,
    pub strong_violations: Vec<StrongViolation>,
    /// The λ grid actually certified (caller grid plus analytic limits).
    pub lambdas: Vec<f64>,
}

/// Scans a membership table for false→true re-entries per state.
///
/// This is the pure table scan behind [`check_indexability`]; it applies no
/// numerical significance guard, so synthetic tables can exercise it directly.
pub fn indexability_violations(table: &ActiveSetTable) -> Vec<IndexabilityViolation> {
    let mut violations = Vec::new();
    if table.membership.is_empty() {
        return violations;
    }
    let n = table.membership[0].len();
    for s in 0..n {
        let mut last_false: Option<f64> = None;
        for (g, row) in table.membership.iter().enumerate() {
            if row[s] {
                if let Some(lambda_low) = last_false {
                    violations.push(IndexabilityViolation {
                        state: s,
                        lambda_low,
                        lambda_high: table.lambdas[g],
                    });
                    last_false = None;
                }
            } else {
                last_false = Some(table.lambdas[g]);
            }
        }
    }
    violations
}

fn augmented_grid(arm: &FiniteArm, lambdas: &[f64], beta: f64) -> Vec<f64> {
    let limit = lambda_limit(arm, beta);
    let mut grid = Vec::with_capacity(lambdas.len() + 2);
    if lambdas.first().map_or(true, |&l| l > -limit) {
        grid.push(-limit);
    }
    grid.extend_from_slice(lambdas);
    if lambdas.last().map_or(true, |&l| l < limit) {
        grid.push(limit);
    }
    grid
}

/// Certifies that `S(λ)` shrinks monotonically over the grid plus the two
/// analytic limits.
///
/// A false→true re-entry is confirmed as a violation only when both sides
/// exceed the significance tolerance `tol` in advantage, so value-iteration
/// noise at a membership boundary cannot fabricate one.
pub fn check_indexability(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    tol: f64,
) -> Result<IndexabilityReport, OracleError> {
    check_indexability_with(arm, lambdas, beta, tol, &SolveParams::default())
}

pub fn check_indexability_with(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    tol: f64,
    params: &SolveParams,
) -> Result<IndexabilityReport, OracleError> {
    if !(tol > 0.0) {
        return Err(OracleError::InvalidTolerance(tol));
    }
    let grid = augmented_grid(arm, lambdas, beta);
    let sweep = grid_sweep(arm, &grid, beta, params)?;
    let table = ActiveSetTable {
        lambdas: sweep.lambdas.clone(),
        membership: sweep.membership.clone(),
    };
    let mut violations = Vec::new();
    for v in indexability_violations(&table) {
        let g_low = grid.iter().position(|&l| l == v.lambda_low).unwrap();
        let g_high = grid.iter().position(|&l| l == v.lambda_high).unwrap();
        if sweep.advantage[g_low][v.state] < -tol && sweep.advantage[g_high][v.state] > tol {
            violations.push(v);
        }
    }
    Ok(IndexabilityReport {
        indexable: violations.is_empty(),
        violations,
        strong: false,
        strong_violations: Vec::new(),
        lambdas: grid,
    })
}

/// Certifies strong indexability on top of [`check_indexability`].
///
/// Two clauses are verified over the augmented grid, each with significance
/// tolerance `tol`:
///
/// 1. every state's advantage `A(s; λ)` is non-increasing in λ, so a Whittle
///    index exists as the single crossing of zero;
/// 2. for every state pair ordered by index (beyond the bisection
///    resolution), the higher-index state is active at every λ where the
///    lower-index state is — activating the higher-index state is at least
///    as good regardless of the activation cost.
pub fn check_strong_indexability(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    tol: f64,
) -> Result<IndexabilityReport, OracleError> {
    check_strong_indexability_with(arm, lambdas, beta, tol, &SolveParams::default())
}

pub fn check_strong_indexability_with(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    tol: f64,
    params: &SolveParams,
) -> Result<IndexabilityReport, OracleError> {
    let mut report = check_indexability_with(arm, lambdas, beta, tol, params)?;
    if !report.indexable {
        return Ok(report);
    }
    let table = whittle_table(arm, beta, params)?;
    let sweep = grid_sweep(arm, &report.lambdas, beta, params)?;
    let tie_guard = 4.0 * params.bisect_tol;
    let n = arm.num_states();
    for s in 0..n {
        for g in 1..sweep.lambdas.len() {
            let increase = sweep.advantage[g][s] - sweep.advantage[g - 1][s];
            if increase > tol {
                report.strong_violations.push(StrongViolation::AdvantageIncrease {
                    state: s,
                    lambda_prev: sweep.lambdas[g - 1],
                    lambda: sweep.lambdas[g],
                    increase,
                });
            }
        }
    }
    for high in 0..n {
        for low in 0..n {
            if high == low || table.w[high] <= table.w[low] + tie_guard {
                continue;
            }
            for (g, &lambda) in sweep.lambdas.iter().enumerate() {
                let adv_high = sweep.advantage[g][high];
                let adv_low = sweep.advantage[g][low];
                if adv_low > tol && adv_high < -tol {
                    report.strong_violations.push(StrongViolation::OrderingBreak {
                        state_high: high,
                        state_low: low,
                        lambda,
                        adv_high,
                        adv_low,
                    });
                }
            }
        }
    }
    report.strong = report.indexable && report.strong_violations.is_empty();
    Ok(report)
}

// ── Threshold curves on belief MDPs ───────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThresholdViolation {
    /// The active set along one chain is not an up-set in belief order.
    NotThreshold { omega: usize, lambda: f64 },
    /// The threshold position decreased as λ increased.
    NonMonotone {
        omega: usize,
        lambda_prev: f64,
        lambda: f64,
        prev: usize,
        curr: usize,
    },
}

/// Per-λ activation thresholds along each belief chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCurve {
    pub lambdas: Vec<f64>,
    /// `thresholds[ω][g]`: position in ascending-belief order (along chain ω)
    /// at which activation starts; the chain length `T + 1` means the chain
    /// never activates at that λ.
    pub thresholds: [Vec<usize>; 2],
    pub violations: Vec<ThresholdViolation>,
}

/// Extracts activation thresholds per λ from a belief MDP built by
/// [`crate::envs::build_belief_mdp`], and checks they are non-decreasing in λ.
pub fn threshold_curve(
    arm: &FiniteArm,
    lambdas: &[f64],
    beta: f64,
    params: &SolveParams,
) -> Result<ThresholdCurve, OracleError> {
    let n = arm.num_states();
    if n % 2 != 0 || n < 4 {
        return Err(OracleError::NotBeliefMdp("state count is not 2(T+1) with T >= 1"));
    }
    if arm
        .r_act()
        .iter()
        .zip(arm.r_pass())
        .any(|(a, p)| (a - p).abs() > 1e-12)
    {
        return Err(OracleError::NotBeliefMdp("rewards must equal beliefs under both actions"));
    }
    let width = n / 2;
    // Positions of each chain sorted by ascending belief (ties by position).
    let order: [Vec<usize>; 2] = [0, 1].map(|omega| {
        let mut idx: Vec<usize> = (0..width).collect();
        idx.sort_by(|&a, &b| {
            let ba = arm.r_pass()[omega * width + a];
            let bb = arm.r_pass()[omega * width + b];
            ba.partial_cmp(&bb).unwrap().then(a.cmp(&b))
        });
        idx
    });

    let sweep = grid_sweep(arm, lambdas, beta, params)?;
    let mut thresholds: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut violations = Vec::new();
    for (g, &lambda) in sweep.lambdas.iter().enumerate() {
        for omega in 0..2 {
            let actives: Vec<bool> = order[omega]
                .iter()
                .map(|&u| sweep.membership[g][omega * width + u])
                .collect();
            let first_active = actives.iter().position(|&a| a).unwrap_or(width);
            if actives[first_active..].iter().any(|&a| !a) {
                violations.push(ThresholdViolation::NotThreshold { omega, lambda });
            }
            if let Some(&prev) = thresholds[omega].last() {
                if first_active < prev {
                    violations.push(ThresholdViolation::NonMonotone {
                        omega,
                        lambda_prev: sweep.lambdas[g - 1],
                        lambda,
                        prev,
                        curr: first_active,
                    });
                }
            }
            thresholds[omega].push(first_active);
        }
    }
    Ok(ThresholdCurve {
        lambdas: sweep.lambdas,
        thresholds,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_belief_mdp, TwoStatePartialArm};
    use approx::assert_abs_diff_eq;

    fn standard_belief_arm(t: usize) -> FiniteArm {
        let arm = TwoStatePartialArm::new(0.2, 0.9, 0.2, 0.9).unwrap();
        build_belief_mdp(&arm, t).unwrap()
    }

    fn symmetric_arm() -> FiniteArm {
        let p = vec![vec![0.6, 0.4], vec![0.3, 0.7]];
        FiniteArm::new(p.clone(), p, vec![1.0, 2.0], vec![1.0, 2.0]).unwrap()
    }

    #[test]
    fn extreme_subsidies_give_trivial_active_sets() {
        let arm = standard_belief_arm(5);
        let hi = value_iteration(&arm, 1e6, 0.95, 1e-9).unwrap();
        assert!(hi.active_set.iter().all(|&a| !a));
        let lo = value_iteration(&arm, -1e6, 0.95, 1e-9).unwrap();
        assert!(lo.active_set.iter().all(|&a| a));
    }

    #[test]
    fn symmetric_arm_ties_activate_at_zero_subsidy() {
        let arm = symmetric_arm();
        let res = value_iteration(&arm, 0.0, 0.9, 1e-10).unwrap();
        for s in 0..2 {
            assert_abs_diff_eq!(res.q_active[s], res.q_passive[s], epsilon = 1e-9);
            assert!(res.active_set[s]);
        }
    }

    #[test]
    fn residual_trace_contracts_by_beta() {
        let arm = standard_belief_arm(8);
        let beta = 0.95;
        let res = value_iteration(&arm, 0.3, beta, 1e-9).unwrap();
        for w in res.residual_trace.windows(2) {
            assert!(w[1] <= beta * w[0] + 1e-13, "ratio {} > beta", w[1] / w[0]);
        }
    }

    #[test]
    fn constant_reward_shift_moves_values_not_active_set() {
        let arm = standard_belief_arm(6);
        let c = 0.7;
        let shifted = FiniteArm::new(
            arm.p_act().to_vec(),
            arm.p_pass().to_vec(),
            arm.r_act().iter().map(|r| r + c).collect(),
            arm.r_pass().iter().map(|r| r + c).collect(),
        )
        .unwrap();
        let beta = 0.95;
        let a = value_iteration(&arm, 0.25, beta, 1e-11).unwrap();
        let b = value_iteration(&shifted, 0.25, beta, 1e-11).unwrap();
        assert_eq!(a.active_set, b.active_set);
        for s in 0..arm.num_states() {
            assert_abs_diff_eq!(b.values[s] - a.values[s], c / (1.0 - beta), epsilon = 1e-8);
        }
    }

    #[test]
    fn symmetric_arm_whittle_index_is_zero() {
        let arm = symmetric_arm();
        let params = SolveParams::default();
        for s in 0..2 {
            let w = whittle_bisect(&arm, s, 0.9, &params).unwrap();
            assert_abs_diff_eq!(w, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn constant_activation_bonus_is_the_index() {
        let p = vec![vec![0.6, 0.4], vec![0.3, 0.7]];
        let c = 0.3;
        let arm = FiniteArm::new(p.clone(), p, vec![1.0 + c, 2.0 + c], vec![1.0, 2.0]).unwrap();
        let params = SolveParams::default();
        for s in 0..2 {
            let w = whittle_bisect(&arm, s, 0.9, &params).unwrap();
            assert_abs_diff_eq!(w, c, epsilon = 1e-5);
        }
    }

    #[test]
    fn active_reward_shift_moves_every_index_by_c() {
        let arm = standard_belief_arm(4);
        let c = 0.45;
        let shifted = FiniteArm::new(
            arm.p_act().to_vec(),
            arm.p_pass().to_vec(),
            arm.r_act().iter().map(|r| r + c).collect(),
            arm.r_pass().to_vec(),
        )
        .unwrap();
        let params = SolveParams::default();
        let base = whittle_table(&arm, 0.95, &params).unwrap();
        let moved = whittle_table(&shifted, 0.95, &params).unwrap();
        for s in 0..arm.num_states() {
            assert_abs_diff_eq!(moved.w[s] - base.w[s], c, epsilon = 2.0 * params.bisect_tol);
        }
    }

    #[test]
    fn bisection_agrees_with_grid_boundary() {
        // Coarse version of the acceptance check: 1e-3 grid, 2e-3 agreement.
        let arm = standard_belief_arm(10);
        let beta = 0.95;
        let params = SolveParams::default();
        let table = whittle_table(&arm, beta, &params).unwrap();
        let lo = table.w.iter().cloned().fold(f64::INFINITY, f64::min) - 0.05;
        let hi = table.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.05;
        let spacing = 1e-3;
        let count = ((hi - lo) / spacing).ceil() as usize + 1;
        let grid: Vec<f64> = (0..count).map(|i| lo + spacing * i as f64).collect();
        let sets = active_set_table(&arm, &grid, beta, &params).unwrap();
        for s in 0..arm.num_states() {
            let boundary = sets
                .membership
                .iter()
                .enumerate()
                .filter(|(_, row)| row[s])
                .map(|(g, _)| sets.lambdas[g])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (boundary - table.w[s]).abs() <= spacing + 2.0 * params.bisect_tol,
                "state {s}: boundary {boundary} vs bisect {}",
                table.w[s]
            );
        }
    }

    #[test]
    fn bisect_consistent_with_membership() {
        let arm = standard_belief_arm(6);
        let beta = 0.95;
        let params = SolveParams::default();
        let table = whittle_table(&arm, beta, &params).unwrap();
        for s in [0usize, 3, 8, 13] {
            let w = table.w[s];
            let below = value_iteration(&arm, w - 10.0 * params.bisect_tol, beta, 1e-10).unwrap();
            assert!(below.active_set[s]);
            let above = value_iteration(&arm, w + 10.0 * params.bisect_tol, beta, 1e-10).unwrap();
            assert!(!above.active_set[s]);
        }
    }

    #[test]
    fn whittle_monotone_in_belief_within_chain() {
        let arm = standard_belief_arm(10);
        let params = SolveParams::default();
        let table = whittle_table(&arm, 0.95, &params).unwrap();
        let width = arm.num_states() / 2;
        let slack = 2.0 * params.bisect_tol;
        // Chain 0: beliefs rise with u, so W must not fall.
        for u in 0..width - 1 {
            assert!(table.w[u + 1] >= table.w[u] - slack);
        }
        // Chain 1: beliefs fall with u, so W must not rise.
        for u in 0..width - 1 {
            assert!(table.w[width + u + 1] <= table.w[width + u] + slack);
        }
    }

    #[test]
    fn two_point_extreme_grid_is_trivially_monotone() {
        let arm = standard_belief_arm(4);
        let report = check_indexability(&arm, &[-1e6, 1e6], 0.95, 1e-8).unwrap();
        assert!(report.indexable);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn injected_reentry_is_reported_exactly() {
        let table = ActiveSetTable {
            lambdas: vec![0.0, 0.5, 1.0, 1.5],
            membership: vec![
                vec![true, true],
                vec![false, true],
                vec![true, true],
                vec![false, false],
            ],
        };
        let violations = indexability_violations(&table);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].state, 0);
        assert_eq!(violations[0].lambda_low, 0.5);
        assert_eq!(violations[0].lambda_high, 1.0);
    }

    #[test]
    fn random_positively_correlated_family_certifies_strong() {
        // Smaller in-module version of the acceptance experiment.
        use rand::Rng;
        let mut rng = crate::rng::seed_stream(11, 0, 0);
        let grid: Vec<f64> = (0..41).map(|i| -2.0 + i as f64 * 0.1).collect();
        for _ in 0..3 {
            let p01: f64 = rng.random_range(0.05..0.5);
            let p11: f64 = rng.random_range(p01 + 0.05..0.95);
            let arm = TwoStatePartialArm::new(p01, p11, p01, p11).unwrap();
            let mdp = build_belief_mdp(&arm, 10).unwrap();
            let report = check_strong_indexability(&mdp, &grid, 0.95, 1e-8).unwrap();
            assert!(report.indexable, "violations: {:?}", report.violations);
            assert!(report.strong, "strong violations: {:?}", report.strong_violations[..report.strong_violations.len().min(3)].to_vec());
        }
    }

    #[test]
    fn single_state_arm_is_vacuously_strong() {
        let arm = FiniteArm::new(vec![vec![1.0]], vec![vec![1.0]], vec![0.5], vec![0.2]).unwrap();
        let report = check_strong_indexability(&arm, &[-1.0, 0.0, 1.0], 0.9, 1e-8).unwrap();
        assert!(report.indexable);
        assert!(report.strong);
        assert!(report.strong_violations.is_empty());
    }

    #[test]
    fn threshold_curve_extremes_and_monotonicity() {
        let arm = standard_belief_arm(6);
        let beta = 0.95;
        let params = SolveParams::default();
        let limit = lambda_limit(&arm, beta);
        let grid: Vec<f64> = std::iter::once(-limit - 1.0)
            .chain((0..41).map(|i| -2.0 + i as f64 * 0.1))
            .chain(std::iter::once(limit + 1.0))
            .collect();
        let curve = threshold_curve(&arm, &grid, beta, &params).unwrap();
        assert!(curve.violations.is_empty(), "{:?}", curve.violations);
        let width = arm.num_states() / 2;
        for omega in 0..2 {
            // Below every net gain: activate from position 0 in belief order.
            assert_eq!(curve.thresholds[omega][0], 0);
            // Beyond the analytic limit: never activate.
            assert_eq!(*curve.thresholds[omega].last().unwrap(), width);
            for w in curve.thresholds[omega].windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn threshold_curve_rejects_non_belief_arm() {
        let arm = symmetric_arm();
        let err = threshold_curve(&arm, &[0.0, 1.0], 0.9, &SolveParams::default()).unwrap_err();
        assert!(matches!(err, OracleError::NotBeliefMdp(_)));
    }

    #[test]
    fn non_convergence_is_diagnosed() {
        let arm = standard_belief_arm(4);
        let err = value_iteration_warm(&arm, 0.0, 0.95, 1e-9, 5, None).unwrap_err();
        assert!(matches!(err, OracleError::NonConvergence { iterations: 5, .. }));
    }
}
