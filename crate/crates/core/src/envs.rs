//! Arm dynamics, the N-arm bandit stepper, and the belief-chain construction.
//!
//! A [`FiniteArm`] is one independent controlled Markov process with separate
//! active/passive transition kernels and reward tables. A partially observable
//! two-state arm ([`TwoStatePartialArm`]) collapses into a finite MDP over
//! belief states `b_ω(u)`: the probability the latent state is 1, `u` rounds
//! after last observing `ω`. Under passivity beliefs move deterministically
//! along two chains (one per observation) toward the fixed point
//! `p01 / (1 − p11 + p01)`; activation observes the latent state and resets
//! the clock to `(ω', 0)`.
//!
//! Rewards stored in an arm are expected values; an optional zero-mean bounded
//! noise term models reward stochasticity without changing any expectation,
//! so the same arm serves both the exact oracle and simulation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for transition-row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Tolerance for belief-chain monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("state {state} out of range for arm with {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("{table} row {row} must have {expected} entries, found {found}")]
    BadRowLength {
        table: &'static str,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{table} row {row} is not stochastic: sums to {sum} (tolerance {ROW_SUM_TOL})")]
    NonStochasticRow {
        table: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("{table}[{row}][{col}] = {value} is outside [0, 1]")]
    EntryOutOfRange {
        table: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{table} has a non-finite entry at state {state}")]
    NonFiniteReward { table: &'static str, state: usize },
    #[error("{name} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("reward tables must have one entry per state ({expected}), found {found}")]
    BadRewardLength { expected: usize, found: usize },
    #[error("arm must have at least one state")]
    EmptyArm,
    #[error("belief-chain horizon must be at least 1")]
    InvalidHorizon,
    #[error("budget must satisfy 1 <= K <= N, got K = {budget} with N = {num_arms}")]
    InvalidBudget { budget: usize, num_arms: usize },
    #[error("discount factor must lie strictly inside (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("arm {arm} context has dimension {found}, expected {expected}")]
    ContextDimMismatch {
        arm: usize,
        expected: usize,
        found: usize,
    },
    #[error("action vector activates {actual} arms, budget requires exactly {expected}")]
    BudgetViolation { expected: usize, actual: usize },
    #[error("expected {expected} entries for {what}, found {found}")]
    BadVectorLength {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("noise half-width must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
}

/// Zero-mean bounded additive reward noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardNoise {
    /// Uniform on `[-half_width, +half_width]`.
    Uniform { half_width: f64 },
}

impl RewardNoise {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardNoise::Uniform { half_width } => rng.random_range(-half_width..=half_width),
        }
    }

    fn validate(&self) -> Result<(), EnvError> {
        match *self {
            RewardNoise::Uniform { half_width } => {
                if !half_width.is_finite() || half_width < 0.0 {
                    return Err(EnvError::InvalidNoise(half_width));
                }
            }
        }
        Ok(())
    }
}

/// Samples an index from a stochastic row using exactly one uniform draw.
fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

// ── Finite arms ──────────────────────────────────────────────────────────

/// A finite-state restless arm: active/passive transition matrices and
/// expected-reward tables, plus an optional reward-noise spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteArm {
    num_states: usize,
    p_act: Vec<Vec<f64>>,
    p_pass: Vec<Vec<f64>>,
    r_act: Vec<f64>,
    r_pass: Vec<f64>,
    noise: Option<RewardNoise>,
}

fn validate_matrix(table: &'static str, m: &[Vec<f64>], n: usize) -> Result<(), EnvError> {
    for (row_idx, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(EnvError::BadRowLength {
                table,
                row: row_idx,
                expected: n,
                found: row.len(),
            });
        }
        let mut sum = 0.0;
        for (col, &p) in row.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(EnvError::EntryOutOfRange {
                    table,
                    row: row_idx,
                    col,
                    value: p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(EnvError::NonStochasticRow {
                table,
                row: row_idx,
                sum,
            });
        }
    }
    Ok(())
}

fn validate_rewards(table: &'static str, r: &[f64], n: usize) -> Result<(), EnvError> {
    if r.len() != n {
        return Err(EnvError::BadRewardLength {
            expected: n,
            found: r.len(),
        });
    }
    for (state, &v) in r.iter().enumerate() {
        if !v.is_finite() {
            return Err(EnvError::NonFiniteReward { table, state });
        }
    }
    Ok(())
}

impl FiniteArm {
    pub fn new(
        p_act: Vec<Vec<f64>>,
        p_pass: Vec<Vec<f64>>,
        r_act: Vec<f64>,
        r_pass: Vec<f64>,
    ) -> Result<Self, EnvError> {
        let n = p_act.len();
        if n == 0 {
            return Err(EnvError::EmptyArm);
        }
        if p_pass.len() != n {
            return Err(EnvError::BadRowLength {
                table: "p_pass",
                row: p_pass.len().min(n),
                expected: n,
                found: p_pass.len(),
            });
        }
        validate_matrix("p_act", &p_act, n)?;
        validate_matrix("p_pass", &p_pass, n)?;
        validate_rewards("r_act", &r_act, n)?;
        validate_rewards("r_pass", &r_pass, n)?;
        Ok(Self {
            num_states: n,
            p_act,
            p_pass,
            r_act,
            r_pass,
            noise: None,
        })
    }

    pub fn with_noise(mut self, noise: RewardNoise) -> Result<Self, EnvError> {
        noise.validate()?;
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn p_act(&self) -> &[Vec<f64>] {
        &self.p_act
    }

    pub fn p_pass(&self) -> &[Vec<f64>] {
        &self.p_pass
    }

    pub fn r_act(&self) -> &[f64] {
        &self.r_act
    }

    pub fn r_pass(&self) -> &[f64] {
        &self.r_pass
    }

    pub fn noise(&self) -> Option<RewardNoise> {
        self.noise
    }

    /// Largest absolute expected reward over both tables; used to bound
    /// achievable discounted value.
    pub fn max_abs_reward(&self) -> f64 {
        self.r_act
            .iter()
            .chain(self.r_pass.iter())
            .fold(0.0_f64, |acc, &r| acc.max(r.abs()))
    }

    /// Steps the arm once. Returns the realized reward and next state.
    ///
    /// The transition is sampled from the row matching `active`; the reward is
    /// the matching expected-reward entry plus one draw of the noise spec, if
    /// any. Exactly one uniform draw is consumed for the transition.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: usize,
        active: bool,
        rng: &mut R,
    ) -> Result<(f64, usize), EnvError> {
        if state >= self.num_states {
            return Err(EnvError::StateOutOfRange {
                state,
                num_states: self.num_states,
            });
        }
        let (row, mean) = if active {
            (&self.p_act[state], self.r_act[state])
        } else {
            (&self.p_pass[state], self.r_pass[state])
        };
        let next = sample_row(row, rng);
        let reward = match self.noise {
            Some(n) => mean + n.sample(rng),
            None => mean,
        };
        Ok((reward, next))
    }
}

// ── Two-state partially observable arms and belief chains ────────────────

/// A two-state arm whose latent state is revealed only on activation.
///
/// `p01_*` / `p11_*` give the probability of being in latent state 1 next
/// round, from latent state 0 / 1, under the given action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStatePartialArm {
    pub p01_act: f64,
    pub p11_act: f64,
    pub p01_pass: f64,
    pub p11_pass: f64,
}

impl TwoStatePartialArm {
    pub fn new(p01_act: f64, p11_act: f64, p01_pass: f64, p11_pass: f64) -> Result<Self, EnvError> {
        for (name, value) in [
            ("p01_act", p01_act),
            ("p11_act", p11_act),
            ("p01_pass", p01_pass),
            ("p11_pass", p11_pass),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(EnvError::ProbabilityOutOfRange { name, value });
            }
        }
        Ok(Self {
            p01_act,
            p11_act,
            p01_pass,
            p11_pass,
        })
    }

    /// True when staying in state 1 is likelier than entering it, under
    /// passivity — the monotone-belief assumption behind the indexability
    /// results for this family.
    pub fn is_positively_correlated(&self) -> bool {
        self.p11_pass > self.p01_pass
    }

    /// Fixed point of the passive belief update, `p01 / (1 − p11 + p01)`.
    pub fn passive_fixed_point(&self) -> f64 {
        let denom = 1.0 - self.p11_pass + self.p01_pass;
        if denom == 0.0 {
            // p11 = 1, p01 = 0: every belief is already a fixed point.
            return f64::NAN;
        }
        self.p01_pass / denom
    }
}

/// One passive-step belief update: `b' = b·p11 + (1 − b)·p01`.
pub fn belief_update(b: f64, p01: f64, p11: f64) -> f64 {
    b * p11 + (1.0 - b) * p01
}

/// The two belief chains of a partially observable arm, truncated at `u = T`.
///
/// `b_ω(u)` is both the probability that the latent state is 1 and the
/// expected reward of that belief state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefChain {
    horizon: usize,
    b0: Vec<f64>,
    b1: Vec<f64>,
}

impl BeliefChain {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn b0(&self) -> &[f64] {
        &self.b0
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    /// Belief `b_ω(u)`.
    pub fn belief(&self, omega: usize, u: usize) -> f64 {
        match omega {
            0 => self.b0[u],
            _ => self.b1[u],
        }
    }

    /// Number of states in the matching belief MDP, `2(T + 1)`.
    pub fn num_states(&self) -> usize {
        2 * (self.horizon + 1)
    }

    /// Index of chain position `(ω, u)` in the belief MDP.
    pub fn state_index(&self, omega: usize, u: usize) -> usize {
        omega * (self.horizon + 1) + u
    }

    /// Inverse of [`Self::state_index`].
    pub fn chain_position(&self, state: usize) -> (usize, usize) {
        let width = self.horizon + 1;
        (state / width, state % width)
    }

    /// Belief of a belief-MDP state id.
    pub fn state_belief(&self, state: usize) -> f64 {
        let (omega, u) = self.chain_position(state);
        self.belief(omega, u)
    }
}

/// Builds both belief chains: `b_ω(0) = ω`, then repeated passive updates.
pub fn build_belief_chain(arm: &TwoStatePartialArm, horizon: usize) -> Result<BeliefChain, EnvError> {
    if horizon < 1 {
        return Err(EnvError::InvalidHorizon);
    }
    let mut b0 = Vec::with_capacity(horizon + 1);
    let mut b1 = Vec::with_capacity(horizon + 1);
    b0.push(0.0);
    b1.push(1.0);
    for u in 0..horizon {
        b0.push(belief_update(b0[u], arm.p01_pass, arm.p11_pass));
        b1.push(belief_update(b1[u], arm.p01_pass, arm.p11_pass));
    }
    Ok(BeliefChain { horizon, b0, b1 })
}

/// Builds the finite belief MDP over the `2(T + 1)` chain positions `(ω, u)`.
///
/// Passive moves deterministically one step along the same chain (self-loop at
/// the truncation `u = T`). Active observes latent state 1 with probability
/// `b_ω(u)` and resets to `(1, 0)`, otherwise to `(0, 0)`. Both actions pay
/// the expected reward `b_ω(u)`.
pub fn build_belief_mdp(arm: &TwoStatePartialArm, horizon: usize) -> Result<FiniteArm, EnvError> {
    let chain = build_belief_chain(arm, horizon)?;
    let n = chain.num_states();
    let mut p_act = vec![vec![0.0; n]; n];
    let mut p_pass = vec![vec![0.0; n]; n];
    let mut rewards = vec![0.0; n];
    let to_one = chain.state_index(1, 0);
    let to_zero = chain.state_index(0, 0);
    for omega in 0..2 {
        for u in 0..=horizon {
            let s = chain.state_index(omega, u);
            let b = chain.belief(omega, u);
            rewards[s] = b;
            let next_u = (u + 1).min(horizon);
            p_pass[s][chain.state_index(omega, next_u)] = 1.0;
            p_act[s][to_one] = b;
            p_act[s][to_zero] = 1.0 - b;
        }
    }
    FiniteArm::new(p_act, p_pass, rewards.clone(), rewards)
}

// ── Belief-chain monotonicity ─────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneViolation {
    /// Chain observation ω.
    pub omega: usize,
    /// Position `u` at which the step `b_ω(u) → b_ω(u+1)` breaks direction.
    pub position: usize,
    /// Signed size of the violation.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub is_monotone: bool,
    pub violations: Vec<MonotoneViolation>,
}

/// Checks the directions a positively-correlated arm must satisfy:
/// `b_0` non-decreasing and `b_1` non-increasing, within [`MONOTONE_TOL`].
pub fn check_belief_monotone(chain: &BeliefChain) -> MonotoneReport {
    let mut violations = Vec::new();
    for u in 0..chain.horizon() {
        let d0 = chain.b0()[u + 1] - chain.b0()[u];
        if d0 < -MONOTONE_TOL {
            violations.push(MonotoneViolation {
                omega: 0,
                position: u,
                delta: d0,
            });
        }
        let d1 = chain.b1()[u + 1] - chain.b1()[u];
        if d1 > MONOTONE_TOL {
            violations.push(MonotoneViolation {
                omega: 1,
                position: u,
                delta: d1,
            });
        }
    }
    MonotoneReport {
        is_monotone: violations.is_empty(),
        violations,
    }
}

// ── Bandit instances ──────────────────────────────────────────────────────

/// An arm plus its fixed context vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualArm {
    pub context: Vec<f64>,
    pub dynamics: FiniteArm,
}

/// `N` contextual arms, an activation budget `K`, and a discount factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    arms: Vec<ContextualArm>,
    budget: usize,
    discount: f64,
}

impl BanditInstance {
    pub fn new(arms: Vec<ContextualArm>, budget: usize, discount: f64) -> Result<Self, EnvError> {
        if budget < 1 || budget > arms.len() {
            return Err(EnvError::InvalidBudget {
                budget,
                num_arms: arms.len(),
            });
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(EnvError::InvalidDiscount(discount));
        }
        let d = arms[0].context.len();
        for (i, arm) in arms.iter().enumerate() {
            if arm.context.len() != d {
                return Err(EnvError::ContextDimMismatch {
                    arm: i,
                    expected: d,
                    found: arm.context.len(),
                });
            }
        }
        Ok(Self {
            arms,
            budget,
            discount,
        })
    }

    pub fn arms(&self) -> &[ContextualArm] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn context_dim(&self) -> usize {
        self.arms[0].context.len()
    }

    /// Steps every arm once under the given action vector.
    ///
    /// Exactly `K` arms must be active; arms are stepped in index order from
    /// the single provided stream.
    pub fn step<R: Rng + ?Sized>(
        &self,
        states: &[usize],
        actions: &[bool],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<usize>), EnvError> {
        if states.len() != self.arms.len() {
            return Err(EnvError::BadVectorLength {
                what: "states",
                expected: self.arms.len(),
                found: states.len(),
            });
        }
        if actions.len() != self.arms.len() {
            return Err(EnvError::BadVectorLength {
                what: "actions",
                expected: self.arms.len(),
                found: actions.len(),
            });
        }
        let active = actions.iter().filter(|&&a| a).count();
        if active != self.budget {
            return Err(EnvError::BudgetViolation {
                expected: self.budget,
                actual: active,
            });
        }
        let mut rewards = Vec::with_capacity(self.arms.len());
        let mut next_states = Vec::with_capacity(self.arms.len());
        for (i, arm) in self.arms.iter().enumerate() {
            let (r, s) = arm.dynamics.step(states[i], actions[i], rng)?;
            rewards.push(r);
            next_states.push(s);
        }
        Ok((rewards, next_states))
    }
}
