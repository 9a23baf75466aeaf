//! Whittle-index learning for restless multi-armed bandits.
//!
//! A restless bandit has `N` arms whose states evolve every round whether or
//! not they are activated; a policy activates exactly `K` per round. The
//! Whittle index `W(s)` ranks arm states by the activation subsidy at which a
//! state sits on the activate/rest boundary, and top-`K` activation by index
//! is the classic heuristic for these problems.
//!
//! This crate provides:
//!
//! - [`envs`] — finite-state arm dynamics, the `N`-arm bandit stepper, and
//!   the belief-chain construction that collapses a partially observable
//!   two-state arm into a finite MDP;
//! - [`oracle`] — exact Whittle indices via value iteration plus bisection,
//!   and executable certifiers for indexability, strong indexability, and
//!   threshold monotonicity;
//! - [`nets`] — small dense index networks with hand-derived parameter
//!   gradients, and the noisy top-K gating network used by the
//!   mixture-of-experts learner;
//! - [`training`] — the subsidized single-arm environments `Env(λ)` /
//!   `Env*(λ)` and the mini-batch REINFORCE loops for the single-expert
//!   NeurWIN learner and the mixture-of-experts ContextWIN learner;
//! - [`policy`] — bandit-level index policies (oracle, learned, baselines)
//!   and discounted-reward evaluation, including an exact joint-MDP solver
//!   for small instances;
//! - [`harness`] — experiment orchestration, config parsing, CSV/manifest
//!   output, and statistical diagnostics for the gradient-estimator claims
//!   (unbiasedness, variance scaling, convergence trend).
//!
//! Everything is deterministic under a fixed seed: random streams are derived
//! per `(seed, batch, episode)` by [`rng::seed_stream`].

pub mod envs;
pub mod harness;
pub mod nets;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod training;
