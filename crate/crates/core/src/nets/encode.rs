//! State encoders for index networks.

use serde::{Deserialize, Serialize};

use super::NetError;
use crate::envs::BeliefChain;

/// Maps a finite state id to a network input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateEncoder {
    /// One-hot over the arm's state space.
    OneHot { num_states: usize },
    /// For belief-MDP states: the pair `(ω, b_ω(u))`.
    BeliefPair {
        horizon: usize,
        /// Beliefs indexed by belief-MDP state id.
        beliefs: Vec<f64>,
    },
}

impl StateEncoder {
    pub fn one_hot(num_states: usize) -> Self {
        StateEncoder::OneHot { num_states }
    }

    pub fn belief_pair(chain: &BeliefChain) -> Self {
        let beliefs = (0..chain.num_states())
            .map(|s| chain.state_belief(s))
            .collect();
        StateEncoder::BeliefPair {
            horizon: chain.horizon(),
            beliefs,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StateEncoder::OneHot { num_states } => *num_states,
            StateEncoder::BeliefPair { .. } => 2,
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            StateEncoder::OneHot { num_states } => *num_states,
            StateEncoder::BeliefPair { beliefs, .. } => beliefs.len(),
        }
    }

    pub fn encode(&self, state: usize) -> Result<Vec<f64>, NetError> {
        if state >= self.num_states() {
            return Err(NetError::StateOutOfRange {
                state,
                num_states: self.num_states(),
            });
        }
        Ok(match self {
            StateEncoder::OneHot { num_states } => {
                let mut v = vec![0.0; *num_states];
                v[state] = 1.0;
                v
            }
            StateEncoder::BeliefPair { horizon, beliefs } => {
                let omega = state / (horizon + 1);
                vec![omega as f64, beliefs[state]]
            }
        })
    }
}
