//! Index networks, gating, state encoders, and checkpoints.
//!
//! An expert is a small dense feedforward network `f_θ(s) → ℝ` estimating the
//! Whittle index of an encoded state. Gradients with respect to every
//! parameter are hand-derived (the architecture family is fixed, no autodiff).
//! The gating network scores `M` experts from an arm's context vector and
//! routes each decision through the `top_k` of them, with optional Gaussian
//! logit noise of variance `1/M²` to loosen the choice during training.

mod checkpoint;
mod dense;
mod encode;
mod gating;

pub use checkpoint::{load_model, save_model, Checkpoint, CheckpointEntry, ModelCheckpoint};
pub use dense::{Activation, DenseNet};
pub use encode::StateEncoder;
pub use gating::{topk_softmax, GatingNetwork, SparseWeights};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has length {found}, network expects {expected}")]
    InputDimMismatch { expected: usize, found: usize },
    #[error("layer dims must list input..=output sizes (>= 2 entries, all positive, output 1), got {0:?}")]
    BadLayerDims(Vec<usize>),
    #[error("parameter vector has length {found}, network has {expected} parameters")]
    ParamCountMismatch { expected: usize, found: usize },
    #[error("non-finite parameter produced at index {0}")]
    NonFiniteParam(usize),
    #[error("context has length {found}, gating expects {expected}")]
    ContextDimMismatch { expected: usize, found: usize },
    #[error("top_k must satisfy 1 <= top_k <= {experts}, got {top_k}")]
    BadTopK { experts: usize, top_k: usize },
    #[error("noise variance must be finite and non-negative, got {0}")]
    BadNoiseVariance(f64),
    #[error("gating requires at least one expert")]
    NoExperts,
    #[error("state {state} out of range for encoder over {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Sensitivity sigmoid `σ_m(x) = 1 / (1 + e^{−m·x})`.
///
/// Converts index-minus-subsidy into an activation probability; saturates
/// without overflow for any finite input.
pub fn sigma_m(x: f64, m: f64) -> f64 {
    debug_assert!(m > 0.0);
    let t = m * x;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_m_midpoint_and_symmetry() {
        for m in [0.5, 1.0, 2.0, 17.0] {
            assert_eq!(sigma_m(0.0, m), 0.5);
            for x in [-3.0, -0.2, 0.7, 5.0] {
                assert_abs_diff_eq!(sigma_m(x, m) + sigma_m(-x, m), 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn sigma_m_closed_form_value() {
        // m = 2, x = 1: 1 / (1 + e^{-2}).
        assert_abs_diff_eq!(sigma_m(1.0, 2.0), 1.0 / (1.0 + (-2.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(sigma_m(1.0, 2.0), 0.880797, epsilon = 1e-6);
    }

    #[test]
    fn sigma_m_saturates_without_overflow() {
        assert_eq!(sigma_m(1e12, 5.0), 1.0);
        assert_eq!(sigma_m(-1e12, 5.0), 0.0);
        assert!(sigma_m(750.0, 1.0) <= 1.0);
        assert!(sigma_m(-750.0, 1.0) >= 0.0);
    }

    #[test]
    fn sigma_m_monotone() {
        let xs: Vec<f64> = (-50..50).map(|i| i as f64 * 0.1).collect();
        for w in xs.windows(2) {
            assert!(sigma_m(w[1], 3.0) > sigma_m(w[0], 3.0));
        }
    }
}
