//! Noisy top-K gating over expert networks.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetError;

/// Renormalized weights of the selected experts.
///
/// Invariants: indices are distinct, weights are non-negative and sum to 1
/// (softmax restricted to the selected set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseWeights {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SparseWeights {
    /// The full mixture collapsed onto one expert.
    pub fn single(index: usize) -> Self {
        Self {
            indices: vec![index],
            weights: vec![1.0],
        }
    }

    pub fn top_expert(&self) -> usize {
        let mut best = 0;
        for i in 1..self.indices.len() {
            if self.weights[i] > self.weights[best] {
                best = i;
            }
        }
        self.indices[best]
    }
}

/// Softmax over `logits` truncated to the `k` largest entries, renormalized.
///
/// Ties break by logit descending then index ascending, so selection is
/// deterministic. Exposed directly so the selection/renormalization rule can
/// be tested without a network.
pub fn topk_softmax(logits: &[f64], k: usize) -> SparseWeights {
    debug_assert!(k >= 1 && k <= logits.len());
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let indices: Vec<usize> = order[..k].to_vec();
    let max_logit = logits[indices[0]];
    let exps: Vec<f64> = indices.iter().map(|&i| (logits[i] - max_logit).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights = exps.iter().map(|e| e / total).collect();
    SparseWeights { indices, weights }
}

/// A linear gating network `W_g ∈ ℝ^{M × d}` scoring `M` experts from a
/// `d`-dimensional context, routed through the top `k` after optional
/// Gaussian logit noise `ε ~ N(0, noise_variance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingNetwork {
    /// Row-major `[experts × context_dim]`.
    w_g: Vec<f64>,
    num_experts: usize,
    context_dim: usize,
    top_k: usize,
    noise_variance: f64,
}

impl GatingNetwork {
    /// `noise_variance = None` selects the default `1 / M²`.
    pub fn new(
        w_g: Vec<f64>,
        num_experts: usize,
        context_dim: usize,
        top_k: usize,
        noise_variance: Option<f64>,
    ) -> Result<Self, NetError> {
        if num_experts == 0 {
            return Err(NetError::NoExperts);
        }
        if w_g.len() != num_experts * context_dim {
            return Err(NetError::ParamCountMismatch {
                expected: num_experts * context_dim,
                found: w_g.len(),
            });
        }
        if top_k < 1 || top_k > num_experts {
            return Err(NetError::BadTopK {
                experts: num_experts,
                top_k,
            });
        }
        let noise_variance = noise_variance.unwrap_or(1.0 / (num_experts * num_experts) as f64);
        if !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(NetError::BadNoiseVariance(noise_variance));
        }
        Ok(Self {
            w_g,
            num_experts,
            context_dim,
            top_k,
            noise_variance,
        })
    }

    pub fn zeros(
        num_experts: usize,
        context_dim: usize,
        top_k: usize,
        noise_variance: Option<f64>,
    ) -> Result<Self, NetError> {
        Self::new(
            vec![0.0; num_experts * context_dim],
            num_experts,
            context_dim,
            top_k,
            noise_variance,
        )
    }

    pub fn random<R: Rng + ?Sized>(
        num_experts: usize,
        context_dim: usize,
        top_k: usize,
        noise_variance: Option<f64>,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        let w_g = (0..num_experts * context_dim)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self::new(w_g, num_experts, context_dim, top_k, noise_variance)
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn param_count(&self) -> usize {
        self.w_g.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.w_g.clone()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.w_g.len() {
            return Err(NetError::ParamCountMismatch {
                expected: self.w_g.len(),
                found: params.len(),
            });
        }
        self.w_g.copy_from_slice(params);
        Ok(())
    }

    /// In-place `ω ← ω + scale·delta`; rejects non-finite results.
    pub fn apply_step(&mut self, delta: &[f64], scale: f64) -> Result<(), NetError> {
        if delta.len() != self.w_g.len() {
            return Err(NetError::ParamCountMismatch {
                expected: self.w_g.len(),
                found: delta.len(),
            });
        }
        for (i, w) in self.w_g.iter_mut().enumerate() {
            *w += scale * delta[i];
            if !w.is_finite() {
                return Err(NetError::NonFiniteParam(i));
            }
        }
        Ok(())
    }

    fn check_context(&self, context: &[f64]) -> Result<(), NetError> {
        if context.len() != self.context_dim {
            return Err(NetError::ContextDimMismatch {
                expected: self.context_dim,
                found: context.len(),
            });
        }
        Ok(())
    }

    /// Clean logits `W_g · x`.
    pub fn logits(&self, context: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_context(context)?;
        Ok((0..self.num_experts)
            .map(|e| {
                let row = &self.w_g[e * self.context_dim..(e + 1) * self.context_dim];
                row.iter().zip(context).map(|(w, x)| w * x).sum()
            })
            .collect())
    }

    /// Samples one logit-noise vector (one Gaussian per expert).
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, self.noise_variance.sqrt()).unwrap();
        (0..self.num_experts).map(|_| normal.sample(rng)).collect()
    }

    /// `TopK(softmax(W_g·x + ε))`, renormalized over the selected experts.
    ///
    /// With `noise_enabled = false` the output is deterministic and no draw
    /// is consumed.
    pub fn gating_weights<R: Rng + ?Sized>(
        &self,
        context: &[f64],
        rng: &mut R,
        noise_enabled: bool,
    ) -> Result<SparseWeights, NetError> {
        let mut logits = self.logits(context)?;
        if noise_enabled && self.noise_variance > 0.0 {
            for (l, e) in logits.iter_mut().zip(self.sample_noise(rng)) {
                *l += e;
            }
        }
        Ok(topk_softmax(&logits, self.top_k))
    }

    /// As [`Self::gating_weights`] with a caller-supplied noise vector, so a
    /// noise draw can be frozen across several evaluations.
    pub fn gating_weights_with_noise(
        &self,
        context: &[f64],
        noise: &[f64],
    ) -> Result<SparseWeights, NetError> {
        let mut logits = self.logits(context)?;
        for (l, e) in logits.iter_mut().zip(noise) {
            *l += e;
        }
        Ok(topk_softmax(&logits, self.top_k))
    }

    /// Analytic Jacobian of the renormalized top-K weights with respect to
    /// `W_g`, treating the selected index set (and any noise) as constant.
    ///
    /// Returns one flat `[experts × context_dim]` gradient per selected
    /// weight; row `j` is populated only for selected experts `j`, with
    /// `∂g_i/∂W_g[j, :] = g_i (δ_ij − g_j) · x`.
    pub fn gating_param_grad(
        &self,
        context: &[f64],
        selected: &SparseWeights,
    ) -> Result<Vec<Vec<f64>>, NetError> {
        self.check_context(context)?;
        let d = self.context_dim;
        let mut grads = Vec::with_capacity(selected.indices.len());
        for (i_pos, _) in selected.indices.iter().enumerate() {
            let mut grad = vec![0.0; self.w_g.len()];
            let g_i = selected.weights[i_pos];
            for (j_pos, &j) in selected.indices.iter().enumerate() {
                let g_j = selected.weights[j_pos];
                let coeff = if i_pos == j_pos { g_i * (1.0 - g_j) } else { -g_i * g_j };
                for (c, &x) in context.iter().enumerate() {
                    grad[j * d + c] = coeff * x;
                }
            }
            grads.push(grad);
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dense_softmax_when_k_equals_m() {
        let g = GatingNetwork::new(vec![1.0, -0.5, 0.25], 3, 1, 3, None).unwrap();
        let mut rng = seed_stream(0, 0, 0);
        let w = g.gating_weights(&[2.0], &mut rng, false).unwrap();
        assert_eq!(w.indices.len(), 3);
        let sum: f64 = w.weights.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        // logits (2, -1, 0.5) sorted descending: experts 0, 2, 1.
        assert_eq!(w.indices, vec![0, 2, 1]);
    }

    #[test]
    fn zero_gating_ties_break_to_first_experts() {
        let g = GatingNetwork::zeros(4, 2, 2, None).unwrap();
        let mut rng = seed_stream(0, 0, 0);
        let w = g.gating_weights(&[0.3, -0.7], &mut rng, false).unwrap();
        assert_eq!(w.indices, vec![0, 1]);
        assert_eq!(w.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn stated_logits_give_softmax_renormalized_weights() {
        // logits (3, 1, 2, 0) with K = 2: experts {0, 2}, weights
        // (e^3, e^2) / (e^3 + e^2) ≈ (0.7311, 0.2689).
        let w = topk_softmax(&[3.0, 1.0, 2.0, 0.0], 2);
        assert_eq!(w.indices, vec![0, 2]);
        assert_abs_diff_eq!(w.weights[0], 0.731058578630, epsilon = 1e-9);
        assert_abs_diff_eq!(w.weights[1], 0.268941421369, epsilon = 1e-9);
    }

    #[test]
    fn constant_logit_shift_leaves_weights_unchanged() {
        let logits = [0.3, -1.2, 0.9, 0.1, -0.4];
        let base = topk_softmax(&logits, 3);
        for shift in [-5.0, 0.01, 3.7] {
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let out = topk_softmax(&shifted, 3);
            assert_eq!(out.indices, base.indices);
            for (a, b) in out.weights.iter().zip(&base.weights) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn top_1_weight_is_constant_one_with_zero_gradient() {
        let g = GatingNetwork::new(vec![0.4, -0.2, 0.8, 0.1], 2, 2, 1, None).unwrap();
        let mut rng = seed_stream(1, 0, 0);
        let w = g.gating_weights(&[1.0, -1.0], &mut rng, false).unwrap();
        assert_eq!(w.weights, vec![1.0]);
        let grads = g.gating_param_grad(&[1.0, -1.0], &w).unwrap();
        assert!(grads[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gating_gradient_matches_finite_differences() {
        let mut rng = seed_stream(2, 0, 0);
        for _ in 0..20 {
            let (m, d, k) = (4, 3, 2);
            let g = GatingNetwork::random(m, d, k, None, 1.0, &mut rng).unwrap();
            let context: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let selected = {
                let mut r = seed_stream(0, 0, 0);
                g.gating_weights(&context, &mut r, false).unwrap()
            };
            // Skip draws where the top-K margin is too thin for a stable set.
            let logits = g.logits(&context).unwrap();
            let mut sorted = logits.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sorted[k - 1] - sorted[k] < 1e-3 {
                continue;
            }
            let analytic = g.gating_param_grad(&context, &selected).unwrap();
            let step = 1e-5;
            for (i_pos, a) in analytic.iter().enumerate() {
                let mut fd = vec![0.0; g.param_count()];
                let base = g.params_flat();
                for j in 0..base.len() {
                    let mut gp = g.clone();
                    let mut p = base.clone();
                    p[j] += step;
                    gp.set_params_flat(&p).unwrap();
                    let wp = {
                        let mut r = seed_stream(0, 0, 0);
                        gp.gating_weights(&context, &mut r, false).unwrap()
                    };
                    let mut gm = g.clone();
                    p[j] -= 2.0 * step;
                    gm.set_params_flat(&p).unwrap();
                    let wm = {
                        let mut r = seed_stream(0, 0, 0);
                        gm.gating_weights(&context, &mut r, false).unwrap()
                    };
                    assert_eq!(wp.indices, selected.indices);
                    assert_eq!(wm.indices, selected.indices);
                    fd[j] = (wp.weights[i_pos] - wm.weights[i_pos]) / (2.0 * step);
                }
                let num: f64 = a.iter().zip(&fd).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let den: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-9);
                assert!(num / den < 1e-5, "rel err {}", num / den);
            }
        }
    }

    #[test]
    fn uniform_point_gradient_antisymmetric_across_two_experts() {
        // Zero weights, two experts selected with g = (1/2, 1/2): the two
        // selected gradients are exact negatives.
        let g = GatingNetwork::zeros(2, 2, 2, None).unwrap();
        let context = [0.6, -0.2];
        let selected = topk_softmax(&g.logits(&context).unwrap(), 2);
        let grads = g.gating_param_grad(&context, &selected).unwrap();
        for (a, b) in grads[0].iter().zip(&grads[1]) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-15);
        }
    }

    #[test]
    fn noise_concentrates_on_clean_set_as_experts_grow() {
        // Variance 1/M² shrinks with M: the noise-free top-K set is selected
        // more often at larger M for a fixed logit gap.
        let mut freq = Vec::new();
        for m in [2usize, 8, 32] {
            let d = 1;
            let w_g: Vec<f64> = (0..m).map(|e| 1.0 - 0.1 * e as f64).collect();
            let g = GatingNetwork::new(w_g, m, d, 2.min(m), None).unwrap();
            let context = [1.0];
            let clean = {
                let mut r = seed_stream(0, 0, 0);
                g.gating_weights(&context, &mut r, false).unwrap().indices
            };
            let mut rng = seed_stream(5, m as u64, 0);
            let trials = 20_000;
            let mut hits = 0;
            for _ in 0..trials {
                let w = g.gating_weights(&context, &mut rng, true).unwrap();
                if w.indices == clean {
                    hits += 1;
                }
            }
            freq.push(hits as f64 / trials as f64);
        }
        assert!(freq[0] < freq[1] && freq[1] < freq[2], "{freq:?}");
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(matches!(
            GatingNetwork::zeros(4, 2, 5, None),
            Err(NetError::BadTopK { .. })
        ));
        assert!(matches!(
            GatingNetwork::zeros(4, 2, 0, None),
            Err(NetError::BadTopK { .. })
        ));
        assert!(matches!(
            GatingNetwork::zeros(4, 2, 2, Some(-0.1)),
            Err(NetError::BadNoiseVariance(_))
        ));
        let g = GatingNetwork::zeros(4, 2, 2, None).unwrap();
        let mut rng = seed_stream(0, 0, 0);
        assert!(matches!(
            g.gating_weights(&[1.0], &mut rng, false),
            Err(NetError::ContextDimMismatch { .. })
        ));
    }
}
