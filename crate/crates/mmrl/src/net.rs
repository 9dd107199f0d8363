//! Policy and value networks with hand-written reverse-mode gradients.
//!
//! Plain f64 multilayer perceptrons (tanh hidden layers, linear output) with
//! a fixed summation order everywhere, so forward and backward passes are
//! bitwise reproducible. Parameters live in canonical blocks (per-layer
//! weights and biases of the policy net, then the value net, then `log_std`),
//! which Adam, gradient clipping, and the finite-difference checker all
//! traverse in the same order.
//!
//! The policy head is a diagonal Gaussian: the network output is squashed by
//! tanh into `[-1, 1]` to form the mean, and a state-independent `log_std`
//! vector (clamped to `[LOG_STD_MIN, LOG_STD_MAX]`) sets the exploration
//! scale. Log-probabilities are those of the unclipped Gaussian; the
//! environment clips executed actions.

use crate::rng::{salt, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const LOG_STD_INIT: f64 = -0.5;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite gradient in block {block}")]
    NonFiniteGrad { block: String },
    #[error("gradient shape mismatch in block {block}: got {got}, expected {expected}")]
    ShapeMismatch {
        block: String,
        got: usize,
        expected: usize,
    },
}

/// One dense layer, weights in row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    /// Orthogonal-style init: a Gaussian matrix orthonormalized by
    /// Gram-Schmidt (over rows or columns, whichever fit) and scaled by
    /// `gain`; zero bias.
    fn orthogonal(in_dim: usize, out_dim: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut w = vec![0.0; out_dim * in_dim];
        for v in w.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if out_dim <= in_dim {
            orthonormalize_rows(&mut w, out_dim, in_dim, rng);
        } else {
            // Transpose, orthonormalize rows, transpose back: columns end up
            // orthonormal.
            let mut t = vec![0.0; in_dim * out_dim];
            for r in 0..out_dim {
                for c in 0..in_dim {
                    t[c * out_dim + r] = w[r * in_dim + c];
                }
            }
            orthonormalize_rows(&mut t, in_dim, out_dim, rng);
            for r in 0..out_dim {
                for c in 0..in_dim {
                    w[r * in_dim + c] = t[c * out_dim + r];
                }
            }
        }
        for v in w.iter_mut() {
            *v *= gain;
        }
        Dense {
            weights: w,
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn forward(&self, input: &[f64], output: &mut Vec<f64>) {
        output.clear();
        for r in 0..self.out_dim {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.bias[r];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            output.push(acc);
        }
    }
}

fn orthonormalize_rows(w: &mut [f64], rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
    for r in 0..rows {
        loop {
            for p in 0..r {
                let mut proj = 0.0;
                for c in 0..cols {
                    proj += w[r * cols + c] * w[p * cols + c];
                }
                for c in 0..cols {
                    w[r * cols + c] -= proj * w[p * cols + c];
                }
            }
            let norm: f64 = (0..cols)
                .map(|c| w[r * cols + c] * w[r * cols + c])
                .sum::<f64>()
                .sqrt();
            if norm > 1e-12 {
                for c in 0..cols {
                    w[r * cols + c] /= norm;
                }
                break;
            }
            // Degenerate draw (vanishingly unlikely): replace and retry.
            for c in 0..cols {
                w[r * cols + c] = rng.sample(StandardNormal);
            }
        }
    }
}

/// Multilayer perceptron: tanh on every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Intermediate activations of one forward pass, kept for backprop.
/// `inputs[i]` is the input vector of layer `i` (so `inputs[0]` is the
/// observation); `output` is the final linear output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// Builds layers `dims[0] -> dims[1] -> ... -> dims.last()`. Hidden
    /// layers use gain sqrt(2); the output layer uses `output_gain`.
    pub fn new(dims: &[usize], output_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let last = i == dims.len() - 2;
            let gain = if last { output_gain } else { 2.0f64.sqrt() };
            layers.push(Dense::orthogonal(dims[i], dims[i + 1], gain, rng));
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, &mut next);
            if i + 1 < self.layers.len() {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    /// Forward pass retaining every layer input for [`Mlp::backward`].
    pub fn forward_cached(&self, input: &[f64]) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, &mut next);
            if i + 1 < self.layers.len() {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            inputs.push(std::mem::replace(&mut current, next.clone()));
        }
        MlpCache {
            inputs,
            output: current,
        }
    }

    /// Accumulates gradients of a scalar loss into `grad_blocks`, given
    /// `d_output` = dL/d(linear output). `grad_blocks` holds this net's
    /// blocks in canonical order (weights, bias per layer).
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64], grad_blocks: &mut [Vec<f64>]) {
        debug_assert_eq!(grad_blocks.len(), 2 * self.layers.len());
        let mut dz = d_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            {
                let dw = &mut grad_blocks[2 * i];
                for r in 0..layer.out_dim {
                    for c in 0..layer.in_dim {
                        dw[r * layer.in_dim + c] += dz[r] * input[c];
                    }
                }
            }
            {
                let db = &mut grad_blocks[2 * i + 1];
                for r in 0..layer.out_dim {
                    db[r] += dz[r];
                }
            }
            if i > 0 {
                let mut dx = vec![0.0; layer.in_dim];
                for r in 0..layer.out_dim {
                    let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for c in 0..layer.in_dim {
                        dx[c] += row[c] * dz[r];
                    }
                }
                // input[i] is tanh(z_{i-1}); d tanh = 1 - tanh^2.
                for c in 0..layer.in_dim {
                    dx[c] *= 1.0 - input[c] * input[c];
                }
                dz = dx;
            }
        }
    }
}

/// All trainable parameters: policy net, value net, and the state-independent
/// log standard deviations of the action distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub policy: Mlp,
    pub value: Mlp,
    pub log_std: Vec<f64>,
}

impl PolicyParams {
    /// Seeded deterministic init. Hidden layers use gain sqrt(2); the policy
    /// output layer is scaled down (0.01) so initial action means sit near
    /// zero, and `log_std` starts at [`LOG_STD_INIT`].
    pub fn init(obs_dim: usize, action_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = stream(seed, salt::INIT);
        let mut policy_dims = vec![obs_dim];
        policy_dims.extend_from_slice(hidden);
        policy_dims.push(action_dim);
        let policy = Mlp::new(&policy_dims, 0.01, &mut rng);
        let mut value_dims = vec![obs_dim];
        value_dims.extend_from_slice(hidden);
        value_dims.push(1);
        let value = Mlp::new(&value_dims, 1.0, &mut rng);
        PolicyParams {
            policy,
            value,
            log_std: vec![LOG_STD_INIT; action_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.output_dim()
    }

    /// Action mean: network output squashed into `[-1, 1]` by tanh.
    pub fn policy_mean(&self, obs: &[f64]) -> Vec<f64> {
        let mut out = self.policy.forward(obs);
        for v in out.iter_mut() {
            *v = v.tanh();
        }
        out
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    pub fn clamp_log_std(&mut self) {
        for v in self.log_std.iter_mut() {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Canonical parameter blocks: policy layers (weights, bias), value
    /// layers (weights, bias), log_std.
    pub fn blocks(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.policy.layers {
            out.push(&layer.weights);
            out.push(&layer.bias);
        }
        for layer in &self.value.layers {
            out.push(&layer.weights);
            out.push(&layer.bias);
        }
        out.push(&self.log_std);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.policy.layers {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        for layer in &mut self.value.layers {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.log_std);
        out
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.policy.layers.len() {
            out.push(format!("policy.layer{i}.weights"));
            out.push(format!("policy.layer{i}.bias"));
        }
        for i in 0..self.value.layers.len() {
            out.push(format!("value.layer{i}.weights"));
            out.push(format!("value.layer{i}.bias"));
        }
        out.push("log_std".to_string());
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

/// Gradient container mirroring the canonical block order of one
/// [`PolicyParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    blocks: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        Grads {
            blocks: params.blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.blocks
    }

    /// Blocks belonging to the policy net (first `2 * layers`), as a mutable
    /// slice for [`Mlp::backward`].
    pub fn policy_blocks_mut(&mut self, params: &PolicyParams) -> &mut [Vec<f64>] {
        &mut self.blocks[..2 * params.policy.layers.len()]
    }

    pub fn value_blocks_mut(&mut self, params: &PolicyParams) -> &mut [Vec<f64>] {
        let start = 2 * params.policy.layers.len();
        let end = start + 2 * params.value.layers.len();
        &mut self.blocks[start..end]
    }

    pub fn log_std_mut(&mut self) -> &mut Vec<f64> {
        self.blocks.last_mut().expect("log_std block")
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks.iter_mut() {
            for v in block.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Global L2 norm over every block, in canonical order.
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for block in &self.blocks {
            for v in block {
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Scales gradients down so the global norm is at most `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

/// Adam optimizer state (first and second moments per canonical block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &PolicyParams, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        AdamState {
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update in place. Deterministic: identical inputs produce
/// identical parameters and state. Rejects non-finite or mis-shaped
/// gradients before touching anything.
pub fn adam_step(
    params: &mut PolicyParams,
    grads: &Grads,
    state: &mut AdamState,
) -> Result<(), NetError> {
    let names = params.block_names();
    {
        let blocks = params.blocks();
        for (i, g) in grads.blocks().iter().enumerate() {
            if g.len() != blocks[i].len() {
                return Err(NetError::ShapeMismatch {
                    block: names[i].clone(),
                    got: g.len(),
                    expected: blocks[i].len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteGrad {
                    block: names[i].clone(),
                });
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for (i, block) in params.blocks_mut().into_iter().enumerate() {
        let g = &grads.blocks()[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..block.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            block[j] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Log-density of a diagonal Gaussian at `action`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for j in 0..mean.len() {
        let std = log_std[j].exp();
        let z = (action[j] - mean[j]) / std;
        lp += -0.5 * z * z - log_std[j] - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// Differential entropy of a diagonal Gaussian (state-independent here).
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|l| l + 0.5 * (1.0 + (2.0 * PI).ln()))
        .sum()
}

/// Draws `mean + std * xi` per component. The environment clips on
/// execution; log-probs stay those of the unclipped draw.
pub fn sample_action(mean: &[f64], log_std: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, l)| {
            let xi: f64 = rng.sample(StandardNormal);
            m + l.exp() * xi
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_deterministic() {
        let a = PolicyParams::init(23, 4, &[64, 64], 9);
        let b = PolicyParams::init(23, 4, &[64, 64], 9);
        let c = PolicyParams::init(23, 4, &[64, 64], 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.obs_dim(), 23);
        assert_eq!(a.action_dim(), 4);
        assert_eq!(a.log_std, vec![LOG_STD_INIT; 4]);
    }

    #[test]
    fn orthogonal_rows_have_gain_norm() {
        let mut rng = stream(3, salt::INIT);
        let layer = Dense::orthogonal(64, 16, 2.0f64.sqrt(), &mut rng);
        for r in 0..16 {
            for r2 in 0..16 {
                let mut dot = 0.0;
                for c in 0..64 {
                    dot += layer.weights[r * 64 + c] * layer.weights[r2 * 64 + c];
                }
                let expected = if r == r2 { 2.0 } else { 0.0 };
                assert!(
                    (dot - expected).abs() < 1e-9,
                    "row {r}x{r2} dot {dot} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn policy_mean_is_squashed() {
        let params = PolicyParams::init(5, 3, &[16], 1);
        let obs = vec![3.0, -2.0, 0.5, 10.0, -10.0];
        let mean = params.policy_mean(&obs);
        assert_eq!(mean.len(), 3);
        for m in mean {
            assert!((-1.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Scalar loss L = sum_k w_k y_k + sum_k y_k^2 on a small net.
        let weights = [0.7, -1.3, 0.4];
        let loss_of = |mlp: &Mlp, x: &[f64]| {
            let y = mlp.forward(x);
            let mut l = 0.0;
            for k in 0..y.len() {
                l += weights[k] * y[k] + y[k] * y[k];
            }
            l
        };
        let mut rng = stream(7, salt::INIT);
        let mlp = Mlp::new(&[4, 8, 3], 1.0, &mut rng);
        let x = vec![0.3, -0.8, 1.2, 0.05];
        let cache = mlp.forward_cached(&x);
        let d_out: Vec<f64> = (0..3)
            .map(|k| weights[k] + 2.0 * cache.output[k])
            .collect();
        let mut grads: Vec<Vec<f64>> = mlp
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        mlp.backward(&cache, &d_out, &mut grads);

        let h = 1e-6;
        let mut probe = mlp.clone();
        for (b, block) in grads.iter().enumerate() {
            for j in 0..block.len() {
                let set = |m: &mut Mlp, val: f64| {
                    let layer = &mut m.layers[b / 2];
                    if b % 2 == 0 {
                        layer.weights[j] = val;
                    } else {
                        layer.bias[j] = val;
                    }
                };
                let get = |m: &Mlp| {
                    let layer = &m.layers[b / 2];
                    if b % 2 == 0 {
                        layer.weights[j]
                    } else {
                        layer.bias[j]
                    }
                };
                let orig = get(&probe);
                set(&mut probe, orig + h);
                let up = loss_of(&probe, &x);
                set(&mut probe, orig - h);
                let down = loss_of(&probe, &x);
                set(&mut probe, orig);
                let fd = (up - down) / (2.0 * h);
                let analytic = block[j];
                let denom = fd.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (fd - analytic).abs() / denom < 1e-6,
                    "block {b} elem {j}: fd {fd} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn adam_is_a_pure_function_of_its_inputs() {
        let params = PolicyParams::init(6, 2, &[8], 3);
        let mut grads = Grads::zeros_like(&params);
        for block in grads.blocks_mut() {
            for (j, v) in block.iter_mut().enumerate() {
                *v = (j as f64 * 0.37).sin();
            }
        }
        let state = AdamState::new(&params, 1e-3);
        let mut p1 = params.clone();
        let mut s1 = state.clone();
        adam_step(&mut p1, &grads, &mut s1).unwrap();
        let mut p2 = params.clone();
        let mut s2 = state.clone();
        adam_step(&mut p2, &grads, &mut s2).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
        assert_ne!(p1, params);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let params = PolicyParams::init(4, 2, &[4], 1);
        let mut grads = Grads::zeros_like(&params);
        grads.blocks_mut()[0][0] = 0.5;
        let mut p = params.clone();
        let mut s = AdamState::new(&params, 1e-3);
        adam_step(&mut p, &grads, &mut s).unwrap();
        // With bias correction, the first step is lr * g / (|g| + eps').
        let moved = params.blocks()[0][0] - p.blocks()[0][0];
        assert!((moved - 1e-3).abs() < 1e-6, "first step {moved}");
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let params = PolicyParams::init(4, 2, &[4], 1);
        let mut grads = Grads::zeros_like(&params);
        grads.blocks_mut()[2][1] = f64::NAN;
        let mut p = params.clone();
        let mut s = AdamState::new(&params, 1e-3);
        let err = adam_step(&mut p, &grads, &mut s).unwrap_err();
        match err {
            NetError::NonFiniteGrad { block } => assert_eq!(block, "policy.layer1.weights"),
            other => panic!("unexpected {other:?}"),
        }
        // Nothing was touched.
        assert_eq!(p, params);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn log_prob_matches_closed_form() {
        let mean = [0.2, -0.5];
        let log_std = [0.0, 0.0];
        let action = [0.7, -0.5];
        let lp = gaussian_log_prob(&mean, &log_std, &action);
        let expected = -0.5 * 0.25 - 0.5 * (2.0 * PI).ln() + (-0.0 - 0.5 * (2.0 * PI).ln());
        assert!((lp - expected).abs() < 1e-12);
        let ent = gaussian_entropy(&log_std);
        let expected_ent = 2.0 * 0.5 * (1.0 + (2.0 * PI).ln());
        assert!((ent - expected_ent).abs() < 1e-12);
    }

    #[test]
    fn clamp_log_std_applies_bounds() {
        let mut params = PolicyParams::init(4, 3, &[4], 1);
        params.log_std = vec![-9.0, 0.0, 4.0];
        params.clamp_log_std();
        assert_eq!(params.log_std, vec![LOG_STD_MIN, 0.0, LOG_STD_MAX]);
    }

    #[test]
    fn grads_clip_to_global_norm() {
        let params = PolicyParams::init(4, 2, &[4], 1);
        let mut grads = Grads::zeros_like(&params);
        grads.blocks_mut()[0][0] = 3.0;
        grads.blocks_mut()[3][0] = 4.0;
        let norm = grads.clip_global_norm(0.5);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads.global_norm() - 0.5).abs() < 1e-12);
        // Direction preserved.
        assert!((grads.blocks()[0][0] / grads.blocks()[3][0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn params_serde_round_trip_is_bitwise() {
        let params = PolicyParams::init(23, 4, &[64, 64], 123);
        let json = serde_json::to_string(&params).unwrap();
        let back: PolicyParams = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn block_layout_is_stable() {
        let params = PolicyParams::init(23, 4, &[64, 64], 1);
        let names = params.block_names();
        assert_eq!(names.len(), params.blocks().len());
        assert_eq!(names[0], "policy.layer0.weights");
        assert_eq!(names.last().unwrap(), "log_std");
        // 3 layers x 2 blocks x 2 nets + log_std.
        assert_eq!(names.len(), 13);
        let expected = 23 * 64 + 64 + 64 * 64 + 64 + 64 * 4 + 4  // policy
            + 23 * 64 + 64 + 64 * 64 + 64 + 64 + 1               // value
            + 4; // log_std
        assert_eq!(params.num_params(), expected);
    }
}
