//! Dense-network engine: forward evaluation, exact reverse-mode gradients,
//! Adam, Polyak target averaging, and a central finite-difference checker.
//!
//! Everything is plain `f64` vectors so training runs are reproducible
//! bit-for-bit across platforms.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Identity,
}

/// Fully connected network with ReLU hidden layers. `weights[l]` is the
/// row-major (out x in) matrix for layer l.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub output_activation: OutputActivation,
}

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input length {got} does not match layer size {want}")]
    InputShape { got: usize, want: usize },
    #[error("upstream length {got} does not match output size {want}")]
    UpstreamShape { got: usize, want: usize },
    #[error("architecture mismatch at layer {0}")]
    Architecture(usize),
}

impl Mlp {
    /// Uniform init in +/- 1/sqrt(fan_in) per layer.
    pub fn new(layer_sizes: &[usize], output_activation: OutputActivation, rng: &mut ChaCha8Rng) -> Self {
        assert!(layer_sizes.len() >= 2);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let fan_in = layer_sizes[l];
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n = layer_sizes[l + 1] * fan_in;
            weights.push((0..n).map(|_| rng.random_range(-bound..bound)).collect());
            biases.push((0..layer_sizes[l + 1]).map(|_| rng.random_range(-bound..bound)).collect());
        }
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output_activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Scale the final layer's parameters (used to start actors near zero).
    pub fn scale_output_layer(&mut self, factor: f64) {
        for w in self.weights.last_mut().unwrap() {
            *w *= factor;
        }
        for b in self.biases.last_mut().unwrap() {
            *b *= factor;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward_cached(input)?.pop().unwrap())
    }

    /// Post-activation values for every layer, input included.
    fn forward_cached(&self, input: &[f64]) -> Result<Vec<Vec<f64>>, NeuralError> {
        if input.len() != self.input_size() {
            return Err(NeuralError::InputShape { got: input.len(), want: self.input_size() });
        }
        let n_layers = self.weights.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            let prev = &acts[l];
            let mut out = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut z = self.biases[l][o];
                for i in 0..n_in {
                    z += row[i] * prev[i];
                }
                out[o] = if l + 1 == n_layers {
                    match self.output_activation {
                        OutputActivation::Tanh => z.tanh(),
                        OutputActivation::Identity => z,
                    }
                } else {
                    z.max(0.0)
                };
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Exact reverse-mode partials of <upstream, forward(input)> with
    /// respect to every parameter and the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients, NeuralError> {
        if upstream.len() != self.output_size() {
            return Err(NeuralError::UpstreamShape { got: upstream.len(), want: self.output_size() });
        }
        let acts = self.forward_cached(input)?;
        let n_layers = self.weights.len();
        let mut grads = Gradients::zeros_like(self);

        // Delta at the output, through the head activation.
        let out = &acts[n_layers];
        let mut delta: Vec<f64> = match self.output_activation {
            OutputActivation::Tanh => upstream
                .iter()
                .zip(out)
                .map(|(u, y)| u * (1.0 - y * y))
                .collect(),
            OutputActivation::Identity => upstream.to_vec(),
        };

        for l in (0..n_layers).rev() {
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.d_biases[l][o] += d;
                let row = &mut grads.d_weights[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * prev[i];
                }
            }
            let mut d_prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    d_prev[i] += d * row[i];
                }
            }
            if l > 0 {
                // ReLU derivative on the previous layer's post-activation.
                for (dp, a) in d_prev.iter_mut().zip(prev) {
                    if *a <= 0.0 {
                        *dp = 0.0;
                    }
                }
            }
            delta = d_prev;
        }
        grads.d_input = delta;
        Ok(grads)
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
    pub d_input: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            d_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            d_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            d_input: vec![0.0; net.input_size()],
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, opt: &mut AdamState) -> Result<(), NeuralError> {
    if net.weights.len() != opt.m_weights.len() {
        return Err(NeuralError::Architecture(0));
    }
    opt.step += 1;
    let t = opt.step as f64;
    let bc1 = 1.0 - opt.beta1.powf(t);
    let bc2 = 1.0 - opt.beta2.powf(t);
    let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..params.len() {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= opt.lr * m_hat / (v_hat.sqrt() + opt.epsilon);
        }
    };
    for l in 0..net.weights.len() {
        if net.weights[l].len() != grads.d_weights[l].len() {
            return Err(NeuralError::Architecture(l));
        }
        update(&mut net.weights[l], &grads.d_weights[l], &mut opt.m_weights[l], &mut opt.v_weights[l]);
        update(&mut net.biases[l], &grads.d_biases[l], &mut opt.m_biases[l], &mut opt.v_biases[l]);
    }
    Ok(())
}

/// target <- tau*online + (1-tau)*target, elementwise.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), NeuralError> {
    if target.layer_sizes != online.layer_sizes {
        return Err(NeuralError::Architecture(0));
    }
    for l in 0..target.weights.len() {
        for (t, o) in target.weights[l].iter_mut().zip(&online.weights[l]) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        for (t, o) in target.biases[l].iter_mut().zip(&online.biases[l]) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

/// Max relative error between analytic gradients and central finite
/// differences of <upstream, forward(input)>. Parameter pairs where both
/// magnitudes are below `dead_zone` are skipped, as are parameters whose
/// perturbation flips a ReLU on or off: the objective is nondifferentiable
/// there and a finite difference straddling the kink is meaningless.
pub fn finite_difference_check(net: &Mlp, input: &[f64], upstream: &[f64], h: f64, dead_zone: f64) -> f64 {
    let analytic = net.backward(input, upstream).expect("shapes checked by caller");
    // One forward pass yields both the probe objective and which hidden
    // units are active (post-ReLU > 0).
    let eval = |n: &Mlp| -> (f64, Vec<bool>) {
        let acts = n.forward_cached(input).unwrap();
        let loss = acts
            .last()
            .unwrap()
            .iter()
            .zip(upstream)
            .map(|(y, u)| y * u)
            .sum();
        let pattern = acts[1..acts.len() - 1]
            .iter()
            .flat_map(|layer| layer.iter().map(|&v| v > 0.0))
            .collect();
        (loss, pattern)
    };
    let (_, base_pattern) = eval(net);
    let mut max_rel = 0.0f64;
    let mut probe = net.clone();
    for l in 0..net.weights.len() {
        for i in 0..net.weights[l].len() {
            let orig = net.weights[l][i];
            probe.weights[l][i] = orig + h;
            let (up, up_pat) = eval(&probe);
            probe.weights[l][i] = orig - h;
            let (down, down_pat) = eval(&probe);
            probe.weights[l][i] = orig;
            if up_pat != base_pattern || down_pat != base_pattern {
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.d_weights[l][i];
            if a.abs() < dead_zone && numeric.abs() < dead_zone {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
        for i in 0..net.biases[l].len() {
            let orig = net.biases[l][i];
            probe.biases[l][i] = orig + h;
            let (up, up_pat) = eval(&probe);
            probe.biases[l][i] = orig - h;
            let (down, down_pat) = eval(&probe);
            probe.biases[l][i] = orig;
            if up_pat != base_pattern || down_pat != base_pattern {
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.d_biases[l][i];
            if a.abs() < dead_zone && numeric.abs() < dead_zone {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng(0));
        for w in net.weights.iter_mut() {
            w.fill(0.0);
        }
        for b in net.biases.iter_mut() {
            b.fill(0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_identity_weights() {
        let mut net = Mlp::new(&[2, 2], OutputActivation::Identity, &mut rng(0));
        net.weights[0] = vec![1.0, 0.0, 0.0, 1.0];
        net.biases[0] = vec![0.0, 0.0];
        assert_eq!(net.forward(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn forward_matches_hand_composition() {
        let mut net = Mlp::new(&[3, 4, 2], OutputActivation::Tanh, &mut rng(42));
        net.scale_output_layer(1.0);
        let x = [0.5, -0.3, 0.8];
        // Hand evaluation.
        let mut hidden = vec![0.0; 4];
        for o in 0..4 {
            let mut z = net.biases[0][o];
            for i in 0..3 {
                z += net.weights[0][o * 3 + i] * x[i];
            }
            hidden[o] = z.max(0.0);
        }
        let mut expect = vec![0.0; 2];
        for o in 0..2 {
            let mut z = net.biases[1][o];
            for i in 0..4 {
                z += net.weights[1][o * 4 + i] * hidden[i];
            }
            expect[o] = z.tanh();
        }
        let got = net.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[4, 8, 3], OutputActivation::Tanh, &mut rng(1));
        let g = net.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.d_weights.iter().flatten().all(|&v| v == 0.0));
        assert!(g.d_biases.iter().flatten().all(|&v| v == 0.0));
        assert!(g.d_input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_net_weight_gradient_is_input() {
        let mut net = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng(0));
        net.weights[0] = vec![2.0];
        net.biases[0] = vec![0.0];
        let g = net.backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(g.d_weights[0][0], 3.0);
        assert_eq!(g.d_biases[0][0], 1.0);
        assert_eq!(g.d_input[0], 2.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5u64 {
            let mut r = rng(seed);
            let net = Mlp::new(&[10, 16, 16, 3], OutputActivation::Tanh, &mut r);
            let input: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.0)).collect();
            let upstream: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let err = finite_difference_check(&net, &input, &upstream, 1e-5, 1e-8);
            assert!(err < 1e-4, "seed {seed}: max rel error {err}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity_on_params() {
        let net0 = Mlp::new(&[2, 3, 1], OutputActivation::Identity, &mut rng(3));
        let mut net = net0.clone();
        let mut opt = AdamState::new(&net, 0.001);
        let g = Gradients::zeros_like(&net);
        adam_step(&mut net, &g, &mut opt).unwrap();
        assert_eq!(net, net0);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng(0));
        net.weights[0] = vec![1.0];
        let before = net.weights[0][0];
        let mut opt = AdamState::new(&net, 0.01);
        let mut g = Gradients::zeros_like(&net);
        g.d_weights[0][0] = 7.0;
        g.d_biases[0][0] = 0.0;
        adam_step(&mut net, &g, &mut opt).unwrap();
        // Bias-corrected first step is ~lr * sign(g).
        assert!((before - net.weights[0][0] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(w) = (w-3)^2, gradient 2(w-3), lr 0.1, 100 steps from w=0.
        let mut net = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng(0));
        net.weights[0] = vec![0.0];
        net.biases[0] = vec![0.0];
        let mut opt = AdamState::new(&net, 0.1);
        for _ in 0..100 {
            let w = net.weights[0][0];
            let mut g = Gradients::zeros_like(&net);
            g.d_weights[0][0] = 2.0 * (w - 3.0);
            adam_step(&mut net, &g, &mut opt).unwrap();
        }
        assert!((net.weights[0][0] - 3.0).abs() < 0.5);
    }

    #[test]
    fn polyak_endpoints_and_midpoint() {
        let online = Mlp::new(&[2, 2], OutputActivation::Identity, &mut rng(5));
        let mut t1 = Mlp::new(&[2, 2], OutputActivation::Identity, &mut rng(6));
        let orig = t1.clone();
        polyak_update(&mut t1, &online, 0.0).unwrap();
        assert_eq!(t1, orig);
        polyak_update(&mut t1, &online, 1.0).unwrap();
        assert_eq!(t1, online);

        let mut mid = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng(0));
        mid.weights[0] = vec![2.0];
        mid.biases[0] = vec![2.0];
        let mut target4 = mid.clone();
        target4.weights[0] = vec![4.0];
        target4.biases[0] = vec![4.0];
        polyak_update(&mut target4, &mid, 0.5).unwrap();
        assert_eq!(target4.weights[0][0], 3.0);
    }

    #[test]
    fn polyak_geometric_decay() {
        let mut r = rng(9);
        let online = Mlp::new(&[4, 8, 2], OutputActivation::Identity, &mut r);
        let mut target = Mlp::new(&[4, 8, 2], OutputActivation::Identity, &mut r);
        let tau = 0.005;
        let gap0: f64 = target
            .weights
            .iter()
            .flatten()
            .zip(online.weights.iter().flatten())
            .map(|(t, o)| (t - o).abs())
            .fold(0.0, f64::max);
        let k = 200;
        for _ in 0..k {
            polyak_update(&mut target, &online, tau).unwrap();
        }
        let gap: f64 = target
            .weights
            .iter()
            .flatten()
            .zip(online.weights.iter().flatten())
            .map(|(t, o)| (t - o).abs())
            .fold(0.0, f64::max);
        assert!((gap - gap0 * (1.0 - tau).powi(k)).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch_errors() {
        let net = Mlp::new(&[3, 2], OutputActivation::Identity, &mut rng(0));
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        let other = Mlp::new(&[3, 4], OutputActivation::Identity, &mut rng(0));
        let mut t = net.clone();
        assert!(polyak_update(&mut t, &other, 0.5).is_err());
    }
}
