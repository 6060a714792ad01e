//! Supervised compression of a Q table with an asymmetric squared loss.
//!
//! Per example the loss is `Σ_a m_a (ŷ_a − y_a)²` over allowed outputs, with
//! `m_a = λ` when the prediction errs in the direction that could change the
//! argmax (target argmax under-predicted, any other output over-predicted) and
//! `1` otherwise. Parameters are updated with Adamax.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, Layer, ReluNetwork};
use crate::domain::{allowed_advisories, Advisory, NUM_ADVISORIES};
use crate::error::{Error, Result};
use crate::policy::{masked_argmax, node_advisory, QTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after each epoch.
    pub lr_decay: f64,
    /// Asymmetric-loss weight λ.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![16; 4],
            epochs: 200,
            batch_size: 256,
            learning_rate: 0.002,
            lr_decay: 0.985,
            lambda: 40.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if !(self.lambda >= 1.0) {
            return bad("lambda must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning rate must be positive and decay in (0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths");
        }
        Ok(())
    }
}

/// Normalized training examples. Masked-out outputs do not contribute to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub input_dim: usize,
    pub output_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub mask: Vec<bool>,
    best: Vec<usize>,
}

impl TrainingSet {
    pub fn new(input_dim: usize, output_dim: usize, inputs: Vec<f64>, targets: Vec<f64>, mask: Vec<bool>) -> Self {
        let n = inputs.len() / input_dim;
        assert_eq!(inputs.len(), n * input_dim);
        assert_eq!(targets.len(), n * output_dim);
        assert_eq!(mask.len(), n * output_dim);
        let best = (0..n)
            .map(|i| {
                let t = &targets[i * output_dim..(i + 1) * output_dim];
                let m = &mask[i * output_dim..(i + 1) * output_dim];
                let mut best = usize::MAX;
                for k in 0..output_dim {
                    if m[k] && (best == usize::MAX || t[k] > t[best]) {
                        best = k;
                    }
                }
                best
            })
            .collect();
        TrainingSet {
            input_dim,
            output_dim,
            inputs,
            targets,
            mask,
            best,
        }
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }

    fn mask_of(&self, i: usize) -> &[bool] {
        &self.mask[i * self.output_dim..(i + 1) * self.output_dim]
    }
}

/// Parameter gradient with the same shapes as the network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    fn zeros_like(net: &ReluNetwork) -> Self {
        Gradient {
            layers: net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Flattened parameters in the order weights, bias per layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Activation buffers reused across examples.
struct Scratch {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    fn new(net: &ReluNetwork) -> Self {
        let widest = net.layers.iter().map(|l| l.rows.max(l.cols)).max().unwrap_or(1);
        Scratch {
            pre: net.layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            post: net.layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }
}

/// Accumulate loss and gradient of one example into `grad`, scaled by `scale`.
fn accumulate(
    net: &ReluNetwork,
    set: &TrainingSet,
    i: usize,
    lambda: f64,
    scale: f64,
    s: &mut Scratch,
    grad: &mut Gradient,
) -> f64 {
    let last = net.layers.len() - 1;
    for (k, l) in net.layers.iter().enumerate() {
        let (before, after) = s.post.split_at_mut(k);
        let input: &[f64] = if k == 0 { set.input(i) } else { &before[k - 1] };
        for r in 0..l.rows {
            let z = l.bias[r] + dot(l.row(r), input);
            s.pre[k][r] = z;
            after[0][r] = if k < last { z.max(0.0) } else { z };
        }
    }
    let out = &s.post[last];
    let target = set.target(i);
    let mask = set.mask_of(i);
    let best = set.best[i];
    let mut loss = 0.0;
    for a in 0..set.output_dim {
        if !mask[a] {
            s.delta[a] = 0.0;
            continue;
        }
        let diff = out[a] - target[a];
        let heavy = if a == best { diff < 0.0 } else { diff > 0.0 };
        let m = if heavy { lambda } else { 1.0 };
        loss += m * diff * diff;
        s.delta[a] = scale * 2.0 * m * diff;
    }
    for k in (0..=last).rev() {
        let l = &net.layers[k];
        let g = &mut grad.layers[k];
        let input: &[f64] = if k == 0 { set.input(i) } else { &s.post[k - 1] };
        for r in 0..l.rows {
            let d = s.delta[r];
            if d == 0.0 {
                continue;
            }
            g.bias[r] += d;
            let gw = &mut g.weights[r * l.cols..(r + 1) * l.cols];
            for (w, x) in gw.iter_mut().zip(input) {
                *w += d * x;
            }
        }
        if k > 0 {
            let prev_pre = &s.pre[k - 1];
            for c in 0..l.cols {
                s.delta_prev[c] = 0.0;
            }
            for r in 0..l.rows {
                let d = s.delta[r];
                if d == 0.0 {
                    continue;
                }
                for (dp, w) in s.delta_prev[..l.cols].iter_mut().zip(l.row(r)) {
                    *dp += w * d;
                }
            }
            for c in 0..l.cols {
                s.delta[c] = if prev_pre[c] > 0.0 { s.delta_prev[c] } else { 0.0 };
            }
        }
    }
    loss
}

/// Mean loss over `indices` and its gradient with respect to all parameters.
/// The network must already be in normalized units matching the set.
pub fn loss_and_gradient(net: &ReluNetwork, set: &TrainingSet, indices: &[usize], lambda: f64) -> (f64, Gradient) {
    let mut grad = Gradient::zeros_like(net);
    let mut scratch = Scratch::new(net);
    let scale = 1.0 / indices.len().max(1) as f64;
    let mut loss = 0.0;
    for &i in indices {
        loss += accumulate(net, set, i, lambda, scale, &mut scratch, &mut grad);
    }
    (loss * scale, grad)
}

struct Adamax {
    m: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAMAX_EPS: f64 = 1e-8;

impl Adamax {
    fn new(net: &ReluNetwork) -> Self {
        let sizes: Vec<usize> = net.layers.iter().map(|l| l.weights.len() + l.bias.len()).collect();
        Adamax {
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            u: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut ReluNetwork, grad: &Gradient, lr: f64) {
        self.t += 1;
        let step = lr / (1.0 - BETA1.powi(self.t));
        for (k, (l, g)) in net.layers.iter_mut().zip(&grad.layers).enumerate() {
            let params = l.weights.iter_mut().chain(l.bias.iter_mut());
            let grads = g.weights.iter().chain(&g.bias);
            for (((p, gv), m), u) in params.zip(grads).zip(self.m[k].iter_mut()).zip(self.u[k].iter_mut()) {
                *m = BETA1 * *m + (1.0 - BETA1) * gv;
                *u = (BETA2 * *u).max(gv.abs());
                *p -= step * *m / (*u + ADAMAX_EPS);
            }
        }
    }
}

fn init_layers(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    sizes
        .windows(2)
        .map(|w| {
            let bound = (6.0 / w[0] as f64).sqrt();
            Layer {
                rows: w[1],
                cols: w[0],
                weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-bound..bound)).collect(),
                bias: vec![0.0; w[1]],
            }
        })
        .collect()
}

/// Train a network in normalized units on `set`. The returned network has
/// identity normalization; callers attach their scaling afterwards.
pub fn train_on(set: &TrainingSet, cfg: &TrainConfig) -> Result<(ReluNetwork, f64)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidTrainConfig("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![set.input_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(set.output_dim);
    let mut net = ReluNetwork {
        layers: init_layers(&sizes, &mut rng),
        input_mean: vec![0.0; set.input_dim],
        input_range: vec![1.0; set.input_dim],
        output_mean: 0.0,
        output_range: 1.0,
    };
    let mut opt = Adamax::new(&net);
    let mut grad = Gradient::zeros_like(&net);
    let mut scratch = Scratch::new(&net);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut epoch_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += accumulate(&net, set, i, cfg.lambda, scale, &mut scratch, &mut grad);
            }
            opt.step(&mut net, &grad, lr);
        }
        epoch_loss = total / set.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: epoch_loss,
            });
        }
        lr *= cfg.lr_decay;
    }
    Ok((net, epoch_loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub a_prev: Advisory,
    pub final_loss: f64,
    pub agreement: f64,
    pub samples: usize,
}

/// Grid spans used as input normalization: midpoints and widths of each axis.
fn input_normalization(table: &QTable) -> (Vec<f64>, Vec<f64>) {
    let spec = table.spec();
    let span = |c: &[f64]| (c[0], c[c.len() - 1]);
    let axes = [
        span(&spec.h_cuts),
        span(&spec.v_o_cuts),
        span(&spec.v_i_cuts),
        (0.0, spec.tau_hi()),
    ];
    (
        axes.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
        axes.iter().map(|(lo, hi)| hi - lo).collect(),
    )
}

/// Training set of every grid node for one previous advisory.
fn table_set(table: &QTable, a_prev: Advisory) -> (TrainingSet, Vec<f64>, Vec<f64>, f64, f64) {
    let spec = table.spec();
    let (mean, range) = input_normalization(table);
    let allowed = allowed_advisories(a_prev);
    let n = spec.num_layers() * spec.nodes_per_layer();

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for layer in 0..spec.num_layers() {
        for node in 0..spec.nodes_per_layer() {
            let row = table.node_row(layer, node, a_prev);
            for a in allowed.iter() {
                lo = lo.min(row[a.index()]);
                hi = hi.max(row[a.index()]);
            }
        }
    }
    let out_mean = 0.5 * (lo + hi);
    let out_range = if hi > lo { hi - lo } else { 1.0 };

    let mut inputs = Vec::with_capacity(n * 4);
    let mut targets = Vec::with_capacity(n * NUM_ADVISORIES);
    let mut mask = Vec::with_capacity(n * NUM_ADVISORIES);
    for layer in 0..spec.num_layers() {
        for node in 0..spec.nodes_per_layer() {
            let s = table.node_state(layer, node, a_prev);
            for (k, x) in s.features().iter().enumerate() {
                inputs.push((x - mean[k]) / range[k]);
            }
            let row = table.node_row(layer, node, a_prev);
            for a in Advisory::ALL {
                let ok = allowed.contains(a);
                mask.push(ok);
                targets.push(if ok { (row[a.index()] - out_mean) / out_range } else { 0.0 });
            }
        }
    }
    (
        TrainingSet::new(4, NUM_ADVISORIES, inputs, targets, mask),
        mean,
        range,
        out_mean,
        out_range,
    )
}

/// Fraction of grid nodes where the network's masked argmax equals the table's.
pub fn grid_agreement(net: &ReluNetwork, table: &QTable, a_prev: Advisory) -> Result<f64> {
    let spec = table.spec();
    let allowed = allowed_advisories(a_prev);
    let mut hits = 0usize;
    let mut total = 0usize;
    for layer in 0..spec.num_layers() {
        for node in 0..spec.nodes_per_layer() {
            let s = table.node_state(layer, node, a_prev);
            let out = net.forward(&s.features())?;
            if masked_argmax(&out, allowed) == node_advisory(table, layer, node, a_prev) {
                hits += 1;
            }
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Compress the table slice for `a_prev` into a network.
pub fn train(table: &QTable, a_prev: Advisory, cfg: &TrainConfig) -> Result<(ReluNetwork, TrainReport)> {
    let (set, mean, range, out_mean, out_range) = table_set(table, a_prev);
    let (mut net, final_loss) = train_on(&set, cfg)?;
    net.input_mean = mean;
    net.input_range = range;
    net.output_mean = out_mean;
    net.output_range = out_range;
    net.validate()?;
    let agreement = grid_agreement(&net, table, a_prev)?;
    Ok((
        net,
        TrainReport {
            a_prev,
            final_loss,
            agreement,
            samples: set.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> TrainingSet {
        let inputs = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mask = (0..n * k).map(|j| j % k != k - 1 || j % 3 == 0).collect();
        TrainingSet::new(d, k, inputs, targets, mask)
    }

    fn toy_net(rng: &mut ChaCha8Rng, sizes: &[usize]) -> ReluNetwork {
        let mut layers = init_layers(sizes, rng);
        for l in &mut layers {
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
        ReluNetwork::new(layers, vec![0.0; sizes[0]], vec![1.0; sizes[0]], 0.0, 1.0).unwrap()
    }

    #[test]
    fn asymmetric_penalty_exceeds_symmetric() {
        let set = TrainingSet::new(1, 2, vec![0.0], vec![1.0, 0.0], vec![true, true]);
        // output 0 predicted low (wrong argmax side), output 1 predicted high
        let mut out = Layer::zeros(2, 1);
        out.bias = vec![0.2, 0.8];
        let mut hidden = Layer::zeros(1, 1);
        hidden.weights[0] = 1.0;
        let net = ReluNetwork::new(vec![hidden, out], vec![0.0], vec![1.0], 0.0, 1.0).unwrap();
        let (asym, _) = loss_and_gradient(&net, &set, &[0], 40.0);
        let (sym, _) = loss_and_gradient(&net, &set, &[0], 1.0);
        assert!((sym - (0.64 + 0.64)).abs() < 1e-12);
        assert!(asym > sym);
        assert!((asym - 40.0 * sym).abs() < 1e-9);
    }

    #[test]
    fn masked_outputs_carry_no_gradient() {
        let set = TrainingSet::new(1, 2, vec![0.5], vec![1.0, 100.0], vec![true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = toy_net(&mut rng, &[1, 3, 2]);
        let (_, g) = loss_and_gradient(&net, &set, &[0], 40.0);
        let out = g.layers.last().unwrap();
        assert_eq!(out.bias[1], 0.0);
        assert!(out.row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let set = toy_set(&mut rng, 12, 2, 3);
        let idx: Vec<usize> = (0..set.len()).collect();
        let net = toy_net(&mut rng, &[2, 3, 3, 3]);
        let (_, g) = loss_and_gradient(&net, &set, &idx, 40.0);
        let analytic = g.flatten();
        let h = 1e-5;
        let mut numeric = Vec::new();
        for k in 0..net.layers.len() {
            let n_w = net.layers[k].weights.len();
            for j in 0..n_w + net.layers[k].bias.len() {
                let eval = |delta: f64| {
                    let mut p = net.clone();
                    if j < n_w {
                        p.layers[k].weights[j] += delta;
                    } else {
                        p.layers[k].bias[j - n_w] += delta;
                    }
                    loss_and_gradient(&p, &set, &idx, 40.0).0
                };
                numeric.push((eval(h) - eval(-h)) / (2.0 * h));
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / norm <= 1e-4, "relative error {}", diff / norm);
    }

    #[test]
    fn training_is_deterministic_and_separates_constant_problem() {
        // advisory 1 is always best
        let n = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let targets: Vec<f64> = (0..n * 3).map(|j| if j % 3 == 1 { 0.5 } else { -0.5 }).collect();
        let set = TrainingSet::new(2, 3, inputs, targets, vec![true; n * 3]);
        let cfg = TrainConfig {
            hidden: vec![4],
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let (a, _) = train_on(&set, &cfg).unwrap();
        let (b, _) = train_on(&set, &cfg).unwrap();
        assert_eq!(a, b);
        for i in 0..n {
            let y = a.forward_normalized(&set.inputs[i * 2..i * 2 + 2]);
            assert!(y[1] > y[0] && y[1] > y[2]);
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let set = TrainingSet::new(1, 1, vec![1e200], vec![1e200], vec![true]);
        let cfg = TrainConfig {
            hidden: vec![2],
            epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(train_on(&set, &cfg), Err(Error::TrainingDiverged { epoch: 0, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: 0.5, ..TrainConfig::default() }.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }
}
