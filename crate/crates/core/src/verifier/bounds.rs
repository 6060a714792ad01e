//! Interval bounds on pre-activations.

use crate::error::{Error, Result};
use crate::network::ReluNetwork;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }
}

/// Pre-activation intervals for every layer (hidden and output), given a box
/// on the network's normalized inputs.
pub fn propagate_normalized(net: &ReluNetwork, boxed: &[Interval]) -> Vec<Vec<Interval>> {
    let mut cur: Vec<Interval> = boxed.to_vec();
    let last = net.layers.len() - 1;
    let mut out = Vec::with_capacity(net.layers.len());
    for (k, layer) in net.layers.iter().enumerate() {
        let mut pre = Vec::with_capacity(layer.rows);
        for r in 0..layer.rows {
            let (mut lo, mut hi) = (layer.bias[r], layer.bias[r]);
            for (w, iv) in layer.row(r).iter().zip(&cur) {
                if *w >= 0.0 {
                    lo += w * iv.lo;
                    hi += w * iv.hi;
                } else {
                    lo += w * iv.hi;
                    hi += w * iv.lo;
                }
            }
            pre.push(Interval::new(lo, hi));
        }
        cur = if k < last {
            pre.iter().map(|iv| Interval::new(iv.lo.max(0.0), iv.hi.max(0.0))).collect()
        } else {
            Vec::new()
        };
        out.push(pre);
    }
    out
}

/// Interval bounds for a box given in the network's raw input units.
pub fn propagate_bounds(net: &ReluNetwork, lo: &[f64], hi: &[f64]) -> Result<Vec<Vec<Interval>>> {
    if lo.len() != net.input_dim() || hi.len() != net.input_dim() {
        return Err(Error::InvalidQuery("box dimension does not match network input".into()));
    }
    let mut boxed = Vec::with_capacity(lo.len());
    for j in 0..lo.len() {
        if !(lo[j] <= hi[j]) {
            return Err(Error::InvalidInterval { lo: lo[j], hi: hi[j] });
        }
        let (m, r) = (net.input_mean[j], net.input_range[j]);
        boxed.push(Interval::new((lo[j] - m) / r, (hi[j] - m) / r));
    }
    Ok(propagate_normalized(net, &boxed))
}

/// Pre-activations at a concrete normalized input, layer by layer.
#[cfg(test)]
pub(crate) fn pre_activations(net: &ReluNetwork, z: &[f64]) -> Vec<Vec<f64>> {
    let mut cur = z.to_vec();
    let last = net.layers.len() - 1;
    let mut out = Vec::new();
    for (k, l) in net.layers.iter().enumerate() {
        let mut pre = vec![0.0; l.rows];
        l.apply(&cur, &mut pre);
        cur = if k < last { pre.iter().map(|v| v.max(0.0)).collect() } else { Vec::new() };
        out.push(pre);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Layer, ReluNetwork};
    use crate::network::tests::random_net;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias() {
        let mut l = Layer::zeros(3, 4);
        l.bias = vec![1.0, -2.0, 0.5];
        let net = ReluNetwork::new(vec![l], vec![0.0; 4], vec![1.0; 4], 0.0, 1.0).unwrap();
        let b = propagate_bounds(&net, &[-5.0; 4], &[5.0; 4]).unwrap();
        assert_eq!(b[0], vec![Interval::new(1.0, 1.0), Interval::new(-2.0, -2.0), Interval::new(0.5, 0.5)]);
    }

    #[test]
    fn identity_layer() {
        let mut l = Layer::zeros(4, 4);
        for i in 0..4 {
            l.weights[i * 4 + i] = 1.0;
        }
        let net = ReluNetwork::new(vec![l], vec![0.0; 4], vec![1.0; 4], 0.0, 1.0).unwrap();
        let b = propagate_bounds(&net, &[-1.0; 4], &[1.0; 4]).unwrap();
        assert!(b[0].iter().all(|iv| *iv == Interval::new(-1.0, 1.0)));
    }

    #[test]
    fn sampled_preactivations_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..10_000 {
            let depth = rng.gen_range(1..4);
            let mut sizes = vec![4];
            sizes.extend((0..depth).map(|_| rng.gen_range(1..8)));
            sizes.push(3);
            let net = random_net(&mut rng, &sizes);
            let lo: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..1.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..2.0)).collect();
            let bounds = propagate_bounds(&net, &lo, &hi).unwrap();
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
            let pre = pre_activations(&net, &net.normalize_input(&x));
            for (layer_b, layer_v) in bounds.iter().zip(&pre) {
                for (iv, v) in layer_b.iter().zip(layer_v) {
                    let slack = 1e-9 * (1.0 + v.abs());
                    assert!(iv.lo - slack <= *v && *v <= iv.hi + slack);
                }
            }
        }
    }
}
