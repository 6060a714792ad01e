//! Fully-connected ReLU networks: evaluation, training, text serialization.

mod format;
mod train;

use serde::{Deserialize, Serialize};

pub use format::{load, parse, save, to_text};
pub use train::{
    grid_agreement, loss_and_gradient, train, train_on, Gradient, TrainConfig, TrainReport, TrainingSet,
};

use crate::domain::{allowed_advisories, Advisory, EncounterState, TAU_CLAMP};
use crate::error::{Error, Result};
use crate::policy::{masked_argmax, slice_with, SliceCell, SliceSpec};

/// One affine map `y = W x + b` with `W` stored row-major (`rows` outputs × `cols` inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn w(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    /// `out = W x + b`
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.bias[r] + dot(self.row(r), x);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ReLU MLP with affine input normalization and output scaling.
///
/// Hidden layers apply ReLU; the last layer is affine. Inputs are mapped
/// through `(x - mean) / range` before the first layer and outputs through
/// `y * range + mean` after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluNetwork {
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    pub input_range: Vec<f64>,
    pub output_mean: f64,
    pub output_range: f64,
}

impl ReluNetwork {
    pub fn new(
        layers: Vec<Layer>,
        input_mean: Vec<f64>,
        input_range: Vec<f64>,
        output_mean: f64,
        output_range: f64,
    ) -> Result<Self> {
        let net = ReluNetwork {
            layers,
            input_mean,
            input_range,
            output_mean,
            output_range,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows || l.rows == 0 || l.cols == 0 {
                return Err(Error::NetworkStructure {
                    layer: i,
                    message: format!("parameter count does not match {}x{}", l.rows, l.cols),
                });
            }
            if i > 0 && self.layers[i - 1].rows != l.cols {
                return Err(Error::NetworkStructure {
                    layer: i,
                    message: format!("expects {} inputs, previous layer has {}", l.cols, self.layers[i - 1].rows),
                });
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NetworkStructure {
                    layer: i,
                    message: "non-finite parameter".into(),
                });
            }
        }
        let d = self.input_dim();
        if self.input_mean.len() != d || self.input_range.len() != d {
            return Err(Error::InvalidNetwork(format!("normalization needs {d} entries")));
        }
        let ok = |v: f64| v.is_finite();
        if !self.input_mean.iter().all(|v| ok(*v))
            || !self.input_range.iter().all(|v| ok(*v) && *v > 0.0)
            || !ok(self.output_mean)
            || !(ok(self.output_range) && self.output_range > 0.0)
        {
            return Err(Error::InvalidNetwork("normalization must be finite with positive ranges".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    pub fn num_relus(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_range))
            .map(|(v, (m, r))| (v - m) / r)
            .collect()
    }

    /// Forward pass in normalized units (no input or output scaling).
    pub fn forward_normalized(&self, z: &[f64]) -> Vec<f64> {
        let mut cur = z.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; l.rows];
            l.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        cur
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(x.to_vec()));
        }
        let y = self.forward_normalized(&self.normalize_input(x));
        Ok(y.into_iter()
            .map(|v| v * self.output_range + self.output_mean)
            .collect())
    }

    /// The same network with input normalization folded into the first layer
    /// and unit output scaling. Output differences keep their sign.
    pub fn folded(&self) -> ReluNetwork {
        let mut layers = self.layers.clone();
        let first = &mut layers[0];
        for r in 0..first.rows {
            let mut shift = 0.0;
            for c in 0..first.cols {
                let w = first.weights[r * first.cols + c] / self.input_range[c];
                first.weights[r * first.cols + c] = w;
                shift += w * self.input_mean[c];
            }
            first.bias[r] -= shift;
        }
        let d = self.input_dim();
        ReluNetwork {
            layers,
            input_mean: vec![0.0; d],
            input_range: vec![1.0; d],
            output_mean: 0.0,
            output_range: 1.0,
        }
    }
}

/// Advisory selected by the network for a state, with the τ clamp applied
/// and the argmax restricted to advisories allowed after `s.a_prev`.
pub fn argmax_advisory(net: &ReluNetwork, s: &EncounterState) -> Result<Advisory> {
    let mut x = s.features();
    x[3] = x[3].max(TAU_CLAMP);
    let out = net.forward(&x)?;
    Ok(masked_argmax(&out, allowed_advisories(s.a_prev)))
}

/// Raster of network advisories over (τ, h), same layout as the table export.
pub fn export_network_slice(net: &ReluNetwork, slice: &SliceSpec) -> Result<Vec<SliceCell>> {
    slice_with(slice, |s| argmax_advisory(net, s))
}
