use serde::{Deserialize, Serialize};

use crate::domain::{H_RANGE, V_RANGE};
use crate::error::{Error, Result};

/// Discretization of the (h, v_O, v_I, τ) state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h_cuts: Vec<f64>,
    pub v_o_cuts: Vec<f64>,
    pub v_i_cuts: Vec<f64>,
    /// Number of τ steps; layers are τ = 0, ε, …, tau_max·ε.
    pub tau_max: usize,
    /// Layer spacing in seconds.
    pub epsilon: f64,
}

/// Positive half of the default altitude cuts; mirrored around 0.
const H_HALF: [f64; 22] = [
    25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 250.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0,
    1000.0, 1250.0, 1500.0, 2000.0, 2500.0, 3000.0, 4000.0, 6000.0, 8000.0,
];

pub fn uniform_cuts(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Symmetric cuts `{-x..., 0, x...}` from a positive half list.
pub fn symmetric_cuts(half: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = half.iter().rev().map(|x| -x).collect();
    cuts.push(0.0);
    cuts.extend_from_slice(half);
    cuts
}

impl Default for GridSpec {
    /// 45 altitude cuts dense near zero, 21×21 rate cuts, 41 τ layers at 1 s.
    fn default() -> Self {
        GridSpec {
            h_cuts: symmetric_cuts(&H_HALF),
            v_o_cuts: uniform_cuts(V_RANGE.0, V_RANGE.1, 21),
            v_i_cuts: uniform_cuts(V_RANGE.0, V_RANGE.1, 21),
            tau_max: 40,
            epsilon: 1.0,
        }
    }
}

impl GridSpec {
    /// A coarser grid with the same coverage, for quick runs.
    pub fn coarse() -> Self {
        GridSpec {
            h_cuts: symmetric_cuts(&[
                50.0, 100.0, 200.0, 300.0, 500.0, 700.0, 1000.0, 1500.0, 2500.0, 4000.0, 8000.0,
            ]),
            v_o_cuts: uniform_cuts(V_RANGE.0, V_RANGE.1, 11),
            v_i_cuts: uniform_cuts(V_RANGE.0, V_RANGE.1, 11),
            tau_max: 40,
            epsilon: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("h", &self.h_cuts, H_RANGE)?;
        check_axis("v_O", &self.v_o_cuts, V_RANGE)?;
        check_axis("v_I", &self.v_i_cuts, V_RANGE)?;
        if self.tau_max < 1 {
            return Err(Error::InvalidGrid("tau_max must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidGrid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.tau_max + 1
    }

    /// Spatial nodes per τ layer.
    pub fn nodes_per_layer(&self) -> usize {
        self.h_cuts.len() * self.v_o_cuts.len() * self.v_i_cuts.len()
    }

    pub fn tau_of_layer(&self, layer: usize) -> f64 {
        layer as f64 * self.epsilon
    }

    pub fn tau_hi(&self) -> f64 {
        self.tau_of_layer(self.tau_max)
    }

    /// Flat index of a spatial node.
    #[inline]
    pub fn node_index(&self, ih: usize, ivo: usize, ivi: usize) -> usize {
        (ih * self.v_o_cuts.len() + ivo) * self.v_i_cuts.len() + ivi
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> (usize, usize, usize) {
        let nvi = self.v_i_cuts.len();
        let nvo = self.v_o_cuts.len();
        (node / (nvo * nvi), (node / nvi) % nvo, node % nvi)
    }

    pub fn node_values(&self, node: usize) -> (f64, f64, f64) {
        let (ih, ivo, ivi) = self.node_coords(node);
        (self.h_cuts[ih], self.v_o_cuts[ivo], self.v_i_cuts[ivi])
    }
}

fn check_axis(name: &str, cuts: &[f64], (lo, hi): (f64, f64)) -> Result<()> {
    if cuts.len() < 2 {
        return Err(Error::InvalidGrid(format!("{name} axis needs at least 2 cuts")));
    }
    if cuts.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} axis has non-finite cuts")));
    }
    if cuts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("{name} cuts must be strictly increasing")));
    }
    if cuts[0] > lo || cuts[cuts.len() - 1] < hi {
        return Err(Error::InvalidGrid(format!(
            "{name} cuts must cover [{lo}, {hi}], got [{}, {}]",
            cuts[0],
            cuts[cuts.len() - 1]
        )));
    }
    Ok(())
}

/// Cell lookup on one axis: lower node index and fraction toward the next node.
/// Values outside the axis are clamped to its ends.
#[inline]
pub fn locate(cuts: &[f64], x: f64) -> (usize, f64) {
    let n = cuts.len();
    if x <= cuts[0] {
        return (0, 0.0);
    }
    if x >= cuts[n - 1] {
        return (n - 2, 1.0);
    }
    // first index with cuts[i] > x
    let upper = cuts.partition_point(|&c| c <= x);
    let i = upper - 1;
    let frac = (x - cuts[i]) / (cuts[i + 1] - cuts[i]);
    (i, frac)
}
