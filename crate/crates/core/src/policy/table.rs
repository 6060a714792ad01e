use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{locate, GridSpec};
use super::model::{alert_cost, nmac_cost, reward, step_dynamics, step_unchecked, ResponseModel};
use crate::domain::{allowed_advisories, Advisory, AdvisorySet, EncounterState, NUM_ADVISORIES, TAU_CLAMP};
use crate::error::{Error, Result};

const PAIRS: usize = NUM_ADVISORIES * NUM_ADVISORIES;

/// Finite-horizon state-action values on a grid.
///
/// Layout: `(tau, h, v_O, v_I, a_prev, advisory)`, row-major. Disallowed
/// `(a_prev, advisory)` pairs hold `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    spec: GridSpec,
    values: Vec<f64>,
}

impl QTable {
    pub(crate) fn from_parts(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.num_layers() * spec.nodes_per_layer() * PAIRS;
        if values.len() != expected {
            return Err(Error::TableFormat(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(QTable { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn offset(&self, layer: usize, node: usize) -> usize {
        (layer * self.spec.nodes_per_layer() + node) * PAIRS
    }

    /// Stored value at a grid node.
    #[inline]
    pub fn node_value(&self, layer: usize, node: usize, a_prev: Advisory, a: Advisory) -> f64 {
        self.values[self.offset(layer, node) + a_prev.index() * NUM_ADVISORIES + a.index()]
    }

    /// All nine values for `a_prev` at a node.
    pub fn node_row(&self, layer: usize, node: usize, a_prev: Advisory) -> &[f64] {
        let o = self.offset(layer, node) + a_prev.index() * NUM_ADVISORIES;
        &self.values[o..o + NUM_ADVISORIES]
    }

    /// State at a grid node.
    pub fn node_state(&self, layer: usize, node: usize, a_prev: Advisory) -> EncounterState {
        let (h, v_o, v_i) = self.spec.node_values(node);
        EncounterState::new(h, v_o, v_i, a_prev, self.spec.tau_of_layer(layer))
    }
}

/// Per-layer node values of the best follow-up: `U[a][node] = max_{a' ∈ allowed(a)} Q(node, a, a')`.
fn best_followup(spec: &GridSpec, layer: &[f64]) -> Vec<f64> {
    let nodes = spec.nodes_per_layer();
    let mut out = vec![0.0; NUM_ADVISORIES * nodes];
    for a in Advisory::ALL {
        let allowed = allowed_advisories(a);
        let dst = &mut out[a.index() * nodes..(a.index() + 1) * nodes];
        for (node, d) in dst.iter_mut().enumerate() {
            let row = &layer[node * PAIRS + a.index() * NUM_ADVISORIES..][..NUM_ADVISORIES];
            *d = allowed
                .iter()
                .map(|b| row[b.index()])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

/// Trilinear interpolation of one node field at (h, v_O, v_I), clamped to the grid.
#[inline]
fn interp3(spec: &GridSpec, field: &[f64], h: f64, v_o: f64, v_i: f64) -> f64 {
    let (ih, fh) = locate(&spec.h_cuts, h);
    let (io, fo) = locate(&spec.v_o_cuts, v_o);
    let (ii, fi) = locate(&spec.v_i_cuts, v_i);
    let mut acc = 0.0;
    for (dh, wh) in [(0, 1.0 - fh), (1, fh)] {
        if wh == 0.0 {
            continue;
        }
        for (dvo, wo) in [(0, 1.0 - fo), (1, fo)] {
            if wo == 0.0 {
                continue;
            }
            for (dvi, wi) in [(0, 1.0 - fi), (1, fi)] {
                if wi == 0.0 {
                    continue;
                }
                acc += wh * wo * wi * field[spec.node_index(ih + dh, io + dvo, ii + dvi)];
            }
        }
    }
    acc
}

/// Backward induction from the terminal layer to `tau_max`.
pub fn solve(spec: &GridSpec, model: &ResponseModel) -> Result<QTable> {
    spec.validate()?;
    model.validate()?;
    let nodes = spec.nodes_per_layer();
    let layer_len = nodes * PAIRS;
    let mut values = vec![0.0; spec.num_layers() * layer_len];

    // terminal layer: zero for allowed pairs
    for node in 0..nodes {
        for ap in Advisory::ALL {
            let allowed = allowed_advisories(ap);
            for a in Advisory::ALL {
                if !allowed.contains(a) {
                    values[node * PAIRS + ap.index() * NUM_ADVISORIES + a.index()] = f64::NEG_INFINITY;
                }
            }
        }
    }

    let allowed: Vec<AdvisorySet> = Advisory::ALL.iter().map(|a| allowed_advisories(*a)).collect();
    for layer in 1..spec.num_layers() {
        let (done, rest) = values.split_at_mut(layer * layer_len);
        let prev = &done[(layer - 1) * layer_len..];
        let followup = best_followup(spec, prev);
        let current = &mut rest[..layer_len];
        let tau = spec.tau_of_layer(layer);

        current
            .par_chunks_mut(PAIRS)
            .enumerate()
            .for_each(|(node, out)| {
                let (h, v_o, v_i) = spec.node_values(node);
                let mut expected = [0.0; NUM_ADVISORIES];
                for a in Advisory::ALL {
                    let field = &followup[a.index() * nodes..(a.index() + 1) * nodes];
                    // a_prev does not affect the dynamics
                    let s = EncounterState::new(h, v_o, v_i, a, tau);
                    let mut e = 0.0;
                    for o in &model.intruder {
                        let next = step_unchecked(&s, a, o.accel, spec.epsilon);
                        let future = interp3(spec, field, next.h, next.v_o, next.v_i);
                        e += o.probability * (nmac_cost(model, &next) + future);
                    }
                    expected[a.index()] = e;
                }
                for ap in Advisory::ALL {
                    for a in Advisory::ALL {
                        out[ap.index() * NUM_ADVISORIES + a.index()] = if allowed[ap.index()].contains(a) {
                            alert_cost(&model.rewards, ap, a) + expected[a.index()]
                        } else {
                            f64::NEG_INFINITY
                        };
                    }
                }
            });

        for (i, v) in current.iter().enumerate() {
            if v.is_nan() || *v == f64::INFINITY {
                return Err(Error::NonFiniteValue {
                    tau: layer,
                    index: i,
                    value: *v,
                });
            }
        }
    }
    QTable::from_parts(spec.clone(), values)
}

/// Largest |Q − (r + E[max Q'])| over all grid states and allowed advisories,
/// recomputed through the public step and reward functions.
pub fn bellman_residual(table: &QTable, model: &ResponseModel) -> Result<f64> {
    let spec = table.spec();
    let nodes = spec.nodes_per_layer();
    let mut worst: f64 = 0.0;
    for node in 0..nodes {
        for ap in Advisory::ALL {
            for a in allowed_advisories(ap).iter() {
                worst = worst.max(table.node_value(0, node, ap, a).abs());
            }
        }
    }
    let residuals: Result<Vec<f64>> = (1..spec.num_layers())
        .into_par_iter()
        .map(|layer| {
            let mut worst: f64 = 0.0;
            for node in 0..nodes {
                for ap in Advisory::ALL {
                    let s = table.node_state(layer, node, ap);
                    for a in allowed_advisories(ap).iter() {
                        let mut future = 0.0;
                        for o in &model.intruder {
                            let next = step_dynamics(&s, a, o.accel, spec.epsilon)?;
                            future += o.probability * corner_max_value(table, layer - 1, &next);
                        }
                        let rhs = reward(&s, a, model, spec.epsilon) + future;
                        worst = worst.max((table.node_value(layer, node, ap, a) - rhs).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect();
    Ok(residuals?.into_iter().fold(worst, f64::max))
}

/// Explicit 8-corner weighted sum of node-wise best values at the next layer.
fn corner_max_value(table: &QTable, layer: usize, s: &EncounterState) -> f64 {
    let spec = table.spec();
    let axes = [
        (&spec.h_cuts, s.h),
        (&spec.v_o_cuts, s.v_o),
        (&spec.v_i_cuts, s.v_i),
    ];
    let cells: Vec<(usize, f64)> = axes.iter().map(|(c, x)| locate(c, *x)).collect();
    let allowed = allowed_advisories(s.a_prev);
    let mut total = 0.0;
    for corner in 0..8usize {
        let mut idx = [0usize; 3];
        let mut weight = 1.0;
        for (axis, (i, f)) in cells.iter().enumerate() {
            let up = (corner >> axis) & 1 == 1;
            idx[axis] = i + up as usize;
            weight *= if up { *f } else { 1.0 - *f };
        }
        if weight == 0.0 {
            continue;
        }
        let node = spec.node_index(idx[0], idx[1], idx[2]);
        let best = allowed
            .iter()
            .map(|b| table.node_value(layer, node, s.a_prev, b))
            .fold(f64::NEG_INFINITY, f64::max);
        total += weight * best;
    }
    total
}

/// Multilinear interpolation over (h, v_O, v_I, τ); disallowed entries are `-inf`.
pub fn q_at(table: &QTable, s: &EncounterState) -> Result<[f64; NUM_ADVISORIES]> {
    let spec = table.spec();
    let in_axis = |c: &[f64], x: f64| x >= c[0] && x <= c[c.len() - 1];
    if !(in_axis(&spec.h_cuts, s.h)
        && in_axis(&spec.v_o_cuts, s.v_o)
        && in_axis(&spec.v_i_cuts, s.v_i)
        && s.tau >= 0.0
        && s.tau <= spec.tau_hi())
    {
        return Err(Error::OutOfBounds(format!("{s:?}")));
    }
    let layer_f = s.tau / spec.epsilon;
    let lt = (layer_f.floor() as usize).min(spec.tau_max - 1);
    let ft = layer_f - lt as f64;
    let (ih, fh) = locate(&spec.h_cuts, s.h);
    let (io, fo) = locate(&spec.v_o_cuts, s.v_o);
    let (ii, fi) = locate(&spec.v_i_cuts, s.v_i);

    let allowed = allowed_advisories(s.a_prev);
    let mut out = [f64::NEG_INFINITY; NUM_ADVISORIES];
    for a in allowed.iter() {
        out[a.index()] = 0.0;
    }
    for corner in 0..16usize {
        let bit = |k: usize| (corner >> k) & 1;
        let w = [(1.0 - fh, fh), (1.0 - fo, fo), (1.0 - fi, fi), (1.0 - ft, ft)]
            .iter()
            .enumerate()
            .map(|(k, (lo, hi))| if bit(k) == 1 { *hi } else { *lo })
            .product::<f64>();
        if w == 0.0 {
            continue;
        }
        let node = spec.node_index(ih + bit(0), io + bit(1), ii + bit(2));
        let row = table.node_row(lt + bit(3), node, s.a_prev);
        for a in allowed.iter() {
            out[a.index()] += w * row[a.index()];
        }
    }
    Ok(out)
}

/// Index of the largest allowed value; ties go to the earlier advisory.
pub fn masked_argmax(values: &[f64], allowed: AdvisorySet) -> Advisory {
    let mut best = Advisory::Coc;
    let mut best_v = f64::NEG_INFINITY;
    let mut found = false;
    for a in allowed.iter() {
        let v = values[a.index()];
        if !found || v > best_v {
            best = a;
            best_v = v;
            found = true;
        }
    }
    best
}

pub fn best_advisory(table: &QTable, s: &EncounterState) -> Result<Advisory> {
    let mut clamped = *s;
    clamped.tau = s.tau.max(TAU_CLAMP);
    let q = q_at(table, &clamped)?;
    Ok(masked_argmax(&q, allowed_advisories(s.a_prev)))
}

/// Advisory stored at a node (argmax over the raw node values).
pub fn node_advisory(table: &QTable, layer: usize, node: usize, a_prev: Advisory) -> Advisory {
    masked_argmax(table.node_row(layer, node, a_prev), allowed_advisories(a_prev))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceCell {
    pub tau: f64,
    pub h: f64,
    pub advisory: Advisory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub v_o: f64,
    pub v_i: f64,
    pub a_prev: Advisory,
    pub h_range: (f64, f64),
    pub tau_range: (f64, f64),
    /// Raster size (τ samples, h samples).
    pub resolution: (usize, usize),
}

fn samples(range: (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![range.0],
        _ => (0..n)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Raster of table advisories over (τ, h) for fixed rates.
pub fn export_policy_slice(table: &QTable, slice: &SliceSpec) -> Result<Vec<SliceCell>> {
    slice_with(slice, |s| best_advisory(table, s))
}

pub(crate) fn slice_with(
    slice: &SliceSpec,
    mut policy: impl FnMut(&EncounterState) -> Result<Advisory>,
) -> Result<Vec<SliceCell>> {
    let taus = samples(slice.tau_range, slice.resolution.0);
    let hs = samples(slice.h_range, slice.resolution.1);
    let mut cells = Vec::with_capacity(taus.len() * hs.len());
    for &tau in &taus {
        for &h in &hs {
            let s = EncounterState::new(h, slice.v_o, slice.v_i, slice.a_prev, tau);
            cells.push(SliceCell {
                tau,
                h,
                advisory: policy(&s)?,
            });
        }
    }
    Ok(cells)
}

pub fn slice_csv(cells: &[SliceCell]) -> String {
    let mut out = String::from("tau,h,advisory\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.tau, c.h, c.advisory));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::grid::uniform_cuts;

    fn small_grid() -> GridSpec {
        GridSpec {
            h_cuts: vec![-8000.0, -1000.0, -300.0, -100.0, 0.0, 100.0, 300.0, 1000.0, 8000.0],
            v_o_cuts: uniform_cuts(-100.0, 100.0, 5),
            v_i_cuts: uniform_cuts(-100.0, 100.0, 3),
            tau_max: 12,
            epsilon: 1.0,
        }
    }

    #[test]
    fn bellman_consistent_on_small_grid() {
        let model = ResponseModel::default();
        let table = solve(&small_grid(), &model).unwrap();
        let r = bellman_residual(&table, &model).unwrap();
        assert!(r <= 1e-9, "residual {r}");
    }

    #[test]
    fn disallowed_hold_sentinel() {
        let table = solve(&small_grid(), &ResponseModel::default()).unwrap();
        for layer in [0, 5] {
            let row = table.node_row(layer, 3, Advisory::Coc);
            assert_eq!(row[Advisory::Scl2500.index()], f64::NEG_INFINITY);
            assert!(row[Advisory::Cl1500.index()].is_finite());
        }
    }

    #[test]
    fn one_step_far_level_is_free() {
        let table = solve(&small_grid(), &ResponseModel::default()).unwrap();
        let node = table.spec().node_index(7, 2, 1); // h = 1000, level
        assert_eq!(table.node_value(1, node, Advisory::Coc, Advisory::Coc), 0.0);
    }

    #[test]
    fn nodes_reproduced_exactly() {
        let table = solve(&small_grid(), &ResponseModel::default()).unwrap();
        let s = table.node_state(7, 40, Advisory::Cl1500);
        let q = q_at(&table, &s).unwrap();
        assert_eq!(&q[..], table.node_row(7, 40, Advisory::Cl1500));
    }

    #[test]
    fn tie_breaks_to_lower_index() {
        let mut v = [0.0; 9];
        v[2] = 1.0;
        v[4] = 1.0;
        assert_eq!(masked_argmax(&v, AdvisorySet::FULL), Advisory::Dnd);
        v[8] = 5.0;
        assert_eq!(masked_argmax(&v, allowed_advisories(Advisory::Coc)), Advisory::Dnd);
    }

    #[test]
    fn out_of_box_rejected() {
        let table = solve(&small_grid(), &ResponseModel::default()).unwrap();
        let s = EncounterState::new(0.0, 0.0, 0.0, Advisory::Coc, 12.5);
        assert!(matches!(q_at(&table, &s), Err(Error::OutOfBounds(_))));
        let s = EncounterState::new(9000.0, 0.0, 0.0, Advisory::Coc, 3.0);
        assert!(q_at(&table, &s).is_err());
    }

    #[test]
    fn slice_csv_layout() {
        let cells = [SliceCell { tau: 1.0, h: -50.0, advisory: Advisory::Dnc }];
        assert_eq!(slice_csv(&cells), "tau,h,advisory\n1,-50,DNC\n");
    }
}
