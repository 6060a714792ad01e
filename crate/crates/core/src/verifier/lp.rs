//! Dense bounded-variable primal simplex with Bland's rule.
//!
//! Rows are `Σ a_j x_j (≤ | ≥ | =) b` and every variable carries bounds
//! `lower ≤ x ≤ upper` (either side may be infinite). Phase 1 minimizes the
//! sum of artificial variables; phase 2 maximizes the objective.

use crate::error::{Error, Result};

/// Tolerance on constraint residuals and bound violations.
pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const OPT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Maximized. Empty means a pure feasibility problem.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl Lp {
    pub fn new(num_vars: usize) -> Lp {
        Lp {
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            rows: Vec::new(),
            objective: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(LpRow { coeffs, relation, rhs });
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let d = lhs - r.rhs;
            worst = worst.max(match r.relation {
                Relation::Le => d,
                Relation::Ge => -d,
                Relation::Eq => d.abs(),
            });
        }
        worst
    }
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `m × ncols`, the current `B⁻¹ [A | I | art]`.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    val: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.ncols;
        let p = self.t[r * n + j];
        for k in 0..n {
            self.t[r * n + k] /= p;
        }
        self.t[r * n + j] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * n);
        let (row_r, after) = rest.split_at_mut(n);
        for row in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let f = row[j];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(row_r.iter()) {
                    *x -= f * y;
                }
                row[j] = 0.0;
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Maximize `cost · val`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64]) -> Result<bool> {
        let mut reduced = vec![0.0; self.ncols];
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::CyclingGuard(self.iterations));
            }
            reduced.copy_from_slice(cost);
            for i in 0..self.m {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                    for (d, a) in reduced.iter_mut().zip(row) {
                        *d -= cb * a;
                    }
                }
            }
            // Bland: lowest-index improving column
            let mut entering = None;
            for j in 0..self.ncols {
                if self.is_basic[j] || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = reduced[j];
                let can_up = self.val[j] < self.upper[j];
                let can_down = self.val[j] > self.lower[j];
                if d > OPT_TOL && can_up {
                    entering = Some((j, 1.0));
                    break;
                }
                if d < -OPT_TOL && can_down {
                    entering = Some((j, -1.0));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(true);
            };

            let mut theta = self.upper[j] - self.lower[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let delta = -self.at(i, j) * dir;
                let b = self.basis[i];
                let limit = if delta < -PIVOT_TOL {
                    (self.val[b] - self.lower[b]) / -delta
                } else if delta > PIVOT_TOL {
                    (self.upper[b] - self.val[b]) / delta
                } else {
                    continue;
                };
                if !limit.is_finite() {
                    continue;
                }
                let limit = limit.max(0.0);
                // ties between rows go to the lowest variable index; a tie with
                // the bound flip keeps the flip
                let better = match leave {
                    None => limit < theta,
                    Some((r, _)) => limit < theta || (limit == theta && b < self.basis[r]),
                };
                if better {
                    theta = limit;
                    leave = Some((i, delta));
                }
            }
            if !theta.is_finite() {
                return Ok(false);
            }
            self.val[j] += dir * theta;
            for i in 0..self.m {
                let delta = -self.at(i, j) * dir;
                if delta != 0.0 {
                    self.val[self.basis[i]] += delta * theta;
                }
            }
            match leave {
                None => {
                    // bound flip
                    self.val[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((r, delta)) => {
                    let b = self.basis[r];
                    self.val[b] = if delta < 0.0 { self.lower[b] } else { self.upper[b] };
                    self.pivot(r, j);
                }
            }
        }
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

pub fn solve(lp: &Lp) -> Result<LpOutcome> {
    let n = lp.num_vars();
    let m = lp.rows.len();
    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + FEAS_TOL || lp.lower[j].is_nan() || lp.upper[j].is_nan() {
            return Ok(LpOutcome::Infeasible);
        }
    }
    let x0: Vec<f64> = (0..n)
        .map(|j| initial_value(lp.lower[j], lp.upper[j].max(lp.lower[j])))
        .collect();

    // columns: structural | slack per row | artificial per row needing one
    let mut art_rows = Vec::new();
    let mut art_sign = Vec::new();
    let mut slack_val = vec![0.0; m];
    let mut slack_basic = vec![true; m];
    for (i, r) in lp.rows.iter().enumerate() {
        let lhs: f64 = r.coeffs.iter().zip(&x0).map(|(a, v)| a * v).sum();
        let resid = r.rhs - lhs;
        let ok = match r.relation {
            Relation::Le => resid >= 0.0,
            Relation::Ge => resid <= 0.0,
            Relation::Eq => resid == 0.0,
        };
        if ok {
            slack_val[i] = resid;
        } else {
            slack_basic[i] = false;
            art_rows.push(i);
            art_sign.push(resid.signum());
        }
    }
    let na = art_rows.len();
    let ncols = n + m + na;
    let mut t = vec![0.0; m * ncols];
    let mut lower = lp.lower.clone();
    let mut upper: Vec<f64> = lp.upper.iter().zip(&lp.lower).map(|(u, l)| u.max(*l)).collect();
    for r in &lp.rows {
        let (lo, hi) = match r.relation {
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (0.0, 0.0),
        };
        lower.push(lo);
        upper.push(hi);
    }
    lower.extend(std::iter::repeat_n(0.0, na));
    upper.extend(std::iter::repeat_n(f64::INFINITY, na));
    let mut val = x0.clone();
    val.extend_from_slice(&slack_val);
    val.extend(std::iter::repeat_n(0.0, na));
    let mut basis = vec![0; m];
    let mut is_basic = vec![false; ncols];

    let mut art_of_row = vec![usize::MAX; m];
    for (k, &i) in art_rows.iter().enumerate() {
        art_of_row[i] = k;
    }
    for (i, r) in lp.rows.iter().enumerate() {
        let row = &mut t[i * ncols..(i + 1) * ncols];
        row[..n].copy_from_slice(&r.coeffs);
        row[n + i] = 1.0;
        if slack_basic[i] {
            basis[i] = n + i;
        } else {
            let k = art_of_row[i];
            let s = art_sign[k];
            row[n + m + k] = s;
            // scale so the artificial has unit coefficient
            for v in row.iter_mut() {
                *v *= s;
            }
            let lhs: f64 = r.coeffs.iter().zip(&x0).map(|(a, v)| a * v).sum();
            val[n + m + k] = (r.rhs - lhs) * s;
            basis[i] = n + m + k;
        }
        is_basic[basis[i]] = true;
    }

    let mut tab = Tableau {
        m,
        ncols,
        t,
        lower,
        upper,
        val,
        basis,
        is_basic,
        iterations: 0,
        max_iterations: 100 * (m + ncols) + 10_000,
    };

    let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    if na > 0 {
        let mut cost = vec![0.0; ncols];
        for c in cost.iter_mut().skip(n + m) {
            *c = -1.0;
        }
        tab.optimize(&cost)?;
        let infeas: f64 = tab.val[n + m..].iter().sum();
        if infeas > FEAS_TOL * scale {
            return Ok(LpOutcome::Infeasible);
        }
        for k in 0..na {
            tab.upper[n + m + k] = 0.0;
            tab.val[n + m + k] = 0.0;
        }
    }
    let mut cost = vec![0.0; ncols];
    cost[..lp.objective.len()].copy_from_slice(&lp.objective);
    if !tab.optimize(&cost)? {
        return Ok(LpOutcome::Unbounded);
    }
    let x: Vec<f64> = (0..n)
        .map(|j| tab.val[j].clamp(lp.lower[j], lp.upper[j].max(lp.lower[j])))
        .collect();
    if lp.max_violation(&x) > 1e-7 * scale {
        return Err(Error::NumericalInconclusive(format!(
            "simplex point violates constraints by {:e}",
            lp.max_violation(&x)
        )));
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, value })
}

/// A point satisfying every row and bound, or `None` if there is none.
pub fn lp_feasible(lp: &Lp) -> Result<Option<Vec<f64>>> {
    let mut plain = lp.clone();
    plain.objective.clear();
    Ok(match solve(&plain)? {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interval_feasibility() {
        let mut lp = Lp::new(1);
        lp.push(vec![1.0], Relation::Ge, 1.0);
        lp.push(vec![1.0], Relation::Le, 2.0);
        let x = lp_feasible(&lp).unwrap().unwrap();
        assert!(x[0] >= 1.0 - 1e-12 && x[0] <= 2.0 + 1e-12);

        let mut bad = Lp::new(1);
        bad.push(vec![1.0], Relation::Ge, 1.0);
        bad.push(vec![1.0], Relation::Le, 0.0);
        assert_eq!(lp_feasible(&bad).unwrap(), None);
    }

    #[test]
    fn small_optimum() {
        // max x + y  s.t. x + 2y ≤ 4, 3x + y ≤ 6, x,y ≥ 0  →  (1.6, 1.2)
        let mut lp = Lp::new(2);
        lp.lower = vec![0.0, 0.0];
        lp.push(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.push(vec![3.0, 1.0], Relation::Le, 6.0);
        lp.objective = vec![1.0, 1.0];
        match solve(&lp).unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
                assert!((value - 2.8).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equalities_and_free_variables() {
        // min x (max -x) with x free, x = y - 3, y ∈ [1, 5]  →  x = -2
        let mut lp = Lp::new(2);
        lp.lower[1] = 1.0;
        lp.upper[1] = 5.0;
        lp.push(vec![1.0, -1.0], Relation::Eq, -3.0);
        lp.objective = vec![-1.0, 0.0];
        match solve(&lp).unwrap() {
            LpOutcome::Optimal { x, .. } => assert!((x[0] + 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = Lp::new(1);
        lp.lower[0] = 0.0;
        lp.objective = vec![1.0];
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // several constraints through the optimum vertex
        let mut lp = Lp::new(2);
        lp.lower = vec![0.0, 0.0];
        for k in 1..=8 {
            let a = k as f64;
            lp.push(vec![a, 1.0], Relation::Le, a + 1.0);
        }
        lp.objective = vec![1.0, 1.0];
        match solve(&lp).unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_polytopes_around_interior_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let n = rng.gen_range(1..8);
            let m = rng.gen_range(1..16);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut lp = Lp::new(n);
            for j in 0..n {
                if rng.gen_bool(0.7) {
                    lp.lower[j] = p[j] - rng.gen_range(0.0..3.0);
                }
                if rng.gen_bool(0.7) {
                    lp.upper[j] = p[j] + rng.gen_range(0.0..3.0);
                }
            }
            for _ in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let ap: f64 = a.iter().zip(&p).map(|(x, y)| x * y).sum();
                let (rel, rhs) = match rng.gen_range(0..3) {
                    0 => (Relation::Le, ap + rng.gen_range(0.0..1.0)),
                    1 => (Relation::Ge, ap - rng.gen_range(0.0..1.0)),
                    _ => (Relation::Eq, ap),
                };
                lp.push(a, rel, rhs);
            }
            let x = lp_feasible(&lp).unwrap().expect("constructed feasible");
            assert!(lp.max_violation(&x) <= 1e-9, "violation {}", lp.max_violation(&x));
            // and a random objective stays bounded by the box when present
            lp.objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = solve(&lp).unwrap();
            if let LpOutcome::Optimal { x, value } = out {
                let at_p: f64 = lp.objective.iter().zip(&p).map(|(c, v)| c * v).sum();
                assert!(value >= at_p - 1e-9);
                assert!(lp.max_violation(&x) <= 1e-9);
            }
        }
    }
}
