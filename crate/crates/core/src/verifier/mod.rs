//! Exact decision procedure for "can the network select the target output
//! anywhere in a polytope of inputs".
//!
//! Branch-and-bound over ReLU phases. Each search node fixes some phases,
//! bounds the rest symbolically, and solves an LP in which undetermined ReLUs
//! are replaced by their triangle relaxation. A node is discarded when the
//! relaxation cannot reach the required margin; otherwise its LP optimum is
//! replayed through the network and, if it is not a genuine witness, the
//! widest undetermined ReLU is split. Every SAT answer carries a witness that
//! passed a concrete forward pass.

pub mod bounds;
pub mod lp;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ReluNetwork;
pub use bounds::{propagate_bounds, Interval};
use lp::{Lp, LpOutcome, Relation, FEAS_TOL};
pub use lp::{lp_feasible, solve as solve_lp};

/// Tolerance on the output margin when replaying a witness.
pub const MARGIN_TOL: f64 = 1e-6;
/// Relative tolerance on input constraints when replaying a witness.
pub const INPUT_TOL: f64 = 1e-9;
/// Seed of the sampling pre-check.
pub const SAMPLE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// `coeffs · x (≤ | ≥) rhs` over raw network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Cmp,
    pub rhs: f64,
}

impl LinearConstraint {
    /// Amount by which `x` violates the constraint (≤ 0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Cmp::Le => lhs - self.rhs,
            Cmp::Ge => self.rhs - lhs,
        }
    }

    fn scale(&self, x: &[f64]) -> f64 {
        1.0 + self.rhs.abs() + self.coeffs.iter().zip(x).map(|(a, v)| (a * v).abs()).sum::<f64>()
    }
}

/// Does some `x` in the box and halfplanes give
/// `out[target] - out[c] ≥ margin` for every competitor `c`?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuery {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    pub target: usize,
    pub competitors: Vec<usize>,
    #[serde(default)]
    pub margin: f64,
}

impl LinearQuery {
    pub fn validate(&self, net: &ReluNetwork) -> Result<()> {
        let d = net.input_dim();
        if self.lo.len() != d || self.hi.len() != d {
            return Err(Error::InvalidQuery(format!("box has {} dims, network takes {d}", self.lo.len())));
        }
        for j in 0..d {
            if !(self.lo[j] <= self.hi[j]) || !self.lo[j].is_finite() || !self.hi[j].is_finite() {
                return Err(Error::InvalidInterval { lo: self.lo[j], hi: self.hi[j] });
            }
        }
        for c in &self.constraints {
            if c.coeffs.len() != d || c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::InvalidQuery("malformed linear constraint".into()));
            }
        }
        let k = net.output_dim();
        if self.target >= k || self.competitors.iter().any(|&c| c >= k || c == self.target) {
            return Err(Error::InvalidQuery(format!(
                "target {} / competitors {:?} invalid for {k} outputs",
                self.target, self.competitors
            )));
        }
        if !self.margin.is_finite() {
            return Err(Error::InvalidQuery("margin must be finite".into()));
        }
        Ok(())
    }

    /// Smallest `out[target] - out[c]` over competitors at raw input `x`.
    pub fn output_margin(&self, net: &ReluNetwork, x: &[f64]) -> Result<f64> {
        let out = net.forward(x)?;
        Ok(self
            .competitors
            .iter()
            .map(|&c| out[self.target] - out[c])
            .fold(f64::INFINITY, f64::min))
    }

    fn inputs_ok(&self, x: &[f64]) -> bool {
        let in_box = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - INPUT_TOL * (1.0 + l.abs()) && *v <= h + INPUT_TOL * (1.0 + h.abs()));
        in_box && self.constraints.iter().all(|c| c.violation(x) <= INPUT_TOL * c.scale(x))
    }

    /// Clamp into the box, then pull onto violated halfplanes.
    fn project(&self, x: &mut [f64]) {
        let clamp = |x: &mut [f64]| {
            for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
                *v = v.clamp(*l, *h);
            }
        };
        clamp(x);
        for _ in 0..50 {
            let mut moved = false;
            for c in &self.constraints {
                let viol = c.violation(x);
                if viol > 0.0 {
                    let sign = if c.relation == Cmp::Le { 1.0 } else { -1.0 };
                    let norm2: f64 = c.coeffs.iter().map(|a| a * a).sum();
                    if norm2 > 0.0 {
                        for (v, a) in x.iter_mut().zip(&c.coeffs) {
                            *v -= sign * viol * a / norm2;
                        }
                        moved = true;
                    }
                }
            }
            clamp(x);
            if !moved {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "UNSAT")]
    Unsat,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes: usize,
    pub lp_calls: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub verdict: Verdict,
    pub witness: Option<Vec<f64>>,
    /// Output margin at the witness.
    pub witness_margin: Option<f64>,
    pub stats: SearchStats,
}

/// Concrete check that `witness` satisfies the query's input constraints and
/// output property.
pub fn replay_check(net: &ReluNetwork, q: &LinearQuery, witness: &[f64]) -> bool {
    if witness.len() != net.input_dim() || !q.inputs_ok(witness) {
        return false;
    }
    match q.output_margin(net, witness) {
        Ok(m) => m >= replay_threshold(q.margin),
        Err(_) => false,
    }
}

/// Tolerance never lets a strictly positive margin accept a tie.
fn replay_threshold(margin: f64) -> f64 {
    if margin > 0.0 {
        margin - MARGIN_TOL.min(0.5 * margin)
    } else {
        margin - MARGIN_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Free,
    Active,
    Inactive,
}

struct Node {
    phases: Vec<Phase>,
    parent: Option<std::rc::Rc<Vec<Interval>>>,
}

/// Affine form over LP variables.
#[derive(Clone)]
struct Expr {
    coef: Vec<f64>,
    c: f64,
}

impl Expr {
    fn zero(n: usize) -> Expr {
        Expr { coef: vec![0.0; n], c: 0.0 }
    }

    fn bound(&self, lo: &[f64], hi: &[f64], nv: usize) -> Interval {
        let (mut l, mut h) = (self.c, self.c);
        for j in 0..nv {
            let a = self.coef[j];
            if a > 0.0 {
                l += a * lo[j];
                h += a * hi[j];
            } else if a < 0.0 {
                l += a * hi[j];
                h += a * lo[j];
            }
        }
        Interval::new(l, h)
    }
}

enum NodeOutcome {
    Pruned,
    Witness(Vec<f64>, f64),
    Split(usize, std::rc::Rc<Vec<Interval>>),
}

/// The query in the network's normalized input coordinates.
struct Problem<'a> {
    net: &'a ReluNetwork,
    q: &'a LinearQuery,
    zlo: Vec<f64>,
    zhi: Vec<f64>,
    rows: Vec<(Vec<f64>, Cmp, f64)>,
    margin: f64,
    n_in: usize,
    n_hidden: usize,
}

impl<'a> Problem<'a> {
    fn new(net: &'a ReluNetwork, q: &'a LinearQuery) -> Problem<'a> {
        let n_in = net.input_dim();
        let (m, r) = (&net.input_mean, &net.input_range);
        let zlo = (0..n_in).map(|j| (q.lo[j] - m[j]) / r[j]).collect();
        let zhi = (0..n_in).map(|j| (q.hi[j] - m[j]) / r[j]).collect();
        let rows = q
            .constraints
            .iter()
            .map(|c| {
                let a: Vec<f64> = (0..n_in).map(|j| c.coeffs[j] * r[j]).collect();
                let shift: f64 = (0..n_in).map(|j| c.coeffs[j] * m[j]).sum();
                (a, c.relation, c.rhs - shift)
            })
            .collect();
        Problem {
            net,
            q,
            zlo,
            zhi,
            rows,
            margin: q.margin / net.output_range,
            n_in,
            n_hidden: net.num_relus(),
        }
    }

    fn to_raw(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.net.input_mean.iter().zip(&self.net.input_range))
            .map(|(v, (m, r))| m + r * v)
            .collect()
    }

    /// Replay a normalized candidate; returns the projected raw witness if genuine.
    fn try_candidate(&self, z: &[f64]) -> Option<(Vec<f64>, f64)> {
        let mut x = self.to_raw(z);
        self.q.project(&mut x);
        if replay_check(self.net, self.q, &x) {
            let m = self.q.output_margin(self.net, &x).ok()?;
            return Some((x, m));
        }
        None
    }

    fn sample_precheck(&self) -> Option<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        let center: Vec<f64> = self.q.lo.iter().zip(&self.q.hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for k in 0..32 {
            let mut x = if k == 0 {
                center.clone()
            } else {
                self.q.lo.iter().zip(&self.q.hi).map(|(l, h)| if l < h { rng.gen_range(*l..=*h) } else { *l }).collect()
            };
            self.q.project(&mut x);
            if !self.q.inputs_ok(&x) {
                continue;
            }
            let Ok(m) = self.q.output_margin(self.net, &x) else { continue };
            if best.as_ref().is_none_or(|b| m > b.1) {
                best = Some((x, m));
            }
        }
        best.filter(|(x, _)| replay_check(self.net, self.q, x))
    }

    fn evaluate(&self, node: &Node, stats: &mut SearchStats) -> Result<NodeOutcome> {
        let cap = self.n_in + self.n_hidden;
        let mut vlo = vec![0.0; cap];
        let mut vhi = vec![0.0; cap];
        vlo[..self.n_in].copy_from_slice(&self.zlo);
        vhi[..self.n_in].copy_from_slice(&self.zhi);
        let mut nv = self.n_in;
        let mut post: Vec<Option<Expr>> = (0..self.n_in)
            .map(|j| {
                let mut e = Expr::zero(cap);
                e.coef[j] = 1.0;
                Some(e)
            })
            .collect();
        let mut rows: Vec<(Expr, Cmp)> = Vec::new();
        let mut tri: Vec<(usize, Expr, f64, f64)> = Vec::new();
        let mut intervals = Vec::with_capacity(self.n_hidden);
        let mut free = Vec::new();
        let last = self.net.layers.len() - 1;
        let mut idx = 0;
        for layer in &self.net.layers[..last] {
            let mut next = Vec::with_capacity(layer.rows);
            for r in 0..layer.rows {
                let mut e = Expr::zero(cap);
                e.c = layer.bias[r];
                for (w, p) in layer.row(r).iter().zip(&post) {
                    if let (Some(p), true) = (p, *w != 0.0) {
                        for j in 0..nv {
                            e.coef[j] += w * p.coef[j];
                        }
                        e.c += w * p.c;
                    }
                }
                // rows are added whenever the expression's own bound does not
                // already imply the phase, so the LP point respects it
                let own = e.bound(&vlo, &vhi, nv);
                let mut iv = match &node.parent {
                    Some(parent) => own.intersect(&parent[idx]),
                    None => own,
                };
                let phase = match node.phases[idx] {
                    Phase::Free if iv.lo >= 0.0 => Phase::Active,
                    Phase::Free if iv.hi <= 0.0 => Phase::Inactive,
                    p => p,
                };
                let out = match phase {
                    Phase::Active => {
                        if iv.hi < -FEAS_TOL {
                            return Ok(NodeOutcome::Pruned);
                        }
                        if own.lo < 0.0 {
                            rows.push((e.clone(), Cmp::Ge));
                        }
                        iv.lo = iv.lo.max(0.0);
                        Some(e)
                    }
                    Phase::Inactive => {
                        if iv.lo > FEAS_TOL {
                            return Ok(NodeOutcome::Pruned);
                        }
                        if own.hi > 0.0 {
                            rows.push((e.clone(), Cmp::Le));
                        }
                        iv.hi = iv.hi.min(0.0);
                        None
                    }
                    Phase::Free => {
                        let v = nv;
                        nv += 1;
                        vlo[v] = 0.0;
                        vhi[v] = iv.hi;
                        tri.push((v, e, iv.lo, iv.hi));
                        free.push((idx, iv.width()));
                        let mut y = Expr::zero(cap);
                        y.coef[v] = 1.0;
                        Some(y)
                    }
                };
                intervals.push(iv);
                next.push(out);
                idx += 1;
            }
            post = next;
        }

        // output differences target - competitor
        let out_layer = &self.net.layers[last];
        let out_expr = |k: usize| {
            let mut e = Expr::zero(cap);
            e.c = out_layer.bias[k];
            for (w, p) in out_layer.row(k).iter().zip(&post) {
                if let Some(p) = p {
                    for j in 0..nv {
                        e.coef[j] += w * p.coef[j];
                    }
                    e.c += w * p.c;
                }
            }
            e
        };
        let target = out_expr(self.q.target);
        let mut diffs = Vec::with_capacity(self.q.competitors.len());
        let (mut s_lo, mut s_hi) = (f64::INFINITY, f64::INFINITY);
        for &c in &self.q.competitors {
            let oc = out_expr(c);
            let mut d = target.clone();
            for j in 0..nv {
                d.coef[j] -= oc.coef[j];
            }
            d.c -= oc.c;
            let b = d.bound(&vlo, &vhi, nv);
            if b.hi < self.margin - FEAS_TOL {
                return Ok(NodeOutcome::Pruned);
            }
            s_lo = s_lo.min(b.lo);
            s_hi = s_hi.min(b.hi);
            diffs.push(d);
        }

        // LP over inputs, free ReLU outputs, and the margin variable s
        let n = nv + 1;
        let s = nv;
        let mut prog = Lp::new(n);
        prog.lower[..nv].copy_from_slice(&vlo[..nv]);
        prog.upper[..nv].copy_from_slice(&vhi[..nv]);
        prog.lower[s] = if s_lo.is_finite() { s_lo - 1.0 } else { -1e9 };
        prog.upper[s] = if s_hi.is_finite() { s_hi } else { 1e9 };
        for (a, rel, rhs) in &self.rows {
            let mut coeffs = vec![0.0; n];
            coeffs[..self.n_in].copy_from_slice(a);
            prog.push(coeffs, cmp_rel(*rel), *rhs);
        }
        for (e, rel) in &rows {
            prog.push(e.coef[..nv].iter().copied().chain([0.0]).collect(), cmp_rel(*rel), -e.c);
        }
        for (v, e, l, u) in &tri {
            // y ≥ pre
            let mut lower: Vec<f64> = e.coef[..nv].iter().map(|a| -a).chain([0.0]).collect();
            lower[*v] += 1.0;
            prog.push(lower, Relation::Ge, e.c);
            // y ≤ u (pre - l) / (u - l)
            let lam = u / (u - l);
            let mut upper: Vec<f64> = e.coef[..nv].iter().map(|a| -lam * a).chain([0.0]).collect();
            upper[*v] += 1.0;
            prog.push(upper, Relation::Le, lam * (e.c - l));
        }
        for d in &diffs {
            let mut coeffs: Vec<f64> = d.coef[..nv].iter().map(|a| -a).collect();
            coeffs.push(1.0);
            prog.push(coeffs, Relation::Le, d.c);
        }
        prog.objective = vec![0.0; n];
        prog.objective[s] = 1.0;
        stats.lp_calls += 1;
        let widest = free
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, (i, w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((i, w)),
            });
        let split = |why: String| match widest {
            Some((i, _)) => Ok(NodeOutcome::Split(i, std::rc::Rc::new(intervals.clone()))),
            None => Err(Error::NumericalInconclusive(why)),
        };
        let (x, value) = match lp::solve(&prog) {
            Ok(LpOutcome::Optimal { x, value }) => (x, value),
            Ok(LpOutcome::Infeasible) => return Ok(NodeOutcome::Pruned),
            // a failed relaxation is retried on the smaller children
            Ok(LpOutcome::Unbounded) => return split("margin LP reported unbounded".into()),
            Err(e) => return split(e.to_string()),
        };
        if value < self.margin - FEAS_TOL {
            return Ok(NodeOutcome::Pruned);
        }
        if let Some((w, m)) = self.try_candidate(&x[..self.n_in]) {
            return Ok(NodeOutcome::Witness(w, m));
        }
        split(format!("all phases fixed and LP margin {value:e} reachable, but replay failed"))
    }
}

fn cmp_rel(c: Cmp) -> Relation {
    match c {
        Cmp::Le => Relation::Le,
        Cmp::Ge => Relation::Ge,
    }
}

/// Decide the query; SAT results always carry a replay-verified witness.
pub fn decide(net: &ReluNetwork, q: &LinearQuery) -> Result<VerifyResult> {
    let start = Instant::now();
    net.validate()?;
    q.validate(net)?;
    let prob = Problem::new(net, q);
    let mut stats = SearchStats::default();
    let finish = |verdict, witness: Option<(Vec<f64>, f64)>, mut stats: SearchStats| {
        stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let (witness, witness_margin) = match witness {
            Some((w, m)) => (Some(w), Some(m)),
            None => (None, None),
        };
        VerifyResult { verdict, witness, witness_margin, stats }
    };
    if let Some(w) = prob.sample_precheck() {
        return Ok(finish(Verdict::Sat, Some(w), stats));
    }
    let mut stack = vec![Node {
        phases: vec![Phase::Free; prob.n_hidden],
        parent: None,
    }];
    while let Some(node) = stack.pop() {
        stats.nodes += 1;
        match prob.evaluate(&node, &mut stats)? {
            NodeOutcome::Pruned => {}
            NodeOutcome::Witness(w, m) => {
                debug_assert!(replay_check(net, q, &w));
                return Ok(finish(Verdict::Sat, Some((w, m)), stats));
            }
            NodeOutcome::Split(i, bounds) => {
                let mut inactive = node.phases.clone();
                inactive[i] = Phase::Inactive;
                let mut active = node.phases;
                active[i] = Phase::Active;
                // depth-first, active child explored first
                stack.push(Node { phases: inactive, parent: Some(bounds.clone()) });
                stack.push(Node { phases: active, parent: Some(bounds) });
            }
        }
    }
    Ok(finish(Verdict::Unsat, None, stats))
}
