//! Piecewise quadratic and piecewise linear functions of τ.

use serde::{Deserialize, Serialize};

/// `h(τ) = a τ² + b τ + c` on `[t0, t1]`. `t1` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub t0: f64,
    pub t1: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quad {
    pub fn constant(t0: f64, t1: f64, c: f64) -> Quad {
        Quad { t0, t1, a: 0.0, b: 0.0, c }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.a * t + self.b) * t + self.c
    }

    #[inline]
    pub fn slope(&self, t: f64) -> f64 {
        2.0 * self.a * t + self.b
    }

    pub fn is_linear(&self) -> bool {
        self.a == 0.0
    }

    fn on(&self, t0: f64, t1: f64) -> Quad {
        Quad { t0, t1, ..*self }
    }

    fn negated(&self) -> Quad {
        Quad {
            a: -self.a,
            b: -self.b,
            c: -self.c,
            ..*self
        }
    }

    /// Split at the vertex if it lies strictly inside, yielding monotone parts.
    fn monotone_parts(&self) -> Vec<Quad> {
        if self.a != 0.0 {
            let v = -self.b / (2.0 * self.a);
            if v > self.t0 && v < self.t1 {
                return vec![self.on(self.t0, v), self.on(v, self.t1)];
            }
        }
        vec![*self]
    }
}

/// Root of a monotone continuous function on [lo, hi] where `f(lo)` and `f(hi)` bracket 0.
pub(crate) fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Contiguous sorted quadratic pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuadratic {
    pub pieces: Vec<Quad>,
}

impl PiecewiseQuadratic {
    pub fn new(pieces: Vec<Quad>) -> Self {
        debug_assert!(pieces.windows(2).all(|w| w[0].t1 == w[1].t0));
        PiecewiseQuadratic { pieces }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].t0, self.pieces[self.pieces.len() - 1].t1)
    }

    fn piece_at(&self, t: f64) -> &Quad {
        let i = self.pieces.partition_point(|p| p.t1 < t);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.piece_at(t).eval(t)
    }

    pub fn slope(&self, t: f64) -> f64 {
        self.piece_at(t).slope(t)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pieces.iter().map(|p| p.t0).collect();
        v.push(self.domain().1);
        v
    }

    pub fn shifted(&self, dh: f64) -> Self {
        PiecewiseQuadratic::new(
            self.pieces
                .iter()
                .map(|p| Quad { c: p.c + dh, ..*p })
                .collect(),
        )
    }

    fn negated(&self) -> Self {
        PiecewiseQuadratic::new(self.pieces.iter().map(Quad::negated).collect())
    }

    /// Restriction to `[t0, t1]`, which must overlap the domain.
    pub fn restricted(&self, t0: f64, t1: f64) -> Self {
        let pieces: Vec<Quad> = self
            .pieces
            .iter()
            .filter(|p| p.t1 > t0 && p.t0 < t1)
            .map(|p| p.on(p.t0.max(t0), p.t1.min(t1)))
            .collect();
        PiecewiseQuadratic::new(pieces)
    }

    /// Merge neighbours with identical coefficients.
    fn simplified(mut self) -> Self {
        let mut out: Vec<Quad> = Vec::with_capacity(self.pieces.len());
        for p in self.pieces.drain(..) {
            if p.t1 <= p.t0 {
                continue;
            }
            if let Some(last) = out.last_mut() {
                if last.a == p.a && last.b == p.b && last.c == p.c {
                    last.t1 = p.t1;
                    continue;
                }
            }
            out.push(p);
        }
        PiecewiseQuadratic::new(out)
    }

    /// `g(τ) = min_{t ≥ τ} f(t)` over the domain.
    ///
    /// Panics if the function is unbounded below on an infinite last piece.
    pub fn running_min_right(&self) -> Self {
        let mut parts: Vec<Quad> = self.pieces.iter().flat_map(Quad::monotone_parts).collect();
        let last = parts.len() - 1;
        let mut out: Vec<Quad> = Vec::new();
        let mut m = f64::INFINITY;
        if parts[last].t1.is_infinite() {
            let p = parts[last];
            assert!(
                p.a > 0.0 || (p.a == 0.0 && p.b >= 0.0),
                "running minimum over an unbounded decreasing tail"
            );
        }
        for p in parts.drain(..).rev() {
            let (fp, fq) = (p.eval(p.t0), if p.t1.is_infinite() { f64::INFINITY } else { p.eval(p.t1) });
            let increasing = if p.t1.is_infinite() { true } else { fp <= fq };
            if increasing {
                if fq <= m {
                    out.push(p);
                } else if fp >= m {
                    out.push(Quad::constant(p.t0, p.t1, m));
                } else {
                    let c = if p.t1.is_infinite() {
                        // increasing linear/convex tail: find where it reaches m
                        let mut hi = p.t0 + 1.0;
                        while p.eval(hi) < m {
                            hi = p.t0 + 2.0 * (hi - p.t0);
                        }
                        bisect(p.t0, hi, |t| p.eval(t) - m)
                    } else {
                        bisect(p.t0, p.t1, |t| p.eval(t) - m)
                    };
                    out.push(Quad::constant(c, p.t1, m));
                    out.push(p.on(p.t0, c));
                }
                m = m.min(fp);
            } else {
                m = m.min(fq);
                out.push(Quad::constant(p.t0, p.t1, m));
            }
        }
        out.reverse();
        PiecewiseQuadratic::new(out).simplified()
    }

    /// `g(τ) = max_{t ≥ τ} f(t)`.
    pub fn running_max_right(&self) -> Self {
        self.negated().running_min_right().negated()
    }

    fn combine(&self, other: &Self, take_max: bool) -> Self {
        let (a0, a1) = self.domain();
        let (b0, b1) = other.domain();
        let (lo, hi) = (a0.max(b0), a1.min(b1));
        let mut cuts: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .chain(other.breakpoints())
            .filter(|t| *t >= lo && *t <= hi)
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 <= s0 {
                continue;
            }
            let probe = if s1.is_infinite() { s0 + 1.0 } else { 0.5 * (s0 + s1) };
            let f = *self.piece_at(probe);
            let g = *other.piece_at(probe);
            let (da, db, dc) = (f.a - g.a, f.b - g.b, f.c - g.c);
            let mut splits = vec![s0];
            for r in quadratic_roots(da, db, dc) {
                if r > s0 && r < s1 {
                    splits.push(r);
                }
            }
            splits.push(s1);
            splits.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for v in splits.windows(2) {
                let mid = if v[1].is_infinite() { v[0] + 1.0 } else { 0.5 * (v[0] + v[1]) };
                let f_wins = (f.eval(mid) >= g.eval(mid)) == take_max;
                let src = if f_wins { f } else { g };
                out.push(src.on(v[0], v[1]));
            }
        }
        PiecewiseQuadratic::new(out).simplified()
    }

    pub fn pointwise_max(&self, other: &Self) -> Self {
        self.combine(other, true)
    }

    pub fn pointwise_min(&self, other: &Self) -> Self {
        self.combine(other, false)
    }
}

/// Real roots of `a x² + b x + c`, ascending. Degenerate equations return none.
pub(crate) fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-14 * scale {
        if b == 0.0 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    let mut r = if q == 0.0 {
        vec![0.0]
    } else {
        vec![q / a, c / q]
    };
    r.sort_by(|x, y| x.partial_cmp(y).unwrap());
    r
}

/// `h(τ) = slope τ + intercept` on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lin {
    pub t0: f64,
    pub t1: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Lin {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }

    fn on(&self, t0: f64, t1: f64) -> Lin {
        Lin { t0, t1, ..*self }
    }
}

/// Contiguous sorted linear pieces; values may jump at joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub pieces: Vec<Lin>,
}

impl PiecewiseLinear {
    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].t0, self.pieces[self.pieces.len() - 1].t1)
    }

    /// Piece containing `t`; at a joint the right-hand piece.
    pub fn piece_at(&self, t: f64) -> &Lin {
        let i = self.pieces.partition_point(|p| p.t1 <= t);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.piece_at(t).eval(t)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pieces.iter().map(|p| p.t0).collect();
        v.push(self.domain().1);
        v
    }

    pub fn restricted(&self, t0: f64, t1: f64) -> Self {
        PiecewiseLinear {
            pieces: self
                .pieces
                .iter()
                .filter(|p| p.t1 > t0 && p.t0 < t1)
                .map(|p| p.on(p.t0.max(t0), p.t1.min(t1)))
                .collect(),
        }
    }

    fn combine(&self, other: &Self, take_max: bool) -> Self {
        let (a0, a1) = self.domain();
        let (b0, b1) = other.domain();
        let (lo, hi) = (a0.max(b0), a1.min(b1));
        let mut cuts: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .chain(other.breakpoints())
            .filter(|t| *t >= lo && *t <= hi)
            .collect();
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let mid = 0.5 * (s0 + s1);
            let f = *self.piece_at(mid);
            let g = *other.piece_at(mid);
            let ds = f.slope - g.slope;
            let mut splits = vec![s0];
            if ds != 0.0 {
                let r = (g.intercept - f.intercept) / ds;
                if r > s0 && r < s1 {
                    splits.push(r);
                }
            }
            splits.push(s1);
            for v in splits.windows(2) {
                let m = 0.5 * (v[0] + v[1]);
                let f_wins = (f.eval(m) >= g.eval(m)) == take_max;
                out.push(if f_wins { f } else { g }.on(v[0], v[1]));
            }
        }
        PiecewiseLinear { pieces: out }
    }

    pub fn pointwise_max(&self, other: &Self) -> Self {
        self.combine(other, true)
    }

    pub fn pointwise_min(&self, other: &Self) -> Self {
        self.combine(other, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled_running_min(f: &PiecewiseQuadratic, tau: f64, t_end: f64) -> f64 {
        let n = 20000;
        let joints = f.breakpoints().into_iter().filter(|t| *t >= tau && t.is_finite());
        (0..=n)
            .map(|i| tau + (t_end - tau) * i as f64 / n as f64)
            .chain(joints)
            .map(|t| f.eval(t))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn running_min_of_dipping_parabola() {
        // h = t² - 4t on [0, 3], then linear rising from h(3) = -3 with slope 2
        let f = PiecewiseQuadratic::new(vec![
            Quad { t0: 0.0, t1: 3.0, a: 1.0, b: -4.0, c: 0.0 },
            Quad { t0: 3.0, t1: f64::INFINITY, a: 0.0, b: 2.0, c: -9.0 },
        ]);
        let g = f.running_min_right();
        for tau in [0.0, 1.0, 1.9, 2.0, 2.5, 3.0, 4.0, 10.0] {
            let expect = sampled_running_min(&f, tau, tau + 40.0);
            assert!((g.eval(tau) - expect).abs() < 1e-6, "tau {tau}: {} vs {expect}", g.eval(tau));
        }
        assert!((g.eval(0.5) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn running_max_of_overshoot() {
        // rises to a peak then descends linearly
        let f = PiecewiseQuadratic::new(vec![
            Quad { t0: 0.0, t1: 4.0, a: -1.0, b: 4.0, c: 1.0 },
            Quad { t0: 4.0, t1: f64::INFINITY, a: 0.0, b: -4.0, c: 17.0 },
        ]);
        let g = f.running_max_right();
        assert!((g.eval(0.0) - 5.0).abs() < 1e-12);
        assert!((g.eval(2.0) - 5.0).abs() < 1e-12);
        assert!((g.eval(3.0) - 4.0).abs() < 1e-12);
        assert!((g.eval(6.0) - (-7.0)).abs() < 1e-12);
    }

    #[test]
    fn running_min_with_crossing() {
        // rising parabola later undercut by nothing, but earlier piece dips below later min
        let f = PiecewiseQuadratic::new(vec![
            Quad { t0: 0.0, t1: 2.0, a: 0.0, b: 1.0, c: 0.0 },
            Quad { t0: 2.0, t1: 3.0, a: 0.0, b: -2.0, c: 6.0 },
            Quad { t0: 3.0, t1: f64::INFINITY, a: 0.0, b: 1.0, c: -3.0 },
        ]);
        let g = f.running_min_right();
        for tau in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 5.0] {
            let expect = sampled_running_min(&f, tau, tau + 30.0);
            assert!((g.eval(tau) - expect).abs() < 1e-6, "tau {tau}");
        }
    }

    #[test]
    fn pointwise_extremes() {
        let f = PiecewiseQuadratic::new(vec![Quad { t0: 0.0, t1: 4.0, a: 1.0, b: -4.0, c: 3.0 }]);
        let g = PiecewiseQuadratic::new(vec![Quad::constant(0.0, 4.0, 0.0)]);
        let hi = f.pointwise_max(&g);
        let lo = f.pointwise_min(&g);
        for i in 0..=40 {
            let t = i as f64 * 0.1;
            assert!((hi.eval(t) - f.eval(t).max(0.0)).abs() < 1e-12);
            assert!((lo.eval(t) - f.eval(t).min(0.0)).abs() < 1e-12);
        }
        assert_eq!(lo.pieces.len(), 3);
    }

    #[test]
    fn roots() {
        assert_eq!(quadratic_roots(1.0, -3.0, 2.0), vec![1.0, 2.0]);
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0), vec![2.0]);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
    }

    #[test]
    fn linear_min_splits_at_crossing() {
        let f = PiecewiseLinear { pieces: vec![Lin { t0: 0.0, t1: 2.0, slope: 1.0, intercept: 0.0 }] };
        let g = PiecewiseLinear { pieces: vec![Lin { t0: 0.0, t1: 2.0, slope: -1.0, intercept: 2.0 }] };
        let m = f.pointwise_min(&g);
        assert_eq!(m.pieces.len(), 2);
        assert!((m.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((m.eval(1.5) - 0.5).abs() < 1e-15);
    }
}
