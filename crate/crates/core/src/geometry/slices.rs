//! Cutting a linear region into queries with one lower and one upper h-bound.

use serde::{Deserialize, Serialize};

use super::linearize::{LinearRegion, LinearStrip};
use super::regions::check_interval;
use crate::domain::{Advisory, H_RANGE, TAU_CLAMP};
use crate::error::Result;

/// `h = slope·τ + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineBound {
    pub slope: f64,
    pub intercept: f64,
}

impl LineBound {
    #[inline]
    pub fn eval(&self, tau: f64) -> f64 {
        self.slope * tau + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySlice {
    pub id: usize,
    /// Network (previous advisory) the query runs against.
    pub a_prev: Advisory,
    pub advisory: Advisory,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub lower: LineBound,
    pub upper: LineBound,
    /// Box on h: the slice's h-extent clipped to the state space.
    pub h_lo: f64,
    pub h_hi: f64,
    pub v_o: (f64, f64),
    pub v_i: f64,
    /// Network τ input fixed at the clamp value instead of ranging over the slice.
    pub tau_pinned: bool,
}

impl QuerySlice {
    /// Membership in the slice's (τ, h) polygon.
    pub fn contains(&self, tau: f64, h: f64) -> bool {
        tau >= self.tau_lo
            && tau <= self.tau_hi
            && h >= self.h_lo
            && h <= self.h_hi
            && self.lower.eval(tau) <= h
            && h <= self.upper.eval(tau)
    }

    /// A τ inside the slice at which altitude `h` lies within the h-bounds.
    pub fn tau_for(&self, h: f64) -> Option<f64> {
        let (mut lo, mut hi) = (self.tau_lo, self.tau_hi);
        for (line, keep_above) in [(self.lower, true), (self.upper, false)] {
            // keep_above: h ≥ slope τ + icpt
            let rhs = h - line.intercept;
            if line.slope == 0.0 {
                let ok = if keep_above { rhs >= -1e-9 } else { rhs <= 1e-9 };
                if !ok {
                    return None;
                }
                continue;
            }
            let t = rhs / line.slope;
            let upper_limit = (line.slope > 0.0) == keep_above;
            if upper_limit {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
        }
        (lo <= hi + 1e-9).then(|| 0.5 * (lo + hi.max(lo)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    /// Extra cut spacing in τ, on top of the linearization joints.
    pub max_width: Option<f64>,
}

fn strip_cuts(strip: &LinearStrip, opts: &SliceOptions) -> Vec<f64> {
    let (t0, t1) = strip.lower.domain();
    let mut cuts: Vec<f64> = strip
        .lower
        .breakpoints()
        .into_iter()
        .chain(strip.upper.breakpoints())
        .collect();
    if TAU_CLAMP > t0 && TAU_CLAMP < t1 {
        cuts.push(TAU_CLAMP);
    }
    if let Some(w) = opts.max_width.filter(|w| *w > 0.0) {
        let mut t = (t0 / w).floor() * w + w;
        while t < t1 {
            cuts.push(t);
            t += w;
        }
    }
    cuts.retain(|t| *t >= t0 && *t <= t1);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    cuts
}

/// Slices covering `region`, ids numbered from `first_id`.
pub fn slice_queries(
    region: &LinearRegion,
    v_o: (f64, f64),
    v_i: f64,
    opts: &SliceOptions,
    first_id: usize,
) -> Result<Vec<QuerySlice>> {
    check_interval(v_o)?;
    let mut out = Vec::new();
    for strip in &region.strips {
        let cuts = strip_cuts(strip, opts);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-9 {
                continue;
            }
            let mid = 0.5 * (a + b);
            let l = strip.lower.piece_at(mid);
            let u = strip.upper.piece_at(mid);
            let lower = LineBound { slope: l.slope, intercept: l.intercept };
            let upper = LineBound { slope: u.slope, intercept: u.intercept };
            let gap = |t: f64| upper.eval(t) - lower.eval(t);
            let (ga, gb) = (gap(a), gap(b));
            if ga <= 0.0 && gb <= 0.0 {
                continue;
            }
            // shrink to where the bounds are ordered
            let (mut lo, mut hi) = (a, b);
            if ga < 0.0 || gb < 0.0 {
                let cross = a + (b - a) * ga / (ga - gb);
                if ga < 0.0 {
                    lo = cross;
                } else {
                    hi = cross;
                }
            }
            if hi - lo < 1e-9 {
                continue;
            }
            let h_lo = lower.eval(lo).min(lower.eval(hi)).max(H_RANGE.0);
            let h_hi = upper.eval(lo).max(upper.eval(hi)).min(H_RANGE.1);
            if h_hi <= h_lo {
                continue;
            }
            out.push(QuerySlice {
                id: first_id + out.len(),
                a_prev: region.a_prev,
                advisory: region.advisory,
                tau_lo: lo,
                tau_hi: hi,
                lower,
                upper,
                h_lo,
                h_hi,
                v_o,
                v_i,
                tau_pinned: hi <= TAU_CLAMP + 1e-12,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::linearize::{linearize, LinearizationMode};
    use crate::geometry::piecewise::{Lin, PiecewiseLinear};
    use crate::geometry::regions::{check_region, GeometryConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lin(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> f64) -> PiecewiseLinear {
        let pieces = (0..n)
            .map(|k| {
                let s0 = t0 + (t1 - t0) * k as f64 / n as f64;
                let s1 = t0 + (t1 - t0) * (k + 1) as f64 / n as f64;
                let slope = (f(s1) - f(s0)) / (s1 - s0);
                Lin { t0: s0, t1: s1, slope, intercept: f(s0) - slope * s0 }
            })
            .collect();
        PiecewiseLinear { pieces }
    }

    fn one_strip(lower: PiecewiseLinear, upper: PiecewiseLinear) -> LinearRegion {
        LinearRegion {
            advisory: Advisory::Cl1500,
            a_prev: Advisory::Coc,
            v_o_interval: (0.0, 2.0),
            strips: vec![LinearStrip { lower, upper }],
        }
    }

    #[test]
    fn joint_alignment_bounds_count() {
        // four segments per bound, offset joints, away from the clamp
        let region = one_strip(lin(10.0, 20.0, 4, |t| t * t), lin(10.0, 20.0, 4, |t| 1000.0 - (t - 9.0).powi(2)));
        let slices = slice_queries(&region, (0.0, 2.0), 0.0, &SliceOptions::default(), 0).unwrap();
        assert!(!slices.is_empty() && slices.len() <= 16);
        for s in &slices {
            assert!(s.tau_lo < s.tau_hi);
            assert!(!s.tau_pinned);
        }
    }

    #[test]
    fn crossing_bounds_trimmed() {
        let region = one_strip(lin(0.0, 10.0, 1, |t| 10.0 * t), lin(0.0, 10.0, 1, |_| 50.0));
        let slices = slice_queries(&region, (0.0, 2.0), 0.0, &SliceOptions::default(), 0).unwrap();
        assert_eq!(slices.len(), 1);
        assert!((slices[0].tau_hi - 5.0).abs() < 1e-12);
        assert!(slices[0].tau_pinned);
    }

    #[test]
    fn early_slice_is_pinned() {
        let region = one_strip(lin(2.0, 4.0, 1, |_| -100.0), lin(2.0, 4.0, 1, |_| 100.0));
        let s = &slice_queries(&region, (0.0, 2.0), 0.0, &SliceOptions::default(), 7).unwrap()[0];
        assert!(s.tau_pinned && s.tau_lo == 2.0 && s.tau_hi == 4.0 && s.id == 7);
    }

    #[test]
    fn clamp_is_always_a_cut() {
        let region = one_strip(lin(0.0, 12.0, 1, |_| -100.0), lin(0.0, 12.0, 1, |_| 100.0));
        let slices = slice_queries(&region, (0.0, 2.0), 0.0, &SliceOptions::default(), 0).unwrap();
        assert_eq!(slices.len(), 2);
        assert!(slices[0].tau_pinned && !slices[1].tau_pinned);
        assert_eq!(slices[0].tau_hi, TAU_CLAMP);
        let fine = slice_queries(&region, (0.0, 2.0), 0.0, &SliceOptions { max_width: Some(1.0) }, 0).unwrap();
        assert_eq!(fine.len(), 12);
    }

    #[test]
    fn slices_tile_the_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = GeometryConfig::default();
        for (adv, a_prev) in [(Advisory::Cl1500, Advisory::Coc), (Advisory::Coc, Advisory::Coc), (Advisory::Sdes2500, Advisory::Scl1500)] {
            let region = check_region(adv, a_prev, (0.0, 2.0), &cfg).unwrap();
            let lin = linearize(&region, 0.5, LinearizationMode::Over).unwrap();
            let slices = slice_queries(&lin, (0.0, 2.0), 0.0, &SliceOptions::default(), 0).unwrap();
            assert!(!slices.is_empty());
            for _ in 0..100_000 / 3 {
                let (t, h) = (rng.gen_range(0.0..40.0), rng.gen_range(-1500.0..1500.0));
                let in_region = lin.contains(t, h);
                let hits = slices.iter().filter(|s| s.contains(t, h)).count();
                assert_eq!(in_region, hits > 0, "{adv} ({t}, {h})");
            }
            for s in &slices {
                assert_eq!(s.tau_pinned, s.tau_lo < TAU_CLAMP);
                let t = s.tau_for(0.5 * (s.lower.eval(s.tau_lo) + s.upper.eval(s.tau_lo)));
                assert!(t.is_some());
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let region = one_strip(lin(2.0, 4.0, 1, |_| -100.0), lin(2.0, 4.0, 1, |_| 100.0));
        let s = slice_queries(&region, (0.0, 2.0), 0.0, &SliceOptions::default(), 0).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Vec<QuerySlice> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
