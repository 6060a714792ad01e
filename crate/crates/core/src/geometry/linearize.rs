//! Piecewise-linear replacement of quadratic region boundaries.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::piecewise::{bisect, Lin, PiecewiseLinear, PiecewiseQuadratic, Quad};
use super::regions::{Band, CheckRegion};
use crate::domain::Advisory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearizationMode {
    /// Outer boundaries pushed outward: the linear region contains the quadratic one.
    Over,
    /// Outer boundaries pulled inward: the linear region lies inside the quadratic one.
    Under,
    /// Secants everywhere.
    InnerSegments,
    /// Midpoint tangents everywhere.
    OuterTangents,
}

impl FromStr for LinearizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "over" => Ok(Self::Over),
            "under" => Ok(Self::Under),
            "inner-segments" | "chords" => Ok(Self::InnerSegments),
            "outer-tangents" | "tangents" => Ok(Self::OuterTangents),
            _ => Err(Error::Parse(format!("unknown linearization mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for LinearizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Over => "over",
            Self::Under => "under",
            Self::InnerSegments => "inner-segments",
            Self::OuterTangents => "outer-tangents",
        })
    }
}

/// Which side of the curve a replacement line must stay on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bias {
    /// line ≤ curve
    Below,
    /// line ≥ curve
    Above,
}

impl Bias {
    fn flip(self) -> Bias {
        match self {
            Bias::Below => Bias::Above,
            Bias::Above => Bias::Below,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fit {
    Chord,
    Tangent,
}

fn fit_line(q: &Quad, s0: f64, s1: f64, fit: Fit) -> Lin {
    let slope;
    let intercept;
    match fit {
        Fit::Chord => {
            let (y0, y1) = (q.eval(s0), q.eval(s1));
            slope = (y1 - y0) / (s1 - s0);
            intercept = y0 - slope * s0;
        }
        Fit::Tangent => {
            let m = 0.5 * (s0 + s1);
            slope = q.slope(m);
            intercept = q.eval(m) - slope * m;
        }
    }
    Lin { t0: s0, t1: s1, slope, intercept }
}

/// Secants lie above convex arcs and below concave ones; tangents the reverse.
fn fit_for(q: &Quad, bias: Bias) -> Fit {
    match (q.a > 0.0, bias) {
        (true, Bias::Above) | (false, Bias::Below) => Fit::Chord,
        _ => Fit::Tangent,
    }
}

/// Replace each quadratic piece by segments no longer than `seg_len`.
///
/// With `fit = None` each segment keeps to the side given by `bias`.
fn linearize_curve(curve: &PiecewiseQuadratic, seg_len: f64, bias: Bias, fit: Option<Fit>) -> PiecewiseLinear {
    let mut pieces = Vec::new();
    for q in &curve.pieces {
        assert!(q.t1.is_finite(), "linearize a bounded restriction");
        if q.is_linear() {
            pieces.push(Lin { t0: q.t0, t1: q.t1, slope: q.b, intercept: q.c });
            continue;
        }
        // dyadic counts, so halving seg_len refines the previous partition
        let mut n = 1usize;
        while (q.t1 - q.t0) / n as f64 > seg_len * (1.0 + 1e-12) {
            n *= 2;
        }
        let fit = fit.unwrap_or_else(|| fit_for(q, bias));
        for k in 0..n {
            let s0 = q.t0 + (q.t1 - q.t0) * k as f64 / n as f64;
            let s1 = if k + 1 == n { q.t1 } else { q.t0 + (q.t1 - q.t0) * (k + 1) as f64 / n as f64 };
            pieces.push(fit_line(q, s0, s1, fit));
        }
    }
    PiecewiseLinear { pieces }
}

fn curve_for(curve: &PiecewiseQuadratic, seg_len: f64, mode: LinearizationMode, outer: Option<Bias>, inner: Option<Bias>) -> PiecewiseLinear {
    match mode {
        LinearizationMode::Over => linearize_curve(curve, seg_len, outer.or(inner).unwrap(), None),
        LinearizationMode::Under => {
            let bias = outer.map(Bias::flip).or(inner).unwrap();
            linearize_curve(curve, seg_len, bias, None)
        }
        LinearizationMode::InnerSegments => linearize_curve(curve, seg_len, Bias::Below, Some(Fit::Chord)),
        LinearizationMode::OuterTangents => linearize_curve(curve, seg_len, Bias::Below, Some(Fit::Tangent)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStrip {
    pub lower: PiecewiseLinear,
    pub upper: PiecewiseLinear,
}

impl LinearStrip {
    pub fn contains(&self, tau: f64, h: f64) -> bool {
        let (t0, t1) = self.lower.domain();
        tau >= t0 && tau <= t1 && self.lower.eval(tau) <= h && h <= self.upper.eval(tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegion {
    pub advisory: Advisory,
    pub a_prev: Advisory,
    pub v_o_interval: (f64, f64),
    pub strips: Vec<LinearStrip>,
}

impl LinearRegion {
    pub fn contains(&self, tau: f64, h: f64) -> bool {
        self.strips.iter().any(|s| s.contains(tau, h))
    }
}

pub(crate) fn check_seg_len(seg_len: f64) -> Result<()> {
    if !(seg_len > 0.0 && seg_len.is_finite()) {
        return Err(Error::InvalidQuery(format!("segment length {seg_len} must be positive")));
    }
    Ok(())
}

/// Linear replacement of a single band; in `Over` mode it contains the band.
pub fn linearize_band(band: &Band, seg_len: f64, mode: LinearizationMode) -> Result<LinearStrip> {
    check_seg_len(seg_len)?;
    Ok(LinearStrip {
        lower: curve_for(&band.lower, seg_len, mode, Some(Bias::Below), None),
        upper: curve_for(&band.upper, seg_len, mode, Some(Bias::Above), None),
    })
}

/// Linear replacement of a check region.
///
/// Outer edges (the advisory's own band) follow `mode`. Edges shared with the
/// excluded region always stay outside it, so no query touches positions
/// that no advisory can save.
pub fn linearize(region: &CheckRegion, seg_len: f64, mode: LinearizationMode) -> Result<LinearRegion> {
    check_seg_len(seg_len)?;
    let (t0, t1) = region.band.lower.domain();
    let outer = linearize_band(&region.band, seg_len, mode)?;
    let ex = &region.excluded;
    // the excluded band is nonempty on [t0, hole_end]
    let gap = |t: f64| ex.upper.eval(t) - ex.lower.eval(t);
    let hole_end = if gap(t0) < 0.0 {
        t0
    } else if gap(t1) >= 0.0 {
        t1
    } else {
        bisect(t0, t1, gap)
    };
    let mut strips = Vec::new();
    if hole_end > t0 {
        let hole_lo = curve_for(&ex.lower, seg_len, mode, None, Some(Bias::Below)).restricted(t0, hole_end);
        let hole_hi = curve_for(&ex.upper, seg_len, mode, None, Some(Bias::Above)).restricted(t0, hole_end);
        let lo = outer.lower.restricted(t0, hole_end);
        let hi = outer.upper.restricted(t0, hole_end);
        strips.push(LinearStrip { lower: lo.clone(), upper: hi.pointwise_min(&hole_lo) });
        strips.push(LinearStrip { lower: lo.pointwise_max(&hole_hi), upper: hi });
    }
    if hole_end < t1 {
        strips.push(LinearStrip {
            lower: outer.lower.restricted(hole_end, t1),
            upper: outer.upper.restricted(hole_end, t1),
        });
    }
    Ok(LinearRegion {
        advisory: region.advisory,
        a_prev: region.a_prev,
        v_o_interval: region.v_o_interval,
        strips,
    })
}

/// Largest vertical distance between a curve and its linear replacement.
pub fn max_gap(curve: &PiecewiseQuadratic, lin: &PiecewiseLinear, samples: usize) -> f64 {
    let (t0, t1) = curve.domain();
    (0..=samples)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / samples as f64;
            (curve.eval(t) - lin.eval(t)).abs()
        })
        .fold(0.0, f64::max)
}
