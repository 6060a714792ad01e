use serde::{Deserialize, Serialize};

use super::piecewise::{bisect, PiecewiseQuadratic};
use super::trajectory::{strongest_follow_up, window_extreme};
use crate::domain::{allowed_advisories, Advisory, Sign, TAU_RANGE, V_RANGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Puck half-height, ft.
    pub h_p: f64,
    /// Time the ownship follows the advisory before a follow-up can be issued, s.
    pub epsilon: f64,
    /// Regions are built over τ ∈ [0, tau_max].
    pub tau_max: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            h_p: 100.0,
            epsilon: 1.0,
            tau_max: TAU_RANGE.1,
        }
    }
}

/// Intruder positions `lower(τ) ≤ h ≤ upper(τ)`; empty wherever the bounds cross.
///
/// `lower` is non-decreasing and `upper` non-increasing, so the band is
/// nonempty on a single interval starting at τ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: PiecewiseQuadratic,
    pub upper: PiecewiseQuadratic,
}

impl Band {
    pub fn contains(&self, tau: f64, h: f64) -> bool {
        let (t0, t1) = self.lower.domain();
        tau >= t0 && tau <= t1 && self.lower.eval(tau) <= h && h <= self.upper.eval(tau)
    }

    /// Largest τ at which the band is nonempty, or `None` if it is empty everywhere.
    pub fn closing_time(&self) -> Option<f64> {
        let (t0, t1) = self.lower.domain();
        let gap = |t: f64| self.upper.eval(t) - self.lower.eval(t);
        if gap(t0) < 0.0 {
            return None;
        }
        if gap(t1) >= 0.0 {
            return Some(t1);
        }
        Some(bisect(t0, t1, gap))
    }

    fn intersect(&self, other: &Band) -> Band {
        Band {
            lower: self.lower.pointwise_max(&other.lower),
            upper: self.upper.pointwise_min(&other.upper),
        }
    }
}

/// Intruder positions that no follow-up can save after `epsilon` seconds of
/// following `advisory`, for any start rate in `v_o_interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeableRegion {
    pub advisory: Advisory,
    pub v_o_interval: (f64, f64),
    pub epsilon: f64,
    /// Lowest compliant ownship altitude followed by the strongest climb.
    pub lowest_path: PiecewiseQuadratic,
    /// Highest compliant ownship altitude followed by the strongest descend.
    pub highest_path: PiecewiseQuadratic,
    pub band: Band,
}

pub(crate) fn check_interval(v_o: (f64, f64)) -> Result<()> {
    let (lo, hi) = v_o;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= V_RANGE.0 && hi <= V_RANGE.1) {
        return Err(Error::InvalidInterval { lo, hi });
    }
    Ok(())
}

fn extreme_path(adv: Advisory, v0: f64, epsilon: f64, toward: Sign) -> PiecewiseQuadratic {
    let mut path = window_extreme(adv, v0, epsilon, toward);
    // escape in the opposite sense of the side being bounded
    path.comply(strongest_follow_up(adv, toward.flip()), f64::INFINITY);
    path.finish()
}

pub fn safeable_bounds(adv: Advisory, v_o: (f64, f64), cfg: &GeometryConfig) -> Result<SafeableRegion> {
    check_interval(v_o)?;
    if !(cfg.epsilon > 0.0) || !(cfg.tau_max > 0.0) || !(cfg.h_p >= 0.0) {
        return Err(Error::InvalidQuery(format!("invalid geometry settings {cfg:?}")));
    }
    let lowest_path = extreme_path(adv, v_o.0, cfg.epsilon, Sign::Down);
    let highest_path = extreme_path(adv, v_o.1, cfg.epsilon, Sign::Up);
    let lower = lowest_path
        .shifted(-cfg.h_p)
        .running_min_right()
        .restricted(0.0, cfg.tau_max);
    let upper = highest_path
        .shifted(cfg.h_p)
        .running_max_right()
        .restricted(0.0, cfg.tau_max);
    Ok(SafeableRegion {
        advisory: adv,
        v_o_interval: v_o,
        epsilon: cfg.epsilon,
        lowest_path: lowest_path.restricted(0.0, cfg.tau_max),
        highest_path: highest_path.restricted(0.0, cfg.tau_max),
        band: Band { lower, upper },
    })
}

/// Positions unsafeable for every advisory that may follow `a_prev`.
pub fn unsafeable_all(a_prev: Advisory, v_o: (f64, f64), cfg: &GeometryConfig) -> Result<Band> {
    let mut acc: Option<Band> = None;
    for adv in allowed_advisories(a_prev).iter() {
        let band = safeable_bounds(adv, v_o, cfg)?.band;
        acc = Some(match acc {
            None => band,
            Some(b) => b.intersect(&band),
        });
    }
    Ok(acc.expect("allowed set is never empty"))
}

/// Where issuing `advisory` is provably wrong: unsafeable for it but
/// safeable for some other allowed advisory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRegion {
    pub advisory: Advisory,
    pub a_prev: Advisory,
    pub v_o_interval: (f64, f64),
    pub band: Band,
    pub excluded: Band,
}

impl CheckRegion {
    pub fn contains(&self, tau: f64, h: f64) -> bool {
        self.band.contains(tau, h) && !self.excluded.contains(tau, h)
    }
}

pub fn check_region(adv: Advisory, a_prev: Advisory, v_o: (f64, f64), cfg: &GeometryConfig) -> Result<CheckRegion> {
    if !allowed_advisories(a_prev).contains(adv) {
        return Err(Error::DisallowedAdvisory { prev: a_prev, advisory: adv });
    }
    Ok(CheckRegion {
        advisory: adv,
        a_prev,
        v_o_interval: v_o,
        band: safeable_bounds(adv, v_o, cfg)?.band,
        excluded: unsafeable_all(a_prev, v_o, cfg)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySegment {
    pub tau0: f64,
    pub tau1: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub side: String,
}

/// Serializable boundary listing for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDump {
    pub advisory: Advisory,
    pub v_o_interval: (f64, f64),
    pub epsilon: f64,
    pub segments: Vec<BoundarySegment>,
}

impl SafeableRegion {
    pub fn dump(&self) -> RegionDump {
        let seg = |curve: &PiecewiseQuadratic, side: &str| {
            curve
                .pieces
                .iter()
                .map(|p| BoundarySegment {
                    tau0: p.t0,
                    tau1: p.t1,
                    a: p.a,
                    b: p.b,
                    c: p.c,
                    side: side.to_string(),
                })
                .collect::<Vec<_>>()
        };
        let mut segments = seg(&self.band.lower, "lower");
        segments.extend(seg(&self.band.upper, "upper"));
        RegionDump {
            advisory: self.advisory,
            v_o_interval: self.v_o_interval,
            epsilon: self.epsilon,
            segments,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::V_MAX;
    use crate::geometry::trajectory::safe_bound;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> GeometryConfig {
        GeometryConfig::default()
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(safeable_bounds(Advisory::Cl1500, (2.0, 0.0), &cfg()).is_err());
        assert!(safeable_bounds(Advisory::Cl1500, (f64::NAN, 0.0), &cfg()).is_err());
        assert!(safeable_bounds(Advisory::Cl1500, (-120.0, 0.0), &cfg()).is_err());
    }

    #[test]
    fn vanishing_window_matches_continuation_envelopes() {
        let c = GeometryConfig { epsilon: 1e-9, ..cfg() };
        for adv in Advisory::ALL {
            for v in [(-40.0, -38.0), (0.0, 2.0), (30.0, 32.0)] {
                let r = safeable_bounds(adv, v, &c).unwrap();
                let up = safe_bound(strongest_follow_up(adv, Sign::Up), v.0, 100.0).unwrap();
                let down = safe_bound(strongest_follow_up(adv, Sign::Down), v.1, 100.0).unwrap();
                for i in 0..=80 {
                    let t = i as f64 * 0.5;
                    assert!((r.band.lower.eval(t) - up.envelope.eval(t)).abs() < 1e-5, "{adv} {t}");
                    assert!((r.band.upper.eval(t) - down.envelope.eval(t)).abs() < 1e-5, "{adv} {t}");
                }
            }
        }
    }

    #[test]
    fn bounds_are_monotone_and_continuous() {
        for adv in Advisory::ALL {
            let r = safeable_bounds(adv, (-10.0, 10.0), &cfg()).unwrap();
            let mut prev = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..=4000 {
                let t = i as f64 * 0.01;
                let (l, u) = (r.band.lower.eval(t), r.band.upper.eval(t));
                assert!(l >= prev.0 - 1e-9 && u <= prev.1 + 1e-9, "{adv} at {t}");
                if i > 0 {
                    assert!((l - prev.0).abs() < 1.5 && (u - prev.1).abs() < 1.5);
                }
                prev = (l, u);
            }
        }
    }

    fn sample_nesting(small: (f64, f64), big: (f64, f64), c_small: &GeometryConfig, c_big: &GeometryConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for adv in Advisory::ALL {
            let a = safeable_bounds(adv, small, c_small).unwrap();
            let b = safeable_bounds(adv, big, c_big).unwrap();
            for _ in 0..100_000 / 9 {
                let t = rng.gen_range(0.0..40.0);
                let h = rng.gen_range(-2000.0..2000.0);
                if a.band.contains(t, h) {
                    assert!(b.band.contains(t, h), "{adv} ({t}, {h})");
                }
            }
        }
    }

    #[test]
    fn widening_rates_never_shrinks_band() {
        sample_nesting((-2.0, 0.0), (-10.0, 10.0), &cfg(), &cfg());
    }

    #[test]
    fn longer_window_never_shrinks_band() {
        let long = GeometryConfig { epsilon: 3.0, ..cfg() };
        sample_nesting((-2.0, 0.0), (-2.0, 0.0), &cfg(), &long);
    }

    /// Altitude samples of a trajectory stepped with constant accelerations:
    /// `window` seconds toward `target` at `accel`, then minimal compliance with `follow`.
    fn simulate(v0: f64, target: f64, accel: f64, window: f64, follow: Advisory, t_end: f64, dt: f64) -> Vec<(f64, f64)> {
        let p = follow.params();
        let (w, v_lo) = p.vertical().unwrap();
        let (mut t, mut h, mut v) = (0.0, 0.0, v0);
        let mut out = vec![(0.0, 0.0)];
        while t < t_end {
            let (goal, a) = if t < window {
                (target, accel)
            } else if w.value() * v < w.value() * v_lo {
                (v_lo, p.a_lo)
            } else {
                (v, 0.0)
            };
            let step = if t < window { dt.min(window - t) } else { dt };
            let gap = goal - v;
            let reach = if a > 0.0 { gap.abs() / a } else { f64::INFINITY };
            if reach < step {
                h += v * reach + 0.5 * a * gap.signum() * reach * reach + goal * (step - reach);
                v = goal;
            } else if a > 0.0 {
                h += v * step + 0.5 * a * gap.signum() * step * step;
                v += a * gap.signum() * step;
            } else {
                h += v * step;
            }
            t += step;
            out.push((t, h));
        }
        out
    }

    fn clears(traj: &[(f64, f64)], tau: f64, h: f64, h_p: f64) -> bool {
        // the final sample must also have left the intruder's altitude band for good
        traj.iter().filter(|(t, _)| *t >= tau).all(|(_, y)| (y - h).abs() > h_p)
    }

    #[test]
    fn outside_band_some_follow_up_avoids_collision() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 1000 {
            let adv = Advisory::ALL[rng.gen_range(0..9)];
            let lo = rng.gen_range(-100.0..98.0);
            let v = (lo, lo + 2.0);
            let r = safeable_bounds(adv, v, &cfg()).unwrap();
            let tau = rng.gen_range(0.0..40.0);
            let h = rng.gen_range(-1500.0..1500.0);
            if r.band.contains(tau, h) {
                continue;
            }
            checked += 1;
            let p = adv.params();
            let (range_lo, range_hi) = match p.vertical() {
                None => (-V_MAX, V_MAX),
                Some((Sign::Up, v_lo)) => (v_lo, V_MAX),
                Some((Sign::Down, v_lo)) => (-V_MAX, v_lo),
            };
            let climb = strongest_follow_up(adv, Sign::Up);
            let descend = strongest_follow_up(adv, Sign::Down);
            for k in 0..5 {
                let v0 = match k {
                    0 => v.0,
                    1 => v.1,
                    _ => rng.gen_range(v.0..=v.1),
                };
                let target = match k {
                    0 => if matches!(p.vertical(), Some((Sign::Up, _))) { range_lo } else { -V_MAX },
                    1 => if matches!(p.vertical(), Some((Sign::Down, _))) { range_hi } else { V_MAX },
                    _ => rng.gen_range(range_lo..=range_hi),
                };
                let t_end = tau + 200.0;
                let up = simulate(v0, target, p.a_lo, 1.0, climb, t_end, 0.02);
                let down = simulate(v0, target, p.a_lo, 1.0, descend, t_end, 0.02);
                assert!(
                    clears(&up, tau, h, 100.0) || clears(&down, tau, h, 100.0),
                    "{adv} v {v:?} start {v0} target {target} intruder ({tau}, {h})"
                );
            }
        }
    }

    #[test]
    fn unsafeable_for_all_examples() {
        for a_prev in Advisory::ALL {
            for v in [(-100.0, -98.0), (-2.0, 0.0), (0.0, 2.0), (98.0, 100.0)] {
                let all = unsafeable_all(a_prev, v, &cfg()).unwrap();
                assert!(all.contains(0.0, 0.0));
                assert!(!all.contains(35.0, 0.0), "{a_prev} {v:?}");
            }
        }
    }

    #[test]
    fn intersection_is_inside_each_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for a_prev in [Advisory::Coc, Advisory::Cl1500, Advisory::Sdes2500] {
            let v = (-6.0, -4.0);
            let all = unsafeable_all(a_prev, v, &cfg()).unwrap();
            let bands: Vec<(Advisory, Band)> = allowed_advisories(a_prev)
                .iter()
                .map(|a| (a, safeable_bounds(a, v, &cfg()).unwrap().band))
                .collect();
            for _ in 0..20_000 {
                let (t, h) = (rng.gen_range(0.0..40.0), rng.gen_range(-1000.0..1000.0));
                let inside_all = bands.iter().all(|(_, b)| b.contains(t, h));
                // pointwise max/min of the bounds equals the set intersection
                assert_eq!(all.contains(t, h), inside_all, "({t}, {h})");
            }
        }
    }

    #[test]
    fn check_region_points_have_an_alternative() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v = (0.0, 2.0);
        let region = check_region(Advisory::Cl1500, Advisory::Coc, v, &cfg()).unwrap();
        let others: Vec<Band> = allowed_advisories(Advisory::Coc)
            .iter()
            .filter(|a| *a != Advisory::Cl1500)
            .map(|a| safeable_bounds(a, v, &cfg()).unwrap().band)
            .collect();
        let mut hits = 0;
        for _ in 0..100_000 {
            let (t, h) = (rng.gen_range(0.0..10.0), rng.gen_range(-300.0..300.0));
            if region.contains(t, h) {
                hits += 1;
                assert!(region.band.contains(t, h));
                assert!(!region.excluded.contains(t, h));
                assert!(others.iter().any(|b| !b.contains(t, h)));
            }
        }
        assert!(hits > 100, "check region unexpectedly small: {hits}");
    }

    #[test]
    fn disallowed_advisory_rejected() {
        assert!(check_region(Advisory::Scl2500, Advisory::Coc, (0.0, 2.0), &cfg()).is_err());
    }

    #[test]
    fn dump_round_trips() {
        let r = safeable_bounds(Advisory::Cl1500, (0.0, 2.0), &cfg()).unwrap();
        let json = serde_json::to_string(&r.dump()).unwrap();
        assert!(json.contains("\"advisory\":\"CL1500\"") && json.contains("\"side\":\"upper\""));
        let back: RegionDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r.dump());
    }
}
