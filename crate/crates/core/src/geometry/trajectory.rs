//! Ownship altitude curves relative to the starting position.
//!
//! Every rate change happens at a fixed acceleration magnitude toward a target
//! rate, after which the rate is held. Rates never leave `±V_MAX`.

use serde::{Deserialize, Serialize};

use super::piecewise::{PiecewiseQuadratic, Quad};
use crate::domain::{allowed_advisories, Advisory, Sign, V_MAX};
use crate::error::{Error, Result};

/// Builder for an altitude curve starting at `t = 0`.
#[derive(Debug, Clone)]
pub(crate) struct Path {
    pieces: Vec<Quad>,
    t: f64,
    h: f64,
    v: f64,
}

impl Path {
    pub(crate) fn start(h: f64, v: f64) -> Path {
        Path { pieces: Vec::new(), t: 0.0, h, v }
    }

    #[cfg(test)]
    pub(crate) fn rate(&self) -> f64 {
        self.v
    }

    #[cfg(test)]
    pub(crate) fn altitude(&self) -> f64 {
        self.h
    }

    fn push(&mut self, t1: f64, a_signed: f64) {
        let (t, h, v) = (self.t, self.h, self.v);
        let a = 0.5 * a_signed;
        self.pieces.push(Quad {
            t0: t,
            t1,
            a,
            b: v - a_signed * t,
            c: h - v * t + a * t * t,
        });
        if t1.is_finite() {
            let dt = t1 - t;
            self.h = h + v * dt + a * dt * dt;
            self.v = v + a_signed * dt;
            self.t = t1;
        }
    }

    /// Move the rate toward `target` at `accel` until time `until`, holding once reached.
    pub(crate) fn ramp(&mut self, target: f64, accel: f64, until: f64) {
        let target = target.clamp(-V_MAX, V_MAX);
        if until <= self.t {
            return;
        }
        let gap = target - self.v;
        if gap != 0.0 {
            let t_reach = self.t + gap.abs() / accel;
            let a_signed = accel * gap.signum();
            if t_reach >= until {
                self.push(until, a_signed);
                return;
            }
            self.push(t_reach, a_signed);
            self.v = target;
        }
        self.push(until, 0.0);
    }

    /// Minimal compliance with `adv`: accelerate at its strength to its target
    /// rate unless already compliant, in which case the rate is held.
    pub(crate) fn comply(&mut self, adv: Advisory, until: f64) {
        let p = adv.params();
        match p.vertical() {
            None => self.ramp(self.v, p.a_lo, until),
            Some((w, v_lo)) => {
                let compliant = w.value() * self.v >= w.value() * v_lo;
                let target = if compliant { self.v } else { v_lo };
                self.ramp(target, p.a_lo, until);
            }
        }
    }

    pub(crate) fn finish(self) -> PiecewiseQuadratic {
        PiecewiseQuadratic::new(self.pieces)
    }
}

fn vertical(adv: Advisory) -> Result<(Sign, f64, f64)> {
    let p = adv.params();
    let (w, v_lo) = p.vertical().ok_or(Error::NoNominalTrajectory(adv))?;
    Ok((w, v_lo, p.a_lo))
}

/// Ownship altitude after `tau` seconds of minimal compliance with `adv`.
pub fn nominal_altitude(adv: Advisory, v_o: f64, tau: f64) -> Result<f64> {
    let (w, v_lo, a_lo) = vertical(adv)?;
    if !(tau >= 0.0) {
        return Err(Error::OutOfBounds(format!("tau {tau} must be non-negative")));
    }
    let w = w.value();
    if w * v_o >= w * v_lo {
        return Ok(v_o * tau);
    }
    let a = w * a_lo;
    let t_b = (v_lo - v_o) / a;
    Ok(if tau < t_b {
        0.5 * a * tau * tau + v_o * tau
    } else {
        v_lo * tau - (v_lo - v_o).powi(2) / (2.0 * a)
    })
}

/// Piecewise form of `nominal_altitude` over `[0, ∞)`.
pub fn nominal_curve(adv: Advisory, v_o: f64) -> Result<PiecewiseQuadratic> {
    vertical(adv)?;
    let mut path = Path::start(0.0, v_o);
    path.comply(adv, f64::INFINITY);
    Ok(path.finish())
}

/// Which side of a bound holds the unsafe intruder positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

/// A nominal trajectory shifted by the puck half-height toward the intruder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalBound {
    pub advisory: Advisory,
    pub v_ref: f64,
    pub curve: PiecewiseQuadratic,
    pub side: Side,
}

/// A nominal bound extended over all later times, as needed when the
/// horizontal closure rate may be arbitrarily slow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseEnvelope {
    pub base: NominalBound,
    pub envelope: PiecewiseQuadratic,
}

impl WorstCaseEnvelope {
    /// Intruder at `(tau, h)` cannot be kept clear by following the advisory.
    pub fn is_unsafe(&self, tau: f64, h: f64) -> bool {
        let b = self.envelope.eval(tau);
        match self.base.side {
            Side::Above => h >= b,
            Side::Below => h <= b,
        }
    }
}

pub fn safe_bound(adv: Advisory, v_o: f64, h_p: f64) -> Result<WorstCaseEnvelope> {
    let (w, _, _) = vertical(adv)?;
    let nominal = nominal_curve(adv, v_o)?;
    let (shift, side) = match w {
        Sign::Up => (-h_p, Side::Above),
        Sign::Down => (h_p, Side::Below),
    };
    let curve = nominal.shifted(shift);
    let envelope = match side {
        Side::Above => curve.running_min_right(),
        Side::Below => curve.running_max_right(),
    };
    Ok(WorstCaseEnvelope {
        base: NominalBound {
            advisory: adv,
            v_ref: v_o,
            curve,
            side,
        },
        envelope,
    })
}

/// Strongest advisory of the given sense that may follow `adv`: the largest
/// target rate, ties broken by the larger acceleration.
pub fn strongest_follow_up(adv: Advisory, sense: Sign) -> Advisory {
    allowed_advisories(adv)
        .iter()
        .filter_map(|a| {
            let p = a.params();
            let (w, v_lo) = p.vertical()?;
            (w == sense).then_some((a, v_lo.abs(), p.a_lo))
        })
        .max_by(|x, y| x.1.total_cmp(&y.1).then(x.2.total_cmp(&y.2)))
        .map(|x| x.0)
        .expect("every advisory is followed by both a climb and a descend")
}

/// Extreme trajectory during the first `epsilon` seconds of `adv`, toward
/// `toward` (the lowest or highest altitude a compliant ownship can reach).
///
/// On the constrained side the rate heads for the range boundary even from a
/// compliant start, since a pilot may back off to the boundary rate.
pub(crate) fn window_extreme(adv: Advisory, v0: f64, epsilon: f64, toward: Sign) -> Path {
    let p = adv.params();
    let mut path = Path::start(0.0, v0);
    match p.vertical() {
        Some((w, v_lo)) if w == toward.flip() => path.ramp(v_lo, p.a_lo, epsilon),
        _ => path.ramp(toward.value() * V_MAX, p.a_lo, epsilon),
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::G;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fixed-step integration of the compliance acceleration profile.
    fn integrate(adv: Advisory, v_o: f64, tau: f64) -> f64 {
        let p = adv.params();
        let (w, v_lo) = p.vertical().unwrap();
        let w = w.value();
        let n = 200_000;
        let dt = tau / n as f64;
        let (mut h, mut v) = (0.0, v_o);
        for _ in 0..n {
            let a = if w * v < w * v_lo { w * p.a_lo } else { 0.0 };
            // exact within a step of constant acceleration, capped at the target
            let mut v_next = v + a * dt;
            if a != 0.0 && w * v_next > w * v_lo {
                let t_hit = (v_lo - v) / a;
                h += v * t_hit + 0.5 * a * t_hit * t_hit + v_lo * (dt - t_hit);
                v = v_lo;
                continue;
            }
            h += v * dt + 0.5 * a * dt * dt;
            std::mem::swap(&mut v, &mut v_next);
        }
        h
    }

    #[test]
    fn compliant_start_is_linear() {
        assert!((nominal_altitude(Advisory::Cl1500, 25.0, 4.0).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn breakpoint_altitude() {
        let t_b = 25.0 / (G / 4.0);
        let h = nominal_altitude(Advisory::Cl1500, 0.0, t_b).unwrap();
        assert!((h - 0.5 * (G / 4.0) * t_b * t_b).abs() < 1e-12);
        assert!((h - 38.85).abs() < 0.01, "{h}");
        assert!((integrate(Advisory::Cl1500, 0.0, t_b) - h).abs() < 1e-6);
    }

    #[test]
    fn sign_symmetry() {
        for i in 0..100 {
            let t = i as f64 * 0.4;
            let up = nominal_altitude(Advisory::Cl1500, 0.0, t).unwrap();
            let down = nominal_altitude(Advisory::Des1500, 0.0, t).unwrap();
            assert_eq!(up, -down);
        }
    }

    #[test]
    fn coc_has_no_nominal() {
        assert!(matches!(
            nominal_altitude(Advisory::Coc, 0.0, 1.0),
            Err(Error::NoNominalTrajectory(Advisory::Coc))
        ));
        assert!(safe_bound(Advisory::Coc, 0.0, 100.0).is_err());
    }

    #[test]
    fn closed_form_matches_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vertical: Vec<Advisory> = Advisory::ALL[1..].to_vec();
        for _ in 0..10_000 {
            let adv = vertical[rng.gen_range(0..vertical.len())];
            let v = rng.gen_range(-100.0..100.0);
            let tau = rng.gen_range(0.0..40.0);
            let exact = nominal_altitude(adv, v, tau).unwrap();
            let curve = nominal_curve(adv, v).unwrap().eval(tau);
            assert!((exact - curve).abs() <= 1e-9 * (1.0 + exact.abs()), "{adv} {v} {tau}");
        }
        // integration is costly; a smaller sample suffices to pin the kinematics
        for _ in 0..200 {
            let adv = vertical[rng.gen_range(0..vertical.len())];
            let v = rng.gen_range(-100.0..100.0);
            let tau = rng.gen_range(0.0..40.0);
            let exact = nominal_altitude(adv, v, tau).unwrap();
            assert!((exact - integrate(adv, v, tau)).abs() <= 1e-6, "{adv} {v} {tau}");
        }
    }

    #[test]
    fn smooth_at_breakpoint() {
        for adv in Advisory::ALL[1..].iter().copied() {
            let p = adv.params();
            let (w, v_lo) = p.vertical().unwrap();
            let v_o = v_lo - w.value() * 30.0;
            let t_b = (v_lo - v_o) / (w.value() * p.a_lo);
            let h = |t: f64| nominal_altitude(adv, v_o, t).unwrap();
            let d = 1e-6;
            assert!((h(t_b - 1e-12) - h(t_b + 1e-12)).abs() < 1e-9);
            let left = (h(t_b) - h(t_b - d)) / d;
            let right = (h(t_b + d) - h(t_b)) / d;
            // one-sided differences carry O(a·d) truncation
            assert!((left - right).abs() < p.a_lo * d * 1.01 + 1e-9, "{adv}: {left} {right}");
            assert!((left - v_lo).abs() < p.a_lo * d);
        }
    }

    #[test]
    fn monotone_climb_envelope_is_base() {
        let env = safe_bound(Advisory::Cl1500, 25.0, 100.0).unwrap();
        for i in 0..80 {
            let t = i as f64 * 0.5;
            assert!((env.envelope.eval(t) - (25.0 * t - 100.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn dipping_climb_envelope() {
        let a = G / 4.0;
        let env = safe_bound(Advisory::Cl1500, -50.0, 100.0).unwrap();
        let vertex = -(50.0f64).powi(2) / (2.0 * a) - 100.0;
        let t_vertex = 50.0 / a;
        for i in 0..=200 {
            let t = i as f64 * 0.2;
            let dense = (0..=4000)
                .map(|k| t + k as f64 * 0.02)
                .map(|s| nominal_altitude(Advisory::Cl1500, -50.0, s).unwrap() - 100.0)
                .fold(f64::INFINITY, f64::min);
            let got = env.envelope.eval(t);
            assert!((got - dense).abs() < 1e-3, "t {t}: {got} vs {dense}");
            if t <= t_vertex {
                assert!((got - vertex).abs() < 1e-9);
            }
        }
    }

    /// Unsafe under a finite closure rate: the ownship passes within the
    /// puck height while the intruder is inside the horizontal radius.
    fn finite_unsafe(adv: Advisory, v_o: f64, tau: f64, h: f64, r_v: f64) -> bool {
        let t_back = tau + 2.0 * 500.0 / r_v;
        let n = 2000;
        (0..=n).any(|k| {
            let t = tau + (t_back - tau) * k as f64 / n as f64;
            (h - nominal_altitude(adv, v_o, t).unwrap()).abs() <= 100.0
        })
    }

    #[test]
    fn worst_case_dominates_finite_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vertical: Vec<Advisory> = Advisory::ALL[1..].to_vec();
        let mut unsafe_seen = 0;
        for r_v in [1.0, 10.0, 100.0] {
            for _ in 0..3_334 {
                let adv = vertical[rng.gen_range(0..vertical.len())];
                let v_o = rng.gen_range(-100.0..100.0);
                let env = safe_bound(adv, v_o, 100.0).unwrap();
                for _ in 0..10 {
                    let tau = rng.gen_range(0.0..40.0);
                    let h = rng.gen_range(-2000.0..2000.0);
                    if finite_unsafe(adv, v_o, tau, h, r_v) {
                        unsafe_seen += 1;
                        assert!(env.is_unsafe(tau, h), "{adv} v {v_o} tau {tau} h {h} r_v {r_v}");
                    }
                }
            }
        }
        assert!(unsafe_seen > 1000);
    }

    #[test]
    fn strongest_follow_ups() {
        use Advisory::*;
        assert_eq!(strongest_follow_up(Coc, Sign::Up), Cl1500);
        assert_eq!(strongest_follow_up(Coc, Sign::Down), Des1500);
        assert_eq!(strongest_follow_up(Cl1500, Sign::Up), Scl1500);
        assert_eq!(strongest_follow_up(Cl1500, Sign::Down), Sdes1500);
        assert_eq!(strongest_follow_up(Scl1500, Sign::Up), Scl2500);
        assert_eq!(strongest_follow_up(Scl1500, Sign::Down), Sdes2500);
        assert_eq!(strongest_follow_up(Dnd, Sign::Up), Cl1500);
    }

    #[test]
    fn ramp_respects_rate_cap() {
        let mut p = Path::start(0.0, 90.0);
        p.ramp(500.0, G, 5.0);
        assert!((p.rate() - V_MAX).abs() < 1e-12);
        let expect = (V_MAX * V_MAX - 90.0 * 90.0) / (2.0 * G) + V_MAX * (5.0 - 10.0 / G);
        assert!((p.altitude() - expect).abs() < 1e-9);
    }
}
