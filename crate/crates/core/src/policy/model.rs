//! Notional encounter dynamics and rewards.
//!
//! The ownship complies immediately at exactly the advisory's acceleration
//! until its rate enters the advisory range; the intruder draws a constant
//! acceleration for the step from a small discrete distribution. Both rates
//! are clamped to ±100 ft/s.

use serde::{Deserialize, Serialize};

use crate::domain::{allowed_advisories, is_compliant, Advisory, EncounterState, G, V_MAX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntruderOutcome {
    /// Vertical acceleration held for one step, ft/s².
    pub accel: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub nmac: f64,
    pub alert: f64,
    pub change: f64,
    pub strengthen: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            nmac: -1.0,
            alert: -0.01,
            change: -0.005,
            strengthen: -0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub intruder: Vec<IntruderOutcome>,
    pub rewards: RewardWeights,
    /// Puck half-height used by the terminal NMAC test, ft.
    pub h_p: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        let a = G / 8.0;
        ResponseModel {
            intruder: vec![
                IntruderOutcome { accel: -a, probability: 0.25 },
                IntruderOutcome { accel: 0.0, probability: 0.5 },
                IntruderOutcome { accel: a, probability: 0.25 },
            ],
            rewards: RewardWeights::default(),
            h_p: 100.0,
        }
    }
}

impl ResponseModel {
    pub fn validate(&self) -> Result<()> {
        if self.intruder.is_empty() {
            return Err(Error::InvalidModel("intruder distribution is empty".into()));
        }
        if self
            .intruder
            .iter()
            .any(|o| !o.accel.is_finite() || !(o.probability >= 0.0))
        {
            return Err(Error::InvalidModel("outcomes need finite accel and p >= 0".into()));
        }
        let total: f64 = self.intruder.iter().map(|o| o.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("probabilities sum to {total}")));
        }
        Ok(())
    }
}

/// Rate change at constant `accel` that stops once `limit` is reached.
/// Returns the final rate and the displacement over `dt`.
#[inline]
pub(crate) fn advance(v: f64, accel: f64, limit: f64, dt: f64) -> (f64, f64) {
    if accel == 0.0 || (accel > 0.0 && v >= limit) || (accel < 0.0 && v <= limit) {
        return (v, v * dt);
    }
    let t_reach = (limit - v) / accel;
    if t_reach >= dt {
        let v1 = v + accel * dt;
        (v1, v * dt + 0.5 * accel * dt * dt)
    } else {
        let ramp = v * t_reach + 0.5 * accel * t_reach * t_reach;
        (limit, ramp + limit * (dt - t_reach))
    }
}

/// Ownship acceleration and its stopping rate under advisory `a`.
#[inline]
pub(crate) fn ownship_response(a: Advisory, v_o: f64) -> (f64, f64) {
    let p = a.params();
    match p.vertical() {
        Some((w, v_lo)) if !is_compliant(a, v_o) => (w.value() * p.a_lo, v_lo),
        _ => (0.0, v_o),
    }
}

/// Advance one step of length `epsilon` without the allowability check.
#[inline]
pub(crate) fn step_unchecked(s: &EncounterState, a: Advisory, intruder_accel: f64, epsilon: f64) -> EncounterState {
    let (acc_o, lim_o) = ownship_response(a, s.v_o);
    let (v_o, dh_o) = advance(s.v_o, acc_o, lim_o.clamp(-V_MAX, V_MAX), epsilon);
    let lim_i = if intruder_accel >= 0.0 { V_MAX } else { -V_MAX };
    let (v_i, dh_i) = advance(s.v_i, intruder_accel, lim_i, epsilon);
    EncounterState {
        h: s.h + dh_i - dh_o,
        v_o: v_o.clamp(-V_MAX, V_MAX),
        v_i: v_i.clamp(-V_MAX, V_MAX),
        a_prev: a,
        tau: s.tau - epsilon,
    }
}

pub fn step_dynamics(
    s: &EncounterState,
    a: Advisory,
    intruder_accel: f64,
    epsilon: f64,
) -> Result<EncounterState> {
    if !allowed_advisories(s.a_prev).contains(a) {
        return Err(Error::DisallowedAdvisory {
            prev: s.a_prev,
            advisory: a,
        });
    }
    Ok(step_unchecked(s, a, intruder_accel, epsilon))
}

/// Alerting cost terms, independent of the intruder outcome.
#[inline]
pub(crate) fn alert_cost(w: &RewardWeights, a_prev: Advisory, a: Advisory) -> f64 {
    if a == Advisory::Coc {
        return 0.0;
    }
    let mut r = w.alert;
    if a != a_prev {
        r += w.change;
    }
    if a.is_strengthened() {
        r += w.strengthen;
    }
    r
}

/// Collision term for one realised transition.
#[inline]
pub(crate) fn nmac_cost(model: &ResponseModel, next: &EncounterState) -> f64 {
    if next.tau <= 1e-9 && next.h.abs() <= model.h_p {
        model.rewards.nmac
    } else {
        0.0
    }
}

/// Expected one-step reward of issuing `a` in `s`.
pub fn reward(s: &EncounterState, a: Advisory, model: &ResponseModel, epsilon: f64) -> f64 {
    let collision: f64 = model
        .intruder
        .iter()
        .map(|o| o.probability * nmac_cost(model, &step_unchecked(s, a, o.accel, epsilon)))
        .sum();
    alert_cost(&model.rewards, s.a_prev, a) + collision
}
