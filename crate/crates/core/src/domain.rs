//! Shared vocabulary: advisories, encounter state, puck constants.
//!
//! All quantities are in feet and seconds. Vertical rates given in ft/min by
//! the advisory table are converted to ft/s when the parameters are built.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard sea-level gravitational acceleration, ft/s².
pub const G: f64 = 32.17405;

pub const H_RANGE: (f64, f64) = (-8000.0, 8000.0);
pub const V_RANGE: (f64, f64) = (-100.0, 100.0);
pub const TAU_RANGE: (f64, f64) = (0.0, 40.0);
/// Vertical rate cap applied to every trajectory, ft/s.
pub const V_MAX: f64 = 100.0;
/// Below this time-to-loss-of-separation the policy is queried at this value.
pub const TAU_CLAMP: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
#[repr(u8)]
pub enum Advisory {
    Coc = 0,
    Dnc = 1,
    Dnd = 2,
    Des1500 = 3,
    Cl1500 = 4,
    Sdes1500 = 5,
    Scl1500 = 6,
    Sdes2500 = 7,
    Scl2500 = 8,
}

pub const NUM_ADVISORIES: usize = 9;

impl Advisory {
    pub const ALL: [Advisory; NUM_ADVISORIES] = [
        Advisory::Coc,
        Advisory::Dnc,
        Advisory::Dnd,
        Advisory::Des1500,
        Advisory::Cl1500,
        Advisory::Sdes1500,
        Advisory::Scl1500,
        Advisory::Sdes2500,
        Advisory::Scl2500,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Advisory> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Advisory::Coc => "COC",
            Advisory::Dnc => "DNC",
            Advisory::Dnd => "DND",
            Advisory::Des1500 => "DES1500",
            Advisory::Cl1500 => "CL1500",
            Advisory::Sdes1500 => "SDES1500",
            Advisory::Scl1500 => "SCL1500",
            Advisory::Sdes2500 => "SDES2500",
            Advisory::Scl2500 => "SCL2500",
        }
    }

    pub fn params(self) -> AdvisoryParams {
        advisory_params(self)
    }

    pub fn is_strengthened(self) -> bool {
        self.index() >= Advisory::Sdes1500.index()
    }
}

impl fmt::Display for Advisory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Advisory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Advisory::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown advisory `{s}`")))
    }
}

/// Direction of the vertical-rate constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Down,
    Up,
}

impl Sign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Down => -1.0,
            Sign::Up => 1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Down => Sign::Up,
            Sign::Up => Sign::Down,
        }
    }
}

/// One row of the advisory table, in internal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvisoryParams {
    pub advisory: Advisory,
    pub w: Option<Sign>,
    /// Target vertical rate, ft/s.
    pub v_lo: Option<f64>,
    /// Compliance acceleration magnitude, ft/s².
    pub a_lo: f64,
}

impl AdvisoryParams {
    /// Sign and target rate for every advisory except COC.
    pub fn vertical(&self) -> Option<(Sign, f64)> {
        Some((self.w?, self.v_lo?))
    }
}

const FPM: f64 = 1.0 / 60.0;

pub fn advisory_params(id: Advisory) -> AdvisoryParams {
    use Advisory::*;
    let (w, v_lo_fpm, a_lo) = match id {
        Coc => (None, None, G / 4.0),
        Dnc => (Some(Sign::Down), Some(0.0), G / 4.0),
        Dnd => (Some(Sign::Up), Some(0.0), G / 4.0),
        Des1500 => (Some(Sign::Down), Some(-1500.0), G / 4.0),
        Cl1500 => (Some(Sign::Up), Some(1500.0), G / 4.0),
        Sdes1500 => (Some(Sign::Down), Some(-1500.0), G / 3.0),
        Scl1500 => (Some(Sign::Up), Some(1500.0), G / 3.0),
        Sdes2500 => (Some(Sign::Down), Some(-2500.0), G / 3.0),
        Scl2500 => (Some(Sign::Up), Some(2500.0), G / 3.0),
    };
    AdvisoryParams {
        advisory: id,
        w,
        v_lo: v_lo_fpm.map(|v: f64| v * FPM),
        a_lo,
    }
}

/// Compact set of advisories as a 9-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AdvisorySet(u16);

impl AdvisorySet {
    pub const EMPTY: AdvisorySet = AdvisorySet(0);
    pub const FULL: AdvisorySet = AdvisorySet((1 << NUM_ADVISORIES) - 1);

    pub fn from_bits(bits: u16) -> AdvisorySet {
        AdvisorySet(bits & Self::FULL.0)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, a: Advisory) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn insert(&mut self, a: Advisory) {
        self.0 |= 1 << a.index();
    }

    pub fn remove(&mut self, a: Advisory) {
        self.0 &= !(1 << a.index());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: AdvisorySet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in enum order.
    pub fn iter(self) -> impl Iterator<Item = Advisory> {
        Advisory::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Advisory> for AdvisorySet {
    fn from_iter<I: IntoIterator<Item = Advisory>>(iter: I) -> Self {
        let mut set = AdvisorySet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}

/// Advisories that may follow `a_prev`.
pub fn allowed_advisories(a_prev: Advisory) -> AdvisorySet {
    use Advisory::*;
    let base: AdvisorySet = [Coc, Dnc, Dnd, Des1500, Cl1500].into_iter().collect();
    match a_prev {
        Coc | Dnc | Dnd => base,
        Des1500 | Cl1500 => AdvisorySet(base.0 | (1 << Sdes1500 as u16) | (1 << Scl1500 as u16)),
        Sdes1500 | Scl1500 | Sdes2500 | Scl2500 => AdvisorySet::FULL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuckConstants {
    /// Half-height, ft.
    pub h_p: f64,
    /// Radius, ft.
    pub r_p: f64,
    pub g: f64,
    /// Advisory period, s.
    pub epsilon: f64,
}

impl Default for PuckConstants {
    fn default() -> Self {
        PuckConstants {
            h_p: 100.0,
            r_p: 500.0,
            g: G,
            epsilon: 1.0,
        }
    }
}

impl PuckConstants {
    /// True when the intruder is inside the (closed) puck.
    pub fn in_puck(&self, h_rel: f64, r: f64) -> bool {
        h_rel.abs() <= self.h_p && r <= self.r_p
    }

    /// Time to loss of horizontal separation.
    pub fn tau_of(&self, r: f64, r_v: f64) -> Result<f64> {
        if !(r_v > 0.0) {
            return Err(Error::NonPositiveClosureRate(r_v));
        }
        Ok((r - self.r_p) / r_v)
    }
}

pub fn in_puck(h_rel: f64, r: f64) -> bool {
    PuckConstants::default().in_puck(h_rel, r)
}

pub fn tau_of(r: f64, r_v: f64) -> Result<f64> {
    PuckConstants::default().tau_of(r, r_v)
}

/// Whether vertical rate `v` lies in the advisory's allowed range.
pub fn is_compliant(adv: Advisory, v: f64) -> bool {
    match adv.params().vertical() {
        None => true,
        Some((Sign::Up, v_lo)) => v >= v_lo,
        Some((Sign::Down, v_lo)) => v <= v_lo,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncounterState {
    /// Intruder altitude relative to ownship, ft.
    pub h: f64,
    /// Ownship vertical rate, ft/s.
    pub v_o: f64,
    /// Intruder vertical rate, ft/s.
    pub v_i: f64,
    pub a_prev: Advisory,
    /// Time to loss of horizontal separation, s.
    pub tau: f64,
}

impl EncounterState {
    pub fn new(h: f64, v_o: f64, v_i: f64, a_prev: Advisory, tau: f64) -> Self {
        EncounterState {
            h,
            v_o,
            v_i,
            a_prev,
            tau,
        }
    }

    pub fn in_range(&self) -> bool {
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        within(self.h, H_RANGE)
            && within(self.v_o, V_RANGE)
            && within(self.v_i, V_RANGE)
            && within(self.tau, TAU_RANGE)
    }

    /// Network input vector (h, v_O, v_I, τ).
    pub fn features(&self) -> [f64; 4] {
        [self.h, self.v_o, self.v_i, self.tau]
    }
}
