//! Browser bindings. Every exported call returns a JSON string; the page
//! draws it on a canvas.

use serde::Serialize;
use vcas_core::domain::{allowed_advisories, Advisory};
use vcas_core::geometry::{
    check_region, linearize_band, nominal_curve, safe_bound, safeable_bounds, Band, GeometryConfig,
    LinearizationMode, LinearStrip, PiecewiseLinear,
};
use vcas_core::policy::{export_policy_slice, solve, GridSpec, QTable, ResponseModel, SliceSpec};
use wasm_bindgen::prelude::*;

const CURVE_STEP: f64 = 0.25;

type Points = Vec<[f64; 2]>;

#[derive(Serialize)]
pub struct Raster {
    pub taus: Vec<f64>,
    pub hs: Vec<f64>,
    /// Advisory names, τ-major.
    pub advisories: Vec<&'static str>,
}

#[derive(Serialize)]
pub struct Outline {
    pub lower: Points,
    pub upper: Points,
}

#[derive(Serialize)]
pub struct Regions {
    pub unsafeable: Outline,
    /// Consecutive point pairs, one per linear piece.
    pub linear: Outline,
    /// Present when the advisory may follow `a_prev`.
    pub excluded: Option<Outline>,
}

#[derive(Serialize)]
pub struct Trajectory {
    pub nominal: Points,
    pub envelope: Points,
}

fn sample(f: impl Fn(f64) -> f64, t0: f64, t1: f64) -> Points {
    let n = ((t1 - t0) / CURVE_STEP).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = (t0 + i as f64 * CURVE_STEP).min(t1);
            [t, f(t)]
        })
        .collect()
}

/// Sample a band over the τ range where it is nonempty.
fn band_outline(band: &Band) -> Outline {
    match band.closing_time() {
        None => Outline { lower: vec![], upper: vec![] },
        Some(t1) => {
            let t0 = band.lower.domain().0;
            Outline { lower: sample(|t| band.lower.eval(t), t0, t1), upper: sample(|t| band.upper.eval(t), t0, t1) }
        }
    }
}

fn strip_outline(strip: &LinearStrip) -> Outline {
    let open = |t: f64| strip.upper.eval(t) >= strip.lower.eval(t);
    // pieces may jump at their ends, so each one is emitted as its own segment
    let segments = |f: &PiecewiseLinear| -> Points {
        f.pieces
            .iter()
            .filter(|p| open(p.t0))
            .flat_map(|p| [[p.t0, p.eval(p.t0)], [p.t1, p.eval(p.t1)]])
            .collect()
    };
    Outline { lower: segments(&strip.lower), upper: segments(&strip.upper) }
}

fn parse_advisory(name: &str) -> Result<Advisory, String> {
    name.parse().map_err(|e: vcas_core::error::Error| e.to_string())
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Holds a solved coarse table so repeated raster requests are cheap.
#[wasm_bindgen]
pub struct Demo {
    table: QTable,
}

impl Demo {
    pub fn solve_coarse() -> Result<Demo, String> {
        let table = solve(&GridSpec::coarse(), &ResponseModel::default()).map_err(|e| e.to_string())?;
        Ok(Demo { table })
    }

    pub fn raster(&self, a_prev: &str, v_o: f64, v_i: f64, n_tau: usize, n_h: usize) -> Result<Raster, String> {
        let spec = SliceSpec {
            v_o,
            v_i,
            a_prev: parse_advisory(a_prev)?,
            h_range: (-1500.0, 1500.0),
            tau_range: (0.0, 40.0),
            resolution: (n_tau, n_h),
        };
        let cells = export_policy_slice(&self.table, &spec).map_err(|e| e.to_string())?;
        let mut taus: Vec<f64> = cells.iter().map(|c| c.tau).collect();
        taus.dedup();
        let hs = cells.iter().take(n_h).map(|c| c.h).collect();
        Ok(Raster { taus, hs, advisories: cells.iter().map(|c| c.advisory.name()).collect() })
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Demo::solve_coarse().map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = policySlice)]
    pub fn policy_slice(&self, a_prev: &str, v_o: f64, v_i: f64, n_tau: usize, n_h: usize) -> Result<String, JsError> {
        self.raster(a_prev, v_o, v_i, n_tau, n_h).and_then(|r| to_json(&r)).map_err(|e| JsError::new(&e))
    }
}

pub fn region_outlines(
    advisory: &str,
    a_prev: &str,
    v_o: (f64, f64),
    seg_len: f64,
    mode: &str,
) -> Result<Regions, String> {
    let adv = parse_advisory(advisory)?;
    let prev = parse_advisory(a_prev)?;
    let mode: LinearizationMode = mode.parse().map_err(|e: vcas_core::error::Error| e.to_string())?;
    let geo = GeometryConfig::default();
    let band = safeable_bounds(adv, v_o, &geo).map_err(|e| e.to_string())?.band;
    let strip = linearize_band(&band, seg_len, mode).map_err(|e| e.to_string())?;
    let excluded = if allowed_advisories(prev).contains(adv) {
        let region = check_region(adv, prev, v_o, &geo).map_err(|e| e.to_string())?;
        Some(band_outline(&region.excluded))
    } else {
        None
    };
    Ok(Regions { unsafeable: band_outline(&band), linear: strip_outline(&strip), excluded })
}

/// Unsafeable band for `advisory`, its linearization, and the positions no
/// follow-up of `a_prev` can save.
#[wasm_bindgen(js_name = regionOutlines)]
pub fn region_outlines_json(
    advisory: &str,
    a_prev: &str,
    v_o_lo: f64,
    v_o_hi: f64,
    seg_len: f64,
    mode: &str,
) -> Result<String, JsError> {
    region_outlines(advisory, a_prev, (v_o_lo, v_o_hi), seg_len, mode)
        .and_then(|r| to_json(&r))
        .map_err(|e| JsError::new(&e))
}

pub fn trajectory(advisory: &str, v_o: f64, h_p: f64, tau_max: f64) -> Result<Trajectory, String> {
    let adv = parse_advisory(advisory)?;
    let curve = nominal_curve(adv, v_o).map_err(|e| e.to_string())?;
    let env = safe_bound(adv, v_o, h_p).map_err(|e| e.to_string())?;
    Ok(Trajectory {
        nominal: sample(|t| curve.eval(t), 0.0, tau_max),
        envelope: sample(|t| env.envelope.eval(t), 0.0, tau_max),
    })
}

/// Nominal ownship altitude under minimal compliance and the worst-case
/// boundary of intruder positions it cannot clear.
#[wasm_bindgen(js_name = nominalTrajectory)]
pub fn trajectory_json(advisory: &str, v_o: f64, h_p: f64, tau_max: f64) -> Result<String, JsError> {
    trajectory(advisory, v_o, h_p, tau_max).and_then(|t| to_json(&t)).map_err(|e| JsError::new(&e))
}
