//! End-to-end orchestration: enumerate verification queries from the
//! geometry, decide them in parallel, aggregate into reports.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{GridPreset, PipelineConfig};
pub use report::{
    granularity_study, parse_table_csv, render_table, report_heatmap, report_table, GranularityRow, Heatmap,
    HeatmapBins,
};

use crate::domain::{allowed_advisories, Advisory, NUM_ADVISORIES, TAU_CLAMP};
use crate::error::{Error, Result};
use crate::geometry::{check_region, linearize, slice_queries, LinearizationMode, QuerySlice};
use crate::network::{self, ReluNetwork};
use crate::verifier::{decide, replay_check, Cmp, LinearConstraint, LinearQuery, SearchStats, Verdict};

/// One network per previous advisory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Networks {
    nets: BTreeMap<Advisory, ReluNetwork>,
}

impl Networks {
    pub fn new() -> Networks {
        Networks::default()
    }

    pub fn insert(&mut self, a_prev: Advisory, net: ReluNetwork) {
        self.nets.insert(a_prev, net);
    }

    pub fn get(&self, a_prev: Advisory) -> Result<&ReluNetwork> {
        self.nets.get(&a_prev).ok_or(Error::MissingNetwork(a_prev))
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn file_name(a_prev: Advisory) -> String {
        format!("net_{a_prev}.nnet")
    }

    /// Load the networks for `a_prevs` from `dir`; a missing file names its advisory.
    pub fn load_dir(dir: impl AsRef<Path>, a_prevs: &[Advisory]) -> Result<Networks> {
        let mut out = Networks::new();
        for &a in a_prevs {
            let path = dir.as_ref().join(Networks::file_name(a));
            if !path.exists() {
                return Err(Error::MissingNetwork(a));
            }
            out.insert(a, network::load(&path)?);
        }
        Ok(out)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (a, net) in &self.nets {
            network::save(net, dir.join(Networks::file_name(*a)))?;
        }
        Ok(())
    }
}

/// Every allowed (a_prev, advisory) pair for the given previous advisories.
pub fn advisory_pairs(a_prevs: &[Advisory]) -> Vec<(Advisory, Advisory)> {
    let mut pairs = Vec::new();
    for &p in a_prevs {
        for a in allowed_advisories(p).iter() {
            pairs.push((p, a));
        }
    }
    pairs
}

/// Slices for every (a_prev, advisory, v_O interval), ids dense in that order.
pub fn enumerate_slices(cfg: &PipelineConfig, seg_len: f64, mode: LinearizationMode) -> Result<Vec<QuerySlice>> {
    cfg.validate()?;
    let geo = cfg.geometry();
    let opts = cfg.slice_options();
    let jobs: Vec<(Advisory, Advisory, usize)> = advisory_pairs(&cfg.a_prev)
        .into_iter()
        .flat_map(|(p, a)| (0..cfg.num_v_o_intervals()).map(move |k| (p, a, k)))
        .collect();
    let groups: Vec<Vec<QuerySlice>> = jobs
        .par_iter()
        .map(|&(p, a, k)| {
            let v_o = cfg.v_o_interval(k);
            let region = check_region(a, p, v_o, &geo)?;
            let lin = linearize(&region, seg_len, mode)?;
            slice_queries(&lin, v_o, cfg.v_i, &opts, 0)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<QuerySlice> = groups.into_iter().flatten().collect();
    for (i, s) in out.iter_mut().enumerate() {
        s.id = i;
    }
    if let Some(cap) = cfg.max_queries {
        out = subsample(out, cap);
    }
    Ok(out)
}

/// Evenly strided subset of at most `cap` slices, ids renumbered.
pub fn subsample(slices: Vec<QuerySlice>, cap: usize) -> Vec<QuerySlice> {
    let n = slices.len();
    if cap >= n {
        return slices;
    }
    let mut out: Vec<QuerySlice> = (0..cap).map(|i| slices[i * n / cap].clone()).collect();
    for (i, s) in out.iter_mut().enumerate() {
        s.id = i;
    }
    out
}

/// Queries for the configured linearization, checked against the loaded networks.
pub fn enumerate_queries(cfg: &PipelineConfig, nets: &Networks) -> Result<Vec<QuerySlice>> {
    for &a in &cfg.a_prev {
        nets.get(a)?;
    }
    enumerate_slices(cfg, cfg.seg_len_tau, cfg.linearization)
}

/// Network inputs are (h, v_O, v_I, τ). Slices ending before the clamp feed
/// τ = 6 and cover the slice's full h extent.
pub fn query_for_slice(slice: &QuerySlice, margin: f64) -> LinearQuery {
    let (v_lo, v_hi) = slice.v_o;
    let (t_lo, t_hi, constraints) = if slice.tau_pinned {
        (TAU_CLAMP, TAU_CLAMP, vec![])
    } else {
        let rows = vec![
            LinearConstraint {
                coeffs: vec![1.0, 0.0, 0.0, -slice.lower.slope],
                relation: Cmp::Ge,
                rhs: slice.lower.intercept,
            },
            LinearConstraint {
                coeffs: vec![1.0, 0.0, 0.0, -slice.upper.slope],
                relation: Cmp::Le,
                rhs: slice.upper.intercept,
            },
        ];
        (slice.tau_lo, slice.tau_hi, rows)
    };
    let mut competitors: Vec<usize> = allowed_advisories(slice.a_prev).iter().map(|a| a.index()).collect();
    competitors.retain(|&c| c != slice.advisory.index());
    LinearQuery {
        lo: vec![slice.h_lo, v_lo, slice.v_i, t_lo],
        hi: vec![slice.h_hi, v_hi, slice.v_i, t_hi],
        constraints,
        target: slice.advisory.index(),
        competitors,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStatus {
    Sat,
    Unsat,
    Inconclusive,
}

/// A counterexample located in its slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub query_id: usize,
    pub a_prev: Advisory,
    pub advisory: Advisory,
    /// Network input (h, v_O, v_I, τ fed to the network).
    pub input: Vec<f64>,
    /// Encounter τ inside the slice; differs from the input τ for pinned slices.
    pub tau: f64,
    pub h: f64,
    pub margin: f64,
    pub slice: QuerySlice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: usize,
    pub a_prev: Advisory,
    pub advisory: Advisory,
    pub status: QueryStatus,
    pub witness: Option<Vec<f64>>,
    pub message: Option<String>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Counterexamples per (a_prev, advisory); `None` where the pair is not allowed.
    pub counts: [[Option<usize>; NUM_ADVISORIES]; NUM_ADVISORIES],
    pub total_queries: usize,
    pub sat: usize,
    pub unsat: usize,
    pub inconclusive: Vec<QueryRecord>,
    pub witnesses: Vec<Witness>,
    pub records: Vec<QueryRecord>,
    pub nodes: usize,
    pub lp_calls: usize,
    pub wall_ms: f64,
}

impl RunReport {
    pub fn empty() -> RunReport {
        let mut counts = [[None; NUM_ADVISORIES]; NUM_ADVISORIES];
        for p in Advisory::ALL {
            for a in allowed_advisories(p).iter() {
                counts[p.index()][a.index()] = Some(0);
            }
        }
        RunReport {
            counts,
            total_queries: 0,
            sat: 0,
            unsat: 0,
            inconclusive: vec![],
            witnesses: vec![],
            records: vec![],
            nodes: 0,
            lp_calls: 0,
            wall_ms: 0.0,
        }
    }

    pub fn sat_rate(&self) -> f64 {
        if self.total_queries == 0 {
            0.0
        } else {
            self.sat as f64 / self.total_queries as f64
        }
    }

    pub fn total_counterexamples(&self) -> usize {
        self.counts.iter().flatten().flatten().sum()
    }

    /// Counterexamples per current advisory, summed over previous advisories.
    pub fn column_totals(&self) -> [usize; NUM_ADVISORIES] {
        let mut out = [0; NUM_ADVISORIES];
        for row in &self.counts {
            for (c, v) in row.iter().enumerate() {
                out[c] += v.unwrap_or(0);
            }
        }
        out
    }

    pub fn inconclusive_fraction(&self) -> f64 {
        if self.total_queries == 0 {
            0.0
        } else {
            self.inconclusive.len() as f64 / self.total_queries as f64
        }
    }

    /// Same report with every timing field zeroed, for comparisons.
    pub fn without_timings(&self) -> RunReport {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        for rec in r.records.iter_mut().chain(r.inconclusive.iter_mut()) {
            rec.stats.wall_ms = 0.0;
        }
        r
    }
}

/// Slice membership with the replay tolerance on every edge.
pub fn inside_slice(s: &QuerySlice, tau: f64, h: f64) -> bool {
    let tol = |v: f64| 1e-6 * (1.0 + v.abs());
    tau >= s.tau_lo - tol(s.tau_lo)
        && tau <= s.tau_hi + tol(s.tau_hi)
        && h >= s.h_lo - tol(s.h_lo)
        && h <= s.h_hi + tol(s.h_hi)
        && h >= s.lower.eval(tau) - tol(h)
        && h <= s.upper.eval(tau) + tol(h)
}

fn run_one(slice: &QuerySlice, nets: &Networks, margin: f64) -> (QueryRecord, Option<Witness>) {
    let mut rec = QueryRecord {
        id: slice.id,
        a_prev: slice.a_prev,
        advisory: slice.advisory,
        status: QueryStatus::Inconclusive,
        witness: None,
        message: None,
        stats: SearchStats::default(),
    };
    let net = match nets.get(slice.a_prev) {
        Ok(n) => n,
        Err(e) => {
            rec.message = Some(e.to_string());
            return (rec, None);
        }
    };
    let q = query_for_slice(slice, margin);
    match decide(net, &q) {
        Ok(r) => {
            rec.stats = r.stats;
            match (r.verdict, r.witness) {
                (Verdict::Unsat, _) => rec.status = QueryStatus::Unsat,
                (Verdict::Sat, Some(x)) => {
                    // re-check independently before counting
                    let (h, t_in) = (x[0], x[3]);
                    let tau = if slice.tau_pinned { slice.tau_for(h) } else { Some(t_in) };
                    let located = tau.filter(|t| inside_slice(slice, *t, h));
                    match (replay_check(net, &q, &x), located) {
                        (true, Some(tau)) => {
                            rec.status = QueryStatus::Sat;
                            rec.witness = Some(x.clone());
                            let w = Witness {
                                query_id: slice.id,
                                a_prev: slice.a_prev,
                                advisory: slice.advisory,
                                margin: r.witness_margin.unwrap_or(f64::NAN),
                                input: x,
                                tau,
                                h,
                                slice: slice.clone(),
                            };
                            return (rec, Some(w));
                        }
                        _ => rec.message = Some("witness failed the batch re-check".into()),
                    }
                }
                (Verdict::Sat, None) => rec.message = Some("SAT without witness".into()),
            }
        }
        Err(e) => rec.message = Some(e.to_string()),
    }
    (rec, None)
}

/// Decide every query on `workers` threads; the report depends only on the inputs.
pub fn run_batch(queries: &[QuerySlice], nets: &Networks, workers: usize, margin: f64) -> Result<RunReport> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidQuery(format!("thread pool: {e}")))?;
    let mut results: Vec<(QueryRecord, Option<Witness>)> =
        pool.install(|| queries.par_iter().map(|s| run_one(s, nets, margin)).collect());
    results.sort_by_key(|(r, _)| r.id);

    let mut report = RunReport::empty();
    report.total_queries = results.len();
    for (rec, w) in results {
        report.nodes += rec.stats.nodes;
        report.lp_calls += rec.stats.lp_calls;
        match rec.status {
            QueryStatus::Sat => {
                report.sat += 1;
                let cell = &mut report.counts[rec.a_prev.index()][rec.advisory.index()];
                *cell = Some(cell.unwrap_or(0) + 1);
            }
            QueryStatus::Unsat => report.unsat += 1,
            QueryStatus::Inconclusive => report.inconclusive.push(rec.clone()),
        }
        if let Some(w) = w {
            report.witnesses.push(w);
        }
        report.records.push(rec);
    }
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Write `report.csv`, one `heatmap_<a_prev>.csv` per previous advisory,
/// `witnesses.jsonl`, `results.jsonl`, `report.json` and `run_meta.json` under `dir`.
pub fn write_run_dir(dir: impl AsRef<Path>, report: &RunReport, meta: &serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("report.csv", report_table(report))?;
    for a in Advisory::ALL {
        if report.records.iter().any(|r| r.a_prev == a) {
            let h = report_heatmap(report, a, HeatmapBins::default());
            write(&format!("heatmap_{a}.csv"), h.to_csv())?;
        }
    }
    let mut lines = String::new();
    for w in &report.witnesses {
        lines.push_str(&serde_json::to_string(w)?);
        lines.push('\n');
    }
    write("witnesses.jsonl", lines)?;
    let mut lines = String::new();
    for r in &report.records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    write("results.jsonl", lines)?;
    write("report.json", serde_json::to_string(report)?)?;
    write("run_meta.json", serde_json::to_string_pretty(meta)?)
}

/// Report saved by [`write_run_dir`].
pub fn load_report(dir: impl AsRef<Path>) -> Result<RunReport> {
    let p = dir.as_ref().join("report.json");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests;
