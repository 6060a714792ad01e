//! Reports derived from a finished batch: counterexample table, witness
//! heatmaps, linearization granularity sweep.

use serde::{Deserialize, Serialize};

use super::{enumerate_slices, run_batch, Networks, PipelineConfig, RunReport};
use crate::domain::{Advisory, NUM_ADVISORIES};
use crate::error::{Error, Result};
use crate::geometry::LinearizationMode;

/// 9×9 CSV, rows = previous advisory, columns = current advisory, `N/A`
/// where the pair is not allowed.
pub fn report_table(report: &RunReport) -> String {
    let mut s = String::from("a_prev");
    for a in Advisory::ALL {
        s.push(',');
        s.push_str(a.name());
    }
    s.push('\n');
    for p in Advisory::ALL {
        s.push_str(p.name());
        for cell in report.counts[p.index()] {
            s.push(',');
            match cell {
                Some(n) => s.push_str(&n.to_string()),
                None => s.push_str("N/A"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_table_csv(text: &str) -> Result<[[Option<usize>; NUM_ADVISORIES]; NUM_ADVISORIES]> {
    let bad = |m: String| Error::Parse(format!("report table: {m}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty".into()))?.split(',').collect();
    let expected: Vec<&str> = std::iter::once("a_prev").chain(Advisory::ALL.iter().map(|a| a.name())).collect();
    if header != expected {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = [[None; NUM_ADVISORIES]; NUM_ADVISORIES];
    let mut seen = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != NUM_ADVISORIES + 1 {
            return Err(bad(format!("row `{line}` has {} cells", cells.len())));
        }
        let p: Advisory = cells[0].parse()?;
        for (c, v) in cells[1..].iter().enumerate() {
            out[p.index()][c] = match v.trim() {
                "N/A" => None,
                n => Some(n.parse().map_err(|_| bad(format!("bad count `{n}`")))?),
            };
        }
        seen += 1;
    }
    if seen != NUM_ADVISORIES {
        return Err(bad(format!("{seen} rows")));
    }
    Ok(out)
}

/// Fixed-width text rendering of the table with row and column totals.
pub fn render_table(report: &RunReport) -> String {
    let mut s = format!("{:>9}", "");
    for a in Advisory::ALL {
        s.push_str(&format!("{:>9}", a.name()));
    }
    s.push_str(&format!("{:>9}\n", "total"));
    for p in Advisory::ALL {
        s.push_str(&format!("{:>9}", p.name()));
        let mut row = 0;
        for cell in report.counts[p.index()] {
            match cell {
                Some(n) => {
                    row += n;
                    s.push_str(&format!("{n:>9}"));
                }
                None => s.push_str(&format!("{:>9}", "N/A")),
            }
        }
        s.push_str(&format!("{row:>9}\n"));
    }
    s.push_str(&format!("{:>9}", "total"));
    for c in report.column_totals() {
        s.push_str(&format!("{c:>9}"));
    }
    s.push_str(&format!("{:>9}\n", report.total_counterexamples()));
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapBins {
    pub n_tau: usize,
    pub n_h: usize,
    pub tau_range: (f64, f64),
    pub h_range: (f64, f64),
}

impl Default for HeatmapBins {
    fn default() -> Self {
        HeatmapBins { n_tau: 80, n_h: 80, tau_range: (0.0, 40.0), h_range: (-1000.0, 1000.0) }
    }
}

impl HeatmapBins {
    /// Bin of a point; points beyond the extent land in the edge bins.
    pub fn bin(&self, tau: f64, h: f64) -> (usize, usize) {
        let idx = |x: f64, (lo, hi): (f64, f64), n: usize| {
            let f = ((x - lo) / (hi - lo) * n as f64).floor();
            f.clamp(0.0, (n - 1) as f64) as usize
        };
        (idx(tau, self.tau_range, self.n_tau), idx(h, self.h_range, self.n_h))
    }

    pub fn tau_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.tau_range.1 - self.tau_range.0) / self.n_tau as f64;
        (self.tau_range.0 + i as f64 * w, self.tau_range.0 + (i + 1) as f64 * w)
    }

    pub fn h_edges(&self, j: usize) -> (f64, f64) {
        let w = (self.h_range.1 - self.h_range.0) / self.n_h as f64;
        (self.h_range.0 + j as f64 * w, self.h_range.0 + (j + 1) as f64 * w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub a_prev: Advisory,
    pub bins: HeatmapBins,
    /// Row-major by τ bin.
    pub counts: Vec<usize>,
}

impl Heatmap {
    pub fn get(&self, tau_bin: usize, h_bin: usize) -> usize {
        self.counts[tau_bin * self.bins.n_h + h_bin]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `tau_bin,h_bin,count` for every bin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_bin,h_bin,count\n");
        for i in 0..self.bins.n_tau {
            for j in 0..self.bins.n_h {
                s.push_str(&format!("{i},{j},{}\n", self.get(i, j)));
            }
        }
        s
    }
}

/// Histogram of witness (τ, h) positions for one previous advisory.
pub fn report_heatmap(report: &RunReport, a_prev: Advisory, bins: HeatmapBins) -> Heatmap {
    let mut counts = vec![0; bins.n_tau * bins.n_h];
    for w in report.witnesses.iter().filter(|w| w.a_prev == a_prev) {
        let (i, j) = bins.bin(w.tau, w.h);
        counts[i * bins.n_h + j] += 1;
    }
    Heatmap { a_prev, bins, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityRow {
    pub seg_len: f64,
    pub mode: LinearizationMode,
    pub queries: usize,
    pub counterexamples: usize,
    pub inconclusive: usize,
    pub wall_ms: f64,
}

impl GranularityRow {
    pub fn csv(rows: &[GranularityRow]) -> String {
        let mut s = String::from("seg_len,mode,queries,counterexamples,inconclusive,wall_ms\n");
        for r in rows {
            s.push_str(&format!(
                "{},{},{},{},{},{:.0}\n",
                r.seg_len, r.mode, r.queries, r.counterexamples, r.inconclusive, r.wall_ms
            ));
        }
        s
    }
}

/// Rerun the COC enumeration per (seg_len, mode). Every setting uses the same
/// sub-slice width: the configured one, else the longest swept segment.
pub fn granularity_study(
    cfg: &PipelineConfig,
    nets: &Networks,
    seg_lens: &[f64],
    modes: &[LinearizationMode],
) -> Result<Vec<GranularityRow>> {
    let mut cfg = cfg.clone();
    cfg.a_prev = vec![Advisory::Coc];
    let widest = seg_lens.iter().copied().fold(f64::NAN, f64::max);
    cfg.slice_width = cfg.slice_width.or((widest > 0.0).then_some(widest));
    nets.get(Advisory::Coc)?;
    let mut rows = Vec::new();
    for &seg in seg_lens {
        for &mode in modes {
            let slices = enumerate_slices(&cfg, seg, mode)?;
            let report = run_batch(&slices, nets, cfg.workers, cfg.margin)?;
            rows.push(GranularityRow {
                seg_len: seg,
                mode,
                queries: report.total_queries,
                counterexamples: report.total_counterexamples(),
                inconclusive: report.inconclusive.len(),
                wall_ms: report.wall_ms,
            });
        }
    }
    Ok(rows)
}
