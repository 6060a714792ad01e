//! Run configuration and its `key = value` file format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Advisory, V_RANGE};
use crate::error::{Error, Result};
use crate::geometry::{GeometryConfig, LinearizationMode, SliceOptions};
use crate::network::TrainConfig;
use crate::policy::{GridSpec, ResponseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    Default,
    Coarse,
}

impl GridPreset {
    pub fn spec(self) -> GridSpec {
        match self {
            GridPreset::Default => GridSpec::default(),
            GridPreset::Coarse => GridSpec::coarse(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub grid: GridPreset,
    pub train: TrainConfig,
    /// Advisory period assumed by the safeable construction, s.
    pub epsilon: f64,
    pub h_p: f64,
    pub tau_max: f64,
    /// Width of each v_O interval, ft/s.
    pub delta_v_o: f64,
    pub seg_len_tau: f64,
    pub linearization: LinearizationMode,
    /// Extra τ cut spacing when slicing.
    pub slice_width: Option<f64>,
    /// Intruder rate fed to every query, ft/s.
    pub v_i: f64,
    /// Required lead of the target output over its competitors.
    pub margin: f64,
    /// Previous advisories to enumerate.
    pub a_prev: Vec<Advisory>,
    /// Cap on the number of queries taken from the enumeration (evenly strided).
    pub max_queries: Option<usize>,
    pub workers: usize,
    /// Fraction of inconclusive queries above which a run fails.
    pub inconclusive_threshold: f64,
    pub table_path: PathBuf,
    pub networks_dir: PathBuf,
    pub run_dir: PathBuf,
    /// Segment lengths swept by the granularity study.
    pub study_seg_lens: Vec<f64>,
    pub study_modes: Vec<LinearizationMode>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: GridPreset::Default,
            train: TrainConfig::default(),
            epsilon: 1.0,
            h_p: 100.0,
            tau_max: 40.0,
            delta_v_o: 2.0,
            seg_len_tau: 0.5,
            linearization: LinearizationMode::Over,
            slice_width: None,
            v_i: 0.0,
            margin: 0.0,
            a_prev: Advisory::ALL.to_vec(),
            max_queries: None,
            workers: 1,
            inconclusive_threshold: 0.001,
            table_path: PathBuf::from("table.vcasq"),
            networks_dir: PathBuf::from("networks"),
            run_dir: PathBuf::from("run"),
            study_seg_lens: vec![0.125, 0.25, 0.5, 1.0, 2.0],
            study_modes: vec![LinearizationMode::Over, LinearizationMode::Under],
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{key}` expects a number, got `{v}`"))
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> std::result::Result<Option<T>, String> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("`{key}`: bad list entry `{s}`")))
        .collect()
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 26] = [
        "grid",
        "hidden",
        "epochs",
        "batch_size",
        "learning_rate",
        "lr_decay",
        "lambda",
        "seed",
        "epsilon",
        "h_p",
        "tau_max",
        "delta_v_o",
        "seg_len_tau",
        "linearization",
        "slice_width",
        "v_i",
        "margin",
        "a_prev",
        "max_queries",
        "workers",
        "inconclusive_threshold",
        "table_path",
        "networks_dir",
        "run_dir",
        "study_seg_lens",
        "study_modes",
    ];

    /// Apply one setting; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "grid" => {
                self.grid = match v {
                    "default" => GridPreset::Default,
                    "coarse" => GridPreset::Coarse,
                    _ => return Err(format!("`grid` must be default or coarse, got `{v}`")),
                }
            }
            "hidden" => self.train.hidden = parse_list(key, v)?,
            "epochs" => self.train.epochs = parse_num(key, v)?,
            "batch_size" => self.train.batch_size = parse_num(key, v)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "lr_decay" => self.train.lr_decay = parse_num(key, v)?,
            "lambda" => self.train.lambda = parse_num(key, v)?,
            "seed" => self.train.seed = parse_num(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "h_p" => self.h_p = parse_num(key, v)?,
            "tau_max" => self.tau_max = parse_num(key, v)?,
            "delta_v_o" => self.delta_v_o = parse_num(key, v)?,
            "seg_len_tau" => self.seg_len_tau = parse_num(key, v)?,
            "linearization" => self.linearization = v.parse().map_err(|e: Error| e.to_string())?,
            "slice_width" => self.slice_width = parse_opt(key, v)?,
            "v_i" => self.v_i = parse_num(key, v)?,
            "margin" => self.margin = parse_num(key, v)?,
            "a_prev" => {
                self.a_prev = if v.eq_ignore_ascii_case("all") {
                    Advisory::ALL.to_vec()
                } else {
                    parse_list(key, v)?
                }
            }
            "max_queries" => self.max_queries = parse_opt(key, v)?,
            "workers" => self.workers = parse_num(key, v)?,
            "inconclusive_threshold" => self.inconclusive_threshold = parse_num(key, v)?,
            "table_path" => self.table_path = PathBuf::from(v),
            "networks_dir" => self.networks_dir = PathBuf::from(v),
            "run_dir" => self.run_dir = PathBuf::from(v),
            "study_seg_lens" => self.study_seg_lens = parse_list(key, v)?,
            "study_modes" => self.study_modes = parse_list(key, v).map_err(|_| format!("`{key}`: bad mode list `{v}`"))?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|message| Error::Config { line: i + 1, message })?;
        }
        self.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config { line: 0, message: m });
        let span = V_RANGE.1 - V_RANGE.0;
        let n = span / self.delta_v_o;
        if !(self.delta_v_o > 0.0) || (n - n.round()).abs() > 1e-9 {
            return bad(format!("delta_v_o = {} does not divide the {span} ft/s span", self.delta_v_o));
        }
        if !(self.seg_len_tau > 0.0) || !(self.epsilon > 0.0) || !(self.h_p > 0.0) || !(self.tau_max > 0.0) {
            return bad("seg_len_tau, epsilon, h_p and tau_max must be positive".into());
        }
        if self.slice_width.is_some_and(|w| !(w > 0.0)) {
            return bad("slice_width must be positive".into());
        }
        if !(V_RANGE.0..=V_RANGE.1).contains(&self.v_i) {
            return bad(format!("v_i = {} outside the rate range", self.v_i));
        }
        if self.study_seg_lens.iter().any(|l| !(*l > 0.0)) {
            return bad("study_seg_lens must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.a_prev.is_empty() {
            return bad("a_prev selects no networks".into());
        }
        if !self.margin.is_finite() || !(0.0..=1.0).contains(&self.inconclusive_threshold) {
            return bad("margin must be finite and inconclusive_threshold in [0, 1]".into());
        }
        self.train.validate()
    }

    pub fn num_v_o_intervals(&self) -> usize {
        ((V_RANGE.1 - V_RANGE.0) / self.delta_v_o).round() as usize
    }

    pub fn v_o_interval(&self, k: usize) -> (f64, f64) {
        let lo = V_RANGE.0 + k as f64 * self.delta_v_o;
        let hi = if k + 1 == self.num_v_o_intervals() { V_RANGE.1 } else { lo + self.delta_v_o };
        (lo, hi)
    }

    pub fn geometry(&self) -> GeometryConfig {
        GeometryConfig { h_p: self.h_p, epsilon: self.epsilon, tau_max: self.tau_max }
    }

    pub fn slice_options(&self) -> SliceOptions {
        SliceOptions { max_width: self.slice_width }
    }

    pub fn response_model(&self) -> ResponseModel {
        ResponseModel { h_p: self.h_p, ..ResponseModel::default() }
    }

    /// Config in its own file format; `parse(to_text())` reproduces it.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let join = |v: Vec<String>| v.join(",");
        let t = &self.train;
        let grid = match self.grid {
            GridPreset::Default => "default",
            GridPreset::Coarse => "coarse",
        };
        let lines: [(&str, String); 26] = [
            ("grid", grid.into()),
            ("hidden", join(t.hidden.iter().map(|h| h.to_string()).collect())),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("lr_decay", t.lr_decay.to_string()),
            ("lambda", t.lambda.to_string()),
            ("seed", t.seed.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("h_p", self.h_p.to_string()),
            ("tau_max", self.tau_max.to_string()),
            ("delta_v_o", self.delta_v_o.to_string()),
            ("seg_len_tau", self.seg_len_tau.to_string()),
            ("linearization", self.linearization.to_string()),
            ("slice_width", opt(self.slice_width.map(|w| w.to_string()))),
            ("v_i", self.v_i.to_string()),
            ("margin", self.margin.to_string()),
            ("a_prev", join(self.a_prev.iter().map(|a| a.to_string()).collect())),
            ("max_queries", opt(self.max_queries.map(|m| m.to_string()))),
            ("workers", self.workers.to_string()),
            ("inconclusive_threshold", self.inconclusive_threshold.to_string()),
            ("table_path", self.table_path.display().to_string()),
            ("networks_dir", self.networks_dir.display().to_string()),
            ("run_dir", self.run_dir.display().to_string()),
            ("study_seg_lens", join(self.study_seg_lens.iter().map(|l| l.to_string()).collect())),
            ("study_modes", join(self.study_modes.iter().map(|m| m.to_string()).collect())),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
