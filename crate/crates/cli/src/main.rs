//! `vcas`: generate the policy, train networks, build regions, verify, report.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vcas_core::domain::{allowed_advisories, Advisory, EncounterState};
use vcas_core::geometry::{check_region, linearize, safeable_bounds, slice_queries, QuerySlice};
use vcas_core::network::{self, argmax_advisory, export_network_slice, grid_agreement};
use vcas_core::pipeline::{
    enumerate_queries, granularity_study, load_report, render_table, report_heatmap, report_table, run_batch,
    write_run_dir, GranularityRow, HeatmapBins, Networks, PipelineConfig, RunReport,
};
use vcas_core::policy::{bellman_residual, export_policy_slice, load_table, save_table, slice_csv, solve, SliceSpec};
use vcas_core::verifier::SAMPLE_SEED;

const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "vcas", version, about = "Vertical collision-avoidance policy, compression and verification")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Group,
}

#[derive(Subcommand)]
enum Group {
    /// Advisory table: solve and export
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Compressed networks: train and evaluate
    #[command(subcommand)]
    Nn(NnCmd),
    /// Safeable and check regions in (τ, h)
    #[command(subcommand)]
    Regions(RegionsCmd),
    /// Exact verification of query slices
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Tables and heatmaps of a finished run
    #[command(subcommand)]
    Report(ReportCmd),
    /// Parameter sweeps
    #[command(subcommand)]
    Study(StudyCmd),
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Solve the MDP and write the table.
    Solve {
        /// Also compute the Bellman residual of the result.
        #[arg(long)]
        check: bool,
    },
    /// Raster the table (or a network) policy over (τ, h) as CSV.
    Slice(SliceArgs),
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long, default_value = "COC")]
    a_prev: Advisory,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v_o: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v_i: f64,
    #[arg(long, default_value_t = -1000.0, allow_negative_numbers = true)]
    h_lo: f64,
    #[arg(long, default_value_t = 1000.0, allow_negative_numbers = true)]
    h_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    tau_lo: f64,
    #[arg(long, default_value_t = 40.0)]
    tau_hi: f64,
    #[arg(long, default_value_t = 41)]
    n_tau: usize,
    #[arg(long, default_value_t = 81)]
    n_h: usize,
    /// Use the trained network for `a_prev` instead of the table.
    #[arg(long)]
    network: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NnCmd {
    /// Train one network per previous advisory in the config's `a_prev` list.
    Train,
    /// Evaluate a network at one input, or its grid agreement with the table.
    Eval {
        #[arg(long)]
        a_prev: Advisory,
        /// `h,v_o,v_i,tau`
        #[arg(long, allow_hyphen_values = true)]
        input: Option<String>,
    },
}

#[derive(Subcommand)]
enum RegionsCmd {
    /// Print a region for one (a_prev, advisory, v_O interval) as JSON.
    Build {
        #[arg(long)]
        advisory: Advisory,
        #[arg(long, default_value = "COC")]
        a_prev: Advisory,
        #[arg(long, allow_negative_numbers = true)]
        v_o_lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        v_o_hi: f64,
        /// safeable (boundary dump), check, linear, or slices
        #[arg(long, default_value = "safeable")]
        stage: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Enumerate (or read) query slices, decide them, write the run directory.
    Batch {
        /// JSON array of query slices to run instead of the enumeration.
        #[arg(long)]
        slices: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Counterexample table of a finished run.
    Table {
        #[arg(long)]
        run: Option<PathBuf>,
        /// Print CSV instead of the aligned table.
        #[arg(long)]
        csv: bool,
    },
    /// Witness histogram CSV for one previous advisory.
    Heatmap {
        #[arg(long, default_value = "COC")]
        a_prev: Advisory,
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 80)]
        n_tau: usize,
        #[arg(long, default_value_t = 80)]
        n_h: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StudyCmd {
    /// Counterexample counts for a_prev = COC across segment lengths and modes.
    Granularity,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        let Some((k, v)) = o.split_once('=') else { bail!("--set expects KEY=VALUE, got `{o}`") };
        cfg.set(k, v).map_err(anyhow::Error::msg).with_context(|| format!("--set {o}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn train_networks(cfg: &PipelineConfig) -> Result<()> {
    let table = load_table(&cfg.table_path).with_context(|| format!("loading table {}", cfg.table_path.display()))?;
    let mut nets = Networks::new();
    for &a in &cfg.a_prev {
        let t = Instant::now();
        let (net, rep) = network::train(&table, a, &cfg.train)?;
        eprintln!("{a}: agreement {:.4}, loss {:.3e}, {:.1}s", rep.agreement, rep.final_loss, t.elapsed().as_secs_f64());
        println!("{}", serde_json::to_string(&rep)?);
        nets.insert(a, net);
    }
    nets.save_dir(&cfg.networks_dir)?;
    Ok(())
}

fn run_dir_or(cfg: &PipelineConfig, run: &Option<PathBuf>) -> PathBuf {
    run.clone().unwrap_or_else(|| cfg.run_dir.clone())
}

fn verify_batch(cfg: &PipelineConfig, slices: &Option<PathBuf>) -> Result<u8> {
    let t = Instant::now();
    let queries: Vec<QuerySlice> = match slices {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing slices in {}", p.display()))?
        }
        None => Vec::new(),
    };
    let a_prevs: Vec<Advisory> = if slices.is_some() {
        let mut v: Vec<Advisory> = queries.iter().map(|q| q.a_prev).collect();
        v.sort();
        v.dedup();
        v
    } else {
        cfg.a_prev.clone()
    };
    for q in &queries {
        if !allowed_advisories(q.a_prev).contains(q.advisory) {
            bail!("slice {}: {} is not allowed after {}", q.id, q.advisory, q.a_prev);
        }
    }
    let nets = Networks::load_dir(&cfg.networks_dir, &a_prevs)?;
    let queries = if slices.is_some() { queries } else { enumerate_queries(cfg, &nets)? };
    let enumerate_ms = t.elapsed().as_secs_f64() * 1e3;
    eprintln!("{} queries, {} workers", queries.len(), cfg.workers);
    let report = run_batch(&queries, &nets, cfg.workers, cfg.margin)?;
    let meta = json!({
        "config": cfg,
        "config_text": cfg.to_text(),
        "versions": { "vcas": env!("CARGO_PKG_VERSION") },
        "seeds": { "train": cfg.train.seed, "verifier_samples": SAMPLE_SEED },
        "timings_ms": { "enumerate": enumerate_ms, "batch": report.wall_ms },
        "queries": report.total_queries,
        "sat": report.sat,
        "unsat": report.unsat,
        "inconclusive": report.inconclusive.len(),
        "sat_rate": report.sat_rate(),
        "counterexamples": report.total_counterexamples(),
        "nodes": report.nodes,
        "lp_calls": report.lp_calls,
    });
    write_run_dir(&cfg.run_dir, &report, &meta)?;
    print!("{}", render_table(&report));
    println!(
        "queries {}  sat {} ({:.2}%)  unsat {}  inconclusive {}  {:.1}s",
        report.total_queries,
        report.sat,
        100.0 * report.sat_rate(),
        report.unsat,
        report.inconclusive.len(),
        report.wall_ms / 1e3
    );
    for r in &report.inconclusive {
        eprintln!("inconclusive query {}: {}", r.id, r.message.as_deref().unwrap_or(""));
    }
    let code = batch_exit_code(&report, cfg.inconclusive_threshold);
    if code != 0 {
        eprintln!(
            "inconclusive fraction {:.4} exceeds threshold {}",
            report.inconclusive_fraction(),
            cfg.inconclusive_threshold
        );
    }
    Ok(code)
}

fn batch_exit_code(report: &RunReport, threshold: f64) -> u8 {
    if report.inconclusive_fraction() > threshold {
        EXIT_INCONCLUSIVE
    } else {
        0
    }
}

fn parse_input(s: &str) -> Result<[f64; 4]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad input `{s}`"))?;
    let arr: [f64; 4] = v.try_into().map_err(|_| anyhow::anyhow!("input needs 4 values h,v_o,v_i,tau"))?;
    Ok(arr)
}

fn run(cli: &Cli) -> Result<u8> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Group::Policy(PolicyCmd::Solve { check }) => {
            let t = Instant::now();
            let model = cfg.response_model();
            let table = solve(&cfg.grid.spec(), &model)?;
            save_table(&table, &cfg.table_path)?;
            println!("wrote {} in {:.1}s", cfg.table_path.display(), t.elapsed().as_secs_f64());
            if *check {
                println!("bellman residual {:e}", bellman_residual(&table, &model)?);
            }
        }
        Group::Policy(PolicyCmd::Slice(a)) => {
            let spec = SliceSpec {
                v_o: a.v_o,
                v_i: a.v_i,
                a_prev: a.a_prev,
                h_range: (a.h_lo, a.h_hi),
                tau_range: (a.tau_lo, a.tau_hi),
                resolution: (a.n_tau, a.n_h),
            };
            let cells = if a.network {
                let path = cfg.networks_dir.join(Networks::file_name(a.a_prev));
                export_network_slice(&network::load(&path)?, &spec)?
            } else {
                export_policy_slice(&load_table(&cfg.table_path)?, &spec)?
            };
            emit(&a.out, &slice_csv(&cells))?;
        }
        Group::Nn(NnCmd::Train) => train_networks(&cfg)?,
        Group::Nn(NnCmd::Eval { a_prev, input }) => {
            let net = network::load(cfg.networks_dir.join(Networks::file_name(*a_prev)))?;
            match input {
                Some(s) => {
                    let x = parse_input(s)?;
                    let state = EncounterState::new(x[0], x[1], x[2], *a_prev, x[3]);
                    let out = net.forward(&x)?;
                    println!("{}", json!({ "outputs": out, "advisory": argmax_advisory(&net, &state)? }));
                }
                None => {
                    let table = load_table(&cfg.table_path)?;
                    println!("{}", json!({ "a_prev": a_prev, "agreement": grid_agreement(&net, &table, *a_prev)? }));
                }
            }
        }
        Group::Regions(RegionsCmd::Build { advisory, a_prev, v_o_lo, v_o_hi, stage, out }) => {
            let geo = cfg.geometry();
            let v_o = (*v_o_lo, *v_o_hi);
            let body = match stage.as_str() {
                "safeable" => serde_json::to_string_pretty(&safeable_bounds(*advisory, v_o, &geo)?.dump())?,
                "check" => serde_json::to_string_pretty(&check_region(*advisory, *a_prev, v_o, &geo)?)?,
                "linear" | "slices" => {
                    let lin = linearize(&check_region(*advisory, *a_prev, v_o, &geo)?, cfg.seg_len_tau, cfg.linearization)?;
                    if stage == "linear" {
                        serde_json::to_string_pretty(&lin)?
                    } else {
                        serde_json::to_string_pretty(&slice_queries(&lin, v_o, cfg.v_i, &cfg.slice_options(), 0)?)?
                    }
                }
                other => bail!("unknown stage `{other}` (safeable, check, linear, slices)"),
            };
            emit(out, &(body + "\n"))?;
        }
        Group::Verify(VerifyCmd::Batch { slices }) => return verify_batch(&cfg, slices),
        Group::Report(ReportCmd::Table { run, csv }) => {
            let report = load_report(run_dir_or(&cfg, run))?;
            if *csv {
                print!("{}", report_table(&report));
            } else {
                print!("{}", render_table(&report));
            }
        }
        Group::Report(ReportCmd::Heatmap { a_prev, run, n_tau, n_h, out }) => {
            if *n_tau == 0 || *n_h == 0 {
                bail!("heatmap needs at least one bin per axis");
            }
            let report = load_report(run_dir_or(&cfg, run))?;
            let bins = HeatmapBins { n_tau: *n_tau, n_h: *n_h, ..HeatmapBins::default() };
            emit(out, &report_heatmap(&report, *a_prev, bins).to_csv())?;
        }
        Group::Study(StudyCmd::Granularity) => {
            let nets = Networks::load_dir(&cfg.networks_dir, &[Advisory::Coc])?;
            let rows = granularity_study(&cfg, &nets, &cfg.study_seg_lens, &cfg.study_modes)?;
            let csv = GranularityRow::csv(&rows);
            std::fs::create_dir_all(&cfg.run_dir)?;
            std::fs::write(cfg.run_dir.join("granularity.csv"), &csv)?;
            print!("{csv}");
            let invariant = rows.windows(2).all(|w| w[0].counterexamples == w[1].counterexamples);
            println!("counts invariant across settings: {invariant}");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
