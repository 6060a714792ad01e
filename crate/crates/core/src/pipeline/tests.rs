use super::*;
use crate::domain::allowed_advisories;
use crate::geometry::regions::unsafeable_all;
use crate::network::tests::random_net;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random networks with state-space input normalization.
fn fake_networks(seed: u64) -> Networks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = Networks::new();
    for a in Advisory::ALL {
        let mut net = random_net(&mut rng, &[4, 6, 6, 9]);
        net.input_mean = vec![0.0, 0.0, 0.0, 20.0];
        net.input_range = vec![2000.0, 200.0, 200.0, 40.0];
        nets.insert(a, net);
    }
    nets
}

fn small_cfg() -> PipelineConfig {
    PipelineConfig {
        delta_v_o: 50.0,
        seg_len_tau: 2.0,
        ..PipelineConfig::default()
    }
}

#[test]
fn sixty_five_pairs() {
    assert_eq!(advisory_pairs(&Advisory::ALL).len(), 65);
}

#[test]
fn enumeration_is_dense_and_allowed() {
    let nets = fake_networks(1);
    let slices = enumerate_queries(&small_cfg(), &nets).unwrap();
    assert!(!slices.is_empty());
    for (i, s) in slices.iter().enumerate() {
        assert_eq!(s.id, i);
        assert!(allowed_advisories(s.a_prev).contains(s.advisory));
    }
    // deterministic order
    assert_eq!(slices, enumerate_queries(&small_cfg(), &nets).unwrap());
}

#[test]
fn missing_network_is_named() {
    let mut nets = fake_networks(2);
    nets.nets.remove(&Advisory::Dnd);
    match enumerate_queries(&small_cfg(), &nets) {
        Err(Error::MissingNetwork(a)) => assert_eq!(a, Advisory::Dnd),
        other => panic!("{other:?}"),
    }
    let dir = std::env::temp_dir().join(format!("vcas-nets-{}", std::process::id()));
    fake_networks(2).save_dir(&dir).unwrap();
    std::fs::remove_file(dir.join(Networks::file_name(Advisory::Scl1500))).unwrap();
    match Networks::load_dir(&dir, &Advisory::ALL) {
        Err(Error::MissingNetwork(a)) => assert_eq!(a, Advisory::Scl1500),
        other => panic!("{other:?}"),
    }
    let loaded = Networks::load_dir(&dir, &[Advisory::Coc]).unwrap();
    assert_eq!(loaded.get(Advisory::Coc).unwrap(), fake_networks(2).get(Advisory::Coc).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn slices_avoid_unsafeable_for_all() {
    let cfg = small_cfg();
    let geo = cfg.geometry();
    let slices = enumerate_slices(&cfg, cfg.seg_len_tau, cfg.linearization).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in &slices {
        let band = unsafeable_all(s.a_prev, s.v_o, &geo).unwrap();
        for _ in 0..20 {
            let tau = rng.gen_range(s.tau_lo..=s.tau_hi);
            let (lo, hi) = (s.lower.eval(tau).max(s.h_lo), s.upper.eval(tau).min(s.h_hi));
            if hi - lo < 1e-6 {
                continue;
            }
            let h = lo + (hi - lo) * rng.gen_range(0.001..0.999);
            assert!(!band.contains(tau, h), "slice {} at ({tau}, {h})", s.id);
        }
    }
}

#[test]
fn queries_encode_slices() {
    let slices = enumerate_slices(&small_cfg(), 2.0, LinearizationMode::Over).unwrap();
    let pinned = slices.iter().find(|s| s.tau_pinned).unwrap();
    let q = query_for_slice(pinned, 0.0);
    assert_eq!((q.lo[3], q.hi[3]), (TAU_CLAMP, TAU_CLAMP));
    assert!(q.constraints.is_empty());
    assert_eq!((q.lo[0], q.hi[0]), (pinned.h_lo, pinned.h_hi));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let free = slices.iter().find(|s| !s.tau_pinned).unwrap();
    let q = query_for_slice(free, 0.0);
    assert!(!q.competitors.contains(&q.target));
    assert_eq!(q.competitors.len() + 1, allowed_advisories(free.a_prev).len());
    for _ in 0..1000 {
        let tau = rng.gen_range(free.tau_lo..=free.tau_hi);
        let h = rng.gen_range(free.h_lo..=free.h_hi);
        let x = [h, free.v_o.0, free.v_i, tau];
        let by_query = q.constraints.iter().all(|c| c.violation(&x) <= 0.0);
        assert_eq!(by_query, free.lower.eval(tau) <= h && h <= free.upper.eval(tau));
    }
}

#[test]
fn empty_batch_is_zero_filled() {
    let r = run_batch(&[], &fake_networks(5), 2, 0.0).unwrap();
    assert_eq!(r.total_queries, 0);
    assert_eq!(r.total_counterexamples(), 0);
    assert_eq!(r.sat_rate(), 0.0);
    assert_eq!(r.counts.iter().flatten().filter(|c| c.is_none()).count(), 81 - 65);
}

fn batch(seed: u64, workers: usize) -> (Vec<QuerySlice>, RunReport) {
    let cfg = PipelineConfig { max_queries: Some(150), ..small_cfg() };
    let nets = fake_networks(seed);
    let slices = enumerate_queries(&cfg, &nets).unwrap();
    let report = run_batch(&slices, &nets, workers, 0.0).unwrap();
    (slices, report)
}

#[test]
fn batch_independent_of_workers() {
    let (_, a) = batch(6, 1);
    let (_, b) = batch(6, 4);
    assert_eq!(a.without_timings(), b.without_timings());
}

#[test]
fn batch_conserves_and_replays() {
    let nets = fake_networks(7);
    let (slices, r) = batch(7, 2);
    assert_eq!(r.sat + r.unsat + r.inconclusive.len(), r.total_queries);
    assert_eq!(r.sat, r.total_counterexamples());
    assert_eq!(r.sat, r.witnesses.len());
    assert!(r.sat > 0 && r.unsat > 0);
    assert!(r.records.windows(2).all(|w| w[0].id < w[1].id));
    for w in &r.witnesses {
        let s = &slices[w.query_id];
        let q = query_for_slice(s, 0.0);
        assert!(replay_check(nets.get(w.a_prev).unwrap(), &q, &w.input));
        assert!(inside_slice(s, w.tau, w.h));
    }
    let cols = r.column_totals();
    assert_eq!(cols.iter().sum::<usize>(), r.sat);
}

#[test]
fn table_layout_and_round_trip() {
    let (_, r) = batch(8, 1);
    let csv = report_table(&r);
    let counts = parse_table_csv(&csv).unwrap();
    assert_eq!(counts, r.counts);
    use Advisory::*;
    for p in Advisory::ALL {
        for a in Advisory::ALL {
            let na = match p {
                Coc | Dnc | Dnd => a.index() >= Sdes1500.index(),
                Des1500 | Cl1500 => a.index() >= Sdes2500.index(),
                _ => false,
            };
            assert_eq!(counts[p.index()][a.index()].is_none(), na, "{p} -> {a}");
        }
    }
    assert!(render_table(&r).contains("N/A"));
    assert!(parse_table_csv("a_prev,COC\n").is_err());
}

#[test]
fn heatmap_sums_and_empty() {
    let (_, r) = batch(9, 1);
    for a in Advisory::ALL {
        let h = report_heatmap(&r, a, HeatmapBins::default());
        assert_eq!(h.counts.len(), 6400);
        assert_eq!(h.total(), r.witnesses.iter().filter(|w| w.a_prev == a).count());
        let csv = h.to_csv();
        assert!(csv.starts_with("tau_bin,h_bin,count\n"));
        assert_eq!(csv.lines().count(), 6401);
    }
    let empty = report_heatmap(&RunReport::empty(), Advisory::Coc, HeatmapBins::default());
    assert!(empty.counts.iter().all(|c| *c == 0));
}

#[test]
fn witnesses_outside_unsafeable_for_all() {
    let (_, r) = batch(10, 1);
    let geo = small_cfg().geometry();
    for w in &r.witnesses {
        let band = unsafeable_all(w.a_prev, w.slice.v_o, &geo).unwrap();
        // strictly inside the excluded band would be a geometry error
        let deep = band.contains(w.tau, w.h + 1e-3) && band.contains(w.tau, w.h - 1e-3);
        assert!(!deep, "witness {} at ({}, {})", w.query_id, w.tau, w.h);
    }
}

#[test]
fn granularity_rows_repeatable() {
    let cfg = PipelineConfig { max_queries: Some(12), delta_v_o: 100.0, ..PipelineConfig::default() };
    let nets = fake_networks(11);
    let lens = [0.125, 0.25, 0.5, 1.0, 2.0];
    let modes = [LinearizationMode::Over, LinearizationMode::Under];
    let a = granularity_study(&cfg, &nets, &lens, &modes).unwrap();
    let b = granularity_study(&cfg, &nets, &lens, &modes).unwrap();
    assert_eq!(a.len(), 10);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.seg_len, x.mode, x.queries, x.counterexamples), (y.seg_len, y.mode, y.queries, y.counterexamples));
    }
    assert!(GranularityRow::csv(&a).lines().count() == 11);
}

#[test]
fn run_dir_outputs() {
    let (_, r) = batch(12, 1);
    let dir = std::env::temp_dir().join(format!("vcas-run-{}", std::process::id()));
    write_run_dir(&dir, &r, &serde_json::json!({"queries": r.total_queries})).unwrap();
    for f in ["report.csv", "witnesses.jsonl", "results.jsonl", "run_meta.json", "heatmap_COC.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let lines = std::fs::read_to_string(dir.join("witnesses.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), r.witnesses.len());
    for l in lines.lines() {
        let w: Witness = serde_json::from_str(l).unwrap();
        assert!(r.witnesses.contains(&w));
    }
    assert_eq!(load_report(&dir).unwrap(), r);
    std::fs::remove_dir_all(&dir).unwrap();
}
