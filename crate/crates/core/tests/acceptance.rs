//! Release acceptance gate.
//!
//! Each test checks one numbered shipping criterion and prints exactly one
//! `criterion N (...): PASS` or `criterion N (...): FAIL: ...` line (visible
//! with `cargo test --test acceptance -- --nocapture`). Library results are
//! verified against oracles reimplemented here from first principles:
//! pair-counting AUC, threshold-sweep average precision, exhaustive cycle
//! enumeration, quadratic matched-trade scans, brute-force feature formulas,
//! and central finite differences. Criteria 5 through 8 share one end-to-end
//! run of the shipped binary with its default configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use rugwarn::features::{compute_features, FeatureExtractor, FEATURE_COUNT, FEATURE_NAMES};
use rugwarn::ingest::{
    cap_window, merge_and_dedup, parse_csv, CsvSchema, Quantity, QuantityMode, DEFAULT_CAP,
};
use rugwarn::metrics::{average_precision, lead_time_v1, read_event_file, roc_auc, EvalGrid};
use rugwarn::models::logreg::{logistic_gradient, logistic_loss, sample_weights};
use rugwarn::models::TrainedModel;
use rugwarn::patterns::{
    circular_record_flags, circular_score, matched_record_flags, matched_score,
};
use rugwarn::synth::GroundTruth;
use rugwarn::{Label, TokenDataset, TransferRecord};

/// Early-returns `Err(String)` when the condition fails.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    }};
}

fn report(n: usize, name: &str, result: Result<(), String>) {
    match result {
        Ok(()) => println!("criterion {n} ({name}): PASS"),
        Err(reason) => {
            println!("criterion {n} ({name}): FAIL: {reason}");
            panic!("criterion {n} ({name}): {reason}");
        }
    }
}

fn record(tx: u64, from: &str, to: &str, qty: f64, ts: i64) -> TransferRecord {
    TransferRecord {
        token_address: "0xtoken".into(),
        tx_hash: format!("0x{tx:016x}"),
        from_addr: from.into(),
        to_addr: to.into(),
        quantity: Quantity::parse(&qty.to_string(), QuantityMode::Float).unwrap(),
        timestamp: ts,
    }
}

// --- criterion 1: ranking metrics against counting oracles ------------------

/// AUC as the probability that a positive outranks a negative, ties half.
fn pair_counting_auc(y: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut ties = 0.0;
    let mut pairs = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    ties += 1.0;
                }
            }
        }
    }
    (wins + 0.5 * ties) / pairs
}

/// Average precision by recounting the confusion table at every distinct
/// score threshold, descending; predicted positive means score at or above.
fn sweep_average_precision(y: &[u8], scores: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.reverse();
    let total_pos = y.iter().filter(|l| **l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = y.iter().zip(scores).filter(|(l, s)| **l == 1 && **s >= t).count() as f64;
        let fp = y.iter().zip(scores).filter(|(l, s)| **l == 0 && **s >= t).count() as f64;
        let precision = tp / (tp + fp);
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

fn check_ranking_metrics() -> Result<(), String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC01);
    for case in 0..100 {
        let n = rng.random_range(2..=50);
        let y: Vec<u8> = loop {
            let draw: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
            if draw.contains(&0) && draw.contains(&1) {
                break draw;
            }
        };
        // Odd cases quantize scores onto an eighth-grid to force ties.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if case % 2 == 1 {
                    (s * 8.0).round() / 8.0
                } else {
                    s
                }
            })
            .collect();

        let auc = roc_auc(&y, &scores)
            .ok_or_else(|| format!("case {case}: auc undefined despite both classes"))?;
        let auc_ref = pair_counting_auc(&y, &scores);
        ensure!(
            (auc - auc_ref).abs() <= 1e-12,
            "case {case}: auc {auc} differs from pair-counting oracle {auc_ref}"
        );

        let ap = average_precision(&y, &scores)
            .ok_or_else(|| format!("case {case}: pr-auc undefined despite both classes"))?;
        let ap_ref = sweep_average_precision(&y, &scores);
        ensure!(
            (ap - ap_ref).abs() <= 1e-12,
            "case {case}: pr-auc {ap} differs from threshold-sweep oracle {ap_ref}"
        );
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}, budget is 5s");
    Ok(())
}

#[test]
fn c1_ranking_metrics_match_counting_oracles() {
    report(1, "ranking metrics vs counting oracles", check_ranking_metrics());
}

// --- criterion 2: pattern scores against exhaustive search ------------------

/// Quadratic scan: a non-self record is matched when any reversed-direction
/// record lies within the window on either side.
fn exhaustive_matched_flags(records: &[TransferRecord], window_minutes: u32) -> Vec<bool> {
    let window = i64::from(window_minutes) * 60;
    records
        .iter()
        .map(|r| {
            r.from_addr != r.to_addr
                && records.iter().any(|o| {
                    o.from_addr == r.to_addr
                        && o.to_addr == r.from_addr
                        && (o.timestamp - r.timestamp).abs() <= window
                })
        })
        .collect()
}

/// Every deduplicated non-self edge that lies on some simple directed cycle
/// with `min_len..=max_len` edges. Each cycle is enumerated once by rooting
/// the search at its smallest node and only visiting larger nodes.
fn cyclic_edge_set(
    edges: &BTreeSet<(String, String)>,
    min_len: usize,
    max_len: usize,
) -> BTreeSet<(String, String)> {
    let nodes: Vec<&str> = edges
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    for (a, b) in edges {
        adj[index[a.as_str()]].push(index[b.as_str()]);
    }

    struct Search {
        adj: Vec<Vec<usize>>,
        min_len: usize,
        max_len: usize,
        marked: BTreeSet<(usize, usize)>,
    }

    impl Search {
        fn walk(&mut self, start: usize, path: &mut Vec<usize>, on_path: &mut [bool]) {
            let current = *path.last().unwrap();
            for i in 0..self.adj[current].len() {
                let next = self.adj[current][i];
                if next == start && path.len() >= self.min_len {
                    for pair in path.windows(2) {
                        self.marked.insert((pair[0], pair[1]));
                    }
                    self.marked.insert((current, start));
                }
                if next > start && !on_path[next] && path.len() < self.max_len {
                    path.push(next);
                    on_path[next] = true;
                    self.walk(start, path, on_path);
                    on_path[next] = false;
                    path.pop();
                }
            }
        }
    }

    let mut search = Search { adj, min_len, max_len, marked: BTreeSet::new() };
    for start in 0..nodes.len() {
        let mut path = vec![start];
        let mut on_path = vec![false; nodes.len()];
        on_path[start] = true;
        search.walk(start, &mut path, &mut on_path);
    }
    search
        .marked
        .into_iter()
        .map(|(a, b)| (nodes[a].to_string(), nodes[b].to_string()))
        .collect()
}

/// Naive sliding-window union: for every anchored window, flag the records
/// whose edge is on a short cycle of that window's deduplicated edge graph.
fn exhaustive_circular_flags(
    records: &[TransferRecord],
    window_minutes: u32,
    max_cycle_len: usize,
) -> Vec<bool> {
    let window = i64::from(window_minutes) * 60;
    let mut flags = vec![false; records.len()];
    for anchor in records.iter().map(|r| r.timestamp) {
        let in_window: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].timestamp >= anchor && records[i].timestamp <= anchor + window)
            .collect();
        let edges: BTreeSet<(String, String)> = in_window
            .iter()
            .map(|&i| &records[i])
            .filter(|r| r.from_addr != r.to_addr)
            .map(|r| (r.from_addr.clone(), r.to_addr.clone()))
            .collect();
        let cyclic = cyclic_edge_set(&edges, 3, max_cycle_len);
        for &i in &in_window {
            let r = &records[i];
            if cyclic.contains(&(r.from_addr.clone(), r.to_addr.clone())) {
                flags[i] = true;
            }
        }
    }
    flags
}

fn check_pattern_scores() -> Result<(), String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC02);
    for case in 0..50 {
        let pool = rng.random_range(4..=8);
        let addrs: Vec<String> = (0..pool).map(|i| format!("0xwallet{i:02}")).collect();
        let window_minutes: u32 = rng.random_range(3..=45);
        let max_cycle_len = 5;

        let mut timestamps: Vec<i64> =
            (0..40).map(|_| 1_700_000_000 + rng.random_range(0..=6 * 3600)).collect();
        timestamps.sort_unstable();
        let records: Vec<TransferRecord> = timestamps
            .into_iter()
            .enumerate()
            .map(|(k, ts)| {
                let from = rng.random_range(0..pool);
                let to = if rng.random_bool(0.15) { from } else { rng.random_range(0..pool) };
                record(k as u64, &addrs[from], &addrs[to], 1.5, ts)
            })
            .collect();

        let matched = matched_record_flags(&records, window_minutes).map_err(|e| e.to_string())?;
        let matched_ref = exhaustive_matched_flags(&records, window_minutes);
        ensure!(
            matched == matched_ref,
            "case {case}: matched flags diverge from the quadratic scan at records {:?}",
            diff_positions(&matched, &matched_ref)
        );
        let m_score = matched_score(&records, window_minutes).map_err(|e| e.to_string())?;
        let m_ref = matched_ref.iter().filter(|f| **f).count() as f64 / records.len() as f64;
        ensure!(m_score == m_ref, "case {case}: matched score {m_score} != oracle {m_ref}");

        let circular =
            circular_record_flags(&records, window_minutes, max_cycle_len).map_err(|e| e.to_string())?;
        let circular_ref = exhaustive_circular_flags(&records, window_minutes, max_cycle_len);
        ensure!(
            circular == circular_ref,
            "case {case}: circular flags diverge from exhaustive cycle search at records {:?}",
            diff_positions(&circular, &circular_ref)
        );
        let c_score =
            circular_score(&records, window_minutes, max_cycle_len).map_err(|e| e.to_string())?;
        let c_ref = circular_ref.iter().filter(|f| **f).count() as f64 / records.len() as f64;
        ensure!(c_score == c_ref, "case {case}: circular score {c_score} != oracle {c_ref}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}, budget is 10s");
    Ok(())
}

fn diff_positions(a: &[bool], b: &[bool]) -> Vec<usize> {
    a.iter().zip(b).enumerate().filter(|(_, (x, y))| x != y).map(|(i, _)| i).collect()
}

#[test]
fn c2_pattern_scores_match_exhaustive_search() {
    report(2, "pattern scores vs exhaustive search", check_pattern_scores());
}

// --- criterion 3: feature definitions and invariances -----------------------

/// Straight-line recomputation of all twelve features from their definitions.
fn brute_force_features(records: &[TransferRecord]) -> [f64; FEATURE_COUNT] {
    let n = records.len() as f64;
    let qtys: Vec<f64> = records.iter().map(|r| r.quantity.as_f64()).collect();
    let avg = qtys.iter().sum::<f64>() / n;
    let std = (qtys.iter().map(|q| (q - avg).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = qtys.clone();
    sorted.sort_by(f64::total_cmp);
    let median = mid_of_sorted_f64(&sorted);

    #[derive(Default)]
    struct Flow {
        in_cnt: u64,
        out_cnt: u64,
        in_qty: f64,
        out_qty: f64,
    }
    let mut flows: BTreeMap<&str, Flow> = BTreeMap::new();
    for r in records {
        let q = r.quantity.as_f64();
        let out = flows.entry(&r.from_addr).or_default();
        out.out_cnt += 1;
        out.out_qty += q;
        let inn = flows.entry(&r.to_addr).or_default();
        inn.in_cnt += 1;
        inn.in_qty += q;
    }
    let unique_from = flows.values().filter(|f| f.out_cnt > 0).count() as f64;
    let unique_to = flows.values().filter(|f| f.in_cnt > 0).count() as f64;

    let mut participation: Vec<u64> = flows.values().map(|f| f.in_cnt + f.out_cnt).collect();
    participation.sort_unstable_by(|a, b| b.cmp(a));
    let top10: u64 = participation.iter().take(10).sum();

    let mut minutes: BTreeMap<i64, u64> = BTreeMap::new();
    for r in records {
        *minutes.entry(r.timestamp.div_euclid(60)).or_insert(0) += 1;
    }
    let mut counts: Vec<u64> = minutes.values().copied().collect();
    counts.sort_unstable();
    let lower = counts[(counts.len() - 1) / 2] as f64;
    let upper = counts[counts.len() / 2] as f64;
    let burst = *counts.last().unwrap() as f64 / ((lower + upper) / 2.0);

    let imbalance = flows
        .values()
        .map(|f| {
            let total = f.in_qty + f.out_qty;
            if total == 0.0 {
                0.0
            } else {
                (f.in_qty - f.out_qty).abs() / total
            }
        })
        .sum::<f64>()
        / flows.len() as f64;

    let routes: BTreeSet<(&str, &str)> =
        records.iter().map(|r| (r.from_addr.as_str(), r.to_addr.as_str())).collect();

    [
        n,
        unique_from,
        unique_to,
        unique_from / unique_to,
        avg,
        median,
        std,
        top10 as f64 / (2.0 * n),
        burst,
        imbalance.clamp(0.0, 1.0),
        (n - routes.len() as f64) / n,
        minutes.len() as f64,
    ]
}

fn mid_of_sorted_f64(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn random_fixture(rng: &mut ChaCha8Rng, n: usize, pool: usize, span: i64) -> Vec<TransferRecord> {
    let addrs: Vec<String> = (0..pool).map(|i| format!("0xwallet{i:03}")).collect();
    let mut timestamps: Vec<i64> =
        (0..n).map(|_| 1_700_000_000 + rng.random_range(0..span)).collect();
    timestamps.sort_unstable();
    timestamps
        .into_iter()
        .enumerate()
        .map(|(k, ts)| {
            let from = rng.random_range(0..pool);
            let to = if rng.random_bool(0.12) { from } else { rng.random_range(0..pool) };
            let qty = if rng.random_bool(0.08) { 0.0 } else { rng.random_range(0.001..1500.0) };
            record(k as u64, &addrs[from], &addrs[to], qty, ts)
        })
        .collect()
}

fn compare_feature_vectors(got: &[f64], want: &[f64], what: &str) -> Result<(), String> {
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        ensure!(
            close(got[i], want[i]),
            "{what}: {name} is {} but the oracle computes {}",
            got[i],
            want[i]
        );
    }
    Ok(())
}

fn check_feature_definitions() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC03);

    let fixture = random_fixture(&mut rng, 500, 40, 48 * 3600);
    let vector = compute_features(&fixture).map_err(|e| e.to_string())?;
    compare_feature_vectors(&vector.values(), &brute_force_features(&fixture), "500-record fixture")?;

    for case in 0..20 {
        let n = rng.random_range(80..=300);
        let pool = rng.random_range(5..=25);
        let records = random_fixture(&mut rng, n, pool, 24 * 3600);
        let base = compute_features(&records).map_err(|e| e.to_string())?.values();

        // Positive quantity rescaling must scale exactly the three quantity
        // statistics and leave the other nine features unchanged.
        let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled_records: Vec<TransferRecord> = records
            .iter()
            .map(|r| TransferRecord {
                quantity: Quantity::parse(
                    &(r.quantity.as_f64() * lambda).to_string(),
                    QuantityMode::Float,
                )
                .unwrap(),
                ..r.clone()
            })
            .collect();
        let scaled = compute_features(&scaled_records).map_err(|e| e.to_string())?.values();
        let mut expected = base;
        for idx in [4, 5, 6] {
            expected[idx] *= lambda;
        }
        compare_feature_vectors(&scaled, &expected, &format!("case {case} scaled by {lambda}"))?;

        // Shifting every timestamp by whole minutes must not move any feature.
        let delta = 60 * rng.random_range(-500..=500i64);
        let shifted_records: Vec<TransferRecord> = records
            .iter()
            .map(|r| TransferRecord { timestamp: r.timestamp + delta, ..r.clone() })
            .collect();
        let shifted = compute_features(&shifted_records).map_err(|e| e.to_string())?.values();
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            ensure!(
                shifted[i] == base[i],
                "case {case} shifted by {delta}s: {name} moved from {} to {}",
                base[i],
                shifted[i]
            );
        }
    }
    Ok(())
}

#[test]
fn c3_features_match_brute_force_and_invariances() {
    report(3, "feature definitions and invariances", check_feature_definitions());
}

// --- criterion 4: logistic gradient against finite differences --------------

fn check_logistic_gradient() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC04);
    let h = 1e-6;
    for case in 0..10 {
        let rows = rng.random_range(6..=40);
        let dims = rng.random_range(1..=8);
        let x: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..dims).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<u8> = loop {
            let draw: Vec<u8> = (0..rows).map(|_| rng.random_range(0..=1)).collect();
            if draw.contains(&0) && draw.contains(&1) {
                break draw;
            }
        };
        let weights = sample_weights(&y, case % 2 == 0);
        let coef: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.5..1.5)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let l2 = [0.0, 0.03, 0.5][case % 3];

        let (grad_w, grad_b) = logistic_gradient(&x, &y, &weights, &coef, bias, l2);
        for d in 0..dims {
            let mut plus = coef.clone();
            plus[d] += h;
            let mut minus = coef.clone();
            minus[d] -= h;
            let numeric = (logistic_loss(&x, &y, &weights, &plus, bias, l2)
                - logistic_loss(&x, &y, &weights, &minus, bias, l2))
                / (2.0 * h);
            let rel = (grad_w[d] - numeric).abs() / numeric.abs().max(1e-12);
            ensure!(
                rel < 1e-5,
                "case {case}: d(loss)/d(coef[{d}]) analytic {} vs numeric {numeric} (rel {rel:e})",
                grad_w[d]
            );
        }
        let numeric_b = (logistic_loss(&x, &y, &weights, &coef, bias + h, l2)
            - logistic_loss(&x, &y, &weights, &coef, bias - h, l2))
            / (2.0 * h);
        let rel_b = (grad_b - numeric_b).abs() / numeric_b.abs().max(1e-12);
        ensure!(
            rel_b < 1e-5,
            "case {case}: d(loss)/d(bias) analytic {grad_b} vs numeric {numeric_b} (rel {rel_b:e})"
        );
    }
    Ok(())
}

#[test]
fn c4_logistic_gradient_matches_finite_differences() {
    report(4, "logistic gradient vs finite differences", check_logistic_gradient());
}

// --- shared end-to-end run for criteria 5 through 8 --------------------------

struct PipelineRun {
    dir: tempfile::TempDir,
    runtime: Duration,
}

impl PipelineRun {
    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }
    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }
}

fn run_pipeline_in(dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rugwarn"))
        .arg("pipeline")
        .current_dir(dir)
        .env_remove("RUGWARN_CONFIG")
        .env_remove("RUGWARN_SEED")
        .env_remove("RUGWARN_THREADS")
        .env_remove("RUGWARN_OUT")
        .output()
        .expect("spawn the pipeline binary")
}

fn pipeline_run() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().expect("create a scratch directory");
        let started = Instant::now();
        let output = run_pipeline_in(dir.path());
        let runtime = started.elapsed();
        assert!(
            output.status.success(),
            "default pipeline run failed:\n{}",
            String::from_utf8_lossy(&output.stderr)
        );
        PipelineRun { dir, runtime }
    })
}

fn read_json_file(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

// --- criterion 5: pipeline artifact contract ---------------------------------

fn check_pipeline_artifacts() -> Result<(), String> {
    let run = pipeline_run();
    ensure!(
        run.runtime < Duration::from_secs(300),
        "default pipeline took {:?}, budget is 5 minutes",
        run.runtime
    );

    let metrics = read_json_file(&run.out().join("metrics.json"))?;
    let models = metrics["models"]
        .as_object()
        .ok_or("metrics.json lacks a models object")?;
    ensure!(
        models.len() == 2 && models.contains_key("logistic_regression") && models.contains_key("random_forest"),
        "metrics.json must report exactly logistic_regression and random_forest, got {:?}",
        models.keys().collect::<Vec<_>>()
    );
    for (name, block) in models {
        for field in ["accuracy", "precision", "recall", "f1", "auc", "pr_auc"] {
            ensure!(block[field].is_number(), "{name}.{field} is missing or non-numeric");
        }
        let stats = block["lead_time_hours"]
            .as_object()
            .ok_or_else(|| format!("{name} lacks a lead_time_hours block"))?;
        let keys: BTreeSet<&str> = stats.keys().map(String::as_str).collect();
        ensure!(
            keys == BTreeSet::from(["n", "mean", "median", "min", "max"]),
            "{name}.lead_time_hours must hold exactly n/mean/median/min/max, got {keys:?}"
        );
        let n = stats["n"].as_u64().ok_or_else(|| format!("{name}.lead_time_hours.n"))?;
        ensure!(n > 0, "{name} warned on no token at all");
        for field in ["mean", "median", "min", "max"] {
            ensure!(stats[field].is_number(), "{name}.lead_time_hours.{field} is null despite n={n}");
        }
    }

    let ablation = read_json_file(&run.out().join("ablation.json"))?;
    let settings = ablation["settings"].as_array().ok_or("ablation.json lacks settings")?;
    let expected = [("full", 12), ("without_trade", 6), ("without_address", 7), ("without_contract", 11)];
    ensure!(settings.len() == expected.len(), "expected 4 ablation settings, got {}", settings.len());
    for (row, (name, remaining)) in settings.iter().zip(expected) {
        ensure!(
            row["setting"] == name,
            "ablation setting order: expected {name}, got {}",
            row["setting"]
        );
        ensure!(
            row["remaining_features"] == remaining,
            "{name} should keep {remaining} features, got {}",
            row["remaining_features"]
        );
        for field in ["precision", "recall", "f1", "auc", "pr_auc", "delta_pr_auc"] {
            ensure!(row[field].is_number(), "{name}.{field} is missing or non-numeric");
        }
    }
    ensure!(
        settings[0]["delta_pr_auc"] == 0.0,
        "the full setting must have a zero delta, got {}",
        settings[0]["delta_pr_auc"]
    );
    Ok(())
}

#[test]
fn c5_pipeline_emits_complete_artifacts_within_budget() {
    report(5, "pipeline artifact contract", check_pipeline_artifacts());
}

// --- criterion 6: model comparison and ablation ordering ---------------------

fn check_comparison_and_ablation() -> Result<(), String> {
    let run = pipeline_run();
    let metrics = read_json_file(&run.out().join("metrics.json"))?;
    let lr = metrics["models"]["logistic_regression"]["pr_auc"]
        .as_f64()
        .ok_or("logistic_regression.pr_auc missing")?;
    let rf = metrics["models"]["random_forest"]["pr_auc"]
        .as_f64()
        .ok_or("random_forest.pr_auc missing")?;
    ensure!(rf >= lr, "random forest PR-AUC {rf} fell below logistic regression {lr}");

    let ablation = read_json_file(&run.out().join("ablation.json"))?;
    let settings = ablation["settings"].as_array().ok_or("ablation.json lacks settings")?;
    let delta = |name: &str| -> Result<f64, String> {
        settings
            .iter()
            .find(|row| row["setting"] == name)
            .and_then(|row| row["delta_pr_auc"].as_f64())
            .ok_or_else(|| format!("ablation row {name} missing"))
    };
    let trade = delta("without_trade")?;
    let address = delta("without_address")?;
    let contract = delta("without_contract")?;
    ensure!(
        trade <= address && address <= contract,
        "ablation damage out of order: without_trade {trade}, without_address {address}, \
         without_contract {contract}"
    );
    Ok(())
}

#[test]
fn c6_model_comparison_and_ablation_ordering_hold() {
    report(6, "model comparison and ablation ordering", check_comparison_and_ablation());
}

// --- criterion 7: lead-time accounting and threshold monotonicity ------------

fn load_token_dataset(out: &Path, token: &str) -> Result<TokenDataset, String> {
    let path = out.join(format!("{token}.normalized.csv"));
    let parsed = parse_csv(&path, &CsvSchema::default(), QuantityMode::Float)
        .map_err(|e| e.to_string())?;
    ensure!(
        parsed.row_errors.is_empty(),
        "{}: normalized file has malformed rows",
        path.display()
    );
    Ok(TokenDataset {
        token_address: token.into(),
        records: merge_and_dedup(vec![parsed.records]),
        label: Label::HighRisk,
        cap: DEFAULT_CAP,
    })
}

struct LeadRow {
    t_warning: i64,
    t_rugpull: i64,
    hours: f64,
    approximated: String,
}

fn read_lead_times(path: &Path) -> Result<BTreeMap<String, LeadRow>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut rows = BTreeMap::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| e.to_string())?;
        let token = rec[0].to_string();
        let row = LeadRow {
            t_warning: rec[1].parse().map_err(|e| format!("{token} t_warning: {e}"))?,
            t_rugpull: rec[2].parse().map_err(|e| format!("{token} t_rugpull: {e}"))?,
            hours: rec[3].parse().map_err(|e| format!("{token} hours: {e}"))?,
            approximated: rec[4].to_string(),
        };
        ensure!(rows.insert(token.clone(), row).is_none(), "duplicate row for {token}");
    }
    Ok(rows)
}

fn check_lead_times() -> Result<(), String> {
    let run = pipeline_run();
    let truth: GroundTruth = serde_json::from_str(
        &fs::read_to_string(run.data().join("ground_truth.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let events = read_event_file(&run.data().join("events.csv")).map_err(|e| e.to_string())?;
    let rows = read_lead_times(&run.out().join("lead_times.csv"))?;
    ensure!(!rows.is_empty(), "the forest never warned on any token");

    // Every reported row must agree with generated ground truth exactly.
    for (token, row) in &rows {
        let entry = truth.tokens.get(token).ok_or_else(|| format!("{token} not in ground truth"))?;
        ensure!(entry.label == Label::HighRisk, "{token} is warned but not a rug pull");
        let t_rugpull = entry
            .t_rugpull
            .ok_or_else(|| format!("{token} lacks a generated rug-pull time"))?;
        ensure!(
            row.t_rugpull == t_rugpull,
            "{token}: artifact rug time {} vs generated {t_rugpull}",
            row.t_rugpull
        );
        ensure!(row.approximated == "false", "{token} should use the annotated event time");
        let expected = (t_rugpull - row.t_warning) as f64 / 3600.0;
        ensure!(
            (row.hours - expected).abs() <= 1e-9,
            "{token}: hours {} but (t_rugpull - t_warning)/3600 = {expected}",
            row.hours
        );
    }

    // Replaying with the shipped model must reproduce the artifact, and
    // raising the threshold must never warn earlier.
    let model = TrainedModel::load(&run.out().join("random_forest.model.json"))
        .map_err(|e| e.to_string())?;
    let extractor = FeatureExtractor::default();
    let mut sweep = model.clone();
    let taus = [0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 0.97];
    for (token, _) in truth.tokens.iter().filter(|(_, e)| e.label == Label::HighRisk) {
        let dataset = load_token_dataset(&run.out(), token)?;
        let annotated = events.get(token).copied();

        sweep.threshold = model.threshold;
        let replayed = lead_time_v1(&sweep, &extractor, &dataset, EvalGrid::PerMinute, annotated)
            .map_err(|e| e.to_string())?;
        match (replayed, rows.get(token)) {
            (Some(rec), Some(row)) => {
                ensure!(
                    rec.t_warning == row.t_warning && (rec.hours - row.hours).abs() <= 1e-9,
                    "{token}: replay warns at {} ({} h) but the artifact says {} ({} h)",
                    rec.t_warning,
                    rec.hours,
                    row.t_warning,
                    row.hours
                );
            }
            (None, None) => {}
            (Some(_), None) => return Err(format!("{token}: replay warns, artifact has no row")),
            (None, Some(_)) => return Err(format!("{token}: artifact has a row, replay never warns")),
        }

        let mut previous: Option<Option<f64>> = None;
        for tau in taus {
            sweep.threshold = tau;
            let hours = lead_time_v1(&sweep, &extractor, &dataset, EvalGrid::PerMinute, annotated)
                .map_err(|e| e.to_string())?
                .map(|rec| rec.hours);
            if let Some(prev) = previous {
                match (prev, hours) {
                    (Some(h1), Some(h2)) => ensure!(
                        h1 + 1e-12 >= h2,
                        "{token}: lead time rose from {h1} to {h2} h as the threshold rose to {tau}"
                    ),
                    (None, Some(_)) => {
                        return Err(format!(
                            "{token}: a warning appeared when the threshold rose to {tau}"
                        ));
                    }
                    _ => {}
                }
            }
            previous = Some(hours);
        }
    }
    Ok(())
}

#[test]
fn c7_lead_times_match_ground_truth_and_threshold_monotonicity() {
    report(7, "lead-time accounting and threshold monotonicity", check_lead_times());
}

// --- criterion 8: deterministic reruns ---------------------------------------

fn collect_files(root: &Path, dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), String> {
    for entry in fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.is_dir() {
            collect_files(root, &path, files)?;
        } else {
            files.push(path.strip_prefix(root).expect("child of root").to_path_buf());
        }
    }
    Ok(())
}

/// Removes the one run-timestamp field wherever it appears.
fn strip_timestamps(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.remove("generated_at_unix");
            map.values_mut().for_each(strip_timestamps);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

fn check_determinism() -> Result<(), String> {
    let first = pipeline_run();
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let output = run_pipeline_in(second.path());
    ensure!(
        output.status.success(),
        "second pipeline run failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let mut left = Vec::new();
    collect_files(first.dir.path(), first.dir.path(), &mut left)?;
    let mut right = Vec::new();
    collect_files(second.path(), second.path(), &mut right)?;
    left.sort();
    right.sort();
    ensure!(
        left == right,
        "runs produced different artifact sets: {:?}",
        left.iter().filter(|p| !right.contains(p)).chain(right.iter().filter(|p| !left.contains(p))).collect::<Vec<_>>()
    );

    for rel in &left {
        let a = first.dir.path().join(rel);
        let b = second.path().join(rel);
        if rel.extension().is_some_and(|e| e == "json") {
            let mut va = read_json_file(&a)?;
            let mut vb = read_json_file(&b)?;
            strip_timestamps(&mut va);
            strip_timestamps(&mut vb);
            ensure!(va == vb, "{} differs between identical runs", rel.display());
        } else {
            let ba = fs::read(&a).map_err(|e| e.to_string())?;
            let bb = fs::read(&b).map_err(|e| e.to_string())?;
            ensure!(ba == bb, "{} differs between identical runs", rel.display());
        }
    }
    Ok(())
}

#[test]
fn c8_reruns_reproduce_artifacts_bit_for_bit() {
    report(8, "deterministic reruns", check_determinism());
}

// --- criterion 9: ingest properties under random inputs ----------------------

/// Small value spaces so duplicate composite keys are common.
fn record_strategy() -> impl Strategy<Value = TransferRecord> {
    (0u64..12, 0usize..3, 0usize..3, 0u32..3, 0i64..6).prop_map(|(tx, from, to, q, ts)| {
        record(
            tx,
            &format!("0xwallet{from}"),
            &format!("0xwallet{to}"),
            f64::from(q) + 0.25,
            1_700_000_000 + ts * 37,
        )
    })
}

fn chunks_strategy() -> impl Strategy<Value = Vec<Vec<TransferRecord>>> {
    proptest::collection::vec(proptest::collection::vec(record_strategy(), 0..40), 0..5)
}

fn prop_config() -> PropConfig {
    PropConfig { cases: 200, failure_persistence: None, ..PropConfig::default() }
}

fn check_ingest_properties() -> Result<(), String> {
    // Merging its own output changes nothing.
    TestRunner::new(prop_config())
        .run(&chunks_strategy(), |chunks| {
            let merged = merge_and_dedup(chunks);
            let again = merge_and_dedup(vec![merged.clone()]);
            prop_assert_eq!(&again, &merged);
            Ok(())
        })
        .map_err(|e| format!("dedup idempotence: {e}"))?;

    // The order chunks arrive in cannot change the merged output.
    TestRunner::new(prop_config())
        .run(&(chunks_strategy(), any::<u64>()), |(chunks, shuffle_seed)| {
            let merged = merge_and_dedup(chunks.clone());
            let mut shuffled = chunks;
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(merge_and_dedup(shuffled), merged);
            Ok(())
        })
        .map_err(|e| format!("chunk-order invariance: {e}"))?;

    // A smaller cap keeps exactly a prefix of what a larger cap keeps.
    TestRunner::new(prop_config())
        .run(&(chunks_strategy(), 0usize..=50, 0usize..=50), |(chunks, a, b)| {
            let merged = merge_and_dedup(chunks);
            let (lo, hi) = (a.min(b), a.max(b));
            let small = cap_window(merged.clone(), lo);
            let large = cap_window(merged.clone(), hi);
            prop_assert_eq!(small.len(), merged.len().min(lo));
            prop_assert_eq!(&small[..], &large[..small.len()]);
            Ok(())
        })
        .map_err(|e| format!("cap-prefix monotonicity: {e}"))?;
    Ok(())
}

#[test]
fn c9_ingest_properties_hold_under_random_inputs() {
    report(9, "ingest properties, 200 cases each", check_ingest_properties());
}
