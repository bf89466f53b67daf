//! Synthetic labeled transfer streams: heavy-tailed organic traffic, injected
//! wash-trading campaigns (self loops, matched pairs, bounded cycles), and an
//! optional terminal rug-pull whose timestamp is known exactly.
//!
//! Organic traffic follows a per-token priority orientation (every address
//! pair flows in one fixed direction), so reciprocal and cyclic structure
//! appears only where the generator injects it and the ground-truth index
//! lists stay authoritative. Campaign intensity defaults are equal across
//! classes; what separates the classes is trade dynamics. Rugged tokens run
//! a pump cadence (simultaneous tempo and size pulses over reused routes),
//! pause it during collection lulls where transfers fan into a few sink
//! wallets, and spend their final stretch in a pre-event ramp before
//! truncating exactly at the event, so the last observed transaction *is*
//! the rug-pull time. Each benign token instead picks one long-running
//! single-axis habit (tempo bursts, whale trades, route reuse, or airdrop
//! fan-outs), so no single behavioral axis separates the classes; only the
//! rugged conjunction does.

use crate::ingest::{
    write_normalized_csv, IngestError, Label, Quantity, TokenDataset, TransferRecord, DEFAULT_CAP,
};
use crate::seed::{derive_seed, tags};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Share of a rugged token's records that fall inside the pre-event ramp.
const RAMP_SHARE: f64 = 0.35;
/// Insider sender ranks used while the ramp concentrates routes.
const RAMP_SOURCES: usize = 5;
/// Number of receive-only sink wallets per token (collection and drain targets).
const SINK_COUNT: usize = 3;
/// How much of the burst multiplier carries over into trade sizes.
const RAMP_SIZE_SHARE: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Per-record probabilities of emitting each wash-trading event kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PatternIntensities {
    pub self_loops: f64,
    pub matched: f64,
    pub circular: f64,
}

impl PatternIntensities {
    pub fn sum(&self) -> f64 {
        self.self_loops + self.matched + self.circular
    }
}

/// Terminal-event shape for high-risk tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RugProfile {
    /// Event time as a fraction of the token's nominal organic span.
    pub event_fraction: f64,
    /// Arrival-rate and trade-size multiplier reached at the event.
    pub burst_multiplier: f64,
    /// Strength of the pre-event route-concentration ramp.
    pub concentration_ramp: f64,
}

impl Default for RugProfile {
    fn default() -> Self {
        Self { event_fraction: 0.85, burst_multiplier: 6.0, concentration_ramp: 0.7 }
    }
}

/// One class of tokens sharing a label and generation dials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TokenGroupSpec {
    pub label: Label,
    pub n_tokens: usize,
    pub min_records: usize,
    pub max_records: usize,
    #[serde(default)]
    pub intensities: PatternIntensities,
    #[serde(default)]
    pub rug: Option<RugProfile>,
}

/// Full generation recipe; output is a pure function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub address_pool: usize,
    /// Baseline organic arrival intensity.
    pub records_per_minute: f64,
    /// Zipf exponent of counterparty selection (long-tail concentration).
    pub counterparty_skew: f64,
    pub start_time: i64,
    pub min_cycle_len: usize,
    pub max_cycle_len: usize,
    pub groups: Vec<TokenGroupSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        default_scenario()
    }
}

/// The bundled benchmark scenario: 30 rugged + 30 organic tokens, 1,000 to
/// 5,000 records each, equal campaign noise in both classes, and the class
/// signal concentrated in trade dynamics.
pub fn default_scenario() -> ScenarioSpec {
    let intensities = PatternIntensities { self_loops: 0.02, matched: 0.05, circular: 0.03 };
    ScenarioSpec {
        seed: 42,
        address_pool: 200,
        records_per_minute: 2.0,
        counterparty_skew: 1.1,
        start_time: 1_700_000_000,
        min_cycle_len: 3,
        max_cycle_len: 5,
        groups: vec![
            TokenGroupSpec {
                label: Label::HighRisk,
                n_tokens: 30,
                min_records: 1000,
                max_records: 5000,
                intensities,
                rug: Some(RugProfile::default()),
            },
            TokenGroupSpec {
                label: Label::NonHighRisk,
                n_tokens: 30,
                min_records: 1000,
                max_records: 5000,
                intensities,
                rug: None,
            },
        ],
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.groups.is_empty() {
            return bad("at least one token group is required".into());
        }
        if self.address_pool < self.max_cycle_len + 2 || self.address_pool < 10 {
            return bad(format!("address_pool {} is too small", self.address_pool));
        }
        if !(self.records_per_minute.is_finite() && self.records_per_minute > 0.0) {
            return bad(format!("records_per_minute must be positive, got {}", self.records_per_minute));
        }
        if !(self.counterparty_skew.is_finite() && self.counterparty_skew > 0.0) {
            return bad(format!("counterparty_skew must be positive, got {}", self.counterparty_skew));
        }
        if self.start_time <= 0 {
            return bad(format!("start_time must be positive unix seconds, got {}", self.start_time));
        }
        if !(3..=6).contains(&self.min_cycle_len)
            || !(3..=6).contains(&self.max_cycle_len)
            || self.min_cycle_len > self.max_cycle_len
        {
            return bad(format!(
                "cycle length range {}..={} must sit inside 3..=6",
                self.min_cycle_len, self.max_cycle_len
            ));
        }
        for (gi, g) in self.groups.iter().enumerate() {
            if g.min_records < 2 || g.min_records > g.max_records {
                return bad(format!("group {gi}: record range {}..={} is invalid", g.min_records, g.max_records));
            }
            for (name, p) in [
                ("self_loops", g.intensities.self_loops),
                ("matched", g.intensities.matched),
                ("circular", g.intensities.circular),
            ] {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return bad(format!("group {gi}: intensity {name} = {p} outside [0, 1]"));
                }
            }
            if g.intensities.sum() > 1.0 {
                return bad(format!("group {gi}: intensities sum to {} > 1", g.intensities.sum()));
            }
            if let Some(rug) = &g.rug {
                if !(rug.event_fraction > 0.0 && rug.event_fraction <= 1.0) {
                    return bad(format!("group {gi}: event_fraction {} outside (0, 1]", rug.event_fraction));
                }
                if !(rug.burst_multiplier.is_finite() && rug.burst_multiplier >= 1.0) {
                    return bad(format!("group {gi}: burst_multiplier {} must be >= 1", rug.burst_multiplier));
                }
                if !(0.0..=1.0).contains(&rug.concentration_ramp) {
                    return bad(format!(
                        "group {gi}: concentration_ramp {} outside [0, 1]",
                        rug.concentration_ramp
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Positions (in final record order) of the injected wash-trading records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct InjectedIndices {
    pub self_loops: Vec<usize>,
    pub matched: Vec<usize>,
    pub circular: Vec<usize>,
}

/// Everything the generator knows about one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTruth {
    pub label: Label,
    /// Exactly the last record's timestamp for rugged tokens.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_rugpull: Option<i64>,
    pub n_records: usize,
    pub injected: InjectedIndices,
}

/// Scenario-level ground truth keyed by token address.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub tokens: BTreeMap<String, TokenTruth>,
}

/// Generates the scenario; deterministic for a spec, tokens independent.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<TokenDataset>, GroundTruth), SynthError> {
    spec.validate()?;
    let stream_root = derive_seed(spec.seed, tags::SYNTH_TOKEN);
    let jobs: Vec<(u64, &TokenGroupSpec)> = spec
        .groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(g, g.n_tokens))
        .enumerate()
        .map(|(i, g)| (i as u64, g))
        .collect();
    let generated: Vec<(TokenDataset, TokenTruth)> = jobs
        .par_iter()
        .map(|&(index, group)| generate_token(spec, group, index, derive_seed(stream_root, index)))
        .collect();
    let mut datasets = Vec::with_capacity(generated.len());
    let mut tokens = BTreeMap::new();
    for (ds, truth) in generated {
        tokens.insert(ds.token_address.clone(), truth);
        datasets.push(ds);
    }
    Ok((datasets, GroundTruth { seed: spec.seed, tokens }))
}

struct PlannedRecord {
    from: usize,
    to: usize,
    quantity: f64,
    /// Relative inter-arrival weight ahead of this record.
    gap_weight: f64,
}

/// Per-record behavioral regime, laid out before any record is drawn so that
/// long coherent stretches (and therefore whole analysis windows) share one
/// texture instead of flickering between regimes.
struct TexturePlan {
    /// Tempo multiplier (shrinks inter-arrival gaps).
    rate: Vec<f64>,
    /// Trade-size multiplier.
    size: Vec<f64>,
    /// Probability of re-walking an already-seen route.
    reuse: Vec<f64>,
    /// Collection stretch: transfers fan into the sink wallets.
    collect: Vec<bool>,
    /// Airdrop stretch: one hot sender sprays long-tail receivers.
    airdrop: Vec<bool>,
}

impl TexturePlan {
    fn calm(n: usize) -> Self {
        Self {
            rate: vec![1.0; n],
            size: vec![1.0; n],
            reuse: vec![0.0; n],
            collect: vec![false; n],
            airdrop: vec![false; n],
        }
    }
}

/// Benign tokens pick one long-running single-axis habit. Each habit imitates
/// one coordinate of the rugged signature (tempo, size, route reuse, or
/// sender concentration) over window-sized stretches, so single features
/// overlap across classes and only the rugged conjunction separates them.
fn plan_benign_texture(n: usize, rng: &mut ChaCha8Rng) -> TexturePlan {
    let mut plan = TexturePlan::calm(n);
    let style: f64 = rng.random();
    if style < 0.18 {
        return plan; // plain calm traffic
    }
    let mut pos = rng.random_range(150..650);
    while pos < n {
        let end = (pos + rng.random_range(250..650)).min(n);
        if style < 0.36 {
            plan.rate[pos..end].fill(rng.random_range(3.0..8.0));
        } else if style < 0.54 {
            plan.size[pos..end].fill(rng.random_range(3.0..8.0));
        } else if style < 0.78 {
            plan.reuse[pos..end].fill(rng.random_range(0.45..0.75));
        } else {
            plan.airdrop[pos..end].fill(true);
        }
        pos = end + rng.random_range(300..900);
    }
    plan
}

/// Rugged tokens run a pump cadence: short pulses that raise tempo and trade
/// size together over reused routes, frequent enough that every full analysis
/// window contains at least one. The cadence pauses during long collection
/// lulls where transfers fan into the sink wallets instead.
fn plan_rug_texture(n: usize, rng: &mut ChaCha8Rng) -> TexturePlan {
    let mut plan = TexturePlan::calm(n);
    let base_reuse = rng.random_range(0.0..0.1);
    plan.reuse.fill(base_reuse);
    let mut pos = rng.random_range(40..200);
    while pos < n {
        let end = (pos + rng.random_range(40..100)).min(n);
        plan.rate[pos..end].fill(rng.random_range(3.0..6.0));
        plan.size[pos..end].fill(rng.random_range(3.0..6.0));
        pos = end + rng.random_range(120..320);
    }
    // One collection lull sits before the ramp and out-spans one analysis
    // window, so a stretch of windows is quiet on the trade axes while the
    // routing keeps pointing at the sinks.
    let (lo, hi) = (n / 12, n * 58 / 100);
    let len = rng.random_range(520..620).min(hi - lo);
    if len > 0 {
        let start = rng.random_range(lo..=hi - len);
        for i in start..(start + len).min(n) {
            plan.rate[i] = 1.0;
            plan.size[i] = 1.0;
            plan.reuse[i] = 0.0;
            plan.collect[i] = true;
        }
    }
    plan
}

fn generate_token(
    spec: &ScenarioSpec,
    group: &TokenGroupSpec,
    token_index: u64,
    token_seed: u64,
) -> (TokenDataset, TokenTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(token_seed);
    let token_address = format!("0xtok{token_index:04}");
    let n = rng.random_range(group.min_records..=group.max_records);
    let pool = spec.address_pool;

    // Per-token identity layers: which address each popularity rank maps to,
    // and the priority that orients every organic pair into a fixed direction.
    let mut rank_to_addr: Vec<usize> = (0..pool).collect();
    rank_to_addr.shuffle(&mut rng);
    let mut priority: Vec<usize> = (0..pool).collect();
    priority.shuffle(&mut rng);

    let zipf = Zipf::new(pool as f64, spec.counterparty_skew).expect("validated skew");
    let qty_dist = LogNormal::new(1.0, 1.0).expect("constant parameters");
    let exp = Exp::new(1.0).expect("constant rate");
    let draw_rank = |rng: &mut ChaCha8Rng| (zipf.sample(rng) as usize - 1).min(pool - 1);

    // Per-token tempo and trade-size scales overlap heavily across tokens, so
    // absolute pace and absolute amounts carry no label signal by themselves.
    let base_rate = (rng.random::<f64>() * (4.0f64 / 0.5).ln() + 0.5f64.ln()).exp();
    let qty_scale = (rng.random::<f64>() * (3.0f64 / 0.3).ln() + 0.3f64.ln()).exp();
    // The airdrop sender is the address that organically only ever sends, and
    // the sink wallets are the addresses that organically only ever receive,
    // so neither texture can create reciprocal or cyclic structure.
    let airdrop_sender = priority.iter().position(|&p| p == 0).expect("permutation");
    let sinks: Vec<usize> = (0..pool).filter(|&a| priority[a] + SINK_COUNT >= pool).collect();
    let texture = if group.rug.is_some() {
        plan_rug_texture(n, &mut rng)
    } else {
        plan_benign_texture(n, &mut rng)
    };

    let p_self = group.intensities.self_loops;
    let p_matched = p_self + group.intensities.matched;
    let p_cycle = p_matched + group.intensities.circular;
    let ramp_start = 1.0 - RAMP_SHARE;

    let mut planned: Vec<PlannedRecord> = Vec::with_capacity(n);
    let mut injected = InjectedIndices::default();
    let mut seen_pairs: Vec<(usize, usize)> = Vec::new();
    let mut seen_pair_set: HashSet<(usize, usize)> = HashSet::new();

    while planned.len() < n {
        let made = planned.len();
        let budget = n - made;
        let progress = made as f64 / n as f64;
        // Ramp intensity rises linearly across the rugged tail.
        let time_ramp = match &group.rug {
            Some(_) if progress >= ramp_start => (progress - ramp_start) / RAMP_SHARE,
            _ => 0.0,
        };
        let (ramp_rate, ramp_size, concentration) = match &group.rug {
            Some(rug) => (
                1.0 + (rug.burst_multiplier - 1.0) * time_ramp,
                1.0 + (rug.burst_multiplier - 1.0) * time_ramp * RAMP_SIZE_SHARE,
                rug.concentration_ramp * time_ramp,
            ),
            None => (1.0, 1.0, 0.0),
        };
        let tempo = ramp_rate * texture.rate[made];
        let gap = |rng: &mut ChaCha8Rng| exp.sample(rng) / tempo;

        let u: f64 = rng.random();
        if u < p_self {
            let a = draw_rank(&mut rng);
            injected.self_loops.push(made);
            planned.push(PlannedRecord {
                from: rank_to_addr[a],
                to: rank_to_addr[a],
                quantity: qty_dist.sample(&mut rng) * qty_scale,
                gap_weight: gap(&mut rng),
            });
            continue;
        }
        if u < p_matched && budget >= 2 {
            let a = draw_rank(&mut rng);
            let mut b = draw_rank(&mut rng);
            while b == a {
                b = draw_rank(&mut rng);
            }
            let q = qty_dist.sample(&mut rng) * qty_scale;
            injected.matched.push(made);
            injected.matched.push(made + 1);
            planned.push(PlannedRecord {
                from: rank_to_addr[a],
                to: rank_to_addr[b],
                quantity: q,
                gap_weight: gap(&mut rng),
            });
            planned.push(PlannedRecord {
                from: rank_to_addr[b],
                to: rank_to_addr[a],
                quantity: q,
                gap_weight: 0.02 * gap(&mut rng),
            });
            continue;
        }
        if u < p_cycle {
            let len = rng.random_range(spec.min_cycle_len..=spec.max_cycle_len);
            if budget >= len {
                let mut ranks: Vec<usize> = Vec::with_capacity(len);
                while ranks.len() < len {
                    let r = draw_rank(&mut rng);
                    if !ranks.contains(&r) {
                        ranks.push(r);
                    }
                }
                let q = qty_dist.sample(&mut rng) * qty_scale;
                for leg in 0..len {
                    injected.circular.push(made + leg);
                    planned.push(PlannedRecord {
                        from: rank_to_addr[ranks[leg]],
                        to: rank_to_addr[ranks[(leg + 1) % len]],
                        quantity: q,
                        gap_weight: if leg == 0 { gap(&mut rng) } else { 0.02 * gap(&mut rng) },
                    });
                }
                continue;
            }
        }

        // Organic record, routed by the active texture or the ramp.
        let reuse_route = !seen_pairs.is_empty()
            && rng.random::<f64>() < (0.65 * concentration).max(texture.reuse[made]);
        let (from, to) = if reuse_route {
            seen_pairs[rng.random_range(0..seen_pairs.len())]
        } else if texture.collect[made] && rng.random::<f64>() < 0.9 {
            // Collection: broad senders fan into the sink wallets.
            let mut src = rank_to_addr[draw_rank(&mut rng)];
            while sinks.contains(&src) {
                src = rank_to_addr[draw_rank(&mut rng)];
            }
            (src, sinks[rng.random_range(0..sinks.len())])
        } else if concentration > 0.0 && rng.random::<f64>() < concentration {
            // Insiders push holdings toward the same sinks as the ramp peaks.
            let mut src = rank_to_addr[rng.random_range(0..RAMP_SOURCES)];
            while sinks.contains(&src) {
                src = rank_to_addr[rng.random_range(0..RAMP_SOURCES + SINK_COUNT)];
            }
            (src, sinks[rng.random_range(0..sinks.len())])
        } else if texture.airdrop[made] {
            // Airdrop: one hot sender sprays long-tail receivers.
            let mut dst = rank_to_addr[rng.random_range(pool / 2..pool)];
            while dst == airdrop_sender {
                dst = rank_to_addr[rng.random_range(pool / 2..pool)];
            }
            (airdrop_sender, dst)
        } else {
            let a = draw_rank(&mut rng);
            let mut b = draw_rank(&mut rng);
            while b == a {
                b = draw_rank(&mut rng);
            }
            let (a, b) = (rank_to_addr[a], rank_to_addr[b]);
            // Priority orientation: organic pairs always flow one way.
            if priority[a] <= priority[b] {
                (a, b)
            } else {
                (b, a)
            }
        };
        if seen_pair_set.insert((from, to)) {
            seen_pairs.push((from, to));
        }
        planned.push(PlannedRecord {
            from,
            to,
            quantity: qty_dist.sample(&mut rng) * qty_scale * texture.size[made] * ramp_size,
            gap_weight: gap(&mut rng),
        });
    }
    debug_assert_eq!(planned.len(), n);

    // Lay the records over [start, start + span]: cumulative gap weights are
    // rescaled so a rugged token ends exactly at its event time.
    let nominal_span = n as f64 * 60.0 / (spec.records_per_minute * base_rate);
    let span = match &group.rug {
        Some(rug) => nominal_span * rug.event_fraction,
        None => nominal_span,
    };
    let total_weight: f64 = planned.iter().skip(1).map(|p| p.gap_weight).sum();
    let mut records = Vec::with_capacity(n);
    let mut cum = 0.0;
    for (i, p) in planned.iter().enumerate() {
        if i > 0 {
            cum += p.gap_weight;
        }
        let offset = if total_weight > 0.0 { cum / total_weight * span } else { 0.0 };
        records.push(TransferRecord {
            token_address: token_address.clone(),
            tx_hash: format!("0x{token_index:06x}{i:010x}"),
            from_addr: format!("0xaddr{:04}", p.from),
            to_addr: format!("0xaddr{:04}", p.to),
            quantity: Quantity::Float(p.quantity),
            timestamp: spec.start_time + offset.round() as i64,
        });
    }
    let t_rugpull = group.rug.as_ref().map(|_| records.last().expect("n >= 2").timestamp);

    let dataset = TokenDataset { token_address: token_address.clone(), records, label: group.label, cap: DEFAULT_CAP };
    let truth = TokenTruth { label: group.label, t_rugpull, n_records: n, injected };
    (dataset, truth)
}

/// Reads a scenario spec from a JSON file.
pub fn scenario_from_file(path: &Path) -> Result<ScenarioSpec, SynthError> {
    let text = fs::read_to_string(path).map_err(|source| SynthError::Io { path: path.into(), source })?;
    let spec: ScenarioSpec =
        serde_json::from_str(&text).map_err(|source| SynthError::Json { path: path.into(), source })?;
    spec.validate()?;
    Ok(spec)
}

/// Writes per-token CSVs plus `ground_truth.json`, `labels.csv`, and
/// `events.csv` (rug times) into `dir`.
pub fn write_outputs(datasets: &[TokenDataset], truth: &GroundTruth, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(|source| SynthError::Io { path: dir.into(), source })?;
    for ds in datasets {
        write_normalized_csv(ds, &dir.join(format!("{}.csv", ds.token_address)))?;
    }

    let labels_path = dir.join("labels.csv");
    let mut labels = String::from("token_address,label\n");
    let events_path = dir.join("events.csv");
    let mut events = String::from("token_address,t_rugpull_unix\n");
    for (token, t) in &truth.tokens {
        labels.push_str(&format!("{token},{}\n", t.label.as_str()));
        if let Some(ts) = t.t_rugpull {
            events.push_str(&format!("{token},{ts}\n"));
        }
    }
    fs::write(&labels_path, labels).map_err(|source| SynthError::Io { path: labels_path.clone(), source })?;
    fs::write(&events_path, events).map_err(|source| SynthError::Io { path: events_path.clone(), source })?;

    let truth_path = dir.join("ground_truth.json");
    let json = serde_json::to_string_pretty(truth)
        .map_err(|source| SynthError::Json { path: truth_path.clone(), source })?;
    fs::write(&truth_path, json).map_err(|source| SynthError::Io { path: truth_path.clone(), source })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{compute_features, FEATURE_COUNT};
    use crate::models::Scaler;
    use crate::patterns::{circular_record_flags, matched_record_flags, self_record_flags, score_patterns, PatternParams};

    fn small_spec(intensities: PatternIntensities, rug: Option<RugProfile>) -> ScenarioSpec {
        ScenarioSpec {
            seed: 7,
            address_pool: 60,
            records_per_minute: 2.0,
            counterparty_skew: 1.1,
            start_time: 1_700_000_000,
            min_cycle_len: 3,
            max_cycle_len: 5,
            groups: vec![TokenGroupSpec {
                label: Label::HighRisk,
                n_tokens: 2,
                min_records: 400,
                max_records: 600,
                intensities,
                rug,
            }],
        }
    }

    #[test]
    fn generation_is_deterministic_and_well_formed() {
        let spec = small_spec(
            PatternIntensities { self_loops: 0.05, matched: 0.1, circular: 0.05 },
            Some(RugProfile::default()),
        );
        let (a, truth_a) = generate(&spec).unwrap();
        let (b, truth_b) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(truth_a, truth_b);

        for ds in &a {
            let t = &truth_a.tokens[&ds.token_address];
            assert_eq!(t.n_records, ds.records.len());
            assert!((400..=600).contains(&ds.records.len()));
            assert_eq!(t.t_rugpull, Some(ds.records.last().unwrap().timestamp));

            let mut keys: Vec<_> = ds.records.iter().map(|r| r.order_key()).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            assert_eq!(keys, sorted, "records must arrive time-ordered");
            keys.dedup();
            assert_eq!(keys.len(), ds.records.len(), "tx hashes must be unique");
            assert!(ds.records.iter().all(|r| r.timestamp >= spec.start_time));
        }

        let different_seed = ScenarioSpec { seed: 8, ..spec };
        let (c, _) = generate(&different_seed).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_intensity_organic_streams_stay_pattern_free() {
        let mut spec = small_spec(PatternIntensities::default(), None);
        spec.groups[0].min_records = 1000;
        spec.groups[0].max_records = 1000;
        let (datasets, _) = generate(&spec).unwrap();
        for ds in &datasets {
            let scores = score_patterns(&ds.records, &PatternParams::default()).unwrap();
            assert!(scores.self_score < 0.05, "self {}", scores.self_score);
            assert!(scores.matched_score < 0.05, "matched {}", scores.matched_score);
            assert!(scores.circular_score < 0.05, "circular {}", scores.circular_score);
        }
    }

    #[test]
    fn zero_intensity_rugged_streams_stay_pattern_free() {
        let mut spec = small_spec(PatternIntensities::default(), Some(RugProfile::default()));
        spec.groups[0].min_records = 2000;
        spec.groups[0].max_records = 2000;
        let (datasets, _) = generate(&spec).unwrap();
        for ds in &datasets {
            let scores = score_patterns(&ds.records, &PatternParams::default()).unwrap();
            assert!(scores.self_score < 0.05, "self {}", scores.self_score);
            assert!(scores.matched_score < 0.05, "matched {}", scores.matched_score);
            assert!(scores.circular_score < 0.05, "circular {}", scores.circular_score);
        }
    }

    #[test]
    fn detectors_recover_injected_records() {
        let cases = [
            PatternIntensities { self_loops: 1.0, ..Default::default() },
            PatternIntensities { matched: 1.0, ..Default::default() },
            PatternIntensities { circular: 1.0, ..Default::default() },
        ];
        for intensities in cases {
            let spec = small_spec(intensities, None);
            let (datasets, truth) = generate(&spec).unwrap();
            for ds in &datasets {
                let t = &truth.tokens[&ds.token_address];
                let recall = |injected: &[usize], flags: &[bool]| {
                    if injected.is_empty() {
                        return 1.0;
                    }
                    let hit = injected.iter().filter(|&&i| flags[i]).count();
                    hit as f64 / injected.len() as f64
                };
                let self_flags = self_record_flags(&ds.records).unwrap();
                let matched_flags = matched_record_flags(&ds.records, 60).unwrap();
                let circular_flags = circular_record_flags(&ds.records, 60, 5).unwrap();
                assert!(recall(&t.injected.self_loops, &self_flags) >= 0.95);
                assert!(recall(&t.injected.matched, &matched_flags) >= 0.95);
                assert!(recall(&t.injected.circular, &circular_flags) >= 0.95);
                let n_injected =
                    t.injected.self_loops.len() + t.injected.matched.len() + t.injected.circular.len();
                assert!(n_injected as f64 >= 0.9 * ds.records.len() as f64, "intensity 1.0 fills the stream");
            }
        }
    }

    #[test]
    fn circular_intensity_saturates_the_detector_score() {
        let mut spec = small_spec(PatternIntensities { circular: 1.0, ..Default::default() }, None);
        spec.max_cycle_len = 3;
        let (datasets, _) = generate(&spec).unwrap();
        for ds in &datasets {
            let scores = score_patterns(&ds.records, &PatternParams::default()).unwrap();
            assert!(scores.circular_score >= 0.9, "got {}", scores.circular_score);
        }
    }

    // Class centroid distance in standardized feature space, two groups.
    fn centroid_distance(level: PatternIntensities) -> f64 {
        let spec = ScenarioSpec {
            seed: 11,
            groups: vec![
                TokenGroupSpec {
                    label: Label::HighRisk,
                    n_tokens: 8,
                    min_records: 300,
                    max_records: 500,
                    intensities: level,
                    rug: None,
                },
                TokenGroupSpec {
                    label: Label::NonHighRisk,
                    n_tokens: 8,
                    min_records: 300,
                    max_records: 500,
                    intensities: PatternIntensities::default(),
                    rug: None,
                },
            ],
            ..small_spec(PatternIntensities::default(), None)
        };
        let (datasets, _) = generate(&spec).unwrap();
        let rows: Vec<Vec<f64>> = datasets
            .iter()
            .map(|ds| compute_features(&ds.records).unwrap().values().to_vec())
            .collect();
        let scaler = Scaler::fit(&rows);
        let scaled = scaler.transform(&rows);
        let centroid = |label: Label| -> Vec<f64> {
            let picked: Vec<&Vec<f64>> = datasets
                .iter()
                .zip(&scaled)
                .filter(|(ds, _)| ds.label == label)
                .map(|(_, row)| row)
                .collect();
            (0..FEATURE_COUNT)
                .map(|j| picked.iter().map(|r| r[j]).sum::<f64>() / picked.len() as f64)
                .collect()
        };
        let hi = centroid(Label::HighRisk);
        let lo = centroid(Label::NonHighRisk);
        hi.iter().zip(&lo).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    #[test]
    fn raising_intensity_separates_the_classes() {
        let low = centroid_distance(PatternIntensities { self_loops: 0.01, matched: 0.02, circular: 0.01 });
        let mid = centroid_distance(PatternIntensities { self_loops: 0.1, matched: 0.15, circular: 0.1 });
        let high = centroid_distance(PatternIntensities { self_loops: 0.2, matched: 0.3, circular: 0.25 });
        assert!(low < mid, "low {low} vs mid {mid}");
        assert!(mid < high, "mid {mid} vs high {high}");
    }

    #[test]
    fn rugged_tokens_compress_their_tail() {
        let rug = RugProfile { event_fraction: 0.8, burst_multiplier: 8.0, concentration_ramp: 0.8 };
        let mut spec = small_spec(PatternIntensities::default(), Some(rug));
        spec.groups[0].min_records = 2000;
        spec.groups[0].max_records = 2000;
        let (datasets, truth) = generate(&spec).unwrap();
        for ds in &datasets {
            let n = ds.records.len();
            let t = &truth.tokens[&ds.token_address];
            assert_eq!(t.t_rugpull, Some(ds.records[n - 1].timestamp));
            // The deep ramp packs the last records into far less wall-clock
            // time than the organic opening stretch.
            let head_span = ds.records[n / 10].timestamp - ds.records[0].timestamp;
            let tail_span = ds.records[n - 1].timestamp - ds.records[n - n / 10].timestamp;
            assert!(tail_span * 2 < head_span, "tail {tail_span} vs head {head_span}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let ok = small_spec(PatternIntensities::default(), None);
        assert!(ok.validate().is_ok());

        let mut s = ok.clone();
        s.groups[0].intensities = PatternIntensities { self_loops: 0.5, matched: 0.4, circular: 0.3 };
        assert!(matches!(s.validate(), Err(SynthError::InvalidSpec(_))));

        let mut s = ok.clone();
        s.groups[0].rug = Some(RugProfile { event_fraction: 0.0, ..Default::default() });
        assert!(s.validate().is_err());

        let mut s = ok.clone();
        s.max_cycle_len = 7;
        assert!(s.validate().is_err());

        let mut s = ok.clone();
        s.records_per_minute = 0.0;
        assert!(s.validate().is_err());

        let mut s = ok.clone();
        s.groups.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn outputs_round_trip_through_the_ingest_reader() {
        let spec = small_spec(
            PatternIntensities { self_loops: 0.02, matched: 0.05, circular: 0.03 },
            Some(RugProfile::default()),
        );
        let (datasets, truth) = generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&datasets, &truth, dir.path()).unwrap();

        let labels = crate::ingest::read_label_file(&dir.path().join("labels.csv")).unwrap();
        assert_eq!(labels.len(), datasets.len());
        assert!(labels.values().all(|l| *l == Label::HighRisk));

        let events = crate::metrics::read_event_file(&dir.path().join("events.csv")).unwrap();
        for ds in &datasets {
            assert_eq!(events[&ds.token_address], ds.records.last().unwrap().timestamp);
        }

        let parsed: GroundTruth =
            serde_json::from_str(&fs::read_to_string(dir.path().join("ground_truth.json")).unwrap()).unwrap();
        assert_eq!(parsed, truth);

        for ds in &datasets {
            let path = dir.path().join(format!("{}.csv", ds.token_address));
            let parsed = crate::ingest::parse_csv(
                &path,
                &crate::ingest::CsvSchema::default(),
                crate::ingest::QuantityMode::Float,
            )
            .unwrap();
            assert!(parsed.row_errors.is_empty());
            assert_eq!(parsed.records, ds.records);
        }
    }

    #[test]
    fn default_scenario_matches_its_contract() {
        let spec = default_scenario();
        spec.validate().unwrap();
        assert_eq!(spec.seed, 42);
        let (pos, neg) = (&spec.groups[0], &spec.groups[1]);
        assert_eq!((pos.n_tokens, neg.n_tokens), (30, 30));
        assert_eq!((pos.min_records, pos.max_records), (1000, 5000));
        assert_eq!(pos.label, Label::HighRisk);
        assert!(pos.rug.is_some() && neg.rug.is_none());
        assert_eq!(pos.intensities, neg.intensities, "campaign noise must not be the class signal");
    }
}
