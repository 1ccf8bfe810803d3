//! Experiment orchestration: run configs, the replica pipeline, bound
//! records, and replay of single replicas.
//!
//! Replica `i` of a run with master seed `s` draws everything from
//! `replica_seed(s, i)`, so results do not depend on thread count and any
//! replica can be recomputed alone.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{component_of, greedy_anchored_ratio};
use crate::construction::{build_window, ConstructionParams, RootLaw, TailMode, Window};
use crate::error::{Error, Result};
use crate::exact;
use crate::graph::{filter, GraphDump};
use crate::gw::{extinction_probability, ld_sweep, GWConfig, LdSweep};
use crate::noise::{apply_noise, NoiseParams};
use crate::rng::{mix, mix_all, replica_seed, tag};
use crate::stats::{median, Proportion};
use crate::unimod::{mass_transport_test, MassTransport, Sampler};
use crate::witness::{build_k_or_flag, event_a, witness_at_root_or_flag, WitnessParams, WitnessReport};

pub const SCHEMA: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rejection attempts for event `A`, which has probability about 0.23.
const MAX_ATTEMPTS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub replicas: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    VerifyBounds(BoundsConfig),
    GwLd(GwLdConfig),
    Folner(FolnerConfig),
    Sample(SampleConfig),
    UnimodTest(UnimodConfig),
    Baseline(BaselineConfig),
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self { seed: 0, replicas: 100_000, threads: None, budget: 10_000_000, out: None, command }
    }

    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// SHA-256 of the JSON form and the crate version. Thread count and
    /// output path do not affect results and are left out.
    pub fn hash(&self) -> String {
        let bare = RunConfig { threads: None, out: None, ..self.clone() };
        digest(&serde_json::to_string(&bare).expect("config serializes"))
    }
}

fn digest(body: &str) -> String {
    let mut h = Sha256::new();
    h.update(body.as_bytes());
    h.update(b"\0");
    h.update(VERSION.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCase {
    pub delta: f64,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    pub eps: f64,
    pub delta: f64,
    pub noise_seed: Option<u64>,
    pub level_cap: u32,
    pub good_vertex_n: Vec<u32>,
    pub nice_n: Vec<u32>,
    pub boundary_n: Vec<u32>,
    pub path_cases: Vec<PathCase>,
    /// Replica records kept per stream besides the flagged ones.
    pub keep_records: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            delta: 0.01,
            noise_seed: None,
            level_cap: 2,
            good_vertex_n: vec![1, 2, 3],
            nice_n: vec![1, 2, 3],
            boundary_n: vec![2, 3],
            path_cases: vec![PathCase { delta: 0.05, n: 2 }, PathCase { delta: 0.01, n: 4 }],
            keep_records: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwLdConfig {
    pub delta: f64,
    pub kappa: f64,
    pub n_min: u32,
    pub n_max: u32,
    pub min_survivors: u64,
    /// Noise levels for the rate comparison and the extinction check.
    pub lambda_deltas: Vec<f64>,
    pub lambda_n_max: u32,
}

impl Default for GwLdConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            kappa: 2.0,
            n_min: 4,
            n_max: 10,
            min_survivors: 100_000,
            lambda_deltas: vec![0.2, 0.1, 0.05],
            lambda_n_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FolnerConfig {
    pub n_min: u32,
    pub n_max: u32,
    pub eps: f64,
    pub delta: f64,
    pub noise_seed: Option<u64>,
    pub level_cap: u32,
    /// Successful constructions wanted per `n`; `replicas` caps attempts.
    pub successes: u64,
    pub search_radius: Option<u32>,
    pub niceness_budget: usize,
    pub keep_records: usize,
}

impl Default for FolnerConfig {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 7,
            eps: 0.01,
            delta: 0.01,
            noise_seed: None,
            level_cap: 2,
            successes: 200,
            search_radius: None,
            niceness_budget: 2_000_000,
            keep_records: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub level_cap: u32,
    pub root_law: RootLaw,
    pub tail_mode: TailMode,
    pub radius: u32,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub noise_seed: Option<u64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            level_cap: 2,
            root_law: RootLaw::default(),
            tail_mode: TailMode::default(),
            radius: 4,
            eps: None,
            delta: None,
            noise_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnimodConfig {
    pub sampler: Sampler,
    pub radius: u32,
    pub samples: usize,
    pub levels: bool,
    pub alpha: f64,
}

impl Default for UnimodConfig {
    fn default() -> Self {
        Self { sampler: Sampler::CanopyPlus, radius: 2, samples: 100_000, levels: false, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub p: f64,
    pub steps: usize,
    pub threshold: f64,
    /// Required fraction of replicas staying above `threshold`.
    pub fraction: f64,
    /// Component size counted as reaching the frontier.
    pub frontier_limit: usize,
    pub max_attempts: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { p: 0.9, steps: 10_000, threshold: 0.1, fraction: 0.95, frontier_limit: 1_000, max_attempts: 100_000 }
    }
}

/// Everything that determines one replica besides its index and seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Witness {
        n: u32,
        eps: f64,
        delta: f64,
        level_cap: u32,
        build_k: bool,
        search_radius: u32,
        niceness_budget: usize,
    },
    Baseline {
        p: f64,
        steps: usize,
        frontier_limit: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub touches_frontier: bool,
    pub component_size: usize,
    pub min_ratio: Option<f64>,
    pub final_ratio: Option<f64>,
    pub set_size: usize,
    pub budget_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    Witness(WitnessReport),
    Baseline(BaselineOutcome),
}

impl Outcome {
    pub fn witness(&self) -> Option<&WitnessReport> {
        match self {
            Outcome::Witness(w) => Some(w),
            Outcome::Baseline(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub schema: u32,
    /// Hash of the experiment, budget and crate version.
    pub config_hash: String,
    pub seed: u64,
    pub noise_seed: Option<u64>,
    pub budget: usize,
    pub index: u64,
    pub experiment: Experiment,
    /// Samples drawn until the conditioning event held.
    pub attempts: u64,
    pub outcome: Outcome,
}

pub fn experiment_hash(experiment: &Experiment, budget: usize) -> String {
    let body = serde_json::to_string(&(experiment, budget)).expect("experiment serializes");
    digest(&body)
}

/// Window of replica seed `rs` conditioned on `A`, by rejection.
fn conditioned_window(rs: u64, level_cap: u32, budget: usize) -> Result<(Window, u64)> {
    for attempt in 0..MAX_ATTEMPTS {
        let params = ConstructionParams {
            seed: mix_all(&[rs, tag::ATTEMPT, attempt]),
            level_cap,
            vertex_budget: budget,
            ..ConstructionParams::default()
        };
        let win = Window::from_params(&params)?;
        if event_a(win.graph()) {
            return Ok((win, attempt + 1));
        }
    }
    Err(Error::InvalidParameter(format!("event A not met in {MAX_ATTEMPTS} attempts")))
}

fn noise_seed_for(rs: u64, noise_seed: Option<u64>, index: u64) -> u64 {
    match noise_seed {
        Some(s) => replica_seed(s, index),
        None => mix(rs, tag::NOISE_SEED),
    }
}

/// Runs replica `index` of `experiment` from scratch.
pub fn run_replica(experiment: &Experiment, seed: u64, noise_seed: Option<u64>, budget: usize, index: u64) -> Result<ReplicaRecord> {
    let rs = replica_seed(seed, index);
    let ns = noise_seed_for(rs, noise_seed, index);
    let (attempts, outcome) = match *experiment {
        Experiment::Witness { n, eps, delta, level_cap, build_k, search_radius, niceness_budget } => {
            let (mut win, attempts) = conditioned_window(rs, level_cap, budget)?;
            apply_noise(&mut win, NoiseParams::new(eps, delta, ns)?)?;
            let report = if build_k {
                build_k_or_flag(&mut win, &WitnessParams { n, search_radius, niceness_budget })?
            } else {
                witness_at_root_or_flag(&mut win, n)?
            };
            (attempts, Outcome::Witness(report))
        }
        Experiment::Baseline { p, steps, frontier_limit } => {
            let params = ConstructionParams {
                seed: rs,
                vertex_budget: budget,
                root_law: RootLaw::CanopyLeaf,
                ..ConstructionParams::default()
            };
            let mut win = Window::from_params(&params)?;
            apply_noise(&mut win, NoiseParams::new(p, 0.0, ns)?)?;
            let root = win.root();
            let cluster = component_of(&mut win, root, filter::bernoulli, frontier_limit)?;
            let mut out = BaselineOutcome {
                touches_frontier: cluster.touches_frontier,
                component_size: cluster.component_size,
                min_ratio: None,
                final_ratio: None,
                set_size: 0,
                budget_exceeded: cluster.budget_exceeded,
            };
            if cluster.touches_frontier {
                let est = greedy_anchored_ratio(&mut win, root, filter::bernoulli, steps)?;
                out.min_ratio = Some(est.min_ratio);
                out.final_ratio = est.trajectory.last().map(|s| s.ratio);
                out.set_size = est.trajectory.last().map_or(0, |s| s.size);
                out.budget_exceeded |= est.budget_exceeded;
            }
            (1, Outcome::Baseline(out))
        }
    };
    Ok(ReplicaRecord {
        schema: SCHEMA,
        config_hash: experiment_hash(experiment, budget),
        seed,
        noise_seed,
        budget,
        index,
        experiment: *experiment,
        attempts,
        outcome,
    })
}

/// Recomputes a record. Fails with `ConfigMismatch` when the record was
/// produced by a different experiment definition or crate version.
pub fn replay(record: &ReplicaRecord) -> Result<ReplicaRecord> {
    let found = experiment_hash(&record.experiment, record.budget);
    if found != record.config_hash {
        return Err(Error::ConfigMismatch { expected: record.config_hash.clone(), found });
    }
    run_replica(&record.experiment, record.seed, record.noise_seed, record.budget, record.index)
}

fn run_range(experiment: &Experiment, seed: u64, noise_seed: Option<u64>, budget: usize, range: std::ops::Range<u64>) -> Result<Vec<ReplicaRecord>> {
    range
        .into_par_iter()
        .map(|i| run_replica(experiment, seed, noise_seed, budget, i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// The upper confidence limit reaches the bound.
    CiHighAtLeast,
    /// The lower confidence limit clears the bound.
    CiLowAtLeast,
    /// The upper confidence limit stays below the bound.
    CiHighAtMost,
    /// Within three standard deviations of the bound, taken as exact.
    ThreeSigma,
    /// The point estimate reaches the bound.
    EstimateAtLeast,
    /// Every trial succeeds.
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub bound_id: String,
    /// The inequality being checked, in words.
    pub statement: String,
    pub n: u32,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub comparison: Comparison,
    pub analytic_bound: f64,
    pub empirical_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: u64,
    pub trials: u64,
    pub pass: bool,
    pub replicas: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

struct RecordSpec<'a> {
    id: &'a str,
    statement: String,
    n: u32,
    eps: Option<f64>,
    delta: Option<f64>,
    comparison: Comparison,
    bound: f64,
}

impl RecordSpec<'_> {
    fn evaluate(self, successes: u64, trials: u64, replicas: u64, seed: u64) -> BoundRecord {
        let (estimate, lo, hi) = if trials == 0 {
            (f64::NAN, 0.0, 1.0)
        } else {
            let p = Proportion::new(successes, trials);
            (p.estimate, p.ci_low, p.ci_high)
        };
        let b = self.bound;
        let pass = trials > 0
            && match self.comparison {
                Comparison::CiHighAtLeast => hi >= b,
                Comparison::CiLowAtLeast => lo >= b,
                Comparison::CiHighAtMost => hi <= b,
                Comparison::ThreeSigma => (estimate - b).abs() <= 3.0 * (b * (1.0 - b) / trials as f64).sqrt(),
                Comparison::EstimateAtLeast => estimate >= b,
                Comparison::Always => successes == trials,
            };
        BoundRecord {
            bound_id: self.id.to_string(),
            statement: self.statement,
            n: self.n,
            eps: self.eps,
            delta: self.delta,
            comparison: self.comparison,
            analytic_bound: b,
            empirical_estimate: estimate,
            ci_low: lo,
            ci_high: hi,
            successes,
            trials,
            pass,
            replicas,
            seed,
            note: (trials == 0).then(|| "no eligible replicas".to_string()),
        }
    }
}

/// Replica counts of one stream. `replicas = good + no_good + budget_exceeded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub experiment: Experiment,
    pub replicas: u64,
    pub good: u64,
    pub no_good: u64,
    pub budget_exceeded: u64,
    pub b_n: u64,
    pub nice: u64,
    pub mean_attempts: f64,
}

impl StreamSummary {
    fn of(experiment: Experiment, records: &[ReplicaRecord]) -> Self {
        let w = || records.iter().filter_map(|r| r.outcome.witness());
        let budget_exceeded = w().filter(|r| r.budget_exceeded).count() as u64;
        let good = w().filter(|r| r.good_vertex_found).count() as u64;
        Self {
            experiment,
            replicas: records.len() as u64,
            good,
            no_good: records.len() as u64 - good - budget_exceeded,
            budget_exceeded,
            b_n: w().filter(|r| r.b_n_holds).count() as u64,
            nice: w().filter(|r| r.root_nice).count() as u64,
            mean_attempts: records.iter().map(|r| r.attempts as f64).sum::<f64>() / records.len().max(1) as f64,
        }
    }

    pub fn balanced(&self) -> bool {
        self.replicas == self.good + self.no_good + self.budget_exceeded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub records: Vec<BoundRecord>,
    pub streams: Vec<StreamSummary>,
    /// First replicas of each stream plus every flagged one.
    pub replica_records: Vec<ReplicaRecord>,
    pub all_pass: bool,
}

/// Witness streams needed by `bc`, each a distinct `(n, eps, delta)`.
fn bound_streams(bc: &BoundsConfig) -> Vec<Experiment> {
    let witness = |n, delta| Experiment::Witness {
        n,
        eps: bc.eps,
        delta,
        level_cap: bc.level_cap,
        build_k: false,
        search_radius: n * n,
        niceness_budget: 0,
    };
    let mut out: Vec<Experiment> = Vec::new();
    let ns = bc.good_vertex_n.iter().chain(&bc.nice_n).chain(&bc.boundary_n);
    let all = ns.map(|&n| witness(n, bc.delta)).chain(bc.path_cases.iter().map(|c| witness(c.n, c.delta)));
    for e in all {
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

fn flagged(r: &WitnessReport) -> bool {
    r.budget_exceeded || r.nice_checks_hold() == Some(false)
}

pub fn verify_bounds(cfg: &RunConfig, bc: &BoundsConfig) -> Result<BoundReport> {
    let mut records = Vec::new();
    let mut streams = Vec::new();
    let mut kept = Vec::new();
    for exp in bound_streams(bc) {
        let Experiment::Witness { n, delta, eps, .. } = exp else { unreachable!() };
        let reps = run_range(&exp, cfg.seed, bc.noise_seed, cfg.budget, 0..cfg.replicas)?;
        let w: Vec<&WitnessReport> = reps.iter().filter_map(|r| r.outcome.witness()).collect();
        let count = |f: &dyn Fn(&WitnessReport) -> bool| w.iter().filter(|r| f(r)).count() as u64;
        let total = w.len() as u64;
        let good = count(&|r| r.good_vertex_found);
        let eval = |spec: RecordSpec, s: u64, t: u64| spec.evaluate(s, t, total, cfg.seed);
        let is_default_noise = delta == bc.delta;

        if is_default_noise && bc.good_vertex_n.contains(&n) {
            let bound = exact::good_vertex_bound(n) * (1.0 - 1e-6);
            records.push(eval(
                RecordSpec {
                    id: "good_vertex",
                    statement: "P(A'_n | A) >= 1 - (1 - 4^-n)^(9^n)".into(),
                    n,
                    eps: None,
                    delta: None,
                    comparison: Comparison::CiHighAtLeast,
                    bound,
                },
                good,
                total,
            ));
            records.push(eval(
                RecordSpec {
                    id: "good_vertex_exp",
                    statement: "P(A'_n | A) >= 1 - exp(-(9/4)^n)".into(),
                    n,
                    eps: None,
                    delta: None,
                    comparison: Comparison::CiHighAtLeast,
                    bound: exact::good_vertex_exp_bound(n),
                },
                good,
                total,
            ));
        }
        if is_default_noise && bc.nice_n.contains(&n) {
            let nice = count(&|r| r.root_nice);
            records.push(eval(
                RecordSpec {
                    id: "nice",
                    statement: "P(o is n-nice | A'_n) >= 8^-n".into(),
                    n,
                    eps: Some(eps),
                    delta: Some(delta),
                    comparison: Comparison::CiLowAtLeast,
                    bound: 8f64.powi(-(n as i32)),
                },
                nice,
                good,
            ));
            records.push(eval(
                RecordSpec {
                    id: "nice_checks",
                    statement: "nice => |dH| <= 10n + 1 and |H| >= 5n + 2^n, recounted".into(),
                    n,
                    eps: Some(eps),
                    delta: Some(delta),
                    comparison: Comparison::Always,
                    bound: 1.0,
                },
                count(&|r| r.nice_checks_hold() == Some(true)),
                nice,
            ));
        }
        if is_default_noise && bc.boundary_n.contains(&n) {
            let bound = (9.0 * eps).powi(n as i32);
            let mut rec = eval(
                RecordSpec {
                    id: "boundary_excess",
                    statement: "P(|dH| > 2|P_v| + 1 | B_n) <= eps^n 9^n".into(),
                    n,
                    eps: Some(eps),
                    delta: Some(delta),
                    comparison: Comparison::CiHighAtMost,
                    bound,
                },
                count(&|r| r.b_n_holds && r.boundary_excess() == Some(true)),
                count(&|r| r.b_n_holds),
            );
            if bound >= 1.0 {
                rec.pass = true;
                rec.note = Some("bound is at least 1 and holds trivially".into());
            }
            records.push(rec);
        }
        for case in bc.path_cases.iter().filter(|c| c.n == n && c.delta == delta) {
            records.push(eval(
                RecordSpec {
                    id: "path_open",
                    statement: "P(P_v open) = (1 - delta)^(5n)".into(),
                    n,
                    eps: Some(eps),
                    delta: Some(case.delta),
                    comparison: Comparison::ThreeSigma,
                    bound: (1.0 - case.delta).powi(5 * n as i32),
                },
                count(&|r| r.path_open == Some(true)),
                good,
            ));
            // |P_v| can fall short of 5n, which only helps the one-sided form
            records.push(eval(
                RecordSpec {
                    id: "path_open_lower",
                    statement: "P(P_v open) >= (1 - delta)^(5n)".into(),
                    n,
                    eps: Some(eps),
                    delta: Some(case.delta),
                    comparison: Comparison::CiHighAtLeast,
                    bound: (1.0 - case.delta).powi(5 * n as i32),
                },
                count(&|r| r.path_open == Some(true)),
                good,
            ));
        }

        streams.push(StreamSummary::of(exp, &reps));
        let mut flagged_count = 0;
        for (i, r) in reps.into_iter().enumerate() {
            let is_flagged = r.outcome.witness().is_some_and(flagged);
            if i < bc.keep_records || (is_flagged && flagged_count < 100) {
                flagged_count += is_flagged as usize;
                kept.push(r);
            }
        }
    }
    let all_pass = records.iter().all(|r| r.pass) && streams.iter().all(StreamSummary::balanced);
    Ok(BoundReport {
        schema: SCHEMA,
        version: VERSION.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        records,
        streams,
        replica_records: kept,
        all_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwLdRow {
    pub n: u32,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound_2_pow_minus_n: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwLdReport {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub per_n: Vec<GwLdRow>,
    pub sweep: LdSweep,
    pub rate_sweeps: Vec<LdSweep>,
    pub records: Vec<BoundRecord>,
    pub all_pass: bool,
}

pub fn gw_ld(cfg: &RunConfig, gc: &GwLdConfig) -> Result<GwLdReport> {
    let grid: Vec<u32> = (gc.n_min..=gc.n_max).collect();
    let base = GWConfig { delta: gc.delta, n: gc.n_max, kappa: gc.kappa, replicas: cfg.replicas, seed: cfg.seed };
    let sweep = ld_sweep(&base, &grid)?;
    let mut records = Vec::new();
    for e in &sweep.estimates {
        let mut rec = RecordSpec {
            id: "ld_tail",
            statement: "P(Z_n < kappa^n | survival) <= 2^-n".into(),
            n: e.n,
            eps: None,
            delta: Some(gc.delta),
            comparison: Comparison::CiHighAtMost,
            bound: 2f64.powi(-(e.n as i32)),
        }
        .evaluate(e.successes, e.survivors, cfg.replicas, cfg.seed);
        if e.survivors < gc.min_survivors {
            rec.pass = false;
            rec.note = Some(format!("only {} survivors, need {}", e.survivors, gc.min_survivors));
        }
        records.push(rec);
    }

    let rate_grid: Vec<u32> = (1..=gc.lambda_n_max).collect();
    let mut rate_sweeps = Vec::new();
    for (k, &delta) in gc.lambda_deltas.iter().enumerate() {
        let c = GWConfig { delta, n: gc.lambda_n_max, kappa: gc.kappa, replicas: cfg.replicas, seed: mix(cfg.seed, k as u64 + 1) };
        let s = ld_sweep(&c, &rate_grid)?;
        let alive = s.estimates[0].survivors;
        records.push(
            RecordSpec {
                id: "extinction",
                statement: "MC extinction frequency = smallest fixed point of the generating function".into(),
                n: 0,
                eps: None,
                delta: Some(delta),
                comparison: Comparison::ThreeSigma,
                bound: extinction_probability(delta),
            }
            .evaluate(cfg.replicas - alive, cfg.replicas, cfg.replicas, cfg.seed),
        );
        rate_sweeps.push(s);
    }
    // the rate must grow as delta shrinks
    let mut by_delta: Vec<&LdSweep> = rate_sweeps.iter().collect();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let pairs = by_delta.len().saturating_sub(1) as u64;
    let increasing = by_delta
        .windows(2)
        .filter(|w| matches!((w[0].lambda_hat, w[1].lambda_hat), (Some(a), Some(b)) if b > a))
        .count() as u64;
    records.push(
        RecordSpec {
            id: "ld_rate_order",
            statement: "fitted rate strictly increases as delta decreases".into(),
            n: 0,
            eps: None,
            delta: None,
            comparison: Comparison::Always,
            bound: 1.0,
        }
        .evaluate(increasing, pairs, cfg.replicas, cfg.seed),
    );
    let per_n = sweep
        .estimates
        .iter()
        .zip(&records)
        .map(|(e, r)| GwLdRow {
            n: e.n,
            p_hat: e.p_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            bound_2_pow_minus_n: r.analytic_bound,
            pass: r.pass,
        })
        .collect();
    let all_pass = records.iter().all(|r| r.pass);
    Ok(GwLdReport {
        schema: SCHEMA,
        version: VERSION.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        per_n,
        sweep,
        rate_sweeps,
        records,
        all_pass,
    })
}

/// One CSV row per attempted construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FolnerRow {
    pub replica: u64,
    pub n: u32,
    pub success: bool,
    pub h_size: Option<usize>,
    pub h_boundary: Option<usize>,
    pub q_len: Option<u32>,
    pub k_size: Option<usize>,
    pub k_boundary: Option<usize>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FolnerSummary {
    pub n: u32,
    pub attempts: u64,
    pub successes: u64,
    pub budget_exceeded: u64,
    pub median_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    pub max_q: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FolnerReport {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub summaries: Vec<FolnerSummary>,
    pub records: Vec<BoundRecord>,
    pub rows: Vec<FolnerRow>,
    pub replica_records: Vec<ReplicaRecord>,
    pub all_pass: bool,
}

pub fn folner(cfg: &RunConfig, fc: &FolnerConfig) -> Result<FolnerReport> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut records = Vec::new();
    let mut kept = Vec::new();
    for n in fc.n_min..=fc.n_max {
        let exp = Experiment::Witness {
            n,
            eps: fc.eps,
            delta: fc.delta,
            level_cap: fc.level_cap,
            build_k: true,
            search_radius: fc.search_radius.unwrap_or(n * n),
            niceness_budget: fc.niceness_budget,
        };
        let batch = fc.successes.max(1);
        let mut reps: Vec<ReplicaRecord> = Vec::new();
        let mut successes = 0u64;
        while successes < fc.successes && (reps.len() as u64) < cfg.replicas {
            let start = reps.len() as u64;
            let end = (start + batch).min(cfg.replicas);
            let more = run_range(&exp, cfg.seed, fc.noise_seed, cfg.budget, start..end)?;
            successes += more.iter().filter(|r| r.outcome.witness().is_some_and(|w| w.k_size.is_some())).count() as u64;
            reps.extend(more);
        }
        let w: Vec<&WitnessReport> = reps.iter().filter_map(|r| r.outcome.witness()).collect();
        let ok: Vec<&&WitnessReport> = w.iter().filter(|r| r.k_size.is_some()).collect();
        let mut ratios: Vec<f64> = ok.iter().filter_map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        summaries.push(FolnerSummary {
            n,
            attempts: w.len() as u64,
            successes,
            budget_exceeded: w.iter().filter(|r| r.budget_exceeded).count() as u64,
            median_ratio: median(&ratios),
            min_ratio: ratios.first().copied(),
            max_q: ok.iter().filter_map(|r| r.nice_x_distance).max(),
        });
        let spec = |id, statement: &str, comparison, bound| RecordSpec {
            id,
            statement: statement.into(),
            n,
            eps: Some(fc.eps),
            delta: Some(fc.delta),
            comparison,
            bound,
        };
        let total = w.len() as u64;
        records.push(spec("k_count", "successful constructions reach the target", Comparison::EstimateAtLeast, 1.0).evaluate(
            successes.min(fc.successes),
            fc.successes,
            total,
            cfg.seed,
        ));
        records.push(
            spec("k_bounds", "|dK_n| <= 12n + n^2 and |K_n| >= 5n + 2^n on every success", Comparison::Always, 1.0)
                .evaluate(ok.iter().filter(|r| r.k_bounds_ok() == Some(true)).count() as u64, ok.len() as u64, total, cfg.seed),
        );
        records.push(spec("k_boundary_path", "|dK_n| <= 10n + 2q + 1 on every success", Comparison::Always, 1.0).evaluate(
            ok.iter().filter(|r| r.k_boundary_within_path_bound() == Some(true)).count() as u64,
            ok.len() as u64,
            total,
            cfg.seed,
        ));
        for (i, r) in reps.iter().enumerate() {
            let wr = r.outcome.witness().expect("witness experiment");
            rows.push(FolnerRow {
                replica: r.index,
                n,
                success: wr.k_size.is_some(),
                h_size: wr.h_size,
                h_boundary: wr.h_boundary,
                q_len: wr.nice_x_distance,
                k_size: wr.k_size,
                k_boundary: wr.k_boundary,
                ratio: wr.ratio,
            });
            let bad = wr.budget_exceeded || wr.k_bounds_ok() == Some(false);
            if i < fc.keep_records || bad {
                kept.push(r.clone());
            }
        }
    }
    // medians must fall strictly from n = 4 on, and halve between 4 and 7
    let medians: Vec<(u32, f64)> = summaries.iter().filter(|s| s.n >= 4).filter_map(|s| Some((s.n, s.median_ratio?))).collect();
    let falling = medians.windows(2).filter(|w| w[1].1 < w[0].1).count() as u64;
    records.push(
        RecordSpec {
            id: "median_ratio_decreasing",
            statement: "median |dK_n|/|K_n| strictly decreases in n from n = 4".into(),
            n: 0,
            eps: Some(fc.eps),
            delta: Some(fc.delta),
            comparison: Comparison::Always,
            bound: 1.0,
        }
        .evaluate(falling, medians.len().saturating_sub(1) as u64, 0, cfg.seed),
    );
    let at = |n: u32| medians.iter().find(|m| m.0 == n).map(|m| m.1);
    if let (Some(m4), Some(m7)) = (at(4), at(7)) {
        records.push(
            RecordSpec {
                id: "median_ratio_halving",
                statement: "median ratio at n = 7 is at most half the median at n = 4".into(),
                n: 7,
                eps: Some(fc.eps),
                delta: Some(fc.delta),
                comparison: Comparison::Always,
                bound: m4 / 2.0,
            }
            .evaluate((m7 <= m4 / 2.0) as u64, 1, 0, cfg.seed),
        );
    }
    let all_pass = records.iter().all(|r| r.pass);
    Ok(FolnerReport {
        schema: SCHEMA,
        version: VERSION.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        summaries,
        records,
        rows,
        replica_records: kept,
        all_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub replica: u64,
    pub touches_frontier: bool,
    pub component_size: usize,
    pub min_ratio: Option<f64>,
    pub final_ratio: Option<f64>,
    pub set_size: usize,
    pub budget_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub p: f64,
    pub steps: usize,
    /// Replicas whose cluster reached the frontier.
    pub touching: u64,
    pub above_threshold: u64,
    pub rows: Vec<BaselineRow>,
    pub records: Vec<BoundRecord>,
    pub replica_records: Vec<ReplicaRecord>,
    pub all_pass: bool,
}

/// Greedy estimates on Bernoulli(p) clusters until `cfg.replicas` of them
/// reach the frontier.
pub fn baseline(cfg: &RunConfig, bc: &BaselineConfig) -> Result<BaselineReport> {
    let exp = Experiment::Baseline { p: bc.p, steps: bc.steps, frontier_limit: bc.frontier_limit };
    let mut reps: Vec<ReplicaRecord> = Vec::new();
    let is_touching = |r: &ReplicaRecord| matches!(&r.outcome, Outcome::Baseline(b) if b.touches_frontier);
    let mut touching = 0;
    while touching < cfg.replicas && (reps.len() as u64) < bc.max_attempts {
        let start = reps.len() as u64;
        let want = cfg.replicas - touching;
        let more = run_range(&exp, cfg.seed, None, cfg.budget, start..(start + want).min(bc.max_attempts))?;
        for r in more {
            if touching < cfg.replicas {
                touching += is_touching(&r) as u64;
                reps.push(r);
            }
        }
    }
    let rows: Vec<BaselineRow> = reps
        .iter()
        .map(|r| {
            let Outcome::Baseline(b) = &r.outcome else { unreachable!() };
            BaselineRow {
                replica: r.index,
                touches_frontier: b.touches_frontier,
                component_size: b.component_size,
                min_ratio: b.min_ratio,
                final_ratio: b.final_ratio,
                set_size: b.set_size,
                budget_exceeded: b.budget_exceeded,
            }
        })
        .collect();
    let above = rows.iter().filter(|r| r.min_ratio.is_some_and(|m| m > bc.threshold)).count() as u64;
    let records = vec![RecordSpec {
        id: "baseline_ratio",
        statement: format!("greedy min ratio stays above {} on frontier-touching Bernoulli clusters", bc.threshold),
        n: 0,
        eps: Some(bc.p),
        delta: Some(0.0),
        comparison: Comparison::EstimateAtLeast,
        bound: bc.fraction,
    }
    .evaluate(above, touching, reps.len() as u64, cfg.seed)];
    let all_pass = records.iter().all(|r| r.pass);
    Ok(BaselineReport {
        schema: SCHEMA,
        version: VERSION.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        p: bc.p,
        steps: bc.steps,
        touching,
        above_threshold: above,
        rows,
        records,
        replica_records: reps.into_iter().filter(is_touching).take(3).collect(),
        all_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnimodReport {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub sampler: Sampler,
    pub radius: u32,
    pub samples: usize,
    pub levels: bool,
    pub outcome: MassTransport,
    pub rejected: bool,
    /// Only the broken control sampler should be rejected.
    pub expect_rejection: bool,
    pub all_pass: bool,
}

pub fn unimod_test(cfg: &RunConfig, uc: &UnimodConfig) -> Result<UnimodReport> {
    let outcome = mass_transport_test(uc.sampler, uc.radius, uc.samples, cfg.seed, uc.levels)?;
    let rejected = outcome.rejected(uc.alpha);
    let expect_rejection = uc.sampler == Sampler::BrokenLeaf;
    Ok(UnimodReport {
        schema: SCHEMA,
        version: VERSION.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        sampler: uc.sampler,
        radius: uc.radius,
        samples: uc.samples,
        levels: uc.levels,
        outcome,
        rejected,
        expect_rejection,
        all_pass: rejected == expect_rejection,
    })
}

/// Builds a window around the root and dumps it.
pub fn sample(cfg: &RunConfig, sc: &SampleConfig) -> Result<GraphDump> {
    let params = ConstructionParams {
        seed: cfg.seed,
        level_cap: sc.level_cap,
        vertex_budget: cfg.budget,
        tail_mode: sc.tail_mode,
        root_law: sc.root_law,
        window_radius: sc.radius,
        ..ConstructionParams::default()
    };
    let mut win = build_window(&params)?;
    if sc.eps.is_some() || sc.delta.is_some() {
        let ns = sc.noise_seed.unwrap_or(mix(cfg.seed, tag::NOISE_SEED));
        apply_noise(&mut win, NoiseParams::new(sc.eps.unwrap_or(0.0), sc.delta.unwrap_or(0.0), ns)?)?;
    }
    Ok(win.dump())
}

/// Writes `rows` as CSV with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, body + "\n")?;
    Ok(())
}
