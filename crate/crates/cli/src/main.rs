use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use canopy_core::harness::{
    self, BaselineConfig, BoundRecord, BoundsConfig, Command, FolnerConfig, GwLdConfig, ReplicaRecord, RunConfig,
    SampleConfig, UnimodConfig,
};
use canopy_core::unimod::Sampler;
use canopy_core::{RootLaw, TailMode};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Monte Carlo experiments for invariant percolation on the 4-regular tree.
#[derive(Parser, Debug)]
#[command(name = "canopy", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replica count; for `folner` a cap on attempts per n, for `baseline` the
    /// number of frontier-touching clusters
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Vertex budget per replica
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Output path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run config (TOML or JSON); flags given on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the effective run config here and exit
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check the analytic probability bounds against replica frequencies
    VerifyBounds(BoundsArgs),
    /// Large-deviation tail of the noisy Galton-Watson process
    GwLd(GwLdArgs),
    /// Build the Folner sets K_n and record their boundary ratios
    Folner(FolnerArgs),
    /// Dump one sampled window as JSON
    Sample(SampleArgs),
    /// Mass-transport test of the doubly rooted law
    UnimodTest(UnimodArgs),
    /// Greedy boundary ratios on Bernoulli clusters for comparison
    Baseline(BaselineArgs),
    /// Recompute replica records and compare them byte for byte
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    level_cap: Option<u32>,
}

#[derive(Args, Debug)]
struct GwLdArgs {
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    n_min: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
}

#[derive(Args, Debug)]
struct FolnerArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    n_min: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    level_cap: Option<u32>,
    /// Successful constructions wanted per n
    #[arg(long)]
    successes: Option<u64>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    level_cap: Option<u32>,
    /// Graph distance from the root to expand
    #[arg(long)]
    radius: Option<u32>,
    /// size_biased, canopy_uniform, type_zero_leaf or canopy_leaf
    #[arg(long, value_parser = parse_enum::<RootLaw>)]
    root_law: Option<RootLaw>,
    /// exact_tail or truncate
    #[arg(long, value_parser = parse_enum::<TailMode>)]
    tail_mode: Option<TailMode>,
}

#[derive(Args, Debug)]
struct UnimodArgs {
    /// canopy-plus, window or broken-leaf
    #[arg(long, value_parser = parse_enum::<Sampler>)]
    sampler: Option<Sampler>,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    /// Include vertex levels in the ball codes
    #[arg(long)]
    levels: bool,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// A replica record, or a report holding `replica_records`
    input: PathBuf,
}

/// Parses a unit enum through its serde names, accepting `-` for `_`.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let tries = [s.to_string(), s.replace('-', "_"), s.replace('_', "-")];
    tries
        .iter()
        .find_map(|t| serde_json::from_value(serde_json::Value::String(t.clone())).ok())
        .ok_or_else(|| format!("unknown value `{s}`"))
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

fn merge(cli: Cli) -> anyhow::Result<RunConfig> {
    let base = match &cli.global.config {
        Some(p) => Some(RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let g = cli.global;
    let command = match cli.cmd {
        Cmd::Replay(_) => unreachable!(),
        Cmd::VerifyBounds(a) => {
            let mut c = match &base {
                Some(RunConfig { command: Command::VerifyBounds(c), .. }) => c.clone(),
                _ => BoundsConfig::default(),
            };
            set!(c.eps, a.noise.eps);
            set!(c.delta, a.noise.delta);
            c.noise_seed = a.noise.noise_seed.or(c.noise_seed);
            set!(c.level_cap, a.level_cap);
            Command::VerifyBounds(c)
        }
        Cmd::GwLd(a) => {
            let mut c = match &base {
                Some(RunConfig { command: Command::GwLd(c), .. }) => c.clone(),
                _ => GwLdConfig::default(),
            };
            set!(c.delta, a.delta);
            set!(c.kappa, a.kappa);
            set!(c.n_min, a.n_min);
            set!(c.n_max, a.n_max);
            Command::GwLd(c)
        }
        Cmd::Folner(a) => {
            let mut c = match &base {
                Some(RunConfig { command: Command::Folner(c), .. }) => c.clone(),
                _ => FolnerConfig::default(),
            };
            set!(c.eps, a.noise.eps);
            set!(c.delta, a.noise.delta);
            c.noise_seed = a.noise.noise_seed.or(c.noise_seed);
            set!(c.n_min, a.n_min);
            set!(c.n_max, a.n_max);
            set!(c.level_cap, a.level_cap);
            set!(c.successes, a.successes);
            Command::Folner(c)
        }
        Cmd::Sample(a) => {
            let mut c = match &base {
                Some(RunConfig { command: Command::Sample(c), .. }) => c.clone(),
                _ => SampleConfig::default(),
            };
            c.eps = a.noise.eps.or(c.eps);
            c.delta = a.noise.delta.or(c.delta);
            c.noise_seed = a.noise.noise_seed.or(c.noise_seed);
            set!(c.level_cap, a.level_cap);
            set!(c.radius, a.radius);
            set!(c.root_law, a.root_law);
            set!(c.tail_mode, a.tail_mode);
            Command::Sample(c)
        }
        Cmd::UnimodTest(a) => {
            let mut c = match &base {
                Some(RunConfig { command: Command::UnimodTest(c), .. }) => c.clone(),
                _ => UnimodConfig::default(),
            };
            set!(c.sampler, a.sampler);
            set!(c.radius, a.radius);
            set!(c.samples, a.samples);
            c.levels |= a.levels;
            Command::UnimodTest(c)
        }
        Cmd::Baseline(a) => {
            let mut c = match &base {
                Some(RunConfig { command: Command::Baseline(c), .. }) => c.clone(),
                _ => BaselineConfig::default(),
            };
            set!(c.p, a.p);
            set!(c.steps, a.steps);
            Command::Baseline(c)
        }
    };
    let mut cfg = match base {
        Some(b) if std::mem::discriminant(&b.command) == std::mem::discriminant(&command) => RunConfig { command, ..b },
        Some(b) => bail!("config file is for `{}`, not this subcommand", command_name(&b.command)),
        None => default_run(command),
    };
    set!(cfg.seed, g.seed);
    set!(cfg.replicas, g.replicas);
    cfg.threads = g.threads.or(cfg.threads);
    set!(cfg.budget, g.budget);
    cfg.out = g.out.or(cfg.out);
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::VerifyBounds(_) => "verify-bounds",
        Command::GwLd(_) => "gw-ld",
        Command::Folner(_) => "folner",
        Command::Sample(_) => "sample",
        Command::UnimodTest(_) => "unimod-test",
        Command::Baseline(_) => "baseline",
    }
}

/// Replica counts that make sense for each experiment when none is given.
fn default_run(command: Command) -> RunConfig {
    let replicas = match &command {
        Command::VerifyBounds(_) => 400_000,
        Command::GwLd(_) => 1_000_000,
        Command::Folner(_) => 100_000,
        Command::Sample(_) | Command::UnimodTest(_) => 1,
        Command::Baseline(_) => 100,
    };
    RunConfig { replicas, ..RunConfig::new(command) }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    match out {
        Some(p) => harness::write_json(p, value)?,
        None => print_stdout(&serde_json::to_string_pretty(value)?)?,
    }
    Ok(())
}

/// A closed pipe on stdout (e.g. `| head`) is not an error.
fn print_stdout(body: &str) -> std::io::Result<()> {
    let mut lock = std::io::stdout().lock();
    match writeln!(lock, "{body}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}

fn print_records(records: &[BoundRecord]) {
    for r in records {
        eprintln!(
            "{} {:<24} n={:<2} est={:.6} ci=[{:.6}, {:.6}] bound={:.6e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.bound_id,
            r.n,
            r.empirical_estimate,
            r.ci_low,
            r.ci_high,
            r.analytic_bound
        );
    }
}

fn run(cfg: &RunConfig) -> anyhow::Result<bool> {
    let out = cfg.out.as_deref();
    Ok(match &cfg.command {
        Command::VerifyBounds(bc) => {
            let rep = harness::verify_bounds(cfg, bc)?;
            print_records(&rep.records);
            if let Some(p) = out {
                harness::write_csv(&p.with_extension("csv"), &rep.records)?;
            }
            emit_json(out, &rep)?;
            rep.all_pass
        }
        Command::GwLd(gc) => {
            let rep = harness::gw_ld(cfg, gc)?;
            print_records(&rep.records);
            emit_json(out, &rep)?;
            rep.all_pass
        }
        Command::Folner(fc) => {
            let rep = harness::folner(cfg, fc)?;
            print_records(&rep.records);
            for s in &rep.summaries {
                eprintln!("n={} successes={}/{} median_ratio={:?}", s.n, s.successes, s.attempts, s.median_ratio);
            }
            match out {
                Some(p) => {
                    harness::write_csv(p, &rep.rows)?;
                    harness::write_json(&p.with_extension("json"), &rep)?;
                }
                None => print_stdout(&serde_json::to_string_pretty(&rep)?)?,
            }
            rep.all_pass
        }
        Command::Baseline(bc) => {
            let rep = harness::baseline(cfg, bc)?;
            print_records(&rep.records);
            match out {
                Some(p) => {
                    harness::write_csv(p, &rep.rows)?;
                    harness::write_json(&p.with_extension("json"), &rep)?;
                }
                None => print_stdout(&serde_json::to_string_pretty(&rep)?)?,
            }
            rep.all_pass
        }
        Command::UnimodTest(uc) => {
            let rep = harness::unimod_test(cfg, uc)?;
            eprintln!(
                "{} sampler={:?} tv={:.4} threshold={:.4} chi2={:.2} dof={} p={:.4} rejected={}",
                if rep.all_pass { "PASS" } else { "FAIL" },
                rep.sampler,
                rep.outcome.tv,
                rep.outcome.tv_threshold,
                rep.outcome.statistic,
                rep.outcome.dof,
                rep.outcome.p_value,
                rep.rejected
            );
            emit_json(out, &rep)?;
            rep.all_pass
        }
        Command::Sample(sc) => {
            emit_json(out, &harness::sample(cfg, sc)?)?;
            true
        }
    })
}

fn replay(path: &Path) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let records: Vec<ReplicaRecord> = match value.get("replica_records") {
        Some(list) => serde_json::from_value(list.clone())?,
        None => vec![serde_json::from_value(value)?],
    };
    let mut ok = true;
    for r in &records {
        let again = harness::replay(r)?;
        let same = serde_json::to_string(r)? == serde_json::to_string(&again)?;
        eprintln!("{} replica {} seed {}", if same { "SAME" } else { "DIFF" }, r.index, r.seed);
        ok &= same;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        if let Cmd::Replay(a) = &cli.cmd {
            return replay(&a.input);
        }
        let save = cli.global.save_config.clone();
        let cfg = merge(cli)?;
        if let Some(t) = cfg.threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
        }
        if let Some(p) = save {
            let body = if p.extension().is_some_and(|e| e == "toml") {
                cfg.to_toml()?
            } else {
                serde_json::to_string_pretty(&cfg)?
            };
            std::fs::write(&p, body)?;
            return Ok(true);
        }
        run(&cfg)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
