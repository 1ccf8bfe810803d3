//! Galton-Watson processes with `Binom(3, 1 - delta)` offspring: population
//! and tree samplers, extinction, large deviations of `Z_n` given survival,
//! and the ingredients of the large-deviation proof.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::replica_rng;
use crate::stats::{self, Proportion};

/// Offspring law of a Galton-Watson process.
pub trait OffspringLaw: Sync {
    fn mean(&self) -> f64;
    fn variance(&self) -> f64;
    /// Generating function `E s^X`.
    fn pgf(&self, s: f64) -> f64;
    fn pgf_prime(&self, s: f64) -> f64;
    /// `P(X >= k)`.
    fn prob_at_least(&self, k: u64) -> f64;
    /// Total offspring of `parents` independent individuals.
    fn sample_total<R: Rng + ?Sized>(&self, parents: u64, rng: &mut R) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialOffspring {
    pub trials: u64,
    pub p: f64,
}

impl BinomialOffspring {
    /// `Binom(3, 1 - delta)`: the offspring of a canopy vertex under
    /// deletion noise.
    pub fn ternary(delta: f64) -> Self {
        Self { trials: 3, p: 1.0 - delta }
    }
}

impl OffspringLaw for BinomialOffspring {
    fn mean(&self) -> f64 {
        self.trials as f64 * self.p
    }

    fn variance(&self) -> f64 {
        self.trials as f64 * self.p * (1.0 - self.p)
    }

    fn pgf(&self, s: f64) -> f64 {
        (1.0 - self.p + self.p * s).powi(self.trials as i32)
    }

    fn pgf_prime(&self, s: f64) -> f64 {
        let k = self.trials as i32;
        k as f64 * self.p * (1.0 - self.p + self.p * s).powi(k - 1)
    }

    fn prob_at_least(&self, k: u64) -> f64 {
        let b = statrs::distribution::Binomial::new(self.p, self.trials).expect("valid binomial");
        let below: f64 = (0..k.min(self.trials + 1))
            .map(|j| statrs::distribution::Discrete::pmf(&b, j))
            .sum();
        (1.0 - below).max(0.0)
    }

    fn sample_total<R: Rng + ?Sized>(&self, parents: u64, rng: &mut R) -> u64 {
        if parents == 0 || self.p == 0.0 {
            return 0;
        }
        if self.p == 1.0 {
            return parents * self.trials;
        }
        Binomial::new(parents * self.trials, self.p)
            .expect("valid binomial")
            .sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GWConfig {
    pub delta: f64,
    pub n: u32,
    pub kappa: f64,
    pub replicas: u64,
    pub seed: u64,
}

impl GWConfig {
    pub fn law(&self) -> BinomialOffspring {
        BinomialOffspring::ternary(self.delta)
    }

    pub fn mu(&self) -> f64 {
        self.law().mean()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!("delta = {} is not in [0, 1]", self.delta)));
        }
        let mu = self.mu();
        if mu <= 1.0 {
            return Err(Error::InvalidParameter(format!("mean offspring {mu} must exceed 1")));
        }
        if !(self.kappa > 1.0 && self.kappa < mu) {
            return Err(Error::InvalidParameter(format!(
                "kappa = {} must lie in (1, {mu})",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Generations simulated to decide survival.
    pub fn horizon(&self, n: u32) -> u32 {
        survival_horizon(&self.law(), n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GWEstimate {
    pub n: u32,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicas_used: u64,
    pub survivors: u64,
    pub successes: u64,
}

impl GWEstimate {
    fn from_counts(n: u32, successes: u64, survivors: u64, replicas: u64) -> Self {
        let p = Proportion::new(successes, survivors);
        Self {
            n,
            p_hat: p.estimate,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
            replicas_used: replicas,
            survivors,
            successes,
        }
    }
}

/// Smallest fixed point of the generating function, by Newton's method
/// from 0 (monotone for a convex generating function).
pub fn extinction_fixed_point<L: OffspringLaw>(law: &L) -> f64 {
    if law.mean() <= 1.0 {
        return 1.0;
    }
    let mut e = 0.0f64;
    for _ in 0..200 {
        let g = law.pgf(e) - e;
        let step = g / (law.pgf_prime(e) - 1.0);
        let next = (e - step).clamp(0.0, 1.0);
        if (next - e).abs() < 1e-15 {
            return next;
        }
        e = next;
    }
    e
}

/// Extinction probability for `Binom(3, 1 - delta)` offspring.
pub fn extinction_probability(delta: f64) -> f64 {
    extinction_fixed_point(&BinomialOffspring::ternary(delta))
}

/// `n + 50 ceil(1 / (mu - 1))`.
pub fn survival_horizon<L: OffspringLaw>(law: &L, n: u32) -> u32 {
    n + 50 * (1.0 / (law.mean() - 1.0)).ceil() as u32
}

/// Population size beyond which eventual extinction has probability below
/// 1e-12, so survival can be declared.
pub fn survival_cap<L: OffspringLaw>(law: &L) -> u64 {
    let e = extinction_fixed_point(law);
    if e <= 0.0 {
        1
    } else {
        ((1e-12f64).ln() / e.ln()).ceil().max(1.0) as u64
    }
}

/// Fraction of processes alive at `horizon` that still die out:
/// `(e - P(Z_h = 0)) / (1 - P(Z_h = 0))`.
pub fn horizon_misclassification<L: OffspringLaw>(law: &L, horizon: u32) -> f64 {
    let e = extinction_fixed_point(law);
    let mut s = 0.0;
    for _ in 0..horizon {
        s = law.pgf(s);
    }
    if s >= 1.0 {
        0.0
    } else {
        ((e - s) / (1.0 - s)).max(0.0)
    }
}

/// `Z_0, ..., Z_n` with `Z_{k+1} ~ Binom(3 Z_k, 1 - delta)`.
pub fn population_sample<R: Rng + ?Sized>(cfg: &GWConfig, rng: &mut R) -> Vec<u64> {
    population_path(&cfg.law(), cfg.n, rng)
}

pub fn population_path<L: OffspringLaw, R: Rng + ?Sized>(law: &L, n: u32, rng: &mut R) -> Vec<u64> {
    let mut z = Vec::with_capacity(n as usize + 1);
    z.push(1u64);
    for k in 0..n as usize {
        z.push(law.sample_total(z[k], rng));
    }
    z
}

/// Whether a process started from `start` individuals is alive after
/// `generations` more steps, stopping early once the population reaches
/// `cap`.
pub fn survives<L: OffspringLaw, R: Rng + ?Sized>(law: &L, start: u64, generations: u32, cap: u64, rng: &mut R) -> bool {
    let mut z = start;
    for _ in 0..generations {
        if z == 0 {
            return false;
        }
        if z >= cap {
            return true;
        }
        z = law.sample_total(z, rng);
    }
    z > 0
}

/// One path to `n_max` plus the survival verdict.
fn path_with_survival<L: OffspringLaw, R: Rng + ?Sized>(
    law: &L,
    n_max: u32,
    horizon: u32,
    cap: u64,
    rng: &mut R,
) -> (Vec<u64>, bool) {
    let z = population_path(law, n_max, rng);
    let last = *z.last().unwrap();
    let alive = survives(law, last, horizon - n_max, cap, rng);
    (z, alive)
}

/// `P(Z_n < kappa^n | survival)` at `cfg.n`.
pub fn ld_probability(cfg: &GWConfig) -> Result<GWEstimate> {
    let sweep = ld_sweep(cfg, &[cfg.n])?;
    Ok(sweep.estimates[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdSweep {
    pub delta: f64,
    pub kappa: f64,
    pub estimates: Vec<GWEstimate>,
    /// Minus the least-squares slope of `ln p_hat` in `n`, over grid points
    /// with at least 30 successes.
    pub lambda_hat: Option<f64>,
    pub fitted_points: usize,
    /// Whether `p_hat` never increases along the grid.
    pub nonincreasing: bool,
    /// Fraction of horizon survivors that still die out.
    pub misclassification: f64,
}

/// Runs `cfg.replicas` paths once and estimates the conditional
/// probability at every `n` of `grid`.
pub fn ld_sweep(cfg: &GWConfig, grid: &[u32]) -> Result<LdSweep> {
    cfg.validate()?;
    let law = cfg.law();
    let n_max = grid.iter().copied().max().unwrap_or(cfg.n);
    let horizon = survival_horizon(&law, n_max);
    let cap = survival_cap(&law);
    let thresholds: Vec<f64> = grid.iter().map(|&n| cfg.kappa.powi(n as i32)).collect();
    let (survivors, hits) = (0..cfg.replicas)
        .into_par_iter()
        .fold(
            || (0u64, vec![0u64; grid.len()]),
            |(mut s, mut h), i| {
                let mut rng = replica_rng(cfg.seed, i);
                let (z, alive) = path_with_survival(&law, n_max, horizon, cap, &mut rng);
                if alive {
                    s += 1;
                    for (k, (&n, &t)) in grid.iter().zip(&thresholds).enumerate() {
                        if (z[n as usize] as f64) < t {
                            h[k] += 1;
                        }
                    }
                }
                (s, h)
            },
        )
        .reduce(
            || (0u64, vec![0u64; grid.len()]),
            |(a, mut ha), (b, hb)| {
                ha.iter_mut().zip(hb).for_each(|(x, y)| *x += y);
                (a + b, ha)
            },
        );
    if survivors < 100 {
        return Err(Error::InsufficientSurvivors {
            found: survivors,
            needed: 100,
        });
    }
    let estimates: Vec<_> = grid
        .iter()
        .zip(&hits)
        .map(|(&n, &h)| GWEstimate::from_counts(n, h, survivors, cfg.replicas))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = estimates
        .iter()
        .filter(|e| e.successes >= 30)
        .map(|e| (e.n as f64, e.p_hat.ln()))
        .unzip();
    let lambda_hat = if xs.len() >= 2 {
        stats::ols_slope(&xs, &ys).map(|s| -s)
    } else {
        None
    };
    let nonincreasing = estimates.windows(2).all(|w| w[1].p_hat <= w[0].p_hat);
    Ok(LdSweep {
        delta: cfg.delta,
        kappa: cfg.kappa,
        estimates,
        lambda_hat,
        fitted_points: xs.len(),
        nonincreasing,
        misclassification: horizon_misclassification(&law, horizon),
    })
}

/// Largest `b` on the grid `0.01, ..., 0.99` for which the second-moment
/// method certifies `P(Z_n >= b mu^n) >= b` for every `n`.
///
/// Uses `Var Z_n / mu^2n < gamma = sigma^2 / (mu^2 - mu)` with both the
/// Paley-Zygmund bound `(1-b)^2 / (1 + gamma)` and the one-sided Chebyshev
/// bound `(1-b)^2 / (gamma + (1-b)^2)`.
pub fn paley_zygmund_constant(delta: f64) -> f64 {
    let law = BinomialOffspring::ternary(delta);
    let mu = law.mean();
    let gamma = law.variance() / (mu * mu - mu);
    (1..=99)
        .rev()
        .map(|k| k as f64 / 100.0)
        .find(|&b| {
            let slack = (1.0 - b) * (1.0 - b);
            let pz = slack / (1.0 + gamma);
            let cantelli = slack / (gamma + slack);
            pz.max(cantelli) >= b
        })
        .unwrap_or(0.0)
}

/// Outcome of one depth-first exploration of a tree conditioned to survive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exploration {
    /// `E_i` for `i = 0..=floor(alpha n)`.
    pub events: Vec<bool>,
}

impl Exploration {
    pub fn count(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }
}

/// Depth-first exploration along the leftmost infinite line of descent.
///
/// The vertex `v_i` last visited in generation `i` is the generation-`i`
/// vertex of the leftmost surviving line. Its offspring are revealed, each
/// child's survival is decided by an independent population run to the
/// horizon, and `v_{i+1}` is the first surviving child. Conditioning `v_i`
/// on survival is done by redrawing its offspring until some child
/// survives. Returns `None` when the root itself dies.
pub fn explore<L: OffspringLaw, R: Rng + ?Sized>(law: &L, n: u32, alpha: f64, rng: &mut R) -> Option<Exploration> {
    let horizon = survival_horizon(law, n);
    let cap = survival_cap(law);
    let last = (alpha * n as f64).floor() as u32;
    let mut events = Vec::with_capacity(last as usize + 1);
    for i in 0..=last {
        let remaining = horizon.saturating_sub(i + 1);
        let (x, first_alive) = loop {
            let x = law.sample_total(1, rng);
            let alive: Vec<bool> = (0..x).map(|_| survives(law, 1, remaining, cap, rng)).collect();
            match alive.iter().position(|&a| a) {
                Some(j) => break (x, j == 0),
                None if i == 0 => return None,
                None => continue,
            }
        };
        events.push(x >= 2 && first_alive);
    }
    Some(Exploration { events })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub n: u32,
    pub alpha: f64,
    pub replicas: u64,
    pub survivors: u64,
    /// Pooled frequency of `E_i` over all `i` and surviving replicas.
    pub event_frequency: Proportion,
    /// `P(X >= 2)`: the exact conditional probability of each `E_i`.
    pub p_at_least_two: f64,
    /// `P(X >= 2) P(survival)`, the lower bound used in the proof.
    pub q: f64,
    /// Fraction of survivors with fewer than `alpha n q / 2` events.
    pub short_fraction: Proportion,
}

pub fn exploration_events(cfg: &GWConfig, alpha: f64) -> Result<ExplorationReport> {
    cfg.validate()?;
    let law = cfg.law();
    let runs: Vec<Option<Exploration>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| explore(&law, cfg.n, alpha, &mut replica_rng(cfg.seed, i)))
        .collect();
    let survivors: Vec<&Exploration> = runs.iter().flatten().collect();
    if survivors.len() < 100 {
        return Err(Error::InsufficientSurvivors {
            found: survivors.len() as u64,
            needed: 100,
        });
    }
    let p2 = law.prob_at_least(2);
    let q = p2 * (1.0 - extinction_fixed_point(&law));
    let per = survivors[0].events.len() as u64;
    let hits: u64 = survivors.iter().map(|e| e.count() as u64).sum();
    let threshold = alpha * cfg.n as f64 * q / 2.0;
    let short = survivors.iter().filter(|e| (e.count() as f64) < threshold).count() as u64;
    Ok(ExplorationReport {
        n: cfg.n,
        alpha,
        replicas: cfg.replicas,
        survivors: survivors.len() as u64,
        event_frequency: Proportion::new(hits, per * survivors.len() as u64),
        p_at_least_two: p2,
        q,
        short_fraction: Proportion::new(short, survivors.len() as u64),
    })
}

/// A Galton-Watson tree materialized to a fixed depth. Vertices are stored
/// in breadth-first order; children of a vertex are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GwTree {
    pub generation: Vec<u32>,
    pub first_child: Vec<u32>,
    pub child_count: Vec<u32>,
    pub depth: u32,
}

impl GwTree {
    pub fn sample<L: OffspringLaw, R: Rng + ?Sized>(law: &L, depth: u32, rng: &mut R) -> Self {
        let mut t = Self {
            generation: vec![0],
            first_child: Vec::new(),
            child_count: Vec::new(),
            depth,
        };
        let mut v = 0usize;
        while v < t.generation.len() {
            let g = t.generation[v];
            let x = if g < depth { law.sample_total(1, rng) as u32 } else { 0 };
            t.first_child.push(t.generation.len() as u32);
            t.child_count.push(x);
            t.generation.extend(std::iter::repeat_n(g + 1, x as usize));
            v += 1;
        }
        t
    }

    pub fn children(&self, v: usize) -> std::ops::Range<usize> {
        let f = self.first_child[v] as usize;
        f..f + self.child_count[v] as usize
    }

    pub fn generation_size(&self, g: u32) -> u64 {
        self.generation.iter().filter(|&&x| x == g).count() as u64
    }

    /// Descendants of `v` in generation `g`.
    pub fn descendants_at(&self, v: usize, g: u32) -> Vec<usize> {
        let mut frontier = vec![v];
        let mut gen = self.generation[v];
        while gen < g {
            frontier = frontier.into_iter().flat_map(|u| self.children(u)).collect();
            gen += 1;
        }
        frontier
    }

    fn reaches(&self, v: usize, g: u32) -> bool {
        !self.descendants_at(v, g).is_empty()
    }
}

/// Direct check of `Z_n >= sum_{i in I} Z^{(i)}_{n-1-i}` on a tree of depth
/// `n`, with "infinite" read as "reaches generation `n`".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZsumAudit {
    pub z_n: u64,
    pub sum: u64,
    pub indices: Vec<u32>,
    /// The second-child progenies in generation `n` are pairwise disjoint.
    pub disjoint: bool,
}

pub fn zsum_audit(tree: &GwTree, alpha: f64) -> Option<ZsumAudit> {
    let n = tree.depth;
    if !tree.reaches(0, n) {
        return None;
    }
    let last = (alpha * n as f64).floor() as u32;
    let mut v = 0usize;
    let mut indices = Vec::new();
    let mut progenies: Vec<Vec<usize>> = Vec::new();
    for i in 0..=last.min(n.saturating_sub(1)) {
        let kids: Vec<usize> = tree.children(v).collect();
        let next = *kids.iter().find(|&&c| tree.reaches(c, n)).expect("v_i reaches generation n");
        if kids.len() >= 2 && next == kids[0] {
            indices.push(i);
            progenies.push(tree.descendants_at(kids[1], n));
        }
        v = next;
    }
    let mut all: Vec<usize> = progenies.iter().flatten().copied().collect();
    let sum = all.len() as u64;
    all.sort_unstable();
    all.dedup();
    Some(ZsumAudit {
        z_n: tree.generation_size(n),
        sum,
        indices,
        disjoint: all.len() as u64 == sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi_square_two_sample, mean, variance};

    fn cfg(delta: f64, n: u32) -> GWConfig {
        GWConfig {
            delta,
            n,
            kappa: 2.0,
            replicas: 100_000,
            seed: 7,
        }
    }

    #[test]
    fn deterministic_without_deletion() {
        let mut rng = replica_rng(1, 0);
        let z = population_sample(&cfg(0.0, 6), &mut rng);
        assert_eq!(z, (0..=6).map(|k| 3u64.pow(k)).collect::<Vec<_>>());
    }

    #[test]
    fn mean_and_variance_recursions() {
        let c = cfg(0.1, 10);
        let law = c.law();
        let (mu, s2) = (law.mean(), law.variance());
        let paths: Vec<Vec<u64>> = (0..200_000u64)
            .into_par_iter()
            .map(|i| population_sample(&c, &mut replica_rng(3, i)))
            .collect();
        let mut var_exact = 0.0;
        for n in 1..=10usize {
            // Var Z_n = sigma^2 mu^(n-1) + mu^2 Var Z_(n-1)
            var_exact = s2 * mu.powi(n as i32 - 1) + mu * mu * var_exact;
            let xs: Vec<f64> = paths.iter().map(|p| p[n] as f64).collect();
            let m = mean(&xs);
            let sd = (var_exact / xs.len() as f64).sqrt();
            assert!((m - mu.powi(n as i32)).abs() < 3.0 * sd, "mean at n = {n}");
            // variance of the sample variance needs the fourth moment; use
            // a 5% relative band
            assert!((variance(&xs) / var_exact - 1.0).abs() < 0.05, "variance at n = {n}");
        }
        assert!((mu.powi(3) - 19.683).abs() < 1e-9);
    }

    #[test]
    fn variance_ratio_approaches_limit() {
        let c = cfg(0.1, 12);
        let law = c.law();
        let mu = law.mean();
        let xs: Vec<f64> = (0..200_000u64)
            .into_par_iter()
            .map(|i| population_sample(&c, &mut replica_rng(4, i))[12] as f64)
            .collect();
        let ratio = variance(&xs) / mu.powi(24);
        let limit = law.variance() / (mu * mu - mu);
        assert!((ratio / limit - 1.0).abs() < 0.05, "{ratio} vs {limit}");
    }

    #[test]
    fn extinction_edge_cases() {
        assert_eq!(extinction_probability(0.0), 0.0);
        assert_eq!(extinction_probability(1.0), 1.0);
        let e = extinction_probability(0.1);
        assert!(((0.1 + 0.9 * e).powi(3) - e).abs() < 1e-12);
        // the other root in [0, 1) of the cubic is negative
        assert!(e > 0.0 && e < 0.01);
    }

    #[test]
    fn extinction_matches_simulation() {
        for delta in [0.1, 0.2, 0.35] {
            let law = BinomialOffspring::ternary(delta);
            let e = extinction_fixed_point(&law);
            let cap = survival_cap(&law);
            let n = 1_000_000u64;
            let dead = (0..n)
                .into_par_iter()
                .filter(|&i| !survives(&law, 1, 200, cap, &mut replica_rng(11, i)))
                .count() as f64;
            let sd = (e * (1.0 - e) / n as f64).sqrt();
            assert!((dead / n as f64 - e).abs() < 3.0 * sd, "delta {delta}: {} vs {e}", dead / n as f64);
        }
    }

    #[test]
    fn ld_zero_without_deletion() {
        let sweep = ld_sweep(&cfg(0.0, 5), &[3, 4, 5]).unwrap();
        assert!(sweep.estimates.iter().all(|e| e.successes == 0));
    }

    #[test]
    fn ld_rejects_subcritical_and_bad_kappa() {
        assert!(ld_sweep(&cfg(0.8, 5), &[5]).is_err());
        let bad = GWConfig { kappa: 3.5, ..cfg(0.1, 5) };
        assert!(ld_sweep(&bad, &[5]).is_err());
    }

    #[test]
    fn ld_needs_survivors() {
        let few = GWConfig {
            replicas: 50,
            ..cfg(0.1, 5)
        };
        assert!(matches!(ld_sweep(&few, &[5]), Err(Error::InsufficientSurvivors { .. })));
    }

    #[test]
    fn ld_small_delta_below_two_pow_minus_n() {
        let c = GWConfig {
            delta: 0.01,
            ..cfg(0.01, 10)
        };
        let grid: Vec<u32> = (4..=10).collect();
        let sweep = ld_sweep(&c, &grid).unwrap();
        for e in &sweep.estimates {
            assert!(e.ci_high <= 0.5f64.powi(e.n as i32), "n = {}", e.n);
        }
    }

    #[test]
    fn ld_rate_grows_as_delta_shrinks() {
        let grid: Vec<u32> = (1..=10).collect();
        let rates: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&d| {
                let c = GWConfig {
                    replicas: 400_000,
                    ..cfg(d, 10)
                };
                ld_sweep(&c, &grid).unwrap().lambda_hat.unwrap()
            })
            .collect();
        assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
    }

    #[test]
    fn paley_zygmund_constant_behaviour() {
        assert_eq!(paley_zygmund_constant(0.0), 0.99);
        let bs: Vec<f64> = [0.3, 0.1, 0.01, 0.001].iter().map(|&d| paley_zygmund_constant(d)).collect();
        assert!(bs.windows(2).all(|w| w[0] <= w[1]), "{bs:?}");
        assert!(bs[3] > 0.9);

        let delta = 0.1;
        let b = paley_zygmund_constant(delta);
        let c = cfg(delta, 10);
        let mu10 = c.mu().powi(10);
        let n = 100_000u64;
        let hits = (0..n)
            .into_par_iter()
            .filter(|&i| population_sample(&c, &mut replica_rng(13, i))[10] as f64 >= b * mu10)
            .count() as f64;
        let p = hits / n as f64;
        assert!(p + 3.0 * (b * (1.0 - b) / n as f64).sqrt() >= b, "{p} < {b}");
    }

    #[test]
    fn exploration_frequency_matches_offspring_tail() {
        let c = GWConfig {
            replicas: 20_000,
            ..cfg(0.1, 20)
        };
        let r = exploration_events(&c, 0.25).unwrap();
        let law = c.law();
        assert!((r.p_at_least_two - 0.972).abs() < 1e-12);
        let e = extinction_probability(0.1);
        assert!((r.q - 0.972 * (1.0 - e)).abs() < 1e-12);
        assert!(r.event_frequency.within_sigmas(law.prob_at_least(2), 3.0));
        assert!(r.event_frequency.ci_high >= r.q);
        assert!(r.survivors >= 10_000);
    }

    #[test]
    fn exploration_shortfall_decays() {
        // at delta = 0.05 almost every E_i occurs, so the shortfall is only
        // visible for short explorations
        let fractions: Vec<f64> = [2u32, 4, 8]
            .iter()
            .map(|&n| {
                let c = GWConfig {
                    replicas: 50_000,
                    ..cfg(0.05, n)
                };
                exploration_events(&c, 0.25).unwrap().short_fraction.estimate
            })
            .collect();
        assert!(fractions[0] >= fractions[1] && fractions[1] >= fractions[2], "{fractions:?}");
        assert!(fractions[0] > fractions[2]);
    }

    #[test]
    fn tree_and_population_samplers_agree() {
        let law = BinomialOffspring::ternary(0.1);
        let n = 100_000u64;
        let mut tree_hist = vec![0u64; 28];
        let mut pop_hist = vec![0u64; 28];
        for i in 0..n {
            let t = GwTree::sample(&law, 3, &mut replica_rng(21, i));
            tree_hist[t.generation_size(3) as usize] += 1;
            let z = population_path(&law, 3, &mut replica_rng(22, i));
            pop_hist[z[3] as usize] += 1;
        }
        let pairs: Vec<_> = tree_hist.into_iter().zip(pop_hist).collect();
        let chi = chi_square_two_sample(&pairs, 5);
        assert!(chi.p_value > 0.01, "{chi:?}");
    }

    #[test]
    fn second_child_progenies_are_disjoint() {
        let law = BinomialOffspring::ternary(0.2);
        let mut audited = 0;
        for i in 0..2_000u64 {
            let t = GwTree::sample(&law, 9, &mut replica_rng(23, i));
            if let Some(a) = zsum_audit(&t, 0.5) {
                assert!(a.disjoint);
                assert!(a.z_n >= a.sum);
                audited += 1;
            }
        }
        assert!(audited > 1_000);
    }
}
