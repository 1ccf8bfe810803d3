//! The single sample of the decorated canopy tree and its root.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::position::{CanopyPos, Position};
use crate::error::{Error, Result};
use crate::exact::{self, pow4_neg};
use crate::rng::{tag, Keyed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Treat every ray label above the level cap as 0.
    Truncate,
    /// Sample the finitely many ray labels equal to 1 above the cap exactly.
    #[default]
    ExactTail,
}

/// Law of the root of the decorated canopy tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootLaw {
    /// Unimodular law of the decorated tree: a canopy level with weight
    /// `3^-i`, size-biased by the ternary tree owned by the vertex, then a
    /// uniform vertex of that tree.
    #[default]
    SizeBiased,
    /// Canopy vertex at level `i` with probability `(2/3) 3^-i`.
    CanopyUniform,
    /// Level-0 canopy vertex with `m = 0` (the law conditioned on `A`).
    TypeZeroLeaf,
    /// Always a level-0 canopy vertex with unconditioned labels. Not
    /// unimodular; kept as a positive control.
    CanopyLeaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub seed: u64,
    /// Highest ray level whose label is drawn from the keyed stream and
    /// the top of the eagerly built canopy block.
    pub level_cap: u32,
    pub vertex_budget: usize,
    pub tail_mode: TailMode,
    pub root_law: RootLaw,
    /// Maximum tolerated truncated tail mass in [`TailMode::Truncate`].
    pub tail_tolerance: f64,
    /// Graph radius expanded by `build_window`.
    pub window_radius: u32,
}

impl Default for ConstructionParams {
    fn default() -> Self {
        Self {
            seed: 0,
            level_cap: 2,
            vertex_budget: 1_000_000,
            tail_mode: TailMode::ExactTail,
            root_law: RootLaw::SizeBiased,
            tail_tolerance: 1e-6,
            window_radius: 4,
        }
    }
}

impl ConstructionParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_cap < 1 {
            return Err(Error::InvalidParameter("level_cap must be >= 1".into()));
        }
        if self.vertex_budget < 1 {
            return Err(Error::InvalidParameter("vertex_budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// Level of a canopy root under the law `(2/3) 3^-i`, by inversion.
pub fn sample_root_level<R: RngCore + ?Sized>(rng: &mut R) -> u32 {
    let u: f64 = unit(rng);
    // P(level <= i) = 1 - 3^-(i+1)
    let mut level = 0;
    let mut tail = 1.0 / 3.0;
    while u >= 1.0 - tail && level < 1000 {
        level += 1;
        tail /= 3.0;
    }
    level
}

fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    crate::rng::unit_f64(rng.next_u64())
}

/// Labels along an ancestor chain, indexed by distance (`chain[i]` belongs
/// to the `i`-grandparent), together with what is known beyond its end.
#[derive(Debug, Clone, PartialEq)]
pub struct XiChain {
    pub bits: Vec<bool>,
    pub tail: ChainTail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainTail {
    /// Every label beyond the chain is certified 0.
    Certified,
    /// Labels beyond the chain were not examined.
    Truncated { tolerance: f64 },
}

/// `m(x)`: the largest distance at which the chain carries a 1.
pub fn compute_m(chain: &XiChain) -> Result<u32> {
    if let ChainTail::Truncated { tolerance } = chain.tail {
        let mass = exact::tail_mass_pow4(chain.bits.len() as u32);
        if mass > tolerance {
            return Err(Error::TailUncertain { mass, tolerance });
        }
    }
    debug_assert!(chain.bits.first().copied().unwrap_or(true), "p_0 = 1");
    Ok(chain.bits.iter().rposition(|&b| b).unwrap_or(0) as u32)
}

/// Exact sample of `{ i > cap : xi_i = 1 }` for independent
/// `xi_i ~ Bernoulli(4^-i)`.
///
/// Decides whether any 1 exists above the current level, draws the lowest
/// such level from its conditional law by inversion, and repeats from
/// there.
pub fn sample_tail_levels<R: RngCore + ?Sized>(cap: u32, rng: &mut R) -> Vec<u32> {
    let mut out = Vec::new();
    let mut level = cap;
    loop {
        let p_any = exact::one_minus_prod_one_minus_pow4_from(level + 1);
        if p_any == 0.0 || unit(rng) >= p_any {
            return out;
        }
        // P(lowest <= j | any) = (1 - prod_{level<i<=j}(1-4^-i)) / p_any
        let target = unit(rng) * p_any;
        let mut ln_prod = 0.0;
        let mut j = level;
        loop {
            j += 1;
            ln_prod += (-pow4_neg(j)).ln_1p();
            let below = -f64::exp_m1(ln_prod);
            if below > target || pow4_neg(j) < 1e-300 {
                break;
            }
        }
        out.push(j);
        level = j;
    }
}

/// An abstract, infinite sample of the decorated canopy tree together with
/// the position of its root. All labels are pure functions of the seed and
/// a position, so the object is fully determined without materializing it.
#[derive(Debug, Clone)]
pub struct Sample {
    keyed: Keyed,
    /// Level of the lowest ray vertex.
    floor: u32,
    /// Ray levels `>= max(floor, 1)` whose label is 1, sorted.
    ray_ones: Vec<u32>,
    root: Position,
    params: ConstructionParams,
}

impl Sample {
    pub fn new(params: &ConstructionParams) -> Result<Self> {
        params.validate()?;
        let keyed = Keyed::new(params.seed);
        let mut rng = keyed.stream(0, tag::ROOT);
        let cap = params.level_cap;
        let free_ray = |floor: u32, rng: &mut dyn RngCore| -> Vec<u32> {
            let mut ones: Vec<u32> = (floor.max(1)..=cap)
                .filter(|&l| keyed.bernoulli_pow4(CanopyPos::ray(l).key(), l))
                .collect();
            if params.tail_mode == TailMode::ExactTail {
                ones.extend(sample_tail_levels(cap.max(floor.saturating_sub(1)), rng));
            }
            ones
        };
        let conditioned_ray = |k: u32| -> Vec<u32> {
            let mut ones: Vec<u32> = (1..k)
                .filter(|&l| keyed.bernoulli_pow4(CanopyPos::ray(l).key(), l))
                .collect();
            if k >= 1 {
                ones.push(k);
            }
            ones
        };
        let (floor, ray_ones, root) = match params.root_law {
            RootLaw::CanopyUniform => {
                let level = sample_root_level(&mut rng);
                (level, free_ray(level, &mut rng), Position::Canopy(CanopyPos::ray(level)))
            }
            RootLaw::CanopyLeaf => (0, free_ray(0, &mut rng), Position::Canopy(CanopyPos::ray(0))),
            RootLaw::TypeZeroLeaf => (0, Vec::new(), Position::Canopy(CanopyPos::ray(0))),
            RootLaw::SizeBiased => match sample_size_biased(&mut rng) {
                SizeBiasedDraw::Canopy(level) => {
                    (level, free_ray(level, &mut rng), Position::Canopy(CanopyPos::ray(level)))
                }
                SizeBiasedDraw::Ternary { height, depth } => {
                    let base = CanopyPos::ray(0);
                    let root = if depth == 0 {
                        Position::Canopy(base)
                    } else {
                        Position::Ternary { base, depth, height }
                    };
                    (0, conditioned_ray(height), root)
                }
            },
        };
        Ok(Self {
            keyed,
            floor,
            ray_ones,
            root,
            params: *params,
        })
    }

    pub fn params(&self) -> &ConstructionParams {
        &self.params
    }

    pub fn floor(&self) -> u32 {
        self.floor
    }

    pub fn root(&self) -> Position {
        self.root
    }

    pub fn ray_ones(&self) -> &[u32] {
        &self.ray_ones
    }

    /// `xi_v` for a canopy position.
    pub fn xi(&self, c: CanopyPos) -> bool {
        let level = c.level();
        if level == 0 {
            return true;
        }
        if c.on_ray() {
            return self.ray_ones.binary_search(&level).is_ok();
        }
        self.keyed.bernoulli_pow4(c.key(), level)
    }

    /// `m(x)` for a level-0 canopy position.
    pub fn m(&self, x: CanopyPos) -> u32 {
        debug_assert_eq!(x.level(), 0);
        if let Some(&top) = self.ray_ones.last() {
            if top >= x.anchor {
                return top;
            }
        }
        (1..x.anchor)
            .rev()
            .find(|&i| self.xi(x.ancestor_at(i)))
            .unwrap_or(0)
    }

    /// The ancestor labels of a level-0 position as a chain for
    /// [`compute_m`], certified up to the last ray 1.
    pub fn xi_chain(&self, x: CanopyPos) -> XiChain {
        let top = self.ray_ones.last().copied().unwrap_or(0).max(x.anchor);
        let bits = (0..=top).map(|i| self.xi(x.ancestor_at(i))).collect();
        let tail = match self.params.tail_mode {
            TailMode::ExactTail => ChainTail::Certified,
            TailMode::Truncate => ChainTail::Truncated {
                tolerance: self.params.tail_tolerance,
            },
        };
        XiChain { bits, tail }
    }

    /// Event `A`: the root is a level-0 canopy vertex with `m = 0`.
    pub fn root_is_type_zero_leaf(&self) -> bool {
        match self.root {
            Position::Canopy(c) => c.level() == 0 && self.m(c) == 0,
            Position::Ternary { .. } => false,
        }
    }
}

enum SizeBiasedDraw {
    Canopy(u32),
    Ternary { height: u32, depth: u32 },
}

fn sample_size_biased<R: RngCore + ?Sized>(rng: &mut R) -> SizeBiasedDraw {
    let mean_t = exact::expected_ternary_size();
    let w0 = 2.0 / 3.0 * mean_t;
    let total = w0 + 1.0 / 3.0;
    let u = unit(rng) * total;
    if u >= w0 {
        // levels >= 1 carry mass (1/3)(1 - 3^-l) cumulatively
        let r = u - w0;
        let mut level = 1;
        let mut cum = 2.0 / 9.0;
        while r >= cum && level < 1000 {
            level += 1;
            cum += 2.0 / 3.0 * 3f64.powi(-(level as i32));
        }
        return SizeBiasedDraw::Canopy(level);
    }
    // height k with weight P(m = k) |T(k)|, then depth d with weight 3^d
    let target = unit(rng) * mean_t;
    let mut height = 0;
    let mut cum = 0.0;
    loop {
        cum += exact::m_pmf(height) * exact::ternary_size(height);
        if cum > target || height >= 400 {
            break;
        }
        height += 1;
    }
    let target = unit(rng) * exact::ternary_size(height);
    let mut depth = 0;
    let mut cum = 1.0;
    while cum <= target && depth < height {
        depth += 1;
        cum += 3f64.powi(depth as i32);
    }
    SizeBiasedDraw::Ternary { height, depth }
}
