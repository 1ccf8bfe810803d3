//! Empirical mass-transport test: for a uniform neighbor `x` of the root,
//! `(G, o, x)` and `(G, x, o)` must have the same law.
//!
//! Balls are compared through exact canonical codes (AHU encoding of the
//! doubly rooted tree), never through hashes.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{ConstructionParams, RootLaw, Window};
use crate::error::{Error, Result};
use crate::graph::{filter, EdgeMarkSet, MarkedGraph, VertexId};
use crate::rng::{mix, replica_seed, tag, Keyed};
use crate::stats::{chi_square_two_sample, total_variation};

/// Canonical form of a doubly rooted marked ball.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BallCode(pub String);

impl fmt::Display for BallCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CodeOptions {
    /// Edges outside the filter are not part of the ball.
    pub filter: fn(EdgeMarkSet) -> bool,
    /// Mark bits written into the code.
    pub marks: EdgeMarkSet,
    /// Include canopy levels as vertex labels.
    pub levels: bool,
}

impl Default for CodeOptions {
    fn default() -> Self {
        Self { filter: filter::all, marks: EdgeMarkSet::STRUCTURAL, levels: false }
    }
}

fn encode(g: &MarkedGraph, u: VertexId, parent: VertexId, depth: u32, opts: &CodeOptions, out: &mut String) -> Result<()> {
    out.push('(');
    if opts.levels {
        match g.meta(u).level {
            Some(l) => out.push_str(&l.to_string()),
            None => out.push('t'),
        }
    }
    if depth > 0 {
        if g.is_frontier(u) {
            return Err(Error::FrontierUnderflow(u));
        }
        let mut children: Vec<String> = Vec::new();
        for (w, _, m) in g.neighbors(u) {
            if w == parent || !(opts.filter)(m) {
                continue;
            }
            let mut s = format!("{:x}", (m & opts.marks).bits());
            encode(g, w, u, depth - 1, opts, &mut s)?;
            children.push(s);
        }
        children.sort_unstable();
        for c in children {
            out.push_str(&c);
        }
    }
    out.push(')');
    Ok(())
}

/// Code of the union of the radius-`r` balls around `o` and `x`, which must
/// be adjacent through a filtered edge. Vertices closer than `r` to their
/// root must be fully expanded.
pub fn canonical_code(g: &MarkedGraph, o: VertexId, x: VertexId, r: u32, opts: &CodeOptions) -> Result<BallCode> {
    let e = g
        .edge_between(o, x)
        .filter(|&e| (opts.filter)(g.edge(e).marks))
        .ok_or_else(|| Error::InvalidParameter(format!("{o:?} and {x:?} are not adjacent")))?;
    let mut s = String::new();
    encode(g, o, x, r, opts, &mut s)?;
    s.push_str(&format!("{:x}", (g.edge(e).marks & opts.marks).bits()));
    encode(g, x, o, r, opts, &mut s)?;
    Ok(BallCode(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// One copy of the decorated canopy tree, size-biased root, degree-biased.
    CanopyPlus,
    /// The 4-regular tree with its structural marks.
    Window,
    /// Positive control: the root is always a canopy leaf.
    BrokenLeaf,
}

impl Sampler {
    fn setup(self) -> (RootLaw, CodeOptions) {
        match self {
            Sampler::CanopyPlus => (RootLaw::SizeBiased, CodeOptions { filter: filter::forest, ..CodeOptions::default() }),
            Sampler::BrokenLeaf => (RootLaw::CanopyLeaf, CodeOptions { filter: filter::forest, ..CodeOptions::default() }),
            Sampler::Window => (RootLaw::SizeBiased, CodeOptions::default()),
        }
    }

    /// Draws `(code(o, x), code(x, o))` for one doubly rooted sample.
    pub fn draw(self, seed: u64, r: u32, levels: bool) -> Result<(BallCode, BallCode)> {
        let (law, mut opts) = self.setup();
        opts.levels = levels;
        let keyed = Keyed::new(seed);
        for attempt in 0u64.. {
            let params = ConstructionParams { root_law: law, ..ConstructionParams::with_seed(mix(seed, attempt)) };
            let mut win = Window::from_params(&params)?;
            let o = win.root();
            win.lazy_expand(o)?;
            let nbrs: Vec<VertexId> = win
                .graph()
                .neighbors(o)
                .filter(|&(_, _, m)| (opts.filter)(m))
                .map(|(w, _, _)| w)
                .collect();
            // rebias by the root degree, which is 1 or 4
            if keyed.uniform(attempt, tag::ATTEMPT) * 4.0 >= nbrs.len() as f64 {
                continue;
            }
            let x = nbrs[(keyed.bits(attempt, tag::REPLICA) % nbrs.len() as u64) as usize];
            win.expand_ball(o, r, opts.filter)?;
            win.expand_ball(x, r, opts.filter)?;
            let g = win.graph();
            return Ok((canonical_code(g, o, x, r, &opts)?, canonical_code(g, x, o, r, &opts)?));
        }
        unreachable!("attempt counter overflow")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassTransport {
    pub samples: usize,
    pub categories: usize,
    pub tv: f64,
    /// 99% quantile of the TV distance under random relabeling of batches.
    pub tv_threshold: f64,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl MassTransport {
    pub fn rejected(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Minimum pooled count for a category to keep its own chi-square bin.
const MIN_POOLED: u64 = 10;
const PERMUTATIONS: usize = 200;

fn contingency(a: &[BallCode], b: &[BallCode]) -> Vec<(u64, u64)> {
    let mut table: BTreeMap<&BallCode, (u64, u64)> = BTreeMap::new();
    for c in a {
        table.entry(c).or_default().0 += 1;
    }
    for c in b {
        table.entry(c).or_default().1 += 1;
    }
    table.into_values().collect()
}

/// 99% quantile of the TV distance when the pooled codes are split at
/// random into batches of the original sizes.
pub fn permutation_tv_threshold(pairs: &[(u64, u64)], seed: u64) -> f64 {
    let n_a: u64 = pairs.iter().map(|p| p.0).sum();
    let mut pooled: Vec<usize> = pairs
        .iter()
        .enumerate()
        .flat_map(|(i, &(x, y))| std::iter::repeat_n(i, (x + y) as usize))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, tag::REPLICA));
    let mut null: Vec<f64> = (0..PERMUTATIONS)
        .map(|_| {
            pooled.shuffle(&mut rng);
            let mut counts = vec![(0u64, 0u64); pairs.len()];
            for (j, &i) in pooled.iter().enumerate() {
                if (j as u64) < n_a {
                    counts[i].0 += 1;
                } else {
                    counts[i].1 += 1;
                }
            }
            total_variation(&counts)
        })
        .collect();
    null.sort_by(f64::total_cmp);
    null[(PERMUTATIONS * 99).div_ceil(100) - 1]
}

/// Compares two independent batches of codes. The TV threshold is left as
/// NaN; see [`permutation_tv_threshold`].
pub fn two_sample(a: &[BallCode], b: &[BallCode]) -> MassTransport {
    let pairs = contingency(a, b);
    let chi = chi_square_two_sample(&pairs, MIN_POOLED);
    MassTransport {
        samples: a.len(),
        categories: pairs.len(),
        tv: total_variation(&pairs),
        tv_threshold: f64::NAN,
        statistic: chi.statistic,
        dof: chi.dof,
        p_value: chi.p_value,
    }
}

/// Forward codes from replicas `0..n`, swapped codes from replicas `n..2n`.
pub fn mass_transport_test(sampler: Sampler, r: u32, samples: usize, seed: u64, levels: bool) -> Result<MassTransport> {
    let draws: Vec<(BallCode, BallCode)> = (0..2 * samples as u64)
        .into_par_iter()
        .map(|i| sampler.draw(replica_seed(seed, i), r, levels))
        .collect::<Result<_>>()?;
    let forward: Vec<BallCode> = draws[..samples].iter().map(|d| d.0.clone()).collect();
    let backward: Vec<BallCode> = draws[samples..].iter().map(|d| d.1.clone()).collect();
    let mut out = two_sample(&forward, &backward);
    out.tv_threshold = permutation_tv_threshold(&contingency(&forward, &backward), seed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexMeta;
    use crate::stats::ks_uniform;
    use proptest::prelude::*;

    const MARKS: [EdgeMarkSet; 3] = [EdgeMarkSet::IN_CANOPY, EdgeMarkSet::IN_TERNARY, EdgeMarkSet::IN_R_TREE];

    fn meta() -> VertexMeta {
        VertexMeta { level: None, leaf_type: None, frontier: false }
    }

    /// Tree from a parent list: vertex `i + 1` hangs below `parents[i] % (i + 1)`,
    /// or the next vertex of degree below 4.
    fn tree(parents: &[usize], marks: &[usize]) -> MarkedGraph {
        let mut g = MarkedGraph::new(meta());
        for (i, &p) in parents.iter().enumerate() {
            let v = g.add_vertex(meta());
            // the next vertex with a free slot; leaves always have one
            let mut u = p % (i + 1);
            while g.degree(VertexId(u as u32)) == 4 {
                u = (u + 1) % (i + 1);
            }
            g.add_edge(VertexId(u as u32), v, MARKS[marks[i] % 3]).unwrap();
        }
        g
    }

    /// The same tree with ids permuted by `perm`.
    fn relabel(g: &MarkedGraph, perm: &[usize]) -> (MarkedGraph, Vec<VertexId>) {
        let n = g.vertex_count();
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut h = MarkedGraph::new(meta());
        for _ in 1..n {
            h.add_vertex(meta());
        }
        let mut edges: Vec<_> = g.edges().map(|(_, e)| (e.u, e.v, e.marks)).collect();
        edges.sort_by_key(|&(u, v, _)| (inverse[v.index()], inverse[u.index()]));
        for (u, v, m) in edges {
            h.add_edge(VertexId(inverse[u.index()] as u32), VertexId(inverse[v.index()] as u32), m).unwrap();
        }
        (h, inverse.into_iter().map(|i| VertexId(i as u32)).collect())
    }

    /// Backtracking isomorphism of the rooted subtrees cut at distance `depth`.
    fn iso(g: &MarkedGraph, u: VertexId, pu: VertexId, h: &MarkedGraph, w: VertexId, pw: VertexId, depth: u32) -> bool {
        if depth == 0 {
            return true;
        }
        let cu: Vec<_> = g.neighbors(u).filter(|&(c, _, _)| c != pu).collect();
        let cw: Vec<_> = h.neighbors(w).filter(|&(c, _, _)| c != pw).collect();
        if cu.len() != cw.len() {
            return false;
        }
        fn assign(
            i: usize,
            cu: &[(VertexId, crate::graph::EdgeId, EdgeMarkSet)],
            cw: &[(VertexId, crate::graph::EdgeId, EdgeMarkSet)],
            used: &mut Vec<bool>,
            ctx: (&MarkedGraph, VertexId, &MarkedGraph, VertexId, u32),
        ) -> bool {
            if i == cu.len() {
                return true;
            }
            let (g, u, h, w, depth) = ctx;
            for j in 0..cw.len() {
                if !used[j] && cu[i].2 == cw[j].2 && iso(g, cu[i].0, u, h, cw[j].0, w, depth - 1) {
                    used[j] = true;
                    if assign(i + 1, cu, cw, used, ctx) {
                        return true;
                    }
                    used[j] = false;
                }
            }
            false
        }
        assign(0, &cu, &cw, &mut vec![false; cw.len()], (g, u, h, w, depth))
    }

    fn doubly_iso(g: &MarkedGraph, o: VertexId, x: VertexId, h: &MarkedGraph, o2: VertexId, x2: VertexId, r: u32) -> bool {
        let m1 = g.edge(g.edge_between(o, x).unwrap()).marks;
        let m2 = h.edge(h.edge_between(o2, x2).unwrap()).marks;
        m1 == m2 && iso(g, o, x, h, o2, x2, r) && iso(g, x, o, h, x2, o2, r)
    }

    fn arb_tree() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..20).prop_flat_map(|n| (prop::collection::vec(0usize..64, n), prop::collection::vec(0usize..3, n)))
    }

    #[test]
    fn symmetric_edge_swaps_to_equal_code() {
        let mut w = Window::from_params(&ConstructionParams::with_seed(1)).unwrap();
        let o = w.root();
        let x = w.neighbor(o, 0).unwrap();
        w.expand_ball(o, 3, filter::all).unwrap();
        w.expand_ball(x, 3, filter::all).unwrap();
        let opts = CodeOptions { marks: EdgeMarkSet::empty(), ..CodeOptions::default() };
        assert_eq!(canonical_code(w.graph(), o, x, 2, &opts).unwrap(), canonical_code(w.graph(), x, o, 2, &opts).unwrap());
    }

    #[test]
    fn star_roles_are_asymmetric() {
        let g = tree(&[0, 0, 0], &[0, 0, 0]);
        let opts = CodeOptions::default();
        let a = canonical_code(&g, VertexId(1), VertexId(0), 2, &opts).unwrap();
        let b = canonical_code(&g, VertexId(0), VertexId(1), 2, &opts).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn unexpanded_ball_is_rejected() {
        let w = Window::from_params(&ConstructionParams::with_seed(2)).unwrap();
        let mut w = w;
        let o = w.root();
        let x = w.neighbor(o, 0).unwrap();
        assert!(matches!(canonical_code(w.graph(), o, x, 2, &CodeOptions::default()), Err(Error::FrontierUnderflow(_))));
    }

    proptest! {
        #[test]
        fn codes_ignore_vertex_ids((parents, marks) in arb_tree(), perm_seed in any::<u64>(), r in 1u32..5) {
            let g = tree(&parents, &marks);
            let mut perm: Vec<usize> = (0..g.vertex_count()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let (h, map) = relabel(&g, &perm);
            let o = VertexId(0);
            let x = g.neighbors(o).next().unwrap().0;
            let opts = CodeOptions::default();
            prop_assert_eq!(
                canonical_code(&g, o, x, r, &opts).unwrap(),
                canonical_code(&h, map[o.index()], map[x.index()], r, &opts).unwrap()
            );
        }

        #[test]
        fn codes_agree_with_brute_force_isomorphism(
            (p1, m1) in arb_tree(),
            (p2, m2) in arb_tree(),
            r in 1u32..4,
        ) {
            let g = tree(&p1, &m1);
            let h = tree(&p2, &m2);
            let opts = CodeOptions::default();
            for (o, x) in g.edges().map(|(_, e)| (e.u, e.v)).take(4) {
                for (o2, x2) in h.edges().map(|(_, e)| (e.u, e.v)).take(4) {
                    let same = canonical_code(&g, o, x, r, &opts).unwrap() == canonical_code(&h, o2, x2, r, &opts).unwrap();
                    prop_assert_eq!(same, doubly_iso(&g, o, x, &h, o2, x2, r));
                }
            }
        }

        #[test]
        fn codes_match_isomorphism_within_one_tree((parents, marks) in arb_tree(), r in 1u32..4) {
            // many repeated shapes: all ordered edge pairs of one tree
            let g = tree(&parents, &marks);
            let opts = CodeOptions::default();
            let pairs: Vec<_> = g.edges().flat_map(|(_, e)| [(e.u, e.v), (e.v, e.u)]).collect();
            for &(o, x) in &pairs {
                for &(o2, x2) in &pairs {
                    let same = canonical_code(&g, o, x, r, &opts).unwrap() == canonical_code(&g, o2, x2, r, &opts).unwrap();
                    prop_assert_eq!(same, doubly_iso(&g, o, x, &g, o2, x2, r));
                }
            }
        }
    }

    #[test]
    fn canopy_plus_root_degree_is_one_or_four() {
        for seed in 0..200 {
            let params = ConstructionParams::with_seed(seed);
            let mut w = Window::from_params(&params).unwrap();
            let o = w.root();
            w.lazy_expand(o).unwrap();
            let d = w.graph().neighbors(o).filter(|&(_, _, m)| m.in_forest()).count();
            assert!(d == 1 || d == 4, "degree {d}");
        }
    }

    #[test]
    fn draws_are_deterministic() {
        for s in [Sampler::CanopyPlus, Sampler::Window, Sampler::BrokenLeaf] {
            assert_eq!(s.draw(11, 2, true).unwrap(), s.draw(11, 2, true).unwrap());
        }
    }

    #[test]
    fn broken_sampler_is_rejected() {
        let out = mass_transport_test(Sampler::BrokenLeaf, 2, 20_000, 3, false).unwrap();
        assert!(out.rejected(0.01), "{out:?}");
        assert!(out.tv > out.tv_threshold);
    }

    #[test]
    fn window_sampler_is_not_rejected_small() {
        let out = mass_transport_test(Sampler::Window, 2, 20_000, 4, false).unwrap();
        assert!(!out.rejected(0.01), "{out:?}");
    }

    #[test]
    fn null_p_values_are_uniform() {
        let n = 1_000;
        let p: Vec<f64> = (0..200u64)
            .map(|t| {
                let draw = |i: u64| Sampler::CanopyPlus.draw(replica_seed(mix(t, 77), i), 1, false).unwrap().0;
                let a: Vec<_> = (0..n).map(draw).collect();
                let b: Vec<_> = (n..2 * n).map(draw).collect();
                two_sample(&a, &b).p_value
            })
            .collect();
        let (_, pv) = ks_uniform(&p);
        assert!(pv > 0.01, "KS p = {pv}");
    }
}
