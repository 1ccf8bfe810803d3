//! Witness sets: good vertices, the trees `t_v` and `t_v+`, the sets `H`
//! and the anchored Følner sets `K_n`.
//!
//! Everything here runs on a noised [`Window`] and materializes only what
//! it inspects. Candidate good vertices are located from positions alone
//! and only the chosen one is materialized.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::construction::{CanopyPos, Position, Window};
use crate::error::{Error, Result};
use crate::graph::{filter, EdgeMarkSet, MarkedGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessParams {
    pub n: u32,
    /// Radius of the niceness search in the regular tree of the root.
    pub search_radius: u32,
    /// Vertices one niceness check may create.
    pub niceness_budget: usize,
}

impl WitnessParams {
    pub fn new(n: u32) -> Self {
        Self {
            n,
            search_radius: n * n,
            niceness_budget: 2_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if self.n > 30 {
            return Err(Error::InvalidParameter("n above 30 overflows the candidate count".into()));
        }
        if self.search_radius < 1 {
            return Err(Error::InvalidParameter("search radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// The root is a level-0 canopy vertex of type 0.
pub fn event_a(g: &MarkedGraph) -> bool {
    let meta = g.meta(g.root());
    meta.level == Some(0) && meta.leaf_type == Some(0)
}

fn is_type_zero_leaf(win: &Window, x: VertexId) -> bool {
    matches!(win.position(x), Position::Canopy(c) if c.level() == 0) && win.site(x).m == 0
}

/// Children of `p` in search order. Below a ray vertex the child on the ray
/// comes last, so the path from the anchor has the full length `5n`
/// whenever some candidate off that branch is good.
fn child_order(p: CanopyPos, floor: u32) -> [u8; 3] {
    if p.on_ray() && p.anchor > floor {
        [1, 2, 0]
    } else {
        [0, 1, 2]
    }
}

/// First `2n`-grandchild of the `3n`-grandparent of `anchor` whose label
/// satisfies `xi`, in search order.
pub fn good_vertex_position<F>(anchor: CanopyPos, n: u32, floor: u32, xi: F) -> Result<Option<CanopyPos>>
where
    F: Fn(CanopyPos) -> bool,
{
    let w = anchor.ancestor_at(3 * n);
    let len = 2 * n as usize;
    let mut rank = vec![0usize; len];
    let mut stack = vec![w; len + 1];
    let mut from = 0;
    loop {
        for i in from..len {
            let p = stack[i];
            stack[i + 1] = p.child(child_order(p, floor)[rank[i]], floor)?;
        }
        if xi(stack[len]) {
            return Ok(Some(stack[len]));
        }
        // odometer step on the deepest digit that can still move
        let Some(i) = (0..len).rev().find(|&i| rank[i] < 2) else {
            return Ok(None);
        };
        rank[i] += 1;
        rank[i + 1..].iter_mut().for_each(|r| *r = 0);
        from = i;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoodVertex {
    pub v: VertexId,
    /// The `3n`-grandparent of the anchor.
    pub w: VertexId,
    /// The tree path from the anchor to `v`, anchor first.
    pub path: Vec<VertexId>,
}

/// Materializes the anchor-to-`v` path for the first good vertex of the
/// copy containing `anchor`.
pub fn find_good_vertex(win: &mut Window, anchor: VertexId, n: u32) -> Result<Option<GoodVertex>> {
    let sample = win.sample().clone();
    find_good_vertex_with(win, anchor, n, |p| sample.xi(p))
}

/// [`find_good_vertex`] with the labels at level `n` supplied by `xi`.
pub fn find_good_vertex_with<F>(win: &mut Window, anchor: VertexId, n: u32, xi: F) -> Result<Option<GoodVertex>>
where
    F: Fn(CanopyPos) -> bool,
{
    if !is_type_zero_leaf(win, anchor) {
        return Err(Error::InvalidParameter(format!("{anchor:?} is not a type-0 leaf")));
    }
    let Position::Canopy(a) = win.position(anchor) else { unreachable!() };
    let floor = win.sample().floor();
    let Some(target) = good_vertex_position(a, n, floor, xi)? else {
        return Ok(None);
    };
    let meet = (n..=3 * n)
        .find(|&l| a.ancestor_at(l) == target.ancestor_at(l))
        .expect("w is a common ancestor");
    let mut path = vec![anchor];
    let mut u = anchor;
    let mut w = None;
    for level in 1..=3 * n {
        u = win.neighbor(u, 0)?;
        if level <= meet {
            path.push(u);
        }
        if level == 3 * n {
            w = Some(u);
        }
    }
    let mut u = path[meet as usize];
    for level in (n..meet).rev() {
        let step = target.ancestor_at(level);
        u = win.neighbor(u, 1 + step.digit_under_parent() as usize)?;
        path.push(u);
    }
    debug_assert_eq!(win.position(u), Position::Canopy(target));
    Ok(Some(GoodVertex {
        v: u,
        w: w.expect("n >= 1"),
        path,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TvSets {
    /// The noised component of `v` in its subtree, first `n` generations.
    pub t_v: Vec<VertexId>,
    /// `t_v` if the component reaches a leaf of the decorated tree, the
    /// whole component otherwise.
    pub t_v_plus: Vec<VertexId>,
    pub reached_leaf: bool,
}

/// Breadth-first growth of the noised component of `v` below `v`.
pub fn grow_t_v(win: &mut Window, v: VertexId, n: u32) -> Result<TvSets> {
    let mut order = vec![(v, 0u32)];
    let mut head = 0;
    let mut reached_leaf = false;
    while head < order.len() {
        let (u, d) = order[head];
        head += 1;
        if win.is_leaf(u) {
            reached_leaf = true;
            break;
        }
        for slot in 1..4 {
            let c = win.neighbor(u, slot)?;
            let e = win.graph().edge_between(u, c).expect("slot edge");
            if win.graph().edge(e).marks.in_noised_omega() {
                order.push((c, d + 1));
            }
        }
    }
    let t_v: Vec<_> = order.iter().filter(|(_, d)| *d <= n).map(|(u, _)| *u).collect();
    let t_v_plus = if reached_leaf {
        t_v.clone()
    } else {
        order.iter().map(|(u, _)| *u).collect()
    };
    Ok(TvSets {
        t_v,
        t_v_plus,
        reached_leaf,
    })
}

/// `|dK|` in the noised configuration, after materializing every
/// neighbor of `k`.
pub fn noised_boundary(win: &mut Window, k: &[VertexId]) -> Result<usize> {
    for &u in k {
        win.lazy_expand(u)?;
    }
    Ok(win.graph().edge_boundary(k, filter::noised_omega)?.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HWitness {
    pub good: GoodVertex,
    pub path_open: bool,
    pub tv: TvSets,
    /// `P_v` open and `|t_v+| > 2^n`.
    pub b_n: bool,
    /// `P_v` together with `t_v+`, on `B_n`.
    pub h: Option<Vec<VertexId>>,
    pub h_boundary: Option<usize>,
}

impl HWitness {
    pub fn path_edges(&self) -> usize {
        self.good.path.len() - 1
    }

    /// `|dH| <= 10n + 1` and `|H| >= 5n + 2^n`.
    pub fn is_nice(&self, n: u32) -> bool {
        match (&self.h, self.h_boundary) {
            (Some(h), Some(b)) => b <= 10 * n as usize + 1 && h.len() as u64 >= 5 * n as u64 + (1u64 << n),
            _ => false,
        }
    }
}

/// Builds `H` for the copy anchored at `anchor`, or `None` if it has no good
/// vertex.
pub fn build_h(win: &mut Window, anchor: VertexId, n: u32) -> Result<Option<HWitness>> {
    let Some(good) = find_good_vertex(win, anchor, n)? else {
        return Ok(None);
    };
    let g = win.graph();
    let path_open = good.path.windows(2).all(|p| {
        let e = g.edge_between(p[0], p[1]).expect("path edge");
        g.edge(e).marks.in_noised_omega()
    });
    let tv = grow_t_v(win, good.v, n)?;
    let b_n = path_open && tv.t_v_plus.len() as u64 > (1u64 << n);
    let (h, h_boundary) = if b_n {
        let mut h = good.path.clone();
        h.extend(tv.t_v_plus.iter().copied().filter(|&u| u != good.v));
        let b = noised_boundary(win, &h)?;
        (Some(h), Some(b))
    } else {
        (None, None)
    };
    Ok(Some(HWitness {
        good,
        path_open,
        tv,
        b_n,
        h,
        h_boundary,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiceCheck {
    pub nice: bool,
    pub witness: Option<HWitness>,
}

/// Whether the copy anchored at the type-0 leaf `x` is `n`-nice, using at
/// most `budget` new vertices.
pub fn check_nice(win: &mut Window, x: VertexId, n: u32, budget: usize) -> Result<NiceCheck> {
    let global = win.budget();
    win.set_budget(global.min(win.graph().vertex_count().saturating_add(budget)));
    let out = build_h(win, x, n);
    win.set_budget(global);
    let witness = out?;
    let nice = witness.as_ref().is_some_and(|h| h.is_nice(n));
    Ok(NiceCheck { nice, witness })
}

/// Per-`n` outcome of the witness pipeline at the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub n: u32,
    pub a_holds: bool,
    pub a_n_prime_holds: bool,
    pub good_vertex_found: bool,
    pub path_len: Option<usize>,
    pub path_open: Option<bool>,
    pub t_v_size: Option<usize>,
    pub t_v_plus_size: Option<usize>,
    pub b_n_holds: bool,
    pub h_size: Option<usize>,
    pub h_boundary: Option<usize>,
    /// The root itself is nice.
    pub root_nice: bool,
    /// Distance in the open regular tree to the first nice copy, if the
    /// search ran and succeeded.
    pub nice_x_distance: Option<u32>,
    pub k_size: Option<usize>,
    pub k_boundary: Option<usize>,
    pub ratio: Option<f64>,
    /// Copies checked by the niceness search.
    pub checked: u32,
    pub budget_exceeded: bool,
    /// `(|H|, |dH|)` recounted slot by slot when the root is nice.
    pub h_recount: Option<(usize, usize)>,
}

impl WitnessReport {
    fn empty(n: u32, a_holds: bool) -> Self {
        Self {
            n,
            a_holds,
            a_n_prime_holds: false,
            good_vertex_found: false,
            path_len: None,
            path_open: None,
            t_v_size: None,
            t_v_plus_size: None,
            b_n_holds: false,
            h_size: None,
            h_boundary: None,
            root_nice: false,
            nice_x_distance: None,
            k_size: None,
            k_boundary: None,
            ratio: None,
            checked: 0,
            budget_exceeded: false,
            h_recount: None,
        }
    }

    /// `|dH| > 2|P_v| + 1`, defined on `B_n`.
    /// A report whose replica ran out of vertex budget.
    pub fn budget_flagged(n: u32, a_holds: bool) -> Self {
        Self { budget_exceeded: true, ..Self::empty(n, a_holds) }
    }

    pub fn boundary_excess(&self) -> Option<bool> {
        Some(self.h_boundary? > 2 * self.path_len? + 1)
    }

    /// `|H| >= 5n + 2^n` on `B_n`.
    pub fn h_size_ok(&self) -> Option<bool> {
        Some(self.h_size? as u64 >= 5 * self.n as u64 + (1u64 << self.n))
    }

    /// `|dK_n| <= 12n + n^2` and `|K_n| >= 5n + 2^n` on success.
    pub fn k_bounds_ok(&self) -> Option<bool> {
        let n = self.n as u64;
        Some(self.k_boundary? as u64 <= 12 * n + n * n && self.k_size? as u64 >= 5 * n + (1u64 << n))
    }

    /// `|dK| <= 10n + 2q + 1`, which is what the construction guarantees
    /// for a nice vertex at distance `q`.
    pub fn k_boundary_within_path_bound(&self) -> Option<bool> {
        let n = self.n as usize;
        Some(self.k_boundary? <= 10 * n + 2 * self.nice_x_distance? as usize + 1)
    }

    /// The recount agrees with the measured `H` and satisfies both bounds.
    pub fn nice_checks_hold(&self) -> Option<bool> {
        let (size, boundary) = self.h_recount?;
        let n = self.n as u64;
        Some(
            Some(size) == self.h_size
                && Some(boundary) == self.h_boundary
                && boundary as u64 <= 10 * n + 1
                && size as u64 >= 5 * n + (1u64 << n),
        )
    }

    fn record_h(&mut self, h: &HWitness, n: u32) {
        self.good_vertex_found = true;
        self.a_n_prime_holds = self.a_holds;
        self.path_len = Some(h.path_edges());
        self.path_open = Some(h.path_open);
        self.t_v_size = Some(h.tv.t_v.len());
        self.t_v_plus_size = Some(h.tv.t_v_plus.len());
        self.b_n_holds = h.b_n;
        self.h_size = h.h.as_ref().map(Vec::len);
        self.h_boundary = h.h_boundary;
        self.root_nice = h.is_nice(n);
    }
}

/// The root-level part of the pipeline: `A`, `A'_n`, `H` and niceness of
/// the root, without the search over other copies.
/// `(|K|, |dK|)` by walking the four slots of every vertex, independently
/// of the graph's boundary routine. `K` must be fully expanded.
fn recount(win: &Window, k: &[VertexId]) -> (usize, usize) {
    let set: HashSet<VertexId> = k.iter().copied().collect();
    let mut boundary = 0;
    for &u in &set {
        for slot in 0..4 {
            let w = win.peek(u, slot).expect("expanded vertex");
            let e = win.graph().edge_between(u, w).expect("slot edge");
            if !set.contains(&w) && win.graph().edge(e).marks.in_noised_omega() {
                boundary += 1;
            }
        }
    }
    (set.len(), boundary)
}

pub fn witness_at_root(win: &mut Window, n: u32) -> Result<WitnessReport> {
    let a = event_a(win.graph());
    let mut report = WitnessReport::empty(n, a);
    if !a {
        return Ok(report);
    }
    let root = win.root();
    if let Some(h) = build_h(win, root, n)? {
        report.record_h(&h, n);
        if report.root_nice {
            report.h_recount = h.h.as_deref().map(|k| recount(win, k));
        }
    }
    Ok(report)
}

/// Full pipeline: `H` at the root, then a breadth-first search of the open
/// part of the root's regular tree for the first nice copy `x`, and
/// `K_n = Q_n ∪ H(x)` with `Q_n` the search path from the root to `x`.
pub fn build_k(win: &mut Window, params: &WitnessParams) -> Result<WitnessReport> {
    params.validate()?;
    let n = params.n;
    let mut report = witness_at_root(win, n)?;
    if !report.a_n_prime_holds {
        return Ok(report);
    }
    let root = win.root();
    let mut parent: HashMap<VertexId, VertexId> = HashMap::new();
    let mut seen = HashSet::from([root]);
    let mut queue = VecDeque::from([(root, 0u32)]);
    while let Some((x, d)) = queue.pop_front() {
        report.checked += 1;
        let check = check_nice(win, x, n, params.niceness_budget)?;
        if check.nice {
            let h = check.witness.and_then(|w| w.h).expect("nice implies H");
            let mut q = vec![x];
            while let Some(&p) = parent.get(q.last().unwrap()) {
                q.push(p);
            }
            let mut k = h;
            let in_h: HashSet<_> = k.iter().copied().collect();
            k.extend(q.iter().copied().filter(|u| !in_h.contains(u)));
            let kb = noised_boundary(win, &k)?;
            report.nice_x_distance = Some(d);
            report.k_size = Some(k.len());
            report.k_boundary = Some(kb);
            report.ratio = Some(kb as f64 / k.len() as f64);
            return Ok(report);
        }
        if d == params.search_radius {
            continue;
        }
        for slot in 1..4 {
            let y = win.neighbor(x, slot)?;
            let e = win.graph().edge_between(x, y).expect("slot edge");
            let marks = win.graph().edge(e).marks;
            if marks.contains(EdgeMarkSet::IN_R_TREE) && marks.in_noised_omega() && seen.insert(y) {
                parent.insert(y, x);
                queue.push_back((y, d + 1));
            }
        }
    }
    Ok(report)
}

/// [`build_k`] that turns [`Error::BudgetExceeded`] into a flagged report.
pub fn build_k_or_flag(win: &mut Window, params: &WitnessParams) -> Result<WitnessReport> {
    match build_k(win, params) {
        Err(Error::BudgetExceeded { .. }) => Ok(WitnessReport::budget_flagged(params.n, event_a(win.graph()))),
        other => other,
    }
}

/// [`witness_at_root`], reporting an exhausted budget instead of failing.
pub fn witness_at_root_or_flag(win: &mut Window, n: u32) -> Result<WitnessReport> {
    match witness_at_root(win, n) {
        Err(Error::BudgetExceeded { .. }) => Ok(WitnessReport::budget_flagged(n, event_a(win.graph()))),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{ConstructionParams, RootLaw};
    use crate::exact;
    use crate::noise::{apply_noise, NoiseParams};
    use crate::rng::mix;

    fn conditioned(seed: u64, eps: f64, delta: f64) -> Window {
        let p = ConstructionParams {
            root_law: RootLaw::TypeZeroLeaf,
            ..ConstructionParams::with_seed(seed)
        };
        let mut w = Window::from_params(&p).unwrap();
        apply_noise(&mut w, NoiseParams::new(eps, delta, mix(seed, 99)).unwrap()).unwrap();
        w
    }

    fn within(p_hat: f64, p: f64, n: u64) -> bool {
        (p_hat - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn event_a_examples() {
        let mut found_level_two = false;
        for seed in 0..200 {
            let p = ConstructionParams {
                root_law: RootLaw::CanopyUniform,
                ..ConstructionParams::with_seed(seed)
            };
            let w = Window::from_params(&p).unwrap();
            if w.graph().meta(w.root()).level == Some(2) {
                found_level_two = true;
                assert!(!event_a(w.graph()));
            }
        }
        assert!(found_level_two);
        assert!(event_a(conditioned(1, 0.0, 0.0).graph()));
    }

    #[test]
    fn event_a_frequency_under_canopy_law() {
        let n = 1_000_000u64;
        let hits = (0..n)
            .filter(|&seed| {
                let p = ConstructionParams {
                    root_law: RootLaw::CanopyUniform,
                    ..ConstructionParams::with_seed(seed)
                };
                event_a(Window::from_params(&p).unwrap().graph())
            })
            .count() as f64;
        let p = exact::prob_type_zero_leaf_canopy_law();
        assert!((p - 0.4590).abs() < 1e-4);
        assert!(within(hits / n as f64, p, n));
    }

    #[test]
    fn good_vertex_frequency_n1() {
        let n = 100_000u64;
        let hits = (0..n)
            .filter(|&seed| {
                let mut w = conditioned(seed, 0.0, 0.0);
                let root = w.root();
                find_good_vertex(&mut w, root, 1).unwrap().is_some()
            })
            .count() as f64;
        // the n-grandparent of the root is a candidate with label 0
        let exact_p = 1.0 - 0.75f64.powi(8);
        assert!((exact::good_vertex_exact(1) - exact_p).abs() < 1e-12);
        assert!(within(hits / n as f64, exact_p, n));
    }

    #[test]
    fn good_vertex_frequency_n2_beats_exp_bound() {
        let n = 20_000u64;
        let hits = (0..n)
            .filter(|&seed| {
                let mut w = conditioned(seed, 0.0, 0.0);
                let root = w.root();
                find_good_vertex(&mut w, root, 2).unwrap().is_some()
            })
            .count();
        let p = crate::stats::Proportion::new(hits as u64, n);
        assert!(p.ci_high >= exact::good_vertex_exp_bound(2));
    }

    #[test]
    fn forced_zero_labels_give_no_good_vertex() {
        let mut w = conditioned(3, 0.0, 0.0);
        let root = w.root();
        assert!(find_good_vertex_with(&mut w, root, 2, |_| false).unwrap().is_none());
    }

    #[test]
    fn search_visits_every_candidate_once() {
        let anchor = CanopyPos::ray(0);
        let seen = std::cell::RefCell::new(HashSet::new());
        let none = good_vertex_position(anchor, 2, 0, |p| {
            assert_eq!(p.level(), 2);
            assert_eq!(p.ancestor_at(6), CanopyPos::ray(6));
            assert!(seen.borrow_mut().insert(p));
            false
        })
        .unwrap();
        assert!(none.is_none());
        assert_eq!(seen.borrow().len(), 81);
    }

    #[test]
    fn good_vertex_path_is_a_tree_path() {
        let mut full = 0;
        for seed in 0..300 {
            let mut w = conditioned(seed, 0.0, 0.0);
            let root = w.root();
            let Some(g) = find_good_vertex(&mut w, root, 2).unwrap() else { continue };
            let distinct: HashSet<_> = g.path.iter().collect();
            assert_eq!(distinct.len(), g.path.len());
            assert!(g.path.windows(2).all(|p| w.graph().edge_between(p[0], p[1]).is_some()));
            assert_eq!(g.path[0], root);
            assert_eq!(*g.path.last().unwrap(), g.v);
            assert_eq!(w.graph().meta(g.v).level, Some(2));
            assert!(g.path.len() - 1 <= 10);
            if g.path.len() - 1 == 10 {
                assert!(g.path.contains(&g.w));
                full += 1;
            }
        }
        assert!(full > 250);
    }

    #[test]
    fn t_v_extremes() {
        for seed in 0..30 {
            for n in 1..5u32 {
                let mut w = conditioned(seed, 0.0, 0.0);
                let root = w.root();
                let Some(g) = find_good_vertex(&mut w, root, n).unwrap() else { continue };
                let tv = grow_t_v(&mut w, g.v, n).unwrap();
                assert_eq!(tv.t_v.len() as f64, exact::ternary_size(n));
                assert!(!tv.reached_leaf);
                assert_eq!(tv.t_v_plus, tv.t_v);

                let mut w = conditioned(seed, 0.0, 1.0);
                let g = find_good_vertex(&mut w, root, n).unwrap().unwrap();
                let tv = grow_t_v(&mut w, g.v, n).unwrap();
                assert_eq!(tv.t_v, vec![g.v]);
            }
        }
    }

    #[test]
    fn path_retention_matches_product() {
        let (delta, n) = (0.05, 3u32);
        let mut trials = 0u64;
        let mut open = 0u64;
        for seed in 0..100_000 {
            let mut w = conditioned(seed, 0.0, delta);
            let root = w.root();
            let Some(h) = build_h(&mut w, root, n).unwrap() else { continue };
            if h.path_edges() != 5 * n as usize {
                continue;
            }
            trials += 1;
            open += h.path_open as u64;
        }
        let p = (1.0 - delta).powi(15);
        assert!((p - 0.4633).abs() < 1e-4);
        assert!(within(open as f64 / trials as f64, p, trials));
    }

    #[test]
    fn no_insertions_means_single_exit() {
        for seed in 0..2_000 {
            let mut w = conditioned(seed, 0.0, 0.05);
            let root = w.root();
            let Some(h) = build_h(&mut w, root, 2).unwrap() else { continue };
            if h.b_n {
                assert!(!h.tv.reached_leaf);
                assert!(h.h_boundary.unwrap() <= 2 * h.path_edges() + 1);
            }
        }
    }

    #[test]
    fn closed_t_v_plus_has_single_exit() {
        for seed in 0..3_000 {
            let mut w = conditioned(seed, 0.3, 0.1);
            let root = w.root();
            let Some(h) = build_h(&mut w, root, 2).unwrap() else { continue };
            if h.b_n && !h.tv.reached_leaf {
                assert!(h.h_boundary.unwrap() <= 2 * h.path_edges() + 1, "seed {seed}");
                let exits = noised_boundary(&mut w, &h.tv.t_v_plus).unwrap();
                assert_eq!(exits, 1);
            }
        }
    }

    #[test]
    fn smaller_delta_never_shrinks_t_v() {
        for seed in 0..300 {
            let keys = |delta: f64| -> Option<HashSet<u64>> {
                let mut w = conditioned(seed, 0.01, delta);
                let root = w.root();
                let g = find_good_vertex(&mut w, root, 3).unwrap()?;
                let tv = grow_t_v(&mut w, g.v, 3).unwrap();
                Some(tv.t_v.iter().map(|&u| w.key(u)).collect())
            };
            if let (Some(lo), Some(hi)) = (keys(0.05), keys(0.2)) {
                assert!(lo.is_superset(&hi));
            }
        }
    }

    #[test]
    fn k_sets_satisfy_the_deterministic_bounds() {
        let mut successes = 0;
        let mut root_nice = 0;
        for seed in 0..400 {
            let mut w = conditioned(seed, 0.01, 0.01);
            let r = build_k(&mut w, &WitnessParams::new(3)).unwrap();
            if r.k_size.is_none() {
                continue;
            }
            successes += 1;
            assert_eq!(r.k_bounds_ok(), Some(true), "seed {seed}: {r:?}");
            if r.nice_x_distance == Some(0) {
                root_nice += 1;
                assert!(r.root_nice);
                assert_eq!(r.k_size, r.h_size);
                assert_eq!(r.k_boundary, r.h_boundary);
            }
        }
        assert!(successes > 300);
        assert!(root_nice > 100);
    }

    #[test]
    fn nice_roots_pass_the_recount() {
        let mut nice = 0;
        for seed in 0..2_000 {
            let mut w = conditioned(seed, 0.01, 0.01);
            let r = witness_at_root(&mut w, 2).unwrap();
            assert_eq!(r.h_recount.is_some(), r.root_nice);
            if r.root_nice {
                nice += 1;
                assert_eq!(r.nice_checks_hold(), Some(true), "seed {seed}");
            }
        }
        assert!(nice > 1_000);
    }

    #[test]
    fn copies_are_checked_on_disjoint_vertex_sets() {
        let mut w = conditioned(17, 0.01, 0.3);
        let root = w.root();
        let mut used: HashSet<VertexId> = HashSet::new();
        let mut copies = HashSet::new();
        for x in [root, w.neighbor(root, 1).unwrap(), w.neighbor(root, 2).unwrap()] {
            let c = check_nice(&mut w, x, 2, 1_000_000).unwrap();
            let Some(h) = c.witness else { continue };
            let region: Vec<_> = h.good.path.iter().chain(&h.tv.t_v_plus).copied().collect();
            for &u in &region {
                assert_eq!(w.site(u).copy, w.site(x).copy);
            }
            assert!(copies.insert(w.site(x).copy));
            assert!(region.iter().all(|u| used.insert(*u) || h.good.path.contains(u) && h.tv.t_v_plus.contains(u)));
        }
    }
}
