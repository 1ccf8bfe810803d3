//! Lazily materialized window of the 4-regular tree around the root.
//!
//! Every vertex has four slots. Slot 0 points up its copy of the decorated
//! canopy tree (canopy parent, or ternary parent). Slots 1..=3 point down
//! (canopy children, ternary children) except at leaves of the decorated
//! tree, where they are the three edges of the attached 3-regular tree. The
//! far end of such an edge sits at the same position in a fresh copy.
//!
//! A vertex key is `mix(creator key, slot)`. Since the window is a tree
//! grown from the root, keys are functions of the path from the root and
//! the sample does not depend on the expansion order.

use std::collections::VecDeque;

use super::position::{CanopyPos, Position};
use super::sample::{ConstructionParams, Sample};
use crate::error::{Error, Result};
use crate::graph::{EdgeMarkSet, GraphDump, MarkedGraph, VertexId, VertexMeta};
use crate::noise::NoiseParams;
use crate::rng::{mix, tag, Keyed};

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Up,
    Down,
    RTree,
}

#[derive(Debug, Clone)]
pub struct Site {
    pub pos: Position,
    /// Index of the copy of the decorated tree containing the vertex, in
    /// creation order.
    pub copy: u32,
    pub key: u64,
    /// `m(x)` of a level-0 canopy vertex, or the height of a ternary tree
    /// for its inner vertices. Unused elsewhere.
    pub m: u32,
    slots: [u32; 4],
}

impl Site {
    pub fn is_leaf(&self) -> bool {
        match self.pos {
            Position::Canopy(c) => c.level() == 0 && self.m == 0,
            Position::Ternary { depth, height, .. } => depth == height,
        }
    }
}

/// Creation-order independent description of a window: sorted vertex keys
/// with frontier flags and sorted edges as key pairs with their marks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSignature {
    pub vertices: Vec<(u64, bool)>,
    pub edges: Vec<(u64, u64, u8)>,
}

#[derive(Debug, Clone)]
pub struct Window {
    sample: Sample,
    graph: MarkedGraph,
    sites: Vec<Site>,
    noise: Option<NoiseParams>,
    budget: usize,
    next_copy: u32,
}

impl Window {
    /// A window holding only the root of `sample`.
    pub fn new(sample: Sample) -> Self {
        let pos = sample.root();
        let m = match pos {
            Position::Canopy(c) if c.level() == 0 => sample.m(c),
            Position::Canopy(_) => 0,
            Position::Ternary { height, .. } => height,
        };
        let budget = sample.params().vertex_budget;
        let graph = MarkedGraph::new(meta_for(pos, m));
        let key = Keyed::new(sample.params().seed).bits(0, tag::VERTEX);
        Self {
            sample,
            graph,
            sites: vec![Site {
                pos,
                copy: 0,
                key,
                m,
                slots: [EMPTY; 4],
            }],
            noise: None,
            budget,
            next_copy: 1,
        }
    }

    pub fn from_params(params: &ConstructionParams) -> Result<Self> {
        Ok(Self::new(Sample::new(params)?))
    }

    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    pub fn graph(&self) -> &MarkedGraph {
        &self.graph
    }

    pub fn into_graph(self) -> MarkedGraph {
        self.graph
    }

    pub fn root(&self) -> VertexId {
        self.graph.root()
    }

    pub fn site(&self, v: VertexId) -> &Site {
        &self.sites[v.index()]
    }

    pub fn position(&self, v: VertexId) -> Position {
        self.sites[v.index()].pos
    }

    pub fn key(&self, v: VertexId) -> u64 {
        self.sites[v.index()].key
    }

    pub fn noise(&self) -> Option<&NoiseParams> {
        self.noise.as_ref()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn set_budget(&mut self, budget: usize) {
        self.budget = budget;
    }

    /// Whether `v` is a leaf of its copy of the decorated canopy tree.
    pub fn is_leaf(&self, v: VertexId) -> bool {
        self.sites[v.index()].is_leaf()
    }

    pub fn slot_kind(&self, v: VertexId, slot: usize) -> SlotKind {
        if slot == 0 {
            SlotKind::Up
        } else if self.is_leaf(v) {
            SlotKind::RTree
        } else {
            SlotKind::Down
        }
    }

    pub fn peek(&self, v: VertexId, slot: usize) -> Option<VertexId> {
        let s = self.sites[v.index()].slots[slot];
        (s != EMPTY).then_some(VertexId(s))
    }

    /// Slot of `v` that holds `w`.
    pub fn slot_of(&self, v: VertexId, w: VertexId) -> Option<usize> {
        self.sites[v.index()].slots.iter().position(|&s| s == w.0)
    }

    /// Neighbor of `v` through `slot`, materializing it if needed.
    pub fn neighbor(&mut self, v: VertexId, slot: usize) -> Result<VertexId> {
        match self.peek(v, slot) {
            Some(w) => Ok(w),
            None => self.create(v, slot),
        }
    }

    /// Materializes all neighbors of `v`. Idempotent.
    pub fn lazy_expand(&mut self, v: VertexId) -> Result<()> {
        for slot in 0..4 {
            self.neighbor(v, slot)?;
        }
        Ok(())
    }

    /// Expands every vertex within `radius` of `center` along edges passing
    /// `filter`, so that their boundaries can be measured.
    pub fn expand_ball<F>(&mut self, center: VertexId, radius: u32, filter: F) -> Result<Vec<VertexId>>
    where
        F: Fn(EdgeMarkSet) -> bool,
    {
        let mut dist = vec![(center, 0u32)];
        let mut seen = std::collections::HashSet::from([center]);
        let mut queue = VecDeque::from([(center, 0u32)]);
        while let Some((u, d)) = queue.pop_front() {
            self.lazy_expand(u)?;
            if d == radius {
                continue;
            }
            for slot in 0..4 {
                let w = self.peek(u, slot).expect("expanded");
                let e = self.graph.edge_between(u, w).expect("slot edge");
                if filter(self.graph.edge(e).marks) && seen.insert(w) {
                    dist.push((w, d + 1));
                    queue.push_back((w, d + 1));
                }
            }
        }
        Ok(dist.into_iter().map(|(v, _)| v).collect())
    }

    /// Materializes the copy of the decorated canopy tree below the ray
    /// vertex at level `max(level_cap, floor)`, climbing to it from the root.
    /// Leaves of the decorated tree remain frontier vertices.
    pub fn expand_canopy_block(&mut self) -> Result<VertexId> {
        let top_level = self.sample.params().level_cap.max(self.sample.floor());
        let mut u = self.root();
        loop {
            match self.position(u) {
                Position::Canopy(c) if c.level() >= top_level => break,
                _ => u = self.neighbor(u, 0)?,
            }
        }
        let mut stack = vec![u];
        while let Some(x) = stack.pop() {
            if self.is_leaf(x) {
                continue;
            }
            for slot in 1..4 {
                stack.push(self.neighbor(x, slot)?);
            }
        }
        Ok(u)
    }

    pub(crate) fn set_noise(&mut self, noise: Option<NoiseParams>) {
        self.noise = noise;
        let ids: Vec<_> = self.graph.edges().map(|(id, e)| (id, e.u.max(e.v))).collect();
        for (id, newer) in ids {
            let key = self.sites[newer.index()].key;
            let marks = self.graph.marks_mut(id);
            marks.remove(EdgeMarkSet::NOISE);
            if let Some(p) = &noise {
                marks.insert(p.flags(key));
            }
        }
    }

    /// Vertices whose degree disagrees with their frontier flag.
    pub fn degree_audit(&self) -> Vec<VertexId> {
        self.graph
            .vertex_ids()
            .filter(|&v| {
                let d = self.graph.degree(v);
                let frontier = self.graph.is_frontier(v);
                (frontier && d >= 4) || (!frontier && d != 4)
            })
            .collect()
    }

    pub fn signature(&self) -> WindowSignature {
        let mut vertices: Vec<_> = self
            .graph
            .vertex_ids()
            .map(|v| (self.key(v), self.graph.is_frontier(v)))
            .collect();
        vertices.sort_unstable();
        let mut edges: Vec<_> = self
            .graph
            .edges()
            .map(|(_, e)| {
                let (a, b) = (self.key(e.u), self.key(e.v));
                (a.min(b), a.max(b), e.marks.bits())
            })
            .collect();
        edges.sort_unstable();
        WindowSignature { vertices, edges }
    }

    pub fn dump(&self) -> GraphDump {
        let params = serde_json::to_value(self.sample.params()).expect("params serialize");
        self.graph.dump(params, self.sample.params().seed)
    }

    fn create(&mut self, v: VertexId, slot: usize) -> Result<VertexId> {
        if self.graph.vertex_count() >= self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        let site = &self.sites[v.index()];
        let floor = self.sample.floor();
        let mut copy = site.copy;
        let (pos, arrival, mark) = match (site.pos, slot) {
            (Position::Canopy(c), 0) => (
                Position::Canopy(c.parent()),
                1 + c.digit_under_parent() as usize,
                EdgeMarkSet::IN_CANOPY,
            ),
            (Position::Ternary { base, depth, height }, 0) => {
                let up = if depth == 1 {
                    Position::Canopy(base)
                } else {
                    Position::Ternary {
                        base,
                        depth: depth - 1,
                        height,
                    }
                };
                (up, 1, EdgeMarkSet::IN_TERNARY)
            }
            _ if site.is_leaf() => {
                copy = self.next_copy;
                self.next_copy += 1;
                (site.pos, 1, EdgeMarkSet::IN_R_TREE)
            }
            (Position::Canopy(c), s) if c.level() >= 1 => (
                Position::Canopy(c.child(s as u8 - 1, floor)?),
                0,
                EdgeMarkSet::IN_CANOPY,
            ),
            (Position::Canopy(c), _) => (
                Position::Ternary {
                    base: c,
                    depth: 1,
                    height: site.m,
                },
                0,
                EdgeMarkSet::IN_TERNARY,
            ),
            (Position::Ternary { base, depth, height }, _) => (
                Position::Ternary {
                    base,
                    depth: depth + 1,
                    height,
                },
                0,
                EdgeMarkSet::IN_TERNARY,
            ),
        };
        let key = mix(site.key, slot as u64);
        let m = match pos {
            Position::Canopy(c) if c.level() == 0 => self.sample.m(c),
            Position::Canopy(_) => 0,
            Position::Ternary { height, .. } => height,
        };
        debug_assert!(match (pos, self.sites[v.index()].pos) {
            (Position::Canopy(c), Position::Ternary { height, .. }) => self.sample.m(c) == height,
            _ => true,
        });
        let w = self.graph.add_vertex(meta_for(pos, m));
        let mut slots = [EMPTY; 4];
        slots[arrival] = v.0;
        self.sites.push(Site {
            pos,
            copy,
            key,
            m,
            slots,
        });
        self.sites[v.index()].slots[slot] = w.0;
        let marks = match &self.noise {
            Some(p) => mark | p.flags(key),
            None => mark,
        };
        self.graph.add_edge(v, w, marks)?;
        if self.sites[v.index()].slots.iter().all(|&s| s != EMPTY) {
            self.graph.meta_mut(v).frontier = false;
        }
        Ok(w)
    }
}

fn meta_for(pos: Position, m: u32) -> VertexMeta {
    match pos {
        Position::Canopy(c) => {
            let level = c.level();
            VertexMeta {
                level: Some(level),
                leaf_type: (level == 0).then_some(m),
                frontier: true,
            }
        }
        Position::Ternary { .. } => VertexMeta {
            level: None,
            leaf_type: None,
            frontier: true,
        },
    }
}

/// Canopy position of `v`, if it is a canopy vertex.
pub fn canopy_of(window: &Window, v: VertexId) -> Option<CanopyPos> {
    match window.position(v) {
        Position::Canopy(c) => Some(c),
        Position::Ternary { .. } => None,
    }
}
