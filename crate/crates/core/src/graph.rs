//! Arena representation of finite windows of infinite trees.
//!
//! Vertices and edges live in append-only vectors addressed by dense
//! integer handles. Degrees never exceed 4 (the ambient tree is
//! 4-regular), so adjacency is a fixed inline array per vertex.

use std::collections::{BTreeSet, VecDeque};

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

bitflags! {
    /// Per-edge membership flags. Exactly one of the three structural flags
    /// is set on every edge of a constructed window; the two noise flags
    /// are an independent overlay.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct EdgeMarkSet: u8 {
        const IN_CANOPY = 1;
        const IN_TERNARY = 1 << 1;
        const IN_R_TREE = 1 << 2;
        const NOISE_ADDED = 1 << 3;
        const NOISE_DELETED = 1 << 4;
    }
}

impl EdgeMarkSet {
    pub const STRUCTURAL: Self = Self::IN_CANOPY.union(Self::IN_TERNARY).union(Self::IN_R_TREE);
    pub const NOISE: Self = Self::NOISE_ADDED.union(Self::NOISE_DELETED);

    /// Edge of the percolation: canopy copies and regular-tree copies.
    #[inline]
    pub fn in_omega(self) -> bool {
        self.intersects(Self::IN_CANOPY | Self::IN_R_TREE)
    }

    /// Edge of the forest of decorated-canopy copies.
    #[inline]
    pub fn in_forest(self) -> bool {
        self.intersects(Self::IN_CANOPY | Self::IN_TERNARY)
    }

    /// Edge of the noised percolation `(omega ∪ added) \ deleted`.
    #[inline]
    pub fn in_noised_omega(self) -> bool {
        (self.in_omega() || self.contains(Self::NOISE_ADDED)) && !self.contains(Self::NOISE_DELETED)
    }

    /// Edge of the plain Bernoulli configuration `added \ deleted`,
    /// ignoring structure.
    #[inline]
    pub fn in_bernoulli(self) -> bool {
        self.contains(Self::NOISE_ADDED) && !self.contains(Self::NOISE_DELETED)
    }

    #[inline]
    pub fn structural(self) -> Self {
        self & Self::STRUCTURAL
    }

    pub fn names(self) -> Vec<&'static str> {
        [
            (Self::IN_CANOPY, "in_canopy"),
            (Self::IN_TERNARY, "in_ternary"),
            (Self::IN_R_TREE, "in_r_tree"),
            (Self::NOISE_ADDED, "noise_added"),
            (Self::NOISE_DELETED, "noise_deleted"),
        ]
        .into_iter()
        .filter(|(flag, _)| self.contains(*flag))
        .map(|(_, name)| name)
        .collect()
    }
}

/// Common edge predicates.
pub mod filter {
    use super::EdgeMarkSet;

    pub fn all(_: EdgeMarkSet) -> bool {
        true
    }

    pub fn omega(m: EdgeMarkSet) -> bool {
        m.in_omega()
    }

    pub fn forest(m: EdgeMarkSet) -> bool {
        m.in_forest()
    }

    pub fn noised_omega(m: EdgeMarkSet) -> bool {
        m.in_noised_omega()
    }

    pub fn bernoulli(m: EdgeMarkSet) -> bool {
        m.in_bernoulli()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VertexMeta {
    /// Canopy level, when the vertex lies in a canopy copy.
    pub level: Option<u32>,
    /// `m(x)` for level-0 canopy vertices.
    pub leaf_type: Option<u32>,
    pub frontier: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub marks: EdgeMarkSet,
}

impl Edge {
    #[inline]
    pub fn other(&self, x: VertexId) -> VertexId {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Adjacency {
    len: u8,
    edges: [u32; MAX_DEGREE],
}

impl Adjacency {
    fn as_slice(&self) -> &[u32] {
        &self.edges[..self.len as usize]
    }
}

#[derive(Debug, Clone)]
pub struct MarkedGraph {
    vertices: Vec<VertexMeta>,
    edges: Vec<Edge>,
    adjacency: Vec<Adjacency>,
    root: VertexId,
}

impl MarkedGraph {
    /// A graph with a single root vertex.
    pub fn new(root_meta: VertexMeta) -> Self {
        Self {
            vertices: vec![root_meta],
            edges: Vec::new(),
            adjacency: vec![Adjacency::default()],
            root: VertexId(0),
        }
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.vertices.len()
    }

    pub fn meta(&self, v: VertexId) -> &VertexMeta {
        &self.vertices[v.index()]
    }

    pub fn meta_mut(&mut self, v: VertexId) -> &mut VertexMeta {
        &mut self.vertices[v.index()]
    }

    pub fn is_frontier(&self, v: VertexId) -> bool {
        self.vertices[v.index()].frontier
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.index()]
    }

    pub fn marks_mut(&mut self, e: EdgeId) -> &mut EdgeMarkSet {
        &mut self.edges[e.index()].marks
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i as u32), e))
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v.index()].len as usize
    }

    /// Incident edges of `v` with the opposite endpoint.
    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, EdgeId, EdgeMarkSet)> + '_ {
        self.adjacency[v.index()].as_slice().iter().map(move |&e| {
            let edge = &self.edges[e as usize];
            (edge.other(v), EdgeId(e), edge.marks)
        })
    }

    pub fn add_vertex(&mut self, meta: VertexMeta) -> VertexId {
        let id = VertexId(self.vertices.len() as u32);
        self.vertices.push(meta);
        self.adjacency.push(Adjacency::default());
        id
    }

    /// Adds an edge, rejecting loops, multi-edges and degree overflow.
    pub fn add_edge(&mut self, u: VertexId, v: VertexId, marks: EdgeMarkSet) -> Result<EdgeId> {
        if u == v {
            return Err(Error::InvalidParameter(format!("loop at {u:?}")));
        }
        if self.neighbors(u).any(|(w, _, _)| w == v) {
            return Err(Error::InvalidParameter(format!("multi-edge {u:?}-{v:?}")));
        }
        if self.degree(u) >= MAX_DEGREE || self.degree(v) >= MAX_DEGREE {
            return Err(Error::InvalidParameter(format!("degree overflow at {u:?}-{v:?}")));
        }
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(Edge { u, v, marks });
        for x in [u, v] {
            let adj = &mut self.adjacency[x.index()];
            adj.edges[adj.len as usize] = id.0;
            adj.len += 1;
        }
        Ok(id)
    }

    /// The edge joining `u` and `v`, if present.
    pub fn edge_between(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        self.neighbors(u).find(|(w, _, _)| *w == v).map(|(_, e, _)| e)
    }

    /// Vertices in BFS order with their distances from `center`.
    pub fn bfs_with_distance<F>(&self, center: VertexId, radius: u32, edge_filter: F) -> Vec<(VertexId, u32)>
    where
        F: Fn(EdgeMarkSet) -> bool,
    {
        let mut seen = vec![false; self.vertices.len()];
        let mut order = vec![(center, 0)];
        seen[center.index()] = true;
        let mut queue = VecDeque::from([(center, 0u32)]);
        while let Some((v, d)) = queue.pop_front() {
            if d == radius {
                continue;
            }
            for (w, _, marks) in self.neighbors(v) {
                if !seen[w.index()] && edge_filter(marks) {
                    seen[w.index()] = true;
                    order.push((w, d + 1));
                    queue.push_back((w, d + 1));
                }
            }
        }
        order
    }

    /// The vertices reachable from `center` in at most `radius` steps along
    /// edges accepted by `edge_filter`.
    pub fn bfs_ball<F>(&self, center: VertexId, radius: u32, edge_filter: F) -> BTreeSet<VertexId>
    where
        F: Fn(EdgeMarkSet) -> bool,
    {
        self.bfs_with_distance(center, radius, edge_filter)
            .into_iter()
            .map(|(v, _)| v)
            .collect()
    }

    /// Filter-passing edges with exactly one endpoint in `k`.
    ///
    /// Fails with [`Error::FrontierUnderflow`] if any vertex of `k` still has
    /// unmaterialized neighbors.
    pub fn edge_boundary<F>(&self, k: &[VertexId], edge_filter: F) -> Result<Vec<EdgeId>>
    where
        F: Fn(EdgeMarkSet) -> bool,
    {
        let mut member = vec![false; self.vertices.len()];
        for &v in k {
            if self.is_frontier(v) {
                return Err(Error::FrontierUnderflow(v));
            }
            member[v.index()] = true;
        }
        let mut out = Vec::new();
        for &v in k {
            if !member[v.index()] {
                continue; // duplicate already handled
            }
            for (w, e, marks) in self.neighbors(v) {
                if !member[w.index()] && edge_filter(marks) {
                    out.push(e);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// JSON-serializable dump of the window.
    pub fn dump(&self, params: serde_json::Value, seed: u64) -> GraphDump {
        GraphDump {
            vertices: self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, m)| VertexRecord {
                    id: i as u32,
                    level: m.level,
                    leaf_type: m.leaf_type,
                    frontier: m.frontier,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    u: e.u.0,
                    v: e.v.0,
                    marks: e.marks.names().into_iter().map(String::from).collect(),
                })
                .collect(),
            root: self.root.0,
            params,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: u32,
    pub level: Option<u32>,
    pub leaf_type: Option<u32>,
    pub frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub u: u32,
    pub v: u32,
    pub marks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
    pub root: u32,
    pub params: serde_json::Value,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior() -> VertexMeta {
        VertexMeta::default()
    }

    fn star() -> MarkedGraph {
        let mut g = MarkedGraph::new(interior());
        for _ in 0..4 {
            let leaf = g.add_vertex(VertexMeta {
                frontier: true,
                ..interior()
            });
            g.add_edge(g.root(), leaf, EdgeMarkSet::IN_R_TREE).unwrap();
        }
        g
    }

    fn path() -> (MarkedGraph, [VertexId; 3]) {
        let mut g = MarkedGraph::new(interior());
        let o = g.root();
        let a = g.add_vertex(interior());
        let b = g.add_vertex(interior());
        g.add_edge(o, a, EdgeMarkSet::IN_CANOPY).unwrap();
        g.add_edge(a, b, EdgeMarkSet::IN_TERNARY).unwrap();
        (g, [o, a, b])
    }

    #[test]
    fn zero_radius_ball_is_center() {
        let g = star();
        assert_eq!(g.bfs_ball(g.root(), 0, filter::all), BTreeSet::from([g.root()]));
    }

    #[test]
    fn unit_ball_of_star_has_five_vertices() {
        let g = star();
        assert_eq!(g.bfs_ball(g.root(), 1, filter::all).len(), 5);
    }

    #[test]
    fn filter_blocks_traversal() {
        let (g, [o, a, _]) = path();
        let ball = g.bfs_ball(o, 2, |m| !m.contains(EdgeMarkSet::IN_TERNARY));
        assert_eq!(ball, BTreeSet::from([o, a]));
    }

    #[test]
    fn singleton_boundary_is_degree() {
        let g = star();
        assert_eq!(g.edge_boundary(&[g.root()], filter::all).unwrap().len(), 4);
    }

    #[test]
    fn closed_component_has_empty_boundary() {
        let (g, [o, a, b]) = path();
        assert!(g.edge_boundary(&[o, a, b], filter::all).unwrap().is_empty());
        assert_eq!(g.edge_boundary(&[a], filter::forest).unwrap().len(), 2);
        assert_eq!(g.edge_boundary(&[o], filter::omega).unwrap().len(), 1);
    }

    #[test]
    fn frontier_vertices_are_rejected() {
        let g = star();
        let leaf = VertexId(1);
        assert_eq!(
            g.edge_boundary(&[leaf], filter::all),
            Err(Error::FrontierUnderflow(leaf))
        );
    }

    #[test]
    fn simple_graph_invariants_enforced() {
        let (mut g, [o, a, _]) = path();
        assert!(g.add_edge(o, o, EdgeMarkSet::empty()).is_err());
        assert!(g.add_edge(a, o, EdgeMarkSet::empty()).is_err());
        let mut s = star();
        let extra = s.add_vertex(interior());
        assert!(s.add_edge(s.root(), extra, EdgeMarkSet::empty()).is_err());
    }

    #[test]
    fn mark_predicates() {
        let m = EdgeMarkSet::IN_TERNARY | EdgeMarkSet::NOISE_ADDED;
        assert!(!m.in_omega() && m.in_forest() && m.in_noised_omega());
        let d = EdgeMarkSet::IN_CANOPY | EdgeMarkSet::NOISE_ADDED | EdgeMarkSet::NOISE_DELETED;
        assert!(!d.in_noised_omega());
        assert_eq!(d.names(), vec!["in_canopy", "noise_added", "noise_deleted"]);
    }

    #[test]
    fn dump_uses_documented_field_names() {
        let (g, _) = path();
        let json = serde_json::to_value(g.dump(serde_json::json!({"k": 1}), 9)).unwrap();
        for key in ["vertices", "edges", "root", "params", "seed"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let v = &json["vertices"][0];
        for key in ["id", "level", "leaf_type", "frontier"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let e = &json["edges"][0];
        for key in ["u", "v", "marks"] {
            assert!(e.get(key).is_some(), "{key}");
        }
    }
}
