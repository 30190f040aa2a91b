//! Directed metric trees: construction, validation and queries.
//!
//! A tree is a connected directed graph without undirected cycles or multiple
//! edges; every edge `e_j` carries a length `l_j > 0` and is identified with
//! the interval `[0, l_j]`, parameterized in the edge direction (tail at
//! `x = 0`, head at `x = l_j`). Vertices are classified by their in/out
//! degrees, which for honeycomb lattices yields exactly the first-kind
//! (1 in, 2 out) and second-kind (2 in, 1 out) interior vertices.
//!
//! The edge numbering convention ("increasing order") requires indices to
//! strictly increase along every directed path, with all source-incident
//! edges first. It matters only for the maximal transmission solver's
//! tie-breaking, so ordinary construction records a violation instead of
//! rejecting it; [`DirectedMetricTree::build_strict`] rejects.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GraphError {
    #[error("not a tree: {0}")]
    NotATree(String),
    #[error("multiple edge between vertices {tail} -> {head}")]
    MultipleEdge { tail: usize, head: usize },
    #[error("edge {edge} has non-positive length {length}")]
    NonPositiveLength { edge: usize, length: f64 },
    #[error("edge numbering violates the increasing order convention: {0}")]
    NotIncreasingOrder(String),
    #[error("graph is not connected")]
    NotConnected,
    #[error("selection contains a cycle (un-pruned hexagon loop)")]
    ContainsCycle,
    #[error("vertex index {vertex} out of bounds (vertex count {count})")]
    VertexOutOfBounds { vertex: usize, count: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
}

/// One directed metric edge, `tail -> head`, carrying `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEdge {
    pub tail: usize,
    pub head: usize,
    pub length: f64,
}

/// Partition of the edges incident to one vertex into incoming
/// (head here) and outgoing (tail here) edge indices, each sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexDirection {
    pub in_edges: Vec<usize>,
    pub out_edges: Vec<usize>,
}

impl VertexDirection {
    pub fn deg_in(&self) -> usize {
        self.in_edges.len()
    }
    pub fn deg_out(&self) -> usize {
        self.out_edges.len()
    }
    pub fn deg(&self) -> usize {
        self.deg_in() + self.deg_out()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Source,
    Sink,
    PathVertex,
    FirstKind,
    SecondKind,
    General,
}

/// Vertex classification with the degrees it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexClass {
    pub kind: VertexKind,
    pub deg_in: usize,
    pub deg_out: usize,
}

impl VertexClass {
    fn from_degrees(deg_in: usize, deg_out: usize) -> Self {
        let kind = match (deg_in, deg_out) {
            (0, _) => VertexKind::Source,
            (_, 0) => VertexKind::Sink,
            (1, 1) => VertexKind::PathVertex,
            (1, 2) => VertexKind::FirstKind,
            (2, 1) => VertexKind::SecondKind,
            _ => VertexKind::General,
        };
        VertexClass {
            kind,
            deg_in,
            deg_out,
        }
    }
}

/// A directed metric tree (or, via [`DirectedMetricTree::build_network`],
/// a more general connected metric network such as the split-interval
/// "diamond" used by the interference scenarios).
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct DirectedMetricTree {
    vertex_count: usize,
    edges: Vec<MetricEdge>,
    directions: Vec<VertexDirection>,
    labels: Vec<Option<[i64; 3]>>,
    is_tree: bool,
    increasing_order: bool,
}

/// Record of an edge relabeling: `new_to_old[new] = old`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePermutation {
    pub new_to_old: Vec<usize>,
}

impl EdgePermutation {
    pub fn is_identity(&self) -> bool {
        self.new_to_old.iter().enumerate().all(|(n, &o)| n == o)
    }

    /// Reorder per-edge data from the old indexing into the new one.
    pub fn apply<T: Clone>(&self, old: &[T]) -> Vec<T> {
        self.new_to_old.iter().map(|&o| old[o].clone()).collect()
    }
}

impl DirectedMetricTree {
    /// Build and validate a directed metric tree.
    ///
    /// Edge indices are taken in the order given. An edge numbering that
    /// violates the increasing-order convention is recorded (see
    /// [`DirectedMetricTree::has_increasing_order`]) but not rejected;
    /// use [`DirectedMetricTree::build_strict`] or
    /// [`DirectedMetricTree::reindex_increasing`] when the order matters.
    pub fn build(vertex_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let tree = Self::construct(vertex_count, edges, true)?;
        Ok(tree)
    }

    /// As [`DirectedMetricTree::build`], but rejects edge numberings that
    /// violate the increasing-order convention.
    pub fn build_strict(
        vertex_count: usize,
        edges: &[(usize, usize, f64)],
    ) -> Result<Self, GraphError> {
        let tree = Self::construct(vertex_count, edges, true)?;
        if !tree.increasing_order {
            return Err(GraphError::NotIncreasingOrder(
                "indices must increase along directed paths, source edges first".into(),
            ));
        }
        Ok(tree)
    }

    /// Build a connected directed metric network without the tree
    /// restrictions (parallel edges and undirected cycles allowed).
    ///
    /// Needed for the split-interval graphs of the interference scenarios,
    /// which re-join two branches; such networks are accepted by the
    /// finite-volume solver but not by the recursive explicit solver.
    pub fn build_network(
        vertex_count: usize,
        edges: &[(usize, usize, f64)],
    ) -> Result<Self, GraphError> {
        Self::construct(vertex_count, edges, false)
    }

    fn construct(
        vertex_count: usize,
        edges: &[(usize, usize, f64)],
        require_tree: bool,
    ) -> Result<Self, GraphError> {
        if vertex_count < 2 {
            return Err(GraphError::Invalid("need at least two vertices".into()));
        }
        if edges.is_empty() {
            return Err(GraphError::Invalid("edge list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for (j, &(tail, head, length)) in edges.iter().enumerate() {
            if tail >= vertex_count || head >= vertex_count {
                return Err(GraphError::VertexOutOfBounds {
                    vertex: tail.max(head),
                    count: vertex_count,
                });
            }
            if tail == head {
                return Err(GraphError::NotATree(format!("self loop at vertex {tail}")));
            }
            if !(length > 0.0) || !length.is_finite() {
                return Err(GraphError::NonPositiveLength { edge: j, length });
            }
            if require_tree && !seen.insert((tail, head)) {
                return Err(GraphError::MultipleEdge { tail, head });
            }
        }

        // Connectivity of the underlying undirected graph.
        let mut adj = vec![Vec::new(); vertex_count];
        for &(tail, head, _) in edges {
            adj[tail].push(head);
            adj[head].push(tail);
        }
        let mut visited = vec![false; vertex_count];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if reached != vertex_count {
            return Err(if require_tree {
                GraphError::NotATree("underlying graph is disconnected".into())
            } else {
                GraphError::NotConnected
            });
        }
        let is_tree = edges.len() == vertex_count - 1;
        if require_tree && !is_tree {
            return Err(GraphError::NotATree(format!(
                "connected graph with {} vertices needs {} edges, got {} (cycle)",
                vertex_count,
                vertex_count - 1,
                edges.len()
            )));
        }

        let mut directions = vec![VertexDirection::default(); vertex_count];
        for (j, &(tail, head, _)) in edges.iter().enumerate() {
            directions[tail].out_edges.push(j);
            directions[head].in_edges.push(j);
        }

        let tree = DirectedMetricTree {
            vertex_count,
            edges: edges
                .iter()
                .map(|&(tail, head, length)| MetricEdge { tail, head, length })
                .collect(),
            directions,
            labels: vec![None; vertex_count],
            is_tree,
            increasing_order: false,
        };
        let increasing = tree.check_increasing_order();
        Ok(DirectedMetricTree {
            increasing_order: increasing,
            ..tree
        })
    }

    fn check_increasing_order(&self) -> bool {
        // Source-incident edges must carry the lowest indices ...
        let source_edges: BTreeSet<usize> = self
            .directions
            .iter()
            .filter(|d| d.deg_in() == 0)
            .flat_map(|d| d.out_edges.iter().copied())
            .collect();
        for (rank, &j) in source_edges.iter().enumerate() {
            if j != rank {
                return false;
            }
        }
        // ... and indices must strictly increase across every vertex.
        for dir in &self.directions {
            for &e_in in &dir.in_edges {
                for &e_out in &dir.out_edges {
                    if e_in >= e_out {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[MetricEdge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> &MetricEdge {
        &self.edges[j]
    }

    pub fn length(&self, j: usize) -> f64 {
        self.edges[j].length
    }

    pub fn direction(&self, vertex: usize) -> &VertexDirection {
        &self.directions[vertex]
    }

    pub fn directions(&self) -> &[VertexDirection] {
        &self.directions
    }

    pub fn is_tree(&self) -> bool {
        self.is_tree
    }

    pub fn has_increasing_order(&self) -> bool {
        self.increasing_order
    }

    pub fn vertex_label(&self, vertex: usize) -> Option<[i64; 3]> {
        self.labels[vertex]
    }

    /// 0/1 incidence matrices `(phi_plus, phi_minus)`, each `n x m`;
    /// `phi_plus[i][j] = 1` iff the head of `e_j` is `v_i`.
    pub fn incidence(&self) -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
        let n = self.vertex_count;
        let m = self.edges.len();
        let mut plus = vec![vec![0u8; m]; n];
        let mut minus = vec![vec![0u8; m]; n];
        for (j, e) in self.edges.iter().enumerate() {
            plus[e.head][j] = 1;
            minus[e.tail][j] = 1;
        }
        (plus, minus)
    }

    pub fn classify_vertex(&self, vertex: usize) -> Result<VertexClass, GraphError> {
        if vertex >= self.vertex_count {
            return Err(GraphError::VertexOutOfBounds {
                vertex,
                count: self.vertex_count,
            });
        }
        let d = &self.directions[vertex];
        Ok(VertexClass::from_degrees(d.deg_in(), d.deg_out()))
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.vertex_count)
            .filter(|&v| self.directions[v].deg_in() == 0)
            .collect()
    }

    pub fn sinks(&self) -> Vec<usize> {
        (0..self.vertex_count)
            .filter(|&v| self.directions[v].deg_out() == 0)
            .collect()
    }

    /// Vertices in an order compatible with edge directions (Kahn).
    /// Errors with `ContainsCycle` if a directed cycle exists.
    pub fn topological_vertices(&self) -> Result<Vec<usize>, GraphError> {
        let mut indeg: Vec<usize> = self.directions.iter().map(|d| d.deg_in()).collect();
        let mut queue: VecDeque<usize> = (0..self.vertex_count).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.vertex_count);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &e in &self.directions[v].out_edges {
                let w = self.edges[e].head;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if order.len() != self.vertex_count {
            return Err(GraphError::ContainsCycle);
        }
        Ok(order)
    }

    /// Relabel edges into increasing order: all source-incident edges first,
    /// then indices increasing along every directed path. Idempotent.
    pub fn reindex_increasing(&self) -> Result<(Self, EdgePermutation), GraphError> {
        let topo = self.topological_vertices()?;
        let mut new_to_old = Vec::with_capacity(self.edges.len());
        // All source out-edges first, then the rest in topological order of
        // their tail vertices; ties broken by the old index for determinism.
        for &v in &topo {
            if self.directions[v].deg_in() == 0 {
                let mut outs = self.directions[v].out_edges.clone();
                outs.sort_unstable();
                new_to_old.extend(outs);
            }
        }
        for &v in &topo {
            if self.directions[v].deg_in() > 0 {
                let mut outs = self.directions[v].out_edges.clone();
                outs.sort_unstable();
                new_to_old.extend(outs);
            }
        }
        let edge_list: Vec<(usize, usize, f64)> = new_to_old
            .iter()
            .map(|&old| {
                let e = &self.edges[old];
                (e.tail, e.head, e.length)
            })
            .collect();
        let mut tree = Self::construct(self.vertex_count, &edge_list, self.is_tree)?;
        tree.labels = self.labels.clone();
        Ok((tree, EdgePermutation { new_to_old }))
    }

    fn with_labels(mut self, labels: Vec<Option<[i64; 3]>>) -> Self {
        self.labels = labels;
        self
    }
}

/// A chain of `m` edges `v_0 -> v_1 -> ... -> v_m`; default unit lengths.
pub fn path_graph(m: usize, lengths: Option<&[f64]>) -> Result<DirectedMetricTree, GraphError> {
    if m == 0 {
        return Err(GraphError::Invalid("path graph needs at least one edge".into()));
    }
    if let Some(ls) = lengths {
        if ls.len() != m {
            return Err(GraphError::Invalid(format!(
                "expected {m} lengths, got {}",
                ls.len()
            )));
        }
    }
    let edges: Vec<(usize, usize, f64)> = (0..m)
        .map(|j| (j, j + 1, lengths.map_or(1.0, |ls| ls[j])))
        .collect();
    DirectedMetricTree::build_strict(m + 1, &edges)
}

/// Identifier of one lattice vertex by its coordinate triple. First-kind
/// vertices are `(p+q, -q, p)`, second-kind `(p+q+1, -q, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HexVertex {
    First { p: i64, q: i64 },
    Second { p: i64, q: i64 },
}

impl HexVertex {
    pub fn triple(self) -> [i64; 3] {
        match self {
            HexVertex::First { p, q } => [p + q, -q, p],
            HexVertex::Second { p, q } => [p + q + 1, -q, p],
        }
    }
}

/// Identifier of one directed lattice edge. The three families, all
/// pointing from a first-kind to a second-kind vertex:
/// `Right(p,q)`: F(p,q) -> S(p,q); `Down(p,q)`: F(p,q) -> S(p,q-1);
/// `Skip(p,q)`: S(p,q) -> F(p+1,q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HexEdge {
    Right { p: i64, q: i64 },
    Down { p: i64, q: i64 },
    Skip { p: i64, q: i64 },
}

impl HexEdge {
    pub fn endpoints(self) -> (HexVertex, HexVertex) {
        match self {
            HexEdge::Right { p, q } => (HexVertex::First { p, q }, HexVertex::Second { p, q }),
            HexEdge::Down { p, q } => (HexVertex::First { p, q }, HexVertex::Second { p, q: q - 1 }),
            HexEdge::Skip { p, q } => (HexVertex::Second { p, q }, HexVertex::First { p: p + 1, q }),
        }
    }
}

/// The six edges bounding the hexagonal cell at `(p, q)`.
pub fn hex_cell_edges(p: i64, q: i64) -> [HexEdge; 6] {
    [
        HexEdge::Right { p, q },
        HexEdge::Skip { p, q },
        HexEdge::Down { p: p + 1, q },
        HexEdge::Right { p: p + 1, q: q - 1 },
        HexEdge::Skip { p, q: q - 1 },
        HexEdge::Down { p, q },
    ]
}

/// Build a honeycomb tree from a cell selection minus a pruned edge subset.
///
/// All lengths are 1 unless `length_override` is given (the lattice itself
/// fixes unit lengths; the override exists for experiments only). Vertex
/// labels carry the `(p+q, -q, p)` coordinate triples. Edges are relabeled
/// into increasing order before the tree is returned.
pub fn honeycomb_tree(
    cells: &[(i64, i64)],
    prune: &[HexEdge],
    length_override: Option<f64>,
) -> Result<DirectedMetricTree, GraphError> {
    let mut edge_set: BTreeSet<HexEdge> = BTreeSet::new();
    for &(p, q) in cells {
        edge_set.extend(hex_cell_edges(p, q));
    }
    for e in prune {
        edge_set.remove(e);
    }
    honeycomb_from_edges(edge_set.iter().copied(), length_override)
}

/// Build a honeycomb tree directly from a lattice edge set.
pub fn honeycomb_from_edges(
    edges: impl IntoIterator<Item = HexEdge>,
    length_override: Option<f64>,
) -> Result<DirectedMetricTree, GraphError> {
    let length = length_override.unwrap_or(1.0);
    let mut vertex_ids: BTreeMap<HexVertex, usize> = BTreeMap::new();
    let mut edge_list: Vec<(usize, usize, f64)> = Vec::new();
    for he in edges {
        let (tail, head) = he.endpoints();
        let n = vertex_ids.len();
        let ti = *vertex_ids.entry(tail).or_insert(n);
        let n = vertex_ids.len();
        let hi = *vertex_ids.entry(head).or_insert(n);
        edge_list.push((ti, hi, length));
    }
    if edge_list.is_empty() {
        return Err(GraphError::Invalid("empty honeycomb selection".into()));
    }
    let n = vertex_ids.len();
    // Map tree errors onto the honeycomb error vocabulary.
    let tree = match DirectedMetricTree::construct(n, &edge_list, true) {
        Ok(t) => t,
        Err(GraphError::NotATree(msg)) if msg.contains("disconnected") => {
            return Err(GraphError::NotConnected)
        }
        Err(GraphError::NotATree(_)) | Err(GraphError::MultipleEdge { .. }) => {
            return Err(GraphError::ContainsCycle)
        }
        Err(e) => return Err(e),
    };
    let mut labels = vec![None; n];
    for (hv, &i) in &vertex_ids {
        labels[i] = Some(hv.triple());
    }
    let tree = tree.with_labels(labels);
    // No lattice vertex merges and splits at once.
    for v in 0..n {
        let d = tree.direction(v);
        if d.deg_in() >= 2 && d.deg_out() >= 2 {
            return Err(GraphError::Invalid(format!(
                "vertex {v} has deg_in {} and deg_out {}, impossible on the lattice",
                d.deg_in(),
                d.deg_out()
            )));
        }
    }
    let (tree, _) = tree.reindex_increasing()?;
    Ok(tree)
}

/// The 3-edge star around the first-kind vertex `F(p,q)`: its incoming
/// lattice edge plus both outgoing ones (the H3 configuration).
pub fn honeycomb_star_first_kind(p: i64, q: i64) -> Result<DirectedMetricTree, GraphError> {
    honeycomb_from_edges(
        [
            HexEdge::Skip { p: p - 1, q },
            HexEdge::Right { p, q },
            HexEdge::Down { p, q },
        ],
        None,
    )
}

/// The 3-edge star around the second-kind vertex `S(p,q)`: both incoming
/// lattice edges plus the outgoing one (the mirrored H3 configuration).
pub fn honeycomb_star_second_kind(p: i64, q: i64) -> Result<DirectedMetricTree, GraphError> {
    honeycomb_from_edges(
        [
            HexEdge::Right { p, q },
            HexEdge::Down { p, q: q + 1 },
            HexEdge::Skip { p, q },
        ],
        None,
    )
}

/// Graph file format: 1-based vertex indices on the wire.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphFile {
    pub vertices: usize,
    pub edges: Vec<GraphFileEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Option<[i64; 3]>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphFileEdge {
    pub tail: usize,
    pub head: usize,
    pub length: f64,
}

impl GraphFile {
    pub fn to_tree(&self) -> Result<DirectedMetricTree, GraphError> {
        let edges: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .map(|e| {
                if e.tail == 0 || e.head == 0 {
                    Err(GraphError::Invalid("vertex indices are 1-based".into()))
                } else {
                    Ok((e.tail - 1, e.head - 1, e.length))
                }
            })
            .collect::<Result<_, _>>()?;
        let tree = DirectedMetricTree::build(self.vertices, &edges)?;
        if let Some(labels) = &self.labels {
            if labels.len() != self.vertices {
                return Err(GraphError::Invalid("labels length mismatch".into()));
            }
            return Ok(tree.with_labels(labels.clone()));
        }
        Ok(tree)
    }

    pub fn from_tree(tree: &DirectedMetricTree) -> Self {
        GraphFile {
            vertices: tree.vertex_count(),
            edges: tree
                .edges()
                .iter()
                .map(|e| GraphFileEdge {
                    tail: e.tail + 1,
                    head: e.head + 1,
                    length: e.length,
                })
                .collect(),
            labels: if tree.labels.iter().any(|l| l.is_some()) {
                Some(tree.labels.clone())
            } else {
                None
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_path_graph_builds() {
        let tree = DirectedMetricTree::build(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(tree.is_tree());
        assert!(tree.has_increasing_order());
        assert_eq!(tree.classify_vertex(0).unwrap().kind, VertexKind::Source);
        assert_eq!(tree.classify_vertex(1).unwrap().kind, VertexKind::PathVertex);
        assert_eq!(tree.classify_vertex(2).unwrap().kind, VertexKind::Sink);
    }

    #[test]
    fn circle_graph_rejected() {
        // Three edges 1->2, 2->3, 1->3: an undirected cycle.
        let err = DirectedMetricTree::build(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
            .unwrap_err();
        assert!(matches!(err, GraphError::NotATree(_)));
    }

    #[test]
    fn single_edge_tree() {
        let tree = DirectedMetricTree::build(2, &[(0, 1, 5.0)]).unwrap();
        assert_eq!(tree.classify_vertex(0).unwrap().kind, VertexKind::Source);
        assert_eq!(tree.classify_vertex(1).unwrap().kind, VertexKind::Sink);
        assert_eq!(tree.length(0), 5.0);
    }

    #[test]
    fn multiple_edge_rejected() {
        let err =
            DirectedMetricTree::build(3, &[(0, 1, 1.0), (0, 1, 2.0), (1, 2, 1.0)]).unwrap_err();
        assert_eq!(err, GraphError::MultipleEdge { tail: 0, head: 1 });
    }

    #[test]
    fn non_positive_length_rejected() {
        let err = DirectedMetricTree::build(2, &[(0, 1, 0.0)]).unwrap_err();
        assert!(matches!(err, GraphError::NonPositiveLength { edge: 0, .. }));
        let err = DirectedMetricTree::build(2, &[(0, 1, -3.0)]).unwrap_err();
        assert!(matches!(err, GraphError::NonPositiveLength { .. }));
    }

    #[test]
    fn degree_sum_is_twice_edge_count() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let total: usize = (0..tree.vertex_count())
            .map(|v| tree.direction(v).deg())
            .sum();
        assert_eq!(total, 2 * tree.edge_count());
        for v in 0..tree.vertex_count() {
            let d = tree.direction(v);
            let c = tree.classify_vertex(v).unwrap();
            assert_eq!(d.deg_in(), c.deg_in);
            assert_eq!(d.deg_out(), c.deg_out);
        }
    }

    #[test]
    fn h3_star_classification() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        assert_eq!(tree.vertex_count(), 4);
        assert_eq!(tree.edge_count(), 3);
        let first_kind: Vec<usize> = (0..4)
            .filter(|&v| tree.classify_vertex(v).unwrap().kind == VertexKind::FirstKind)
            .collect();
        assert_eq!(first_kind.len(), 1);
        assert_eq!(
            tree.vertex_label(first_kind[0]),
            Some(HexVertex::First { p: 0, q: 0 }.triple())
        );

        let mirrored = honeycomb_star_second_kind(0, 0).unwrap();
        let second_kind: Vec<usize> = (0..4)
            .filter(|&v| mirrored.classify_vertex(v).unwrap().kind == VertexKind::SecondKind)
            .collect();
        assert_eq!(second_kind.len(), 1);
    }

    #[test]
    fn full_hexagon_contains_cycle() {
        let err = honeycomb_tree(&[(0, 0)], &[], None).unwrap_err();
        assert_eq!(err, GraphError::ContainsCycle);
    }

    #[test]
    fn three_cell_patch_has_15_edges_and_prunes_to_a_tree() {
        // Three mutually adjacent cells share three edges: 18 - 3 = 15.
        let mut all: BTreeSet<HexEdge> = BTreeSet::new();
        for &(p, q) in &[(0, 0), (0, 1), (1, 0)] {
            all.extend(hex_cell_edges(p, q));
        }
        assert_eq!(all.len(), 15);

        // One edge pruned per hexagon, chosen off the shared boundary.
        let prune = [
            HexEdge::Down { p: 0, q: 0 },
            HexEdge::Right { p: 0, q: 1 },
            HexEdge::Skip { p: 1, q: -1 },
        ];
        let tree = honeycomb_tree(&[(0, 0), (0, 1), (1, 0)], &prune, None).unwrap();
        assert_eq!(tree.edge_count(), 12);
        assert_eq!(tree.vertex_count(), tree.edge_count() + 1);
        // No honeycomb vertex merges and splits at once.
        for v in 0..tree.vertex_count() {
            let d = tree.direction(v);
            assert!(!(d.deg_in() >= 2 && d.deg_out() >= 2));
        }
    }

    #[test]
    fn path_graph_defaults_and_lengths() {
        let p2 = path_graph(2, None).unwrap();
        assert_eq!(p2.edge_count(), 2);
        assert_eq!(p2.length(0), 1.0);
        let p1 = path_graph(1, None).unwrap();
        assert_eq!(p1.vertex_count(), 2);
        // A chain with these lengths is still only a chain, not the
        // split-interval graph; that one comes from the diamond builder.
        let p4 = path_graph(4, Some(&[9.0, 2.0, 2.0, 9.0])).unwrap();
        assert_eq!(p4.classify_vertex(1).unwrap().kind, VertexKind::PathVertex);
        assert!(path_graph(2, Some(&[1.0])).is_err());
    }

    #[test]
    fn reindex_restores_flow_order_on_chain() {
        // P2 with swapped labels: edge 0 is the downstream edge.
        let tree = DirectedMetricTree::build(3, &[(1, 2, 1.0), (0, 1, 1.0)]).unwrap();
        assert!(!tree.has_increasing_order());
        let (fixed, perm) = tree.reindex_increasing().unwrap();
        assert!(fixed.has_increasing_order());
        assert_eq!(perm.new_to_old, vec![1, 0]);
        assert_eq!(fixed.edge(0).tail, 0);
        assert_eq!(fixed.edge(1).tail, 1);
    }

    #[test]
    fn reindex_is_idempotent() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let (again, perm) = tree.reindex_increasing().unwrap();
        assert!(perm.is_identity());
        assert_eq!(again.edges(), tree.edges());
    }

    #[test]
    fn reindex_puts_source_edge_first_on_star() {
        // H3 star with deliberately scrambled edge order.
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let scrambled: Vec<(usize, usize, f64)> = [2usize, 0, 1]
            .iter()
            .map(|&j| {
                let e = tree.edge(j);
                (e.tail, e.head, e.length)
            })
            .collect();
        let t = DirectedMetricTree::build(4, &scrambled).unwrap();
        let (fixed, _) = t.reindex_increasing().unwrap();
        assert!(fixed.has_increasing_order());
        let source = fixed.sources()[0];
        assert_eq!(fixed.direction(source).out_edges, vec![0]);
    }

    #[test]
    fn strict_build_rejects_bad_order() {
        let err = DirectedMetricTree::build_strict(3, &[(1, 2, 1.0), (0, 1, 1.0)]).unwrap_err();
        assert!(matches!(err, GraphError::NotIncreasingOrder(_)));
    }

    #[test]
    fn network_allows_the_diamond_shape() {
        let net = DirectedMetricTree::build_network(
            4,
            &[(0, 1, 9.0), (1, 2, 2.0), (1, 2, 2.0), (2, 3, 9.0)],
        )
        .unwrap();
        assert!(!net.is_tree());
        assert_eq!(net.classify_vertex(1).unwrap().kind, VertexKind::FirstKind);
        assert_eq!(net.classify_vertex(2).unwrap().kind, VertexKind::SecondKind);
    }

    #[test]
    fn graph_file_round_trip() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let file = GraphFile::from_tree(&tree);
        let back = file.to_tree().unwrap();
        assert_eq!(back.edges(), tree.edges());
        let json = serde_json::to_string(&file).unwrap();
        let parsed: GraphFile = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, file);
    }

    #[test]
    fn incidence_matrices() {
        let tree = DirectedMetricTree::build(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let (plus, minus) = tree.incidence();
        assert_eq!(plus[1], vec![1, 0]);
        assert_eq!(minus[1], vec![0, 1]);
        assert_eq!(plus[0], vec![0, 0]);
    }
}
