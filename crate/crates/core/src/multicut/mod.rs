//! Support-edge-weighted minimum-cost multicut over pose-graph landmark
//! edges.
//!
//! Landmark edges whose endpoint frame ids are echoed by another landmark
//! edge within a ±Δ window are treated as mutually supporting evidence and
//! get cost +1; unsupported edges get cost −1. Decomposing the resulting
//! signed graph with a minimum-cost multicut separates edges worth keeping
//! (uncut) from edges to reject (cut), jointly rather than one at a time.

mod solve;

pub use solve::{
    count_partitions, decomposition_objective, refine_klj, solve_exact, solve_gaec, ExactOutcome,
};

use crate::geometry::Pose;
use crate::posegraph::{EdgeKind, NodeId, PoseGraph};
use crate::scalar::{real, Real};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum McError {
    #[error("exact solver limited to {limit} vertices, instance has {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("edge labeling violates a cycle inequality")]
    InfeasibleLabeling,
}

/// Which pose-graph edges enter the multicut instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    /// Vertices are landmark-edge endpoints, edges are landmark edges only.
    LandmarkOnly,
    /// All pose nodes plus odometry edges at a fixed cost.
    FullGraph,
}

#[derive(Debug, Clone)]
pub struct SupportConfig {
    /// Frame-id radius of the support window.
    pub delta: u32,
    pub mode: McMode,
    /// Odometry edge cost, used only in [`McMode::FullGraph`].
    pub theta_odo: f64,
}

impl Default for SupportConfig {
    fn default() -> Self {
        SupportConfig {
            delta: 1,
            mode: McMode::LandmarkOnly,
            theta_odo: 1.0,
        }
    }
}

impl SupportConfig {
    /// Upper bound on distinct support slots per edge: `(2Δ+1)² − 1 = 4Δ(Δ+1)`.
    pub fn max_support_candidates(&self) -> usize {
        let d = self.delta as usize;
        4 * d * (d + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOrigin {
    Landmark,
    Odometry,
}

/// Edge of the multicut instance. `sources` are pose-graph edge ids merged
/// into this instance edge (parallel landmark edges sum their costs).
#[derive(Debug, Clone)]
pub struct McEdge<S> {
    pub id: usize,
    pub u: usize,
    pub v: usize,
    pub cost: S,
    pub origin: EdgeOrigin,
    pub sources: Vec<usize>,
}

/// The weighted graph `G = (V, E)` the multicut is solved on.
#[derive(Debug, Clone)]
pub struct WeightedGraph<S: Real> {
    vertices: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    edges: Vec<McEdge<S>>,
}

impl<S: Real> WeightedGraph<S> {
    pub fn new() -> Self {
        WeightedGraph {
            vertices: Vec::new(),
            index: BTreeMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[NodeId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[McEdge<S>] {
        &self.edges
    }

    pub fn vertex_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    fn intern(&mut self, id: NodeId) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.vertices.len();
        self.vertices.push(id);
        self.index.insert(id, i);
        i
    }

    /// Add an edge, merging into an existing parallel edge by cost summation.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId, cost: S, origin: EdgeOrigin, source: usize) {
        let (u, v) = (self.intern(a), self.intern(b));
        let key = (u.min(v), u.max(v));
        if let Some(e) = self
            .edges
            .iter_mut()
            .find(|e| (e.u.min(e.v), e.u.max(e.v)) == key)
        {
            e.cost += cost;
            e.sources.push(source);
            if origin == EdgeOrigin::Odometry {
                e.origin = EdgeOrigin::Odometry;
            }
            return;
        }
        let id = self.edges.len();
        self.edges.push(McEdge {
            id,
            u,
            v,
            cost,
            origin,
            sources: vec![source],
        });
    }

    /// Test helper: a signed graph over synthetic node ids `0..n`.
    pub fn from_signed_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = WeightedGraph::new();
        for i in 0..n {
            g.intern(NodeId::new(0, i as u32));
        }
        for (k, &(u, v, c)) in edges.iter().enumerate() {
            g.add_edge(
                NodeId::new(0, u as u32),
                NodeId::new(0, v as u32),
                real(c),
                EdgeOrigin::Landmark,
                k,
            );
        }
        g
    }
}

impl<S: Real> Default for WeightedGraph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Node-to-component assignment inducing a feasible multicut.
///
/// Labels are contiguous from 0 in first-seen vertex order, so equal
/// decompositions compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub component: BTreeMap<NodeId, usize>,
}

impl Decomposition {
    /// Build from per-vertex-index labels, canonicalizing label order.
    pub fn from_labels<S: Real>(g: &WeightedGraph<S>, labels: &[usize]) -> Self {
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        let mut component = BTreeMap::new();
        for (i, id) in g.vertices.iter().enumerate() {
            let next = relabel.len();
            let c = *relabel.entry(labels[i]).or_insert(next);
            component.insert(*id, c);
        }
        Decomposition { component }
    }

    pub fn n_components(&self) -> usize {
        self.component
            .values()
            .copied()
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Binary edge labels, 1 = cut, indexed by instance edge id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticutLabeling {
    pub y: Vec<bool>,
}

/// Normalized landmark endpoints: `(a, b)` with `a <= b`.
fn normalized(from: NodeId, to: NodeId) -> (NodeId, NodeId) {
    if from <= to {
        (from, to)
    } else {
        (to, from)
    }
}

fn in_window(a: (NodeId, NodeId), b: (NodeId, NodeId), delta: u32) -> bool {
    a.0.session == b.0.session
        && a.1.session == b.1.session
        && a.0.frame.abs_diff(b.0.frame) <= delta
        && a.1.frame.abs_diff(b.1.frame) <= delta
}

/// Support-edge cost per landmark edge id: +1 if any other landmark edge
/// falls in the ±Δ window around both endpoints, −1 otherwise.
pub fn compute_support_weights<P: Pose>(
    g: &PoseGraph<P>,
    cfg: &SupportConfig,
) -> BTreeMap<usize, f64> {
    support_scan(g, cfg)
        .into_iter()
        .map(|(id, count, parallel)| (id, if count > 0 || parallel { 1.0 } else { -1.0 }))
        .collect()
}

/// Distinct support slots per landmark edge id (the edge's own endpoint pair
/// excluded, so the `4Δ(Δ+1)` bound holds even with parallel duplicates).
pub fn support_candidate_counts<P: Pose>(
    g: &PoseGraph<P>,
    cfg: &SupportConfig,
) -> BTreeMap<usize, usize> {
    support_scan(g, cfg)
        .into_iter()
        .map(|(id, count, _)| (id, count))
        .collect()
}

/// For each landmark edge: (edge id, distinct supporting slots, has parallel duplicate).
fn support_scan<P: Pose>(g: &PoseGraph<P>, cfg: &SupportConfig) -> Vec<(usize, usize, bool)> {
    let landmarks: Vec<(usize, (NodeId, NodeId))> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EdgeKind::Landmark)
        .map(|(i, e)| (i, normalized(e.from, e.to)))
        .collect();
    landmarks
        .iter()
        .map(|&(id, pair)| {
            let mut slots: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
            let mut parallel = false;
            for &(other_id, other_pair) in &landmarks {
                if other_id == id || !in_window(pair, other_pair, cfg.delta) {
                    continue;
                }
                if other_pair == pair {
                    parallel = true;
                } else {
                    slots.insert(other_pair);
                }
            }
            (id, slots.len(), parallel)
        })
        .collect()
}

/// Build the multicut instance from a pose graph.
pub fn build_instance<P: Pose>(g: &PoseGraph<P>, cfg: &SupportConfig) -> WeightedGraph<P::Scalar> {
    let weights = compute_support_weights(g, cfg);
    let mut wg = WeightedGraph::new();
    if cfg.mode == McMode::FullGraph {
        for id in g.node_ids() {
            wg.intern(id);
        }
    }
    for (i, e) in g.edges().iter().enumerate() {
        match e.kind {
            EdgeKind::Landmark => {
                let c = real(weights[&i]);
                wg.add_edge(e.from, e.to, c, EdgeOrigin::Landmark, i);
            }
            EdgeKind::Odometry if cfg.mode == McMode::FullGraph => {
                wg.add_edge(e.from, e.to, real(cfg.theta_odo), EdgeOrigin::Odometry, i);
            }
            _ => {}
        }
    }
    wg
}

/// Edge labeling induced by a decomposition: cut iff endpoints lie in
/// different components. Vertices missing from the decomposition count as
/// singleton components.
pub fn labeling_of<S: Real>(g: &WeightedGraph<S>, d: &Decomposition) -> MulticutLabeling {
    let n = g.n_vertices();
    let comp_of = |i: usize| d.component.get(&g.vertices[i]).copied().unwrap_or(n + i);
    MulticutLabeling {
        y: g.edges
            .iter()
            .map(|e| comp_of(e.u) != comp_of(e.v))
            .collect(),
    }
}

/// A labeling is a valid multicut characteristic function iff the components
/// induced by its uncut edges reproduce it — equivalently, no cycle crosses
/// exactly one cut edge.
pub fn validate<S: Real>(g: &WeightedGraph<S>, y: &MulticutLabeling) -> bool {
    if y.y.len() != g.edges.len() {
        return false;
    }
    let mut uf = UnionFind::new(g.n_vertices());
    for e in &g.edges {
        if !y.y[e.id] {
            uf.union(e.u, e.v);
        }
    }
    g.edges
        .iter()
        .all(|e| y.y[e.id] == (uf.find(e.u) != uf.find(e.v)))
}

/// Total cost of the cut edges, `Σ c_e · y_e`.
pub fn objective<S: Real>(g: &WeightedGraph<S>, y: &MulticutLabeling) -> Result<S, McError> {
    if !validate(g, y) {
        return Err(McError::InfeasibleLabeling);
    }
    Ok(objective_unchecked(g, y))
}

pub(crate) fn objective_unchecked<S: Real>(g: &WeightedGraph<S>, y: &MulticutLabeling) -> S {
    g.edges
        .iter()
        .map(|e| if y.y[e.id] { e.cost } else { S::zero() })
        .fold(S::zero(), |a, b| a + b)
}

/// Pose-graph landmark edge ids whose endpoints fall in different components.
pub fn rejected_landmark_ids<P: Pose>(g: &PoseGraph<P>, d: &Decomposition) -> Vec<usize> {
    g.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            e.kind == EdgeKind::Landmark
                && match (d.component.get(&e.from), d.component.get(&e.to)) {
                    (Some(a), Some(b)) => a != b,
                    _ => false,
                }
        })
        .map(|(i, _)| i)
        .collect()
}

/// Drop exactly the cut landmark edges; odometry edges are always retained.
pub fn reject_cut_edges<P: Pose>(g: &PoseGraph<P>, d: &Decomposition) -> PoseGraph<P> {
    let rejected: BTreeSet<usize> = rejected_landmark_ids(g, d).into_iter().collect();
    let mut out = PoseGraph::new();
    for (id, pose) in g.nodes() {
        out.add_node(id, pose.cloned());
    }
    for (i, e) in g.edges().iter().enumerate() {
        if !rejected.contains(&i) {
            out.add_edge(e.clone())
                .expect("edge was valid in the source graph");
        }
    }
    out
}

/// Full graph-cut stage: build the support-weighted instance, solve it with
/// greedy contraction plus local refinement, and drop the cut landmark edges.
/// Returns the cleaned graph and the removed pose-graph edge ids.
pub fn gc_filter<P: Pose>(g: &PoseGraph<P>, cfg: &SupportConfig) -> (PoseGraph<P>, Vec<usize>) {
    let instance = build_instance(g, cfg);
    let d = refine_klj(&instance, &solve_gaec(&instance));
    let removed = rejected_landmark_ids(g, &d);
    (reject_cut_edges(g, &d), removed)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Union keeping the smaller root as representative (determinism).
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

#[cfg(test)]
mod tests;
