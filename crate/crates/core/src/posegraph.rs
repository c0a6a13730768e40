//! Pose-graph data model: nodes keyed by (session, frame), odometry and
//! landmark edges, chain composition and decimation utilities.

use crate::geometry::Pose;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use thiserror::Error;

/// Node key: the `frame`-th viewpoint of the `session`-th experience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub session: u32,
    pub frame: u32,
}

impl NodeId {
    pub fn new(session: u32, frame: u32) -> Self {
        NodeId { session, frame }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.session, self.frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Odometry,
    Landmark,
}

/// Relative-pose constraint between two nodes.
///
/// `info` is the symmetric positive-definite information matrix of the
/// measurement, `DOF × DOF`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<P: Pose> {
    pub from: NodeId,
    pub to: NodeId,
    pub z: P,
    pub info: DMatrix<P::Scalar>,
    pub kind: EdgeKind,
}

impl<P: Pose> Edge<P> {
    pub fn odometry(from: NodeId, to: NodeId, z: P, info: DMatrix<P::Scalar>) -> Self {
        Edge {
            from,
            to,
            z,
            info,
            kind: EdgeKind::Odometry,
        }
    }

    pub fn landmark(from: NodeId, to: NodeId, z: P, info: DMatrix<P::Scalar>) -> Self {
        Edge {
            from,
            to,
            z,
            info,
            kind: EdgeKind::Landmark,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge endpoints must differ: {0}")]
    SelfLoop(NodeId),
    #[error("odometry edge {0} -> {1} must advance one frame within a session")]
    BadOdometrySpan(NodeId, NodeId),
    #[error("duplicate odometry edge {0} -> {1}")]
    DuplicateOdometry(NodeId, NodeId),
    #[error("no odometry chain between {0} and {1}")]
    NotConnected(NodeId, NodeId),
    #[error("information matrix must be {expected}x{expected} symmetric positive definite")]
    BadInformation { expected: usize },
    #[error("odometry chain for session {session} has a gap at frame {frame}")]
    ChainGap { session: u32, frame: u32 },
}

/// Pose graph: node set plus an ordered edge sequence.
///
/// Edges keep their insertion index as a stable id so downstream edge
/// labelings stay aligned across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph<P: Pose> {
    nodes: BTreeMap<NodeId, Option<P>>,
    edges: Vec<Edge<P>>,
}

impl<P: Pose> Default for PoseGraph<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Pose> PoseGraph<P> {
    pub fn new() -> Self {
        PoseGraph {
            nodes: BTreeMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn add_node(&mut self, id: NodeId, pose: Option<P>) {
        let slot = self.nodes.entry(id).or_insert(None);
        if pose.is_some() {
            *slot = pose;
        }
    }

    pub fn node_pose(&self, id: NodeId) -> Option<&P> {
        self.nodes.get(&id).and_then(|p| p.as_ref())
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Option<&P>)> {
        self.nodes.iter().map(|(id, p)| (*id, p.as_ref()))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge<P>] {
        &self.edges
    }

    pub fn landmark_edge_ids(&self) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == EdgeKind::Landmark)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sessions(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.nodes.keys().map(|n| n.session).collect();
        s.dedup();
        s
    }

    /// Append an edge, creating missing endpoint nodes.
    ///
    /// Odometry edges must advance exactly one frame within a session and may
    /// not duplicate an existing odometry edge for the same frame pair.
    pub fn add_edge(&mut self, e: Edge<P>) -> Result<(), GraphError> {
        if e.from == e.to {
            return Err(GraphError::SelfLoop(e.from));
        }
        let dof = P::DOF;
        if e.info.nrows() != dof || e.info.ncols() != dof {
            return Err(GraphError::BadInformation { expected: dof });
        }
        if e.kind == EdgeKind::Odometry {
            if e.to.session != e.from.session || e.to.frame != e.from.frame + 1 {
                return Err(GraphError::BadOdometrySpan(e.from, e.to));
            }
            let dup = self
                .edges
                .iter()
                .any(|o| o.kind == EdgeKind::Odometry && o.from == e.from && o.to == e.to);
            if dup {
                return Err(GraphError::DuplicateOdometry(e.from, e.to));
            }
        }
        self.add_node(e.from, None);
        self.add_node(e.to, None);
        self.edges.push(e);
        Ok(())
    }

    /// Check that each session's odometry edges form one contiguous chain
    /// over the frame range they cover.
    pub fn validate_chains(&self) -> Result<(), GraphError> {
        for session in self.sessions() {
            let mut from_frames: Vec<u32> = self
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::Odometry && e.from.session == session)
                .map(|e| e.from.frame)
                .collect();
            from_frames.sort_unstable();
            for w in from_frames.windows(2) {
                if w[1] != w[0] + 1 {
                    return Err(GraphError::ChainGap {
                        session,
                        frame: w[0] + 1,
                    });
                }
            }
        }
        Ok(())
    }

    fn odometry_edge(&self, from: NodeId) -> Option<&Edge<P>> {
        self.edges
            .iter()
            .find(|e| e.kind == EdgeKind::Odometry && e.from == from)
    }

    /// Relative pose between two same-session nodes obtained by composing the
    /// odometry measurements along the chain (inverted when `b` precedes `a`).
    pub fn odometry_relative(&self, a: NodeId, b: NodeId) -> Result<P, GraphError> {
        if a.session != b.session {
            return Err(GraphError::NotConnected(a, b));
        }
        if a.frame == b.frame {
            return Ok(P::identity());
        }
        let (lo, hi) = (a.frame.min(b.frame), a.frame.max(b.frame));
        let mut acc = P::identity();
        for frame in lo..hi {
            let step = self
                .odometry_edge(NodeId::new(a.session, frame))
                .ok_or(GraphError::NotConnected(a, b))?;
            acc = acc.compose(&step.z);
        }
        if b.frame < a.frame {
            acc = acc.inverse();
        }
        Ok(acc)
    }

    /// Keep every `k`-th frame. Odometry measurements are re-composed over
    /// each span, landmark edges are re-anchored to the nearest kept frame
    /// (ties toward the lower frame) with the odometry offset folded into the
    /// measurement, and frame ids are divided by `k`.
    pub fn decimate(&self, k: u32) -> PoseGraph<P> {
        assert!(k >= 1, "decimation factor must be >= 1");
        if k == 1 {
            return self.clone();
        }
        let mut out = PoseGraph::new();
        for (id, pose) in self.nodes.iter() {
            if id.frame.is_multiple_of(k) {
                out.add_node(NodeId::new(id.session, id.frame / k), pose.clone());
            }
        }
        // recomposed odometry spans, per session
        for session in self.sessions() {
            let mut kept: Vec<u32> = self
                .nodes
                .keys()
                .filter(|n| n.session == session && n.frame.is_multiple_of(k))
                .map(|n| n.frame)
                .collect();
            kept.sort_unstable();
            for w in kept.windows(2) {
                let (a, b) = (NodeId::new(session, w[0]), NodeId::new(session, w[1]));
                let Ok(z) = self.odometry_relative(a, b) else {
                    continue;
                };
                let info = self
                    .odometry_edge(a)
                    .map(|e| e.info.clone())
                    .unwrap_or_else(|| DMatrix::identity(P::DOF, P::DOF));
                let e = Edge::odometry(
                    NodeId::new(session, w[0] / k),
                    NodeId::new(session, w[1] / k),
                    z,
                    info,
                );
                out.add_edge(e).expect("recomposed odometry span is valid");
            }
        }
        // re-anchored landmark edges
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Landmark) {
            let fa = nearest_kept(e.from.frame, k);
            let fb = nearest_kept(e.to.frame, k);
            let na = NodeId::new(e.from.session, fa);
            let nb = NodeId::new(e.to.session, fb);
            let (Ok(off_a), Ok(off_b)) = (
                self.odometry_relative(na, e.from),
                self.odometry_relative(e.to, nb),
            ) else {
                continue;
            };
            let z = off_a.compose(&e.z).compose(&off_b);
            let from = NodeId::new(e.from.session, fa / k);
            let to = NodeId::new(e.to.session, fb / k);
            if from == to {
                // constraint collapses onto a single node
                continue;
            }
            out.add_edge(Edge::landmark(from, to, z, e.info.clone()))
                .expect("re-anchored landmark edge is valid");
        }
        out
    }
}

/// Nearest multiple of `k`, ties toward the lower one.
fn nearest_kept(frame: u32, k: u32) -> u32 {
    let down = frame - frame % k;
    let up = down + k;
    if frame - down <= up - frame {
        down
    } else {
        up
    }
}

/// Per-session cumulative odometry tables for O(1) relative-pose queries.
///
/// `relative(a, b)` matches `PoseGraph::odometry_relative` up to floating
/// point association.
pub struct OdometryIndex<P: Pose> {
    // (session, first frame, cumulative pose from first frame per frame)
    chains: BTreeMap<u32, (u32, Vec<P>)>,
}

impl<P: Pose> OdometryIndex<P> {
    pub fn build(g: &PoseGraph<P>) -> Self {
        let mut chains = BTreeMap::new();
        for session in g.sessions() {
            let frames: Vec<u32> = g
                .node_ids()
                .filter(|n| n.session == session)
                .map(|n| n.frame)
                .collect();
            let (Some(&lo), Some(&hi)) = (frames.first(), frames.last()) else {
                continue;
            };
            let mut cum = Vec::with_capacity((hi - lo + 1) as usize);
            cum.push(P::identity());
            let mut acc = P::identity();
            let mut ok = true;
            for frame in lo..hi {
                match g.odometry_edge(NodeId::new(session, frame)) {
                    Some(e) => {
                        acc = acc.compose(&e.z);
                        cum.push(acc.clone());
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                chains.insert(session, (lo, cum));
            }
        }
        OdometryIndex { chains }
    }

    pub fn relative(&self, a: NodeId, b: NodeId) -> Result<P, GraphError> {
        if a.session != b.session {
            return Err(GraphError::NotConnected(a, b));
        }
        let (lo, cum) = self
            .chains
            .get(&a.session)
            .ok_or(GraphError::NotConnected(a, b))?;
        let ia = (a.frame.checked_sub(*lo)).map(|i| i as usize);
        let ib = (b.frame.checked_sub(*lo)).map(|i| i as usize);
        match (ia, ib) {
            (Some(ia), Some(ib)) if ia < cum.len() && ib < cum.len() => {
                Ok(cum[ia].between(&cum[ib]))
            }
            _ => Err(GraphError::NotConnected(a, b)),
        }
    }

    /// Dead-reckoned pose of `id` relative to its session's first frame.
    pub fn pose_in_session(&self, id: NodeId) -> Option<&P> {
        let (lo, cum) = self.chains.get(&id.session)?;
        cum.get(id.frame.checked_sub(*lo)? as usize)
    }

    pub fn session_start(&self, session: u32) -> Option<u32> {
        self.chains.get(&session).map(|(lo, _)| *lo)
    }
}

/// Side file mapping landmark edges to ground-truth correctness labels.
///
/// `true` marks an incorrect (injected) edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSidecar {
    pub labels: BTreeMap<(NodeId, NodeId), bool>,
}

impl LabelSidecar {
    pub fn mark(&mut self, from: NodeId, to: NodeId, incorrect: bool) {
        self.labels.insert(key(from, to), incorrect);
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Option<bool> {
        self.labels.get(&key(from, to)).copied()
    }

    pub fn incorrect_count(&self) -> usize {
        self.labels.values().filter(|&&v| v).count()
    }
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
