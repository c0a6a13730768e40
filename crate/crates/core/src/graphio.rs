//! Plain-text g2o reading and writing, plus the edge-label sidecar.
//!
//! Grammar (one record per line, `#` starts a comment):
//!
//! ```text
//! VERTEX_SE2 <id> <x> <y> <theta>
//! EDGE_SE2 <i> <j> <dx> <dy> <dtheta> <i11> <i12> <i13> <i22> <i23> <i33>
//! VERTEX_SE3:QUAT <id> <x> <y> <z> <qx> <qy> <qz> <qw>
//! EDGE_SE3:QUAT <i> <j> <dx> <dy> <dz> <qx> <qy> <qz> <qw> <21 info entries>
//! ```
//!
//! Node ids encode the session: `id = session * SESSION_OFFSET + frame`,
//! with the offset declared in a `# SESSION_OFFSET n` header (default
//! 100000). Edge kind is inferred (odometry iff same session and consecutive
//! frames) unless a `# KIND <i> <j> LANDMARK` directive overrides it.
//! Sidecar records are `EDGE_LABEL <i> <j> <0|1>` (1 = incorrect).

use crate::geometry::{Pose, Pose2, Pose3};
use crate::posegraph::{Edge, EdgeKind, LabelSidecar, NodeId, PoseGraph};
use crate::scalar::{real, to_f64, Real};
use nalgebra::{DMatrix, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

pub const DEFAULT_SESSION_OFFSET: u64 = 100_000;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: information matrix is not symmetric positive definite")]
    NotSpd { line: usize },
    #[error("graph structure: {0}")]
    Structure(#[from] crate::posegraph::GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pose types that have a g2o record encoding.
pub trait G2oPose: Pose {
    const VERTEX_TAG: &'static str;
    const EDGE_TAG: &'static str;
    /// Pose fields in record order (3 for SE2, 7 for SE3:QUAT).
    fn pose_fields(&self) -> Vec<f64>;
    fn pose_from_fields(f: &[f64]) -> Self;
}

impl<S: Real> G2oPose for Pose2<S> {
    const VERTEX_TAG: &'static str = "VERTEX_SE2";
    const EDGE_TAG: &'static str = "EDGE_SE2";

    fn pose_fields(&self) -> Vec<f64> {
        vec![to_f64(self.x), to_f64(self.y), to_f64(self.theta)]
    }

    fn pose_from_fields(f: &[f64]) -> Self {
        Pose2::new(real(f[0]), real(f[1]), real(f[2]))
    }
}

impl<S: Real> G2oPose for Pose3<S> {
    const VERTEX_TAG: &'static str = "VERTEX_SE3:QUAT";
    const EDGE_TAG: &'static str = "EDGE_SE3:QUAT";

    fn pose_fields(&self) -> Vec<f64> {
        let q = self.q.into_inner();
        vec![
            to_f64(self.t.x),
            to_f64(self.t.y),
            to_f64(self.t.z),
            to_f64(q.i),
            to_f64(q.j),
            to_f64(q.k),
            to_f64(q.w),
        ]
    }

    fn pose_from_fields(f: &[f64]) -> Self {
        let q = Quaternion::new(real(f[6]), real(f[3]), real(f[4]), real(f[5]));
        Pose3::new(
            Vector3::new(real(f[0]), real(f[1]), real(f[2])),
            UnitQuaternion::new_normalize(q),
        )
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
fn fmt_num(x: f64) -> String {
    format!("{:.16e}", x)
}

fn encode(id: NodeId, offset: u64) -> u64 {
    id.session as u64 * offset + id.frame as u64
}

fn decode(raw: u64, offset: u64) -> NodeId {
    NodeId::new((raw / offset) as u32, (raw % offset) as u32)
}

fn parse_fields(line: usize, parts: &[&str]) -> Result<Vec<f64>, IoError> {
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>().map_err(|_| IoError::Parse {
                line,
                msg: format!("bad number `{p}`"),
            })
        })
        .collect()
}

fn infer_kind(from: NodeId, to: NodeId) -> EdgeKind {
    if from.session == to.session && to.frame == from.frame + 1 {
        EdgeKind::Odometry
    } else {
        EdgeKind::Landmark
    }
}

fn scan_session_offset(text: &str) -> Result<u64, IoError> {
    for (ln, raw) in text.lines().enumerate() {
        let t = raw.trim();
        let Some(rest) = t.strip_prefix('#') else {
            continue;
        };
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.first() == Some(&"SESSION_OFFSET") {
            let v = parts.get(1).and_then(|p| p.parse::<u64>().ok());
            return match v {
                Some(v) if v > 0 => Ok(v),
                _ => Err(IoError::Parse {
                    line: ln + 1,
                    msg: "SESSION_OFFSET needs a positive integer".into(),
                }),
            };
        }
    }
    Ok(DEFAULT_SESSION_OFFSET)
}

/// Pending edge-kind override: raw id pair plus the kind to apply.
type KindDirective = ((u64, u64), EdgeKind);

/// Parse a `# KIND <i> <j> <ODOMETRY|LANDMARK>` directive. The directive
/// applies to the next edge record with that raw id pair (so parallel edges
/// of differing kinds stay distinguishable).
fn parse_kind_directive(line: usize, t: &str) -> Result<Option<KindDirective>, IoError> {
    let Some(rest) = t.strip_prefix('#') else {
        return Ok(None);
    };
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.first() != Some(&"KIND") {
        return Ok(None);
    }
    if parts.len() != 4 {
        return Err(IoError::Parse {
            line,
            msg: "KIND directive needs `<i> <j> <ODOMETRY|LANDMARK>`".into(),
        });
    }
    let i = parts[1].parse::<u64>().map_err(|_| IoError::Parse {
        line,
        msg: format!("bad id `{}`", parts[1]),
    })?;
    let j = parts[2].parse::<u64>().map_err(|_| IoError::Parse {
        line,
        msg: format!("bad id `{}`", parts[2]),
    })?;
    let kind = match parts[3] {
        "ODOMETRY" => EdgeKind::Odometry,
        "LANDMARK" => EdgeKind::Landmark,
        other => {
            return Err(IoError::Parse {
                line,
                msg: format!("unknown edge kind `{other}`"),
            })
        }
    };
    Ok(Some(((i, j), kind)))
}

fn spd_check<S: Real>(info: &DMatrix<S>, line: usize) -> Result<(), IoError> {
    let n = info.nrows();
    for i in 0..n {
        for j in 0..i {
            let d = info[(i, j)] - info[(j, i)];
            if d.abs() > real(1e-9) {
                return Err(IoError::NotSpd { line });
            }
        }
    }
    if info.clone().cholesky().is_none() {
        return Err(IoError::NotSpd { line });
    }
    Ok(())
}

pub fn read_g2o<P: G2oPose>(text: &str) -> Result<PoseGraph<P>, IoError> {
    let offset = scan_session_offset(text)?;
    let n_pose = P::TRANS_DIM + if P::TRANS_DIM == 2 { 1 } else { 4 };
    let n_info = P::DOF * (P::DOF + 1) / 2;
    let mut g = PoseGraph::new();
    let mut pending_kind: Option<KindDirective> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            if let Some(k) = parse_kind_directive(line, t)? {
                pending_kind = Some(k);
            }
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let tag = parts[0];
        if tag == P::VERTEX_TAG {
            if parts.len() != 2 + n_pose {
                return Err(IoError::Parse {
                    line,
                    msg: format!("{} expects {} fields", tag, 1 + n_pose),
                });
            }
            let id = parts[1].parse::<u64>().map_err(|_| IoError::Parse {
                line,
                msg: format!("bad id `{}`", parts[1]),
            })?;
            let fields = parse_fields(line, &parts[2..])?;
            g.add_node(decode(id, offset), Some(P::pose_from_fields(&fields)));
        } else if tag == P::EDGE_TAG {
            if parts.len() != 3 + n_pose + n_info {
                return Err(IoError::Parse {
                    line,
                    msg: format!("{} expects {} fields", tag, 2 + n_pose + n_info),
                });
            }
            let i = parts[1].parse::<u64>().map_err(|_| IoError::Parse {
                line,
                msg: format!("bad id `{}`", parts[1]),
            })?;
            let j = parts[2].parse::<u64>().map_err(|_| IoError::Parse {
                line,
                msg: format!("bad id `{}`", parts[2]),
            })?;
            let fields = parse_fields(line, &parts[3..])?;
            let z = P::pose_from_fields(&fields[..n_pose]);
            let mut info = DMatrix::<P::Scalar>::zeros(P::DOF, P::DOF);
            let mut k = n_pose;
            for r in 0..P::DOF {
                for c in r..P::DOF {
                    let v = real::<P::Scalar>(fields[k]);
                    info[(r, c)] = v;
                    info[(c, r)] = v;
                    k += 1;
                }
            }
            spd_check(&info, line)?;
            let from = decode(i, offset);
            let to = decode(j, offset);
            let kind = match pending_kind.take() {
                Some((pair, k)) if pair == (i, j) => k,
                _ => infer_kind(from, to),
            };
            let e = Edge {
                from,
                to,
                z,
                info,
                kind,
            };
            g.add_edge(e)?;
        } else {
            return Err(IoError::Parse {
                line,
                msg: format!("unknown record type `{tag}`"),
            });
        }
    }
    g.validate_chains()?;
    Ok(g)
}

/// Smallest power of ten strictly greater than every frame id, but at least
/// the default offset.
pub fn encoding_offset<P: Pose>(g: &PoseGraph<P>) -> u64 {
    let max_frame = g.node_ids().map(|n| n.frame).max().unwrap_or(0) as u64;
    let mut offset = DEFAULT_SESSION_OFFSET;
    while offset <= max_frame {
        offset *= 10;
    }
    offset
}

/// Encoded vertex id under a given session offset.
pub fn encode_id(id: NodeId, offset: u64) -> u64 {
    encode(id, offset)
}

pub fn write_g2o<P: G2oPose>(g: &PoseGraph<P>) -> String {
    let offset = encoding_offset(g);
    let mut out = String::new();
    out.push_str(&format!("# SESSION_OFFSET {offset}\n"));
    for (id, pose) in g.nodes() {
        let fields = pose
            .cloned()
            .unwrap_or_else(P::identity)
            .pose_fields()
            .iter()
            .map(|v| fmt_num(*v))
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!(
            "{} {} {}\n",
            P::VERTEX_TAG,
            encode(id, offset),
            fields
        ));
    }
    for e in g.edges() {
        let (i, j) = (encode(e.from, offset), encode(e.to, offset));
        if e.kind == EdgeKind::Landmark && infer_kind(e.from, e.to) == EdgeKind::Odometry {
            out.push_str(&format!("# KIND {i} {j} LANDMARK\n"));
        }
        let mut fields: Vec<String> = e.z.pose_fields().iter().map(|v| fmt_num(*v)).collect();
        for r in 0..P::DOF {
            for c in r..P::DOF {
                fields.push(fmt_num(to_f64(e.info[(r, c)])));
            }
        }
        out.push_str(&format!(
            "{} {} {} {}\n",
            P::EDGE_TAG,
            i,
            j,
            fields.join(" ")
        ));
    }
    out
}

pub fn read_labels(text: &str) -> Result<LabelSidecar, IoError> {
    let offset = scan_session_offset(text)?;
    let mut sidecar = LabelSidecar::default();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts[0] != "EDGE_LABEL" || parts.len() != 4 {
            return Err(IoError::Parse {
                line,
                msg: "expected `EDGE_LABEL <i> <j> <0|1>`".into(),
            });
        }
        let i = parts[1].parse::<u64>().map_err(|_| IoError::Parse {
            line,
            msg: format!("bad id `{}`", parts[1]),
        })?;
        let j = parts[2].parse::<u64>().map_err(|_| IoError::Parse {
            line,
            msg: format!("bad id `{}`", parts[2]),
        })?;
        let label = match parts[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(IoError::Parse {
                    line,
                    msg: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        };
        sidecar.mark(decode(i, offset), decode(j, offset), label);
    }
    Ok(sidecar)
}

pub fn write_labels(sidecar: &LabelSidecar) -> String {
    let max_frame = sidecar
        .labels
        .keys()
        .flat_map(|(a, b)| [a.frame, b.frame])
        .max()
        .unwrap_or(0) as u64;
    let mut offset = DEFAULT_SESSION_OFFSET;
    while offset <= max_frame {
        offset *= 10;
    }
    let mut out = format!("# SESSION_OFFSET {offset}\n");
    for ((a, b), incorrect) in &sidecar.labels {
        out.push_str(&format!(
            "EDGE_LABEL {} {} {}\n",
            encode(*a, offset),
            encode(*b, offset),
            u8::from(*incorrect)
        ));
    }
    out
}

/// Sniff whether a g2o file is planar (2) or spatial (3).
pub fn detect_dim(text: &str) -> Option<u32> {
    for raw in text.lines() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let tag = t.split_whitespace().next()?;
        if tag.contains("SE3") {
            return Some(3);
        }
        if tag.contains("SE2") {
            return Some(2);
        }
    }
    None
}
