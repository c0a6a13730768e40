//! Property tests over the geometric core and the g2o interchange format.

use mcslam_core::geometry::{Pose, Pose2, Pose3};
use mcslam_core::graphio::{read_g2o, write_g2o};
use mcslam_core::posegraph::{Edge, NodeId, PoseGraph};
use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use proptest::prelude::*;

type P2 = Pose2<f64>;
type P3 = Pose3<f64>;

fn pose2_strategy() -> impl Strategy<Value = P2> {
    (-50.0..50.0f64, -50.0..50.0f64, -3.0..3.0f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
}

fn pose3_strategy() -> impl Strategy<Value = P3> {
    (
        -50.0..50.0f64,
        -50.0..50.0f64,
        -50.0..50.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        0.05..2.9f64,
    )
        .prop_map(|(x, y, z, ax, ay, az, angle)| {
            let axis = Vector3::new(ax, ay, az + 1.5); // never the zero vector
            let q = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            Pose3::new(Vector3::new(x, y, z), q)
        })
}

proptest! {
    #[test]
    fn se2_group_axioms(a in pose2_strategy(), b in pose2_strategy(), c in pose2_strategy()) {
        prop_assert!(a.compose(&b).compose(&c).is_close(&a.compose(&b.compose(&c)), 1e-12));
        prop_assert!(a.compose(&a.inverse()).is_close(&Pose2::identity(), 1e-12));
        prop_assert!(a.compose(&a.between(&b)).is_close(&b, 1e-12));
    }

    #[test]
    fn se2_log_exp_round_trip(p in pose2_strategy()) {
        prop_assert!(Pose2::exp_map(&p.log_map()).is_close(&p, 1e-9));
    }

    #[test]
    fn se3_group_axioms(a in pose3_strategy(), b in pose3_strategy(), c in pose3_strategy()) {
        prop_assert!(a.compose(&b).compose(&c).is_close(&a.compose(&b.compose(&c)), 1e-12));
        prop_assert!(a.compose(&a.inverse()).is_close(&Pose3::identity(), 1e-12));
    }

    #[test]
    fn se3_log_exp_round_trip(p in pose3_strategy()) {
        prop_assert!(Pose3::exp_map(&p.log_map()).is_close(&p, 1e-9));
    }
}

/// Arbitrary small two-session graph with valid odometry chains and a few
/// landmark edges, every node carrying a pose.
fn graph_strategy() -> impl Strategy<Value = PoseGraph<P2>> {
    let pose = (-10.0..10.0f64, -10.0..10.0f64, -3.0..3.0f64);
    (
        2u32..6,
        2u32..6,
        proptest::collection::vec(pose, 30),
        proptest::collection::vec((0u32..6, 0u32..6), 0..5),
    )
        .prop_map(|(f0, f1, poses, landmark_pairs)| {
            let mut g = PoseGraph::new();
            let mut k = 0;
            let mut next_pose = || {
                let (x, y, t) = poses[k % poses.len()];
                k += 1;
                Pose2::new(x, y, t)
            };
            for (s, frames) in [(0u32, f0), (1u32, f1)] {
                for f in 0..frames {
                    let p = next_pose();
                    g.add_node(NodeId::new(s, f), Some(p));
                }
                for f in 0..frames - 1 {
                    let z = next_pose();
                    g.add_edge(Edge::odometry(
                        NodeId::new(s, f),
                        NodeId::new(s, f + 1),
                        z,
                        DMatrix::identity(3, 3) * 2.0,
                    ))
                    .unwrap();
                }
            }
            for (a, b) in landmark_pairs {
                let from = NodeId::new(0, a % f0);
                let to = NodeId::new(1, b % f1);
                let z = next_pose();
                g.add_edge(Edge::landmark(from, to, z, DMatrix::identity(3, 3)))
                    .unwrap();
            }
            g
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn g2o_round_trip(g in graph_strategy()) {
        let text = write_g2o(&g);
        let back: PoseGraph<P2> = read_g2o(&text).unwrap();
        prop_assert_eq!(&back, &g);
        // a second write is byte-identical
        prop_assert_eq!(write_g2o(&back), text);
    }
}
