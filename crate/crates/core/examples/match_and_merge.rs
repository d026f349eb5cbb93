//! Matching and merging on a hand-made frame: two people seen by both
//! sensors, one seen only by the second, and a low-confidence joint.

use skelfuse::geometry::Vec3;
use skelfuse::matching::{fuse_match_history, match_skeletons, MatchConfig, MatchHistory};
use skelfuse::merging::{fuse_frame, FusedPerson, WeightTable};
use skelfuse::skeleton::{Axes, Confidence, Joint, JointId, Skeleton};

fn person(body_id: u32, x: f64, y: f64, hand: Confidence) -> Skeleton {
    let at = |dx: f64, dz: f64| Vec3::new(x + dx, y, 0.93 + dz);
    Skeleton::new(
        body_id,
        vec![
            Joint::new(JointId::Pelvis, at(0.0, 0.0), Axes::identity(), Confidence::High),
            Joint::new(JointId::Head, at(0.02, 0.7), Axes::identity(), Confidence::High),
            Joint::new(JointId::HandR, at(0.3, 0.2), Axes::identity(), hand),
        ],
    )
    .expect("pelvis present")
}

fn main() {
    let a = vec![person(1, 0.0, 0.0, Confidence::High), person(2, 1.2, 0.1, Confidence::Low)];
    let b = vec![
        person(7, 1.25, 0.05, Confidence::High),
        person(8, 0.04, -0.03, Confidence::Medium),
        person(9, -1.5, 2.0, Confidence::High),
    ];

    let cfg = MatchConfig::default();
    let outcome = match_skeletons(&a, &b, &cfg, &MatchHistory::new());
    for p in &outcome.pairs {
        println!("pair A{} <-> B{} at {:.3} m", p.body_a, p.body_b, p.distance);
    }
    println!("isolated in B: {:?}", outcome.isolated_b.iter().map(|&j| b[j].body_id).collect::<Vec<_>>());
    println!("history for the next frame: {:?}", fuse_match_history(&outcome).pairs().collect::<Vec<_>>());

    let side_a: Vec<_> = a.into_iter().map(|s| FusedPerson::observed("kinect_a", s)).collect();
    let side_b: Vec<_> = b.into_iter().map(|s| FusedPerson::observed("kinect_b", s)).collect();
    let fused = fuse_frame(&side_a, &side_b, &outcome, 0, &WeightTable::default());
    for p in &fused.persons {
        let hand = p.skeleton.joint(JointId::HandR).expect("hand present");
        println!(
            "fused {:>2}: pelvis {:.3?}, right hand {:.3?} ({:?}), from {:?}",
            p.skeleton.body_id,
            p.skeleton.pelvis().position.as_slice(),
            hand.position.as_slice(),
            hand.confidence,
            p.provenance.sources().iter().map(|s| format!("{}#{}", s.sensor_id, s.body_id)).collect::<Vec<_>>()
        );
    }
}
