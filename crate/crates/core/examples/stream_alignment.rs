//! Two sensors capture at the same rate but with shifted clocks. Sampling
//! both streams at common fusion ticks interpolates each skeleton in time.

use skelfuse::pipeline::{fusion_ticks, Session};
use skelfuse::simulator::{generate_session, presets};
use skelfuse::skeleton::{JointId, DEFAULT_HOLD_US};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut scene = presets::occlusion_scene(2);
    scene.session.duration_s = 1.5;
    generate_session(&scene, dir.path())?;
    let session = Session::load(dir.path())?;

    for s in &session.streams {
        let ts: Vec<i64> = s.frames().iter().take(3).map(|f| f.timestamp_us).collect();
        println!("{} captures at {:?} ...", s.sensor_id(), ts);
    }
    for t in fusion_ticks(&session, 30.0).into_iter().skip(24).take(4) {
        print!("tick {t:>7} us:");
        for s in &session.streams {
            let f = s.sample(t, DEFAULT_HOLD_US);
            match f.skeletons().first().and_then(|b| b.joint(JointId::Pelvis)) {
                Some(p) => print!("  {} pelvis {:.3?}", s.sensor_id(), p.position.as_slice()),
                None => print!("  {} sees nobody", s.sensor_id()),
            }
        }
        println!();
    }
    Ok(())
}
