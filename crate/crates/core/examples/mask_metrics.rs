//! Scores a jittered prediction against the projected action tube of a
//! moving tool.

use kvlr::kinematics::{forward_kinematics, synth_trajectory, CameraModel, SynthKind, SynthParams, ToolGeometry};
use kvlr::metrics::{evaluate, tube_mask, MaskFrame, DEFAULT_TUBE_HALF_WIDTH};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ToolGeometry::default();
    let cam = CameraModel::square(64);
    let traj = synth_trajectory(
        SynthKind::WristArticulation,
        &SynthParams::default(),
        10,
        9,
        &geom.limits,
    )?;

    let mut target = Vec::new();
    let mut pred = Vec::new();
    for (t, s) in traj.states().iter().enumerate() {
        let tube = tube_mask(&forward_kinematics(s, &geom)?, &cam, DEFAULT_TUBE_HALF_WIDTH)?;
        // the prediction lags a pixel to the right on odd frames
        let shift = (t % 2) as isize;
        let moved = tube.union().translated(0, shift);
        pred.push(MaskFrame::new(
            cam.height,
            cam.width,
            moved.data.iter().map(|&b| u8::from(b)).collect(),
        )?);
        target.push(tube);
    }

    let report = evaluate(&pred, &target)?;
    println!("frame      cd      ti      af    dice");
    for f in &report.frames {
        let show = |v: Option<f64>| v.map_or("      -".into(), |v| format!("{v:7.3}"));
        println!(
            "{:5} {} {} {} {}",
            f.frame,
            show(f.cd),
            show(f.ti),
            show(f.af),
            show(f.dice)
        );
    }
    println!("mean CD {:?}, mean Dice {:?}", report.cd.mean, report.dice.mean);
    Ok(())
}
