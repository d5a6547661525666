//! Synthesizes a composite tool trajectory, lifts every frame to a 9-channel
//! action field and prints per-frame channel summaries.

use kvlr::field::{channel, lift_all};
use kvlr::kinematics::{forward_kinematics, synth_trajectory, CameraModel, Part, SynthKind, SynthParams, ToolGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ToolGeometry::default();
    let cam = CameraModel::square(64);
    let traj = synth_trajectory(SynthKind::Composite, &SynthParams::default(), 8, 42, &geom.limits)?;

    let poses = forward_kinematics(&traj.states()[0], &geom)?;
    for part in Part::ALL {
        let c = poses.capsule(part);
        println!(
            "{part:?}: a = {:.4?}, b = {:.4?}, r = {}",
            c.a.coords.as_slice(),
            c.b.coords.as_slice(),
            c.radius
        );
    }

    println!("\nframe  tool_px  mean_depth  max_speed  max_accel");
    for f in lift_all(&traj, &geom, &cam)? {
        let tool: Vec<usize> = (0..f.pixels()).filter(|&i| f.is_tool(i)).collect();
        let depth = tool.iter().map(|&i| f.pixel(i)[channel::DEPTH]).sum::<f64>() / tool.len().max(1) as f64;
        let speed = |i: usize| {
            f.pixel(i)[channel::VEL_X..=channel::VEL_Z]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        };
        let max_speed = tool.iter().map(|&i| speed(i)).fold(0.0, f64::max);
        let max_accel = f.channel(channel::ACCEL).into_iter().fold(0.0, f64::max);
        println!(
            "{:5}  {:7}  {depth:10.4}  {max_speed:9.3}  {max_accel:9.3}",
            f.frame(),
            tool.len()
        );
    }
    Ok(())
}
