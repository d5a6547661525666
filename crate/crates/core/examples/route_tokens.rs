//! Routes one lifted frame through both gating tiers at three points of the
//! dense-to-sparse capacity schedule.

use kvlr::field::{compute_stats, lift_all, normalize};
use kvlr::kinematics::{synth_trajectory, CameraModel, SynthKind, SynthParams, ToolGeometry};
use kvlr::rng::stream;
use kvlr::routing::{route_forward, timestep_embedding, CapacitySchedule, GateParams, Modality, RouterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ToolGeometry::default();
    let traj = synth_trajectory(SynthKind::LinearTransport, &SynthParams::default(), 6, 1, &geom.limits)?;
    let fields = lift_all(&traj, &geom, &CameraModel::square(32))?;
    let stats = compute_stats(&fields)?;
    let field = normalize(&fields[3], &stats);

    let cfg = RouterConfig::default();
    let params = GateParams::kinematic_prior(cfg, &mut stream(1, "example"));
    let sched = CapacitySchedule::default();
    let t_embed = timestep_embedding(0.5, cfg.time_dim);

    for progress in [0.2, 0.575, 0.9] {
        let out = route_forward(&field, &params, &sched, progress, &t_embed)?;
        let d = &out.decision;
        let n = d.tokens() as f64;
        println!(
            "progress {progress}: {} tokens, sparsity {:.3}",
            d.tokens(),
            sched.sparsity(progress)
        );
        for m in Modality::ALL {
            let w = d.fusion.iter().map(|row| row[m.index()]).sum::<f64>() / n;
            let active = d.mask.iter().filter(|row| row[m.index()]).count();
            let mut subs = [0usize; 3];
            d.inner.iter().for_each(|row| subs[row[m.index()].sel.index()] += 1);
            println!(
                "  {:<4} mean weight {w:.3}  top-k hits {active:3}  fine/transport/skip {subs:?}",
                m.name()
            );
        }
    }
    Ok(())
}
