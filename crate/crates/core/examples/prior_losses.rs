//! Evaluates the kinematic-prior routing objectives on a short clip and
//! checks the analytic load-balancing gradient against finite differences.

use kvlr::field::{compute_stats, lift_all, normalize};
use kvlr::kinematics::{synth_trajectory, CameraModel, SynthKind, SynthParams, ToolGeometry};
use kvlr::priors::grad::{grad_check, kp_alb_at, kp_alb_grad, outer_params, GateFrame};
use kvlr::priors::{
    cp_loss, kp_alb_loss, physical_prior, src_loss, sub_stabilizer_loss, total_loss, CapacityPredictor, LossComponents,
    LossWeights, RoutingStats, SubRoutingStats,
};
use kvlr::rng::stream;
use kvlr::routing::{route_forward, timestep_embedding, tool_token_mask, CapacitySchedule, GateParams, RouterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ToolGeometry::default();
    let traj = synth_trajectory(SynthKind::GripperCycle, &SynthParams::default(), 6, 3, &geom.limits)?;
    let fields = lift_all(&traj, &geom, &CameraModel::square(32))?;
    let stats = compute_stats(&fields)?;

    let cfg = RouterConfig::default();
    let mut rng = stream(3, "example");
    let params = GateParams::random(cfg, &mut rng);
    let predictor = CapacityPredictor::random(cfg.token_dim, &mut rng);
    let t_embed = timestep_embedding(0.5, cfg.time_dim);

    let mut c = LossComponents::default();
    let (mut probs, mut tool) = (Vec::new(), Vec::new());
    let mut last = None;
    for f in &fields {
        let out = route_forward(
            &normalize(f, &stats),
            &params,
            &CapacitySchedule::default(),
            1.0,
            &t_embed,
        )?;
        let d = &out.decision;
        let prior = physical_prior(f, cfg.stride)?;
        c.kp_alb += kp_alb_loss(&RoutingStats::from_probs(&d.probs), &prior.pi) / fields.len() as f64;
        c.cp += cp_loss(&predictor.logits(&out.embedding.tokens), &d.mask)? / fields.len() as f64;
        let sub = SubRoutingStats::from_decision(d);
        c.sub += sub_stabilizer_loss(&sub.f, &sub.p) / fields.len() as f64;
        probs.push(predictor.probs(&out.embedding.tokens));
        tool.push(tool_token_mask(f, cfg.stride)?);
        last = Some((out, prior.pi));
    }
    c.src = src_loss(&probs, &tool)?;
    println!("{c:#?}");
    println!(
        "weighted auxiliary total: {:.6}",
        total_loss(&c, &LossWeights::default())?
    );

    let (out, pi) = last.expect("clip has frames");
    let frame = GateFrame {
        tokens: out.embedding.tokens.clone(),
        c_action: out.embedding.c_action.clone(),
        t_embed,
        tool: tool.last().cloned().unwrap_or_default(),
    };
    let (loss, g) = kp_alb_grad(&params, &frame, &pi);
    let err = grad_check(|x| kp_alb_at(&params, x, &frame, &pi), &outer_params(&params), &g, 1e-5)?;
    println!("KP-ALB on the last frame {loss:.6}, gradient max relative error {err:.2e}");
    Ok(())
}
