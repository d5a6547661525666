//! Scores token significance over a clip, partitions every frame into full,
//! light and reuse execution, picks refresh intervals and replays the plan
//! against the residual cache.

use kvlr::scheduler::{
    budget_loss, partition, refresh_interval, significance, simulate_execution, BudgetConfig, CostModel,
    RefreshSchedule, SignificanceInputs, SignificanceWeights,
};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = kvlr::rng::stream(5, "example");
    let (frames, tokens) = (12, 64);
    let cfg = BudgetConfig::default();

    // the tool idles for four frames, moves for four, then moves fast
    let per_frame: Vec<SignificanceInputs> = (0..frames)
        .map(|t| {
            let level = [0.05, 0.5, 1.0][t / 4];
            let mut draw = |scale: f64| (0..tokens).map(|_| scale * rng.random::<f64>()).collect::<Vec<_>>();
            SignificanceInputs {
                e_motion: draw(level),
                m_tool: draw(level),
                c_route: draw(0.2),
                q_fine: draw(level),
                p_skip: draw(1.0 - level),
            }
        })
        .collect();
    // normalization runs over the whole clip so quiet frames stay quiet
    let s = significance(&SignificanceInputs::concat(&per_frame), &SignificanceWeights::default())?;

    let mut plans = Vec::new();
    let mut intervals = Vec::new();
    for (t, chunk) in s.normalized.chunks(tokens).enumerate() {
        let mean = chunk.iter().sum::<f64>() / tokens as f64;
        plans.push(partition(chunk, &cfg));
        intervals.push(refresh_interval(mean, &cfg));
        println!(
            "frame {t:2}: mean significance {mean:.3}, refresh interval {}",
            intervals[t]
        );
    }

    let cost = CostModel::default();
    for (name, refresh) in [
        ("no refresh", RefreshSchedule::Disabled),
        ("fixed K", RefreshSchedule::Intervals(vec![cfg.k; frames])),
        ("adaptive", RefreshSchedule::Intervals(intervals.clone())),
    ] {
        let trace = simulate_execution(&plans, &refresh, &cost)?;
        let refreshes = trace.frames.iter().filter(|f| f.refresh).count();
        let oldest = trace.frames.iter().map(|f| f.max_age).max().unwrap_or(0);
        println!(
            "{name:>10}: cost ratio {:.4}, {refreshes} refreshes, oldest cache entry {oldest} frames",
            trace.cost_ratio()
        );
    }
    let b = budget_loss(&plans, &intervals, &cfg)?;
    println!(
        "rho_compute {:.3}, rho_refresh {:.3}, budget loss {:.4}",
        b.rho_compute, b.rho_refresh, b.loss
    );
    Ok(())
}
