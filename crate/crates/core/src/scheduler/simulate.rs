use serde::{Deserialize, Serialize};

use super::{ExecutionPlan, Mode, ScheduleError};

/// Abstract per-token costs of the three execution modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub full: f64,
    pub light: f64,
    pub reuse: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            full: 1.0,
            light: 0.4,
            reuse: 0.02,
        }
    }
}

impl CostModel {
    pub fn cost(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Full => self.full,
            Mode::Light => self.light,
            Mode::Reuse => self.reuse,
        }
    }
}

/// When the simulator forces every token back to full execution.
#[derive(Debug, Clone, PartialEq)]
pub enum RefreshSchedule {
    /// Never; the cache is assumed warm at the first frame.
    Disabled,
    /// Per-frame interval `r(t)`. A frame is refreshed when at least `r(t)`
    /// frames have passed since the previous refresh; the first frame is
    /// always refreshed.
    Intervals(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameTrace {
    pub frame: usize,
    pub n_full: usize,
    pub n_light: usize,
    pub n_reuse: usize,
    pub cost: f64,
    pub refresh: bool,
    /// Interval in force at this frame (0 when refresh is disabled).
    pub interval: usize,
    /// Oldest cached residual after this frame, in frames.
    pub max_age: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub frames: Vec<FrameTrace>,
    pub total_cost: f64,
    /// Cost of running every token full on every frame.
    pub full_cost: f64,
    /// `age_histogram[a]` counts token-frames whose cached residual was `a`
    /// frames old after the frame was processed.
    pub age_histogram: Vec<u64>,
}

impl ExecutionTrace {
    pub fn cost_ratio(&self) -> f64 {
        if self.full_cost > 0.0 {
            self.total_cost / self.full_cost
        } else {
            0.0
        }
    }
}

/// Replays plans against a per-token residual cache.
///
/// Full and light tokens recompute their residual and write it to the cache;
/// reuse tokens read it and let it age by one frame.
pub fn simulate_execution(
    plans: &[ExecutionPlan],
    refresh: &RefreshSchedule,
    cost: &CostModel,
) -> Result<ExecutionTrace, ScheduleError> {
    let n = plans.first().map_or(0, ExecutionPlan::len);
    if plans.iter().any(|p| p.len() != n) {
        return Err(ScheduleError::InconsistentPlan(
            "token count changes between frames".into(),
        ));
    }
    if let RefreshSchedule::Intervals(r) = refresh {
        if r.len() != plans.len() {
            return Err(ScheduleError::InconsistentPlan(format!(
                "{} plans vs {} refresh intervals",
                plans.len(),
                r.len()
            )));
        }
        if r.contains(&0) {
            return Err(ScheduleError::InconsistentPlan("refresh interval 0".into()));
        }
    }

    let mut age = vec![0usize; n];
    let mut hist: Vec<u64> = Vec::new();
    let mut frames = Vec::with_capacity(plans.len());
    let mut since_refresh: Option<usize> = None;
    let mut total = 0.0;

    for (t, plan) in plans.iter().enumerate() {
        let (forced, interval) = match refresh {
            RefreshSchedule::Disabled => (false, 0),
            RefreshSchedule::Intervals(r) => (since_refresh.is_none_or(|s| s >= r[t]), r[t]),
        };
        let mut counts = [0usize; 3];
        let mut frame_cost = 0.0;
        for (u, &planned) in plan.modes.iter().enumerate() {
            let mode = if forced { Mode::Full } else { planned };
            frame_cost += cost.cost(mode);
            match mode {
                Mode::Full => {
                    counts[0] += 1;
                    age[u] = 0;
                }
                Mode::Light => {
                    counts[1] += 1;
                    age[u] = 0;
                }
                Mode::Reuse => {
                    counts[2] += 1;
                    age[u] += 1;
                }
            }
            if hist.len() <= age[u] {
                hist.resize(age[u] + 1, 0);
            }
            hist[age[u]] += 1;
        }
        since_refresh = if forced { Some(1) } else { since_refresh.map(|s| s + 1) };
        total += frame_cost;
        frames.push(FrameTrace {
            frame: t,
            n_full: counts[0],
            n_light: counts[1],
            n_reuse: counts[2],
            cost: frame_cost,
            refresh: forced,
            interval,
            max_age: age.iter().copied().max().unwrap_or(0),
        });
    }
    Ok(ExecutionTrace {
        frames,
        total_cost: total,
        full_cost: (plans.len() * n) as f64 * cost.full,
        age_histogram: hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{partition, BudgetConfig};

    #[test]
    fn all_full_costs_one_per_token() {
        let plans = vec![ExecutionPlan::uniform(Mode::Full, 7); 5];
        let tr = simulate_execution(&plans, &RefreshSchedule::Disabled, &CostModel::default()).unwrap();
        assert_eq!(tr.total_cost, 35.0);
        assert_eq!(tr.cost_ratio(), 1.0);
    }

    #[test]
    fn refresh_every_frame_overrides_reuse() {
        let plans = vec![ExecutionPlan::uniform(Mode::Reuse, 4); 6];
        let tr = simulate_execution(&plans, &RefreshSchedule::Intervals(vec![1; 6]), &CostModel::default()).unwrap();
        assert_eq!(tr.total_cost, 24.0);
        assert!(tr.frames.iter().all(|f| f.refresh && f.n_full == 4));
    }

    #[test]
    fn default_split_costs_a_third() {
        let s: Vec<f64> = (0..10).map(f64::from).collect();
        let plans = vec![partition(&s, &BudgetConfig::default()); 3];
        let tr = simulate_execution(&plans, &RefreshSchedule::Disabled, &CostModel::default()).unwrap();
        for f in &tr.frames {
            assert!((f.cost / 10.0 - 0.33).abs() < 1e-12);
        }
        assert!((tr.cost_ratio() - 0.33).abs() < 1e-12);
    }

    #[test]
    fn constant_interval_refreshes_on_multiples() {
        let plans = vec![ExecutionPlan::uniform(Mode::Reuse, 2); 9];
        let tr = simulate_execution(&plans, &RefreshSchedule::Intervals(vec![4; 9]), &CostModel::default()).unwrap();
        let refreshed: Vec<usize> = tr.frames.iter().filter(|f| f.refresh).map(|f| f.frame).collect();
        assert_eq!(refreshed, vec![0, 4, 8]);
        assert!(tr.frames.iter().all(|f| f.max_age < 4));
        assert_eq!(tr.age_histogram, vec![6, 4, 4, 4]);
    }

    #[test]
    fn inconsistent_inputs_rejected() {
        let plans = vec![
            ExecutionPlan::uniform(Mode::Full, 2),
            ExecutionPlan::uniform(Mode::Full, 3),
        ];
        assert!(simulate_execution(&plans, &RefreshSchedule::Disabled, &CostModel::default()).is_err());
        let plans = vec![ExecutionPlan::uniform(Mode::Full, 2); 2];
        assert!(simulate_execution(&plans, &RefreshSchedule::Intervals(vec![1]), &CostModel::default()).is_err());
    }
}
