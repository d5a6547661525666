//! Action-adaptive execution: per-token significance, budgeted
//! full/light/reuse partitioning, refresh intervals, the budget and temporal
//! objectives, distillation losses and a cache-simulating executor.

mod distill;
mod simulate;

pub use distill::{distill_grad, distill_loss, DistillBundle, DistillTerms, StudentLogits, PROB_FLOOR};
pub use simulate::{simulate_execution, CostModel, ExecutionTrace, FrameTrace, RefreshSchedule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{channel, KvaField};
use crate::routing::{avg_pool, RoutingDecision, RoutingError, SubExpert};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("inconsistent plan: {0}")]
    InconsistentPlan(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignificanceWeights {
    pub w_m: f64,
    pub w_t: f64,
    pub w_r: f64,
    pub w_f: f64,
    pub w_s: f64,
}

impl Default for SignificanceWeights {
    fn default() -> Self {
        Self {
            w_m: 1.0,
            w_t: 1.0,
            w_r: 1.0,
            w_f: 1.0,
            w_s: 1.0,
        }
    }
}

impl SignificanceWeights {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if [self.w_m, self.w_t, self.w_r, self.w_f, self.w_s]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(ScheduleError::InvalidConfig(
                "significance weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-token significance inputs of one sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignificanceInputs {
    pub e_motion: Vec<f64>,
    pub m_tool: Vec<f64>,
    pub c_route: Vec<f64>,
    pub q_fine: Vec<f64>,
    pub p_skip: Vec<f64>,
}

impl SignificanceInputs {
    pub fn len(&self) -> usize {
        self.e_motion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_motion.is_empty()
    }

    fn check(&self) -> Result<(), ScheduleError> {
        let n = self.len();
        let maps = [&self.m_tool, &self.c_route, &self.q_fine, &self.p_skip];
        if maps.iter().any(|m| m.len() != n) {
            return Err(ScheduleError::ShapeMismatch(
                "significance maps differ in length".into(),
            ));
        }
        Ok(())
    }

    /// Concatenates several frames into one sample.
    pub fn concat(parts: &[SignificanceInputs]) -> Self {
        let mut out = Self::default();
        for p in parts {
            out.e_motion.extend(&p.e_motion);
            out.m_tool.extend(&p.m_tool);
            out.c_route.extend(&p.c_route);
            out.q_fine.extend(&p.q_fine);
            out.p_skip.extend(&p.p_skip);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Significance {
    pub raw: Vec<f64>,
    /// Min-max normalized over the sample; 0.5 everywhere when constant.
    pub normalized: Vec<f64>,
}

pub fn significance(x: &SignificanceInputs, w: &SignificanceWeights) -> Result<Significance, ScheduleError> {
    x.check()?;
    let raw: Vec<f64> = (0..x.len())
        .map(|u| {
            w.w_m * x.e_motion[u] + w.w_t * x.m_tool[u] + w.w_r * x.c_route[u] + w.w_f * x.q_fine[u]
                - w.w_s * x.p_skip[u]
        })
        .collect();
    let normalized = min_max(&raw);
    Ok(Significance { raw, normalized })
}

pub fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; v.len()];
    }
    v.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

/// Builds per-frame significance inputs from raw (unnormalized) fields and
/// the routing decision of each frame.
///
/// Motion energy is `|v|` and `alpha` averaged per token, each divided by its
/// maximum over the clip and then averaged; a clip without motion has zero
/// energy. Tool presence is the pooled semantic occupancy. Routing confidence
/// is the largest fusion weight; `q_fine` and `p_skip` are the fusion-weighted
/// Tier-2 probabilities.
pub fn significance_inputs(
    fields: &[KvaField],
    decisions: &[RoutingDecision],
    stride: usize,
) -> Result<Vec<SignificanceInputs>, ScheduleError> {
    if fields.len() != decisions.len() {
        return Err(ScheduleError::ShapeMismatch(format!(
            "{} fields vs {} routing decisions",
            fields.len(),
            decisions.len()
        )));
    }
    let mut speed = Vec::with_capacity(fields.len());
    let mut accel = Vec::with_capacity(fields.len());
    let mut tool = Vec::with_capacity(fields.len());
    for (f, d) in fields.iter().zip(decisions) {
        let pooled = avg_pool(f, stride)?;
        if pooled.len() != d.tokens() {
            return Err(ScheduleError::ShapeMismatch(format!(
                "{} pooled tokens vs {} routed tokens",
                pooled.len(),
                d.tokens()
            )));
        }
        // Per-pixel speed pooled, so opposite velocities do not cancel.
        let mut s = vec![0.0; pooled.len()];
        let gw = pooled.width;
        let inv = 1.0 / (stride * stride) as f64;
        for y in 0..f.height() {
            for x in 0..f.width() {
                let px = f.pixel(y * f.width() + x);
                let v = &px[channel::VEL_X..=channel::VEL_Z];
                s[(y / stride) * gw + x / stride] += inv * v.iter().map(|c| c * c).sum::<f64>().sqrt();
            }
        }
        speed.push(s);
        accel.push(
            (0..pooled.len())
                .map(|u| pooled.token(u)[channel::ACCEL].abs())
                .collect::<Vec<_>>(),
        );
        tool.push(
            (0..pooled.len())
                .map(|u| {
                    pooled.token(u)[channel::SEM_SHAFT..=channel::SEM_GRIPPER]
                        .iter()
                        .sum::<f64>()
                        .min(1.0)
                })
                .collect::<Vec<_>>(),
        );
    }
    let max_of = |v: &Vec<Vec<f64>>| v.iter().flatten().copied().fold(0.0, f64::max);
    let (vmax, amax) = (max_of(&speed), max_of(&accel));
    let scaled = |x: f64, m: f64| if m > 0.0 { x / m } else { 0.0 };

    Ok(decisions
        .iter()
        .enumerate()
        .map(|(t, d)| {
            let n = d.tokens();
            let mut x = SignificanceInputs {
                e_motion: (0..n)
                    .map(|u| 0.5 * (scaled(speed[t][u], vmax) + scaled(accel[t][u], amax)))
                    .collect(),
                m_tool: tool[t].clone(),
                c_route: d.fusion.iter().map(|w| w.iter().copied().fold(0.0, f64::max)).collect(),
                q_fine: Vec::with_capacity(n),
                p_skip: Vec::with_capacity(n),
            };
            for (w, inner) in d.fusion.iter().zip(&d.inner) {
                let mix = |s: SubExpert| w.iter().zip(inner).map(|(wm, c)| wm * c.probs[s.index()]).sum::<f64>();
                x.q_fine.push(mix(SubExpert::Fine));
                x.p_skip.push(mix(SubExpert::Skip));
            }
            x
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Full,
    Light,
    Reuse,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Light => "light",
            Mode::Reuse => "reuse",
        }
    }
}

/// Budget, refresh and objective settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    pub rho_full: f64,
    pub rho_light: f64,
    /// Compute accounting weights of full, light and the refresh term.
    pub w_f: f64,
    pub w_l: f64,
    pub w_r: f64,
    pub rho_target: f64,
    pub rho_refresh_star: f64,
    pub tau_h: f64,
    pub tau_m: f64,
    /// Slow refresh interval.
    pub k: usize,
    pub lambda_b: f64,
    pub lambda_t: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            rho_full: 0.2,
            rho_light: 0.3,
            w_f: 1.0,
            w_l: 0.5,
            w_r: 1.0,
            rho_target: 0.35,
            rho_refresh_star: 0.25,
            tau_h: 0.6,
            tau_m: 0.3,
            k: 4,
            lambda_b: 0.5,
            lambda_t: 0.35,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let unit = [self.rho_full, self.rho_light, self.rho_target, self.rho_refresh_star];
        if unit.iter().any(|v| !(0.0..=1.0).contains(v)) || self.rho_full + self.rho_light > 1.0 {
            return Err(ScheduleError::InvalidConfig(
                "budget ratios and targets must lie in [0, 1]".into(),
            ));
        }
        if !(self.tau_m < self.tau_h) || self.k == 0 {
            return Err(ScheduleError::InvalidConfig("need tau_m < tau_h and k >= 1".into()));
        }
        let weights = [self.w_f, self.w_l, self.w_r, self.lambda_b, self.lambda_t];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ScheduleError::InvalidConfig(
                "budget weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Execution modes of one frame's tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub modes: Vec<Mode>,
}

impl ExecutionPlan {
    pub fn uniform(mode: Mode, n: usize) -> Self {
        Self { modes: vec![mode; n] }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn count(&self, mode: Mode) -> usize {
        self.modes.iter().filter(|&&m| m == mode).count()
    }

    pub fn rho(&self, mode: Mode) -> f64 {
        self.count(mode) as f64 / self.len().max(1) as f64
    }
}

/// Top `round(rho_full N)` tokens run full, the next `round(rho_light N)` run
/// light, the rest reuse. Equal scores keep row-major order.
pub fn partition(s: &[f64], cfg: &BudgetConfig) -> ExecutionPlan {
    let n = s.len();
    let n_full = ((cfg.rho_full * n as f64).round() as usize).min(n);
    let n_light = ((cfg.rho_light * n as f64).round() as usize).min(n - n_full);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut modes = vec![Mode::Reuse; n];
    for (rank, &u) in order.iter().enumerate() {
        if rank < n_full {
            modes[u] = Mode::Full;
        } else if rank < n_full + n_light {
            modes[u] = Mode::Light;
        }
    }
    ExecutionPlan { modes }
}

pub fn refresh_interval(mean_significance: f64, cfg: &BudgetConfig) -> usize {
    if mean_significance >= cfg.tau_h {
        1
    } else if mean_significance >= cfg.tau_m {
        2
    } else {
        cfg.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub rho_compute: f64,
    pub rho_refresh: f64,
    pub loss: f64,
}

/// `|rho_compute - rho_target| + w_r |rho_refresh - rho*|`, with the compute
/// ratio averaged over frames and `rho_refresh` the fraction of frames with
/// interval 1.
pub fn budget_loss(
    plans: &[ExecutionPlan],
    refresh: &[usize],
    cfg: &BudgetConfig,
) -> Result<BudgetReport, ScheduleError> {
    if plans.is_empty() || plans.len() != refresh.len() {
        return Err(ScheduleError::InconsistentPlan(format!(
            "{} plans vs {} refresh intervals",
            plans.len(),
            refresh.len()
        )));
    }
    let t = plans.len() as f64;
    let rho_compute = plans
        .iter()
        .map(|p| cfg.w_f * p.rho(Mode::Full) + cfg.w_l * p.rho(Mode::Light))
        .sum::<f64>()
        / t;
    let rho_refresh = refresh.iter().filter(|&&r| r == 1).count() as f64 / t;
    let loss = (rho_compute - cfg.rho_target).abs() + cfg.w_r * (rho_refresh - cfg.rho_refresh_star).abs();
    Ok(BudgetReport {
        rho_compute,
        rho_refresh,
        loss,
    })
}

/// Mean squared frame-to-frame change of features at tokens that frame `t`
/// runs light or reuse. `features[t]` is `N x C` row-major.
pub fn temporal_loss(features: &[Vec<f64>], plans: &[ExecutionPlan], dim: usize) -> Result<f64, ScheduleError> {
    if features.len() != plans.len() {
        return Err(ScheduleError::ShapeMismatch(format!(
            "{} feature frames vs {} plans",
            features.len(),
            plans.len()
        )));
    }
    if features.len() < 2 {
        return Ok(0.0);
    }
    if dim == 0 || features.iter().zip(plans).any(|(f, p)| f.len() != p.len() * dim) {
        return Err(ScheduleError::ShapeMismatch("feature size is not tokens x dim".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 1..features.len() {
        for (u, mode) in plans[t].modes.iter().enumerate() {
            if *mode == Mode::Full {
                continue;
            }
            let cur = &features[t][u * dim..(u + 1) * dim];
            let prev = &features[t - 1][u * dim..(u + 1) * dim];
            sum += cur.iter().zip(prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / (count * dim) as f64 })
}
