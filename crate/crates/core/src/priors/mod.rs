//! Kinematic-prior objectives for the routing pathway.
//!
//! * KP-ALB aligns the realized expert load `f_i * mean(P_i)` with the
//!   physical energy distribution of the field.
//! * SRC penalizes frame-to-frame routing changes on tool tokens.
//! * CP trains a capacity predictor against the router's top-k mask; its
//!   per-expert thresholds track EMA quantiles ([`PredictorState`]).
//! * The sub-expert stabilizer discourages Tier-2 collapse.
//! * The flow-matching term is the generation objective.
//!
//! Analytic gradients for the small linear parameter sets involved, and a
//! central-difference checker, live in [`grad`].

pub mod grad;
mod threshold;

pub use threshold::{quantile, update_thresholds, CapacityPredictor, PredictorState, QUANTILE_CLAMP};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::KvaField;
use crate::routing::{avg_pool, Modality, RoutingDecision, RoutingError, NUM_EXPERTS, NUM_SUB};

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("quantile update needs at least one probability")]
    EmptyProbs,
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
}

/// Realized Tier-1 routing statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingStats {
    /// Fraction of tokens whose top-ranked expert is `i`.
    pub f: [f64; NUM_EXPERTS],
    /// Mean soft probability of expert `i`.
    pub p_mean: [f64; NUM_EXPERTS],
}

impl RoutingStats {
    pub fn from_probs(probs: &[[f64; NUM_EXPERTS]]) -> Self {
        let n = probs.len().max(1) as f64;
        let mut f = [0.0; NUM_EXPERTS];
        let mut p_mean = [0.0; NUM_EXPERTS];
        for p in probs {
            f[top1(p)] += 1.0 / n;
            for (m, v) in p_mean.iter_mut().zip(p) {
                *m += v / n;
            }
        }
        Self { f, p_mean }
    }

    /// `l_i = f_i * mean(P_i)`.
    pub fn load(&self) -> [f64; NUM_EXPERTS] {
        std::array::from_fn(|i| self.f[i] * self.p_mean[i])
    }
}

pub(crate) fn top1(p: &[f64; NUM_EXPERTS]) -> usize {
    let mut best = 0;
    for i in 1..NUM_EXPERTS {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// Target routing mass derived from the field's physical content.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPrior {
    pub pi: [f64; NUM_EXPERTS],
    /// Per-token modality energies at the routing resolution.
    pub energies: Vec<[f64; NUM_EXPERTS]>,
}

/// Modality energies `[|sem|_2, |dep|, |rot|, |vel|_2, |acc|]` per pooled
/// token, and `pi_i = E_i / sum_j E_j` with `E` the token means. A field with
/// no energy at all falls back to the uniform prior.
pub fn physical_prior(field: &KvaField, stride: usize) -> Result<PhysicalPrior, PriorError> {
    let pooled = avg_pool(field, stride)?;
    let energies: Vec<[f64; NUM_EXPERTS]> = (0..pooled.len())
        .map(|i| {
            let t = pooled.token(i);
            Modality::ALL.map(|m| t[m.channels()].iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .collect();
    let n = energies.len().max(1) as f64;
    let mut e = [0.0; NUM_EXPERTS];
    for row in &energies {
        for (a, v) in e.iter_mut().zip(row) {
            *a += v / n;
        }
    }
    let total: f64 = e.iter().sum();
    let pi = if total > 0.0 {
        e.map(|v| v / total)
    } else {
        [1.0 / NUM_EXPERTS as f64; NUM_EXPERTS]
    };
    Ok(PhysicalPrior { pi, energies })
}

/// `(1/5) * sum_i (l_i - pi_i)^2`; `pi` is a constant target.
pub fn kp_alb_loss(stats: &RoutingStats, pi: &[f64; NUM_EXPERTS]) -> f64 {
    let load = stats.load();
    load.iter().zip(pi).map(|(l, p)| (l - p) * (l - p)).sum::<f64>() / NUM_EXPERTS as f64
}

/// Masked temporal routing consistency.
///
/// `probs[t][u]` are routing probabilities of frame `t`, `mask[t][u]` marks
/// tool tokens. The squared change between consecutive frames is summed over
/// tokens that are tool-present in the later frame and normalized by
/// `5 * (number of such tokens)`. Zero for single-frame clips or empty masks.
pub fn src_loss(probs: &[Vec<[f64; NUM_EXPERTS]>], mask: &[Vec<bool>]) -> Result<f64, PriorError> {
    check_sequence(probs, mask)?;
    let mut num = 0.0;
    let mut count = 0usize;
    for t in 1..probs.len() {
        for (u, &on) in mask[t].iter().enumerate() {
            if on {
                num += probs[t][u]
                    .iter()
                    .zip(&probs[t - 1][u])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                count += 1;
            }
        }
    }
    Ok(if count == 0 {
        0.0
    } else {
        num / (NUM_EXPERTS * count) as f64
    })
}

pub(crate) fn check_sequence<T>(probs: &[Vec<T>], mask: &[Vec<bool>]) -> Result<(), PriorError> {
    if probs.len() != mask.len() {
        return Err(PriorError::ShapeMismatch(format!(
            "{} probability frames vs {} mask frames",
            probs.len(),
            mask.len()
        )));
    }
    let n = probs.first().map_or(0, Vec::len);
    if probs.iter().any(|p| p.len() != n) || mask.iter().any(|m| m.len() != n) {
        return Err(PriorError::ShapeMismatch("token counts differ between frames".into()));
    }
    Ok(())
}

/// Binary cross-entropy with logits, `max(z,0) - z*a + ln(1 + e^-|z|)`.
pub fn bce_with_logits(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean BCE of predictor logits against the (detached) routing mask.
pub fn cp_loss(logits: &[[f64; NUM_EXPERTS]], mask: &[[bool; NUM_EXPERTS]]) -> Result<f64, PriorError> {
    if logits.len() != mask.len() {
        return Err(PriorError::ShapeMismatch(format!(
            "{} logit rows vs {} mask rows",
            logits.len(),
            mask.len()
        )));
    }
    let n = (logits.len() * NUM_EXPERTS).max(1) as f64;
    let total: f64 = logits
        .iter()
        .zip(mask)
        .flat_map(|(z, a)| {
            z.iter()
                .zip(a)
                .map(|(&z, &a)| bce_with_logits(z, f64::from(u8::from(a))))
        })
        .sum();
    Ok(total / n)
}

/// Hard fractions and mean soft probabilities of the Tier-2 sub-experts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubRoutingStats {
    pub f: [[f64; NUM_SUB]; NUM_EXPERTS],
    pub p: [[f64; NUM_SUB]; NUM_EXPERTS],
}

impl SubRoutingStats {
    pub fn from_decision(d: &RoutingDecision) -> Self {
        let n = d.tokens().max(1) as f64;
        let mut f = [[0.0; NUM_SUB]; NUM_EXPERTS];
        let mut p = [[0.0; NUM_SUB]; NUM_EXPERTS];
        for row in &d.inner {
            for (m, choice) in row.iter().enumerate() {
                f[m][choice.sel.index()] += 1.0 / n;
                for s in 0..NUM_SUB {
                    p[m][s] += choice.probs[s] / n;
                }
            }
        }
        Self { f, p }
    }
}

/// `(1/5) * sum_m 3 * sum_s f_ms * p_ms`.
pub fn sub_stabilizer_loss(f: &[[f64; NUM_SUB]; NUM_EXPERTS], p: &[[f64; NUM_SUB]; NUM_EXPERTS]) -> f64 {
    let sum: f64 = f
        .iter()
        .zip(p)
        .map(|(fr, pr)| NUM_SUB as f64 * fr.iter().zip(pr).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    sum / NUM_EXPERTS as f64
}

/// Flow-matching velocity target `(1 - sigma_min) x1 - x0`.
pub fn flow_target(x0: &[f64], x1: &[f64], sigma_min: f64) -> Vec<f64> {
    x0.iter().zip(x1).map(|(a, b)| (1.0 - sigma_min) * b - a).collect()
}

/// Mean squared error between `pred` and the flow-matching target.
pub fn flow_matching_loss(pred: &[f64], x0: &[f64], x1: &[f64], sigma_min: f64) -> Result<f64, PriorError> {
    if pred.len() != x0.len() || x0.len() != x1.len() {
        return Err(PriorError::ShapeMismatch(format!(
            "pred {}, x0 {}, x1 {}",
            pred.len(),
            x0.len(),
            x1.len()
        )));
    }
    let target = flow_target(x0, x1, sigma_min);
    let n = pred.len().max(1) as f64;
    Ok(pred.iter().zip(&target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

/// Weights of the auxiliary routing objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub kp: f64,
    pub src: f64,
    pub cp: f64,
    pub sub: f64,
    pub sigma_min: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kp: 0.01,
            src: 0.005,
            cp: 0.01,
            sub: 0.005,
            sigma_min: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), PriorError> {
        let all = [self.kp, self.src, self.cp, self.sub, self.sigma_min];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PriorError::InvalidValue(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub flow: f64,
    pub kp_alb: f64,
    pub src: f64,
    pub cp: f64,
    pub sub: f64,
}

/// `flow + kp*KP-ALB + src*SRC + cp*CP + sub*L_sub`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64, PriorError> {
    let parts = [c.flow, c.kp_alb, c.src, c.cp, c.sub];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(PriorError::InvalidValue("loss component is not finite".into()));
    }
    Ok(c.flow + w.kp * c.kp_alb + w.src * c.src + w.cp * c.cp + w.sub * c.sub)
}
