use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Modality, RouterConfig, RoutingError, NUM_EXPERTS, NUM_SUB};
use crate::field::CHANNELS;
use crate::linear::Linear;

/// Operators of one modality expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityExpert {
    /// Lifts the modality's pooled channels to the token width.
    pub lift: Linear,
    /// Fine sub-expert: per-token linear map.
    pub fine: Linear,
    /// Transport sub-expert: per-token linear map plus the global mean.
    pub transport: Linear,
    /// Inner gate over the lifted token.
    pub inner: Linear,
    /// Inner-gate coefficients on the token's contrast, i.e. the distance of
    /// its pooled modality channels from their frame-wide mean.
    pub contrast: [f64; NUM_SUB],
}

/// All routing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub config: RouterConfig,
    /// Shared action module: pooled 9 channels to `token_dim`.
    pub action: Linear,
    /// Global outer gate over `[c_action ; t_embed]`.
    pub outer: Linear,
    /// Per-token refinement of the outer logits (no bias).
    pub outer_token: Linear,
    pub experts: Vec<ModalityExpert>,
}

impl GateParams {
    pub fn zeros(config: RouterConfig) -> Self {
        let c = config.token_dim;
        Self {
            config,
            action: Linear::zeros(c, CHANNELS),
            outer: Linear::zeros(NUM_EXPERTS, c + config.time_dim),
            outer_token: Linear::zeros(NUM_EXPERTS, c),
            experts: Modality::ALL
                .iter()
                .map(|m| ModalityExpert {
                    lift: Linear::zeros(c, m.dim()),
                    fine: Linear::zeros(c, c),
                    transport: Linear::zeros(c, c),
                    inner: Linear::zeros(NUM_SUB, c),
                    contrast: [0.0; NUM_SUB],
                })
                .collect(),
        }
    }

    /// Gaussian weights and zero biases everywhere.
    pub fn random<R: Rng + ?Sized>(config: RouterConfig, rng: &mut R) -> Self {
        let c = config.token_dim;
        Self {
            config,
            action: Linear::random(c, CHANNELS, 1.0, rng),
            outer: Linear::random(NUM_EXPERTS, c + config.time_dim, 1.0, rng),
            outer_token: Linear::random(NUM_EXPERTS, c, 1.0, rng),
            experts: Modality::ALL
                .iter()
                .map(|m| ModalityExpert {
                    lift: Linear::random(c, m.dim(), 1.0, rng),
                    fine: Linear::random(c, c, 1.0, rng),
                    transport: Linear::random(c, c, 1.0, rng),
                    inner: Linear::random(NUM_SUB, c, 1.0, rng),
                    contrast: [0.0; NUM_SUB],
                })
                .collect(),
        }
    }

    /// Untrained gates with a hand-set motion prior on Tier 2: the velocity
    /// and acceleration experts lean towards `skip` on tokens whose motion
    /// channels match the frame average and towards `fine`/`transport` as
    /// the contrast grows; the static modalities keep a constant skip bias.
    pub fn kinematic_prior<R: Rng + ?Sized>(config: RouterConfig, rng: &mut R) -> Self {
        let mut p = Self::random(config, rng);
        for (m, e) in Modality::ALL.iter().zip(&mut p.experts) {
            e.inner = Linear::zeros(NUM_SUB, config.token_dim);
            e.inner.bias = vec![0.0, 0.0, 1.5];
            e.contrast = match m {
                Modality::Velocity | Modality::Acceleration => [1.0, 2.0, -2.0],
                _ => [0.0; NUM_SUB],
            };
        }
        p
    }

    pub fn validate(&self) -> Result<(), RoutingError> {
        self.config.validate()?;
        let c = self.config.token_dim;
        let shape =
            |l: &Linear, r: usize, k: usize| l.rows == r && l.cols == k && l.weight.len() == r * k && l.bias.len() == r;
        let mut ok = shape(&self.action, c, CHANNELS)
            && shape(&self.outer, NUM_EXPERTS, c + self.config.time_dim)
            && shape(&self.outer_token, NUM_EXPERTS, c)
            && self.experts.len() == NUM_EXPERTS;
        if ok {
            ok = Modality::ALL.iter().zip(&self.experts).all(|(m, e)| {
                shape(&e.lift, c, m.dim())
                    && shape(&e.fine, c, c)
                    && shape(&e.transport, c, c)
                    && shape(&e.inner, NUM_SUB, c)
            });
        }
        if !ok {
            return Err(RoutingError::ShapeMismatch(
                "gate parameter shapes disagree with router config".into(),
            ));
        }
        let finite = [&self.action, &self.outer, &self.outer_token]
            .iter()
            .all(|l| l.is_finite())
            && self.experts.iter().all(|e| {
                [&e.lift, &e.fine, &e.transport, &e.inner].iter().all(|l| l.is_finite())
                    && e.contrast.iter().all(|v| v.is_finite())
            });
        if !finite {
            return Err(RoutingError::NonFinite("gate parameters"));
        }
        Ok(())
    }
}
