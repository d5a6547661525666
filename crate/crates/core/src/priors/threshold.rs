use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, PriorError};
use crate::linear::Linear;
use crate::routing::{TokenGrid, NUM_EXPERTS};

/// Quantile levels are kept inside this range so that a fully saturated
/// routing mass never pins a threshold to the extreme sample.
pub const QUANTILE_CLAMP: (f64, f64) = (0.01, 0.99);

/// Linear-interpolation quantile of an ascending slice (`h = (n-1) q`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-expert inference thresholds of the capacity predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorState {
    pub tau: [f64; NUM_EXPERTS],
    pub beta: f64,
}

impl Default for PredictorState {
    fn default() -> Self {
        Self {
            tau: [0.5; NUM_EXPERTS],
            beta: 0.95,
        }
    }
}

/// One EMA step: `tau_i <- beta tau_i + (1 - beta) Q_{1 - a_i}(R_i)` where
/// `R_i` are the predictor probabilities of expert `i` over the batch and
/// `a_i` is the router's activation rate.
pub fn update_thresholds(
    state: &PredictorState,
    probs: &[[f64; NUM_EXPERTS]],
    activation: &[f64; NUM_EXPERTS],
) -> Result<PredictorState, PriorError> {
    if probs.is_empty() {
        return Err(PriorError::EmptyProbs);
    }
    if !(state.beta > 0.0 && state.beta < 1.0) {
        return Err(PriorError::InvalidValue(format!(
            "beta must be in (0, 1), got {}",
            state.beta
        )));
    }
    if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(PriorError::InvalidValue(
            "predictor probabilities must lie in [0, 1]".into(),
        ));
    }
    if activation.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(PriorError::InvalidValue("activation rates must lie in [0, 1]".into()));
    }
    let mut tau = state.tau;
    let mut column = Vec::with_capacity(probs.len());
    for (i, t) in tau.iter_mut().enumerate() {
        column.clear();
        column.extend(probs.iter().map(|p| p[i]));
        column.sort_by(f64::total_cmp);
        let level = (1.0 - activation[i]).clamp(QUANTILE_CLAMP.0, QUANTILE_CLAMP.1);
        *t = state.beta * *t + (1.0 - state.beta) * quantile(&column, level);
    }
    Ok(PredictorState { tau, beta: state.beta })
}

/// Linear head predicting which experts the router will activate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPredictor {
    pub head: Linear,
}

impl CapacityPredictor {
    pub fn zeros(token_dim: usize) -> Self {
        Self {
            head: Linear::zeros(NUM_EXPERTS, token_dim),
        }
    }

    pub fn random<R: Rng + ?Sized>(token_dim: usize, rng: &mut R) -> Self {
        Self {
            head: Linear::random(NUM_EXPERTS, token_dim, 1.0, rng),
        }
    }

    pub fn logits(&self, tokens: &TokenGrid) -> Vec<[f64; NUM_EXPERTS]> {
        (0..tokens.len())
            .map(|i| {
                let mut z = [0.0; NUM_EXPERTS];
                self.head.apply_into(tokens.token(i), &mut z);
                z
            })
            .collect()
    }

    pub fn probs(&self, tokens: &TokenGrid) -> Vec<[f64; NUM_EXPERTS]> {
        self.logits(tokens).into_iter().map(|z| z.map(sigmoid)).collect()
    }

    /// Experts whose probability reaches the current threshold.
    pub fn activate(&self, tokens: &TokenGrid, state: &PredictorState) -> Vec<[bool; NUM_EXPERTS]> {
        self.probs(tokens)
            .into_iter()
            .map(|r| std::array::from_fn(|i| r[i] >= state.tau[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&x, 0.5), 2.0);
        assert_eq!(quantile(&x, 0.0), 0.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert!((quantile(&x, 0.3) - 1.2).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.4), 7.0);
    }

    #[test]
    fn ema_moves_towards_batch_quantile() {
        let s = PredictorState::default();
        let probs = vec![[0.9; 5]; 10];
        let next = update_thresholds(&s, &probs, &[0.5; 5]).unwrap();
        for t in next.tau {
            assert!((t - (0.95 * 0.5 + 0.05 * 0.9)).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_activation_is_clamped() {
        let probs: Vec<[f64; 5]> = (0..101).map(|i| [i as f64 / 100.0; 5]).collect();
        let s = PredictorState {
            tau: [0.0; 5],
            beta: 0.5,
        };
        let all = update_thresholds(&s, &probs, &[1.0; 5]).unwrap();
        let none = update_thresholds(&s, &probs, &[0.0; 5]).unwrap();
        assert!((all.tau[0] - 0.5 * 0.01).abs() < 1e-12);
        assert!((none.tau[0] - 0.5 * 0.99).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = PredictorState::default();
        assert_eq!(update_thresholds(&s, &[], &[0.5; 5]), Err(PriorError::EmptyProbs));
        assert!(update_thresholds(&s, &[[1.5; 5]], &[0.5; 5]).is_err());
        assert!(update_thresholds(&PredictorState { beta: 1.0, ..s }, &[[0.5; 5]], &[0.5; 5]).is_err());
    }
}
