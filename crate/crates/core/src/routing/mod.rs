//! Two-tier expert routing over action fields.
//!
//! Tier 1 picks among five modality experts (semantics, depth, rotation,
//! velocity, acceleration), each of which only ever reads its own channels.
//! Tier 2, inside every modality, chooses one of three motion-scale
//! sub-experts (fine, transport, skip). A capacity schedule moves the Tier-1
//! fusion from dense softmax weights to renormalized top-k weights over the
//! course of training.

mod gate;
mod params;

pub use gate::{
    action_embed, capacity_blend, inner_gate, outer_gate, route_forward, softmax, topk_select, ActionEmbedding,
    InnerChoice, OuterGate, RouteOutput, RoutingDecision,
};
pub use params::{GateParams, ModalityExpert};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{KvaField, CHANNELS};

/// Number of Tier-1 experts.
pub const NUM_EXPERTS: usize = 5;
/// Number of Tier-2 sub-experts per modality.
pub const NUM_SUB: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Physical modality handled by one Tier-1 expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Semantic,
    Depth,
    Rotation,
    Velocity,
    Acceleration,
}

impl Modality {
    pub const ALL: [Modality; NUM_EXPERTS] = [
        Modality::Semantic,
        Modality::Depth,
        Modality::Rotation,
        Modality::Velocity,
        Modality::Acceleration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Field channels read by this modality's expert.
    pub fn channels(self) -> std::ops::Range<usize> {
        match self {
            Modality::Semantic => 0..3,
            Modality::Depth => 3..4,
            Modality::Rotation => 4..5,
            Modality::Velocity => 5..8,
            Modality::Acceleration => 8..9,
        }
    }

    pub fn dim(self) -> usize {
        self.channels().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Semantic => "sem",
            Modality::Depth => "dep",
            Modality::Rotation => "rot",
            Modality::Velocity => "vel",
            Modality::Acceleration => "acc",
        }
    }
}

/// Motion-scale sub-expert, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubExpert {
    Fine,
    Transport,
    Skip,
}

impl SubExpert {
    pub const ALL: [SubExpert; NUM_SUB] = [SubExpert::Fine, SubExpert::Transport, SubExpert::Skip];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SubExpert::Fine => "fine",
            SubExpert::Transport => "transport",
            SubExpert::Skip => "skip",
        }
    }
}

/// Token grid and feature sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    /// Average-pooling stride from pixels to routing tokens.
    pub stride: usize,
    /// Width of the shared action feature.
    pub token_dim: usize,
    /// Width of the sinusoidal timestep embedding.
    pub time_dim: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            token_dim: 16,
            time_dim: 8,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RoutingError> {
        if self.stride == 0 || self.token_dim == 0 || self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(RoutingError::InvalidConfig(
                "stride and token_dim must be positive, time_dim positive and even".into(),
            ));
        }
        Ok(())
    }
}

/// Dense-to-sparse fusion schedule over training progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacitySchedule {
    pub dense_end: f64,
    pub sparse_start: f64,
    pub k: usize,
}

impl Default for CapacitySchedule {
    fn default() -> Self {
        Self {
            dense_end: 0.40,
            sparse_start: 0.75,
            k: 2,
        }
    }
}

impl CapacitySchedule {
    pub fn validate(&self) -> Result<(), RoutingError> {
        if !(0.0 <= self.dense_end && self.dense_end < self.sparse_start && self.sparse_start <= 1.0) {
            return Err(RoutingError::InvalidConfig(format!(
                "need 0 <= dense_end < sparse_start <= 1, got {} and {}",
                self.dense_end, self.sparse_start
            )));
        }
        if !(1..=NUM_EXPERTS).contains(&self.k) {
            return Err(RoutingError::InvalidConfig(format!(
                "k must be in 1..=5, got {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Weight of the sparse fusion at `progress`.
    pub fn sparsity(&self, progress: f64) -> f64 {
        if progress < self.dense_end {
            0.0
        } else if progress >= self.sparse_start {
            1.0
        } else {
            (progress - self.dense_end) / (self.sparse_start - self.dense_end)
        }
    }
}

/// Sinusoidal embedding of a diffusion time `t` in `[0, 1]`: sines then
/// cosines of `1000 t` at geometrically spaced frequencies.
pub fn timestep_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let scaled = 1000.0 * t;
    let freqs: Vec<f64> = (0..half)
        .map(|k| (-(10_000f64.ln()) * k as f64 / half as f64).exp())
        .collect();
    freqs
        .iter()
        .map(|f| (scaled * f).sin())
        .chain(freqs.iter().map(|f| (scaled * f).cos()))
        .collect()
}

/// Row-major grid of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl TokenGrid {
    pub fn zeros(height: usize, width: usize, dim: usize) -> Self {
        Self {
            height,
            width,
            dim,
            data: vec![0.0; height * width * dim],
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean over all tokens.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (a, v) in m.iter_mut().zip(self.token(i)) {
                *a += v;
            }
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

fn check_stride(field: &KvaField, stride: usize) -> Result<(usize, usize), RoutingError> {
    if stride == 0 || field.height() % stride != 0 || field.width() % stride != 0 {
        return Err(RoutingError::ShapeMismatch(format!(
            "{}x{} field is not divisible by stride {stride}",
            field.height(),
            field.width()
        )));
    }
    Ok((field.height() / stride, field.width() / stride))
}

/// Non-overlapping `stride x stride` average pooling of all nine channels.
pub fn avg_pool(field: &KvaField, stride: usize) -> Result<TokenGrid, RoutingError> {
    let (gh, gw) = check_stride(field, stride)?;
    let mut grid = TokenGrid::zeros(gh, gw, CHANNELS);
    let inv = 1.0 / (stride * stride) as f64;
    for y in 0..field.height() {
        for x in 0..field.width() {
            let t = (y / stride) * gw + x / stride;
            let px = field.pixel(y * field.width() + x);
            for (a, v) in grid.token_mut(t).iter_mut().zip(px) {
                *a += v * inv;
            }
        }
    }
    Ok(grid)
}

/// Token is marked tool-present when any semantic channel is active inside
/// its pooling window (max pooling of the semantic channels).
pub fn tool_token_mask(field: &KvaField, stride: usize) -> Result<Vec<bool>, RoutingError> {
    let (gh, gw) = check_stride(field, stride)?;
    let mut mask = vec![false; gh * gw];
    for y in 0..field.height() {
        for x in 0..field.width() {
            if field.pixel(y * field.width() + x)[..3].iter().any(|&v| v > 0.0) {
                mask[(y / stride) * gw + x / stride] = true;
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_stages() {
        let s = CapacitySchedule::default();
        assert_eq!(s.sparsity(0.2), 0.0);
        assert_eq!(s.sparsity(0.4), 0.0);
        assert!((s.sparsity(0.575) - 0.5).abs() < 1e-15);
        assert_eq!(s.sparsity(0.75), 1.0);
        assert_eq!(s.sparsity(0.9), 1.0);
        assert!(CapacitySchedule { k: 0, ..s }.validate().is_err());
        assert!(CapacitySchedule { dense_end: 0.8, ..s }.validate().is_err());
    }

    #[test]
    fn embedding_shape() {
        let e = timestep_embedding(0.0, 8);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(timestep_embedding(0.3, 8).len(), 8);
    }

    #[test]
    fn pooling_requires_divisible_shape() {
        let f = KvaField::zeros(6, 8, 0);
        assert!(avg_pool(&f, 4).is_err());
        assert_eq!(avg_pool(&f, 2).unwrap().len(), 12);
    }

    #[test]
    fn modality_channel_groups_cover_field() {
        let dims: Vec<usize> = Modality::ALL.iter().map(|m| m.dim()).collect();
        assert_eq!(dims, vec![3, 1, 1, 3, 1]);
        assert_eq!(dims.iter().sum::<usize>(), CHANNELS);
    }
}
