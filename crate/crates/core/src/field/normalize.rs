//! Per-channel standardization of the continuous channels.

use serde::{Deserialize, Serialize};

use super::{channel, FieldError, KvaField, CHANNELS};

/// Lower bound applied to every stored standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

const CONTINUOUS: usize = CHANNELS - channel::FIRST_CONTINUOUS;

/// Mean and standard deviation of depth, rotation, velocity and acceleration,
/// in channel order. Semantic channels are never normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CONTINUOUS],
    pub std: [f64; CONTINUOUS],
}

impl ChannelStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CONTINUOUS],
            std: [1.0; CONTINUOUS],
        }
    }

    fn floored(mut self) -> Self {
        for s in &mut self.std {
            *s = s.max(STD_FLOOR);
        }
        self
    }
}

/// Population mean and standard deviation over every pixel of every field.
pub fn compute_stats(fields: &[KvaField]) -> Result<ChannelStats, FieldError> {
    let n: usize = fields.iter().map(KvaField::pixels).sum();
    if n == 0 {
        return Err(FieldError::EmptyCorpus);
    }
    let n = n as f64;
    let mut mean = [0.0; CONTINUOUS];
    for f in fields {
        for i in 0..f.pixels() {
            let px = &f.pixel(i)[channel::FIRST_CONTINUOUS..];
            for (m, v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = [0.0; CONTINUOUS];
    for f in fields {
        for i in 0..f.pixels() {
            let px = &f.pixel(i)[channel::FIRST_CONTINUOUS..];
            for ((s, v), m) in var.iter_mut().zip(px).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let std = var.map(|s| (s / n).sqrt());
    Ok(ChannelStats { mean, std }.floored())
}

fn map_continuous(field: &KvaField, stats: &ChannelStats, f: impl Fn(f64, f64, f64) -> f64) -> KvaField {
    let stats = stats.clone().floored();
    let mut out = field.clone();
    for i in 0..out.pixels() {
        let px = &mut out.pixel_mut(i)[channel::FIRST_CONTINUOUS..];
        for (k, v) in px.iter_mut().enumerate() {
            *v = f(*v, stats.mean[k], stats.std[k]);
        }
    }
    out
}

/// `(c - mean) / std` on every continuous channel.
pub fn normalize(field: &KvaField, stats: &ChannelStats) -> KvaField {
    map_continuous(field, stats, |v, m, s| (v - m) / s)
}

/// Inverse of [`normalize`].
pub fn denormalize(field: &KvaField, stats: &ChannelStats) -> KvaField {
    map_continuous(field, stats, |v, m, s| v * s + m)
}
