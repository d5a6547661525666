use serde::{Deserialize, Serialize};

use super::ScheduleError;
use crate::priors::sigmoid;
use crate::routing::{softmax, NUM_EXPERTS, NUM_SUB};

/// Probabilities are floored at this value inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Outputs compared between teacher and student.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillBundle {
    pub pred: Vec<f64>,
    pub outer: Vec<[f64; NUM_EXPERTS]>,
    pub inner: Vec<[[f64; NUM_SUB]; NUM_EXPERTS]>,
    pub skip: Vec<f64>,
    pub ctrl: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillTerms {
    pub pred: f64,
    pub route: f64,
    pub ctrl: f64,
    pub total: f64,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln()))
        .sum()
}

fn binary_kl(a: f64, s: f64) -> f64 {
    kl(&[a, 1.0 - a], &[s, 1.0 - s])
}

fn check_dist(rows: impl Iterator<Item = f64>, what: &str) -> Result<(), ScheduleError> {
    let mut sum = 0.0;
    for p in rows {
        if !(0.0..=1.0).contains(&p) {
            return Err(ScheduleError::InvalidDistribution(format!("{what} has entry {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(ScheduleError::InvalidDistribution(format!("{what} sums to {sum}")));
    }
    Ok(())
}

impl DistillBundle {
    fn validate(&self) -> Result<(), ScheduleError> {
        for row in &self.outer {
            check_dist(row.iter().copied(), "outer routing row")?;
        }
        for row in self.inner.iter().flatten() {
            check_dist(row.iter().copied(), "inner routing row")?;
        }
        if self.skip.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ScheduleError::InvalidDistribution(
                "skip probability outside [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn same_shape(&self, o: &Self) -> bool {
        self.pred.len() == o.pred.len()
            && self.outer.len() == o.outer.len()
            && self.inner.len() == o.inner.len()
            && self.skip.len() == o.skip.len()
            && self.ctrl.len() == o.ctrl.len()
    }
}

/// `L_pred + lambda_r L_route + lambda_c L_ctrl`.
///
/// `L_pred` and `L_ctrl` are mean squared errors. `L_route` is the mean
/// KL(teacher || student) of the outer rows plus that of the inner rows plus
/// the mean binary KL of the skip probabilities.
pub fn distill_loss(
    student: &DistillBundle,
    teacher: &DistillBundle,
    lambda_r: f64,
    lambda_c: f64,
) -> Result<DistillTerms, ScheduleError> {
    if !student.same_shape(teacher) {
        return Err(ScheduleError::ShapeMismatch(
            "student and teacher bundles differ in shape".into(),
        ));
    }
    student.validate()?;
    teacher.validate()?;
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };

    let pred = mse(&student.pred, &teacher.pred);
    let ctrl = mse(&student.ctrl, &teacher.ctrl);
    let outer = mean(
        teacher.outer.iter().zip(&student.outer).map(|(p, q)| kl(p, q)).sum(),
        teacher.outer.len(),
    );
    let inner = mean(
        teacher
            .inner
            .iter()
            .flatten()
            .zip(student.inner.iter().flatten())
            .map(|(p, q)| kl(p, q))
            .sum(),
        teacher.inner.len() * NUM_EXPERTS,
    );
    let skip = mean(
        teacher
            .skip
            .iter()
            .zip(&student.skip)
            .map(|(&a, &s)| binary_kl(a, s))
            .sum(),
        teacher.skip.len(),
    );
    let route = outer + inner + skip;
    Ok(DistillTerms {
        pred,
        route,
        ctrl,
        total: pred + lambda_r * route + lambda_c * ctrl,
    })
}

/// Student outputs before their final normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudentLogits {
    pub pred: Vec<f64>,
    pub outer: Vec<[f64; NUM_EXPERTS]>,
    pub inner: Vec<[[f64; NUM_SUB]; NUM_EXPERTS]>,
    pub skip: Vec<f64>,
    pub ctrl: Vec<f64>,
}

impl StudentLogits {
    pub fn to_bundle(&self) -> DistillBundle {
        DistillBundle {
            pred: self.pred.clone(),
            outer: self.outer.iter().map(softmax).collect(),
            inner: self.inner.iter().map(|rows| rows.map(|z| softmax(&z))).collect(),
            skip: self.skip.iter().map(|&z| sigmoid(z)).collect(),
            ctrl: self.ctrl.clone(),
        }
    }

    /// All values in field order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.pred.clone();
        v.extend(self.outer.iter().flatten());
        v.extend(self.inner.iter().flatten().flatten());
        v.extend(&self.skip);
        v.extend(&self.ctrl);
        v
    }

    /// Inverse of [`StudentLogits::to_flat`] using `self` for the shape.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
        let pred = take(self.pred.len());
        let outer = (0..self.outer.len())
            .map(|_| take(NUM_EXPERTS).try_into().expect("row length"))
            .collect();
        let inner = (0..self.inner.len())
            .map(|_| std::array::from_fn(|_| take(NUM_SUB).try_into().expect("row length")))
            .collect();
        let skip = take(self.skip.len());
        let ctrl = take(self.ctrl.len());
        Self {
            pred,
            outer,
            inner,
            skip,
            ctrl,
        }
    }
}

/// Distillation loss of a student given by logits, and its gradient with
/// respect to those logits (same layout as [`StudentLogits::to_flat`]).
/// The probability floor is treated as inactive.
pub fn distill_grad(
    student: &StudentLogits,
    teacher: &DistillBundle,
    lambda_r: f64,
    lambda_c: f64,
) -> Result<(DistillTerms, Vec<f64>), ScheduleError> {
    let s = student.to_bundle();
    let terms = distill_loss(&s, teacher, lambda_r, lambda_c)?;
    let mut g = Vec::with_capacity(student.to_flat().len());

    let n = s.pred.len().max(1) as f64;
    g.extend(s.pred.iter().zip(&teacher.pred).map(|(a, b)| 2.0 * (a - b) / n));
    let n = s.outer.len().max(1) as f64;
    for (q, p) in s.outer.iter().zip(&teacher.outer) {
        g.extend((0..NUM_EXPERTS).map(|i| lambda_r * (q[i] - p[i]) / n));
    }
    let n = (s.inner.len() * NUM_EXPERTS).max(1) as f64;
    for (q, p) in s.inner.iter().flatten().zip(teacher.inner.iter().flatten()) {
        g.extend((0..NUM_SUB).map(|i| lambda_r * (q[i] - p[i]) / n));
    }
    let n = s.skip.len().max(1) as f64;
    g.extend(s.skip.iter().zip(&teacher.skip).map(|(q, a)| lambda_r * (q - a) / n));
    let n = s.ctrl.len().max(1) as f64;
    g.extend(
        s.ctrl
            .iter()
            .zip(&teacher.ctrl)
            .map(|(a, b)| lambda_c * 2.0 * (a - b) / n),
    );
    Ok((terms, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> DistillBundle {
        DistillBundle {
            pred: vec![0.1, -0.4],
            outer: vec![[0.4, 0.3, 0.1, 0.1, 0.1]],
            inner: vec![[[0.2, 0.3, 0.5]; NUM_EXPERTS]],
            skip: vec![0.7],
            ctrl: vec![1.0, 2.0, 3.0],
        }
    }

    #[test]
    fn identical_bundles_give_zero() {
        let b = bundle();
        assert_eq!(distill_loss(&b, &b, 1.0, 1.0).unwrap().total, 0.0);
    }

    #[test]
    fn saturated_skip_is_ln2() {
        let mut t = bundle();
        let mut s = bundle();
        t.skip = vec![1.0];
        s.skip = vec![sigmoid(0.0)];
        let d = distill_loss(&s, &t, 1.0, 1.0).unwrap();
        assert!((d.route - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((d.total - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = bundle();
        let mut bad = bundle();
        bad.outer[0][0] = 0.9;
        assert!(matches!(
            distill_loss(&bad, &b, 1.0, 1.0),
            Err(ScheduleError::InvalidDistribution(_))
        ));
        let mut short = bundle();
        short.ctrl.pop();
        assert!(matches!(
            distill_loss(&short, &b, 1.0, 1.0),
            Err(ScheduleError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn flat_round_trip() {
        let s = StudentLogits {
            pred: vec![1.0],
            outer: vec![[1.0, 2.0, 3.0, 4.0, 5.0]],
            inner: vec![[[0.5, 0.25, 0.125]; NUM_EXPERTS]],
            skip: vec![-1.0, 2.0],
            ctrl: vec![3.0],
        };
        assert_eq!(s.with_flat(&s.to_flat()), s);
    }
}
