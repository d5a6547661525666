//! Analytic gradients of the auxiliary routing objectives.
//!
//! KP-ALB flows into the Tier-1 gate parameters only. Its target `pi` and the
//! hard top-1 fractions `f` are treated as constants. CP and SRC flow into the
//! capacity predictor only; the router's top-k mask is a constant target.

use super::{bce_with_logits, check_sequence, sigmoid, top1, LossWeights, PriorError};
use crate::linear::Linear;
use crate::routing::{softmax, GateParams, TokenGrid, NUM_EXPERTS};

use super::CapacityPredictor;

/// Largest relative error between `analytic` and a central-difference
/// estimate of the gradient of `f` at `params`, with
/// `rel = |ga - gfd| / max(1, |ga|, |gfd|)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<f64, PriorError>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(PriorError::ShapeMismatch(format!(
            "{} parameters vs {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let ga = analytic[i];
        if !fd.is_finite() || !ga.is_finite() {
            return Err(PriorError::NonFiniteGradient { index: i });
        }
        let rel = (ga - fd).abs() / 1f64.max(ga.abs()).max(fd.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Inputs of the Tier-1 gate for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GateFrame {
    pub tokens: TokenGrid,
    pub c_action: Vec<f64>,
    pub t_embed: Vec<f64>,
    /// Tool-present flag of every token.
    pub tool: Vec<bool>,
}

/// Outer gate parameters flattened as `outer` then `outer_token`.
pub fn outer_params(p: &GateParams) -> Vec<f64> {
    let mut v = p.outer.to_flat();
    v.extend(p.outer_token.to_flat());
    v
}

pub fn set_outer_params(p: &mut GateParams, flat: &[f64]) {
    let (a, b) = flat.split_at(p.outer.len());
    p.outer.set_flat(a);
    p.outer_token.set_flat(b);
}

fn gate_logits(outer: &Linear, outer_token: &Linear, frame: &GateFrame) -> Vec<[f64; NUM_EXPERTS]> {
    let input: Vec<f64> = frame.c_action.iter().chain(&frame.t_embed).copied().collect();
    let global = outer.apply(&input);
    let mut refine = [0.0; NUM_EXPERTS];
    (0..frame.tokens.len())
        .map(|u| {
            outer_token.apply_into(frame.tokens.token(u), &mut refine);
            std::array::from_fn(|j| global[j] + refine[j])
        })
        .collect()
}

fn kp_alb_frame(
    probs: &[[f64; NUM_EXPERTS]],
    pi: &[f64; NUM_EXPERTS],
) -> (f64, [f64; NUM_EXPERTS], [f64; NUM_EXPERTS]) {
    let n = probs.len().max(1) as f64;
    let mut f = [0.0; NUM_EXPERTS];
    let mut pbar = [0.0; NUM_EXPERTS];
    for p in probs {
        f[top1(p)] += 1.0 / n;
        for (a, v) in pbar.iter_mut().zip(p) {
            *a += v / n;
        }
    }
    let mut loss = 0.0;
    let mut g = [0.0; NUM_EXPERTS];
    for i in 0..NUM_EXPERTS {
        let d = f[i] * pbar[i] - pi[i];
        loss += d * d / NUM_EXPERTS as f64;
        g[i] = 2.0 / NUM_EXPERTS as f64 * d * f[i];
    }
    (loss, f, g)
}

fn linear_backward(l: &Linear, x: &[f64], dy: &[f64], grad: &mut [f64]) {
    let wlen = l.weight.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (c, v) in x.iter().enumerate() {
            grad[r * l.cols + c] += d * v;
        }
        grad[wlen + r] += d;
    }
}

/// KP-ALB of one frame and its gradient with respect to [`outer_params`].
pub fn kp_alb_grad(p: &GateParams, frame: &GateFrame, pi: &[f64; NUM_EXPERTS]) -> (f64, Vec<f64>) {
    let logits = gate_logits(&p.outer, &p.outer_token, frame);
    let probs: Vec<[f64; NUM_EXPERTS]> = logits.iter().map(softmax).collect();
    let (loss, _, g) = kp_alb_frame(&probs, pi);
    let n = probs.len().max(1) as f64;

    let input: Vec<f64> = frame.c_action.iter().chain(&frame.t_embed).copied().collect();
    let mut grad = vec![0.0; p.outer.len() + p.outer_token.len()];
    let (g_outer, g_token) = grad.split_at_mut(p.outer.len());
    let mut dz_global = [0.0; NUM_EXPERTS];
    for (u, pu) in probs.iter().enumerate() {
        let dot: f64 = g.iter().zip(pu).map(|(a, b)| a * b).sum();
        let dz: [f64; NUM_EXPERTS] = std::array::from_fn(|j| pu[j] * (g[j] - dot) / n);
        for (a, v) in dz_global.iter_mut().zip(&dz) {
            *a += v;
        }
        linear_backward(&p.outer_token, frame.tokens.token(u), &dz, g_token);
    }
    linear_backward(&p.outer, &input, &dz_global, g_outer);
    (loss, grad)
}

/// KP-ALB of one frame recomputed from scratch at the given outer parameters.
pub fn kp_alb_at(p: &GateParams, flat: &[f64], frame: &GateFrame, pi: &[f64; NUM_EXPERTS]) -> f64 {
    let mut q = p.clone();
    set_outer_params(&mut q, flat);
    let probs: Vec<[f64; NUM_EXPERTS]> = gate_logits(&q.outer, &q.outer_token, frame)
        .iter()
        .map(softmax)
        .collect();
    kp_alb_frame(&probs, pi).0
}

/// CP of one frame and its gradient with respect to the predictor head.
pub fn cp_grad(
    pred: &CapacityPredictor,
    tokens: &TokenGrid,
    target: &[[bool; NUM_EXPERTS]],
) -> Result<(f64, Vec<f64>), PriorError> {
    if tokens.len() != target.len() {
        return Err(PriorError::ShapeMismatch(format!(
            "{} tokens vs {} mask rows",
            tokens.len(),
            target.len()
        )));
    }
    let logits = pred.logits(tokens);
    let n = (logits.len() * NUM_EXPERTS).max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.head.len()];
    for (u, (z, a)) in logits.iter().zip(target).enumerate() {
        let mut dz = [0.0; NUM_EXPERTS];
        for i in 0..NUM_EXPERTS {
            let t = f64::from(u8::from(a[i]));
            loss += bce_with_logits(z[i], t) / n;
            dz[i] = (sigmoid(z[i]) - t) / n;
        }
        linear_backward(&pred.head, tokens.token(u), &dz, &mut grad);
    }
    Ok((loss, grad))
}

/// SRC over a clip of predictor probabilities and its gradient with respect
/// to the predictor head.
pub fn src_grad(
    pred: &CapacityPredictor,
    frames: &[TokenGrid],
    tool: &[Vec<bool>],
) -> Result<(f64, Vec<f64>), PriorError> {
    let probs: Vec<Vec<[f64; NUM_EXPERTS]>> = frames.iter().map(|t| pred.probs(t)).collect();
    check_sequence(&probs, tool)?;
    let count: usize = tool.iter().skip(1).map(|m| m.iter().filter(|&&b| b).count()).sum();
    let mut grad = vec![0.0; pred.head.len()];
    if count == 0 {
        return Ok((0.0, grad));
    }
    let norm = (NUM_EXPERTS * count) as f64;
    let mut loss = 0.0;
    let mut d_r: Vec<Vec<[f64; NUM_EXPERTS]>> = probs.iter().map(|p| vec![[0.0; NUM_EXPERTS]; p.len()]).collect();
    for t in 1..probs.len() {
        for (u, &on) in tool[t].iter().enumerate() {
            if !on {
                continue;
            }
            for i in 0..NUM_EXPERTS {
                let d = probs[t][u][i] - probs[t - 1][u][i];
                loss += d * d / norm;
                d_r[t][u][i] += 2.0 * d / norm;
                d_r[t - 1][u][i] -= 2.0 * d / norm;
            }
        }
    }
    for (t, frame) in frames.iter().enumerate() {
        for u in 0..frame.len() {
            let r = probs[t][u];
            let dz: [f64; NUM_EXPERTS] = std::array::from_fn(|i| d_r[t][u][i] * r[i] * (1.0 - r[i]));
            linear_backward(&pred.head, frame.token(u), &dz, &mut grad);
        }
    }
    Ok((loss, grad))
}

/// Weighted auxiliary objective and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxGradients {
    pub loss: f64,
    /// Gradient with respect to [`outer_params`].
    pub router: Vec<f64>,
    /// Gradient with respect to the predictor head (weights then biases).
    pub predictor: Vec<f64>,
}

/// `kp * mean_t KP-ALB_t + cp * mean_t CP_t + src * SRC` over a clip.
///
/// `pi[t]` and `targets[t]` are the per-frame physical prior and router
/// top-k mask; both are held constant.
pub fn aux_gradients(
    router: &GateParams,
    pred: &CapacityPredictor,
    frames: &[GateFrame],
    pi: &[[f64; NUM_EXPERTS]],
    targets: &[Vec<[bool; NUM_EXPERTS]>],
    w: &LossWeights,
) -> Result<AuxGradients, PriorError> {
    if frames.is_empty() || pi.len() != frames.len() || targets.len() != frames.len() {
        return Err(PriorError::ShapeMismatch(format!(
            "{} frames, {} priors, {} targets",
            frames.len(),
            pi.len(),
            targets.len()
        )));
    }
    let nt = frames.len() as f64;
    let mut out = AuxGradients {
        loss: 0.0,
        router: vec![0.0; router.outer.len() + router.outer_token.len()],
        predictor: vec![0.0; pred.head.len()],
    };
    for ((frame, pi), target) in frames.iter().zip(pi).zip(targets) {
        let (l, g) = kp_alb_grad(router, frame, pi);
        out.loss += w.kp * l / nt;
        out.router.iter_mut().zip(&g).for_each(|(a, b)| *a += w.kp * b / nt);
        let (l, g) = cp_grad(pred, &frame.tokens, target)?;
        out.loss += w.cp * l / nt;
        out.predictor.iter_mut().zip(&g).for_each(|(a, b)| *a += w.cp * b / nt);
    }
    let tokens: Vec<TokenGrid> = frames.iter().map(|f| f.tokens.clone()).collect();
    let tool: Vec<Vec<bool>> = frames.iter().map(|f| f.tool.clone()).collect();
    let (l, g) = src_grad(pred, &tokens, &tool)?;
    out.loss += w.src * l;
    out.predictor.iter_mut().zip(&g).for_each(|(a, b)| *a += w.src * b);
    Ok(out)
}
