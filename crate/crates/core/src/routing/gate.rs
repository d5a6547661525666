use super::{
    avg_pool, CapacitySchedule, GateParams, Modality, ModalityExpert, RoutingError, SubExpert, TokenGrid, NUM_EXPERTS,
    NUM_SUB,
};
use crate::field::KvaField;

/// Numerically stable softmax.
pub fn softmax<const N: usize>(z: &[f64; N]) -> [f64; N] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - max).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// First index of the maximum (lowest index wins ties).
fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionEmbedding {
    /// Field average-pooled to the routing grid (9 channels).
    pub pooled: TokenGrid,
    /// Shared linear lift of the pooled field.
    pub tokens: TokenGrid,
    /// Spatial mean of `tokens`.
    pub c_action: Vec<f64>,
}

/// Shared action module: strided average pooling followed by a linear lift.
pub fn action_embed(field: &KvaField, params: &GateParams) -> Result<ActionEmbedding, RoutingError> {
    params.validate()?;
    let pooled = avg_pool(field, params.config.stride)?;
    let mut tokens = TokenGrid::zeros(pooled.height, pooled.width, params.config.token_dim);
    for i in 0..pooled.len() {
        params.action.apply_into(pooled.token(i), tokens.token_mut(i));
    }
    let c_action = tokens.mean();
    Ok(ActionEmbedding {
        pooled,
        tokens,
        c_action,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterGate {
    pub logits: Vec<[f64; NUM_EXPERTS]>,
    pub probs: Vec<[f64; NUM_EXPERTS]>,
}

/// Tier-1 gate. A global logit vector from `[c_action ; t_embed]` is shared
/// by every token and refined by a per-token linear term before the softmax.
pub fn outer_gate(c_action: &[f64], t_embed: &[f64], tokens: &TokenGrid, params: &GateParams) -> OuterGate {
    let input: Vec<f64> = c_action.iter().chain(t_embed).copied().collect();
    let global = params.outer.apply(&input);
    let mut logits = Vec::with_capacity(tokens.len());
    let mut probs = Vec::with_capacity(tokens.len());
    let mut refine = [0.0; NUM_EXPERTS];
    for i in 0..tokens.len() {
        params.outer_token.apply_into(tokens.token(i), &mut refine);
        let z: [f64; NUM_EXPERTS] = std::array::from_fn(|j| global[j] + refine[j]);
        probs.push(softmax(&z));
        logits.push(z);
    }
    OuterGate { logits, probs }
}

/// Marks the `k` largest probabilities of every row; ties go to the lower
/// expert index.
pub fn topk_select(probs: &[[f64; NUM_EXPERTS]], k: usize) -> Vec<[bool; NUM_EXPERTS]> {
    probs
        .iter()
        .map(|p| {
            let mut order: [usize; NUM_EXPERTS] = std::array::from_fn(|i| i);
            order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
            let mut mask = [false; NUM_EXPERTS];
            for &i in order.iter().take(k) {
                mask[i] = true;
            }
            mask
        })
        .collect()
}

/// Blends dense probabilities with renormalized top-k weights according to
/// the capacity schedule.
pub fn capacity_blend(
    probs: &[[f64; NUM_EXPERTS]],
    mask: &[[bool; NUM_EXPERTS]],
    progress: f64,
    sched: &CapacitySchedule,
) -> Vec<[f64; NUM_EXPERTS]> {
    let lambda = sched.sparsity(progress);
    probs
        .iter()
        .zip(mask)
        .map(|(p, a)| {
            let kept: f64 = p.iter().zip(a).filter(|(_, &on)| on).map(|(v, _)| v).sum();
            std::array::from_fn(|i| {
                let sparse = if a[i] { p[i] / kept } else { 0.0 };
                if lambda == 0.0 {
                    p[i]
                } else if lambda == 1.0 {
                    sparse
                } else {
                    (1.0 - lambda) * p[i] + lambda * sparse
                }
            })
        })
        .collect()
}

/// Tier-2 decision for one token of one modality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerChoice {
    pub sel: SubExpert,
    pub conf: f64,
    pub probs: [f64; NUM_SUB],
}

/// Inner gate: three logits from the lifted token plus the contrast term,
/// softmax, top-1 with ties broken as fine < transport < skip.
pub fn inner_gate(lifted: &[f64], contrast: f64, expert: &ModalityExpert) -> InnerChoice {
    let mut z = [0.0; NUM_SUB];
    expert.inner.apply_into(lifted, &mut z);
    for (zi, c) in z.iter_mut().zip(expert.contrast) {
        *zi += c * contrast;
    }
    let probs = softmax(&z);
    let s = argmax(&probs);
    InnerChoice {
        sel: SubExpert::ALL[s],
        conf: probs[s],
        probs,
    }
}

/// Full routing state for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    pub grid_height: usize,
    pub grid_width: usize,
    pub logits: Vec<[f64; NUM_EXPERTS]>,
    /// Tier-1 soft probabilities.
    pub probs: Vec<[f64; NUM_EXPERTS]>,
    /// Tier-1 top-k mask.
    pub mask: Vec<[bool; NUM_EXPERTS]>,
    /// Effective fusion weights after the capacity blend.
    pub fusion: Vec<[f64; NUM_EXPERTS]>,
    /// Tier-2 decision of every modality at every token.
    pub inner: Vec<[InnerChoice; NUM_EXPERTS]>,
}

impl RoutingDecision {
    pub fn tokens(&self) -> usize {
        self.probs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutput {
    /// Fused control feature.
    pub ctrl: TokenGrid,
    pub decision: RoutingDecision,
    pub embedding: ActionEmbedding,
    /// Per-modality lifted tokens (the skip path).
    pub lifted: Vec<TokenGrid>,
    /// Per-modality expert output, already scaled by inner confidence.
    pub modality_out: Vec<TokenGrid>,
}

fn modality_tokens(pooled: &TokenGrid, m: Modality) -> TokenGrid {
    let r = m.channels();
    let mut g = TokenGrid::zeros(pooled.height, pooled.width, r.len());
    for i in 0..pooled.len() {
        g.token_mut(i).copy_from_slice(&pooled.token(i)[r.clone()]);
    }
    g
}

/// Distance of every token from the grid mean.
fn contrast(grid: &TokenGrid) -> Vec<f64> {
    let mean = grid.mean();
    (0..grid.len())
        .map(|i| {
            grid.token(i)
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Runs both routing tiers and fuses the selected expert outputs.
pub fn route_forward(
    field: &KvaField,
    params: &GateParams,
    sched: &CapacitySchedule,
    progress: f64,
    t_embed: &[f64],
) -> Result<RouteOutput, RoutingError> {
    sched.validate()?;
    if t_embed.len() != params.config.time_dim {
        return Err(RoutingError::ShapeMismatch(format!(
            "timestep embedding has {} values, expected {}",
            t_embed.len(),
            params.config.time_dim
        )));
    }
    let embedding = action_embed(field, params)?;
    let outer = outer_gate(&embedding.c_action, t_embed, &embedding.tokens, params);
    let mask = topk_select(&outer.probs, sched.k);
    let fusion = capacity_blend(&outer.probs, &mask, progress, sched);

    let (gh, gw) = (embedding.pooled.height, embedding.pooled.width);
    let n = gh * gw;
    let c = params.config.token_dim;
    let mut inner = vec![
        [InnerChoice {
            sel: SubExpert::Fine,
            conf: 1.0,
            probs: [1.0, 0.0, 0.0],
        }; NUM_EXPERTS];
        n
    ];
    let mut lifted_all = Vec::with_capacity(NUM_EXPERTS);
    let mut outputs = Vec::with_capacity(NUM_EXPERTS);
    let mut ctrl = TokenGrid::zeros(gh, gw, c);

    for m in Modality::ALL {
        let expert = &params.experts[m.index()];
        let own = modality_tokens(&embedding.pooled, m);
        let contrast = contrast(&own);
        let mut lifted = TokenGrid::zeros(gh, gw, c);
        for i in 0..n {
            expert.lift.apply_into(own.token(i), lifted.token_mut(i));
        }
        let global = lifted.mean();
        let mut out = TokenGrid::zeros(gh, gw, c);
        let mut buf = vec![0.0; c];
        for i in 0..n {
            let choice = inner_gate(lifted.token(i), contrast[i], expert);
            inner[i][m.index()] = choice;
            let x = lifted.token(i);
            match choice.sel {
                SubExpert::Fine => expert.fine.apply_into(x, &mut buf),
                SubExpert::Transport => {
                    expert.transport.apply_into(x, &mut buf);
                    buf.iter_mut().zip(&global).for_each(|(b, g)| *b += g);
                }
                SubExpert::Skip => buf.copy_from_slice(x),
            }
            let w = fusion[i][m.index()];
            for ((o, cv), b) in out.token_mut(i).iter_mut().zip(ctrl.token_mut(i).iter_mut()).zip(&buf) {
                *o = choice.conf * b;
                *cv += w * *o;
            }
        }
        lifted_all.push(lifted);
        outputs.push(out);
    }

    Ok(RouteOutput {
        ctrl,
        decision: RoutingDecision {
            grid_height: gh,
            grid_width: gw,
            logits: outer.logits,
            probs: outer.probs,
            mask,
            fusion,
            inner,
        },
        embedding,
        lifted: lifted_all,
        modality_out: outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{timestep_embedding, RouterConfig};

    #[test]
    fn zero_gate_is_uniform() {
        let p = GateParams::zeros(RouterConfig::default());
        let tokens = TokenGrid::zeros(2, 2, 16);
        let g = outer_gate(&[0.0; 16], &[0.0; 8], &tokens, &p);
        for row in &g.probs {
            assert!(row.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        }
    }

    #[test]
    fn saturated_softmax_is_one_hot() {
        let p = softmax(&[50.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-9);
        assert!(p[1..].iter().all(|&v| v < 1e-9));
    }

    #[test]
    fn topk_examples() {
        let a = topk_select(&[[0.4, 0.3, 0.1, 0.1, 0.1]], 2);
        assert_eq!(a[0], [true, true, false, false, false]);
        let a = topk_select(&[[0.2; 5]], 2);
        assert_eq!(a[0], [true, true, false, false, false]);
    }

    #[test]
    fn blend_examples() {
        let s = CapacitySchedule::default();
        let p = [[0.4, 0.3, 0.1, 0.1, 0.1]];
        let a = topk_select(&p, 2);
        let sparse = [4.0 / 7.0, 3.0 / 7.0, 0.0, 0.0, 0.0];
        assert_eq!(capacity_blend(&p, &a, 0.2, &s)[0], p[0]);
        let w = capacity_blend(&p, &a, 0.9, &s)[0];
        for (x, y) in w.iter().zip(&sparse) {
            assert!((x - y).abs() < 1e-15);
        }
        let w = capacity_blend(&p, &a, 0.575, &s)[0];
        for i in 0..5 {
            assert!((w[i] - (0.5 * p[0][i] + 0.5 * sparse[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn inner_gate_examples() {
        let cfg = RouterConfig::default();
        let p = GateParams::zeros(cfg);
        let c = inner_gate(&[0.0; 16], 0.0, &p.experts[0]);
        assert_eq!(c.sel, SubExpert::Fine);
        assert!((c.conf - 1.0 / 3.0).abs() < 1e-15);

        let mut e = p.experts[0].clone();
        e.inner.bias = vec![0.0, 5.0, 0.0];
        let c = inner_gate(&[0.0; 16], 0.0, &e);
        assert_eq!(c.sel, SubExpert::Transport);
        let expected = 5f64.exp() / (2.0 + 5f64.exp());
        assert!((c.conf - expected).abs() < 1e-15);
        assert!((c.conf - 0.9867).abs() < 1e-4);
    }

    #[test]
    fn zero_field_gives_zero_ctrl() {
        let mut rng = crate::rng::stream(3, "t");
        let p = GateParams::random(RouterConfig::default(), &mut rng);
        let f = KvaField::zeros(16, 16, 0);
        let out = route_forward(&f, &p, &CapacitySchedule::default(), 0.5, &timestep_embedding(0.5, 8)).unwrap();
        assert!(out.ctrl.data.iter().all(|&v| v == 0.0));
        assert!(out.embedding.c_action.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_embedding_width() {
        let p = GateParams::zeros(RouterConfig::default());
        let f = KvaField::zeros(8, 8, 0);
        assert!(route_forward(&f, &p, &CapacitySchedule::default(), 0.0, &[0.0; 3]).is_err());
    }
}
