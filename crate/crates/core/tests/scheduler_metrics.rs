mod common;

use kvlr::metrics::{
    aggregate, area_flicker, chamfer, dice, distance_transform, evaluate, squared_distance_transform, temporal_iou,
    BinaryMask, MaskFrame, MetricsError,
};
use kvlr::scheduler::{
    budget_loss, distill_loss, partition, refresh_interval, significance, simulate_execution, temporal_loss,
    BudgetConfig, CostModel, DistillBundle, ExecutionPlan, Mode, RefreshSchedule, SignificanceInputs,
    SignificanceWeights,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{brute_chamfer, brute_sq_distance, random_mask, rng};

fn block(h: usize, w: usize, y0: usize, x0: usize, bh: usize, bw: usize) -> BinaryMask {
    BinaryMask::from_fn(h, w, |y, x| (y0..y0 + bh).contains(&y) && (x0..x0 + bw).contains(&x))
}

fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max, any::<u64>(), 0.02..0.6f64).prop_map(|(h, w, seed, d)| random_mask(&mut rng(seed), h, w, d))
}

#[test]
fn distance_transform_examples() {
    let full = BinaryMask::from_fn(5, 5, |_, _| true);
    assert!(distance_transform(&full).iter().all(|&d| d == 0.0));
    let mut one = BinaryMask::empty(6, 6);
    one.set(0, 0, true);
    assert_eq!(distance_transform(&one)[3 * 6 + 4], 5.0);
}

#[test]
fn metric_examples() {
    let a = block(8, 8, 2, 2, 2, 2);
    let shifted = block(8, 8, 2, 3, 2, 2);
    assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    assert_eq!(temporal_iou(&a, &a).unwrap(), 1.0);
    assert_eq!(temporal_iou(&a, &block(8, 8, 5, 5, 2, 2)).unwrap(), 0.0);
    assert_eq!(temporal_iou(&shifted, &a).unwrap(), 2.0 / 6.0);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    assert_eq!(dice(&a, &block(8, 8, 5, 5, 2, 2)).unwrap(), 0.0);
    assert_eq!(dice(&a, &shifted).unwrap(), 0.5);

    let mut p = BinaryMask::empty(10, 10);
    let mut t = BinaryMask::empty(10, 10);
    p.set(1, 1, true);
    t.set(4, 5, true);
    assert_eq!(chamfer(&p, &t).unwrap(), 5.0);
    assert_eq!(
        chamfer(&BinaryMask::empty(10, 10), &t),
        Err(MetricsError::EmptyPrediction)
    );
    assert_eq!(chamfer(&p, &BinaryMask::empty(10, 10)), Err(MetricsError::EmptyTarget));

    let hundred = block(20, 20, 0, 0, 10, 10);
    let one_fifty = block(20, 20, 0, 0, 10, 15);
    assert_eq!(area_flicker(&hundred, &hundred).unwrap(), 0.0);
    assert_eq!(area_flicker(&one_fifty, &hundred).unwrap(), 0.5);
    assert_eq!(
        area_flicker(&block(20, 20, 0, 0, 1, 7), &BinaryMask::empty(20, 20)).unwrap(),
        7.0
    );
}

#[test]
fn aggregation_skips_invalid_frames() {
    let single = aggregate(&[Some(0.25)]);
    assert_eq!((single.mean, single.valid, single.skipped), (Some(0.25), 1, 0));
    let none = aggregate(&[None, None, None]);
    assert_eq!((none.mean, none.skipped), (None, 3));
    let mixed = aggregate(&[Some(1.0), None, Some(2.0), Some(6.0), None]);
    assert_eq!((mixed.mean, mixed.valid, mixed.skipped), (Some(3.0), 3, 2));
}

#[test]
fn evaluation_counts_empty_frames() {
    let full = MaskFrame::new(4, 4, vec![1; 16]).unwrap();
    let empty = MaskFrame::new(4, 4, vec![0; 16]).unwrap();
    let r = evaluate(
        &[full.clone(), empty.clone(), empty.clone()],
        &[full, empty.clone(), empty],
    )
    .unwrap();
    assert_eq!(r.cd.valid, 1);
    assert_eq!(r.cd.skipped, 2);
    assert_eq!(r.both_empty, 2);
    assert_eq!(r.frames[0].ti, None);
    assert_eq!(r.frames[2].ti, Some(1.0));
}

proptest! {
    #[test]
    fn edt_equals_brute_force(m in mask_strategy(24)) {
        let fast = squared_distance_transform(&m);
        for (a, b) in fast.iter().zip(brute_sq_distance(&m)) {
            prop_assert_eq!(*a, b.unwrap() as f64);
        }
    }

    #[test]
    fn chamfer_is_symmetric_and_matches_all_pairs(seed in any::<u64>(), h in 1usize..16, w in 1usize..16) {
        let mut r = rng(seed);
        let p = random_mask(&mut r, h, w, 0.2);
        let t = random_mask(&mut r, h, w, 0.2);
        let cd = chamfer(&p, &t).unwrap();
        prop_assert_eq!(cd, chamfer(&t, &p).unwrap());
        prop_assert!((cd - brute_chamfer(&p, &t)).abs() < 1e-9);
        prop_assert!(cd >= 0.0);
    }

    #[test]
    fn chamfer_is_translation_equivariant(seed in any::<u64>(), dy in -4isize..=4, dx in -4isize..=4) {
        // masks live in the interior so the shift never clips them
        let mut r = rng(seed);
        let inner = |r: &mut rand_chacha::ChaCha8Rng| {
            let core = random_mask(r, 12, 12, 0.15);
            BinaryMask::from_fn(20, 20, |y, x| (4..16).contains(&y) && (4..16).contains(&x) && core.get(y - 4, x - 4))
        };
        let (p, t) = (inner(&mut r), inner(&mut r));
        let moved = chamfer(&p.translated(dy, dx), &t.translated(dy, dx)).unwrap();
        prop_assert!((moved - chamfer(&p, &t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dice_and_iou_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_mask(&mut r, 10, 10, 0.4);
        let b = random_mask(&mut r, 10, 10, 0.4);
        let j = temporal_iou(&a, &b).unwrap();
        prop_assert!((dice(&a, &b).unwrap() - 2.0 * j / (1.0 + j)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&j));
    }

    #[test]
    fn partition_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..60) {
        let mut r = rng(seed);
        let s: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let cfg = BudgetConfig::default();
        let plan = partition(&s, &cfg);
        let permuted: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let plan_p = partition(&permuted, &cfg);
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(plan_p.modes[k], plan.modes[i]);
        }
        prop_assert_eq!(plan.count(Mode::Full), ((0.2 * n as f64).round() as usize).min(n));
    }

    #[test]
    fn partition_matches_sort_oracle(seed in any::<u64>(), n in 1usize..80, levels in 1u32..6) {
        let mut r = rng(seed);
        // few distinct values so ties occur
        let s: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let cfg = BudgetConfig::default();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        let nf = (0.2 * n as f64).round() as usize;
        let nl = ((0.3 * n as f64).round() as usize).min(n - nf);
        let plan = partition(&s, &cfg);
        for (rank, &u) in order.iter().enumerate() {
            let want = if rank < nf { Mode::Full } else if rank < nf + nl { Mode::Light } else { Mode::Reuse };
            prop_assert_eq!(plan.modes[u], want);
        }
    }

    #[test]
    fn more_skip_means_less_significance(seed in any::<u64>(), bump in 0.01..1.0f64) {
        let mut r = rng(seed);
        let n = 12;
        let mut g = |_| (0..n).map(|_| r.random::<f64>()).collect::<Vec<f64>>();
        let x = SignificanceInputs { e_motion: g(0), m_tool: g(1), c_route: g(2), q_fine: g(3), p_skip: g(4) };
        let w = SignificanceWeights::default();
        let base = significance(&x, &w).unwrap();
        let mut y = x.clone();
        y.p_skip[5] += bump;
        let after = significance(&y, &w).unwrap();
        prop_assert!(after.raw[5] < base.raw[5]);
        for u in 0..n {
            let want = x.e_motion[u] + x.m_tool[u] + x.c_route[u] + x.q_fine[u] - x.p_skip[u];
            prop_assert!((base.raw[u] - want).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&base.normalized[u]));
        }
    }

    #[test]
    fn cache_age_is_bounded_by_the_refresh_cadence(seed in any::<u64>(), frames in 1usize..30, k in 1usize..6) {
        let mut r = rng(seed);
        let n = 20;
        let cfg = BudgetConfig::default();
        let plans: Vec<ExecutionPlan> =
            (0..frames).map(|_| partition(&(0..n).map(|_| r.random::<f64>()).collect::<Vec<_>>(), &cfg)).collect();
        let intervals: Vec<usize> = (0..frames).map(|_| r.random_range(1..=k)).collect();
        let tr = simulate_execution(&plans, &RefreshSchedule::Intervals(intervals.clone()), &CostModel::default()).unwrap();
        let mut since = 0usize;
        for (t, f) in tr.frames.iter().enumerate() {
            since = if f.refresh { 0 } else { since + 1 };
            prop_assert!(f.max_age <= since);
            prop_assert!(since < k);
            prop_assert_eq!(f.n_full + f.n_light + f.n_reuse, n);
            if f.refresh {
                prop_assert_eq!(f.n_full, n);
            }
            prop_assert_eq!(f.interval, intervals[t]);
        }
        prop_assert!(tr.frames[0].refresh);
        prop_assert_eq!(tr.age_histogram.iter().sum::<u64>(), (frames * n) as u64);
    }
}

#[test]
fn significance_example() {
    let x = SignificanceInputs {
        e_motion: vec![0.5, 0.0],
        m_tool: vec![1.0, 0.0],
        c_route: vec![0.8, 0.0],
        q_fine: vec![0.2, 0.0],
        p_skip: vec![0.1, 0.0],
    };
    let s = significance(&x, &SignificanceWeights::default()).unwrap();
    assert!((s.raw[0] - 2.4).abs() < 1e-15);
    assert_eq!(s.raw[1], 0.0);
}

#[test]
fn partition_and_refresh_examples() {
    let cfg = BudgetConfig::default();
    let s: Vec<f64> = (0..10).map(|i| (i * 7 % 10) as f64).collect();
    let plan = partition(&s, &cfg);
    assert_eq!(
        (plan.count(Mode::Full), plan.count(Mode::Light), plan.count(Mode::Reuse)),
        (2, 3, 5)
    );
    let tied = partition(&[0.5; 10], &cfg);
    use Mode::*;
    assert_eq!(
        tied.modes,
        vec![Full, Full, Light, Light, Light, Reuse, Reuse, Reuse, Reuse, Reuse]
    );
    assert_eq!(refresh_interval(0.9, &cfg), 1);
    assert_eq!(refresh_interval(0.45, &cfg), 2);
    assert_eq!(refresh_interval(0.1, &cfg), 4);
}

#[test]
fn simulation_examples() {
    let cost = CostModel::default();
    let full = vec![ExecutionPlan::uniform(Mode::Full, 10); 6];
    assert_eq!(
        simulate_execution(&full, &RefreshSchedule::Disabled, &cost)
            .unwrap()
            .total_cost,
        60.0
    );
    let reuse = vec![ExecutionPlan::uniform(Mode::Reuse, 10); 6];
    let tr = simulate_execution(&reuse, &RefreshSchedule::Intervals(vec![1; 6]), &cost).unwrap();
    assert_eq!(tr.total_cost, 60.0);
    let split = partition(&(0..10).map(f64::from).collect::<Vec<_>>(), &BudgetConfig::default());
    let tr = simulate_execution(&vec![split; 4], &RefreshSchedule::Disabled, &cost).unwrap();
    for f in &tr.frames {
        assert!((f.cost / 10.0 - 0.33).abs() < 1e-12);
    }
}

#[test]
fn budget_and_temporal_examples() {
    let cfg = BudgetConfig::default();
    let s: Vec<f64> = (0..100).map(f64::from).collect();
    let plan = partition(&s, &cfg);
    // one interval-1 frame in four matches rho_refresh_star = 0.25
    let rep = budget_loss(&vec![plan.clone(); 4], &[1, 4, 4, 4], &cfg).unwrap();
    assert!((rep.rho_compute - 0.35).abs() < 1e-15);
    assert!(rep.loss.abs() < 1e-15);
    let half = BudgetConfig { w_l: 1.0, ..cfg };
    let rep = budget_loss(&vec![plan.clone(); 4], &[1, 4, 4, 4], &half).unwrap();
    assert!((rep.loss - 0.15).abs() < 1e-15);

    let constant = vec![vec![0.3, -0.2, 0.7]; 3];
    let plans = vec![ExecutionPlan::uniform(Mode::Light, 3); 3];
    assert_eq!(temporal_loss(&constant, &plans, 1).unwrap(), 0.0);
    let changing = vec![vec![0.0, 1.0, 2.0], vec![5.0, 6.0, 7.0]];
    assert_eq!(
        temporal_loss(&changing, &vec![ExecutionPlan::uniform(Mode::Full, 3); 2], 1).unwrap(),
        0.0
    );
    let one = vec![vec![0.0, 1.0], vec![0.0, 1.25]];
    let plans = vec![
        ExecutionPlan {
            modes: vec![Mode::Full, Mode::Light]
        };
        2
    ];
    assert_eq!(temporal_loss(&one, &plans, 1).unwrap(), 0.0625);
}

#[test]
fn distillation_examples() {
    let teacher = DistillBundle {
        pred: vec![0.1, 0.2],
        outer: vec![[0.2, 0.3, 0.1, 0.2, 0.2]],
        inner: vec![[[0.5, 0.25, 0.25]; 5]],
        skip: vec![1.0],
        ctrl: vec![0.4],
    };
    let same = distill_loss(&teacher, &teacher, 1.0, 1.0).unwrap();
    assert_eq!(same.total, 0.0);
    let student = DistillBundle {
        skip: vec![0.5],
        ..teacher.clone()
    };
    let d = distill_loss(&student, &teacher, 1.0, 1.0).unwrap();
    assert!((d.route - 2f64.ln()).abs() < 1e-15);
    assert!((d.total - 2f64.ln()).abs() < 1e-15);
    let bad = DistillBundle {
        outer: vec![[0.5; 5]],
        ..teacher.clone()
    };
    assert!(distill_loss(&bad, &teacher, 1.0, 1.0).is_err());
}
