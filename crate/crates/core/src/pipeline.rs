//! The `kvlr` subcommands as library functions.
//!
//! Output layout under the output directory:
//!
//! ```text
//! trajectories/<seq>.traj        synth
//! masks/<seq>/frame_NNNN.pgm     synth (target action tubes)
//! fields/<seq>/frame_NNNN.kvaf   lift (raw, unnormalized fields)
//! *.csv                          every subcommand
//! ```
//!
//! Every output is a pure function of the configuration, the seed and the
//! input files; directory listings are sorted before use.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use crate::config::{Config, GateInit};
use crate::field::{channel, compute_stats, lift_all, normalize, ChannelStats, KvaField};
use crate::io::{
    self, read_field, read_mask, read_trajectory, write_field, write_mask, write_table, write_trajectory, DatasetRecord,
};
use crate::kinematics::{forward_kinematics, synth_trajectory, SynthParams};
use crate::metrics::{evaluate, tube_mask, Aggregate};
use crate::priors::grad::{cp_grad, grad_check, kp_alb_at, kp_alb_grad, outer_params, src_grad, GateFrame};
use crate::priors::{
    cp_loss, flow_matching_loss, kp_alb_loss, physical_prior, src_loss, sub_stabilizer_loss, total_loss,
    update_thresholds, CapacityPredictor, LossComponents, PredictorState, RoutingStats, SubRoutingStats,
};
use crate::rng::{stream, tags};
use crate::routing::{
    route_forward, timestep_embedding, tool_token_mask, GateParams, Modality, RouteOutput, SubExpert, TokenGrid,
    NUM_EXPERTS,
};
use crate::scheduler::{
    budget_loss, distill_grad, distill_loss, partition, refresh_interval, significance, significance_inputs,
    simulate_execution, temporal_loss, DistillBundle, ExecutionPlan, Mode, RefreshSchedule, SignificanceInputs,
    StudentLogits,
};
use crate::{Error, Result};

/// Formats a float for CSV output (shortest round-trip representation).
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn sorted_entries(dir: &Path, want_dir: bool, ext: Option<&str>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(io::io_err(dir))? {
        let p = e.map_err(io::io_err(dir))?.path();
        if p.is_dir() != want_dir {
            continue;
        }
        if let Some(ext) = ext {
            if p.extension().and_then(|s| s.to_str()) != Some(ext) {
                continue;
            }
        }
        out.push(p);
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// A named clip of raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSequence {
    pub id: String,
    pub fields: Vec<KvaField>,
}

/// Loads every `<seq>/*.kvaf` under `dir`.
pub fn load_fields(dir: &Path) -> Result<Vec<FieldSequence>> {
    let mut seqs = Vec::new();
    for sub in sorted_entries(dir, true, None)? {
        let fields = sorted_entries(&sub, false, Some("kvaf"))?
            .iter()
            .map(|p| read_field(p))
            .collect::<Result<Vec<_>>>()?;
        if !fields.is_empty() {
            seqs.push(FieldSequence { id: stem(&sub), fields });
        }
    }
    if seqs.is_empty() {
        return Err(Error::Config(format!("no field sequences under {}", dir.display())));
    }
    Ok(seqs)
}

/// Gate parameters drawn from the router stream of the configured seed.
pub fn gate_params(cfg: &Config) -> GateParams {
    let mut rng = stream(cfg.seed, tags::ROUTER);
    match cfg.router.init {
        GateInit::Random => GateParams::random(cfg.router.dims, &mut rng),
        GateInit::KinematicPrior => GateParams::kinematic_prior(cfg.router.dims, &mut rng),
    }
}

/// Normalizes and routes every frame of a clip.
pub fn route_sequence(
    cfg: &Config,
    params: &GateParams,
    stats: &ChannelStats,
    fields: &[KvaField],
) -> Result<Vec<RouteOutput>> {
    let t_embed = timestep_embedding(cfg.router.diffusion_time, cfg.router.dims.time_dim);
    fields
        .iter()
        .map(|f| {
            let n = normalize(f, stats);
            Ok(route_forward(
                &n,
                params,
                &cfg.router.capacity,
                cfg.router.progress,
                &t_embed,
            )?)
        })
        .collect()
}

/// Mean per-pixel speed `|v|` inside every routing token.
pub fn token_speed(field: &KvaField, stride: usize) -> Vec<f64> {
    let gw = field.width() / stride;
    let gh = field.height() / stride;
    let mut s = vec![0.0; gh * gw];
    let inv = 1.0 / (stride * stride) as f64;
    for y in 0..gh * stride {
        for x in 0..gw * stride {
            let px = field.pixel(y * field.width() + x);
            let v = &px[channel::VEL_X..=channel::VEL_Z];
            s[(y / stride) * gw + x / stride] += inv * v.iter().map(|c| c * c).sum::<f64>().sqrt();
        }
    }
    s
}

pub struct Pipeline {
    pub config: Config,
    pub out: PathBuf,
}

impl Pipeline {
    pub fn new(config: Config, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            out: out.into(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Synthetic trajectories and their target action tubes.
    pub fn synth(&self) -> Result<Vec<PathBuf>> {
        let cfg = &self.config;
        let geom = cfg.geometry();
        let cam = cfg.camera();
        let mut written = Vec::new();
        let mut rows = Vec::new();
        for kind in &cfg.synth.kinds {
            let traj = synth_trajectory(*kind, &SynthParams::default(), cfg.synth.frames, cfg.seed, &geom.limits)?;
            let rec = DatasetRecord {
                id: kind.name().to_string(),
                camera: cam.clone(),
                trajectory: traj,
            };
            let tp = self.path(&format!("trajectories/{}.traj", rec.id));
            write_trajectory(&tp, &rec)?;
            written.push(tp);
            let mut area = 0usize;
            for (t, s) in rec.trajectory.states().iter().enumerate() {
                let poses = forward_kinematics(s, &geom)?;
                let tube = tube_mask(&poses, &cam, cfg.metrics.tube_half_width)?;
                area += tube.union().area();
                let mp = self.path(&format!("masks/{}/frame_{t:04}.pgm", rec.id));
                write_mask(&mp, &tube)?;
                written.push(mp);
            }
            rows.push(vec![
                rec.id.clone(),
                rec.trajectory.len().to_string(),
                fmt(area as f64 / rec.trajectory.len() as f64),
            ]);
        }
        let csv = self.path("synth.csv");
        write_table(&csv, &["sequence", "frames", "mean_tube_area"], &rows)?;
        written.push(csv);
        Ok(written)
    }

    /// Lifts every trajectory in `input` to raw fields.
    pub fn lift(&self, input: &Path) -> Result<Vec<PathBuf>> {
        let geom = self.config.geometry();
        let mut written = Vec::new();
        let mut all = Vec::new();
        for tp in sorted_entries(input, false, Some("traj"))? {
            let rec = read_trajectory(&tp)?;
            let fields = lift_all(&rec.trajectory, &geom, &rec.camera)?;
            for f in &fields {
                let p = self.path(&format!("fields/{}/frame_{:04}.kvaf", rec.id, f.frame()));
                write_field(&p, f)?;
                written.push(p);
            }
            all.extend(fields);
        }
        let stats = compute_stats(&all)?;
        let rows: Vec<Vec<String>> = (0..stats.mean.len())
            .map(|c| vec![(c + 3).to_string(), fmt(stats.mean[c]), fmt(stats.std[c])])
            .collect();
        let csv = self.path("field_stats.csv");
        write_table(&csv, &["channel", "mean", "std"], &rows)?;
        written.push(csv);
        Ok(written)
    }

    fn corpus(&self, fields: &Path) -> Result<(Vec<FieldSequence>, ChannelStats, GateParams)> {
        let seqs = load_fields(fields)?;
        let all: Vec<KvaField> = seqs.iter().flat_map(|s| s.fields.iter().cloned()).collect();
        let stats = compute_stats(&all)?;
        Ok((seqs, stats, gate_params(&self.config)))
    }

    /// Per-token routing decisions and motion-binned routing statistics.
    pub fn route(&self, fields: &Path) -> Result<Vec<PathBuf>> {
        let cfg = &self.config;
        let stride = cfg.router.dims.stride;
        let (seqs, stats, params) = self.corpus(fields)?;
        let mut written = Vec::new();

        let mut header: Vec<String> = ["frame", "token", "row", "col", "tool", "motion"]
            .map(String::from)
            .to_vec();
        for m in Modality::ALL {
            header.push(format!("p_{}", m.name()));
        }
        for m in Modality::ALL {
            header.push(format!("w_{}", m.name()));
        }
        for m in Modality::ALL {
            header.push(format!("sub_{}", m.name()));
        }
        header.push("skip_prob".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();

        // (motion, soft skip, hard skip, fine, transport, top-1 expert) of moving tool tokens
        let mut samples: Vec<(f64, f64, f64, f64, f64, usize)> = Vec::new();
        for seq in &seqs {
            let routes = route_sequence(cfg, &params, &stats, &seq.fields)?;
            let mut rows = Vec::new();
            for (f, r) in seq.fields.iter().zip(&routes) {
                let speed = token_speed(f, stride);
                let tool = tool_token_mask(f, stride)?;
                let d = &r.decision;
                for u in 0..d.tokens() {
                    let inner = &d.inner[u];
                    let mean_sub =
                        |s: SubExpert| inner.iter().map(|c| c.probs[s.index()]).sum::<f64>() / NUM_EXPERTS as f64;
                    let skip = mean_sub(SubExpert::Skip);
                    let mut row = vec![
                        f.frame().to_string(),
                        u.to_string(),
                        (u / d.grid_width).to_string(),
                        (u % d.grid_width).to_string(),
                        u8::from(tool[u]).to_string(),
                        fmt(speed[u]),
                    ];
                    row.extend(d.probs[u].iter().map(|&v| fmt(v)));
                    row.extend(d.fusion[u].iter().map(|&v| fmt(v)));
                    row.extend(inner.iter().map(|c| c.sel.name().to_string()));
                    row.push(fmt(skip));
                    rows.push(row);
                    if tool[u] && speed[u] > 0.0 {
                        let hard =
                            inner.iter().filter(|c| c.sel == SubExpert::Skip).count() as f64 / NUM_EXPERTS as f64;
                        let top = crate::priors::top1(&d.probs[u]);
                        samples.push((
                            speed[u],
                            skip,
                            hard,
                            mean_sub(SubExpert::Fine),
                            mean_sub(SubExpert::Transport),
                            top,
                        ));
                    }
                }
            }
            let p = self.path(&format!("routing/{}.csv", seq.id));
            write_table(&p, &header, &rows)?;
            written.push(p);
        }

        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bins = cfg.router.motion_bins;
        let mut stat_rows = Vec::new();
        for b in 0..bins {
            let chunk = &samples[b * samples.len() / bins..(b + 1) * samples.len() / bins];
            let n = chunk.len().max(1) as f64;
            let mean = |f: fn(&(f64, f64, f64, f64, f64, usize)) -> f64| chunk.iter().map(f).sum::<f64>() / n;
            let mut row = vec![
                b.to_string(),
                fmt(chunk.first().map_or(0.0, |s| s.0)),
                fmt(chunk.last().map_or(0.0, |s| s.0)),
                chunk.len().to_string(),
                fmt(mean(|s| s.1)),
                fmt(mean(|s| s.2)),
                fmt(mean(|s| s.3)),
                fmt(mean(|s| s.4)),
            ];
            for m in 0..NUM_EXPERTS {
                row.push(fmt(chunk.iter().filter(|s| s.5 == m).count() as f64 / n));
            }
            stat_rows.push(row);
        }
        let mut sh = vec![
            "bin".to_string(),
            "motion_lo".into(),
            "motion_hi".into(),
            "tokens".into(),
            "skip_fraction".into(),
            "skip_hard".into(),
            "fine_fraction".into(),
            "transport_fraction".into(),
        ];
        sh.extend(Modality::ALL.iter().map(|m| format!("top1_{}", m.name())));
        let sh: Vec<&str> = sh.iter().map(String::as_str).collect();
        let p = self.path("route_stats.csv");
        write_table(&p, &sh, &stat_rows)?;
        written.push(p);
        Ok(written)
    }

    /// All routing objectives, threshold updates and gradient checks.
    pub fn losses(&self, fields: &Path) -> Result<Vec<PathBuf>> {
        let cfg = &self.config;
        let stride = cfg.router.dims.stride;
        let (seqs, stats, params) = self.corpus(fields)?;
        let predictor = CapacityPredictor::random(cfg.router.dims.token_dim, &mut stream(cfg.seed, tags::PREDICTOR));
        let mut noise = stream(cfg.seed, tags::LOSSES);
        let t_embed = timestep_embedding(cfg.router.diffusion_time, cfg.router.dims.time_dim);
        let (eps, tol) = (cfg.losses.gradcheck_eps, cfg.losses.gradcheck_tol);
        let (lr, lc) = (cfg.schedule.distill_lambda_r, cfg.schedule.distill_lambda_c);

        let mut loss_rows = Vec::new();
        let mut tau_rows = Vec::new();
        let mut check_rows = Vec::new();
        for seq in &seqs {
            let routes = route_sequence(cfg, &params, &stats, &seq.fields)?;
            let nt = routes.len() as f64;
            let mut c = LossComponents::default();
            let mut state = PredictorState {
                beta: cfg.losses.ema_beta,
                ..PredictorState::default()
            };
            let mut pred_probs = Vec::new();
            let mut tool = Vec::new();
            let mut frames = Vec::new();
            let mut pis = Vec::new();
            let mut distill = 0.0;
            for (f, r) in seq.fields.iter().zip(&routes) {
                let d = &r.decision;
                let prior = physical_prior(f, stride)?;
                c.kp_alb += kp_alb_loss(&RoutingStats::from_probs(&d.probs), &prior.pi) / nt;
                c.cp += cp_loss(&predictor.logits(&r.embedding.tokens), &d.mask)? / nt;
                let sub = SubRoutingStats::from_decision(d);
                c.sub += sub_stabilizer_loss(&sub.f, &sub.p) / nt;

                let x1 = &r.ctrl.data;
                let x0: Vec<f64> = (0..x1.len()).map(|_| StandardNormal.sample(&mut noise)).collect();
                let pred = vec![0.0; x1.len()];
                c.flow += flow_matching_loss(&pred, &x0, x1, cfg.losses.weights.sigma_min)? / nt;

                let probs = predictor.probs(&r.embedding.tokens);
                let activation: [f64; NUM_EXPERTS] =
                    std::array::from_fn(|i| d.mask.iter().filter(|m| m[i]).count() as f64 / d.tokens().max(1) as f64);
                state = update_thresholds(&state, &probs, &activation)?;
                pred_probs.push(probs);
                let tm = tool_token_mask(f, stride)?;
                tool.push(tm.clone());
                frames.push(GateFrame {
                    tokens: r.embedding.tokens.clone(),
                    c_action: r.embedding.c_action.clone(),
                    t_embed: t_embed.clone(),
                    tool: tm,
                });
                pis.push(prior.pi);
                let (teacher, student) = distill_pair(r);
                distill += distill_loss(&student.to_bundle(), &teacher, lr, lc)?.total / nt;
            }
            c.src = src_loss(&pred_probs, &tool)?;
            let total = total_loss(&c, &cfg.losses.weights)?;
            loss_rows.push(vec![
                seq.id.clone(),
                fmt(c.flow),
                fmt(c.kp_alb),
                fmt(c.src),
                fmt(c.cp),
                fmt(c.sub),
                fmt(total),
                fmt(distill),
            ]);
            for (i, m) in Modality::ALL.iter().enumerate() {
                tau_rows.push(vec![seq.id.clone(), m.name().to_string(), fmt(state.tau[i])]);
            }

            // gradient checks on the middle frame of the clip
            let mid = frames.len() / 2;
            let (_, g) = kp_alb_grad(&params, &frames[mid], &pis[mid]);
            let err = grad_check(
                |x| kp_alb_at(&params, x, &frames[mid], &pis[mid]),
                &outer_params(&params),
                &g,
                eps,
            )?;
            check_rows.push(check_row(&seq.id, "kp_alb", g.len(), err, tol));

            let target = &routes[mid].decision.mask;
            let (_, g) = cp_grad(&predictor, &frames[mid].tokens, target)?;
            let err = grad_check(
                |x| {
                    let mut q = predictor.clone();
                    q.head.set_flat(x);
                    cp_loss(&q.logits(&frames[mid].tokens), target).unwrap_or(f64::NAN)
                },
                &predictor.head.to_flat(),
                &g,
                eps,
            )?;
            check_rows.push(check_row(&seq.id, "cp", g.len(), err, tol));

            let grids: Vec<TokenGrid> = frames.iter().map(|f| f.tokens.clone()).collect();
            let (_, g) = src_grad(&predictor, &grids, &tool)?;
            let err = grad_check(
                |x| {
                    let mut q = predictor.clone();
                    q.head.set_flat(x);
                    let probs: Vec<_> = grids.iter().map(|t| q.probs(t)).collect();
                    src_loss(&probs, &tool).unwrap_or(f64::NAN)
                },
                &predictor.head.to_flat(),
                &g,
                eps,
            )?;
            check_rows.push(check_row(&seq.id, "src", g.len(), err, tol));

            let (teacher, student) = distill_pair(&routes[mid]);
            let (_, g) = distill_grad(&student, &teacher, lr, lc)?;
            let err = grad_check(
                |x| {
                    distill_loss(&student.with_flat(x).to_bundle(), &teacher, lr, lc)
                        .map(|t| t.total)
                        .unwrap_or(f64::NAN)
                },
                &student.to_flat(),
                &g,
                eps,
            )?;
            check_rows.push(check_row(&seq.id, "distill", g.len(), err, tol));
        }

        let mut written = Vec::new();
        let p = self.path("losses.csv");
        write_table(
            &p,
            &["sequence", "flow", "kp_alb", "src", "cp", "sub", "total", "distill"],
            &loss_rows,
        )?;
        written.push(p);
        let p = self.path("thresholds.csv");
        write_table(&p, &["sequence", "expert", "tau"], &tau_rows)?;
        written.push(p);
        let p = self.path("gradcheck.csv");
        write_table(
            &p,
            &[
                "sequence",
                "objective",
                "parameters",
                "max_rel_err",
                "tolerance",
                "pass",
            ],
            &check_rows,
        )?;
        written.push(p);
        Ok(written)
    }

    /// Significance, execution plans, refresh intervals and simulated cost.
    pub fn schedule(&self, fields: &Path) -> Result<Vec<PathBuf>> {
        let cfg = &self.config;
        let sc = &cfg.schedule;
        let (seqs, stats, params) = self.corpus(fields)?;
        let mut summary = Vec::new();
        let mut trace_rows = Vec::new();
        let mut age_rows = Vec::new();

        for seq in &seqs {
            let routes = route_sequence(cfg, &params, &stats, &seq.fields)?;
            let decisions: Vec<_> = routes.iter().map(|r| r.decision.clone()).collect();
            let per_frame = significance_inputs(&seq.fields, &decisions, cfg.router.dims.stride)?;
            let sig = significance(&SignificanceInputs::concat(&per_frame), &sc.significance)?;
            let n = decisions.first().map_or(0, |d| d.tokens());
            let frames: Vec<&[f64]> = sig.normalized.chunks(n.max(1)).collect();
            let plans: Vec<ExecutionPlan> = frames.iter().map(|s| partition(s, &sc.budget)).collect();
            let means: Vec<f64> = frames
                .iter()
                .map(|s| s.iter().sum::<f64>() / s.len().max(1) as f64)
                .collect();
            let adaptive: Vec<usize> = means.iter().map(|&m| refresh_interval(m, &sc.budget)).collect();
            let features: Vec<Vec<f64>> = routes.iter().map(|r| r.ctrl.data.clone()).collect();
            let t = plans.len();

            let full_plans = vec![ExecutionPlan::uniform(Mode::Full, n); t];
            let policies: [(&str, &[ExecutionPlan], RefreshSchedule, Vec<usize>); 4] = [
                ("full", &full_plans, RefreshSchedule::Disabled, vec![1; t]),
                (
                    "fixed-interval",
                    &plans,
                    RefreshSchedule::Intervals(vec![sc.budget.k; t]),
                    vec![sc.budget.k; t],
                ),
                (
                    "adaptive",
                    &plans,
                    RefreshSchedule::Intervals(adaptive.clone()),
                    adaptive.clone(),
                ),
                ("no-refresh", &plans, RefreshSchedule::Disabled, vec![sc.budget.k; t]),
            ];
            for (name, pl, refresh, intervals) in policies {
                let trace = simulate_execution(pl, &refresh, &sc.cost)?;
                let budget = budget_loss(pl, &intervals, &sc.budget)?;
                let temporal = temporal_loss(&features, pl, cfg.router.dims.token_dim)?;
                summary.push(vec![
                    seq.id.clone(),
                    name.to_string(),
                    t.to_string(),
                    n.to_string(),
                    fmt(trace.total_cost),
                    fmt(trace.cost_ratio()),
                    fmt(budget.rho_compute),
                    fmt(budget.rho_refresh),
                    fmt(budget.loss),
                    fmt(temporal),
                    trace.frames.iter().filter(|f| f.refresh).count().to_string(),
                ]);
                for (age, count) in trace.age_histogram.iter().enumerate() {
                    age_rows.push(vec![
                        seq.id.clone(),
                        name.to_string(),
                        age.to_string(),
                        count.to_string(),
                    ]);
                }
                if name == "adaptive" {
                    for (f, m) in trace.frames.iter().zip(&means) {
                        trace_rows.push(vec![
                            seq.id.clone(),
                            f.frame.to_string(),
                            fmt(*m),
                            f.interval.to_string(),
                            u8::from(f.refresh).to_string(),
                            f.n_full.to_string(),
                            f.n_light.to_string(),
                            f.n_reuse.to_string(),
                            fmt(f.cost),
                            f.max_age.to_string(),
                        ]);
                    }
                }
            }
        }

        let mut written = Vec::new();
        let p = self.path("schedule_summary.csv");
        write_table(
            &p,
            &[
                "sequence",
                "policy",
                "frames",
                "tokens",
                "total_cost",
                "cost_ratio",
                "rho_compute",
                "rho_refresh",
                "budget_loss",
                "temporal_loss",
                "refreshes",
            ],
            &summary,
        )?;
        written.push(p);
        let p = self.path("schedule_trace.csv");
        write_table(
            &p,
            &[
                "sequence",
                "frame",
                "mean_significance",
                "interval",
                "refresh",
                "n_full",
                "n_light",
                "n_reuse",
                "cost",
                "max_age",
            ],
            &trace_rows,
        )?;
        written.push(p);
        let p = self.path("cache_age.csv");
        write_table(&p, &["sequence", "policy", "age", "count"], &age_rows)?;
        written.push(p);
        Ok(written)
    }

    /// Scores predicted masks against targets. Both directories hold either
    /// PGM files directly or one sub-directory of PGM files per sequence.
    pub fn eval(&self, pred: &Path, target: &Path) -> Result<Vec<PathBuf>> {
        let pairs: Vec<(String, PathBuf, PathBuf)> = if sorted_entries(target, false, Some("pgm"))?.is_empty() {
            sorted_entries(target, true, None)?
                .into_iter()
                .map(|t| {
                    let id = stem(&t);
                    (id.clone(), pred.join(&id), t)
                })
                .collect()
        } else {
            vec![(stem(target), pred.to_path_buf(), target.to_path_buf())]
        };
        let load = |dir: &Path| -> Result<Vec<_>> {
            sorted_entries(dir, false, Some("pgm"))?
                .iter()
                .map(|p| read_mask(p))
                .collect()
        };
        let mut frame_rows = Vec::new();
        let mut summary = Vec::new();
        for (id, p, t) in pairs {
            let report = evaluate(&load(&p)?, &load(&t)?)?;
            for f in &report.frames {
                frame_rows.push(vec![
                    id.clone(),
                    f.frame.to_string(),
                    fmt_opt(f.cd),
                    fmt_opt(f.ti),
                    fmt_opt(f.af),
                    fmt_opt(f.dice),
                ]);
            }
            let agg = |name: &str, a: &Aggregate| {
                vec![
                    id.clone(),
                    name.to_string(),
                    fmt_opt(a.mean),
                    a.valid.to_string(),
                    a.skipped.to_string(),
                    report.both_empty.to_string(),
                ]
            };
            summary.push(agg("cd", &report.cd));
            summary.push(agg("ti", &report.ti));
            summary.push(agg("af", &report.af));
            summary.push(agg("dice", &report.dice));
        }
        let mut written = Vec::new();
        let path = self.path("eval.csv");
        write_table(&path, &["sequence", "frame", "cd", "ti", "af", "dice"], &frame_rows)?;
        written.push(path);
        let path = self.path("eval_summary.csv");
        write_table(
            &path,
            &["sequence", "metric", "mean", "valid", "skipped", "both_empty"],
            &summary,
        )?;
        written.push(path);
        Ok(written)
    }

    /// Merges CSV files into one long-format table. With no inputs, every CSV
    /// directly under the output directory except the report itself is used.
    pub fn report(&self, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
        let out = self.path("report.csv");
        let inputs: Vec<PathBuf> = if inputs.is_empty() {
            sorted_entries(&self.out, false, Some("csv"))?
                .into_iter()
                .filter(|p| *p != out)
                .collect()
        } else {
            inputs.to_vec()
        };
        let mut rows = Vec::new();
        for p in &inputs {
            let (header, records) = io::read_table(p)?;
            let source = p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            for (i, rec) in records.iter().enumerate() {
                for (h, v) in header.iter().zip(rec) {
                    rows.push(vec![source.clone(), i.to_string(), h.clone(), v.clone()]);
                }
            }
        }
        write_table(&out, &["source", "row", "column", "value"], &rows)?;
        Ok(vec![out])
    }
}

fn check_row(seq: &str, objective: &str, params: usize, err: f64, tol: f64) -> Vec<String> {
    vec![
        seq.to_string(),
        objective.to_string(),
        params.to_string(),
        format!("{err:e}"),
        fmt(tol),
        u8::from(err <= tol).to_string(),
    ]
}

/// Teacher bundle from a routed frame and a deterministic, deliberately
/// weaker student (halved logits and control features).
fn distill_pair(r: &RouteOutput) -> (DistillBundle, StudentLogits) {
    let d = &r.decision;
    let skip: Vec<f64> = d
        .inner
        .iter()
        .map(|row| row.iter().map(|c| c.probs[SubExpert::Skip.index()]).sum::<f64>() / NUM_EXPERTS as f64)
        .collect();
    let teacher = DistillBundle {
        pred: r.embedding.c_action.clone(),
        outer: d.probs.clone(),
        inner: d.inner.iter().map(|row| row.map(|c| c.probs)).collect(),
        skip: skip.clone(),
        ctrl: r.ctrl.data.clone(),
    };
    let logit = |p: f64| (p.max(1e-12) / (1.0 - p).max(1e-12)).ln();
    let student = StudentLogits {
        pred: vec![0.0; teacher.pred.len()],
        outer: d.logits.iter().map(|z| z.map(|v| 0.5 * v)).collect(),
        inner: d
            .inner
            .iter()
            .map(|row| row.map(|c| c.probs.map(|p| 0.5 * p.max(1e-12).ln())))
            .collect(),
        skip: skip.iter().map(|&p| 0.5 * logit(p)).collect(),
        ctrl: r.ctrl.data.iter().map(|v| 0.5 * v).collect(),
    };
    (teacher, student)
}
