use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    episode_loss, init_params, is_encoder_param, pretrain_encoder, run_episode, student_loss,
    AgentConfig, Policy, PretrainConfig,
};
use crate::autodiff::{adam_step_by, AdamConfig, AdamState, ParamStore, Tape};
use crate::lang::{Language, Provenance, SplitName};
use crate::metrics::{
    aggregate, evaluate_episode, AggregateReport, TrajectoryMetrics, TrajectoryRecord,
    SUCCESS_RADIUS,
};
use crate::seed::derive_seed;
use crate::world::Pose;

use super::{
    eval_examples, train_examples, Checkpoint, Example, Regime, TrainConfig, TrainContext,
    TrainerError,
};

/// Metrics at one evaluation point, averaged over the split's episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub iteration: u64,
    /// Mean teacher-forced loss on a fixed probe batch (NaN without
    /// training data).
    pub loss: f64,
    pub val_seen: TrajectoryMetrics,
    pub val_unseen: TrajectoryMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub regime: Regime,
    pub seed: u64,
    pub points: Vec<EvalPoint>,
    /// Iteration with the highest val-unseen SPL (earliest on ties).
    pub selected: u64,
}

pub const RUN_LOG_HEADER: &str = "iteration,loss,split,PL,NE,SR,OSR,SPL,CLS,selected";

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{RUN_LOG_HEADER}\n");
        for p in &self.points {
            for (split, m) in [("val_seen", &p.val_seen), ("val_unseen", &p.val_unseen)] {
                write!(out, "{},{:.6},{split}", p.iteration, p.loss).unwrap();
                for v in m.to_array() {
                    write!(out, ",{v:.4}").unwrap();
                }
                writeln!(out, ",{}", (p.iteration == self.selected) as u8).unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot at the selected iteration.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: RunLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPolicy {
    Greedy,
    Teacher,
}

/// Rolls out every example and scores it; results are in example order.
pub fn evaluate_episodes(
    ctx: &TrainContext,
    agent: &AgentConfig,
    params: &ParamStore,
    examples: &[Example],
    policy: EvalPolicy,
    max_actions: usize,
) -> Result<Vec<TrajectoryMetrics>, TrainerError> {
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let world = &ctx.worlds[ex.world_id];
        let start = Pose::new(world, ex.spec.start(), ex.spec.heading)?;
        let policy = match policy {
            EvalPolicy::Greedy => Policy::Greedy,
            EvalPolicy::Teacher => Policy::Teacher(&ex.spec),
        };
        let mut tape = Tape::new(params);
        let episode = run_episode(
            &mut tape,
            agent,
            world,
            start,
            &ex.pair,
            policy,
            max_actions,
        )?;
        let rec = TrajectoryRecord {
            predicted: episode.trajectory,
            reference: ex.spec.path.clone(),
            goal: ex.spec.goal,
            radius: SUCCESS_RADIUS,
        };
        out.push(evaluate_episode(world, &rec)?);
    }
    Ok(out)
}

fn mean(ms: &[TrajectoryMetrics]) -> TrajectoryMetrics {
    let mut acc = [0.0; 6];
    for m in ms {
        for (a, v) in acc.iter_mut().zip(m.to_array()) {
            *a += v;
        }
    }
    TrajectoryMetrics::from_array(acc.map(|a| a / ms.len().max(1) as f64))
}

fn check_compatible(ctx: &TrainContext, agent: &AgentConfig) -> Result<(), TrainerError> {
    if agent.vocab_size != ctx.vocab.len() || agent.d_view != ctx.view_dim() {
        return Err(TrainerError::Checkpoint(format!(
            "checkpoint expects vocabulary {} and view dim {}, data has {} and {}",
            agent.vocab_size,
            agent.d_view,
            ctx.vocab.len(),
            ctx.view_dim()
        )));
    }
    Ok(())
}

/// Greedy rollouts of a checkpoint over one split under the test side of
/// `regime`; `teacher-oracle` follows the reference paths instead.
pub fn evaluate(
    ckpt: &Checkpoint,
    ctx: &TrainContext,
    split: SplitName,
    regime: Regime,
    seed: u64,
    max_actions: usize,
) -> Result<AggregateReport, TrainerError> {
    check_compatible(ctx, &ckpt.agent)?;
    let policy = if regime == Regime::TeacherOracle {
        EvalPolicy::Teacher
    } else {
        if regime.mode() != ckpt.agent.mode {
            return Err(TrainerError::RegimeMismatch {
                regime: regime.tag(),
                reason: format!("checkpoint is a {:?} agent", ckpt.agent.mode),
            });
        }
        EvalPolicy::Greedy
    };
    let examples = eval_examples(ctx, split, regime, ckpt.agent.mode)?;
    let metrics = evaluate_episodes(
        ctx,
        &ckpt.agent,
        &ckpt.params,
        &examples,
        policy,
        max_actions,
    )?;
    Ok(aggregate(split.tag(), &[(seed, metrics)])?)
}

fn probe_loss(
    ctx: &TrainContext,
    agent: &AgentConfig,
    params: &ParamStore,
    probe: &[Example],
) -> Result<f64, TrainerError> {
    if probe.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for ex in probe {
        let mut tape = Tape::new(params);
        let loss = episode_loss(
            &mut tape,
            agent,
            &ctx.worlds[ex.world_id],
            &ex.spec,
            &ex.pair,
            None,
        )?;
        total += tape.value(loss).item();
    }
    Ok(total / probe.len() as f64)
}

/// Teacher-forced minibatch training with Adam (separate encoder and
/// decoder learning rates), evaluating both validation splits every
/// `eval_interval` iterations and keeping the snapshot with the best
/// val-unseen SPL.
pub fn train(
    cfg: &TrainConfig,
    ctx: &TrainContext,
    seed: u64,
) -> Result<TrainOutcome, TrainerError> {
    cfg.validate()?;
    let regime = cfg.regime;
    let examples = train_examples(ctx, regime)?;
    if examples.is_empty() && cfg.iterations > 0 {
        return Err(TrainerError::RegimeMismatch {
            regime: regime.tag(),
            reason: "no training instructions".into(),
        });
    }
    let seen = eval_examples(ctx, SplitName::ValSeen, regime, regime.mode())?;
    let unseen = eval_examples(ctx, SplitName::ValUnseen, regime, regime.mode())?;
    let agent = ctx.agent_config(&cfg.dims, cfg.dropout, regime.mode());
    let mut params = init_params(&agent, derive_seed(seed, "init", 0))?;
    if let Some(pcfg) = &cfg.pretrain {
        let mut corpus = Vec::new();
        for rec in &ctx.dataset.train {
            for lang in [Language::Source, Language::Target] {
                for prov in [Provenance::Human, Provenance::MT] {
                    corpus.extend(rec.instructions(lang, prov).iter().map(|i| ctx.input(i)));
                }
            }
        }
        let pcfg = PretrainConfig {
            seed: derive_seed(seed, "pretrain", pcfg.seed),
            ..*pcfg
        };
        pretrain_encoder(&agent, &params, &corpus, &pcfg)?.warm_start(&mut params)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train", 0));
    let adam = AdamConfig {
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&params);
    let probe = &examples[..examples.len().min(cfg.batch_size)];

    let fingerprint =
        |rng: &ChaCha8Rng| derive_seed(rng.get_seed()[0] as u64, "rng", rng.get_word_pos() as u64);
    let snapshot = |params: &ParamStore, iteration: u64, rng: &ChaCha8Rng| Checkpoint {
        agent: agent.clone(),
        params: params.clone(),
        iteration,
        rng_fingerprint: fingerprint(rng),
    };
    let mut points = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let eval_point = |params: &ParamStore, iteration: u64| -> Result<EvalPoint, TrainerError> {
        let s = evaluate_episodes(
            ctx,
            &agent,
            params,
            &seen,
            EvalPolicy::Greedy,
            cfg.max_actions,
        )?;
        let u = evaluate_episodes(
            ctx,
            &agent,
            params,
            &unseen,
            EvalPolicy::Greedy,
            cfg.max_actions,
        )?;
        Ok(EvalPoint {
            iteration,
            loss: probe_loss(ctx, &agent, params, probe)?,
            val_seen: mean(&s),
            val_unseen: mean(&u),
        })
    };

    for it in 0..=cfg.iterations as u64 {
        if it > 0 {
            for _ in 0..cfg.batch_size {
                let ex = &examples[rng.gen_range(0..examples.len())];
                let world = &ctx.worlds[ex.world_id];
                let grads = {
                    let mut tape = Tape::new(&params);
                    let loss = if cfg.student_forcing {
                        student_loss(
                            &mut tape,
                            &agent,
                            world,
                            &ex.spec,
                            &ex.pair,
                            Some(&mut rng),
                            cfg.max_actions,
                        )?
                    } else {
                        episode_loss(&mut tape, &agent, world, &ex.spec, &ex.pair, Some(&mut rng))?
                    };
                    tape.backward(loss)?
                };
                params.accumulate(&grads, 1.0 / cfg.batch_size as f64);
            }
            adam_step_by(&mut params, &mut state, &adam, |name| {
                if is_encoder_param(name) {
                    cfg.encoder_lr
                } else {
                    cfg.decoder_lr
                }
            })?;
        }
        if it % cfg.eval_interval as u64 == 0 {
            let point = eval_point(&params, it)?;
            let spl = point.val_unseen.spl;
            if best.as_ref().is_none_or(|(b, _)| spl > *b) {
                best = Some((spl, snapshot(&params, it, &rng)));
            }
            points.push(point);
        }
    }
    let (_, best) = best.expect("iteration 0 is always evaluated");
    let log = RunLog {
        regime,
        seed,
        points,
        selected: best.iteration,
    };
    Ok(TrainOutcome {
        last: snapshot(&params, cfg.iterations as u64, &rng),
        best,
        log,
    })
}
