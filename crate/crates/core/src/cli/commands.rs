use std::fs;
use std::path::Path;

use serde_json::json;

use crate::agent::{init_params, run_episode, AgentError, Mode, Policy, PretrainConfig};
use crate::autodiff::Tape;
use crate::lang::{
    corpus_stats, ensure_mt, generate_worlds, make_dataset, DatasetConfig, Language, Lexicon,
    MtConfig, Provenance, SplitName,
};
use crate::metrics::{evaluate_episode, results_csv, TrajectoryRecord, SUCCESS_RADIUS};
use crate::trainer::{
    encoder_ablation, eval_examples, evaluate, spearman, train_regime, transfer_sweep, world_file,
    zero_shot_experiment, AgentDims, Checkpoint, Regime, RegimeResult, SweepMethod, TrainConfig,
    TrainContext, DEFAULT_EPSILONS,
};
use crate::world::{generate_world, Action, Pose, WorldConfig};

use super::manifest::io_err;
use super::{
    AblationArgs, CliError, CorpusStatsArgs, EvalArgs, ExperimentArgs, GenDataArgs, GenWorldArgs,
    InspectArgs, OutputDir, RunArgs, RunManifest, SweepArgs, TrainArgs,
};

const VOCAB_FILE: &str = "vocab.json";

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_split(s: &str) -> Result<SplitName, CliError> {
    SplitName::parse(s).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown split `{s}`; valid: train, val_seen, val_unseen"
        ))
    })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| CliError::Usage(format!("bad {what} `{p}` in `{s}`")))
        })
        .collect()
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn load_context(dir: &Path, mt: Option<&MtConfig>) -> Result<TrainContext, CliError> {
    Ok(TrainContext::load(dir, mt)?)
}

fn resolve_run(run: &RunArgs) -> Result<TrainConfig, CliError> {
    let mut cfg: TrainConfig = match &run.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = &run.seeds {
        cfg.seeds = parse_list(s, "seed")?;
    }
    if let Some(n) = run.iterations {
        cfg.iterations = n;
        if run.eval_interval.is_none() && (cfg.eval_interval == 0 || n % cfg.eval_interval != 0) {
            cfg.eval_interval = n.max(1);
        }
    }
    if let Some(n) = run.eval_interval {
        cfg.eval_interval = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment_data(args: &ExperimentArgs) -> Result<(DatasetConfig, Vec<String>), CliError> {
    match &args.data {
        Some(dir) => Ok((read_json(&dir.join("dataset.json"))?, vec![display(dir)])),
        None => Ok((DatasetConfig::default(), Vec::new())),
    }
}

/// Selected checkpoint and run log of every seed under `prefix`.
fn write_runs(
    out: &mut OutputDir,
    prefix: &str,
    result: &RegimeResult,
    vocab: &[u8],
) -> Result<(), CliError> {
    for run in &result.runs {
        let dir = format!("{prefix}/seed_{}", run.log.seed);
        out.write(&format!("{dir}/best.ckpt"), &run.best.to_bytes())?;
        out.write(&format!("{dir}/run_log.csv"), run.log.to_csv().as_bytes())?;
        out.write(&format!("{dir}/{VOCAB_FILE}"), vocab)?;
    }
    Ok(())
}

fn vocab_bytes(ctx: &TrainContext) -> Result<Vec<u8>, CliError> {
    Ok((serde_json::to_string_pretty(&ctx.vocab)? + "\n").into_bytes())
}

pub fn gen_world(a: &GenWorldArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let mut cfg = WorldConfig::default();
    if let Some(n) = a.viewpoints {
        cfg.n_viewpoints = n;
    }
    let world = generate_world(a.seed, &cfg)?;
    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    out.write("world.json", (world.to_json()? + "\n").as_bytes())?;
    println!(
        "world with {} viewpoints and {} edges",
        world.len(),
        world.edges().len()
    );
    out.finish(
        "gen-world",
        args,
        json!({ "seed": a.seed, "world": cfg }),
        vec![a.seed],
        vec![],
    )
}

pub fn gen_data(a: &GenDataArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let mut cfg: DatasetConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => DatasetConfig::default(),
    };
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    set(&mut cfg.seen_worlds, a.worlds);
    set(&mut cfg.unseen_worlds, a.unseen_worlds);
    set(&mut cfg.n_train, a.train);
    set(&mut cfg.n_val_seen, a.val_seen);
    set(&mut cfg.n_val_unseen, a.val_unseen);
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    cfg.validate()?;

    let lexicon = Lexicon::new(cfg.world.n_categories, cfg.world.n_attributes)?;
    let (worlds, assign) = generate_worlds(&cfg)?;
    let mut dataset = make_dataset(&lexicon, &worlds, &assign, &cfg)?;
    let mt = (!a.no_mt).then(MtConfig::default);
    if let Some(mt) = &mt {
        ensure_mt(&mut dataset, &lexicon, mt)?;
    }

    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    for (i, w) in worlds.iter().enumerate() {
        out.write(&world_file(i), (w.to_json()? + "\n").as_bytes())?;
    }
    dataset.save(out.root())?;
    out.record("dataset.json")?;
    for s in SplitName::ALL {
        out.record(&format!("{}.json", s.tag()))?;
    }
    println!(
        "{} worlds, {}/{}/{} trajectories",
        worlds.len(),
        dataset.train.len(),
        dataset.val_seen.len(),
        dataset.val_unseen.len()
    );
    out.finish(
        "gen-data",
        args,
        json!({ "dataset": cfg, "mt": mt }),
        vec![cfg.seed],
        vec![],
    )
}

pub fn train_cmd(a: &TrainArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let mut cfg = resolve_run(&a.run)?;
    if let Some(r) = &a.regime {
        cfg.regime = Regime::parse(r)?;
    }
    let ctx = load_context(&a.data, Some(&cfg.mt))?;
    cfg.epsilon = ctx.dataset.config.epsilon;
    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    let result = train_regime(&ctx, &cfg)?;

    out.write_json("config.json", &cfg)?;
    let vocab = vocab_bytes(&ctx)?;
    out.write(VOCAB_FILE, &vocab)?;
    for run in &result.runs {
        let dir = format!("seed_{}", run.log.seed);
        out.write(&format!("{dir}/best.ckpt"), &run.best.to_bytes())?;
        out.write(&format!("{dir}/last.ckpt"), &run.last.to_bytes())?;
        out.write(&format!("{dir}/run_log.csv"), run.log.to_csv().as_bytes())?;
        out.write(&format!("{dir}/{VOCAB_FILE}"), &vocab)?;
    }
    out.write(
        "results.csv",
        results_csv([&result.val_seen, &result.val_unseen]).as_bytes(),
    )?;
    println!(
        "{}: val_seen SR {:.4} SPL {:.4}, val_unseen SR {:.4} SPL {:.4}",
        cfg.regime.tag(),
        result.val_seen.mean.sr,
        result.val_seen.mean.spl,
        result.val_unseen.mean.sr,
        result.val_unseen.mean.spl
    );
    let seeds = cfg.seeds.clone();
    out.finish(
        "train",
        args,
        serde_json::to_value(&cfg)?,
        seeds,
        vec![display(&a.data)],
    )
}

pub fn eval_cmd(a: &EvalArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let regime = Regime::parse(&a.regime)?;
    let splits = match &a.split {
        Some(s) => vec![parse_split(s)?],
        None => vec![SplitName::ValSeen, SplitName::ValUnseen],
    };
    let ctx = load_context(&a.data, Some(&MtConfig::default()))?;
    let mut inputs = vec![display(&a.data)];
    let ckpt = match &a.checkpoint {
        Some(path) => {
            inputs.push(display(path));
            let ckpt = Checkpoint::load(path)?;
            let vocab_path = path.with_file_name(VOCAB_FILE);
            if vocab_path.exists() {
                let saved: crate::lang::Vocabulary = read_json(&vocab_path)?;
                if saved.tokens() != ctx.vocab.tokens() {
                    return Err(CliError::Usage(format!(
                        "{} does not match the vocabulary of {}",
                        vocab_path.display(),
                        a.data.display()
                    )));
                }
            }
            ckpt
        }
        None if regime == Regime::TeacherOracle => {
            let agent = ctx.agent_config(&AgentDims::default(), 0.0, Mode::Mono);
            Checkpoint {
                params: init_params(&agent, 0)?,
                agent,
                iteration: 0,
                rng_fingerprint: 0,
            }
        }
        None => {
            return Err(CliError::Usage(
                "--checkpoint is required unless --regime teacher-oracle".into(),
            ))
        }
    };
    let reports = splits
        .iter()
        .map(|&s| evaluate(&ckpt, &ctx, s, regime, a.seed, a.max_actions))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    out.write("results.csv", results_csv(&reports).as_bytes())?;
    for r in &reports {
        println!(
            "{}: SR {:.4} SPL {:.4} NE {:.4}",
            r.split, r.mean.sr, r.mean.spl, r.mean.ne
        );
    }
    let config = json!({
        "regime": regime,
        "splits": splits.iter().map(|s| s.tag()).collect::<Vec<_>>(),
        "max_actions": a.max_actions,
    });
    out.finish("eval", args, config, vec![a.seed], inputs)
}

pub fn zero_shot_cmd(a: &ExperimentArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let cfg = resolve_run(&a.run)?;
    let (data, inputs) = experiment_data(a)?;
    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    let report = zero_shot_experiment(&data, &cfg)?;
    let vocab_ctx = TrainContext::generate(
        &DatasetConfig {
            epsilon: 0.0,
            ..data.clone()
        },
        &cfg.mt,
    )?;
    let vocab_full = TrainContext::generate(
        &DatasetConfig {
            epsilon: 1.0,
            ..data.clone()
        },
        &cfg.mt,
    )?;
    out.write("zero_shot.csv", report.to_csv().as_bytes())?;
    for row in &report.rows {
        let ctx = if row.regime == Regime::TrainAn {
            &vocab_full
        } else {
            &vocab_ctx
        };
        write_runs(
            &mut out,
            &format!("runs/{}", row.regime.tag()),
            row,
            &vocab_bytes(ctx)?,
        )?;
    }
    let margin = report.xli_margin();
    out.write_json(
        "summary.json",
        &json!({ "xli_margin_val_unseen_spl": margin }),
    )?;
    println!("xli margin over the best translation baseline (val_unseen SPL): {margin:+.4}");
    let seeds = cfg.seeds.clone();
    out.finish(
        "zero-shot",
        args,
        json!({ "train": cfg, "dataset": data }),
        seeds,
        inputs,
    )
}

pub fn sweep_cmd(a: &SweepArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let cfg = resolve_run(&a.experiment.run)?;
    let (data, inputs) = experiment_data(&a.experiment)?;
    let epsilons = match &a.epsilons {
        Some(s) => parse_list(s, "epsilon")?,
        None => DEFAULT_EPSILONS.to_vec(),
    };
    let mut out = OutputDir::create(&a.experiment.out.out, a.experiment.out.force)?;
    let report = transfer_sweep(&data, &cfg, &epsilons)?;
    out.write("transfer_sweep.csv", report.to_csv().as_bytes())?;
    for p in &report.points {
        let ctx = TrainContext::generate(
            &DatasetConfig {
                epsilon: p.epsilon,
                ..data.clone()
            },
            &cfg.mt,
        )?;
        let prefix = format!("runs/eps_{:.1}/{}", p.epsilon, p.method.tag());
        write_runs(&mut out, &prefix, &p.result, &vocab_bytes(&ctx)?)?;
    }

    let xli = report.curve(SweepMethod::Xli, SplitName::ValUnseen);
    let an = report.curve(SweepMethod::An, SplitName::ValUnseen);
    let (eps, xli_spl): (Vec<f64>, Vec<f64>) = xli.iter().copied().unzip();
    let rho = spearman(&eps, &xli_spl);
    let xli_ge_an = xli.iter().zip(&an).all(|(x, b)| x.1 >= b.1);
    let at =
        |curve: &[(f64, f64)], e: f64| curve.iter().find(|p| (p.0 - e).abs() < 1e-9).map(|p| p.1);
    let summary = json!({
        "xli_val_unseen_spl_spearman": rho,
        "xli_at_least_an_every_epsilon": xli_ge_an,
        "xli_val_unseen_spl_at_0.2": at(&xli, 0.2),
        "an_val_unseen_spl_at_1.0": at(&an, 1.0),
    });
    out.write_json("summary.json", &summary)?;
    println!("xli val_unseen SPL rank correlation with coverage: {rho:.4}; xli >= an everywhere: {xli_ge_an}");
    let seeds = cfg.seeds.clone();
    let config = json!({ "train": cfg, "dataset": data, "epsilons": epsilons });
    out.finish("transfer-sweep", args, config, seeds, inputs)
}

pub fn ablation_cmd(a: &AblationArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let cfg = resolve_run(&a.experiment.run)?;
    let (data, inputs) = experiment_data(&a.experiment)?;
    let pretrain = a.pretrain.then(|| {
        let mut p = PretrainConfig::default();
        if let Some(s) = a.pretrain_steps {
            p.steps = s;
        }
        p
    });
    let mut out = OutputDir::create(&a.experiment.out.out, a.experiment.out.force)?;
    let report = encoder_ablation(&data, &cfg, pretrain)?;
    let ctx = TrainContext::generate(
        &DatasetConfig {
            epsilon: 1.0,
            ..data.clone()
        },
        &cfg.mt,
    )?;
    let vocab = vocab_bytes(&ctx)?;
    out.write("ablation.csv", report.to_csv().as_bytes())?;
    for row in &report.rows {
        write_runs(
            &mut out,
            &format!("runs/{}/train-an", row.encoder),
            &row.an,
            &vocab,
        )?;
        write_runs(
            &mut out,
            &format!("runs/{}/train-mt", row.encoder),
            &row.mt,
            &vocab,
        )?;
        println!(
            "{}: delta SPL seen {:+.4}, unseen {:+.4}",
            row.encoder,
            row.delta_spl(SplitName::ValSeen),
            row.delta_spl(SplitName::ValUnseen)
        );
    }
    let seeds = cfg.seeds.clone();
    let config = json!({ "train": cfg, "dataset": data, "pretrain": pretrain });
    out.finish("encoder-ablation", args, config, seeds, inputs)
}

fn action_json(a: &Action) -> serde_json::Value {
    match a {
        Action::MoveTo(v) => json!({ "move_to": v }),
        Action::Stop => json!("stop"),
    }
}

pub fn inspect_cmd(a: &InspectArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let split = parse_split(&a.split)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    if ckpt.agent.mode != Mode::Xli {
        return Err(AgentError::NotXli.into());
    }
    let ctx = load_context(&a.data, Some(&MtConfig::default()))?;
    if ckpt.agent.vocab_size != ctx.vocab.len() || ckpt.agent.d_view != ctx.view_dim() {
        return Err(CliError::Usage(format!(
            "checkpoint does not fit {} (vocabulary {} vs {})",
            a.data.display(),
            ckpt.agent.vocab_size,
            ctx.vocab.len()
        )));
    }
    let examples = eval_examples(&ctx, split, Regime::Xli, Mode::Xli)?;
    let ex = examples
        .iter()
        .filter(|e| e.path_id == a.episode_id)
        .nth(a.instruction)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "no instruction pair {} for trajectory {} in {}",
                a.instruction,
                a.episode_id,
                split.tag()
            ))
        })?;
    let world = &ctx.worlds[ex.world_id];
    let mut tape = Tape::new(&ckpt.params);
    let start = Pose::new(world, ex.spec.start(), ex.spec.heading)?;
    let episode = run_episode(
        &mut tape,
        &ckpt.agent,
        world,
        start,
        &ex.pair,
        Policy::Greedy,
        a.max_actions,
    )?;
    let metrics = evaluate_episode(
        world,
        &TrajectoryRecord {
            predicted: episode.trajectory.clone(),
            reference: ex.spec.path.clone(),
            goal: ex.spec.goal,
            radius: SUCCESS_RADIUS,
        },
    )?;

    let streams: Vec<_> = ex
        .pair
        .streams(Mode::Xli)?
        .iter()
        .zip(&ex.sources)
        .map(|(input, (lang, prov))| {
            json!({
                "language": lang,
                "provenance": match prov { Provenance::Human => "human", Provenance::MT => "mt" },
                "tokens": input.ids.iter().map(|&i| ctx.vocab.token(i as u32).unwrap_or("?")).collect::<Vec<_>>(),
            })
        })
        .collect();
    let steps: Vec<_> = episode
        .steps
        .iter()
        .map(|s| {
            json!({
                "t": s.t,
                "viewpoint": s.viewpoint,
                "heading": s.heading,
                "alpha": s.alpha,
                "candidates": s.candidates.iter().map(action_json).collect::<Vec<_>>(),
                "probs": s.probs,
                "chosen": action_json(&s.candidates[s.chosen]),
                "streams": s.streams.iter().map(|t| json!({
                    "language": t.language,
                    "text_attention": t.text_attention,
                    "visual_attention": t.visual_attention,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = json!({
        "split": split.tag(),
        "path_id": ex.path_id,
        "world_id": ex.world_id,
        "reference": ex.spec.path,
        "trajectory": episode.trajectory,
        "alpha_language": Language::Source,
        "instructions": streams,
        "steps": steps,
        "metrics": {
            "PL": metrics.pl, "NE": metrics.ne, "SR": metrics.sr,
            "OSR": metrics.osr, "SPL": metrics.spl, "CLS": metrics.cls,
        },
    });
    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    out.write_json("inspect.json", &doc)?;
    println!("{} steps, success {}", episode.steps.len(), metrics.sr);
    let config = json!({
        "split": split.tag(),
        "episode_id": a.episode_id,
        "instruction": a.instruction,
        "max_actions": a.max_actions,
    });
    out.finish(
        "inspect",
        args,
        config,
        vec![],
        vec![display(&a.checkpoint), display(&a.data)],
    )
}

pub fn corpus_stats_cmd(a: &CorpusStatsArgs, args: &[String]) -> Result<RunManifest, CliError> {
    let split = parse_split(&a.split)?;
    let ctx = load_context(&a.data, None)?;
    let mut corpus = Vec::new();
    for rec in ctx.dataset.split(split) {
        for lang in [Language::Source, Language::Target] {
            corpus.extend(rec.human(lang));
        }
    }
    let stats = corpus_stats(&ctx.lexicon, &corpus);
    let mut out = OutputDir::create(&a.out.out, a.out.force)?;
    out.write("corpus_stats.csv", stats.to_csv().as_bytes())?;
    println!("{} human instructions", corpus.len());
    out.finish(
        "corpus-stats",
        args,
        json!({ "split": split.tag(), "provenance": "human" }),
        vec![],
        vec![display(&a.data)],
    )
}
