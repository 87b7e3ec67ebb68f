use xlnav::agent::{init_params, MAX_ACTIONS};
use xlnav::lang::{
    generate_worlds, make_dataset, DatasetConfig, Language, Lexicon, MtConfig, Provenance,
    SplitName,
};
use xlnav::seed::derive_seed;
use xlnav::trainer::{
    evaluate, train, train_examples, train_regime, AgentDims, Checkpoint, Regime, TrainConfig,
    TrainContext, TrainerError, THREADS_ENV,
};

fn data(epsilon: f64, n_train: usize) -> DatasetConfig {
    DatasetConfig {
        seed: 11,
        seen_worlds: 2,
        unseen_worlds: 1,
        n_train,
        n_val_seen: 4,
        n_val_unseen: 4,
        epsilon,
        ..DatasetConfig::default()
    }
}

fn small(regime: Regime, iterations: usize, eval_interval: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        eval_interval,
        batch_size: 4,
        regime,
        seeds: vec![0],
        dims: AgentDims {
            d_embed: 8,
            d_enc: 12,
            d_dec: 12,
            shared_embedding: true,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn zero_iterations_keep_the_initial_parameters() {
    let ctx = TrainContext::generate(&data(0.0, 6), &MtConfig::default()).unwrap();
    let cfg = small(Regime::MonoSrc, 0, 1);
    let out = train(&cfg, &ctx, 4).unwrap();
    assert_eq!(out.log.points.len(), 1);
    assert_eq!(out.log.selected, 0);
    assert_eq!(out.best.iteration, 0);
    assert_eq!(
        out.best.params,
        init_params(&out.best.agent, derive_seed(4, "init", 0)).unwrap()
    );
    assert_eq!(out.best.to_bytes(), out.last.to_bytes());
}

#[test]
fn probe_loss_falls_on_a_tiny_dataset() {
    let ctx = TrainContext::generate(&data(0.0, 4), &MtConfig::default()).unwrap();
    let cfg = TrainConfig {
        dropout: 0.0,
        ..small(Regime::MonoSrc, 200, 100)
    };
    let log = train(&cfg, &ctx, 0).unwrap().log;
    let losses: Vec<f64> = log.points.iter().map(|p| p.loss).collect();
    assert!(losses[2] < losses[0], "{losses:?}");
}

#[test]
fn runs_repeat_bit_for_bit() {
    let ctx = TrainContext::generate(&data(0.3, 10), &MtConfig::default()).unwrap();
    let cfg = small(Regime::Xli, 40, 20);
    let a = train(&cfg, &ctx, 9).unwrap();
    let b = train(&cfg, &ctx, 9).unwrap();
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    assert_eq!(a.best.to_bytes(), b.best.to_bytes());
    assert_eq!(a.last.to_bytes(), b.last.to_bytes());
    let c = train(&cfg, &ctx, 10).unwrap();
    assert_ne!(a.last.to_bytes(), c.last.to_bytes());
}

#[test]
fn selection_is_the_best_unseen_spl() {
    let ctx = TrainContext::generate(&data(0.0, 12), &MtConfig::default()).unwrap();
    let out = train(&small(Regime::MonoSrc, 60, 10), &ctx, 1).unwrap();
    let best = out
        .log
        .points
        .iter()
        .map(|p| p.val_unseen.spl)
        .fold(f64::NEG_INFINITY, f64::max);
    let first = out
        .log
        .points
        .iter()
        .find(|p| p.val_unseen.spl == best)
        .unwrap();
    assert_eq!(out.log.selected, first.iteration);
    assert_eq!(out.best.iteration, first.iteration);
    assert_eq!(out.last.iteration, 60);
    // the snapshot reproduces the logged score
    let r = evaluate(
        &out.best,
        &ctx,
        SplitName::ValUnseen,
        Regime::MonoSrc,
        1,
        MAX_ACTIONS,
    )
    .unwrap();
    assert_eq!(r.mean.spl, best);
}

#[test]
fn teacher_oracle_is_perfect_on_every_split() {
    let ctx = TrainContext::generate(&data(0.5, 10), &MtConfig::default()).unwrap();
    let agent = ctx.agent_config(&AgentDims::default(), 0.0, xlnav::agent::Mode::Mono);
    let ckpt = Checkpoint {
        params: init_params(&agent, 0).unwrap(),
        agent,
        iteration: 0,
        rng_fingerprint: 0,
    };
    for split in SplitName::ALL {
        let r = evaluate(&ckpt, &ctx, split, Regime::TeacherOracle, 0, MAX_ACTIONS).unwrap();
        assert_eq!(
            (r.mean.sr, r.mean.ne, r.mean.spl, r.mean.cls),
            (1.0, 0.0, 1.0, 1.0),
            "{}",
            split.tag()
        );
    }
}

#[test]
fn zero_coverage_training_never_sees_human_target() {
    let ctx = TrainContext::generate(&data(0.0, 20), &MtConfig::default()).unwrap();
    for regime in [
        Regime::MonoSrc,
        Regime::TrainMt,
        Regime::TestMt,
        Regime::Xli,
        Regime::AnEn,
        Regime::AnMt,
    ] {
        let examples = train_examples(&ctx, regime).unwrap();
        assert!(!examples.is_empty(), "{}", regime.tag());
        for ex in &examples {
            assert!(
                !ex.sources.contains(&(Language::Target, Provenance::Human)),
                "{}",
                regime.tag()
            );
        }
    }
    assert!(train_examples(&ctx, Regime::TrainAn).unwrap().is_empty());

    let full = TrainContext::generate(&data(1.0, 20), &MtConfig::default()).unwrap();
    let an = train_examples(&full, Regime::TrainAn).unwrap();
    assert!(an
        .iter()
        .all(|ex| ex.sources == [(Language::Target, Provenance::Human)]));
}

#[test]
fn xli_pairs_one_instruction_per_language() {
    let ctx = TrainContext::generate(&data(0.5, 20), &MtConfig::default()).unwrap();
    for ex in train_examples(&ctx, Regime::Xli).unwrap() {
        let langs: Vec<Language> = ex.sources.iter().map(|s| s.0).collect();
        assert!(
            langs == [Language::Source, Language::Target]
                || langs == [Language::Target, Language::Source]
        );
    }
}

#[test]
fn translation_regimes_need_the_cache() {
    let cfg = data(0.0, 6);
    let lexicon = Lexicon::new(cfg.world.n_categories, cfg.world.n_attributes).unwrap();
    let (worlds, assign) = generate_worlds(&cfg).unwrap();
    let dataset = make_dataset(&lexicon, &worlds, &assign, &cfg).unwrap();
    let ctx = TrainContext::new(lexicon, worlds, dataset, None).unwrap();
    for regime in [Regime::TrainMt, Regime::Xli] {
        let err = train(&small(regime, 10, 10), &ctx, 0).unwrap_err();
        assert!(matches!(err, TrainerError::RegimeMismatch { .. }), "{err}");
    }
    assert!(train(&small(Regime::MonoSrc, 10, 10), &ctx, 0).is_ok());
}

#[test]
fn interval_must_divide_iterations() {
    let ctx = TrainContext::generate(&data(0.0, 6), &MtConfig::default()).unwrap();
    let err = train(&small(Regime::MonoSrc, 10, 3), &ctx, 0).unwrap_err();
    assert!(matches!(err, TrainerError::Config(_)));
}

#[test]
fn warm_start_is_no_worse_at_iteration_100() {
    let ctx = TrainContext::generate(&data(0.0, 40), &MtConfig::default()).unwrap();
    let cold = TrainConfig {
        dropout: 0.0,
        ..small(Regime::MonoSrc, 100, 100)
    };
    let warm = TrainConfig {
        pretrain: Some(xlnav::agent::PretrainConfig::default()),
        ..cold.clone()
    };
    let c = train(&cold, &ctx, 2).unwrap().log;
    let w = train(&warm, &ctx, 2).unwrap().log;
    assert!(
        w.points[1].loss <= c.points[1].loss,
        "warm {} cold {}",
        w.points[1].loss,
        c.points[1].loss
    );
}

#[test]
fn worker_count_does_not_change_results() {
    // the only test in this binary that reads the pool size
    let ctx = TrainContext::generate(&data(0.0, 8), &MtConfig::default()).unwrap();
    let cfg = TrainConfig {
        seeds: vec![0, 1, 2],
        ..small(Regime::MonoSrc, 20, 10)
    };
    let bytes = |threads: &str| {
        std::env::set_var(THREADS_ENV, threads);
        let r = train_regime(&ctx, &cfg).unwrap();
        r.runs.iter().map(|o| o.best.to_bytes()).collect::<Vec<_>>()
    };
    let one = bytes("1");
    let three = bytes("3");
    std::env::remove_var(THREADS_ENV);
    assert_eq!(one, three);
}
