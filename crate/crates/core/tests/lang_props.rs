use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xlnav::lang::{
    build_vocab, corpus_stats, detokenize, ensure_mt, generate_instruction, generate_worlds,
    make_dataset, mt_translate, tokenize, DatasetConfig, Instruction, LangError, Language, Lexicon,
    MtConfig, Provenance, Role, WorldAssignment,
};
use xlnav::world::{generate_world, sample_trajectory, World, WorldConfig};

fn setup() -> (Lexicon, World) {
    let cfg = WorldConfig::default();
    (
        Lexicon::new(cfg.n_categories, cfg.n_attributes).unwrap(),
        generate_world(7, &cfg).unwrap(),
    )
}

/// `n` (source, target) human instruction pairs over sampled paths.
fn corpus(lex: &Lexicon, world: &World, n: usize, seed: u64) -> Vec<(Instruction, Instruction)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let spec = sample_trajectory(world, &mut rng, 3, 6).unwrap();
            let s = generate_instruction(lex, world, &spec, Language::Source, &mut rng, i as u64);
            let t = generate_instruction(lex, world, &spec, Language::Target, &mut rng, i as u64);
            (s, t)
        })
        .collect()
}

fn content(lex: &Lexicon, tokens: &[u32]) -> Vec<u32> {
    tokens
        .iter()
        .copied()
        .filter(|&t| lex.entry(t).unwrap().role.is_content())
        .collect()
}

fn categories(lex: &Lexicon, tokens: &[u32]) -> Vec<usize> {
    tokens
        .iter()
        .map(|&t| lex.entry(t).unwrap())
        .filter(|e| e.role == Role::Category)
        .map(|e| e.concept)
        .collect()
}

fn chi_square(a: &[Instruction], b: &[Instruction]) -> f64 {
    let mut table: BTreeMap<u32, [f64; 2]> = BTreeMap::new();
    for (col, set) in [a, b].into_iter().enumerate() {
        for inst in set {
            for &t in &inst.tokens {
                table.entry(t).or_default()[col] += 1.0;
            }
        }
    }
    let totals = table
        .values()
        .fold([0.0, 0.0], |acc, r| [acc[0] + r[0], acc[1] + r[1]]);
    let grand = totals[0] + totals[1];
    let mut stat = 0.0;
    for row in table.values() {
        let row_total = row[0] + row[1];
        for col in 0..2 {
            let expected = row_total * totals[col] / grand;
            stat += (row[col] - expected).powi(2) / expected;
        }
    }
    stat
}

#[test]
fn generation_is_deterministic_per_seed() {
    let (lex, world) = setup();
    let spec = sample_trajectory(&world, &mut ChaCha8Rng::seed_from_u64(2), 3, 6).unwrap();
    for lang in [Language::Source, Language::Target] {
        let a = generate_instruction(
            &lex,
            &world,
            &spec,
            lang,
            &mut ChaCha8Rng::seed_from_u64(9),
            0,
        );
        let b = generate_instruction(
            &lex,
            &world,
            &spec,
            lang,
            &mut ChaCha8Rng::seed_from_u64(9),
            0,
        );
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.sub_instructions(&lex), spec.hops() + 1);
    }
}

#[test]
fn target_instructions_are_shorter_on_average() {
    let (lex, world) = setup();
    let pairs = corpus(&lex, &world, 1000, 1);
    let mean = |f: fn(&(Instruction, Instruction)) -> usize| {
        pairs.iter().map(f).sum::<usize>() as f64 / 1000.0
    };
    let src = mean(|p| p.0.tokens.len());
    let tgt = mean(|p| p.1.tokens.len());
    assert!(tgt < src, "target {tgt} vs source {src}");
    eprintln!("mean lengths: source {src}, target {tgt}");
    assert!(pairs
        .iter()
        .all(|p| p.0.tokens.len() <= 80 && p.1.tokens.len() <= 80));
}

#[test]
fn full_drop_leaves_content_and_punctuation() {
    let (lex, world) = setup();
    let cfg = MtConfig {
        p_drop: 1.0,
        ..MtConfig::default()
    };
    for (s, t) in corpus(&lex, &world, 100, 2) {
        for (inst, to) in [(s, Language::Target), (t, Language::Source)] {
            let out = mt_translate(&lex, &inst, to, &cfg).unwrap().instruction;
            assert_eq!(out.provenance, Provenance::MT);
            for tok in out.tokens {
                let role = lex.entry(tok).unwrap().role;
                assert!(role.is_content() || role == Role::Punct, "{}", out.text);
            }
        }
    }
}

#[test]
fn noisy_translation_widens_the_distribution_gap() {
    let (lex, world) = setup();
    let pairs = corpus(&lex, &world, 1000, 3);
    let human_tgt: Vec<Instruction> = pairs.iter().map(|p| p.1.clone()).collect();
    let translate = |cfg: &MtConfig| -> Vec<Instruction> {
        pairs
            .iter()
            .map(|p| {
                mt_translate(&lex, &p.0, Language::Target, cfg)
                    .unwrap()
                    .instruction
            })
            .collect()
    };
    let noisy = chi_square(&translate(&MtConfig::default()), &human_tgt);
    let clean = chi_square(&translate(&MtConfig::noise_free(0)), &human_tgt);
    assert!(noisy > clean, "noisy {noisy} vs noise-free {clean}");
    eprintln!("chi-square: noisy {noisy}, noise-free {clean}");
}

#[test]
fn vocabulary_matches_hand_counts() {
    let (lex, world) = setup();
    let pairs = corpus(&lex, &world, 25, 4);
    let sentences: Vec<Vec<&str>> = pairs
        .iter()
        .flat_map(|(s, t)| [s, t])
        .map(|i| i.tokens.iter().map(|&t| lex.text(t)).collect())
        .collect();
    assert_eq!(sentences.len(), 50);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in &sentences {
        for w in s {
            *counts.entry(w).or_default() += 1;
        }
    }
    let expected = 4 + counts.values().filter(|&&c| c >= 5).count();
    let vocab = build_vocab(sentences.iter().map(|s| s.iter().copied()), 5).unwrap();
    assert_eq!(vocab.len(), expected);
    for (w, c) in counts {
        assert_eq!(vocab.contains(w), c >= 5, "{w}");
    }
}

#[test]
fn corpus_stats_match_hand_counts() {
    let (lex, world) = setup();
    let pairs = corpus(&lex, &world, 5, 5);
    let fixture: Vec<Instruction> = pairs.into_iter().flat_map(|(s, t)| [s, t]).collect();
    let stats = corpus_stats(&lex, &fixture);
    for lang in [Language::Source, Language::Target] {
        let mut lengths = BTreeMap::new();
        let mut clauses = BTreeMap::new();
        for inst in fixture.iter().filter(|i| i.language == lang) {
            let n_punct = inst
                .text
                .chars()
                .filter(|c| matches!(c, ',' | '.' | '，' | '。'))
                .count();
            *clauses.entry(n_punct).or_insert(0) += 1;
            *lengths.entry(inst.tokens.len()).or_insert(0) += 1;
        }
        assert_eq!(stats.sub_instructions[&lang], clauses);
        assert_eq!(stats.lengths[&lang], lengths);
    }
    let single = Instruction {
        language: Language::Source,
        provenance: Provenance::Human,
        path_id: 0,
        tokens: tokenize(&lex, "stop."),
        text: "stop.".into(),
    };
    assert_eq!(
        corpus_stats(&lex, [&single]).sub_instructions[&Language::Source][&1],
        1
    );
    let empty = corpus_stats(&lex, []);
    assert!(empty.lengths.is_empty() && empty.sub_instructions.is_empty());
    assert_eq!(empty.to_csv(), "language,stat,bin,count\n");
}

fn dataset_config(epsilon: f64) -> DatasetConfig {
    DatasetConfig {
        epsilon,
        seen_worlds: 4,
        unseen_worlds: 2,
        ..DatasetConfig::default()
    }
}

#[test]
fn epsilon_controls_bilingual_training_coverage() {
    let cfg = dataset_config(0.0);
    let lex = Lexicon::new(cfg.world.n_categories, cfg.world.n_attributes).unwrap();
    let (worlds, assign) = generate_worlds(&cfg).unwrap();
    let count = |eps: f64| {
        let ds = make_dataset(&lex, &worlds, &assign, &dataset_config(eps)).unwrap();
        let bilingual: Vec<u64> = ds
            .train
            .iter()
            .filter(|r| r.count(Language::Target, Provenance::Human) > 0)
            .map(|r| r.path_id)
            .collect();
        (ds, bilingual)
    };
    let (ds0, b0) = count(0.0);
    assert!(b0.is_empty());
    assert_eq!(ds0.train.len(), 500);
    assert_eq!(ds0.val_seen.len(), 50);
    assert_eq!(ds0.val_unseen.len(), 100);
    for r in ds0.val_seen.iter().chain(&ds0.val_unseen) {
        assert_eq!(r.count(Language::Target, Provenance::Human), 3);
        assert_eq!(r.count(Language::Source, Provenance::Human), 3);
    }
    let (ds2, b2) = count(0.2);
    assert_eq!(b2.len(), 100);
    let (_, b3) = count(0.3);
    assert!(
        b2.iter().all(|id| b3.contains(id)),
        "selection must be nested"
    );
    let (_, b10) = count(1.0);
    assert_eq!(b10.len(), 500);
    // trajectories do not depend on epsilon
    for (a, b) in ds0.train.iter().zip(&ds2.train) {
        assert_eq!(
            (a.world_id, &a.path, a.heading),
            (b.world_id, &b.path, b.heading)
        );
        assert_eq!(a.instructions.src, b.instructions.src);
    }
    assert!(assign
        .unseen
        .iter()
        .all(|w| ds0.val_unseen.iter().any(|r| r.world_id == *w)));
    assert!(ds0
        .val_unseen
        .iter()
        .all(|r| assign.unseen.contains(&r.world_id)));
}

#[test]
fn overlapping_world_assignment_is_rejected() {
    let cfg = dataset_config(0.0);
    let lex = Lexicon::new(cfg.world.n_categories, cfg.world.n_attributes).unwrap();
    let (worlds, _) = generate_worlds(&cfg).unwrap();
    let bad = WorldAssignment {
        seen: vec![0, 1, 2],
        unseen: vec![2, 3],
    };
    assert!(matches!(
        make_dataset(&lex, &worlds, &bad, &cfg),
        Err(LangError::WorldOverlap(w)) if w == vec![2]
    ));
    assert!(make_dataset(&lex, &worlds, &bad, &dataset_config(0.25)).is_err());
}

#[test]
fn dataset_is_pure_and_mt_cache_is_idempotent() {
    let cfg = DatasetConfig {
        n_train: 40,
        n_val_seen: 10,
        n_val_unseen: 10,
        ..dataset_config(0.5)
    };
    let lex = Lexicon::new(cfg.world.n_categories, cfg.world.n_attributes).unwrap();
    let (worlds, assign) = generate_worlds(&cfg).unwrap();
    let mut a = make_dataset(&lex, &worlds, &assign, &cfg).unwrap();
    let b = make_dataset(&lex, &worlds, &assign, &cfg).unwrap();
    assert_eq!(a, b);
    let mt = MtConfig::default();
    assert!(!a.has_mt(&mt));
    ensure_mt(&mut a, &lex, &mt).unwrap();
    assert!(a.has_mt(&mt));
    let snapshot = a.clone();
    ensure_mt(&mut a, &lex, &mt).unwrap();
    assert_eq!(a, snapshot);
    for r in &a.train {
        assert_eq!(
            r.count(Language::Target, Provenance::MT),
            r.count(Language::Source, Provenance::Human)
        );
        assert_eq!(
            r.count(Language::Source, Provenance::MT),
            r.count(Language::Target, Provenance::Human)
        );
    }
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    let back = xlnav::lang::Dataset::load(dir.path()).unwrap();
    assert_eq!(back, a);
    let text = std::fs::read_to_string(dir.path().join("train.json")).unwrap();
    let first = text.find("\"path_id\"").unwrap();
    let order = [
        "\"world_id\"",
        "\"heading\"",
        "\"path\"",
        "\"instructions\"",
    ];
    let mut at = first;
    for key in order {
        let pos = text[at..].find(key).unwrap() + at;
        at = pos;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn text_round_trips_through_tokens(seed in any::<u64>(), target in any::<bool>()) {
        let (lex, world) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = sample_trajectory(&world, &mut rng, 1, 8).unwrap();
        let lang = if target { Language::Target } else { Language::Source };
        let inst = generate_instruction(&lex, &world, &spec, lang, &mut rng, 0);
        prop_assert_eq!(tokenize(&lex, &inst.text), inst.tokens.clone());
        prop_assert_eq!(detokenize(&lex, &tokenize(&lex, &inst.text)), inst.text);
    }

    #[test]
    fn noise_free_translation_is_invertible_on_content(seed in any::<u64>(), mt_seed in any::<u64>()) {
        let (lex, world) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = sample_trajectory(&world, &mut rng, 1, 8).unwrap();
        let cfg = MtConfig::noise_free(mt_seed);
        for lang in [Language::Source, Language::Target] {
            let inst = generate_instruction(&lex, &world, &spec, lang, &mut rng, 5);
            let there = mt_translate(&lex, &inst, lang.other(), &cfg).unwrap();
            prop_assert_eq!(there.unknown, 0);
            prop_assert_eq!(categories(&lex, &there.instruction.tokens), categories(&lex, &inst.tokens));
            let back = mt_translate(&lex, &there.instruction, lang, &cfg).unwrap();
            prop_assert_eq!(content(&lex, &back.instruction.tokens), content(&lex, &inst.tokens));
        }
    }
}
