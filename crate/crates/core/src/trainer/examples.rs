use std::fs;
use std::path::Path;

use crate::agent::{AgentConfig, InstructionInput, InstructionPair, Mode};
use crate::lang::{
    build_vocab, ensure_mt, generate_worlds, make_dataset, Dataset, DatasetConfig, Instruction,
    Language, Lexicon, MtConfig, Provenance, Record, SplitName, Vocabulary, MAX_TOKENS,
};
use crate::world::{PathSpec, World};

use super::{AgentDims, Regime, TrainerError};

/// Relative path of world `i` inside a data directory.
pub fn world_file(i: usize) -> String {
    format!("worlds/{i:03}.json")
}

/// Everything a run reads: worlds, the dataset (with translations when
/// available) and the model vocabulary built from the training split.
#[derive(Debug, Clone)]
pub struct TrainContext {
    pub lexicon: Lexicon,
    pub worlds: Vec<World>,
    pub dataset: Dataset,
    pub vocab: Vocabulary,
    /// Fingerprint of the translator config the dataset was filled with.
    pub mt_fingerprint: Option<String>,
}

impl TrainContext {
    /// Generates worlds and data for `data` and translates with `mt`.
    pub fn generate(data: &DatasetConfig, mt: &MtConfig) -> Result<Self, TrainerError> {
        let lexicon = Lexicon::new(data.world.n_categories, data.world.n_attributes)?;
        let (worlds, assign) = generate_worlds(data)?;
        let dataset = make_dataset(&lexicon, &worlds, &assign, data)?;
        Self::new(lexicon, worlds, dataset, Some(mt))
    }

    /// Reads a directory holding `dataset.json`, the split files and
    /// `worlds/NNN.json`.
    pub fn load(dir: &Path, mt: Option<&MtConfig>) -> Result<Self, TrainerError> {
        let dataset = Dataset::load(dir)?;
        let cfg = &dataset.config;
        let lexicon = Lexicon::new(cfg.world.n_categories, cfg.world.n_attributes)?;
        let mut worlds = Vec::new();
        for i in 0..cfg.seen_worlds + cfg.unseen_worlds {
            worlds.push(World::from_json(&fs::read_to_string(
                dir.join(world_file(i)),
            )?)?);
        }
        Self::new(lexicon, worlds, dataset, mt)
    }

    /// Fills translations with `mt` when given, then builds the vocabulary
    /// over every training instruction (min frequency 1).
    pub fn new(
        lexicon: Lexicon,
        worlds: Vec<World>,
        mut dataset: Dataset,
        mt: Option<&MtConfig>,
    ) -> Result<Self, TrainerError> {
        for split in SplitName::ALL {
            if let Some(r) = dataset
                .split(split)
                .iter()
                .find(|r| r.world_id >= worlds.len())
            {
                return Err(TrainerError::Config(format!(
                    "record {} refers to world {} of {}",
                    r.path_id,
                    r.world_id,
                    worlds.len()
                )));
            }
        }
        let mt_fingerprint = match mt {
            Some(cfg) => {
                ensure_mt(&mut dataset, &lexicon, cfg)?;
                Some(cfg.fingerprint())
            }
            None => None,
        };
        let vocab = {
            let mut corpus: Vec<Vec<&str>> = Vec::new();
            for rec in &dataset.train {
                for r in rec.instructions.src.iter().chain(&rec.instructions.tgt) {
                    corpus.push(r.tokens.iter().map(|&t| lexicon.text(t)).collect());
                }
            }
            build_vocab(corpus, 1)?
        };
        Ok(Self {
            lexicon,
            worlds,
            dataset,
            vocab,
            mt_fingerprint,
        })
    }

    pub fn view_dim(&self) -> usize {
        self.worlds[0].view_dim()
    }

    pub fn agent_config(&self, dims: &AgentDims, dropout: f64, mode: Mode) -> AgentConfig {
        AgentConfig {
            vocab_size: self.vocab.len(),
            d_embed: dims.d_embed,
            d_enc: dims.d_enc,
            d_dec: dims.d_dec,
            d_view: self.view_dim(),
            dropout,
            mode,
            shared_embedding: dims.shared_embedding,
        }
    }

    /// Vocabulary ids of an instruction, BOS first.
    pub fn input(&self, inst: &Instruction) -> InstructionInput {
        let words = inst.tokens.iter().map(|&t| self.lexicon.text(t));
        InstructionInput {
            language: inst.language,
            ids: self
                .vocab
                .encode(words, MAX_TOKENS)
                .into_iter()
                .map(|i| i as usize)
                .collect(),
        }
    }
}

/// One episode to train or test on.
#[derive(Debug, Clone)]
pub struct Example {
    pub path_id: u64,
    pub world_id: usize,
    pub spec: PathSpec,
    pub pair: InstructionPair,
    /// Language and provenance of each instruction in the pair.
    pub sources: Vec<(Language, Provenance)>,
}

fn need_mt(ctx: &TrainContext, regime: Regime, rec: &Record) -> Result<(), TrainerError> {
    if ctx.mt_fingerprint.is_none() || rec.mt_fingerprint.is_none() {
        return Err(TrainerError::RegimeMismatch {
            regime: regime.tag(),
            reason: "the dataset has no machine-translation cache".into(),
        });
    }
    Ok(())
}

fn mono(ctx: &TrainContext, rec: &Record, spec: &PathSpec, list: Vec<Instruction>) -> Vec<Example> {
    list.iter()
        .map(|inst| Example {
            path_id: rec.path_id,
            world_id: rec.world_id,
            spec: spec.clone(),
            pair: InstructionPair::mono(ctx.input(inst)),
            sources: vec![(inst.language, inst.provenance)],
        })
        .collect()
}

fn pairs(
    ctx: &TrainContext,
    rec: &Record,
    spec: &PathSpec,
    a: Vec<Instruction>,
    b: Vec<Instruction>,
) -> Vec<Example> {
    a.iter()
        .zip(&b)
        .map(|(x, y)| Example {
            path_id: rec.path_id,
            world_id: rec.world_id,
            spec: spec.clone(),
            pair: InstructionPair::xli(ctx.input(x), ctx.input(y)),
            sources: vec![(x.language, x.provenance), (y.language, y.provenance)],
        })
        .collect()
}

/// Training episodes of `regime`, record by record in split order.
pub fn train_examples(ctx: &TrainContext, regime: Regime) -> Result<Vec<Example>, TrainerError> {
    use Language::{Source, Target};
    let mut out = Vec::new();
    for rec in &ctx.dataset.train {
        let spec = rec.path_spec(&ctx.worlds[rec.world_id]);
        match regime {
            Regime::MonoSrc | Regime::TestMt => {
                out.extend(mono(ctx, rec, &spec, rec.human(Source)))
            }
            Regime::TrainAn => out.extend(mono(ctx, rec, &spec, rec.human(Target))),
            Regime::TrainMt => {
                need_mt(ctx, regime, rec)?;
                out.extend(mono(ctx, rec, &spec, rec.mt(Target)));
            }
            Regime::AnEn => {
                out.extend(mono(ctx, rec, &spec, rec.human(Target)));
                out.extend(mono(ctx, rec, &spec, rec.human(Source)));
            }
            Regime::AnMt => {
                let human = rec.human(Target);
                if human.is_empty() {
                    need_mt(ctx, regime, rec)?;
                    out.extend(mono(ctx, rec, &spec, rec.mt(Target)));
                } else {
                    out.extend(mono(ctx, rec, &spec, human));
                }
            }
            Regime::Xli => {
                need_mt(ctx, regime, rec)?;
                out.extend(pairs(ctx, rec, &spec, rec.human(Source), rec.mt(Target)));
                let human_tgt = rec.human(Target);
                if !human_tgt.is_empty() {
                    out.extend(pairs(ctx, rec, &spec, human_tgt.clone(), rec.mt(Source)));
                    out.extend(pairs(ctx, rec, &spec, rec.human(Source), human_tgt));
                }
            }
            Regime::TeacherOracle => {
                return Err(TrainerError::RegimeMismatch {
                    regime: regime.tag(),
                    reason: "diagnostic regime, evaluation only".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Test episodes of `regime` on one split; `mode` only matters for the
/// teacher diagnostic, which follows the checkpoint's mode.
pub fn eval_examples(
    ctx: &TrainContext,
    split: SplitName,
    regime: Regime,
    mode: Mode,
) -> Result<Vec<Example>, TrainerError> {
    use Language::{Source, Target};
    let mut out = Vec::new();
    for rec in ctx.dataset.split(split) {
        let spec = rec.path_spec(&ctx.worlds[rec.world_id]);
        let before = out.len();
        match regime {
            Regime::MonoSrc => out.extend(mono(ctx, rec, &spec, rec.human(Source))),
            Regime::TrainAn | Regime::TrainMt | Regime::AnEn | Regime::AnMt => {
                out.extend(mono(ctx, rec, &spec, rec.human(Target)))
            }
            Regime::TestMt => {
                need_mt(ctx, regime, rec)?;
                out.extend(mono(ctx, rec, &spec, rec.mt(Source)));
            }
            Regime::Xli => {
                need_mt(ctx, regime, rec)?;
                out.extend(pairs(ctx, rec, &spec, rec.mt(Source), rec.human(Target)));
            }
            Regime::TeacherOracle => match mode {
                Mode::Mono => out.extend(mono(ctx, rec, &spec, rec.human(Source))),
                Mode::Xli => {
                    out.extend(pairs(ctx, rec, &spec, rec.human(Source), rec.human(Target)))
                }
            },
        }
        if out.len() == before {
            return Err(TrainerError::RegimeMismatch {
                regime: regime.tag(),
                reason: format!(
                    "{} record {} has no test instructions",
                    split.tag(),
                    rec.path_id
                ),
            });
        }
    }
    Ok(out)
}
