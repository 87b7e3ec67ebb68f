use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_instruction, mt_translate, Instruction, LangError, Language, Lexicon, MtConfig,
    Provenance,
};
use crate::seed::derive_seed;
use crate::world::{generate_world, sample_trajectory, PathSpec, World, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    ValSeen,
    ValUnseen,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::ValSeen, SplitName::ValUnseen];

    pub fn tag(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::ValSeen => "val_seen",
            SplitName::ValUnseen => "val_unseen",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.tag() == s)
    }
}

/// Everything needed to regenerate a dataset from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub seed: u64,
    /// Worlds shared by train and val-seen.
    pub seen_worlds: usize,
    /// Worlds reserved for val-unseen.
    pub unseen_worlds: usize,
    pub world: WorldConfig,
    pub n_train: usize,
    pub n_val_seen: usize,
    pub n_val_unseen: usize,
    /// Fraction of training trajectories that also carry human target
    /// instructions; a multiple of 0.1.
    pub epsilon: f64,
    pub instructions_per_path: usize,
    pub min_hops: usize,
    pub max_hops: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            seen_worlds: 12,
            unseen_worlds: 4,
            world: WorldConfig::default(),
            n_train: 500,
            n_val_seen: 50,
            n_val_unseen: 100,
            epsilon: 0.0,
            instructions_per_path: 3,
            min_hops: 3,
            max_hops: 6,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), LangError> {
        let tenths = self.epsilon * 10.0;
        if !(0.0..=1.0).contains(&self.epsilon) || (tenths - tenths.round()).abs() > 1e-9 {
            return Err(LangError::Config(format!(
                "epsilon {} must be one of 0, 0.1, ..., 1",
                self.epsilon
            )));
        }
        if self.instructions_per_path == 0 {
            return Err(LangError::Config(
                "instructions_per_path must be at least 1".into(),
            ));
        }
        if self.min_hops == 0 || self.max_hops < self.min_hops {
            return Err(LangError::Config(format!(
                "hop range {}..={} is invalid",
                self.min_hops, self.max_hops
            )));
        }
        Ok(())
    }

    /// Number of bilingual training trajectories.
    pub fn bilingual_count(&self) -> usize {
        (self.epsilon * self.n_train as f64).round() as usize
    }
}

/// World ids available to each side of the seen/unseen divide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldAssignment {
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
}

impl WorldAssignment {
    pub fn check(&self, n_worlds: usize) -> Result<(), LangError> {
        let mut overlap: Vec<usize> = self
            .seen
            .iter()
            .filter(|w| self.unseen.contains(w))
            .copied()
            .collect();
        overlap.sort_unstable();
        overlap.dedup();
        if !overlap.is_empty() {
            return Err(LangError::WorldOverlap(overlap));
        }
        if let Some(&w) = self
            .seen
            .iter()
            .chain(&self.unseen)
            .find(|&&w| w >= n_worlds)
        {
            return Err(LangError::Dataset(format!("world {w} does not exist")));
        }
        Ok(())
    }
}

/// Worlds for a config: seen ids first, then unseen.
pub fn generate_worlds(cfg: &DatasetConfig) -> Result<(Vec<World>, WorldAssignment), LangError> {
    let n = cfg.seen_worlds + cfg.unseen_worlds;
    let worlds = (0..n)
        .map(|i| generate_world(derive_seed(cfg.seed, "world", i as u64), &cfg.world))
        .collect::<Result<Vec<_>, _>>()?;
    let assign = WorldAssignment {
        seen: (0..cfg.seen_worlds).collect(),
        unseen: (cfg.seen_worlds..n).collect(),
    };
    Ok((worlds, assign))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub text: String,
    pub tokens: Vec<u32>,
    pub provenance: Provenance,
}

/// Human entries come first. Machine translations follow in the order of
/// the human entries of the other language they were made from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Instructions {
    pub src: Vec<InstructionRecord>,
    pub tgt: Vec<InstructionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub path_id: u64,
    pub world_id: usize,
    pub heading: usize,
    pub path: Vec<usize>,
    pub instructions: Instructions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt_fingerprint: Option<String>,
}

impl Record {
    pub fn path_spec(&self, world: &World) -> PathSpec {
        let goal = *self.path.last().expect("non-empty path");
        PathSpec {
            path: self.path.clone(),
            heading: self.heading,
            goal,
            length: world.distance(self.path[0], goal),
        }
    }

    fn list(&self, lang: Language) -> &[InstructionRecord] {
        match lang {
            Language::Source => &self.instructions.src,
            Language::Target => &self.instructions.tgt,
        }
    }

    fn list_mut(&mut self, lang: Language) -> &mut Vec<InstructionRecord> {
        match lang {
            Language::Source => &mut self.instructions.src,
            Language::Target => &mut self.instructions.tgt,
        }
    }

    fn to_instruction(&self, lang: Language, r: &InstructionRecord) -> Instruction {
        Instruction {
            language: lang,
            provenance: r.provenance,
            path_id: self.path_id,
            tokens: r.tokens.clone(),
            text: r.text.clone(),
        }
    }

    pub fn instructions(&self, lang: Language, provenance: Provenance) -> Vec<Instruction> {
        self.list(lang)
            .iter()
            .filter(|r| r.provenance == provenance)
            .map(|r| self.to_instruction(lang, r))
            .collect()
    }

    pub fn human(&self, lang: Language) -> Vec<Instruction> {
        self.instructions(lang, Provenance::Human)
    }

    pub fn mt(&self, lang: Language) -> Vec<Instruction> {
        self.instructions(lang, Provenance::MT)
    }

    pub fn count(&self, lang: Language, provenance: Provenance) -> usize {
        self.list(lang)
            .iter()
            .filter(|r| r.provenance == provenance)
            .count()
    }
}

fn record_instruction(inst: &Instruction) -> InstructionRecord {
    InstructionRecord {
        text: inst.text.clone(),
        tokens: inst.tokens.clone(),
        provenance: inst.provenance,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub train: Vec<Record>,
    pub val_seen: Vec<Record>,
    pub val_unseen: Vec<Record>,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &[Record] {
        match name {
            SplitName::Train => &self.train,
            SplitName::ValSeen => &self.val_seen,
            SplitName::ValUnseen => &self.val_unseen,
        }
    }

    pub fn split_mut(&mut self, name: SplitName) -> &mut Vec<Record> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::ValSeen => &mut self.val_seen,
            SplitName::ValUnseen => &mut self.val_unseen,
        }
    }

    /// Whether every record carries translations made with `cfg`.
    pub fn has_mt(&self, cfg: &MtConfig) -> bool {
        let fp = cfg.fingerprint();
        SplitName::ALL
            .iter()
            .flat_map(|&s| self.split(s))
            .all(|r| r.mt_fingerprint.as_deref() == Some(fp.as_str()))
    }

    /// Writes `train.json`, `val_seen.json`, `val_unseen.json` and
    /// `dataset.json` (the generating config) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), LangError> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("dataset.json"),
            serde_json::to_string_pretty(&self.config)? + "\n",
        )?;
        for name in SplitName::ALL {
            write_split(&dir.join(format!("{}.json", name.tag())), self.split(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, LangError> {
        let config: DatasetConfig =
            serde_json::from_str(&fs::read_to_string(dir.join("dataset.json"))?)?;
        let mut ds = Dataset {
            config,
            train: Vec::new(),
            val_seen: Vec::new(),
            val_unseen: Vec::new(),
        };
        for name in SplitName::ALL {
            *ds.split_mut(name) = read_split(&dir.join(format!("{}.json", name.tag())))?;
        }
        Ok(ds)
    }
}

pub fn write_split(path: &Path, records: &[Record]) -> Result<(), LangError> {
    fs::write(path, serde_json::to_string_pretty(records)? + "\n")?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<Vec<Record>, LangError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn style_rng(seed: u64, path_id: u64, lang: Language, j: usize) -> ChaCha8Rng {
    let s = derive_seed(derive_seed(seed, "style", path_id), lang.tag(), j as u64);
    ChaCha8Rng::seed_from_u64(s)
}

/// Assembles the three splits. Every trajectory is sampled from its own
/// derived stream, so the result is a pure function of the inputs and
/// trajectories do not depend on ε. Bilingual training trajectories are the
/// first ⌊ε·n⌉ by a hash of their id, hence nested across ε.
pub fn make_dataset(
    lex: &Lexicon,
    worlds: &[World],
    assign: &WorldAssignment,
    cfg: &DatasetConfig,
) -> Result<Dataset, LangError> {
    cfg.validate()?;
    assign.check(worlds.len())?;
    if cfg.n_train + cfg.n_val_seen > 0 && assign.seen.is_empty() {
        return Err(LangError::Dataset("no seen worlds".into()));
    }
    if cfg.n_val_unseen > 0 && assign.unseen.is_empty() {
        return Err(LangError::Dataset("no unseen worlds".into()));
    }

    let mut bilingual_rank: Vec<(u64, u64)> = (0..cfg.n_train as u64)
        .map(|id| (derive_seed(cfg.seed, "epsilon", id), id))
        .collect();
    bilingual_rank.sort_unstable();
    let mut bilingual = vec![false; cfg.n_train];
    for &(_, id) in &bilingual_rank[..cfg.bilingual_count()] {
        bilingual[id as usize] = true;
    }

    let mut ds = Dataset {
        config: cfg.clone(),
        train: Vec::new(),
        val_seen: Vec::new(),
        val_unseen: Vec::new(),
    };
    let mut next_id = 0u64;
    for (name, count, pool) in [
        (SplitName::Train, cfg.n_train, &assign.seen),
        (SplitName::ValSeen, cfg.n_val_seen, &assign.seen),
        (SplitName::ValUnseen, cfg.n_val_unseen, &assign.unseen),
    ] {
        for i in 0..count {
            let path_id = next_id;
            next_id += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, name.tag(), i as u64));
            let world_id = pool[rng.gen_range(0..pool.len())];
            let world = &worlds[world_id];
            let spec = sample_trajectory(world, &mut rng, cfg.min_hops, cfg.max_hops)?;
            let with_target = name != SplitName::Train || bilingual[i];
            let mut instructions = Instructions::default();
            for j in 0..cfg.instructions_per_path {
                let mut r = style_rng(cfg.seed, path_id, Language::Source, j);
                let inst =
                    generate_instruction(lex, world, &spec, Language::Source, &mut r, path_id);
                instructions.src.push(record_instruction(&inst));
                if with_target {
                    let mut r = style_rng(cfg.seed, path_id, Language::Target, j);
                    let inst =
                        generate_instruction(lex, world, &spec, Language::Target, &mut r, path_id);
                    instructions.tgt.push(record_instruction(&inst));
                }
            }
            ds.split_mut(name).push(Record {
                path_id,
                world_id,
                heading: spec.heading,
                path: spec.path,
                instructions,
                mt_fingerprint: None,
            });
        }
    }
    Ok(ds)
}

/// Fills every record with translations of its human instructions (into
/// the other language) unless they were already made with `cfg`. Returns
/// the number of unknown tokens encountered.
pub fn ensure_mt(ds: &mut Dataset, lex: &Lexicon, cfg: &MtConfig) -> Result<usize, LangError> {
    cfg.validate()?;
    let fp = cfg.fingerprint();
    let mut unknown = 0;
    for name in SplitName::ALL {
        for rec in ds.split_mut(name) {
            if rec.mt_fingerprint.as_deref() == Some(fp.as_str()) {
                continue;
            }
            for lang in [Language::Source, Language::Target] {
                rec.list_mut(lang)
                    .retain(|r| r.provenance == Provenance::Human);
            }
            for lang in [Language::Source, Language::Target] {
                for inst in rec.human(lang) {
                    let out = mt_translate(lex, &inst, lang.other(), cfg)?;
                    unknown += out.unknown;
                    rec.list_mut(lang.other())
                        .push(record_instruction(&out.instruction));
                }
            }
            rec.mt_fingerprint = Some(fp.clone());
        }
    }
    Ok(unknown)
}
