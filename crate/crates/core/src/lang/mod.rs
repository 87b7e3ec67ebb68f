//! Two artificial instruction languages, a noisy lexicon-based translator,
//! vocabularies, corpus statistics and dataset assembly.
//!
//! The source language is verb-medial with articles ("walk left toward the
//! red sofa, ..."). The target language is verb-final, has no articles,
//! puts attributes after nouns and uses full-width punctuation.

mod dataset;
mod generate;
mod lexicon;
mod mt;
mod stats;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    ensure_mt, generate_worlds, make_dataset, read_split, write_split, Dataset, DatasetConfig,
    InstructionRecord, Instructions, Record, SplitName, WorldAssignment,
};
pub use generate::{detokenize, generate_instruction, tokenize, MAX_TOKENS};
pub use lexicon::{Entry, Lexicon, Role, DIRECTIONS, UNK_TEXT};
pub use mt::{mt_translate, MtConfig, MtOutput};
pub use stats::{corpus_stats, CorpusStats};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, UNK};

use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum LangError {
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot translate a {from:?} instruction into {to:?}")]
    Direction { from: Language, to: Language },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("worlds {0:?} are assigned to both seen and unseen splits")]
    WorldOverlap(Vec<usize>),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "src")]
    Source,
    #[serde(rename = "tgt")]
    Target,
}

impl Language {
    pub fn other(self) -> Self {
        match self {
            Language::Source => Language::Target,
            Language::Target => Language::Source,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Language::Source => "src",
            Language::Target => "tgt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Human,
    MT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub language: Language,
    pub provenance: Provenance,
    pub path_id: u64,
    /// Lexicon ids.
    pub tokens: Vec<u32>,
    pub text: String,
}

impl Instruction {
    /// Number of punctuation-terminated clauses.
    pub fn sub_instructions(&self, lex: &Lexicon) -> usize {
        self.tokens.iter().filter(|&&t| lex.is_punct(t)).count()
    }
}
