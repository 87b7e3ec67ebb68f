use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{Instruction, Language, Lexicon};

/// Per-language histograms of instruction length (tokens) and clause count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub lengths: BTreeMap<Language, BTreeMap<usize, usize>>,
    pub sub_instructions: BTreeMap<Language, BTreeMap<usize, usize>>,
    /// Distinct surface forms per language.
    pub vocab_sizes: BTreeMap<Language, usize>,
}

pub fn corpus_stats<'a>(
    lex: &Lexicon,
    corpus: impl IntoIterator<Item = &'a Instruction>,
) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut words: BTreeMap<Language, BTreeSet<u32>> = BTreeMap::new();
    for inst in corpus {
        *stats
            .lengths
            .entry(inst.language)
            .or_default()
            .entry(inst.tokens.len())
            .or_default() += 1;
        *stats
            .sub_instructions
            .entry(inst.language)
            .or_default()
            .entry(inst.sub_instructions(lex))
            .or_default() += 1;
        words
            .entry(inst.language)
            .or_default()
            .extend(inst.tokens.iter().copied());
    }
    stats.vocab_sizes = words.into_iter().map(|(l, w)| (l, w.len())).collect();
    stats
}

impl CorpusStats {
    /// `language,stat,bin,count`; vocabulary sizes use stat `vocab_size` and
    /// an empty bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language,stat,bin,count\n");
        for (lang, hist) in &self.lengths {
            for (bin, count) in hist {
                writeln!(out, "{},length,{bin},{count}", lang.tag()).unwrap();
            }
        }
        for (lang, hist) in &self.sub_instructions {
            for (bin, count) in hist {
                writeln!(out, "{},sub_instructions,{bin},{count}", lang.tag()).unwrap();
            }
        }
        for (lang, size) in &self.vocab_sizes {
            writeln!(out, "{},vocab_size,,{size}", lang.tag()).unwrap();
        }
        out
    }
}
