use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LangError;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Model-side token ids. Ids 0..4 are reserved; the rest follow descending
/// corpus frequency with lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    min_freq: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    min_freq: usize,
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = LangError;

    fn try_from(f: VocabFile) -> Result<Self, LangError> {
        Vocabulary::from_tokens(f.tokens, f.min_freq)
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self, LangError> {
        if tokens.len() < RESERVED.len() || tokens[..4].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(LangError::Dataset(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(LangError::Dataset(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        Ok(Self {
            tokens,
            min_freq,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// `[BOS, w₁, …]`, truncated to `max_len` ids.
    pub fn encode<'a>(&self, words: impl IntoIterator<Item = &'a str>, max_len: usize) -> Vec<u32> {
        std::iter::once(BOS)
            .chain(words.into_iter().map(|w| self.id(w)))
            .take(max_len)
            .collect()
    }
}

pub fn build_vocab<'a, I, S>(corpus: I, min_freq: usize) -> Result<Vocabulary, LangError>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut sentences = 0;
    for sentence in corpus {
        sentences += 1;
        for tok in sentence {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if sentences == 0 {
        return Err(LangError::EmptyCorpus);
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && !RESERVED.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Vocabulary::from_tokens(tokens, min_freq)
}
