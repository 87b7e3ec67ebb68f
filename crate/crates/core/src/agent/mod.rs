//! Dual-stream instruction-following agent: a recurrent encoder shared by
//! both languages, a panoramic attention decoder, the cross-lingual gate
//! that mixes the two streams, and candidate action scoring.

mod decoder;
mod encoder;

pub use decoder::{
    attend, decode_step, episode_loss, init_stream, run_episode, score_actions, student_loss,
    xli_fuse, ActionDistribution, Episode, FusionRecord, Policy, StepTrace, StreamState,
    StreamTrace,
};
pub use encoder::{
    encode, mlm_loss, mlm_probability, pretrain_encoder, EncoderOutput, PretrainConfig,
    PretrainReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamStore, Tensor};
use crate::lang::Language;
use crate::world::WorldError;

pub const MAX_ACTIONS: usize = 10;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("instruction has {0} tokens, expected 1..={max}", max = crate::lang::MAX_TOKENS)]
    InstructionLength(usize),
    #[error("stream not initialized")]
    Uninitialized,
    #[error("operation needs xli mode")]
    NotXli,
    #[error("xli mode needs one source and one target instruction")]
    InstructionPair,
    #[error("view dim {got} does not match the agent's {expected}")]
    ViewDim { got: usize, expected: usize },
    #[error("no candidate actions")]
    NoCandidates,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mono,
    Xli,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mono" => Some(Self::Mono),
            "xli" => Some(Self::Xli),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub vocab_size: usize,
    pub d_embed: usize,
    pub d_enc: usize,
    pub d_dec: usize,
    pub d_view: usize,
    pub dropout: f64,
    pub mode: Mode,
    /// One embedding table for both languages instead of one per language.
    pub shared_embedding: bool,
}

impl AgentConfig {
    pub fn desk(vocab_size: usize, d_view: usize, mode: Mode) -> Self {
        Self {
            vocab_size,
            d_embed: 32,
            d_enc: 64,
            d_dec: 64,
            d_view,
            dropout: 0.1,
            mode,
            shared_embedding: true,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("d_embed", self.d_embed),
            ("d_enc", self.d_enc),
            ("d_dec", self.d_dec),
            ("d_view", self.d_view),
        ] {
            if v == 0 {
                return Err(AgentError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AgentError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn embedding_name(&self, lang: Language) -> &'static str {
        match (self.shared_embedding, lang) {
            (true, _) => "enc.embed",
            (false, Language::Source) => "enc.embed.src",
            (false, Language::Target) => "enc.embed.tgt",
        }
    }

    /// Parameter shapes by name; the gate exists only in xli mode.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (v, de, dc, dd, dv) = (
            self.vocab_size,
            self.d_embed,
            self.d_enc,
            self.d_dec,
            self.d_view,
        );
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        if self.shared_embedding {
            out.push(("enc.embed".into(), vec![v, de]));
        } else {
            out.push(("enc.embed.src".into(), vec![v, de]));
            out.push(("enc.embed.tgt".into(), vec![v, de]));
        }
        out.extend([
            ("enc.lstm.w".into(), vec![de + dc, 4 * dc]),
            ("enc.lstm.b".into(), vec![1, 4 * dc]),
            ("dec.init.w".into(), vec![dc, dd]),
            ("dec.init.b".into(), vec![1, dd]),
            ("dec.att.vis".into(), vec![dd, dv]),
            ("dec.lstm.w".into(), vec![2 * dv + dd, 4 * dd]),
            ("dec.lstm.b".into(), vec![1, 4 * dd]),
            ("dec.att.txt".into(), vec![dd, dc]),
            ("dec.out.w".into(), vec![dc + dd, dd]),
            ("dec.out.b".into(), vec![1, dd]),
            ("act.w".into(), vec![dd, dd]),
            ("act.cand.w".into(), vec![dv, dd]),
            ("act.stop".into(), vec![1, dd]),
        ]);
        if self.mode == Mode::Xli {
            out.push(("gate.w".into(), vec![2 * dd, 2]));
            out.push(("gate.b".into(), vec![1, 2]));
        }
        out
    }
}

/// Whether a parameter belongs to the encoder learning-rate group.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc.")
}

/// Fresh parameters: weights uniform in ±1/√fan_in, biases zero except the
/// LSTM forget gates, which start at 1.
pub fn init_params(cfg: &AgentConfig, seed: u64) -> Result<ParamStore, AgentError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in cfg.shapes() {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = if name.ends_with(".b") {
            let mut b = vec![0.0; n];
            if name.contains("lstm") {
                let h = n / 4;
                b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
            }
            b
        } else {
            let fan_in = if name.starts_with("enc.embed") || name == "act.stop" {
                shape[1]
            } else {
                shape[0]
            };
            let a = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..a)).collect()
        };
        store.insert(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

/// One instruction as vocabulary ids, with its language (which selects the
/// embedding table when tables are per language).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionInput {
    pub language: Language,
    pub ids: Vec<usize>,
}

/// A mono agent reads `primary` only; an xli agent reads both, one per
/// language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionPair {
    pub primary: InstructionInput,
    pub secondary: Option<InstructionInput>,
}

impl InstructionPair {
    pub fn mono(input: InstructionInput) -> Self {
        Self {
            primary: input,
            secondary: None,
        }
    }

    pub fn xli(a: InstructionInput, b: InstructionInput) -> Self {
        Self {
            primary: a,
            secondary: Some(b),
        }
    }

    /// Inputs in stream order for `mode`: the lone primary for mono, (source,
    /// target) for xli.
    pub fn streams(&self, mode: Mode) -> Result<Vec<&InstructionInput>, AgentError> {
        match mode {
            Mode::Mono => Ok(vec![&self.primary]),
            Mode::Xli => {
                let other = self.secondary.as_ref().ok_or(AgentError::InstructionPair)?;
                match (self.primary.language, other.language) {
                    (Language::Source, Language::Target) => Ok(vec![&self.primary, other]),
                    (Language::Target, Language::Source) => Ok(vec![other, &self.primary]),
                    _ => Err(AgentError::InstructionPair),
                }
            }
        }
    }
}
