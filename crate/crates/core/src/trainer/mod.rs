//! Training, evaluation and the experiment protocols: the zero-shot regime
//! matrix, the annotation-coverage sweep and the encoder ablation.

mod checkpoint;
mod examples;
mod experiments;
mod parallel;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use examples::{eval_examples, train_examples, world_file, Example, TrainContext};
pub use experiments::{
    encoder_ablation, spearman, train_regime, transfer_sweep, transfer_sweep_methods,
    zero_shot_experiment, AblationReport, AblationRow, RegimeResult, SweepMethod, SweepPoint,
    SweepReport, ZeroShotReport, DEFAULT_EPSILONS, ZERO_SHOT_REGIMES,
};
pub use parallel::{parallel_map, worker_threads, THREADS_ENV};
pub use train::{
    evaluate, evaluate_episodes, train, EvalPoint, EvalPolicy, RunLog, TrainOutcome, RUN_LOG_HEADER,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, Mode, PretrainConfig};
use crate::autodiff::AutodiffError;
use crate::lang::{LangError, MtConfig};
use crate::metrics::MetricsError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("regime `{regime}` cannot run on this dataset: {reason}")]
    RegimeMismatch {
        regime: &'static str,
        reason: String,
    },
    #[error("unknown regime `{0}`; valid regimes: {valid}", valid = Regime::valid_list())]
    UnknownRegime(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which instructions a run trains on and is tested with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Human source for both training and testing.
    MonoSrc,
    /// Human target for both (annotated target data).
    TrainAn,
    /// Trained on machine-translated target, tested on human target.
    TrainMt,
    /// Trained on human source, tested on source translated from human
    /// target.
    TestMt,
    /// Dual stream: (human source, translated target) pairs in training,
    /// (translated source, human target) pairs in testing.
    Xli,
    /// Human target plus human source, tested on human target.
    AnEn,
    /// Human target where annotated, translated target elsewhere.
    AnMt,
    /// Diagnostic: rollouts follow the reference path.
    TeacherOracle,
}

impl Regime {
    pub const ALL: [Regime; 8] = [
        Regime::MonoSrc,
        Regime::TrainAn,
        Regime::TrainMt,
        Regime::TestMt,
        Regime::Xli,
        Regime::AnEn,
        Regime::AnMt,
        Regime::TeacherOracle,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Regime::MonoSrc => "mono-src",
            Regime::TrainAn => "train-an",
            Regime::TrainMt => "train-mt",
            Regime::TestMt => "test-mt",
            Regime::Xli => "xli",
            Regime::AnEn => "an-en",
            Regime::AnMt => "an-mt",
            Regime::TeacherOracle => "teacher-oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TrainerError> {
        Self::ALL
            .into_iter()
            .find(|r| r.tag() == s)
            .ok_or_else(|| TrainerError::UnknownRegime(s.to_string()))
    }

    pub fn valid_list() -> String {
        Self::ALL.map(Regime::tag).join(", ")
    }

    pub fn mode(self) -> Mode {
        match self {
            Regime::Xli => Mode::Xli,
            _ => Mode::Mono,
        }
    }
}

/// Agent sizes; the vocabulary and view sizes come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentDims {
    pub d_embed: usize,
    pub d_enc: usize,
    pub d_dec: usize,
    pub shared_embedding: bool,
}

impl Default for AgentDims {
    fn default() -> Self {
        Self {
            d_embed: 32,
            d_enc: 64,
            d_dec: 64,
            shared_embedding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub encoder_lr: f64,
    pub decoder_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seeds: Vec<u64>,
    pub regime: Regime,
    pub mt: MtConfig,
    pub epsilon: f64,
    pub dims: AgentDims,
    /// Execute the agent's own argmax actions during training, supervised
    /// by the shortest path from wherever it is.
    pub student_forcing: bool,
    pub max_actions: usize,
    /// Masked-token warm start of the encoder before training.
    pub pretrain: Option<PretrainConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 16,
            eval_interval: 100,
            encoder_lr: 1e-3,
            decoder_lr: 1e-3,
            weight_decay: 5e-4,
            dropout: 0.1,
            seeds: vec![0, 1, 2],
            regime: Regime::MonoSrc,
            mt: MtConfig::default(),
            epsilon: 0.0,
            dims: AgentDims::default(),
            student_forcing: false,
            max_actions: crate::agent::MAX_ACTIONS,
            pretrain: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: String| Err(TrainerError::Config(m));
        if self.eval_interval == 0 || self.iterations % self.eval_interval != 0 {
            return bad(format!(
                "eval interval {} must be positive and divide iterations {}",
                self.eval_interval, self.iterations
            ));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.encoder_lr > 0.0 && self.decoder_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.max_actions == 0 {
            return bad("max actions must be at least 1".into());
        }
        self.mt.validate()?;
        Ok(())
    }
}
