use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentConfig, AgentError, InstructionInput};
use crate::autodiff::{adam_step, AdamConfig, AdamState, ParamStore, Tape, Tensor, Var};
use crate::lang::{Language, MAX_TOKENS, PAD};

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    /// `N × d_enc`, one row per token in reading order.
    pub context: Var,
    /// `1 × d_enc`, the state at the first (BOS) position.
    pub pooled: Var,
    pub len: usize,
}

/// One LSTM step over `[x, h]` with gate columns `[i | f | g | o]`.
pub(super) fn lstm_cell(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    w: Var,
    b: Var,
    d: usize,
) -> Result<(Var, Var), AgentError> {
    let xh = tape.concat_cols(&[x, h])?;
    let z = tape.matmul(xh, w)?;
    let z = tape.add(z, b)?;
    let i = tape.slice_cols(z, 0, d)?;
    let f = tape.slice_cols(z, d, 2 * d)?;
    let g = tape.slice_cols(z, 2 * d, 3 * d)?;
    let o = tape.slice_cols(z, 3 * d, 4 * d)?;
    let (i, f, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.sigmoid(o));
    let g = tape.tanh(g);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c2 = tape.add(fc, ig)?;
    let tc = tape.tanh(c2);
    let h2 = tape.mul(o, tc)?;
    Ok((h2, c2))
}

/// Embeds `input` and runs the encoder LSTM from the last token back to the
/// first, so every row sees the rest of the sentence and the pooled state
/// has read all of it. Embedding dropout is applied when `dropout` carries
/// an rng.
pub fn encode(
    tape: &mut Tape,
    cfg: &AgentConfig,
    input: &InstructionInput,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<EncoderOutput, AgentError> {
    let n = input.ids.len();
    if n == 0 || n > MAX_TOKENS {
        return Err(AgentError::InstructionLength(n));
    }
    if let Some(&id) = input.ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(AgentError::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    let table = tape.param(cfg.embedding_name(input.language))?;
    let mut emb = tape.embedding(table, &input.ids)?;
    if let Some(rng) = dropout {
        if cfg.dropout > 0.0 {
            let keep: Vec<bool> = (0..n * cfg.d_embed)
                .map(|_| rng.gen_bool(1.0 - cfg.dropout))
                .collect();
            emb = tape.dropout(emb, &keep, cfg.dropout)?;
        }
    }
    let w = tape.param("enc.lstm.w")?;
    let b = tape.param("enc.lstm.b")?;
    let d = cfg.d_enc;
    let mut h = tape.constant(Tensor::zeros(&[1, d]));
    let mut c = h;
    let mut rows = vec![h; n];
    for i in (0..n).rev() {
        let x = tape.slice_rows(emb, i, i + 1)?;
        (h, c) = lstm_cell(tape, x, h, c, w, b, d)?;
        rows[i] = h;
    }
    let context = tape.concat_rows(&rows)?;
    Ok(EncoderOutput {
        context,
        pooled: rows[0],
        len: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub mask_rate: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch: 16,
            mask_rate: 0.15,
            lr: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    /// Encoder parameters (`enc.*`) plus the prediction head (`mlm.*`).
    pub model: ParamStore,
    /// Mean masked-token loss per step.
    pub losses: Vec<f64>,
}

impl PretrainReport {
    /// Copies the pretrained `enc.*` arrays into `params`.
    pub fn warm_start(&self, params: &mut ParamStore) -> Result<(), AgentError> {
        for (name, p) in self.model.iter() {
            if name.starts_with("enc.") {
                let dst = params.value_mut(name)?;
                if dst.shape() != p.value.shape() {
                    return Err(AgentError::Config(format!(
                        "pretrained `{name}` has a different shape"
                    )));
                }
                *dst = p.value.clone();
            }
        }
        Ok(())
    }
}

fn mask_positions(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<usize> {
    // position 0 holds BOS and is never masked
    (1..len).filter(|_| rng.gen_bool(rate)).collect()
}

/// Masked-token loss of one sentence, or `None` when nothing was masked.
fn mlm_sentence(
    tape: &mut Tape,
    cfg: &AgentConfig,
    input: &InstructionInput,
    masked: &[usize],
) -> Result<Option<Var>, AgentError> {
    if masked.is_empty() {
        return Ok(None);
    }
    let mut ids = input.ids.clone();
    for &p in masked {
        ids[p] = PAD as usize;
    }
    let corrupted = InstructionInput {
        language: input.language,
        ids,
    };
    let out = encode(tape, cfg, &corrupted, None)?;
    let w = tape.param("mlm.w")?;
    let b = tape.param("mlm.b")?;
    let mut terms = Vec::with_capacity(masked.len());
    for &p in masked {
        let row = tape.slice_rows(out.context, p, p + 1)?;
        let logits = tape.matmul(row, w)?;
        let logits = tape.add(logits, b)?;
        terms.push(tape.cross_entropy(logits, input.ids[p])?);
    }
    let sum = tape.sum_scalars(&terms)?;
    Ok(Some(tape.scale(sum, 1.0 / masked.len() as f64)))
}

/// Masked-token prediction over a bilingual corpus. Masked tokens are
/// replaced by PAD and predicted from their contextual rows through a
/// softmax head. `init` supplies the starting encoder arrays.
pub fn pretrain_encoder(
    cfg: &AgentConfig,
    init: &ParamStore,
    corpus: &[InstructionInput],
    pcfg: &PretrainConfig,
) -> Result<PretrainReport, AgentError> {
    if !(pcfg.mask_rate > 0.0 && pcfg.mask_rate <= 1.0) {
        return Err(AgentError::Config(format!(
            "mask rate must be in (0, 1], got {}",
            pcfg.mask_rate
        )));
    }
    if pcfg.batch == 0 {
        return Err(AgentError::Config(
            "pretraining batch must be at least 1".into(),
        ));
    }
    for lang in [Language::Source, Language::Target] {
        if !corpus.iter().any(|s| s.language == lang) {
            return Err(AgentError::Config(format!(
                "pretraining corpus has no {} sentences",
                lang.tag()
            )));
        }
    }
    let mut model = ParamStore::new();
    for (name, p) in init.iter() {
        if name.starts_with("enc.") {
            model.insert(name, p.value.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pcfg.seed);
    let a = 1.0 / (cfg.d_enc as f64).sqrt();
    let head: Vec<f64> = (0..cfg.d_enc * cfg.vocab_size)
        .map(|_| rng.gen_range(-a..a))
        .collect();
    model.insert("mlm.w", Tensor::matrix(cfg.d_enc, cfg.vocab_size, head)?);
    model.insert("mlm.b", Tensor::zeros(&[1, cfg.vocab_size]));

    let adam = AdamConfig {
        lr: pcfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&model);
    let mut losses = Vec::with_capacity(pcfg.steps);
    for _ in 0..pcfg.steps {
        let mut total = 0.0;
        let mut counted = 0;
        for _ in 0..pcfg.batch {
            let sent = corpus.choose(&mut rng).expect("corpus is non-empty");
            let masked = mask_positions(&mut rng, sent.ids.len(), pcfg.mask_rate);
            let grads = {
                let mut tape = Tape::new(&model);
                let Some(loss) = mlm_sentence(&mut tape, cfg, sent, &masked)? else {
                    continue;
                };
                total += tape.value(loss).item();
                tape.backward(loss)?
            };
            counted += 1;
            model.accumulate(&grads, 1.0 / pcfg.batch as f64);
        }
        losses.push(if counted > 0 {
            total / counted as f64
        } else {
            0.0
        });
        if counted > 0 {
            adam_step(&mut model, &mut state, &adam)?;
        }
    }
    Ok(PretrainReport { model, losses })
}

/// Mean masked-token loss of `model` over `corpus` with masks drawn from
/// `seed`; sentences with nothing masked are skipped.
pub fn mlm_loss(
    cfg: &AgentConfig,
    model: &ParamStore,
    corpus: &[InstructionInput],
    mask_rate: f64,
    seed: u64,
) -> Result<f64, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut counted = 0;
    for sent in corpus {
        let masked = mask_positions(&mut rng, sent.ids.len(), mask_rate);
        let mut tape = Tape::new(model);
        if let Some(loss) = mlm_sentence(&mut tape, cfg, sent, &masked)? {
            total += tape.value(loss).item();
            counted += 1;
        }
    }
    Ok(if counted > 0 {
        total / counted as f64
    } else {
        0.0
    })
}

/// Probability the head assigns to the true token at `position` when that
/// single position is masked.
pub fn mlm_probability(
    cfg: &AgentConfig,
    model: &ParamStore,
    sent: &InstructionInput,
    position: usize,
) -> Result<f64, AgentError> {
    let mut tape = Tape::new(model);
    let loss = mlm_sentence(&mut tape, cfg, sent, &[position])?.expect("one position masked");
    Ok((-tape.value(loss).item()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{init_params, Mode};
    use sha2::{Digest, Sha256};

    fn tiny() -> AgentConfig {
        AgentConfig {
            vocab_size: 12,
            d_embed: 4,
            d_enc: 5,
            d_dec: 3,
            d_view: 4,
            dropout: 0.0,
            mode: Mode::Mono,
            shared_embedding: true,
        }
    }

    fn input(ids: &[usize]) -> InstructionInput {
        InstructionInput {
            language: Language::Source,
            ids: ids.to_vec(),
        }
    }

    #[test]
    fn single_token_context_is_the_pooled_state() {
        let cfg = tiny();
        let params = init_params(&cfg, 3).unwrap();
        let mut tape = Tape::new(&params);
        let out = encode(&mut tape, &cfg, &input(&[2]), None).unwrap();
        assert_eq!(tape.value(out.context).shape(), &[1, 5]);
        assert_eq!(
            tape.value(out.context).data(),
            tape.value(out.pooled).data()
        );
    }

    #[test]
    fn rows_depend_only_on_their_suffix() {
        // reading right to left, appending tokens changes every row but the
        // encoding of a shared suffix is unchanged
        let cfg = tiny();
        let params = init_params(&cfg, 3).unwrap();
        let mut tape = Tape::new(&params);
        let long = encode(&mut tape, &cfg, &input(&[2, 7, 4, 5]), None).unwrap();
        let short = encode(&mut tape, &cfg, &input(&[4, 5]), None).unwrap();
        let l = tape.value(long.context);
        let s = tape.value(short.context);
        assert_eq!(l.row_slice(2), s.row_slice(0));
        assert_eq!(l.row_slice(3), s.row_slice(1));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = tiny();
        let params = init_params(&cfg, 3).unwrap();
        let mut tape = Tape::new(&params);
        assert!(matches!(
            encode(&mut tape, &cfg, &input(&[2, 12]), None),
            Err(AgentError::TokenOutOfRange { id: 12, .. })
        ));
        assert!(encode(&mut tape, &cfg, &input(&[]), None).is_err());
        assert!(encode(&mut tape, &cfg, &input(&[2; 81]), None).is_err());
    }

    #[test]
    fn encoding_snapshot_is_stable() {
        let cfg = AgentConfig::desk(30, 19, Mode::Mono);
        let params = init_params(&cfg, 11).unwrap();
        let mut tape = Tape::new(&params);
        let out = encode(&mut tape, &cfg, &input(&[2, 9, 17, 4, 28]), None).unwrap();
        let mut h = Sha256::new();
        for v in tape.value(out.context).data() {
            h.update(v.to_le_bytes());
        }
        let first: String = h
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect();
        // recomputed in a second tape from the same store
        let mut tape2 = Tape::new(&params);
        let out2 = encode(&mut tape2, &cfg, &input(&[2, 9, 17, 4, 28]), None).unwrap();
        assert_eq!(tape.value(out.context), tape2.value(out2.context));
        assert_eq!(first, "240326e76ce57274");
    }

    #[test]
    fn zero_mask_rate_is_rejected() {
        let cfg = tiny();
        let params = init_params(&cfg, 0).unwrap();
        let corpus = vec![
            input(&[2, 4, 5]),
            InstructionInput {
                language: Language::Target,
                ids: vec![2, 6, 7],
            },
        ];
        let pcfg = PretrainConfig {
            mask_rate: 0.0,
            ..PretrainConfig::default()
        };
        assert!(pretrain_encoder(&cfg, &params, &corpus, &pcfg).is_err());
        let mono_corpus = vec![input(&[2, 4, 5])];
        assert!(pretrain_encoder(&cfg, &params, &mono_corpus, &PretrainConfig::default()).is_err());
    }
}
