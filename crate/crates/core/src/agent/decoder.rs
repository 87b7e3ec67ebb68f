use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{encode, lstm_cell, EncoderOutput};
use super::{AgentConfig, AgentError, InstructionPair, Mode};
use crate::autodiff::{Tape, Tensor, Var};
use crate::lang::Language;
use crate::world::{
    navigable_actions, observe, shortest_path, step, Action, PathSpec, Pose, World,
};

/// Bilinear attention: `softmax(query · W · keysᵀ)` weights over the `M`
/// rows, and the weighted sum of `values`. Returns `(context, weights)`.
pub fn attend(
    tape: &mut Tape,
    query: Var,
    w: Var,
    keys: Var,
    values: Var,
) -> Result<(Var, Var), AgentError> {
    let q = tape.matmul(query, w)?;
    let kt = tape.transpose(keys)?;
    let scores = tape.matmul(q, kt)?;
    let weights = tape.softmax(scores);
    let context = tape.matmul(weights, values)?;
    Ok((context, weights))
}

/// Decoder state of one language stream.
#[derive(Debug, Clone)]
pub struct StreamState {
    pub language: Language,
    /// Recurrent `(hidden, cell)`, `None` until initialized.
    pub recurrent: Option<(Var, Var)>,
    /// Grounded representation `tanh(W·[text context, hidden] + b)`.
    pub grounded: Option<Var>,
    pub text_attention: Vec<f64>,
    pub visual_attention: Vec<f64>,
}

impl StreamState {
    pub fn uninit(language: Language) -> Self {
        Self {
            language,
            recurrent: None,
            grounded: None,
            text_attention: Vec::new(),
            visual_attention: Vec::new(),
        }
    }
}

/// Starts a stream from the encoder's pooled state.
pub fn init_stream(
    tape: &mut Tape,
    cfg: &AgentConfig,
    enc: &EncoderOutput,
    language: Language,
) -> Result<StreamState, AgentError> {
    let w = tape.param("dec.init.w")?;
    let b = tape.param("dec.init.b")?;
    let z = tape.matmul(enc.pooled, w)?;
    let z = tape.add(z, b)?;
    let h = tape.tanh(z);
    let c = tape.constant(Tensor::zeros(&[1, cfg.d_dec]));
    Ok(StreamState {
        recurrent: Some((h, c)),
        ..StreamState::uninit(language)
    })
}

/// One decoder step: attend over the `K × d_view` views with the previous
/// hidden state, advance the LSTM on `[visual context, previous action]`,
/// attend over the instruction with the new state, and ground.
pub fn decode_step(
    tape: &mut Tape,
    cfg: &AgentConfig,
    stream: &mut StreamState,
    views: Var,
    prev_action: Var,
    enc: &EncoderOutput,
) -> Result<(), AgentError> {
    let (h, c) = stream.recurrent.ok_or(AgentError::Uninitialized)?;
    let d_view = tape.value(views).last_dim();
    if d_view != cfg.d_view {
        return Err(AgentError::ViewDim {
            got: d_view,
            expected: cfg.d_view,
        });
    }
    let w_vis = tape.param("dec.att.vis")?;
    let (visual, vis_w) = attend(tape, h, w_vis, views, views)?;
    let x = tape.concat_cols(&[visual, prev_action])?;
    let w = tape.param("dec.lstm.w")?;
    let b = tape.param("dec.lstm.b")?;
    let (h, c) = lstm_cell(tape, x, h, c, w, b, cfg.d_dec)?;
    let w_txt = tape.param("dec.att.txt")?;
    let (text, txt_w) = attend(tape, h, w_txt, enc.context, enc.context)?;
    let cat = tape.concat_cols(&[text, h])?;
    let w_out = tape.param("dec.out.w")?;
    let b_out = tape.param("dec.out.b")?;
    let z = tape.matmul(cat, w_out)?;
    let z = tape.add(z, b_out)?;
    let grounded = tape.tanh(z);
    stream.recurrent = Some((h, c));
    stream.grounded = Some(grounded);
    stream.text_attention = tape.value(txt_w).data().to_vec();
    stream.visual_attention = tape.value(vis_w).data().to_vec();
    Ok(())
}

/// Gate weight on the source stream at one step, with the mixed state and
/// both streams' textual attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub t: usize,
    pub alpha: f64,
    pub fused: Vec<f64>,
    pub source_attention: Vec<f64>,
    pub target_attention: Vec<f64>,
}

/// `α = softmax(W_g·[h_S, h_T] + b_g)[0]`, mixed state `α·h_S + (1−α)·h_T`.
/// `streams` are (source, target).
pub fn xli_fuse(
    tape: &mut Tape,
    cfg: &AgentConfig,
    t: usize,
    streams: &[StreamState],
) -> Result<(Var, FusionRecord), AgentError> {
    if cfg.mode != Mode::Xli || streams.len() != 2 {
        return Err(AgentError::NotXli);
    }
    let hs = streams[0].grounded.ok_or(AgentError::Uninitialized)?;
    let ht = streams[1].grounded.ok_or(AgentError::Uninitialized)?;
    let w = tape.param("gate.w")?;
    let b = tape.param("gate.b")?;
    let cat = tape.concat_cols(&[hs, ht])?;
    let z = tape.matmul(cat, w)?;
    let z = tape.add(z, b)?;
    let p = tape.softmax(z);
    let ones = tape.constant(Tensor::new(vec![1, cfg.d_dec], vec![1.0; cfg.d_dec])?);
    let a = tape.slice_cols(p, 0, 1)?;
    let a = tape.matmul(a, ones)?;
    let na = tape.slice_cols(p, 1, 2)?;
    let na = tape.matmul(na, ones)?;
    let ws = tape.mul(a, hs)?;
    let wt = tape.mul(na, ht)?;
    let fused = tape.add(ws, wt)?;
    let record = FusionRecord {
        t,
        alpha: tape.value(p).data()[0],
        fused: tape.value(fused).data().to_vec(),
        source_attention: streams[0].text_attention.clone(),
        target_attention: streams[1].text_attention.clone(),
    };
    Ok((fused, record))
}

/// Candidate logits `(W_a·h)ᵀ·u_j`. `slots[j]` is the view row of a move
/// candidate, `None` for Stop (a learned vector).
pub fn score_actions(
    tape: &mut Tape,
    fused: Var,
    views: Var,
    slots: &[Option<usize>],
) -> Result<Var, AgentError> {
    if slots.is_empty() {
        return Err(AgentError::NoCandidates);
    }
    let cand_w = tape.param("act.cand.w")?;
    let stop = tape.param("act.stop")?;
    let mut rows = Vec::with_capacity(slots.len());
    for slot in slots {
        rows.push(match slot {
            Some(j) => {
                let v = tape.slice_rows(views, *j, j + 1)?;
                tape.matmul(v, cand_w)?
            }
            None => stop,
        });
    }
    let u = tape.concat_rows(&rows)?;
    let w = tape.param("act.w")?;
    let q = tape.matmul(fused, w)?;
    let ut = tape.transpose(u)?;
    Ok(tape.matmul(q, ut)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub candidates: Vec<Action>,
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn from_logits(candidates: Vec<Action>, logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Self {
            candidates,
            probs: exps.iter().map(|e| e / sum).collect(),
        }
    }

    /// Most probable candidate; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Greedy,
    /// Follow the reference path, then stop.
    Teacher(&'a PathSpec),
    /// Execute the agent's argmax while supervising with the first hop of
    /// the shortest path from the current viewpoint to the goal.
    Student(&'a PathSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamTrace {
    pub language: Language,
    pub text_attention: Vec<f64>,
    pub visual_attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: usize,
    pub viewpoint: usize,
    pub heading: usize,
    pub candidates: Vec<Action>,
    pub probs: Vec<f64>,
    pub chosen: usize,
    pub streams: Vec<StreamTrace>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Visited viewpoints, start included.
    pub trajectory: Vec<usize>,
    pub actions: Vec<Action>,
    pub steps: Vec<StepTrace>,
    pub fusion: Vec<FusionRecord>,
}

fn view_slot(world: &World, pose: &Pose, action: Action) -> Option<usize> {
    match action {
        Action::MoveTo(to) => {
            let k = world.k();
            Some((world.direction_sector(pose.viewpoint, to) + k - pose.heading) % k)
        }
        Action::Stop => None,
    }
}

/// Shared rollout. Under the teacher policy the returned vars are the
/// per-step cross-entropy terms.
fn rollout(
    tape: &mut Tape,
    cfg: &AgentConfig,
    world: &World,
    start: Pose,
    pair: &InstructionPair,
    policy: Policy,
    mut dropout: Option<&mut ChaCha8Rng>,
    max_actions: usize,
) -> Result<(Episode, Vec<Var>), AgentError> {
    if world.view_dim() != cfg.d_view {
        return Err(AgentError::ViewDim {
            got: world.view_dim(),
            expected: cfg.d_view,
        });
    }
    let inputs = pair.streams(cfg.mode)?;
    let mut encoded = Vec::with_capacity(inputs.len());
    let mut streams = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let enc = encode(tape, cfg, input, dropout.as_deref_mut())?;
        streams.push(init_stream(tape, cfg, &enc, input.language)?);
        encoded.push(enc);
    }

    let mut pose = start;
    world.check_viewpoint(pose.viewpoint)?;
    let mut prev_action = tape.constant(Tensor::zeros(&[1, cfg.d_view]));
    let mut episode = Episode {
        trajectory: vec![pose.viewpoint],
        actions: Vec::new(),
        steps: Vec::new(),
        fusion: Vec::new(),
    };
    let mut terms = Vec::new();
    for t in 0..max_actions {
        let obs = observe(world, &pose)?;
        let views = tape.constant(Tensor::matrix(
            obs.k(),
            obs.view_dim(),
            obs.as_flat().to_vec(),
        )?);
        for (stream, enc) in streams.iter_mut().zip(&encoded) {
            decode_step(tape, cfg, stream, views, prev_action, enc)?;
        }
        let (fused, alpha) = match cfg.mode {
            Mode::Mono => (streams[0].grounded.ok_or(AgentError::Uninitialized)?, None),
            Mode::Xli => {
                let (fused, record) = xli_fuse(tape, cfg, t, &streams)?;
                let alpha = record.alpha;
                episode.fusion.push(record);
                (fused, Some(alpha))
            }
        };
        let candidates = navigable_actions(world, &pose)?;
        let slots: Vec<Option<usize>> = candidates
            .iter()
            .map(|&a| view_slot(world, &pose, a))
            .collect();
        let logits = score_actions(tape, fused, views, &slots)?;
        let dist = ActionDistribution::from_logits(candidates, tape.value(logits).data());
        let chosen = match policy {
            Policy::Greedy => dist.argmax(),
            Policy::Teacher(spec) => {
                let target = match spec.path.get(t + 1) {
                    Some(&next) => Action::MoveTo(next),
                    None => Action::Stop,
                };
                let idx = dist.candidates.iter().position(|&a| a == target).ok_or(
                    crate::world::WorldError::NotAdjacent {
                        from: pose.viewpoint,
                        to: spec.path.get(t + 1).copied().unwrap_or(pose.viewpoint),
                    },
                )?;
                terms.push(tape.cross_entropy(logits, idx)?);
                idx
            }
            Policy::Student(spec) => {
                let target = if pose.viewpoint == spec.goal {
                    Action::Stop
                } else {
                    Action::MoveTo(shortest_path(world, pose.viewpoint, spec.goal)?.0[1])
                };
                let idx = dist
                    .candidates
                    .iter()
                    .position(|&a| a == target)
                    .expect("first hop is a neighbor");
                terms.push(tape.cross_entropy(logits, idx)?);
                dist.argmax()
            }
        };
        let action = dist.candidates[chosen];
        episode.steps.push(StepTrace {
            t,
            viewpoint: pose.viewpoint,
            heading: pose.heading,
            candidates: dist.candidates.clone(),
            probs: dist.probs.clone(),
            chosen,
            streams: streams
                .iter()
                .map(|s| StreamTrace {
                    language: s.language,
                    text_attention: s.text_attention.clone(),
                    visual_attention: s.visual_attention.clone(),
                })
                .collect(),
            alpha,
        });
        episode.actions.push(action);
        if action == Action::Stop {
            break;
        }
        let slot = slots[chosen].expect("move candidates have a view");
        prev_action = tape.slice_rows(views, slot, slot + 1)?;
        pose = step(world, &pose, action)?;
        episode.trajectory.push(pose.viewpoint);
    }
    Ok((episode, terms))
}

/// Teacher-forced cross-entropy summed over every action of the reference
/// path, Stop at the goal included. Dropout on embeddings is active when
/// `dropout` carries an rng.
pub fn episode_loss(
    tape: &mut Tape,
    cfg: &AgentConfig,
    world: &World,
    spec: &PathSpec,
    pair: &InstructionPair,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Var, AgentError> {
    spec.validate(world)?;
    let start = Pose::new(world, spec.start(), spec.heading)?;
    let (_, terms) = rollout(
        tape,
        cfg,
        world,
        start,
        pair,
        Policy::Teacher(spec),
        dropout,
        spec.path.len(),
    )?;
    Ok(tape.sum_scalars(&terms)?)
}

/// Student-forced loss: the agent follows its own argmax for at most
/// `max_actions` actions and every step is scored against the shortest-path
/// action from where it stands.
pub fn student_loss(
    tape: &mut Tape,
    cfg: &AgentConfig,
    world: &World,
    spec: &PathSpec,
    pair: &InstructionPair,
    dropout: Option<&mut ChaCha8Rng>,
    max_actions: usize,
) -> Result<Var, AgentError> {
    spec.validate(world)?;
    let start = Pose::new(world, spec.start(), spec.heading)?;
    let (_, terms) = rollout(
        tape,
        cfg,
        world,
        start,
        pair,
        Policy::Student(spec),
        dropout,
        max_actions,
    )?;
    Ok(tape.sum_scalars(&terms)?)
}

/// Greedy or teacher rollout of at most `max_actions` actions (Stop
/// included), without dropout.
pub fn run_episode(
    tape: &mut Tape,
    cfg: &AgentConfig,
    world: &World,
    start: Pose,
    pair: &InstructionPair,
    policy: Policy,
    max_actions: usize,
) -> Result<Episode, AgentError> {
    Ok(rollout(tape, cfg, world, start, pair, policy, None, max_actions)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{init_params, InstructionInput};
    use crate::autodiff::ParamStore;

    fn tiny(mode: Mode, d_view: usize) -> AgentConfig {
        AgentConfig {
            vocab_size: 10,
            d_embed: 3,
            d_enc: 3,
            d_dec: 2,
            d_view,
            dropout: 0.0,
            mode,
            shared_embedding: true,
        }
    }

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn attend_single_key_and_identical_keys() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let q = tape.constant(matrix(1, 2, &[0.3, -1.0]));
        let w = tape.constant(Tensor::identity(2));
        let one = tape.constant(matrix(1, 2, &[2.0, 5.0]));
        let (ctx, wts) = attend(&mut tape, q, w, one, one).unwrap();
        assert_eq!(tape.value(wts).data(), &[1.0]);
        assert_eq!(tape.value(ctx).data(), &[2.0, 5.0]);
        let same = tape.constant(matrix(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]));
        let vals = tape.constant(matrix(3, 1, &[3.0, 6.0, 9.0]));
        let (ctx, wts) = attend(&mut tape, q, w, same, vals).unwrap();
        for &p in tape.value(wts).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((tape.value(ctx).item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn attend_three_keys_hand_computed() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let q = tape.constant(matrix(1, 2, &[1.0, 2.0]));
        let w = tape.constant(Tensor::identity(2));
        let keys = tape.constant(matrix(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]));
        let (_, wts) = attend(&mut tape, q, w, keys, keys).unwrap();
        // dot products 1, 2, 3
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let want = [1f64.exp() / z, 2f64.exp() / z, 3f64.exp() / z];
        for (a, b) in tape.value(wts).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn zero_store(cfg: &AgentConfig) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape) in cfg.shapes() {
            store.insert(name, Tensor::zeros(&shape));
        }
        store
    }

    fn input(lang: Language, ids: &[usize]) -> InstructionInput {
        InstructionInput {
            language: lang,
            ids: ids.to_vec(),
        }
    }

    #[test]
    fn zero_weights_ground_to_zero_and_single_view_passes_through() {
        let cfg = tiny(Mode::Mono, 3);
        let store = zero_store(&cfg);
        let mut tape = Tape::new(&store);
        let enc = encode(&mut tape, &cfg, &input(Language::Source, &[2, 4]), None).unwrap();
        let mut s = init_stream(&mut tape, &cfg, &enc, Language::Source).unwrap();
        let views = tape.constant(matrix(1, 3, &[0.5, -0.25, 2.0]));
        let prev = tape.constant(Tensor::zeros(&[1, 3]));
        decode_step(&mut tape, &cfg, &mut s, views, prev, &enc).unwrap();
        assert_eq!(tape.value(s.grounded.unwrap()).data(), &[0.0, 0.0]);
        assert_eq!(s.visual_attention, vec![1.0]);
        let mut u = StreamState::uninit(Language::Source);
        assert!(matches!(
            decode_step(&mut tape, &cfg, &mut u, views, prev, &enc),
            Err(AgentError::Uninitialized)
        ));
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn softmax(x: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    // plain row-vector × matrix
    fn vecmat(v: &[f64], m: &Tensor) -> Vec<f64> {
        let cols = m.shape()[1];
        (0..cols)
            .map(|j| v.iter().enumerate().map(|(i, x)| x * m.get2(i, j)).sum())
            .collect()
    }

    #[test]
    fn decode_step_matches_scalar_trace() {
        let cfg = tiny(Mode::Mono, 2);
        let store = init_params(&cfg, 5).unwrap();
        let mut tape = Tape::new(&store);
        let enc = encode(&mut tape, &cfg, &input(Language::Source, &[2, 7, 3]), None).unwrap();
        let mut s = init_stream(&mut tape, &cfg, &enc, Language::Source).unwrap();
        let (h0, c0) = s.recurrent.unwrap();
        let h0 = tape.value(h0).data().to_vec();
        let c0 = tape.value(c0).data().to_vec();
        let ctx = tape.value(enc.context).clone();
        let views_t = matrix(3, 2, &[1.0, 0.0, 0.0, 1.0, -0.5, 0.5]);
        let prev_v = [0.25, -0.75];
        let views = tape.constant(views_t.clone());
        let prev = tape.constant(matrix(1, 2, &prev_v));
        decode_step(&mut tape, &cfg, &mut s, views, prev, &enc).unwrap();

        let p = |n: &str| store.value(n).unwrap().clone();
        // visual attention
        let q = vecmat(&h0, &p("dec.att.vis"));
        let scores: Vec<f64> = (0..3)
            .map(|r| q[0] * views_t.get2(r, 0) + q[1] * views_t.get2(r, 1))
            .collect();
        let a = softmax(&scores);
        let f: Vec<f64> = (0..2)
            .map(|c| (0..3).map(|r| a[r] * views_t.get2(r, c)).sum())
            .collect();
        // lstm
        let x: Vec<f64> = f.iter().chain(&prev_v).chain(&h0).copied().collect();
        let mut z = vecmat(&x, &p("dec.lstm.w"));
        for (zi, bi) in z.iter_mut().zip(p("dec.lstm.b").data()) {
            *zi += bi;
        }
        let d = 2;
        let h1: Vec<f64> = (0..d)
            .map(|i| {
                let c = sigmoid(z[d + i]) * c0[i] + sigmoid(z[i]) * z[2 * d + i].tanh();
                sigmoid(z[3 * d + i]) * c.tanh()
            })
            .collect();
        // text attention
        let qt = vecmat(&h1, &p("dec.att.txt"));
        let st: Vec<f64> = (0..3)
            .map(|r| (0..3).map(|c| qt[c] * ctx.get2(r, c)).sum())
            .collect();
        let at = softmax(&st);
        let ct: Vec<f64> = (0..3)
            .map(|c| (0..3).map(|r| at[r] * ctx.get2(r, c)).sum())
            .collect();
        let cat: Vec<f64> = ct.iter().chain(&h1).copied().collect();
        let out = vecmat(&cat, &p("dec.out.w"));
        let want: Vec<f64> = out
            .iter()
            .zip(p("dec.out.b").data())
            .map(|(o, b)| (o + b).tanh())
            .collect();

        let got = tape.value(s.grounded.unwrap()).data();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
        for (g, w) in s.text_attention.iter().zip(&at) {
            assert!((g - w).abs() < 1e-12);
        }
        for (g, w) in s.visual_attention.iter().zip(&a) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    fn grounded_streams(tape: &mut Tape, hs: &[f64], ht: &[f64]) -> Vec<StreamState> {
        let mut out = Vec::new();
        for (lang, h) in [(Language::Source, hs), (Language::Target, ht)] {
            let v = tape.constant(Tensor::row(h.to_vec()));
            out.push(StreamState {
                grounded: Some(v),
                ..StreamState::uninit(lang)
            });
        }
        out
    }

    #[test]
    fn fusion_equal_inputs_saturation_and_convexity() {
        let cfg = tiny(Mode::Xli, 2);
        let mut store = init_params(&cfg, 1).unwrap();
        {
            let mut tape = Tape::new(&store);
            let streams = grounded_streams(&mut tape, &[0.3, -0.6], &[0.3, -0.6]);
            let (_, rec) = xli_fuse(&mut tape, &cfg, 0, &streams).unwrap();
            assert!(rec.alpha > 0.0 && rec.alpha < 1.0);
            for (a, b) in rec.fused.iter().zip([0.3, -0.6]) {
                assert!((a - b).abs() < 1e-15);
            }
            let streams = grounded_streams(&mut tape, &[0.9, -0.2], &[-0.4, 0.7]);
            let (_, rec) = xli_fuse(&mut tape, &cfg, 0, &streams).unwrap();
            assert!(rec.fused[0] <= 0.9 && rec.fused[0] >= -0.4);
            assert!(rec.fused[1] <= 0.7 && rec.fused[1] >= -0.2);
        }
        *store.value_mut("gate.w").unwrap() = Tensor::zeros(&[4, 2]);
        *store.value_mut("gate.b").unwrap() = Tensor::row(vec![50.0, -50.0]);
        let mut tape = Tape::new(&store);
        let streams = grounded_streams(&mut tape, &[0.9, -0.2], &[-0.4, 0.7]);
        let (_, rec) = xli_fuse(&mut tape, &cfg, 0, &streams).unwrap();
        assert!((rec.fused[0] - 0.9).abs() < 1e-12 && (rec.fused[1] + 0.2).abs() < 1e-12);

        let mono = tiny(Mode::Mono, 2);
        assert!(matches!(
            xli_fuse(&mut tape, &mono, 0, &streams),
            Err(AgentError::NotXli)
        ));
    }

    #[test]
    fn score_actions_cases() {
        let cfg = tiny(Mode::Mono, 2);
        let mut store = zero_store(&cfg);
        let mut tape = Tape::new(&store);
        let views = tape.constant(matrix(2, 2, &[1.0, 0.5, -1.0, 2.0]));
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let l = score_actions(&mut tape, h, views, &[None]).unwrap();
        let d = ActionDistribution::from_logits(vec![Action::Stop], tape.value(l).data());
        assert_eq!(d.probs, vec![1.0]);
        let l = score_actions(&mut tape, h, views, &[Some(0), Some(1), None]).unwrap();
        let d = ActionDistribution::from_logits(
            vec![Action::MoveTo(4), Action::MoveTo(5), Action::Stop],
            tape.value(l).data(),
        );
        assert!(d.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(d.argmax(), 0);
        drop(tape);

        store.insert("act.w", Tensor::identity(2));
        store.insert("act.cand.w", Tensor::identity(2));
        store.insert("act.stop", Tensor::row(vec![0.5, 0.5]));
        let mut tape = Tape::new(&store);
        let views = tape.constant(matrix(2, 2, &[1.0, 0.5, -1.0, 2.0]));
        let h = tape.constant(Tensor::row(vec![1.0, -1.0]));
        let l = score_actions(&mut tape, h, views, &[Some(0), Some(1), None]).unwrap();
        // logits 0.5, −3, 0
        let z = 0.5f64.exp() + (-3f64).exp() + 1.0;
        let d = ActionDistribution::from_logits(
            vec![Action::MoveTo(1), Action::MoveTo(2), Action::Stop],
            tape.value(l).data(),
        );
        for (p, w) in d
            .probs
            .iter()
            .zip([0.5f64.exp() / z, (-3f64).exp() / z, 1.0 / z])
        {
            assert!((p - w).abs() < 1e-15);
        }
    }
}
