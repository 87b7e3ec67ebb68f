use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::PretrainConfig;
use crate::lang::{DatasetConfig, SplitName};
use crate::metrics::{aggregate, AggregateReport, TrajectoryMetrics, METRIC_NAMES};

use super::{
    eval_examples, evaluate_episodes, parallel_map, train, worker_threads, EvalPolicy, Regime,
    TrainConfig, TrainContext, TrainOutcome, TrainerError,
};

/// One regime trained and tested over every seed.
#[derive(Debug, Clone)]
pub struct RegimeResult {
    pub regime: Regime,
    pub runs: Vec<TrainOutcome>,
    pub val_seen: AggregateReport,
    pub val_unseen: AggregateReport,
}

impl RegimeResult {
    pub fn split(&self, split: SplitName) -> &AggregateReport {
        match split {
            SplitName::ValUnseen => &self.val_unseen,
            _ => &self.val_seen,
        }
    }
}

/// Trains `regime` for one seed and scores its selected checkpoint on both
/// validation splits.
fn run_seed(
    ctx: &TrainContext,
    cfg: &TrainConfig,
    regime: Regime,
    seed: u64,
) -> Result<(TrainOutcome, Vec<TrajectoryMetrics>, Vec<TrajectoryMetrics>), TrainerError> {
    let cfg = TrainConfig {
        regime,
        ..cfg.clone()
    };
    let outcome = train(&cfg, ctx, seed)?;
    let mut per_split = Vec::with_capacity(2);
    for split in [SplitName::ValSeen, SplitName::ValUnseen] {
        let examples = eval_examples(ctx, split, regime, regime.mode())?;
        per_split.push(evaluate_episodes(
            ctx,
            &outcome.best.agent,
            &outcome.best.params,
            &examples,
            EvalPolicy::Greedy,
            cfg.max_actions,
        )?);
    }
    let unseen = per_split.pop().expect("two splits");
    let seen = per_split.pop().expect("two splits");
    Ok((outcome, seen, unseen))
}

struct Job<'a> {
    ctx: &'a TrainContext,
    cfg: TrainConfig,
    regime: Regime,
}

/// Runs every job for every seed on the worker pool and aggregates per job.
fn run_jobs(jobs: &[Job], seeds: &[u64]) -> Result<Vec<RegimeResult>, TrainerError> {
    let work: Vec<(usize, u64)> = (0..jobs.len())
        .flat_map(|j| seeds.iter().map(move |&s| (j, s)))
        .collect();
    let results = parallel_map(&work, worker_threads(), |&(j, seed)| {
        run_seed(jobs[j].ctx, &jobs[j].cfg, jobs[j].regime, seed)
    });
    let mut results = results.into_iter();
    let mut out = Vec::with_capacity(jobs.len());
    for job in jobs {
        let mut runs = Vec::new();
        let mut seen = Vec::new();
        let mut unseen = Vec::new();
        for &seed in seeds {
            let (outcome, s, u) = results.next().expect("one result per job and seed")?;
            runs.push(outcome);
            seen.push((seed, s));
            unseen.push((seed, u));
        }
        out.push(RegimeResult {
            regime: job.regime,
            runs,
            val_seen: aggregate(SplitName::ValSeen.tag(), &seen)?,
            val_unseen: aggregate(SplitName::ValUnseen.tag(), &unseen)?,
        });
    }
    Ok(out)
}

/// Trains `cfg.regime` on every seed of `cfg` and scores each selected
/// checkpoint on both validation splits.
pub fn train_regime(ctx: &TrainContext, cfg: &TrainConfig) -> Result<RegimeResult, TrainerError> {
    cfg.validate()?;
    let job = Job {
        ctx,
        cfg: cfg.clone(),
        regime: cfg.regime,
    };
    Ok(run_jobs(&[job], &cfg.seeds)?.pop().expect("one job"))
}

fn with_epsilon(data: &DatasetConfig, epsilon: f64) -> DatasetConfig {
    DatasetConfig {
        epsilon,
        ..data.clone()
    }
}

/// The four zero-shot rows in table order: train w/ AN, train w/ MT,
/// test w/ MT, XLI.
#[derive(Debug, Clone)]
pub struct ZeroShotReport {
    pub rows: Vec<RegimeResult>,
}

pub const ZERO_SHOT_REGIMES: [Regime; 4] = [
    Regime::TrainAn,
    Regime::TrainMt,
    Regime::TestMt,
    Regime::Xli,
];

fn table_header(lead: &str) -> String {
    let mut h = lead.to_string();
    for m in METRIC_NAMES {
        write!(h, ",{m},{m}_std").unwrap();
    }
    h
}

fn table_cells(r: &AggregateReport) -> String {
    let mut out = String::new();
    for (m, s) in r.mean.to_array().iter().zip(r.std.to_array()) {
        write!(out, ",{m:.4},{s:.4}").unwrap();
    }
    out
}

impl ZeroShotReport {
    pub fn row(&self, regime: Regime) -> Option<&RegimeResult> {
        self.rows.iter().find(|r| r.regime == regime)
    }

    /// XLI's val-unseen SPL minus the better of the two translation-based
    /// mono regimes.
    pub fn xli_margin(&self) -> f64 {
        let spl = |r: Regime| self.row(r).map_or(f64::NAN, |x| x.val_unseen.mean.spl);
        spl(Regime::Xli) - spl(Regime::TrainMt).max(spl(Regime::TestMt))
    }

    /// `regime,split,PL,PL_std,...` with one row per regime and split.
    pub fn to_csv(&self) -> String {
        let mut out = table_header("regime,split");
        out.push('\n');
        for r in &self.rows {
            for split in [SplitName::ValSeen, SplitName::ValUnseen] {
                writeln!(
                    out,
                    "{},{}{}",
                    r.regime.tag(),
                    split.tag(),
                    table_cells(r.split(split))
                )
                .unwrap();
            }
        }
        out
    }
}

/// Table-style zero-shot comparison. Every regime except train w/ AN uses
/// data with no annotated target instructions; train w/ AN uses the same
/// trajectories with full target annotation.
pub fn zero_shot_experiment(
    data: &DatasetConfig,
    cfg: &TrainConfig,
) -> Result<ZeroShotReport, TrainerError> {
    cfg.validate()?;
    let zero = TrainContext::generate(&with_epsilon(data, 0.0), &cfg.mt)?;
    let full = TrainContext::generate(&with_epsilon(data, 1.0), &cfg.mt)?;
    let jobs: Vec<Job> = ZERO_SHOT_REGIMES
        .iter()
        .map(|&regime| Job {
            ctx: if regime == Regime::TrainAn {
                &full
            } else {
                &zero
            },
            cfg: TrainConfig {
                epsilon: if regime == Regime::TrainAn { 1.0 } else { 0.0 },
                ..cfg.clone()
            },
            regime,
        })
        .collect();
    Ok(ZeroShotReport {
        rows: run_jobs(&jobs, &cfg.seeds)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    Xli,
    /// Annotated target instructions only.
    An,
    /// Annotated target plus all source instructions.
    AnEn,
    /// Annotated target, translated target elsewhere.
    AnMt,
}

impl SweepMethod {
    pub const ALL: [SweepMethod; 4] = [
        SweepMethod::Xli,
        SweepMethod::An,
        SweepMethod::AnEn,
        SweepMethod::AnMt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SweepMethod::Xli => "xli",
            SweepMethod::An => "an",
            SweepMethod::AnEn => "an-en",
            SweepMethod::AnMt => "an-mt",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            SweepMethod::Xli => Regime::Xli,
            SweepMethod::An => Regime::TrainAn,
            SweepMethod::AnEn => Regime::AnEn,
            SweepMethod::AnMt => Regime::AnMt,
        }
    }
}

pub const DEFAULT_EPSILONS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub method: SweepMethod,
    pub result: RegimeResult,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// `(ε, mean val-unseen SPL)` of one method, in ε order.
    pub fn curve(&self, method: SweepMethod, split: SplitName) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.method == method)
            .map(|p| (p.epsilon, p.result.split(split).mean.spl))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,method,split,SR,SR_std,SPL,SPL_std\n");
        for p in &self.points {
            for split in [SplitName::ValSeen, SplitName::ValUnseen] {
                let r = p.result.split(split);
                writeln!(
                    out,
                    "{:.2},{},{},{:.4},{:.4},{:.4},{:.4}",
                    p.epsilon,
                    p.method.tag(),
                    split.tag(),
                    r.mean.sr,
                    r.std.sr,
                    r.mean.spl,
                    r.std.spl
                )
                .unwrap();
            }
        }
        out
    }
}

/// Trains XLI and the three annotated-target baselines at every coverage
/// level. With no annotated target data the AN baseline is the untrained
/// agent.
pub fn transfer_sweep(
    data: &DatasetConfig,
    cfg: &TrainConfig,
    epsilons: &[f64],
) -> Result<SweepReport, TrainerError> {
    transfer_sweep_methods(data, cfg, epsilons, &SweepMethod::ALL)
}

/// [`transfer_sweep`] restricted to `methods`, in the given order.
pub fn transfer_sweep_methods(
    data: &DatasetConfig,
    cfg: &TrainConfig,
    epsilons: &[f64],
    methods: &[SweepMethod],
) -> Result<SweepReport, TrainerError> {
    cfg.validate()?;
    let ctxs = epsilons
        .iter()
        .map(|&e| TrainContext::generate(&with_epsilon(data, e), &cfg.mt))
        .collect::<Result<Vec<_>, _>>()?;
    let mut jobs = Vec::new();
    let mut keys = Vec::new();
    for (ctx, &epsilon) in ctxs.iter().zip(epsilons) {
        for &method in methods {
            let no_data = ctx.dataset.train.iter().all(|r| {
                r.instructions
                    .tgt
                    .iter()
                    .all(|i| i.provenance != crate::lang::Provenance::Human)
            });
            let iterations = if method == SweepMethod::An && no_data {
                0
            } else {
                cfg.iterations
            };
            jobs.push(Job {
                ctx,
                cfg: TrainConfig {
                    epsilon,
                    iterations,
                    ..cfg.clone()
                },
                regime: method.regime(),
            });
            keys.push((epsilon, method));
        }
    }
    let results = run_jobs(&jobs, &cfg.seeds)?;
    Ok(SweepReport {
        points: keys
            .into_iter()
            .zip(results)
            .map(|((epsilon, method), result)| SweepPoint {
                epsilon,
                method,
                result,
            })
            .collect(),
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    /// `lstm-scratch` or `lstm-mlm`.
    pub encoder: String,
    pub an: RegimeResult,
    pub mt: RegimeResult,
}

impl AblationRow {
    /// `SPL(AN) − SPL(MT)` on a split.
    pub fn delta_spl(&self, split: SplitName) -> f64 {
        self.an.split(split).mean.spl - self.mt.split(split).mean.spl
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("encoder,split,SPL_AN,SPL_MT,delta_SPL\n");
        for r in &self.rows {
            for split in [SplitName::ValSeen, SplitName::ValUnseen] {
                writeln!(
                    out,
                    "{},{},{:.4},{:.4},{:.4}",
                    r.encoder,
                    split.tag(),
                    r.an.split(split).mean.spl,
                    r.mt.split(split).mean.spl,
                    r.delta_spl(split)
                )
                .unwrap();
            }
        }
        out
    }
}

/// Mono agents trained on annotated versus translated target data with a
/// scratch encoder, and again with a masked-token warm start when
/// `pretrain` is given.
pub fn encoder_ablation(
    data: &DatasetConfig,
    cfg: &TrainConfig,
    pretrain: Option<PretrainConfig>,
) -> Result<AblationReport, TrainerError> {
    cfg.validate()?;
    let ctx = TrainContext::generate(&with_epsilon(data, 1.0), &cfg.mt)?;
    let mut variants = vec![("lstm-scratch", None)];
    if let Some(p) = pretrain {
        variants.push(("lstm-mlm", Some(p)));
    }
    let mut jobs = Vec::new();
    for (_, p) in &variants {
        for regime in [Regime::TrainAn, Regime::TrainMt] {
            jobs.push(Job {
                ctx: &ctx,
                cfg: TrainConfig {
                    epsilon: 1.0,
                    pretrain: *p,
                    ..cfg.clone()
                },
                regime,
            });
        }
    }
    let mut results = run_jobs(&jobs, &cfg.seeds)?.into_iter();
    let rows = variants
        .iter()
        .map(|(name, _)| AblationRow {
            encoder: name.to_string(),
            an: results.next().expect("an result"),
            mt: results.next().expect("mt result"),
        })
        .collect();
    Ok(AblationReport { rows })
}
