//! Policy-gradient training loop.
//!
//! Each step takes a batch of training queries, samples rankings for every
//! query from the current Plackett-Luce policy, forms the configured
//! gradient estimate plus the entropy bonus, averages over the batch and
//! applies one ascent update. Per-query work runs on the executor with its
//! own RNG stream keyed by `(seed, epoch, step, query)`, and the batch
//! average is reduced in query order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::CandidateSet;
use crate::estimator::{combine_with_entropy, entropy_gradient, estimate, EstimatorKind};
use crate::metrics::Metric;
use crate::parallel::Executor;
use crate::plackett_luce::{sample_gumbel, sort_policy};
use crate::rng;
use crate::scoring::{Architecture, ScorerParams};
use crate::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" | "adaptive-moment" => Ok(OptimizerKind::Adam),
            other => Err(Error::Contract(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Queries per update.
    pub batch_size: usize,
    /// The default suits warm-started large encoders; small models from a
    /// random init want about 1e-3.
    pub learning_rate: f64,
    pub samples_per_query: usize,
    pub temperature: f64,
    pub entropy_coeff: f64,
    pub estimator: EstimatorKind,
    pub metric: Metric,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Epochs between intermediate checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    pub val_fraction: f64,
    /// Sampled rankings per validation query for the stochastic metric.
    pub val_samples: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub tied: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 6,
            batch_size: 220,
            learning_rate: 1e-6,
            samples_per_query: 8,
            temperature: 0.05,
            entropy_coeff: 0.01,
            estimator: EstimatorKind::Positionwise,
            metric: Metric::Ndcg(10),
            seed: 0,
            optimizer: OptimizerKind::Adam,
            checkpoint_interval: 0,
            val_fraction: 0.2,
            val_samples: 16,
            hidden: vec![32],
            embed_dim: 16,
            tied: false,
        }
    }
}

/// Config keys with one-line descriptions, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("epochs", "passes over the training queries"),
    ("batch_size", "queries per parameter update"),
    (
        "learning_rate",
        "step size (1e-3 recommended for small models from random init)",
    ),
    ("samples_per_query", "rankings sampled per query per step"),
    (
        "temperature",
        "Plackett-Luce temperature; scores are divided by it",
    ),
    (
        "entropy_coeff",
        "weight of the first-position entropy bonus",
    ),
    ("estimator", "plain | loo | positionwise"),
    ("metric", "training utility, e.g. ndcg@10, dcg@5, mrr, map"),
    (
        "seed",
        "master seed for initialization, splits and sampling",
    ),
    ("optimizer", "sgd | adam"),
    (
        "checkpoint_interval",
        "epochs between intermediate checkpoints (0 = off)",
    ),
    (
        "val_fraction",
        "fraction of queries held out for validation",
    ),
    (
        "val_samples",
        "sampled rankings per query for stochastic validation",
    ),
    (
        "hidden",
        "comma-separated hidden widths, or - for a linear encoder",
    ),
    ("embed_dim", "embedding width of both encoders"),
    ("tied", "share one encoder between queries and documents"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Contract(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "samples_per_query" => self.samples_per_query.to_string(),
            "temperature" => self.temperature.to_string(),
            "entropy_coeff" => self.entropy_coeff.to_string(),
            "estimator" => self.estimator.to_string(),
            "metric" => self.metric.to_string(),
            "seed" => self.seed.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "checkpoint_interval" => self.checkpoint_interval.to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "val_samples" => self.val_samples.to_string(),
            "hidden" => {
                if self.hidden.is_empty() {
                    "-".to_string()
                } else {
                    self.hidden
                        .iter()
                        .map(|h| h.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                }
            }
            "embed_dim" => self.embed_dim.to_string(),
            "tied" => self.tied.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "samples_per_query" => self.samples_per_query = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "entropy_coeff" => self.entropy_coeff = parse(key, value)?,
            "estimator" => self.estimator = value.parse()?,
            "metric" => self.metric = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "checkpoint_interval" => self.checkpoint_interval = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "val_samples" => self.val_samples = parse(key, value)?,
            "hidden" => {
                let v = value.trim();
                self.hidden = if v == "-" || v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|h| parse(key, h)).collect::<Result<_>>()?
                }
            }
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "tied" => self.tied = parse(key, value)?,
            _ => return Err(Error::Contract(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// The config as a `key = value` file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _) in CONFIG_KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).unwrap());
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs > 0, "epochs must be positive");
        ensure!(self.batch_size > 0, "batch_size must be positive");
        ensure!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be non-negative"
        );
        ensure!(
            self.samples_per_query >= self.estimator.min_samples(),
            "{} estimator needs samples_per_query >= {}",
            self.estimator,
            self.estimator.min_samples()
        );
        ensure!(
            self.temperature > 0.0 && self.temperature.is_finite(),
            "temperature must be positive"
        );
        ensure!(
            self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite(),
            "entropy_coeff must be non-negative"
        );
        if self.estimator == EstimatorKind::Positionwise {
            ensure!(
                self.metric.ndcg_cutoff().is_some(),
                "positionwise estimator requires an ndcg metric"
            );
        }
        ensure!(self.val_samples > 0, "val_samples must be positive");
        ensure!(self.embed_dim > 0, "embed_dim must be positive");
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            embed_dim: self.embed_dim,
            tied: self.tied,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Ascent optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, num_params: usize) -> Self {
        Optimizer {
            kind,
            lr,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    /// Moves `params` along `grad`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p += self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Result of one update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub grad: Vec<f64>,
    /// Mean sampled utility over the batch.
    pub mean_utility: f64,
}

/// Batch-averaged ascent direction for `batch`. Only the batch's candidate
/// sets (and their grades) are visible to the step.
pub fn batch_gradient(
    params: &ScorerParams,
    batch: &[&CandidateSet],
    config: &TrainConfig,
    stream: &[u64],
    exec: &Executor,
) -> Result<StepOutcome> {
    ensure!(!batch.is_empty(), "empty batch");
    let per_query = exec.try_map(batch.len(), |i| {
        let mut path = stream.to_vec();
        path.push(i as u64);
        let mut rng = rng::stream(config.seed, &path);
        let est = estimate(
            config.estimator,
            params,
            batch[i],
            config.metric,
            config.samples_per_query,
            config.temperature,
            &mut rng,
        )?;
        let est = if config.entropy_coeff > 0.0 {
            let h = entropy_gradient(params, batch[i], config.temperature)?;
            combine_with_entropy(est, &h, config.entropy_coeff)?
        } else {
            est
        };
        let u = est.sample_utilities.iter().sum::<f64>() / est.sample_utilities.len() as f64;
        Ok::<_, Error>((est.grad, u))
    })?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; params.num_params()];
    let mut mean_utility = 0.0;
    for (g, u) in &per_query {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += scale * b;
        }
        mean_utility += scale * u;
    }
    Ok(StepOutcome { grad, mean_utility })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationReport {
    /// Metric of the deterministic sort policy.
    pub sort_metric: f64,
    /// Monte Carlo estimate of the policy's expected metric.
    pub stochastic_metric: f64,
}

/// Mean over `sets` of the sort-policy metric and of the mean metric over
/// `num_samples` sampled rankings (stream `[i]` of `seed` for query `i`).
pub fn validate(
    params: &ScorerParams,
    sets: &[CandidateSet],
    metric: Metric,
    num_samples: usize,
    tau: f64,
    seed: u64,
    exec: &Executor,
) -> Result<ValidationReport> {
    ensure!(!sets.is_empty(), "no validation queries");
    ensure!(num_samples > 0, "need at least one validation sample");
    let per_query = exec.try_map(sets.len(), |i| {
        let cs = &sets[i];
        let bound = metric.bind(cs.grades()?.grades());
        let scores = params.forward_candidates(&cs.query, &cs.docs)?.scores;
        let sorted = bound.eval(sort_policy(&scores).order());
        let mut rng = rng::stream(seed, &[i as u64]);
        let mut total = 0.0;
        for _ in 0..num_samples {
            total += bound.eval(sample_gumbel(&scores, tau, &mut rng)?.order());
        }
        Ok::<_, Error>((sorted, total / num_samples as f64))
    })?;
    let n = sets.len() as f64;
    Ok(ValidationReport {
        sort_metric: per_query.iter().map(|p| p.0).sum::<f64>() / n,
        stochastic_metric: per_query.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 0 is the warm start, before any update.
    pub epoch: usize,
    pub train_utility: f64,
    pub validation: Option<ValidationReport>,
    pub wall_clock_secs: f64,
}

pub fn log_header() -> &'static str {
    "epoch\ttrain_utility\tval_sort_ndcg@10\tval_stochastic_ndcg@10\twall_clock_s"
}

impl EpochLog {
    pub fn to_tsv_row(&self) -> String {
        let (s, st) = match self.validation {
            Some(v) => (
                format!("{:.6}", v.sort_metric),
                format!("{:.6}", v.stochastic_metric),
            ),
            None => ("-".to_string(), "-".to_string()),
        };
        // the warm-start row has no training utility
        let train = if self.train_utility.is_nan() {
            "-".to_string()
        } else {
            format!("{:.6}", self.train_utility)
        };
        format!(
            "{}\t{}\t{}\t{}\t{:.3}",
            self.epoch, train, s, st, self.wall_clock_secs
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_tsv(&self) -> String {
        let mut s = String::from(log_header());
        s.push('\n');
        for row in &self.log {
            s.push_str(&row.to_tsv_row());
            s.push('\n');
        }
        s
    }
}

/// Seed offset used for validation sampling.
const VALIDATION_STREAM: u64 = 0x7A11_DA7E;

/// Trains from `init` on `train_sets`, validating on `val_sets` (nDCG@10)
/// after every epoch. Intermediate checkpoints go to `checkpoint_dir` when
/// `checkpoint_interval > 0`.
pub fn train(
    init: ScorerParams,
    train_sets: &[CandidateSet],
    val_sets: &[CandidateSet],
    config: &TrainConfig,
    exec: &Executor,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    ensure!(!train_sets.is_empty(), "no training queries");
    for cs in train_sets {
        cs.grades()?;
    }
    let start = Instant::now();
    let val_metric = Metric::Ndcg(10);
    let run_validation = |p: &ScorerParams| -> Result<Option<ValidationReport>> {
        if val_sets.is_empty() {
            return Ok(None);
        }
        validate(
            p,
            val_sets,
            val_metric,
            config.val_samples,
            config.temperature,
            config.seed ^ VALIDATION_STREAM,
            exec,
        )
        .map(Some)
    };

    let mut params = init;
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.num_params());
    let mut log = vec![EpochLog {
        epoch: 0,
        train_utility: f64::NAN,
        validation: run_validation(&params)?,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    }];
    let mut order: Vec<usize> = (0..train_sets.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(config.seed, &[epoch as u64, 0x5_4FF1E]));
        let mut utility_sum = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&CandidateSet> = chunk.iter().map(|&i| &train_sets[i]).collect();
            let out = batch_gradient(&params, &batch, config, &[epoch as u64, step as u64], exec)?;
            opt.ascend(params.values_mut(), &out.grad);
            if !params.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            utility_sum += out.mean_utility * batch.len() as f64;
            steps += batch.len();
        }
        log.push(EpochLog {
            epoch,
            train_utility: utility_sum / steps as f64,
            validation: run_validation(&params)?,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        });
        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_interval > 0 && epoch % config.checkpoint_interval == 0 {
                params.save(&dir.join(format!("checkpoint-epoch{epoch:04}.txt")))?;
            }
        }
    }
    Ok(TrainOutcome { params, log })
}
