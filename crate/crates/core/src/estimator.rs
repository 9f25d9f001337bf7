//! Monte Carlo policy-gradient estimators.
//!
//! Every estimator here is linear in the per-document score gradients, so
//! it is first computed in score space (one coefficient per candidate) and
//! then pushed through the scorer with a single backward pass.
//!
//! Gradients point in the ascent direction of expected utility.

use std::fmt;
use std::str::FromStr;

use crate::data::CandidateSet;
use crate::metrics::{suffix_ndcg_profile, Metric, Ranking};
use crate::parallel::Executor;
use crate::plackett_luce::{self, log_prob_grad, sample_gumbel, weighted_log_prob_grad};
use crate::rng::{self, PolicyRng};
use crate::scoring::ScorerParams;
use crate::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// REINFORCE without a baseline.
    Plain,
    /// REINFORCE with the leave-one-out baseline.
    LeaveOneOut,
    /// Per-position credit with suffix nDCG and a leave-one-out baseline.
    Positionwise,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::Plain,
        EstimatorKind::LeaveOneOut,
        EstimatorKind::Positionwise,
    ];

    pub fn min_samples(&self) -> usize {
        match self {
            EstimatorKind::Plain => 1,
            _ => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Plain => "plain",
            EstimatorKind::LeaveOneOut => "loo",
            EstimatorKind::Positionwise => "positionwise",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" | "reinforce" => Ok(EstimatorKind::Plain),
            "loo" | "leave-one-out" => Ok(EstimatorKind::LeaveOneOut),
            "positionwise" | "position-wise" => Ok(EstimatorKind::Positionwise),
            other => Err(Error::Contract(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Parameter-space gradient estimate for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub kind: EstimatorKind,
    pub grad: Vec<f64>,
    /// Utility of each sampled ranking.
    pub sample_utilities: Vec<f64>,
}

/// Score-space estimate: `coeffs[d]` multiplies `∇θ s_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreEstimate {
    pub coeffs: Vec<f64>,
    pub sample_utilities: Vec<f64>,
    pub samples: Vec<Ranking>,
}

/// `w_i = mean_{j≠i}(u_i − u_j)`; exactly zero when all utilities tie.
fn leave_one_out_weights(utilities: &[f64]) -> Vec<f64> {
    let n = utilities.len();
    let denom = (n - 1) as f64;
    utilities
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            utilities
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &uj)| ui - uj)
                .sum::<f64>()
                / denom
        })
        .collect()
}

fn add_scaled(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += scale * b;
    }
}

/// Score-space estimator over explicit scores and grades.
///
/// `metric` is the utility for plain and leave-one-out; positionwise needs
/// an nDCG-family metric and uses its cutoff for the suffix utilities.
pub fn estimate_scores(
    kind: EstimatorKind,
    scores: &[f64],
    grades: &[u32],
    metric: Metric,
    num_samples: usize,
    tau: f64,
    rng: &mut PolicyRng,
) -> Result<ScoreEstimate> {
    ensure!(
        scores.len() == grades.len(),
        "{} scores for {} grades",
        scores.len(),
        grades.len()
    );
    ensure!(
        num_samples >= kind.min_samples(),
        "{kind} estimator needs at least {} samples, got {num_samples}",
        kind.min_samples()
    );
    let cutoff = if kind == EstimatorKind::Positionwise {
        Some(metric.ndcg_cutoff().ok_or_else(|| {
            Error::Contract(format!(
                "positionwise estimator needs an nDCG metric, got {metric}"
            ))
        })?)
    } else {
        None
    };
    let samples = (0..num_samples)
        .map(|_| sample_gumbel(scores, tau, rng))
        .collect::<Result<Vec<_>>>()?;
    let bound = metric.bind(grades);
    let sample_utilities: Vec<f64> = samples.iter().map(|r| bound.eval(r.order())).collect();
    let n_inv = 1.0 / num_samples as f64;
    let mut coeffs = vec![0.0; scores.len()];

    match kind {
        EstimatorKind::Plain => {
            for (r, &u) in samples.iter().zip(&sample_utilities) {
                if u != 0.0 {
                    add_scaled(&mut coeffs, &log_prob_grad(scores, r, tau)?, u * n_inv);
                }
            }
        }
        EstimatorKind::LeaveOneOut => {
            let w = leave_one_out_weights(&sample_utilities);
            for (r, &wi) in samples.iter().zip(&w) {
                if wi != 0.0 {
                    add_scaled(&mut coeffs, &log_prob_grad(scores, r, tau)?, wi * n_inv);
                }
            }
        }
        EstimatorKind::Positionwise => {
            let cutoff = cutoff.unwrap();
            let profiles: Vec<Vec<f64>> = samples
                .iter()
                .map(|r| suffix_ndcg_profile(r.order(), grades, cutoff))
                .collect();
            let n = scores.len();
            let mut column = vec![0.0; num_samples];
            let mut weights = vec![vec![0.0; n]; num_samples];
            for k in 0..n {
                for (c, p) in column.iter_mut().zip(&profiles) {
                    *c = p[k];
                }
                for (i, w) in leave_one_out_weights(&column).into_iter().enumerate() {
                    weights[i][k] = w;
                }
            }
            for (r, w) in samples.iter().zip(&weights) {
                if w.iter().any(|&v| v != 0.0) {
                    add_scaled(
                        &mut coeffs,
                        &weighted_log_prob_grad(scores, r, tau, w)?,
                        n_inv,
                    );
                }
            }
        }
    }
    Ok(ScoreEstimate {
        coeffs,
        sample_utilities,
        samples,
    })
}

/// Parameter-space estimate for one candidate set.
pub fn estimate(
    kind: EstimatorKind,
    params: &ScorerParams,
    cs: &CandidateSet,
    metric: Metric,
    num_samples: usize,
    tau: f64,
    rng: &mut PolicyRng,
) -> Result<GradientEstimate> {
    let grades = cs.grades()?;
    let fwd = params.forward_candidates(&cs.query, &cs.docs)?;
    let est = estimate_scores(
        kind,
        &fwd.scores,
        grades.grades(),
        metric,
        num_samples,
        tau,
        rng,
    )?;
    Ok(GradientEstimate {
        kind,
        grad: fwd.backward(params, &est.coeffs)?,
        sample_utilities: est.sample_utilities,
    })
}

pub fn reinforce_plain(
    params: &ScorerParams,
    cs: &CandidateSet,
    metric: Metric,
    num_samples: usize,
    tau: f64,
    rng: &mut PolicyRng,
) -> Result<GradientEstimate> {
    estimate(
        EstimatorKind::Plain,
        params,
        cs,
        metric,
        num_samples,
        tau,
        rng,
    )
}

pub fn reinforce_loo(
    params: &ScorerParams,
    cs: &CandidateSet,
    metric: Metric,
    num_samples: usize,
    tau: f64,
    rng: &mut PolicyRng,
) -> Result<GradientEstimate> {
    estimate(
        EstimatorKind::LeaveOneOut,
        params,
        cs,
        metric,
        num_samples,
        tau,
        rng,
    )
}

/// Position-wise estimator for nDCG truncated at `cutoff`
/// (use [`crate::metrics::NO_CUTOFF`] for the full list).
pub fn reinforce_positionwise(
    params: &ScorerParams,
    cs: &CandidateSet,
    cutoff: usize,
    num_samples: usize,
    tau: f64,
    rng: &mut PolicyRng,
) -> Result<GradientEstimate> {
    estimate(
        EstimatorKind::Positionwise,
        params,
        cs,
        Metric::Ndcg(cutoff),
        num_samples,
        tau,
        rng,
    )
}

/// Parameter-space gradient of the first-position entropy bonus.
pub fn entropy_gradient(params: &ScorerParams, cs: &CandidateSet, tau: f64) -> Result<Vec<f64>> {
    let fwd = params.forward_candidates(&cs.query, &cs.docs)?;
    let g = plackett_luce::entropy_grad(&fwd.scores, tau)?;
    fwd.backward(params, &g)
}

/// `est.grad + coeff · entropy_grad`.
pub fn combine_with_entropy(
    mut est: GradientEstimate,
    entropy_grad: &[f64],
    coeff: f64,
) -> Result<GradientEstimate> {
    ensure!(
        entropy_grad.len() == est.grad.len(),
        "entropy gradient has {} entries, estimate has {}",
        entropy_grad.len(),
        est.grad.len()
    );
    if coeff != 0.0 {
        add_scaled(&mut est.grad, entropy_grad, coeff);
    }
    Ok(est)
}

/// Per-coordinate mean and variance over repeated independent estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorStats {
    pub kind: EstimatorKind,
    pub repetitions: usize,
    pub mean: Vec<f64>,
    /// Unbiased sample variance of a single estimate.
    pub variance: Vec<f64>,
}

impl EstimatorStats {
    pub fn from_samples(kind: EstimatorKind, samples: &[Vec<f64>]) -> Result<Self> {
        ensure!(samples.len() >= 2, "need at least two repetitions");
        let dim = samples[0].len();
        let r = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            add_scaled(&mut mean, s, 1.0 / r);
        }
        let mut variance = vec![0.0; dim];
        for s in samples {
            for ((v, x), m) in variance.iter_mut().zip(s).zip(&mean) {
                *v += (x - m) * (x - m) / (r - 1.0);
            }
        }
        Ok(EstimatorStats {
            kind,
            repetitions: samples.len(),
            mean,
            variance,
        })
    }

    /// Standard error of the mean, per coordinate.
    pub fn std_errors(&self) -> Vec<f64> {
        let r = self.repetitions as f64;
        self.variance.iter().map(|v| (v / r).sqrt()).collect()
    }

    pub fn total_variance(&self) -> f64 {
        self.variance.iter().sum()
    }

    /// Tab-separated `coordinate  mean  variance  std_error` rows with a header.
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "# estimator={} repetitions={}\ncoord\tmean\tvariance\tstd_error\n",
            self.kind, self.repetitions
        );
        for (i, ((m, v), se)) in self
            .mean
            .iter()
            .zip(&self.variance)
            .zip(self.std_errors())
            .enumerate()
        {
            s.push_str(&format!("{i}\t{m:.9e}\t{v:.9e}\t{se:.9e}\n"));
        }
        s
    }
}

/// Runs `repetitions` independent estimates (stream `[rep]` of `seed` each).
#[allow(clippy::too_many_arguments)]
pub fn repeated_estimates(
    kind: EstimatorKind,
    params: &ScorerParams,
    cs: &CandidateSet,
    metric: Metric,
    num_samples: usize,
    tau: f64,
    repetitions: usize,
    seed: u64,
    exec: &Executor,
) -> Result<EstimatorStats> {
    let grades = cs.grades()?;
    let fwd = params.forward_candidates(&cs.query, &cs.docs)?;
    let coeffs = exec.try_map(repetitions, |rep| {
        let mut rng = rng::stream(seed, &[rep as u64]);
        estimate_scores(
            kind,
            &fwd.scores,
            grades.grades(),
            metric,
            num_samples,
            tau,
            &mut rng,
        )
        .map(|e| e.coeffs)
    })?;
    let grads = exec.try_map(repetitions, |rep| fwd.backward(params, &coeffs[rep]))?;
    EstimatorStats::from_samples(kind, &grads)
}
