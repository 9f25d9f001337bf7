//! Self-checks run by the `verify` command: score-gradient finite
//! differences, policy normalization, sampler frequencies and estimator
//! means against exact enumeration. Every check is seeded and finishes in
//! well under a second.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::CandidateSet;
use crate::estimator::{repeated_estimates, EstimatorKind, EstimatorStats};
use crate::metrics::{Metric, Ranking};
use crate::oracle::{exact_distribution, exact_utility_gradient, permutations};
use crate::parallel::Executor;
use crate::plackett_luce::{
    entropy_grad, first_position_entropy, log_prob, log_prob_grad, sample_gumbel,
    sample_sequential, sort_policy,
};
use crate::rng::{self, PolicyRng};
use crate::scoring::{Architecture, ScorerParams};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the check statistic.
    pub measured: f64,
    pub threshold: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\tmeasured={:.3e}\tthreshold={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    /// Per-coordinate estimator statistics of the first estimator instance.
    pub diagnostics: Vec<EstimatorStats>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{c}");
        }
        let n = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{n}/{} checks passed", self.checks.len());
        s
    }

    pub fn diagnostics_tsv(&self) -> String {
        self.diagnostics
            .iter()
            .map(|d| d.to_tsv())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn normal_vec(rng: &mut PolicyRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A random scorer and candidate set with `n` documents.
pub fn random_instance(
    arch: &Architecture,
    n: usize,
    seed: u64,
) -> Result<(ScorerParams, CandidateSet)> {
    let params = ScorerParams::init(arch.clone(), seed)?;
    let mut rng = rng::stream(seed, &[0x1257]);
    let query = normal_vec(&mut rng, arch.input_dim);
    let docs = (0..n)
        .map(|_| normal_vec(&mut rng, arch.input_dim))
        .collect();
    let mut grades: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
    if grades.iter().all(|&g| g == 0) {
        grades[rng.random_range(0..n)] = 1;
    }
    Ok((
        params,
        CandidateSet::from_features(query, docs, Some(grades))?,
    ))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn scores_of(params: &ScorerParams, cs: &CandidateSet) -> Result<Vec<f64>> {
    cs.docs.iter().map(|d| params.score(&cs.query, d)).collect()
}

/// Parameter gradient of `log π(ranking)` chained through per-document
/// score gradients, and its central finite-difference approximation.
pub fn log_prob_gradient_pair(
    params: &ScorerParams,
    cs: &CandidateSet,
    ranking: &Ranking,
    tau: f64,
    step: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut scores = Vec::with_capacity(cs.len());
    let mut score_grads = Vec::with_capacity(cs.len());
    for d in &cs.docs {
        let sg = params.score_with_gradient(&cs.query, d)?;
        scores.push(sg.score);
        score_grads.push(sg.grad);
    }
    let dlp = log_prob_grad(&scores, ranking, tau)?;
    let mut analytic = vec![0.0; params.num_params()];
    for (c, g) in dlp.iter().zip(&score_grads) {
        for (a, b) in analytic.iter_mut().zip(g) {
            *a += c * b;
        }
    }
    let mut p = params.clone();
    let numeric = (0..params.num_params())
        .map(|i| {
            let x = params.values()[i];
            p.values_mut()[i] = x + step;
            let up = log_prob(&scores_of(&p, cs)?, ranking, tau)?;
            p.values_mut()[i] = x - step;
            let down = log_prob(&scores_of(&p, cs)?, ranking, tau)?;
            p.values_mut()[i] = x;
            Ok((up - down) / (2.0 * step))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((analytic, numeric))
}

fn check_gradients(seed: u64) -> Result<CheckResult> {
    let archs = [
        Architecture::linear(3, 2),
        Architecture {
            input_dim: 3,
            hidden: vec![4],
            embed_dim: 2,
            tied: false,
        },
        Architecture {
            input_dim: 2,
            hidden: vec![3, 3],
            embed_dim: 2,
            tied: true,
        },
    ];
    let mut worst: f64 = 0.0;
    for (i, arch) in archs.iter().enumerate() {
        for rep in 0..3u64 {
            let s = seed.wrapping_add(100 * i as u64 + rep);
            let (params, cs) = random_instance(arch, 5, s)?;
            let mut rng = rng::stream(s, &[7]);
            let ranking = sample_gumbel(&vec![0.0; cs.len()], 1.0, &mut rng)?;
            let (a, n) = log_prob_gradient_pair(&params, &cs, &ranking, 0.7, 1e-5)?;
            worst = worst.max(relative_error(&a, &n));
        }
    }
    Ok(CheckResult {
        name: "log_prob_gradient_finite_difference",
        passed: worst < 1e-6,
        measured: worst,
        threshold: 1e-6,
    })
}

fn check_entropy_gradient(seed: u64) -> Result<CheckResult> {
    let mut rng = rng::stream(seed, &[0xE7]);
    let mut worst: f64 = 0.0;
    for n in 2..7 {
        let s = normal_vec(&mut rng, n);
        let tau = 0.5;
        let g = entropy_grad(&s, tau)?;
        let h = 1e-5;
        let mut fd = vec![0.0; n];
        for i in 0..n {
            let mut up = s.clone();
            up[i] += h;
            let mut down = s.clone();
            down[i] -= h;
            fd[i] = (first_position_entropy(&up, tau)? - first_position_entropy(&down, tau)?)
                / (2.0 * h);
        }
        worst = worst.max(relative_error(&g, &fd));
    }
    Ok(CheckResult {
        name: "entropy_gradient_finite_difference",
        passed: worst < 1e-6,
        measured: worst,
        threshold: 1e-6,
    })
}

fn check_normalization(seed: u64) -> Result<CheckResult> {
    let mut rng = rng::stream(seed, &[0xA0]);
    let mut worst: f64 = 0.0;
    let mut mode_ok = true;
    for n in 1..=6 {
        for _ in 0..4 {
            let scores = normal_vec(&mut rng, n);
            let tau = [0.1, 1.0, 3.0][rng.random_range(0..3)];
            let dist = exact_distribution(&scores, tau)?;
            let total: f64 = dist.iter().map(|(_, p)| p).sum();
            worst = worst.max((total - 1.0).abs());
            let (mode, _) = dist.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            mode_ok &= *mode == sort_policy(&scores);
            for (r, p) in &dist {
                worst = worst.max((log_prob(&scores, r, tau)?.exp() - p).abs());
            }
        }
    }
    Ok(CheckResult {
        name: "policy_normalization_and_mode",
        passed: worst < 1e-12 && mode_ok,
        measured: worst,
        threshold: 1e-12,
    })
}

/// Largest standardized deviation of sampled permutation frequencies from
/// the exact probabilities.
fn sampler_deviation<F>(scores: &[f64], tau: f64, draws: usize, mut sample: F) -> Result<f64>
where
    F: FnMut() -> Result<Ranking>,
{
    let perms = permutations(scores.len());
    let exact = exact_distribution(scores, tau)?;
    let mut counts = vec![0usize; perms.len()];
    for _ in 0..draws {
        let r = sample()?;
        let idx = perms
            .binary_search_by(|p| p.as_slice().cmp(r.order()))
            .unwrap();
        counts[idx] += 1;
    }
    let n = draws as f64;
    Ok(exact
        .iter()
        .zip(&counts)
        .map(|((_, p), &c)| {
            let sd = (p * (1.0 - p) / n).sqrt();
            (c as f64 / n - p).abs() / sd
        })
        .fold(0.0, f64::max))
}

fn check_samplers(seed: u64) -> Result<CheckResult> {
    let scores = [0.6, 0.0, -0.4, 0.25];
    let tau = 0.8;
    let draws = 24_000;
    let mut g = rng::stream(seed, &[0x6B]);
    let mut s = rng::stream(seed, &[0x5E]);
    let mut e = rng::stream(seed, &[0xEE]);
    let worst = sampler_deviation(&scores, tau, draws, || sample_gumbel(&scores, tau, &mut g))?
        .max(sampler_deviation(&scores, tau, draws, || {
            sample_sequential(&scores, tau, &mut s)
        })?)
        .max(sampler_deviation(&[0.0; 4], 1.0, draws, || {
            sample_gumbel(&[0.0; 4], 1.0, &mut e)
        })?);
    Ok(CheckResult {
        name: "sampler_frequencies",
        passed: worst < 5.0,
        measured: worst,
        threshold: 5.0,
    })
}

fn check_estimators(
    seed: u64,
    exec: &Executor,
    diagnostics: &mut Vec<EstimatorStats>,
) -> Result<CheckResult> {
    let arch = Architecture::linear(2, 2);
    let metric = Metric::Ndcg(10);
    let tau = 1.0;
    let mut worst: f64 = 0.0;
    for (i, n) in [3usize, 4, 5].into_iter().enumerate() {
        let (params, cs) = random_instance(&arch, n, seed.wrapping_add(1000 + i as u64))?;
        let exact = exact_utility_gradient(&params, &cs, tau, metric)?;
        for kind in EstimatorKind::ALL {
            let stats = repeated_estimates(
                kind,
                &params,
                &cs,
                metric,
                8,
                tau,
                600,
                seed ^ (i as u64),
                exec,
            )?;
            for ((m, se), x) in stats.mean.iter().zip(stats.std_errors()).zip(&exact) {
                let z = (m - x).abs() / (se + 1e-12);
                worst = worst.max(z);
            }
            if i == 0 {
                diagnostics.push(stats);
            }
        }
    }
    Ok(CheckResult {
        name: "estimators_unbiased_vs_enumeration",
        passed: worst < 5.0,
        measured: worst,
        threshold: 5.0,
    })
}

/// Runs every check.
pub fn run_checks(seed: u64, exec: &Executor) -> Result<VerifyReport> {
    let mut diagnostics = Vec::new();
    let checks = vec![
        check_gradients(seed)?,
        check_entropy_gradient(seed)?,
        check_normalization(seed)?,
        check_samplers(seed)?,
        check_estimators(seed, exec, &mut diagnostics)?,
    ];
    Ok(VerifyReport {
        checks,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_for_several_seeds() {
        for seed in [0, 1, 42] {
            let report = run_checks(seed, &Executor::threads(2)).unwrap();
            assert!(report.passed(), "seed {seed}:\n{}", report.to_text());
            assert_eq!(report.diagnostics.len(), 3);
        }
    }

    #[test]
    fn report_formats() {
        let report = VerifyReport {
            checks: vec![CheckResult {
                name: "x",
                passed: false,
                measured: 2.0,
                threshold: 1.0,
            }],
            diagnostics: vec![],
        };
        assert!(!report.passed());
        assert_eq!(
            report.to_text(),
            "FAIL\tx\tmeasured=2.000e0\tthreshold=1.000e0\n0/1 checks passed\n"
        );
    }

    #[test]
    fn relative_error_handles_zero_vectors() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
    }
}
