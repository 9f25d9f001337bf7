//! Exact reference values by enumerating all `n!` rankings.
//!
//! Probabilities and score gradients are computed directly from the
//! sequential-softmax definition, without the log-sum-exp recurrences used
//! in [`crate::plackett_luce`], so the two can check each other.

use crate::data::CandidateSet;
use crate::metrics::{Metric, Ranking};
use crate::scoring::ScorerParams;
use crate::{ensure, Result};

pub const MAX_ORACLE_DOCS: usize = 8;

fn check_size(n: usize) -> Result<()> {
    ensure!(
        n <= MAX_ORACLE_DOCS,
        "exact enumeration supports at most {MAX_ORACLE_DOCS} documents, got {n}"
    );
    Ok(())
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Softmax over `remaining` of `z`, returned aligned with `remaining`.
fn softmax_over(z: &[f64], remaining: &[usize]) -> Vec<f64> {
    let m = remaining
        .iter()
        .map(|&d| z[d])
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = remaining.iter().map(|&d| (z[d] - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn probability(z: &[f64], order: &[usize]) -> f64 {
    let mut p = 1.0;
    for i in 0..order.len() {
        let probs = softmax_over(z, &order[i..]);
        p *= probs[0];
    }
    p
}

/// `∂ log π(order) / ∂ s` straight from the definition.
fn log_prob_score_grad(z: &[f64], order: &[usize], tau: f64) -> Vec<f64> {
    let mut g = vec![0.0; z.len()];
    for i in 0..order.len() {
        let remaining = &order[i..];
        let probs = softmax_over(z, remaining);
        for (&d, p) in remaining.iter().zip(&probs) {
            g[d] -= p / tau;
        }
        g[order[i]] += 1.0 / tau;
    }
    g
}

/// Every ranking with its exact Plackett-Luce probability.
pub fn exact_distribution(scores: &[f64], tau: f64) -> Result<Vec<(Ranking, f64)>> {
    check_size(scores.len())?;
    ensure!(tau > 0.0 && tau.is_finite(), "temperature must be positive");
    let z: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    Ok(permutations(scores.len())
        .into_iter()
        .map(|order| {
            let p = probability(&z, &order);
            (Ranking::from_permutation(order), p)
        })
        .collect())
}

/// `Σ_r π(r) Δ(r)`.
pub fn exact_expected_utility(
    scores: &[f64],
    tau: f64,
    grades: &[u32],
    metric: Metric,
) -> Result<f64> {
    ensure!(
        scores.len() == grades.len(),
        "scores and grades differ in length"
    );
    let bound = metric.bind(grades);
    Ok(exact_distribution(scores, tau)?
        .iter()
        .map(|(r, p)| p * bound.eval(r.order()))
        .sum())
}

/// `∂U/∂s = Σ_r π(r) Δ(r) ∇_s log π(r)`.
pub fn exact_score_gradient(
    scores: &[f64],
    tau: f64,
    grades: &[u32],
    metric: Metric,
) -> Result<Vec<f64>> {
    ensure!(
        scores.len() == grades.len(),
        "scores and grades differ in length"
    );
    let bound = metric.bind(grades);
    let z: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let mut g = vec![0.0; scores.len()];
    for (r, p) in exact_distribution(scores, tau)? {
        let u = bound.eval(r.order());
        if u == 0.0 || p == 0.0 {
            continue;
        }
        for (gi, v) in g.iter_mut().zip(log_prob_score_grad(&z, r.order(), tau)) {
            *gi += p * u * v;
        }
    }
    Ok(g)
}

/// Exact expected utility of the policy induced by `params` on `cs`.
pub fn exact_policy_utility(
    params: &ScorerParams,
    cs: &CandidateSet,
    tau: f64,
    metric: Metric,
) -> Result<f64> {
    let scores = params.forward_candidates(&cs.query, &cs.docs)?.scores;
    exact_expected_utility(&scores, tau, cs.grades()?.grades(), metric)
}

/// Exact `∇θ U(π_θ | q)`.
pub fn exact_utility_gradient(
    params: &ScorerParams,
    cs: &CandidateSet,
    tau: f64,
    metric: Metric,
) -> Result<Vec<f64>> {
    check_size(cs.len())?;
    let fwd = params.forward_candidates(&cs.query, &cs.docs)?;
    let g = exact_score_gradient(&fwd.scores, tau, cs.grades()?.grades(), metric)?;
    fwd.backward(params, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::NO_CUTOFF;
    use approx::assert_abs_diff_eq;

    #[test]
    fn permutation_counts() {
        for (n, f) in [(0, 1), (1, 1), (3, 6), (5, 120)] {
            assert_eq!(permutations(n).len(), f);
        }
        assert_eq!(permutations(3)[1], vec![0, 2, 1]);
    }

    #[test]
    fn distribution_examples() {
        let d = exact_distribution(&[0.0, 0.0], 1.0).unwrap();
        assert!(d.iter().all(|(_, p)| (p - 0.5).abs() < 1e-15));
        let d = exact_distribution(&[1.0, 1.0, 1.0], 0.3).unwrap();
        assert!(d.iter().all(|(_, p)| (p - 1.0 / 6.0).abs() < 1e-15));
        let d = exact_distribution(&[2f64.ln(), 0.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(d[0].1, 0.25, epsilon = 1e-15);
        assert!(exact_distribution(&[0.0; 9], 1.0).is_err());
    }

    #[test]
    fn expected_utility_examples() {
        assert_eq!(
            exact_expected_utility(&[0.3, 0.1], 1.0, &[0, 0], Metric::Ndcg(10)).unwrap(),
            0.0
        );
        assert_eq!(
            exact_expected_utility(&[0.3], 1.0, &[1], Metric::Ndcg(10)).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            exact_expected_utility(&[0.0, 0.0], 1.0, &[1, 0], Metric::Ndcg(NO_CUTOFF)).unwrap(),
            0.815465,
            epsilon = 1e-6
        );
    }

    #[test]
    fn two_doc_score_gradient_closed_form() {
        // U = σ(s0 − s1)(1 − c) + c with c = 1/log2 3, so dU/ds0 = σ'(0)(1 − c)
        let g = exact_score_gradient(&[0.0, 0.0], 1.0, &[1, 0], Metric::Ndcg(NO_CUTOFF)).unwrap();
        let expect = 0.25 * (1.0 - 1.0 / 3f64.log2());
        assert_abs_diff_eq!(g[0], expect, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -expect, epsilon = 1e-15);
    }

    #[test]
    fn constant_utility_has_zero_gradient() {
        let g = exact_score_gradient(&[0.2, -0.7, 1.0], 0.5, &[0, 0, 0], Metric::Ndcg(10)).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }
}
