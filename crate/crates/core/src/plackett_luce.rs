//! Plackett-Luce ranking distribution.
//!
//! For scores `s` and temperature `τ`, let `z = s / τ`. A ranking `r` has
//! probability `Π_i softmax(z over r(i..n))[r(i)]`: documents are drawn one
//! position at a time, without replacement, from a softmax over those that
//! remain. Smaller `τ` sharpens the distribution toward the sorted order.

use std::cmp::Ordering;

use rand::Rng;

use crate::metrics::Ranking;
use crate::{ensure, Result};

/// Uniform draws are clamped to `[GUMBEL_EPS, 1 - GUMBEL_EPS]`.
pub const GUMBEL_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyConfig {
    pub temperature: f64,
    pub entropy_coeff: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            temperature: 0.05,
            entropy_coeff: 0.01,
        }
    }
}

impl PolicyConfig {
    pub fn new(temperature: f64, entropy_coeff: f64) -> Result<Self> {
        let c = PolicyConfig {
            temperature,
            entropy_coeff,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.temperature)?;
        ensure!(
            self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite(),
            "entropy coefficient must be non-negative, got {}",
            self.entropy_coeff
        );
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    ensure!(
        tau > 0.0 && tau.is_finite(),
        "temperature must be positive, got {tau}"
    );
    Ok(())
}

fn check_pair(scores: &[f64], ranking: &Ranking, tau: f64) -> Result<()> {
    check_tau(tau)?;
    ensure!(
        scores.len() == ranking.len(),
        "{} scores for a ranking of {} documents",
        scores.len(),
        ranking.len()
    );
    Ok(())
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `out[i] = logsumexp(z[order[i..]])`.
fn suffix_log_sums(z: &[f64], order: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; order.len()];
    let mut acc = f64::NEG_INFINITY;
    for i in (0..order.len()).rev() {
        acc = log_add_exp(acc, z[order[i]]);
        out[i] = acc;
    }
    out
}

fn scaled(scores: &[f64], tau: f64) -> Vec<f64> {
    scores.iter().map(|s| s / tau).collect()
}

pub fn log_prob(scores: &[f64], ranking: &Ranking, tau: f64) -> Result<f64> {
    check_pair(scores, ranking, tau)?;
    let z = scaled(scores, tau);
    let order = ranking.order();
    let lse = suffix_log_sums(&z, order);
    Ok(order.iter().zip(&lse).map(|(&d, l)| z[d] - l).sum())
}

/// Gradient of `log π(r)` with respect to the scores.
pub fn log_prob_grad(scores: &[f64], ranking: &Ranking, tau: f64) -> Result<Vec<f64>> {
    let ones = vec![1.0; ranking.len()];
    weighted_log_prob_grad(scores, ranking, tau, &ones)
}

/// Gradient of `Σ_i w_i · log(factor_i)` where `factor_i` is the `i`-th
/// softmax factor of `π(r)`; all-ones weights give [`log_prob_grad`].
///
/// Runs in O(n) with every exponential argument non-positive.
pub fn weighted_log_prob_grad(
    scores: &[f64],
    ranking: &Ranking,
    tau: f64,
    weights: &[f64],
) -> Result<Vec<f64>> {
    check_pair(scores, ranking, tau)?;
    ensure!(
        weights.len() == ranking.len(),
        "{} position weights for {} positions",
        weights.len(),
        ranking.len()
    );
    let z = scaled(scores, tau);
    let order = ranking.order();
    let lse = suffix_log_sums(&z, order);
    let mut grad = vec![0.0; order.len()];
    // acc_p = Σ_{i ≤ p} w_i · exp(lse_p − lse_i)
    let mut acc = 0.0;
    for p in 0..order.len() {
        if p > 0 {
            acc *= (lse[p] - lse[p - 1]).exp();
        }
        acc += weights[p];
        let d = order[p];
        grad[d] = (weights[p] - (z[d] - lse[p]).exp() * acc) / tau;
    }
    Ok(grad)
}

fn descending_keys(keys: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| match keys[b].total_cmp(&keys[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    Ranking::from_permutation(order)
}

/// Deterministic sort policy: descending score, ties by ascending index.
pub fn sort_policy(scores: &[f64]) -> Ranking {
    descending_keys(scores)
}

/// One Gumbel(0, 1) draw.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
    -(-u.ln()).ln()
}

/// Exact Plackett-Luce sample in O(n log n): perturb `z` with i.i.d. Gumbel
/// noise and sort descending.
pub fn sample_gumbel<R: Rng + ?Sized>(scores: &[f64], tau: f64, rng: &mut R) -> Result<Ranking> {
    check_tau(tau)?;
    let keys: Vec<f64> = scores.iter().map(|s| s / tau + gumbel(rng)).collect();
    Ok(descending_keys(&keys))
}

/// Reference O(n²) sampler drawing positions one at a time.
pub fn sample_sequential<R: Rng + ?Sized>(
    scores: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<Ranking> {
    check_tau(tau)?;
    let z = scaled(scores, tau);
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut order = Vec::with_capacity(scores.len());
    let mut weights = Vec::with_capacity(scores.len());
    while !remaining.is_empty() {
        let m = remaining
            .iter()
            .map(|&d| z[d])
            .fold(f64::NEG_INFINITY, f64::max);
        weights.clear();
        weights.extend(remaining.iter().map(|&d| (z[d] - m).exp()));
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        order.push(remaining.remove(pick));
    }
    Ok(Ranking::from_permutation(order))
}

/// First-position choice distribution `softmax(s / τ)`.
pub fn first_position_probs(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let z = scaled(scores, tau);
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

/// Entropy of the first-position choice distribution.
pub fn first_position_entropy(scores: &[f64], tau: f64) -> Result<f64> {
    Ok(first_position_probs(scores, tau)?
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum())
}

/// Gradient of [`first_position_entropy`] with respect to the scores:
/// `∂H/∂s_j = −p_j (ln p_j + H) / τ`.
///
/// Uses `ln p_j + H = (z_j − m) − Σ_i p_i (z_i − m)` with `m = max z`, which
/// is exactly zero for tied scores.
pub fn entropy_grad(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    let p = first_position_probs(scores, tau)?;
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / tau;
    let centered: Vec<f64> = scores.iter().map(|s| s / tau - m).collect();
    let mean: f64 = p.iter().zip(&centered).map(|(pi, c)| pi * c).sum();
    Ok(p.iter()
        .zip(&centered)
        .map(|(&pj, &c)| {
            if pj > 0.0 {
                -pj * (c - mean) / tau
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn r(v: &[usize]) -> Ranking {
        Ranking::new(v.to_vec()).unwrap()
    }

    #[test]
    fn log_prob_examples() {
        assert_eq!(log_prob(&[3.0], &r(&[0]), 0.5).unwrap(), 0.0);
        for perm in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
            assert_abs_diff_eq!(
                log_prob(&[0.4, 0.4, 0.4], &r(&perm), 1.0).unwrap(),
                (1.0f64 / 6.0).ln(),
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(
            log_prob(&[2f64.ln(), 0.0, 0.0], &r(&[0, 1, 2]), 1.0).unwrap(),
            0.25f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn contract_violations() {
        assert!(log_prob(&[1.0, 2.0], &r(&[0, 1]), 0.0).is_err());
        assert!(log_prob(&[1.0, 2.0], &r(&[0, 1]), -1.0).is_err());
        assert!(log_prob(&[1.0], &r(&[0, 1]), 1.0).is_err());
        assert!(log_prob_grad(&[1.0, 2.0, 3.0], &r(&[0, 1]), 1.0).is_err());
        assert!(PolicyConfig::new(0.0, 0.01).is_err());
        assert!(PolicyConfig::new(1.0, -0.1).is_err());
        let mut g = rng::seeded(0);
        assert!(sample_gumbel(&[1.0], f64::NAN, &mut g).is_err());
    }

    #[test]
    fn grad_examples() {
        assert_eq!(log_prob_grad(&[1.5], &r(&[0]), 0.3).unwrap(), vec![0.0]);
        let g = log_prob_grad(&[0.0, 0.0], &r(&[0, 1]), 1.0).unwrap();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn grad_at_low_temperature_is_finite() {
        let scores = [30.0, -25.0, 4.0, 0.0];
        let g = log_prob_grad(&scores, &r(&[1, 0, 3, 2]), 0.05).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(g.iter().sum::<f64>(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn weighted_grad_is_sum_of_single_factor_grads() {
        let scores = [0.3, -1.2, 0.8, 0.1];
        let rk = r(&[2, 0, 3, 1]);
        let w = [0.5, -2.0, 1.5, 0.7];
        let all = weighted_log_prob_grad(&scores, &rk, 0.7, &w).unwrap();
        let mut sum = vec![0.0; 4];
        for k in 0..4 {
            let mut e = vec![0.0; 4];
            e[k] = w[k];
            for (s, v) in sum
                .iter_mut()
                .zip(weighted_log_prob_grad(&scores, &rk, 0.7, &e).unwrap())
            {
                *s += v;
            }
        }
        for (a, b) in all.iter().zip(&sum) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sort_policy_examples() {
        assert_eq!(sort_policy(&[0.1, 0.9, 0.5]).order(), &[1, 2, 0]);
        assert_eq!(sort_policy(&[2.0, 2.0, 2.0, 2.0]).order(), &[0, 1, 2, 3]);
        assert_eq!(sort_policy(&[1.0, 3.0, 3.0, 0.0]).order(), &[1, 2, 0, 3]);
    }

    #[test]
    fn single_document_samplers() {
        let mut g = rng::seeded(4);
        assert_eq!(sample_gumbel(&[0.2], 0.05, &mut g).unwrap().order(), &[0]);
        assert_eq!(
            sample_sequential(&[0.2], 0.05, &mut g).unwrap().order(),
            &[0]
        );
    }

    #[test]
    fn gumbel_is_shift_invariant_under_shared_seed() {
        let scores = [0.3, -0.2, 1.1, 0.0, 0.5];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 7.0).collect();
        for seed in 0..20 {
            let a = sample_gumbel(&scores, 1.0, &mut rng::seeded(seed)).unwrap();
            let b = sample_gumbel(&shifted, 1.0, &mut rng::seeded(seed)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn entropy_grad_examples() {
        assert!(entropy_grad(&[0.7, 0.7, 0.7], 0.05)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-15));
        let s = [1.0, 0.0];
        let g = entropy_grad(&s, 1.0).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut up = s;
            let mut dn = s;
            up[j] += h;
            dn[j] -= h;
            let fd = (first_position_entropy(&up, 1.0).unwrap()
                - first_position_entropy(&dn, 1.0).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-9);
        }
    }

    #[test]
    fn entropy_grad_survives_underflow() {
        let g = entropy_grad(&[50.0, -50.0, 0.0], 0.05).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
