//! Ranking utilities.
//!
//! Every metric here scores a [`Ranking`] of a candidate set against
//! per-document [`RelevanceJudgments`]. Gains are linear (gain = grade) and
//! the positional discount is `1 / log2(1 + j)` for 1-based position `j`.
//! A document is relevant for MRR and AP iff its grade is positive.

use std::fmt;
use std::str::FromStr;

use crate::{ensure, Error, Result};

/// A permutation of candidate indices; `order()[j]` is the document at
/// position `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    /// Validates that `order` is a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &d in &order {
            ensure!(d < n, "ranking index {d} out of range for {n} documents");
            ensure!(!seen[d], "ranking index {d} appears twice");
            seen[d] = true;
        }
        Ok(Ranking(order))
    }

    pub fn identity(n: usize) -> Self {
        Ranking((0..n).collect())
    }

    /// Callers guarantee `order` is a permutation.
    pub(crate) fn from_permutation(order: Vec<usize>) -> Self {
        debug_assert!(Ranking::new(order.clone()).is_ok());
        Ranking(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// Inverse permutation: `positions()[d]` is the 0-based position of document `d`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (j, &d) in self.0.iter().enumerate() {
            pos[d] = j;
        }
        pos
    }
}

/// Non-negative integer relevance grade per candidate document.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RelevanceJudgments(Vec<u32>);

impl RelevanceJudgments {
    pub fn new(grades: Vec<u32>) -> Self {
        RelevanceJudgments(grades)
    }

    pub fn grades(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_relevant(&self) -> usize {
        self.0.iter().filter(|&&g| g > 0).count()
    }

    pub fn all_zero(&self) -> bool {
        self.0.iter().all(|&g| g == 0)
    }
}

impl From<Vec<u32>> for RelevanceJudgments {
    fn from(grades: Vec<u32>) -> Self {
        RelevanceJudgments(grades)
    }
}

#[inline]
fn discount(position: usize) -> f64 {
    // position is 1-based
    1.0 / ((1 + position) as f64).log2()
}

fn check_lengths(ranking: &Ranking, rel: &RelevanceJudgments) -> Result<()> {
    ensure!(
        ranking.len() == rel.len(),
        "ranking has {} documents but judgments have {}",
        ranking.len(),
        rel.len()
    );
    Ok(())
}

fn dcg_unchecked(order: &[usize], grades: &[u32], k: usize) -> f64 {
    order
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &d)| grades[d] as f64 * discount(j + 1))
        .sum()
}

fn ideal_dcg(grades: &[u32], k: usize) -> f64 {
    let mut sorted: Vec<u32> = grades.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &g)| g as f64 * discount(j + 1))
        .sum()
}

/// Ideal ordering: descending grade, ties by ascending index.
pub fn ideal_ranking(rel: &RelevanceJudgments) -> Ranking {
    let mut order: Vec<usize> = (0..rel.len()).collect();
    order.sort_by(|&a, &b| rel.0[b].cmp(&rel.0[a]).then(a.cmp(&b)));
    Ranking(order)
}

pub fn dcg_at_k(ranking: &Ranking, rel: &RelevanceJudgments, k: usize) -> Result<f64> {
    ensure!(k >= 1, "cutoff k must be at least 1");
    check_lengths(ranking, rel)?;
    Ok(dcg_unchecked(&ranking.0, &rel.0, k))
}

/// nDCG@k, normalized by the ideal DCG at the same cutoff. Zero when no
/// document is relevant.
pub fn ndcg_at_k(ranking: &Ranking, rel: &RelevanceJudgments, k: usize) -> Result<f64> {
    let dcg = dcg_at_k(ranking, rel, k)?;
    let idcg = ideal_dcg(&rel.0, k);
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

/// Discounted gain of positions `k..=n` (1-based) divided by the full-list
/// ideal DCG. `suffix_ndcg(r, rel, 1)` is nDCG with no cutoff.
pub fn suffix_ndcg(ranking: &Ranking, rel: &RelevanceJudgments, k: usize) -> Result<f64> {
    check_lengths(ranking, rel)?;
    let n = ranking.len();
    ensure!(k >= 1 && k <= n, "suffix start {k} outside 1..={n}");
    Ok(suffix_ndcg_profile(ranking.order(), rel.grades(), n)[k - 1])
}

/// All suffix values at once for a metric truncated at `cutoff`.
///
/// Returns `n + 1` values; entry `k - 1` is the truncated-DCG contribution of
/// positions `k..=min(cutoff, n)` divided by the ideal DCG at `cutoff`, and the
/// final entry is 0. Entries past the cutoff are 0.
pub fn suffix_ndcg_profile(order: &[usize], grades: &[u32], cutoff: usize) -> Vec<f64> {
    let n = order.len();
    let idcg = ideal_dcg(grades, cutoff);
    let mut out = vec![0.0; n + 1];
    if idcg <= 0.0 {
        return out;
    }
    let last = cutoff.min(n);
    let mut acc = 0.0;
    for j in (0..last).rev() {
        acc += grades[order[j]] as f64 * discount(j + 1);
        out[j] = acc / idcg;
    }
    out
}

/// Reciprocal rank of the first relevant document, 0 if none.
pub fn mrr(ranking: &Ranking, rel: &RelevanceJudgments) -> Result<f64> {
    check_lengths(ranking, rel)?;
    Ok(ranking
        .0
        .iter()
        .position(|&d| rel.0[d] > 0)
        .map_or(0.0, |j| 1.0 / (j + 1) as f64))
}

/// Average precision over all relevant documents in the candidate set.
pub fn average_precision(ranking: &Ranking, rel: &RelevanceJudgments) -> Result<f64> {
    check_lengths(ranking, rel)?;
    Ok(ap_unchecked(&ranking.0, &rel.0))
}

fn ap_unchecked(order: &[usize], grades: &[u32]) -> f64 {
    let total = grades.iter().filter(|&&g| g > 0).count();
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (j, &d) in order.iter().enumerate() {
        if grades[d] > 0 {
            hits += 1;
            sum += hits as f64 / (j + 1) as f64;
        }
    }
    sum / total as f64
}

/// Utility function selectable by name (`ndcg@10`, `dcg@5`, `ndcg`, `mrr`, `map`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Dcg(usize),
    Ndcg(usize),
    Mrr,
    AveragePrecision,
}

/// Cutoff used when a name carries no `@k`.
pub const NO_CUTOFF: usize = usize::MAX;

impl Metric {
    pub fn evaluate(&self, ranking: &Ranking, rel: &RelevanceJudgments) -> Result<f64> {
        match *self {
            Metric::Dcg(k) => dcg_at_k(ranking, rel, k),
            Metric::Ndcg(k) => ndcg_at_k(ranking, rel, k),
            Metric::Mrr => mrr(ranking, rel),
            Metric::AveragePrecision => average_precision(ranking, rel),
        }
    }

    /// Cutoff for nDCG-family metrics, `None` otherwise.
    pub fn ndcg_cutoff(&self) -> Option<usize> {
        match *self {
            Metric::Ndcg(k) => Some(k),
            _ => None,
        }
    }

    /// Metric of a possibly truncated result list. `list` holds grades in
    /// rank order; `judged` holds every judged grade for the query, retrieved
    /// or not, and fixes the ideal DCG and the average-precision denominator.
    pub fn evaluate_list(&self, list: &[u32], judged: &[u32]) -> f64 {
        let dcg = |k: usize| -> f64 {
            list.iter()
                .take(k)
                .enumerate()
                .map(|(j, &g)| g as f64 * discount(j + 1))
                .sum()
        };
        match *self {
            Metric::Dcg(k) => dcg(k),
            Metric::Ndcg(k) => {
                let idcg = ideal_dcg(judged, k);
                if idcg > 0.0 {
                    dcg(k) / idcg
                } else {
                    0.0
                }
            }
            Metric::Mrr => list
                .iter()
                .position(|&g| g > 0)
                .map_or(0.0, |j| 1.0 / (j + 1) as f64),
            Metric::AveragePrecision => {
                let total = judged.iter().filter(|&&g| g > 0).count();
                if total == 0 {
                    return 0.0;
                }
                let mut hits = 0usize;
                let mut sum = 0.0;
                for (j, &g) in list.iter().enumerate() {
                    if g > 0 {
                        hits += 1;
                        sum += hits as f64 / (j + 1) as f64;
                    }
                }
                sum / total as f64
            }
        }
    }

    /// Binds the metric to one query's judgments, precomputing the ideal DCG.
    pub fn bind<'a>(&self, grades: &'a [u32]) -> BoundMetric<'a> {
        let idcg = match *self {
            Metric::Ndcg(k) => ideal_dcg(grades, k),
            _ => 0.0,
        };
        BoundMetric {
            metric: *self,
            grades,
            idcg,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cut = |f: &mut fmt::Formatter<'_>, name: &str, k: usize| {
            if k == NO_CUTOFF {
                write!(f, "{name}")
            } else {
                write!(f, "{name}@{k}")
            }
        };
        match *self {
            Metric::Dcg(k) => cut(f, "dcg", k),
            Metric::Ndcg(k) => cut(f, "ndcg", k),
            Metric::Mrr => write!(f, "mrr"),
            Metric::AveragePrecision => write!(f, "map"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, k) = match s.split_once('@') {
            Some((name, k)) => {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::Contract(format!("bad metric cutoff in {s:?}")))?;
                ensure!(k >= 1, "metric cutoff must be at least 1");
                (name.to_string(), Some(k))
            }
            None => (s.clone(), None),
        };
        match (name.as_str(), k) {
            ("dcg", k) => Ok(Metric::Dcg(k.unwrap_or(NO_CUTOFF))),
            ("ndcg", k) => Ok(Metric::Ndcg(k.unwrap_or(NO_CUTOFF))),
            ("mrr", None) => Ok(Metric::Mrr),
            ("map" | "ap", None) => Ok(Metric::AveragePrecision),
            _ => Err(Error::Contract(format!("unknown metric {s:?}"))),
        }
    }
}

/// A [`Metric`] bound to one query's grades. Evaluation skips length checks;
/// the caller passes permutations of the bound candidate set.
#[derive(Clone, Debug)]
pub struct BoundMetric<'a> {
    metric: Metric,
    grades: &'a [u32],
    idcg: f64,
}

impl BoundMetric<'_> {
    pub fn eval(&self, order: &[usize]) -> f64 {
        debug_assert_eq!(order.len(), self.grades.len());
        match self.metric {
            Metric::Dcg(k) => dcg_unchecked(order, self.grades, k),
            Metric::Ndcg(k) => {
                if self.idcg > 0.0 {
                    dcg_unchecked(order, self.grades, k) / self.idcg
                } else {
                    0.0
                }
            }
            Metric::Mrr => order
                .iter()
                .position(|&d| self.grades[d] > 0)
                .map_or(0.0, |j| 1.0 / (j + 1) as f64),
            Metric::AveragePrecision => ap_unchecked(order, self.grades),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn r(v: &[usize]) -> Ranking {
        Ranking::new(v.to_vec()).unwrap()
    }

    fn g(v: &[u32]) -> RelevanceJudgments {
        RelevanceJudgments::new(v.to_vec())
    }

    #[test]
    fn dcg_examples() {
        assert_abs_diff_eq!(dcg_at_k(&r(&[0, 1, 2]), &g(&[1, 0, 0]), 3).unwrap(), 1.0);
        assert_abs_diff_eq!(
            dcg_at_k(&r(&[0, 1, 2]), &g(&[0, 1, 0]), 3).unwrap(),
            0.63093,
            epsilon = 1e-5
        );
        let id = Ranking::identity(6);
        assert_abs_diff_eq!(
            dcg_at_k(&id, &g(&[3, 2, 3, 0, 1, 2]), 6).unwrap(),
            6.86113,
            epsilon = 1e-5
        );
    }

    #[test]
    fn dcg_cutoff_truncates() {
        let id = Ranking::identity(3);
        assert_abs_diff_eq!(dcg_at_k(&id, &g(&[1, 1, 1]), 1).unwrap(), 1.0);
        // cutoff beyond n behaves like n
        assert_eq!(
            dcg_at_k(&id, &g(&[1, 1, 1]), 3).unwrap(),
            dcg_at_k(&id, &g(&[1, 1, 1]), 50).unwrap()
        );
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let e = dcg_at_k(&Ranking::identity(2), &g(&[1, 0, 0]), 3).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
        assert!(mrr(&Ranking::identity(2), &g(&[1])).is_err());
        assert!(dcg_at_k(&Ranking::identity(1), &g(&[1]), 0).is_err());
    }

    #[test]
    fn ranking_rejects_non_permutations() {
        assert!(Ranking::new(vec![0, 0]).is_err());
        assert!(Ranking::new(vec![0, 2]).is_err());
        assert!(Ranking::new(vec![]).is_ok());
    }

    #[test]
    fn ndcg_examples() {
        assert_abs_diff_eq!(ndcg_at_k(&r(&[0, 1]), &g(&[1, 0]), 2).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&r(&[2, 0, 1]), &g(&[0, 0, 0]), 3).unwrap(), 0.0);
        assert_abs_diff_eq!(
            ndcg_at_k(&r(&[1, 0, 2]), &g(&[1, 0, 0]), 3).unwrap(),
            0.63093,
            epsilon = 1e-5
        );
    }

    #[test]
    fn ndcg_idcg_uses_same_cutoff() {
        // two relevant docs, only one fits in the top-1
        assert_abs_diff_eq!(ndcg_at_k(&r(&[0, 1, 2]), &g(&[1, 1, 0]), 1).unwrap(), 1.0);
    }

    #[test]
    fn suffix_examples() {
        assert_abs_diff_eq!(suffix_ndcg(&r(&[0, 1]), &g(&[1, 0]), 1).unwrap(), 1.0);
        assert_eq!(suffix_ndcg(&r(&[0, 1]), &g(&[1, 0]), 2).unwrap(), 0.0);
        // (1/log2 3 + 1/log2 4) / (1 + 1/log2 3)
        assert_abs_diff_eq!(
            suffix_ndcg(&r(&[2, 0, 1]), &g(&[1, 1, 0]), 2).unwrap(),
            0.693426,
            epsilon = 1e-6
        );
        assert!(suffix_ndcg(&r(&[0, 1]), &g(&[1, 0]), 0).is_err());
        assert!(suffix_ndcg(&r(&[0, 1]), &g(&[1, 0]), 3).is_err());
    }

    #[test]
    fn suffix_profile_respects_cutoff() {
        let order = [0, 1, 2, 3];
        let grades = [1, 1, 1, 1];
        let p = suffix_ndcg_profile(&order, &grades, 2);
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_eq!(&p[2..], &[0.0, 0.0, 0.0]);
        let full = suffix_ndcg_profile(&order, &grades, NO_CUTOFF);
        assert_abs_diff_eq!(full[0], 1.0, epsilon = 1e-12);
        assert!(full[3] > 0.0);
    }

    #[test]
    fn mrr_and_ap_examples() {
        assert_abs_diff_eq!(mrr(&r(&[0, 1]), &g(&[0, 1])).unwrap(), 0.5);
        assert_abs_diff_eq!(average_precision(&r(&[0, 1]), &g(&[1, 1])).unwrap(), 1.0);
        assert_abs_diff_eq!(
            average_precision(&r(&[0, 1, 2]), &g(&[0, 1, 1])).unwrap(),
            0.583333,
            epsilon = 1e-6
        );
        assert_eq!(mrr(&r(&[0, 1]), &g(&[0, 0])).unwrap(), 0.0);
        assert_eq!(average_precision(&r(&[0, 1]), &g(&[0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn graded_relevance_counts_as_binary_for_mrr_ap() {
        assert_eq!(mrr(&r(&[0, 1]), &g(&[0, 3])).unwrap(), 0.5);
        assert_abs_diff_eq!(average_precision(&r(&[1, 0]), &g(&[2, 3])).unwrap(), 1.0);
    }

    #[test]
    fn ideal_ranking_breaks_ties_by_index() {
        assert_eq!(ideal_ranking(&g(&[1, 2, 1, 2])).order(), &[1, 3, 0, 2]);
    }

    #[test]
    fn metric_names_round_trip() {
        for name in ["ndcg@10", "dcg@3", "ndcg", "mrr", "map"] {
            let m: Metric = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
        assert_eq!("NDCG@5".parse::<Metric>().unwrap(), Metric::Ndcg(5));
        assert!("ndcg@0".parse::<Metric>().is_err());
        assert!("mrr@3".parse::<Metric>().is_err());
        assert!("p@10".parse::<Metric>().is_err());
    }

    #[test]
    fn bound_metric_matches_free_functions() {
        let grades = [3, 0, 2, 1, 0];
        let ranking = r(&[4, 2, 0, 1, 3]);
        let rel = g(&grades);
        for m in [
            Metric::Ndcg(3),
            Metric::Dcg(2),
            Metric::Mrr,
            Metric::AveragePrecision,
        ] {
            assert_eq!(
                m.bind(&grades).eval(ranking.order()),
                m.evaluate(&ranking, &rel).unwrap()
            );
        }
    }

    #[test]
    fn list_evaluation_matches_full_rankings_and_handles_truncation() {
        let grades = [3, 0, 2, 1, 0];
        let ranking = r(&[4, 2, 0, 1, 3]);
        let list: Vec<u32> = ranking.order().iter().map(|&d| grades[d]).collect();
        for m in [
            Metric::Ndcg(3),
            Metric::Ndcg(NO_CUTOFF),
            Metric::Dcg(2),
            Metric::Mrr,
            Metric::AveragePrecision,
        ] {
            assert_eq!(
                m.evaluate_list(&list, &grades),
                m.bind(&grades).eval(ranking.order()),
                "{m}"
            );
        }
        // one of two relevant documents retrieved, at rank 2
        let judged = [1, 1];
        assert_abs_diff_eq!(
            Metric::AveragePrecision.evaluate_list(&[0, 1], &judged),
            0.25
        );
        assert_abs_diff_eq!(Metric::Mrr.evaluate_list(&[0, 1], &judged), 0.5);
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert_abs_diff_eq!(
            Metric::Ndcg(10).evaluate_list(&[0, 1], &judged),
            (1.0 / 3f64.log2()) / idcg,
            epsilon = 1e-15
        );
        assert_eq!(Metric::Ndcg(10).evaluate_list(&[], &[]), 0.0);
    }
}
