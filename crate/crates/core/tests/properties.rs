use proptest::prelude::*;

use pgrank::data::{
    build_eval_candidates, generate_synthetic, CandidateSet, Stage1, SyntheticConfig,
};
use pgrank::estimator::{estimate, repeated_estimates, EstimatorKind};
use pgrank::metrics::{
    dcg_at_k, ndcg_at_k, suffix_ndcg, Metric, Ranking, RelevanceJudgments, NO_CUTOFF,
};
use pgrank::oracle::{exact_distribution, exact_policy_utility, exact_utility_gradient};
use pgrank::parallel::Executor;
use pgrank::plackett_luce::{log_prob, sample_gumbel, sort_policy};
use pgrank::rng;
use pgrank::scoring::{Architecture, ScorerParams};
use pgrank::trainer::validate;

fn grades_and_ranking(max_n: usize) -> impl Strategy<Value = (Vec<u32>, Vec<usize>)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0u32..4, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    })
}

fn scores(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..=max_n)
}

fn candidate_set(n: usize, seed: u64, dim: usize) -> CandidateSet {
    use rand::Rng;
    let mut r = rng::stream(seed, &[]);
    let mut v = || {
        (0..dim)
            .map(|_| r.random_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let query = v();
    let docs = (0..n).map(|_| v()).collect();
    let grades = (0..n)
        .map(|i| ((seed as usize + i * 7) % 3) as u32)
        .collect();
    CandidateSet::from_features(query, docs, Some(grades)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ndcg_is_bounded_and_one_on_ideal((grades, order) in grades_and_ranking(12), k in 1usize..15) {
        let rel = RelevanceJudgments::new(grades.clone());
        let v = ndcg_at_k(&Ranking::new(order).unwrap(), &rel, k).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let mut ideal: Vec<usize> = (0..grades.len()).collect();
        ideal.sort_by(|&a, &b| grades[b].cmp(&grades[a]));
        let best = ndcg_at_k(&Ranking::new(ideal).unwrap(), &rel, k).unwrap();
        prop_assert_eq!(best, if rel.all_zero() { 0.0 } else { 1.0 });
    }

    #[test]
    fn swapping_better_document_forward_never_lowers_dcg(
        (grades, order) in grades_and_ranking(10), i in 0usize..10, j in 0usize..10, k in 1usize..12
    ) {
        let n = order.len();
        let (a, b) = (i.min(j) % n, i.max(j) % n);
        let (a, b) = (a.min(b), a.max(b));
        prop_assume!(grades[order[a]] < grades[order[b]]);
        let rel = RelevanceJudgments::new(grades);
        let before = dcg_at_k(&Ranking::new(order.clone()).unwrap(), &rel, k).unwrap();
        let mut swapped = order;
        swapped.swap(a, b);
        let after = dcg_at_k(&Ranking::new(swapped).unwrap(), &rel, k).unwrap();
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn suffix_terms_telescope_to_full_ndcg((grades, order) in grades_and_ranking(12)) {
        let rel = RelevanceJudgments::new(grades);
        let r = Ranking::new(order).unwrap();
        let n = r.len();
        let suffix = |k: usize| if k > n { 0.0 } else { suffix_ndcg(&r, &rel, k).unwrap() };
        let total: f64 = (1..=n).map(|k| suffix(k) - suffix(k + 1)).sum();
        let full = ndcg_at_k(&r, &rel, NO_CUTOFF).unwrap();
        prop_assert!((total - full).abs() < 1e-12);
        prop_assert!((suffix(1) - full).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_permutation_covariant(
        (grades, order) in grades_and_ranking(10),
        relabel_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let n = grades.len();
        let mut relabel: Vec<usize> = (0..n).collect();
        relabel.shuffle(&mut rng::seeded(relabel_seed));
        let mut new_grades = vec![0; n];
        for (old, &new) in relabel.iter().enumerate() {
            new_grades[new] = grades[old];
        }
        let new_order: Vec<usize> = order.iter().map(|&d| relabel[d]).collect();
        let (r0, g0) = (Ranking::new(order).unwrap(), RelevanceJudgments::new(grades));
        let (r1, g1) = (Ranking::new(new_order).unwrap(), RelevanceJudgments::new(new_grades));
        for m in [Metric::Ndcg(5), Metric::Dcg(3), Metric::Mrr, Metric::AveragePrecision, Metric::Ndcg(NO_CUTOFF)] {
            prop_assert_eq!(m.evaluate(&r0, &g0).unwrap(), m.evaluate(&r1, &g1).unwrap());
        }
    }

    #[test]
    fn policy_is_normalized_and_mode_is_sort(s in scores(6), tau in 0.05f64..3.0) {
        let dist = exact_distribution(&s, tau).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] > 1e-9) {
            let (mode, _) = dist.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            prop_assert_eq!(mode, &sort_policy(&s));
        }
    }

    #[test]
    fn shifting_scores_changes_nothing(s in scores(8), c in -50.0f64..50.0, seed in any::<u64>(), tau in 0.05f64..2.0) {
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let r = sample_gumbel(&s, tau, &mut rng::seeded(seed)).unwrap();
        let r_shift = sample_gumbel(&shifted, tau, &mut rng::seeded(seed)).unwrap();
        let lp = log_prob(&s, &r, tau).unwrap();
        let lp_shift = log_prob(&shifted, &r, tau).unwrap();
        prop_assert!((lp - lp_shift).abs() < 1e-12 * (1.0 + lp.abs()) + 1e-9 * c.abs() / tau);
        // keys differ only by the rounding of (s + c)/τ; ties there are measure-zero
        prop_assert_eq!(r, r_shift);
    }

    #[test]
    fn sorted_mass_grows_as_temperature_falls(s in prop::collection::vec(-2.0f64..2.0, 2..=5)) {
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-3));
        let mode = sort_policy(&s);
        let mass = |tau: f64| log_prob(&s, &mode, tau).unwrap().exp();
        let taus = [3.0, 1.0, 0.5, 0.1, 0.03, 0.01];
        for w in taus.windows(2) {
            prop_assert!(mass(w[1]) >= mass(w[0]) - 1e-12);
        }
    }

    #[test]
    fn score_gradient_scalar_equals_score(seed in 0u64..1000, n in 1usize..5) {
        let arch = Architecture { input_dim: 3, hidden: vec![4], embed_dim: 2, tied: seed % 2 == 0 };
        let params = ScorerParams::init(arch, seed).unwrap();
        let cs = candidate_set(n, seed, 3);
        let forward = params.forward_candidates(&cs.query, &cs.docs).unwrap().scores;
        let table = params.cache_doc_embeddings(&cs.docs).unwrap();
        let cached = table.scores(&params.encode_query(&cs.query).unwrap());
        for (i, d) in cs.docs.iter().enumerate() {
            let s = params.score(&cs.query, d).unwrap();
            prop_assert_eq!(params.score_with_gradient(&cs.query, d).unwrap().score.to_bits(), s.to_bits());
            prop_assert_eq!(forward[i].to_bits(), s.to_bits());
            prop_assert_eq!(cached[i].to_bits(), s.to_bits());
        }
    }

    #[test]
    fn zero_grades_give_exactly_zero_baselined_estimates(seed in any::<u64>(), n in 1usize..8) {
        let params = ScorerParams::init(Architecture::linear(2, 2), 3).unwrap();
        let mut cs = candidate_set(n, 5, 2);
        cs.grades = Some(vec![0; n].into());
        for kind in [EstimatorKind::LeaveOneOut, EstimatorKind::Positionwise] {
            let est = estimate(kind, &params, &cs, Metric::Ndcg(10), 4, 0.5, &mut rng::seeded(seed)).unwrap();
            prop_assert!(est.grad.iter().all(|&g| g == 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_gradient_matches_finite_differences(seed in 0u64..10_000, n in 2usize..=5) {
        let metric = Metric::Ndcg(10);
        let arch = Architecture { input_dim: 2, hidden: vec![3], embed_dim: 2, tied: false };
        let params = ScorerParams::init(arch, seed).unwrap();
        let cs = candidate_set(n, seed, 2);
        let tau = 0.8;
        let g = exact_utility_gradient(&params, &cs, tau, metric).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..g.len())
            .map(|k| {
                let mut up = params.clone();
                up.values_mut()[k] += h;
                let mut down = params.clone();
                down.values_mut()[k] -= h;
                (exact_policy_utility(&up, &cs, tau, metric).unwrap()
                    - exact_policy_utility(&down, &cs, tau, metric).unwrap())
                    / (2.0 * h)
            })
            .collect();
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        prop_assert!(diff <= 1e-6 * scale.max(1e-6), "diff {diff} scale {scale}");
    }
}

#[test]
fn plain_and_loo_agree_in_expectation() {
    let metric = Metric::Ndcg(10);
    let params = ScorerParams::init(Architecture::linear(2, 2), 11).unwrap();
    let cs = candidate_set(5, 4, 2);
    let exec = Executor::threads(0);
    let plain = repeated_estimates(
        EstimatorKind::Plain,
        &params,
        &cs,
        metric,
        32,
        1.0,
        2000,
        1,
        &exec,
    )
    .unwrap();
    let loo = repeated_estimates(
        EstimatorKind::LeaveOneOut,
        &params,
        &cs,
        metric,
        32,
        1.0,
        2000,
        2,
        &exec,
    )
    .unwrap();
    for i in 0..plain.mean.len() {
        let se = (plain.variance[i] / 2000.0 + loo.variance[i] / 2000.0).sqrt();
        assert!(
            (plain.mean[i] - loo.mean[i]).abs() <= 4.0 * se + 1e-12,
            "coordinate {i}"
        );
    }
}

#[test]
fn estimates_converge_to_oracle_as_samples_grow() {
    let metric = Metric::Ndcg(10);
    let params = ScorerParams::init(Architecture::linear(2, 2), 8).unwrap();
    let cs = candidate_set(4, 9, 2);
    let exact = exact_utility_gradient(&params, &cs, 1.0, metric).unwrap();
    let err = |n: usize| {
        let est = estimate(
            EstimatorKind::LeaveOneOut,
            &params,
            &cs,
            metric,
            n,
            1.0,
            &mut rng::seeded(3),
        )
        .unwrap();
        est.grad
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    assert!(err(50_000) < err(50) / 5.0);
}

#[test]
fn eval_pools_are_reproducible_and_contain_all_relevant() {
    let config = SyntheticConfig {
        num_queries: 20,
        docs_per_query_pool: 40,
        seed: 5,
        ..SyntheticConfig::default()
    };
    let corpus = generate_synthetic(&config).unwrap();
    let params = ScorerParams::init(Architecture::linear(16, 8), 2).unwrap();
    let a = build_eval_candidates(
        &corpus,
        &Stage1::Model(params.clone()),
        10,
        &Executor::sequential(),
    )
    .unwrap();
    let b =
        build_eval_candidates(&corpus, &Stage1::Model(params), 10, &Executor::threads(3)).unwrap();
    assert_eq!(a.to_tsv(), b.to_tsv());
    for q in corpus.queries.ids() {
        let pool: Vec<&str> = a
            .get(q)
            .unwrap()
            .iter()
            .map(|e| e.doc_id.as_str())
            .collect();
        for (d, _) in corpus.qrels.relevant(q) {
            assert!(pool.contains(&d), "{q} misses {d}");
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_validation() {
    let dir = tempfile::tempdir().unwrap();
    let arch = Architecture {
        input_dim: 3,
        hidden: vec![4],
        embed_dim: 3,
        tied: false,
    };
    let params = ScorerParams::init(arch, 17).unwrap();
    let path = dir.path().join("m.txt");
    params.save(&path).unwrap();
    let loaded = ScorerParams::load(&path).unwrap();
    let sets: Vec<CandidateSet> = (0..5).map(|i| candidate_set(6, i, 3)).collect();
    let exec = Executor::sequential();
    let a = validate(&params, &sets, Metric::Ndcg(10), 8, 0.5, 1, &exec).unwrap();
    let b = validate(&loaded, &sets, Metric::Ndcg(10), 8, 0.5, 1, &exec).unwrap();
    assert_eq!(a, b);
}
