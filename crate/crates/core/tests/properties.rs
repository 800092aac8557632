use std::collections::BTreeSet;

use ndarray::{Array3, Axis};
use proptest::prelude::*;
use segprune::attention::{aggregate_scores, softmax_attention};
use segprune::pruning::{
    bottom_k, coverage_metrics, random_prune, segment_partition, segmentwise_top_k, top_k, Budget,
    KeptOrder, PruneConfig, RemainderPolicy, Strategy as Method,
};
use segprune::{AttentionTensor, QkTensor, TokenScores};

fn qk_strategy(
    max_h: usize,
    max_n: usize,
    max_dh: usize,
    mag: f64,
) -> impl Strategy<Value = QkTensor> {
    (1..=max_h, 1..=max_n, 1..=max_dh).prop_flat_map(move |(h, n, dh)| {
        let len = h * n * dh;
        (
            prop::collection::vec(-mag..mag, len),
            prop::collection::vec(-mag..mag, len),
        )
            .prop_map(move |(q, k)| {
                QkTensor::new(
                    Array3::from_shape_vec((h, n, dh), q).unwrap(),
                    Array3::from_shape_vec((h, n, dh), k).unwrap(),
                )
                .unwrap()
            })
    })
}

fn scores_strategy(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, 1..=max_n)
}

/// Scores drawn from a small grid so that ties are frequent.
fn tied_scores_strategy(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..5).prop_map(f64::from), 1..=max_n)
}

fn sort_oracle(scores: &[f64], k: usize, descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps lower indices first among ties
    if descending {
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    } else {
        idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    }
    idx.truncate(k);
    idx
}

proptest! {
    #[test]
    fn rows_are_stochastic(qk in qk_strategy(3, 12, 4, 1e4)) {
        let attn = softmax_attention(&qk);
        for plane in attn.weights().outer_iter() {
            for row in plane.outer_iter() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-5);
                prop_assert!(row.iter().all(|w| (0.0..=1.0).contains(w)));
            }
        }
    }

    #[test]
    fn mass_is_conserved(qk in qk_strategy(4, 20, 4, 5.0)) {
        let n = qk.n_tokens() as f64;
        let scores = aggregate_scores(&softmax_attention(&qk));
        prop_assert!((scores.total() - n).abs() <= 1e-4);
    }

    #[test]
    fn token_permutation_permutes_scores(
        qk in qk_strategy(3, 10, 3, 3.0),
        seed in any::<u64>(),
    ) {
        let n = qk.n_tokens();
        let perm = segmentwise_perm(n, seed);
        let q = qk.queries().select(Axis(1), &perm);
        let k = qk.keys().select(Axis(1), &perm);
        let base = aggregate_scores(&softmax_attention(&qk));
        let permuted = aggregate_scores(&softmax_attention(&QkTensor::new(q, k).unwrap()));
        for (new_pos, &old) in perm.iter().enumerate() {
            prop_assert!((permuted.as_slice()[new_pos] - base.as_slice()[old]).abs() < 1e-9);
        }
    }

    #[test]
    fn head_order_does_not_matter(qk in qk_strategy(4, 10, 3, 3.0)) {
        let attn = softmax_attention(&qk);
        let h = attn.n_heads();
        let reversed: Vec<usize> = (0..h).rev().collect();
        let shuffled = AttentionTensor::new(attn.weights().select(Axis(0), &reversed)).unwrap();
        let a = aggregate_scores(&attn);
        let b = aggregate_scores(&shuffled);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn top_and_bottom_match_sort_oracle(v in tied_scores_strategy(40), kf in 0.0f64..1.0) {
        let n = v.len();
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let s = TokenScores::new(v.clone()).unwrap();
        prop_assert_eq!(top_k(&s, &PruneConfig::top_k(k)).unwrap().kept_indices, sort_oracle(&v, k, true));
        let bottom = bottom_k(&s, &PruneConfig::new(Method::BottomK, Budget::Count(k))
            .with_ordering(KeptOrder::Temporal)).unwrap();
        let mut want = sort_oracle(&v, k, false);
        want.sort();
        prop_assert_eq!(bottom.kept_indices, want);
    }

    #[test]
    fn one_segment_is_top_k(
        v in tied_scores_strategy(60),
        kf in 0.0f64..1.0,
        temporal in any::<bool>(),
        fill in any::<bool>(),
    ) {
        let n = v.len();
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let ordering = if temporal { KeptOrder::Temporal } else { KeptOrder::DescendingAttention };
        let remainder = if fill { RemainderPolicy::GreedyFill } else { RemainderPolicy::Strict };
        let s = TokenScores::new(v).unwrap();
        let seg = segmentwise_top_k(&s, &PruneConfig::segmentwise(k, 1)
            .with_ordering(ordering).with_remainder(remainder)).unwrap();
        let top = top_k(&s, &PruneConfig::top_k(k).with_ordering(ordering)).unwrap();
        prop_assert_eq!(seg.kept_indices, top.kept_indices);
    }

    #[test]
    fn strict_quota_per_segment(
        v in scores_strategy(80),
        sf in 0.0f64..1.0,
        kf in 0.0f64..1.0,
    ) {
        let n = v.len();
        let segments = 1 + ((n - 1) as f64 * sf) as usize;
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let s = TokenScores::new(v).unwrap();
        let r = segmentwise_top_k(&s, &PruneConfig::segmentwise(k, segments)).unwrap();
        let p = segment_partition(n, segments).unwrap();
        let mut per_segment = vec![0usize; segments];
        for &i in &r.kept_indices {
            per_segment[p.segment_of(i)] += 1;
        }
        for (seg, range) in p.segments().enumerate() {
            prop_assert_eq!(per_segment[seg], (k / segments).min(range.len()));
        }
        prop_assert!(r.k_kept() <= k);

        let filled = segmentwise_top_k(&s, &PruneConfig::segmentwise(k, segments)
            .with_remainder(RemainderPolicy::GreedyFill)).unwrap();
        prop_assert_eq!(filled.kept_indices.len(), k.min(n));
    }

    #[test]
    fn descending_order_invariant(v in tied_scores_strategy(50), kf in 0.0f64..1.0, segs in 1usize..6) {
        let n = v.len();
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let segs = segs.min(n);
        let s = TokenScores::new(v.clone()).unwrap();
        for r in [
            top_k(&s, &PruneConfig::top_k(k)).unwrap(),
            segmentwise_top_k(&s, &PruneConfig::segmentwise(k, segs)).unwrap(),
            bottom_k(&s, &PruneConfig::new(Method::BottomK, Budget::Count(k))).unwrap(),
        ] {
            for w in r.kept_indices.windows(2) {
                let (a, b) = (w[0], w[1]);
                prop_assert!(v[a] > v[b] || (v[a] == v[b] && a < b));
            }
            let distinct: BTreeSet<_> = r.kept_indices.iter().collect();
            prop_assert_eq!(distinct.len(), r.kept_indices.len());
        }
    }

    #[test]
    fn scaling_scores_keeps_selection(v in scores_strategy(50), kf in 0.0f64..1.0, c in 1e-3f64..1e3) {
        let n = v.len();
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let segs = n.min(4);
        let a = TokenScores::new(v.clone()).unwrap();
        let b = TokenScores::new(v.iter().map(|x| x * c).collect()).unwrap();
        for cfg in [
            PruneConfig::top_k(k),
            PruneConfig::segmentwise(k, segs),
            PruneConfig::new(Method::BottomK, Budget::Count(k)),
        ] {
            let ra = segprune::pruning::prune(&a, &cfg, Default::default()).unwrap();
            let rb = segprune::pruning::prune(&b, &cfg, Default::default()).unwrap();
            prop_assert_eq!(ra.temporal_indices(), rb.temporal_indices());
        }
    }

    #[test]
    fn top_and_bottom_are_disjoint(n in 2usize..60, seed in any::<u64>(), kf in 0.0f64..1.0) {
        let v = distinct_scores(n, seed);
        let k = 1 + ((n / 2 - 1) as f64 * kf) as usize;
        let s = TokenScores::new(v).unwrap();
        let top: BTreeSet<_> = top_k(&s, &PruneConfig::top_k(k)).unwrap().kept_indices.into_iter().collect();
        let bottom: BTreeSet<_> = bottom_k(&s, &PruneConfig::new(Method::BottomK, Budget::Count(k)))
            .unwrap().kept_indices.into_iter().collect();
        prop_assert!(top.is_disjoint(&bottom));
    }

    #[test]
    fn mass_and_spread_ordering(v in scores_strategy(120), kf in 0.0f64..1.0, s_eval in 1usize..12) {
        let n = v.len();
        let s_eval = s_eval.min(n);
        let k = (1 + ((n - 1) as f64 * kf) as usize).max(s_eval);
        let s = TokenScores::new(v).unwrap();
        let top = top_k(&s, &PruneConfig::top_k(k)).unwrap();
        let seg = segmentwise_top_k(&s, &PruneConfig::segmentwise(k, s_eval)
            .with_remainder(RemainderPolicy::GreedyFill)).unwrap();
        let bottom = bottom_k(&s, &PruneConfig::new(Method::BottomK, Budget::Count(k))).unwrap();
        let m = |r: &segprune::pruning::PruneResult| coverage_metrics(r, &s, s_eval).unwrap();
        let (mt, ms, mb) = (m(&top), m(&seg), m(&bottom));
        prop_assert!(mt.attention_mass_captured + 1e-12 >= ms.attention_mass_captured);
        prop_assert!(ms.attention_mass_captured + 1e-12 >= mb.attention_mass_captured);
        prop_assert_eq!(ms.segment_occupancy, 1.0);
        prop_assert!(mt.segment_occupancy <= 1.0);

        let strict = segmentwise_top_k(&s, &PruneConfig::segmentwise(k, s_eval)).unwrap();
        prop_assert_eq!(m(&strict).segment_occupancy, 1.0);
    }

    #[test]
    fn strategies_are_deterministic(v in scores_strategy(50), seed in any::<u64>(), kf in 0.0f64..1.0) {
        let n = v.len();
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let s = TokenScores::new(v).unwrap();
        for strategy in [Method::TopK, Method::SegmentwiseTopK, Method::Random, Method::BottomK, Method::Identity] {
            let cfg = PruneConfig::new(strategy, Budget::Count(k)).with_seed(seed).with_segments(n.min(3));
            let a = segprune::pruning::prune(&s, &cfg, Default::default()).unwrap();
            let b = segprune::pruning::prune(&s, &cfg, Default::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

/// Permutation of `0..n` from a seed.
fn segmentwise_perm(n: usize, seed: u64) -> Vec<usize> {
    segprune::rng::sample_indices(seed, n, n)
}

fn distinct_scores(n: usize, seed: u64) -> Vec<f64> {
    segprune::rng::sample_indices(seed, n, n)
        .into_iter()
        .map(|r| r as f64 + 0.5)
        .collect()
}

#[test]
fn random_inclusion_frequency_is_uniform() {
    let trials = 10_000;
    let mut counts = [0usize; 10];
    for seed in 0..trials {
        let cfg = PruneConfig::new(Method::Random, Budget::Count(4)).with_seed(seed);
        for i in random_prune(10, &cfg).unwrap().kept_indices {
            counts[i] += 1;
        }
    }
    for c in counts {
        let freq = c as f64 / trials as f64;
        assert!((freq - 0.4).abs() <= 0.02, "{counts:?}");
    }
}
