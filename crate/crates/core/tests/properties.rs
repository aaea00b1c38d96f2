use std::collections::BTreeSet;

use ndv_core::coordinator::{
    coordinate, esti_f1, esti_resample, summarize_dict, summarize_machine, PmTree, RoleSet,
    SummaryParams,
};
use ndv_core::datagen::{
    expected_sample_stats_with, gen_fof_poisson, sample_population, SamplePlan, SamplingModel,
};
use ndv_core::estimators::{
    gamma_sq_haas, jackknife_sj2, jackknife_uj1, jackknife_uj2, shlosser_ratio,
};
use ndv_core::{CountSketch, DistinctSketch, ExactL0, Fof, FreqDict, HyperLogLog};
use proptest::prelude::*;

fn singleton_machines(k: usize) -> Vec<ExactL0> {
    (0..k as u64).map(|j| [j].into_iter().collect()).collect()
}

fn ids(s: &ExactL0) -> BTreeSet<u64> {
    s.elements().iter().copied().collect()
}

#[test]
fn complement_cover_exhaustive() {
    for k in 1..=64usize {
        let tree = PmTree::build(&singleton_machines(k)).unwrap();
        let padded = tree.padded_machines() as u64;
        for index in 0..tree.padded_machines() {
            let (union, _) = tree.complement_union(index).unwrap();
            let expected: BTreeSet<u64> = (0..k as u64).filter(|&j| j != index as u64).collect();
            assert_eq!(ids(&union), expected, "k={k} index={index}");
            assert_eq!(
                tree.complement_cover(index).unwrap().len() as u64,
                padded.trailing_zeros() as u64
            );
        }
    }
}

#[test]
fn tree_nodes_cover_consecutive_machines() {
    for k in [2usize, 3, 7, 16, 33] {
        let tree = PmTree::build(&singleton_machines(k)).unwrap();
        for (level, nodes) in tree.levels().iter().enumerate() {
            for (i, node) in nodes.iter().enumerate() {
                let lo = (i << level) as u64;
                let hi = ((i + 1) << level) as u64;
                let expected: BTreeSet<u64> = (lo..hi.min(k as u64)).collect();
                assert_eq!(ids(node), expected, "k={k} level={level} i={i}");
            }
        }
        assert_eq!(tree.levels().last().unwrap().len(), 2);
    }
}

#[test]
fn padding_does_not_change_estimates() {
    let params = SummaryParams::new(
        HyperLogLog::new(10, 4).unwrap(),
        CountSketch::new(1, 1, 0).unwrap(),
        1.0,
        RoleSet::MINIMAL,
    )
    .unwrap();
    let streams: Vec<Vec<u64>> = (0..5u64)
        .map(|j| (0..500).map(|x| x * 3 + j).collect())
        .collect();
    let mut sums: Vec<_> = streams
        .iter()
        .map(|s| summarize_machine(s, &params, 0))
        .collect();
    let five = coordinate(&sums).unwrap();
    for _ in 0..3 {
        sums.push(summarize_machine(&[], &params, 0));
    }
    let eight = coordinate(&sums).unwrap();
    assert_eq!(five.d, eight.d);
    assert_eq!(five.f1, eight.f1);
}

#[test]
fn sketch_bytes_independent_of_scale() {
    let params = SummaryParams::new(
        HyperLogLog::new(12, 1).unwrap(),
        CountSketch::new(5, 20_000, 2).unwrap(),
        0.01,
        RoleSet::ALL,
    )
    .unwrap();
    let bytes = |n: u64| {
        (0..16u64)
            .map(|j| {
                let stream: Vec<u64> = (0..n).map(|x| x * 16 + j).collect();
                summarize_machine(&stream, &params, j)
                    .to_payload()
                    .unwrap()
                    .total_bytes()
            })
            .sum::<u64>()
    };
    let per_machine = 4 * HyperLogLog::encoded_len(12) as u64 + 400_090 + 16;
    assert_eq!(bytes(10), 16 * per_machine);
    assert_eq!(bytes(10_000), 16 * per_machine);
}

#[test]
fn resample_ratio_tracks_exact_fof() {
    let population = gen_fof_poisson(2_000_000, 20.0).unwrap();
    let q = 0.05;
    let sample = sample_population(&population, &SamplePlan::new(q, 8, 11).unwrap()).unwrap();
    let dicts: Vec<FreqDict> = sample
        .streams
        .iter()
        .map(|s| FreqDict::from_stream(s.iter().copied()))
        .collect();
    let fof = FreqDict::merge(&dicts).to_fof();
    let params = SummaryParams::new(
        ExactL0::new(),
        CountSketch::new(1, 1, 0).unwrap(),
        q,
        RoleSet::ALL,
    )
    .unwrap();
    let sums: Vec<_> = dicts
        .iter()
        .enumerate()
        .map(|(j, d)| summarize_dict(d, &params, 100 + j as u64))
        .collect();
    let r = esti_resample(&sums).unwrap();
    let s = fof.stats();
    let ratio = (s.d as f64 - r.d) / r.f1;
    let exact: f64 = shlosser_ratio(&fof, q).unwrap();
    assert!((ratio / exact - 1.0).abs() < 0.15, "{ratio} vs {exact}");
}

fn fof_means(population: &Fof, q: f64, seeds: u64) -> ([f64; 2], [f64; 2]) {
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for seed in 0..seeds {
        let sample = sample_population(population, &SamplePlan::new(q, 4, seed).unwrap()).unwrap();
        let s = FreqDict::merge(
            &sample
                .streams
                .iter()
                .map(|s| FreqDict::from_stream(s.iter().copied()))
                .collect::<Vec<_>>(),
        )
        .to_fof()
        .stats();
        for (k, v) in [s.f1 as f64, s.d as f64].into_iter().enumerate() {
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let n = seeds as f64;
    let mean = [sum[0] / n, sum[1] / n];
    let se = [0, 1].map(|k| ((sq[k] / n - mean[k] * mean[k]) * n / (n - 1.0) / n).sqrt());
    (mean, se)
}

#[test]
fn poissonized_expectations_match_samples() {
    let population =
        Fof::from_pairs([(1, 3000), (5, 1000), (20, 500), (100, 50), (200, 10)]).unwrap();
    for (q, model) in [
        (0.01, SamplingModel::Poisson),
        (0.01, SamplingModel::Binomial),
        (0.05, SamplingModel::Binomial),
        (0.3, SamplingModel::Binomial),
    ] {
        let (mean, se) = fof_means(&population, q, 60);
        let e = expected_sample_stats_with::<f64>(&population, q, model).unwrap();
        for (name, m, s, expected) in [("f1", mean[0], se[0], e.f1), ("d", mean[1], se[1], e.d)] {
            assert!(
                (m - expected).abs() <= 3.0 * s,
                "q={q} {model:?} {name}: mean {m} expected {expected} se {s}"
            );
        }
    }
}

#[test]
fn poisson_model_bias_is_small_at_low_rates() {
    // The sampler is Binomial; the Poissonized expectation is off by O(q).
    let population =
        Fof::from_pairs([(1, 3000), (5, 1000), (20, 500), (100, 50), (200, 10)]).unwrap();
    for q in [0.01, 0.05] {
        let p = expected_sample_stats_with::<f64>(&population, q, SamplingModel::Poisson).unwrap();
        let b = expected_sample_stats_with::<f64>(&population, q, SamplingModel::Binomial).unwrap();
        assert!((p.f1 / b.f1 - 1.0).abs() < q, "q={q}: {} vs {}", p.f1, b.f1);
        assert!((p.d / b.d - 1.0).abs() < q, "q={q}: {} vs {}", p.d, b.d);
    }
}

#[test]
fn partition_is_uniform() {
    // Upper 0.001 quantile of chi-square with 7 degrees of freedom.
    const CRITICAL: f64 = 24.322;
    let population = gen_fof_poisson(200_000, 10.0).unwrap();
    for seed in 0..30 {
        let sample =
            sample_population(&population, &SamplePlan::new(0.1, 8, seed).unwrap()).unwrap();
        let total = sample.total() as f64;
        let expected = total / 8.0;
        let chi2: f64 = sample
            .streams
            .iter()
            .map(|s| (s.len() as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < CRITICAL, "seed {seed}: chi2 {chi2}");
    }
}

#[test]
fn jackknife_numeric_cases() {
    // Reference values from a separate direct evaluation of the closed forms.
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let (d, f1, n, q, big_n) = (80.0, 30.0, 100.0, 0.1, 1000.0);
    assert!(close(
        jackknife_uj1(d, f1, n, q).unwrap(),
        109.58904109589041
    ));
    assert_eq!(
        gamma_sq_haas(109.58904109589041, 150.0, n, big_n).unwrap(),
        0.0
    );
    assert!(close(
        jackknife_uj2(d, f1, n, q, 150.0, big_n).unwrap(),
        109.58904109589041
    ));
    assert!(close(
        jackknife_sj2(d, f1, n, q, 150.0, big_n).unwrap(),
        129.52352582523508
    ));
    assert!(close(
        gamma_sq_haas(109.58904109589041, 600.0, n, big_n).unwrap(),
        4.58904109589041
    ));
    assert!(close(
        jackknife_uj2(d, f1, n, q, 600.0, big_n).unwrap(),
        288.4191901154135
    ));
    assert!(close(
        jackknife_sj2(d, f1, n, q, 600.0, big_n).unwrap(),
        428.8336479274694
    ));
}

#[test]
fn haas_skew_near_zero_for_uniform_population() {
    let population = Fof::from_pairs([(50, 2000)]).unwrap();
    let big_n = population.total() as f64;
    let mut total = 0.0;
    for seed in 0..50 {
        let sample =
            sample_population(&population, &SamplePlan::new(0.05, 1, seed).unwrap()).unwrap();
        let s = FreqDict::from_stream(sample.streams[0].iter().copied())
            .to_fof()
            .stats();
        total += gamma_sq_haas(2000.0, s.l2sq as f64, s.n as f64, big_n).unwrap();
    }
    assert!(total / 50.0 < 0.1, "mean skew {}", total / 50.0);
}

fn machine_dicts() -> impl Strategy<Value = Vec<Vec<(u64, u64)>>> {
    prop::collection::vec(prop::collection::vec((0u64..60, 1u64..=5), 0..25), 1..=9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_pipeline_matches_merged_dict(machines in machine_dicts()) {
        let params = SummaryParams::new(ExactL0::new(), CountSketch::new(5, 4096, 3).unwrap(), 1.0, RoleSet::ALL).unwrap();
        let dicts: Vec<FreqDict> = machines.iter().map(|m| m.iter().copied().collect()).collect();
        let sums: Vec<_> = dicts.iter().enumerate().map(|(j, d)| summarize_dict(d, &params, j as u64)).collect();
        let out = coordinate(&sums).unwrap();
        let s = FreqDict::merge(&dicts).to_fof().stats();
        prop_assert_eq!(out.f1, s.f1 as f64);
        prop_assert_eq!(out.d, s.d as f64);
        prop_assert_eq!(out.n, s.n);
        let r = out.resample.unwrap();
        prop_assert_eq!((r.d, r.f1), (out.d, out.f1));
        for sum in &sums {
            prop_assert!(sum.f1.elements().is_subset(sum.ndv.elements()));
        }
    }

    #[test]
    fn merge_count_within_bound(k in 1usize..200) {
        let tree = PmTree::build(&singleton_machines(k)).unwrap();
        let f1 = singleton_machines(k);
        let merges = tree.build_merges() + esti_f1(&tree, &f1).unwrap().merges;
        let p = tree.padded_machines() as f64;
        prop_assert!(merges as f64 <= 4.0 * p * p.log2() + 2.0 * p);
    }

    #[test]
    fn hll_pipeline_is_deterministic(machines in machine_dicts(), seed in any::<u64>()) {
        let params = SummaryParams::new(HyperLogLog::new(8, seed).unwrap(), CountSketch::new(3, 64, seed).unwrap(), 0.5, RoleSet::ALL).unwrap();
        let dicts: Vec<FreqDict> = machines.iter().map(|m| m.iter().copied().collect()).collect();
        let run = || {
            let sums: Vec<_> = dicts.iter().enumerate().map(|(j, d)| summarize_dict(d, &params, j as u64)).collect();
            coordinate(&sums).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn empty_sketch_merge_identity_through_wire() {
    let s = HyperLogLog::new(12, 9).unwrap();
    let mut a = s.empty_like();
    for x in 0..1000 {
        a.insert(x);
    }
    let b = HyperLogLog::decode(s.encode().as_slice()).unwrap();
    assert_eq!(a.merged(&b).unwrap(), a);
}
