mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagsift::annotate::{average_precision, evaluate_run, mean, rank, KnnIndex, ScoreTable};
use tagsift::cluster::ap::{affinity_propagation, ApConfig, Preference};
use tagsift::cluster::kmeans::kmeans;
use tagsift::corpus::{Corpus, ImageRecord, Split};
use tagsift::store::FeatureStore;

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect()
}

#[test]
fn ap_reaches_exhaustive_optimum_on_two_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pts = Vec::new();
    for c in [[0.0, 0.0], [5.0, 5.0]] {
        for _ in 0..6 {
            pts.push(vec![
                c[0] + rng.random_range(-0.3..0.3),
                c[1] + rng.random_range(-0.3..0.3),
            ]);
        }
    }
    let pref = common::median_preference(&pts);
    let res = affinity_propagation(&pts, &ApConfig::default()).unwrap();
    assert_eq!(res.exemplars.len(), 2);
    let got = common::exemplar_objective(&pts, &res.exemplars, pref);
    assert!((got - common::best_objective(&pts, pref)).abs() < 1e-6);
    // Each blob's points share one exemplar.
    assert!(res.assignment[..6].iter().all(|&e| e == res.assignment[0]));
    assert!(res.assignment[6..].iter().all(|&e| e == res.assignment[6]));
    assert_ne!(res.assignment[0], res.assignment[6]);
}

#[test]
fn ap_small_fixtures_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut matched = 0;
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let pts = random_points(&mut rng, n, 2);
        let pref = common::median_preference(&pts);
        let res = affinity_propagation(&pts, &ApConfig::default()).unwrap();
        let got = common::exemplar_objective(&pts, &res.exemplars, pref);
        let best = common::best_objective(&pts, pref);
        assert!(got <= best + 1e-9, "objective above the optimum");
        matched += usize::from((got - best).abs() < 1e-6);
    }
    assert!(matched >= 18, "{matched}/20 fixtures at the optimum");
}

#[test]
fn ap_extreme_preferences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = random_points(&mut rng, 10, 3);
    let low = ApConfig {
        preference: Preference::Value(-1e6),
        ..Default::default()
    };
    assert_eq!(affinity_propagation(&pts, &low).unwrap().exemplars.len(), 1);
    let high = ApConfig {
        preference: Preference::Value(0.0),
        ..Default::default()
    };
    assert_eq!(affinity_propagation(&pts, &high).unwrap().exemplars.len(), 10);
}

#[test]
fn kmeans_finds_the_exhaustive_optimum_on_three_triples() {
    let pts: Vec<Vec<f64>> = [
        [0.0, 0.0],
        [0.1, 0.0],
        [0.0, 0.1],
        [5.0, 5.0],
        [5.1, 5.0],
        [5.0, 5.1],
        [0.0, 9.0],
        [0.1, 9.0],
        [0.0, 9.1],
    ]
    .iter()
    .map(|p| p.to_vec())
    .collect();
    let best = common::best_partition_inertia(&pts, 3);
    for seed in 0..5 {
        let res = kmeans(&pts, 3, seed).unwrap();
        let mut groups = res.clusters.clone();
        groups.sort();
        assert_eq!(groups, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
        assert!((res.inertia.last().unwrap() - best).abs() < 1e-9);
    }
}

#[test]
fn kmeans_never_beats_the_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let pts = random_points(&mut rng, 7, 2);
        let res = kmeans(&pts, 3, 1).unwrap();
        let last = *res.inertia.last().unwrap();
        assert!(last + 1e-9 >= common::best_partition_inertia(&pts, res.clusters.len()));
    }
}

fn store(points: &[(String, Vec<f64>)]) -> FeatureStore {
    let mut s = FeatureStore::new(points[0].1.len());
    for (id, v) in points {
        s.push(id, id, v).unwrap();
    }
    s
}

#[test]
fn knn_ten_point_fixture() {
    // Ten training points on a jittered spiral; three of the five nearest to
    // the query are positive.
    let train: Vec<(String, Vec<f64>, bool)> = (0..10)
        .map(|i| {
            let t = i as f64 * 0.7;
            let pos = [0, 2, 4, 7].contains(&i);
            (format!("t{i}"), vec![t.cos() * (1.0 + t), t.sin() * (1.0 + t)], pos)
        })
        .collect();
    let query = vec![0.9, 0.2];
    let nearest = common::brute_knn(&query, &train, 5);
    let expected_pos = nearest
        .iter()
        .filter(|id| train.iter().any(|(t, _, p)| t == *id && *p))
        .count();
    assert_eq!(expected_pos, 3, "fixture should hold 3 positives among the 5 nearest");

    let mut all: Vec<(String, Vec<f64>)> = train.iter().map(|(id, v, _)| (id.clone(), v.clone())).collect();
    all.push(("q".into(), query.clone()));
    let globals = store(&all);
    let pos: Vec<String> = train.iter().filter(|t| t.2).map(|t| t.0.clone()).collect();
    let neg: Vec<String> = train.iter().filter(|t| !t.2).map(|t| t.0.clone()).collect();
    let index = KnnIndex::build(&pos, &neg, &globals).unwrap();
    let got: Vec<&str> = index.neighbors(&query, 5).into_iter().map(|n| n.0).collect();
    assert_eq!(got, nearest);
    assert!((index.score(&query, 5).unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn knn_matches_brute_force_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let train: Vec<(String, Vec<f64>, bool)> = (0..30)
            .map(|i| {
                (
                    format!("t{i:02}"),
                    vec![rng.random_range(0..4) as f64, rng.random_range(0..4) as f64],
                    rng.random_bool(0.4),
                )
            })
            .collect();
        let all: Vec<(String, Vec<f64>)> = train.iter().map(|(id, v, _)| (id.clone(), v.clone())).collect();
        let globals = store(&all);
        let pos: Vec<String> = train.iter().filter(|t| t.2).map(|t| t.0.clone()).collect();
        let neg: Vec<String> = train.iter().filter(|t| !t.2).map(|t| t.0.clone()).collect();
        let index = KnnIndex::build(&pos, &neg, &globals).unwrap();
        let q = vec![rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)];
        let k = rng.random_range(1..=12);
        // Integer grid points force many distance ties, exercising the id order.
        let expect = common::brute_knn(&q, &train, k);
        let got: Vec<&str> = index.neighbors(&q, k).into_iter().map(|n| n.0).collect();
        assert_eq!(got, expect);
    }
}

#[test]
fn average_precision_examples() {
    let s = |v: &[(&str, f64)]| v.iter().map(|(i, x)| (i.to_string(), *x)).collect::<Vec<_>>();
    let rel = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
    let scores = s(&[("a", 0.9), ("b", 0.5), ("c", 0.1)]);
    assert!((average_precision(&scores, &rel(&["a", "c"])) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    assert_eq!(average_precision(&scores, &rel(&["a", "b"])), 1.0);
    assert_eq!(average_precision(&scores, &rel(&[])), 0.0);
}

fn scores_strategy() -> impl Strategy<Value = (Vec<(String, f64)>, BTreeSet<String>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..6, n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(s, r)| {
                let scores: Vec<(String, f64)> = s
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (format!("i{i:02}"), f64::from(x) / 5.0))
                    .collect();
                let relevant = (0..n).filter(|&i| r[i]).map(|i| format!("i{i:02}")).collect();
                (scores, relevant)
            })
    })
}

proptest! {
    #[test]
    fn ap_matches_brute_force((scores, relevant) in scores_strategy()) {
        let expect = common::brute_average_precision(&common::selection_rank(&scores), &relevant);
        prop_assert!((average_precision(&scores, &relevant) - expect).abs() < 1e-12);
    }

    #[test]
    fn ap_invariant_under_monotone_transforms((scores, relevant) in scores_strategy(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let transformed: Vec<(String, f64)> = scores.iter().map(|(i, s)| (i.clone(), (a * s + b).exp())).collect();
        prop_assert_eq!(rank(&scores), rank(&transformed));
        prop_assert_eq!(average_precision(&scores, &relevant), average_precision(&transformed, &relevant));
    }

    #[test]
    fn ap_is_a_probability((scores, relevant) in scores_strategy()) {
        let ap = average_precision(&scores, &relevant);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn knn_scores_are_multiples_of_one_over_k(k in 1usize..8, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(String, Vec<f64>)> = (0..15).map(|i| (format!("p{i:02}"), vec![rng.random_range(0.0..1.0)])).collect();
        let globals = store(&pts);
        let (pos, neg): (Vec<_>, Vec<_>) = pts.iter().map(|p| p.0.clone()).partition(|_| rng.random_bool(0.5));
        let index = KnnIndex::build(&pos, &neg, &globals).unwrap();
        let s = index.score(&[rng.random_range(0.0..1.0)], k).unwrap();
        let scaled = s * k as f64;
        prop_assert!((scaled - scaled.round()).abs() < 1e-9);
    }
}

fn labelled_corpus() -> Corpus {
    let rec = |id: &str, truth: &[&str]| ImageRecord {
        image_id: id.into(),
        path: format!("{id}.png").into(),
        tags: BTreeSet::new(),
        split: Split::Testing,
        truth_labels: Some(truth.iter().map(|s| s.to_string()).collect()),
    };
    Corpus::new(
        vec![
            rec("a", &["sky"]),
            rec("b", &["sky", "sea"]),
            rec("c", &["sea"]),
            rec("d", &[]),
        ],
        "",
    )
    .unwrap()
}

#[test]
fn map_is_the_mean_of_defined_aps() {
    let c = labelled_corpus();
    let s = |v: &[(&str, f64)]| v.iter().map(|(i, x)| (i.to_string(), *x)).collect::<Vec<_>>();
    let mut table = ScoreTable::new();
    table.insert("sky".into(), s(&[("a", 0.9), ("b", 0.1), ("c", 0.5), ("d", 0.0)]));
    table.insert("sea".into(), s(&[("a", 0.0), ("b", 0.8), ("c", 0.7), ("d", 0.1)]));
    table.insert("fog".into(), s(&[("a", 0.3), ("b", 0.2), ("c", 0.1), ("d", 0.0)]));
    let eval = evaluate_run(&table, &c);
    let sky = (1.0 + 2.0 / 3.0) / 2.0;
    assert!((eval.per_label["sky"].unwrap() - sky).abs() < 1e-12);
    assert_eq!(eval.per_label["sea"], Some(1.0));
    assert_eq!(eval.per_label["fog"], None);
    assert!((eval.map.unwrap() - (sky + 1.0) / 2.0).abs() < 1e-12);
    assert!((mean([0.4, 0.4, 0.4]).unwrap() - 0.4).abs() < 1e-15);
}
