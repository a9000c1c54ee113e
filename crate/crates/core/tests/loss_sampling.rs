use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tripemb::loss::*;
use tripemb::rng::{stream, StreamRng};
use tripemb::sampling::*;

mod common;
use common::{brute_force_order, normal};

fn scores(v: &[u8]) -> Vec<ExtentScore> {
    v.iter().map(|&s| ExtentScore::new(s).unwrap()).collect()
}

#[test]
fn order_matches_exhaustive_search_on_all_label_triples() {
    let mut count = 0;
    for a in 0..6u8 {
        for b in 0..6u8 {
            for c in 0..6u8 {
                let labels = scores(&[a, b, c]);
                let got = order_triplet([labels[0], labels[1], labels[2]]);
                assert_eq!(got, brute_force_order([a, b, c]), "labels ({a},{b},{c})");
                count += 1;
            }
        }
    }
    assert_eq!(count, 216);
}

#[test]
fn order_examples() {
    let o = |v: [u8; 3]| {
        let l = scores(&v);
        order_triplet([l[0], l[1], l[2]])
    };
    assert_eq!(o([0, 0, 0]), [0, 1, 2]);
    assert_eq!(o([0, 3, 1]), [2, 0, 1]);
    assert_eq!(o([2, 2, 5]), [0, 1, 2]);
}

#[test]
fn clip_values_are_exact() {
    let b = ClipBounds::DEFAULT;
    assert_eq!(clip(-0.5, &b), 0.0);
    assert_eq!(clip(0.2, &b), 1.0);
    assert!((clip(0.045, &b) - 0.5).abs() < 1e-15);
    assert_eq!(clip(-0.01, &b), 0.0);
    assert_eq!(clip(0.1, &b), 1.0);
}

#[test]
fn loss_grad_matches_finite_differences_at_interior_points() {
    let b = ClipBounds::DEFAULT;
    let mut rng = stream(10);
    let mut checked = 0;
    while checked < 200 {
        let dim = rng.gen_range(1..5);
        let v = |rng: &mut StreamRng| (0..dim).map(|_| rng.gen_range(-0.2..0.2)).collect::<Vec<f64>>();
        let (a, n, f) = (v(&mut rng), v(&mut rng), v(&mut rng));
        let m = triplet_margin(&a, &n, &f).unwrap();
        if m < b.lower() + 1e-3 || m > b.upper() - 1e-3 {
            continue;
        }
        checked += 1;
        let g = loss_grad(&a, &n, &f, &b).unwrap();
        let h = 1e-7;
        for (which, grad) in [&g.anchor, &g.near, &g.far].into_iter().enumerate() {
            for i in 0..dim {
                let shifted = |delta: f64| {
                    let mut x = [a.clone(), n.clone(), f.clone()];
                    x[which][i] += delta;
                    clipped_triplet_loss(&x[0], &x[1], &x[2], &b).unwrap()
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-3);
                assert!(rel < 1e-6, "{which}/{i}: {} vs {numeric}", grad[i]);
            }
        }
    }
}

#[test]
fn extent_far_choice_follows_label_distance_weights() {
    let labels = scores(&[2, 2, 0, 1, 3, 4, 5, 5, 0]);
    let anchor = 0;
    let mut rng = stream(11);
    let draws = 10_000;
    let mut counts = vec![0usize; labels.len()];
    for _ in 0..draws {
        let t = sample_extent_for_anchor(&labels, anchor, &mut rng).unwrap();
        assert_eq!((t.anchor, t.near), (0, 1));
        counts[t.far] += 1;
    }
    let weights: Vec<f64> = labels
        .iter()
        .map(|y| if y.value() == 2 { 0.0 } else { (y.value() as f64 - 2.0).abs() })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (c, w) in counts.iter().zip(&weights) {
        if *w == 0.0 {
            assert_eq!(*c, 0);
            continue;
        }
        let expected = draws as f64 * w / total;
        chi2 += (*c as f64 - expected).powi(2) / expected;
        cells += 1;
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn extent_two_far_candidates() {
    let labels = scores(&[0, 0, 1, 5]);
    let mut rng = stream(12);
    let n = 12_000;
    let to_3 = (0..n)
        .filter(|_| sample_extent_for_anchor(&labels, 0, &mut rng).unwrap().far == 3)
        .count();
    let p = to_3 as f64 / n as f64;
    let sigma = (5.0 / 36.0 / n as f64).sqrt();
    assert!((p - 5.0 / 6.0).abs() < 4.0 * sigma, "{p}");
    let only = sample_extent_for_anchor(&scores(&[0, 0, 3]), 0, &mut rng).unwrap();
    assert_eq!(only.indices(), [0, 1, 2]);
}

#[test]
fn uniform_membership_frequencies() {
    let labels = scores(&(0..100).map(|i| (i % 6) as u8).collect::<Vec<_>>());
    let mut rng = stream(13);
    let draws = 60_000;
    let mut counts = [0usize; 100];
    for _ in 0..draws {
        for i in sample_uniform(&labels, &mut rng).unwrap().indices() {
            counts[i] += 1;
        }
    }
    let p = 0.03;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma, "index {i}: {c}");
    }
    let three = scores(&[4, 0, 1]);
    assert_eq!(sample_uniform(&three, &mut rng).unwrap().indices(), [2, 1, 0]);
}

#[test]
fn random_embedding_violates_about_half() {
    let mut rng = stream(14);
    let labels: Vec<ExtentScore> = (0..500).map(|_| ExtentScore::new(rng.gen_range(0..6)).unwrap()).collect();
    let emb: Vec<Vec<f64>> = (0..500).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
    let triplets: Vec<Triplet> = (0..10_000).map(|_| sample_uniform(&labels, &mut rng).unwrap()).collect();
    let rate = violation_rate(&emb, &triplets).unwrap();
    assert!((rate - 50.0).abs() <= 2.0, "{rate}");
}

#[test]
fn triplet_files_round_trip() {
    let t = vec![Triplet::new(0, 1, 2).unwrap(), Triplet::new(5, 3, 9).unwrap()];
    let mut buf = Vec::new();
    write_triplets(&mut buf, "GE2", &t).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# 2 GE2\n0,1,2\n5,3,9\n");
    let (name, back) = read_triplets(buf.as_slice()).unwrap();
    assert_eq!((name.as_str(), back), ("GE2", t));
}

fn label_vec() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 3..40)
}

proptest! {
    #[test]
    fn oracle_order_satisfies_rater_inequalities(a in 0u8..6, b in 0u8..6, c in 0u8..6) {
        let l = scores(&[a, b, c]);
        let s = order_triplet([l[0], l[1], l[2]]);
        let y = [a, b, c];
        let d = |i: usize, j: usize| (y[i] as i32 - y[j] as i32).abs();
        prop_assert!(d(s[0], s[1]) <= d(s[0], s[2]));
        prop_assert!(d(s[0], s[1]) <= d(s[1], s[2]));
        prop_assert!(d(s[0], s[2]) <= d(s[1], s[2]));
    }

    #[test]
    fn margin_is_antisymmetric(v in prop::collection::vec(-10.0f64..10.0, 9)) {
        let (a, n, f) = (&v[0..3], &v[3..6], &v[6..9]);
        prop_assert_eq!(triplet_margin(a, n, f).unwrap(), -triplet_margin(a, f, n).unwrap());
    }

    #[test]
    fn clip_is_monotone_and_bounded(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let b = ClipBounds::DEFAULT;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(clip(lo, &b) <= clip(hi, &b));
        prop_assert!((0.0..=1.0).contains(&clip(x, &b)));
    }

    #[test]
    fn samplers_return_distinct_indices(labels in label_vec(), seed in any::<u64>()) {
        let labels = scores(&labels);
        let mut rng = stream(seed);
        let t = sample_uniform(&labels, &mut rng).unwrap();
        prop_assert!(Triplet::new(t.anchor, t.near, t.far).is_ok());
        if check_extent_feasible(&labels).is_ok() {
            let t = sample_extent(&labels, &mut rng).unwrap();
            prop_assert!(Triplet::new(t.anchor, t.near, t.far).is_ok());
            prop_assert_eq!(labels[t.anchor], labels[t.near]);
            prop_assert_ne!(labels[t.anchor], labels[t.far]);
        }
    }

    #[test]
    fn test_triplets_belong_to_their_scheme(labels in label_vec(), seed in any::<u64>()) {
        let labels = scores(&labels);
        let mut rng = stream(seed);
        for scheme in TestScheme::ALL {
            if let Ok(ts) = select_test_triplets(scheme, &labels, 50, &mut rng) {
                prop_assert_eq!(ts.len(), 50);
                for t in &ts {
                    prop_assert!(scheme.admits(&labels, t), "{} {:?}", scheme, t);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic(labels in label_vec(), seed in any::<u64>()) {
        let labels = scores(&labels);
        let draw = |seed: u64| {
            let mut r = stream(seed);
            (0..5).map(|_| sample_uniform(&labels, &mut r).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (draw(seed), draw(seed));
        prop_assert_eq!(a, b);
    }
}
