use super::*;
use crate::model::{init, ModelConfig};
use crate::seed;
use ndarray::array;
use proptest::prelude::*;
use rand::Rng;

/// Rank by explicit distance comparison against every other item.
fn brute_rank(q: &[f64], gallery: &[Vec<f64>]) -> Vec<usize> {
    let d = |g: &Vec<f64>| g.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let mut out = Vec::new();
    let mut left: Vec<usize> = (0..gallery.len()).collect();
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if d(&gallery[left[k]]) < d(&gallery[left[best]]) {
                best = k;
            }
        }
        out.push(left.remove(best));
    }
    out
}

fn brute_cmc(rankings: &[Vec<usize>], relevance: &[Vec<bool>], k: usize) -> f64 {
    let valid: Vec<usize> = (0..rankings.len()).filter(|&q| relevance[q].contains(&true)).collect();
    let hits = valid
        .iter()
        .filter(|&&q| rankings[q].iter().take(k).any(|&g| relevance[q][g]))
        .count();
    hits as f64 / valid.len() as f64
}

fn brute_ap(ranking: &[usize], relevance: &[bool]) -> f64 {
    let total = relevance.iter().filter(|&&r| r).count() as f64;
    let mut sum = 0.0;
    for k in 1..=ranking.len() {
        if relevance[ranking[k - 1]] {
            let precision = ranking[..k].iter().filter(|&&g| relevance[g]).count() as f64 / k as f64;
            sum += precision;
        }
    }
    sum / total
}

#[test]
fn rank_gallery_examples() {
    let q = array![0.0, 0.0];
    let g = array![[3.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
    assert_eq!(rank_gallery(q.view(), g.view()).unwrap(), vec![1, 2, 0]);
    let tie = array![[1.0, 0.0], [0.0, 1.0]];
    assert_eq!(rank_gallery(q.view(), tie.view()).unwrap(), vec![0, 1]);
    let empty = Array2::<f64>::zeros((0, 2));
    assert!(matches!(rank_gallery(q.view(), empty.view()), Err(Error::InvalidInput(_))));
}

#[test]
fn cmc_and_map_examples() {
    // relevant item first, second, never
    let rankings = vec![vec![0, 1, 2], vec![2, 0, 1], vec![0, 1]];
    let relevance = vec![
        vec![true, false, false],
        vec![true, false, false],
        vec![false, false],
    ];
    let c = cmc(&rankings, &relevance).unwrap();
    assert_eq!(c, vec![0.5, 1.0, 1.0]);
    let m = mean_average_precision(&rankings, &relevance).unwrap();
    assert!((m - 0.75).abs() < 1e-15);

    let ap = average_precision(&[1, 0, 2, 3], &[true, true, false, true]);
    assert!((ap - (1.0 + 1.0 + 0.75) / 3.0).abs() < 1e-15);

    assert!(cmc(&[vec![0]], &[vec![false]]).is_err());
}

#[test]
fn metrics_match_brute_force_oracles() {
    let mut rng = seed::rng(17, "eval-oracle", 0);
    for _ in 0..50 {
        let size = rng.random_range(1..=20usize);
        let queries = rng.random_range(1..=6usize);
        let mut rankings = Vec::new();
        let mut relevance = Vec::new();
        for _ in 0..queries {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gallery: Vec<Vec<f64>> = (0..size)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let g = Array2::from_shape_fn((size, 3), |(i, j)| gallery[i][j]);
            let r = rank_gallery(ArrayView1::from(&q), g.view()).unwrap();
            assert_eq!(r, brute_rank(&q, &gallery));
            let mut rel: Vec<bool> = (0..size).map(|_| rng.random_bool(0.3)).collect();
            rel[rng.random_range(0..size)] = true;
            rankings.push(r);
            relevance.push(rel);
        }
        let curve = cmc(&rankings, &relevance).unwrap();
        for (k, v) in curve.iter().enumerate() {
            assert!((v - brute_cmc(&rankings, &relevance, k + 1)).abs() < 1e-12);
        }
        let oracle = (0..queries)
            .map(|q| brute_ap(&rankings[q], &relevance[q]))
            .sum::<f64>()
            / queries as f64;
        let m = mean_average_precision(&rankings, &relevance).unwrap();
        assert!((m - oracle).abs() < 1e-12);
    }
}

fn protocol() -> RetrievalProtocol {
    let items = vec![
        EvalItem {
            camera: 1,
            identity: 5,
            tracklet_id: 0,
        },
        EvalItem {
            camera: 1,
            identity: 6,
            tracklet_id: 1,
        },
        EvalItem {
            camera: 2,
            identity: 5,
            tracklet_id: 2,
        },
        EvalItem {
            camera: 2,
            identity: 7,
            tracklet_id: 3,
        },
    ];
    let emb = array![[0.0, 0.0], [0.1, 0.0], [0.5, 0.0], [5.0, 5.0]];
    RetrievalProtocol::new(items, emb).unwrap()
}

#[test]
fn cross_camera_protocol() {
    let p = protocol();
    // identity 6 and 7 appear in one camera only
    assert_eq!(p.queries(), vec![0, 2]);
    for q in 0..4 {
        assert!(p.gallery(q).iter().all(|&g| p.items[g].camera != p.items[q].camera));
    }
    let r = p.evaluate(EvalMeta::default()).unwrap();
    assert_eq!(r.num_queries, 2);
    // query 2 (camera 2) ranks item 1 (id 6) before item 0 (id 5)
    assert_eq!(r.cmc, vec![0.5, 1.0]);
    assert!((r.map - 0.75).abs() < 1e-15);
    assert!((r.chance_rank1 - 0.5).abs() < 1e-15);
    assert_eq!(r.rank(20), 1.0);
}

#[test]
fn evaluation_is_read_only_and_deterministic() {
    let cfg = crate::world::WorldConfig {
        num_cameras: 2,
        num_identities: 10,
        num_test_identities: 5,
        appearance_dim: 3,
        frame_dim: 6,
        mean_dwell: 4.0,
        dwell_std: None,
        sim_duration: 40.0,
        arrival_rate: 0.2,
        frag_rate: 2.0,
        noise_sigma: 0.1,
        scene_extent: [5.0, 5.0],
        frame_rate: 2.0,
        camera_shift: 0.3,
        offset_scale: 0.3,
        reappearance: false,
        reappear_prob: 0.0,
        min_cameras_per_identity: 2,
        seed: 1,
    };
    let w = crate::world::generate_world(&cfg).unwrap();
    let params = init(
        &ModelConfig {
            input_dim: 6,
            hidden_dims: vec![4],
            feature_dim: 3,
            per_camera_classes: vec![2, 2],
            activation: Default::default(),
            bounded_features: false,
        },
        3,
    )
    .unwrap();
    let before = crate::model::serialize(&params);
    let a = evaluate(&params, w.test_tracklets(), EvalMeta::default()).unwrap();
    let b = evaluate(&params, w.test_tracklets(), EvalMeta::default()).unwrap();
    assert_eq!(crate::model::serialize(&params), before);
    assert_eq!(a, b);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    write_results_csv(&mut csv_a, "mode", &[("taudl".into(), Some(1), &a)]).unwrap();
    write_results_csv(&mut csv_b, "mode", &[("taudl".into(), Some(1), &b)]).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("mode,seed,rank1,rank5,rank10,rank20,map\ntaudl,1,"));
}

proptest! {
    #[test]
    fn cmc_is_monotone_and_bounded(
        rel in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 1..20), 1..6),
        seed in any::<u64>(),
    ) {
        let mut rng = seed::rng(seed, "perm", 0);
        let mut relevance = rel;
        for r in relevance.iter_mut() {
            let i = rng.random_range(0..r.len());
            r[i] = true;
        }
        let rankings: Vec<Vec<usize>> = relevance
            .iter()
            .map(|r| {
                let mut p: Vec<usize> = (0..r.len()).collect();
                rand::seq::SliceRandom::shuffle(p.as_mut_slice(), &mut rng);
                p
            })
            .collect();
        let c = cmc(&rankings, &relevance).unwrap();
        for w in c.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!((c[c.len() - 1] - 1.0).abs() < 1e-12);
        let m = mean_average_precision(&rankings, &relevance).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
    }
}
