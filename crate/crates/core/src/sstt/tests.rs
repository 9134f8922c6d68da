use super::*;
use crate::world::{generate_world, WorldConfig};
use ndarray::Array2;
use rand::Rng;

fn record(id: TrackletId, camera: CameraId, identity: IdentityId, start: f64, end: f64, pos: [f64; 2]) -> TrackletRecord {
    TrackletRecord {
        tracklet_id: id,
        trajectory_id: id,
        camera_id: camera,
        identity_id: identity,
        start_time: start,
        end_time: end,
        frame_times: vec![start, end],
        positions: vec![pos, pos],
        frames: Array2::zeros((2, 2)),
    }
}

fn world_config(seed: u64) -> WorldConfig {
    WorldConfig {
        num_cameras: 3,
        num_identities: 30,
        num_test_identities: 0,
        appearance_dim: 4,
        frame_dim: 8,
        mean_dwell: 8.0,
        dwell_std: None,
        sim_duration: 150.0,
        arrival_rate: 0.15,
        frag_rate: 2.0,
        noise_sigma: 0.1,
        scene_extent: [10.0, 10.0],
        frame_rate: 2.0,
        camera_shift: 0.5,
        offset_scale: 0.5,
        reappearance: false,
        reappear_prob: 0.0,
        min_cameras_per_identity: 1,
        seed,
    }
}

fn gap(p: f64) -> SsttConfig {
    SsttConfig {
        temporal_gap: p,
        spatial_min_dist: 0.0,
        start_offset: None,
    }
}

#[test]
fn temporal_sample_examples() {
    let a = record(1, 1, 0, 0.0, 5.0, [0.0; 2]);
    let inst = temporal_sample(&[vec![&a]], 10.0, 0.0);
    assert_eq!(inst.len(), 1);
    assert_eq!(inst[0].time, 0.0);
    assert_eq!(inst[0].active, vec![vec![0]]);

    let b = record(2, 1, 0, 3.0, 4.0, [0.0; 2]);
    let inst = temporal_sample(&[vec![&b]], 10.0, 0.0);
    assert!(inst.iter().all(|i| i.active[0].is_empty()));

    assert!(temporal_sample(&[vec![]], 10.0, 0.0).is_empty());
}

#[test]
fn temporal_sample_matches_brute_force() {
    let mut rng = crate::seed::rng(3, "sstt-tracklets", 0);
    let tracklets: Vec<TrackletRecord> = (0..100)
        .map(|i| {
            let s = rng.random_range(0.0..200.0);
            record(i, 1, i as u32, s, s + rng.random_range(0.0..15.0), [0.0; 2])
        })
        .collect();
    let refs: Vec<&TrackletRecord> = tracklets.iter().collect();
    let inst = temporal_sample(&[refs], 7.0, 1.5);
    for i in &inst {
        assert!((i.time - (1.5 + i.index as f64 * 7.0)).abs() < 1e-12);
        let expected: Vec<usize> = (0..100)
            .filter(|&k| tracklets[k].start_time <= i.time && i.time <= tracklets[k].end_time)
            .collect();
        assert_eq!(i.active[0], expected);
    }
}

#[test]
fn spatial_filter_examples() {
    let a = record(1, 1, 0, 0.0, 6.0, [0.0, 0.0]);
    let b = record(2, 1, 1, 1.0, 9.0, [1.0, 0.0]);
    let input = vec![&a, &b];
    assert_eq!(spatial_filter(&input, 2.0, 0.0), input);

    let kept = spatial_filter(&input, 2.0, 2.0);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].tracklet_id, 2, "longer tracklet wins");

    let c = record(3, 1, 2, 1.0, 7.0, [1.0, 0.0]);
    let kept = spatial_filter(&[&c, &a], 2.0, 2.0);
    assert_eq!(kept[0].tracklet_id, 1, "equal length: earlier start wins");
}

/// The unique subset that the greedy rule can produce: walking the
/// retention order, a tracklet is in the set exactly when it is far enough
/// from every earlier member.
fn greedy_oracle(tracklets: &[TrackletRecord], d_min: f64) -> Vec<TrackletId> {
    let n = tracklets.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| retention_order(&tracklets[a], &tracklets[b]));
    let far = |a: usize, b: usize| {
        let (p, q) = (tracklets[a].positions[0], tracklets[b].positions[0]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= d_min
    };
    let mut found = Vec::new();
    for mask in 0u32..(1 << n) {
        let member = |i: usize| mask & (1 << i) != 0;
        let consistent = order.iter().enumerate().all(|(pos, &t)| {
            let compatible = order[..pos].iter().filter(|&&e| member(e)).all(|&e| far(t, e));
            member(t) == compatible
        });
        if consistent {
            found.push(mask);
        }
    }
    assert_eq!(found.len(), 1);
    let mut ids: Vec<TrackletId> = (0..n)
        .filter(|&i| found[0] & (1 << i) != 0)
        .map(|i| tracklets[i].tracklet_id)
        .collect();
    ids.sort_unstable();
    ids
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn spatial_filter_matches_greedy_oracle_for_every_ordering() {
    let mut rng = crate::seed::rng(8, "layout", 0);
    let tracklets: Vec<TrackletRecord> = (0..8)
        .map(|i| {
            let start = rng.random_range(0.0..2.0f64).floor();
            let len = rng.random_range(3.0..6.0f64).floor();
            let pos = [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)];
            record(i, 1, i as u32, start, start + len, pos)
        })
        .collect();
    let oracle = greedy_oracle(&tracklets, 3.0);
    for perm in permutations(8) {
        let input: Vec<&TrackletRecord> = perm.iter().map(|&i| &tracklets[i]).collect();
        let mut kept: Vec<TrackletId> = spatial_filter(&input, 2.5, 3.0)
            .iter()
            .map(|t| t.tracklet_id)
            .collect();
        kept.sort_unstable();
        assert_eq!(kept, oracle);
    }
}

#[test]
fn assign_labels_examples() {
    let a = record(1, 1, 0, 0.0, 5.0, [0.0; 2]);
    let b = record(2, 1, 1, 0.0, 5.0, [0.0; 2]);
    let c = record(3, 1, 2, 0.0, 5.0, [0.0; 2]);
    let d = record(4, 2, 0, 0.0, 5.0, [0.0; 2]);
    let ds = assign_labels(&[vec![&a, &b, &c, &a], vec![&d]]);
    let labels: Vec<(TrackletId, u32)> = ds.cameras[0]
        .iter()
        .map(|l| (l.tracklet.tracklet_id, l.label))
        .collect();
    assert_eq!(labels, vec![(1, 1), (2, 2), (3, 3)]);
    assert_eq!(ds.label_counts(), vec![3, 1]);
    assert_eq!(ds.cameras[1][0].label, 1);
    ds.validate().unwrap();
}

#[test]
fn tracklet_across_two_instants_gets_one_label() {
    let long = record(1, 1, 0, 0.0, 25.0, [0.0; 2]);
    let out = sstt_label_tracklets([&long], 1, &gap(10.0)).unwrap();
    assert_eq!(out.num_instants, 3);
    assert_eq!(out.dataset.label_counts(), vec![1]);
}

#[test]
fn zero_duplication_when_dwell_below_gap() {
    for seed in 0..6 {
        let config = world_config(seed);
        let w = generate_world(&config).unwrap();
        assert!(w.tracklets.len() <= 400);
        let p = config.max_dwell() * 1.01;
        let out = sstt_label(&w, &gap(p)).unwrap();
        let gt = w.ground_truth();
        assert_eq!(duplication_rate(&out.dataset, &gt).unwrap().overall, 0.0);
        out.dataset.validate().unwrap();
        // brute force: one sampled tracklet per identity per camera
        for cam in &out.dataset.cameras {
            let mut ids = BTreeSet::new();
            for l in cam {
                assert!(ids.insert(l.tracklet.identity_id));
            }
        }
    }
}

#[test]
fn co_occurring_tracklets_have_distinct_identities() {
    let w = generate_world(&world_config(2)).unwrap();
    let mut by_camera: Vec<Vec<&TrackletRecord>> = vec![Vec::new(); 3];
    for t in w.train_tracklets() {
        by_camera[t.camera_id - 1].push(t);
    }
    for inst in temporal_sample(&by_camera, 5.0, 0.0) {
        for (c, active) in inst.active.iter().enumerate() {
            let ids: BTreeSet<IdentityId> = active.iter().map(|&k| by_camera[c][k].identity_id).collect();
            assert_eq!(ids.len(), active.len());
        }
    }
}

#[test]
fn duplication_is_non_increasing_in_gap_with_reappearance() {
    let q = 8.0;
    let gaps = [q / 2.0, q, 2.0 * q, 4.0 * q];
    let mut means = [0.0; 4];
    for seed in 0..6 {
        let config = WorldConfig {
            reappearance: true,
            reappear_prob: 0.5,
            sim_duration: 300.0,
            ..world_config(seed)
        };
        let w = generate_world(&config).unwrap();
        let gt = w.ground_truth();
        for (m, &p) in means.iter_mut().zip(&gaps) {
            let out = sstt_label(&w, &gap(p)).unwrap();
            *m += duplication_rate(&out.dataset, &gt).unwrap().overall / 6.0;
        }
    }
    assert!(means[0] > 0.0, "{means:?}");
    for pair in means.windows(2) {
        assert!(pair[1] <= pair[0], "{means:?}");
    }
}

#[test]
fn duplication_rate_examples() {
    let mut tracklets = Vec::new();
    for i in 0..10u32 {
        tracklets.push(record(i as u64, 1, i, 0.0, 1.0, [0.0; 2]));
    }
    tracklets.push(record(10, 1, 3, 0.0, 1.0, [0.0; 2]));
    tracklets.push(record(11, 1, 7, 0.0, 1.0, [0.0; 2]));
    let gt: GroundTruth = tracklets.iter().map(|t| (t.tracklet_id, t.identity_id)).collect();
    let single = assign_labels(&[tracklets[..10].iter().collect()]);
    assert_eq!(duplication_rate(&single, &gt).unwrap().overall, 0.0);
    let double = assign_labels(&[tracklets.iter().collect()]);
    assert!((duplication_rate(&double, &gt).unwrap().overall - 0.2).abs() < 1e-15);

    let mut missing = gt.clone();
    missing.remove(&4);
    assert!(matches!(
        duplication_rate(&single, &missing),
        Err(Error::MissingGroundTruth(4))
    ));
}

#[test]
fn injection_counts() {
    // ten identities, each with one labelled and one spare tracklet
    let mut labelled = Vec::new();
    let mut spare = Vec::new();
    for i in 0..10u32 {
        labelled.push(record(i as u64, 1, i, 0.0, 1.0, [0.0; 2]));
        if i != 4 {
            spare.push(record(100 + i as u64, 1, i, 5.0, 6.0, [0.0; 2]));
        }
    }
    let ds = assign_labels(&[labelled.iter().collect()]);
    let pool: Vec<&TrackletRecord> = labelled.iter().chain(&spare).collect();
    let gt: GroundTruth = pool.iter().map(|t| (t.tracklet_id, t.identity_id)).collect();

    let (same, report) = inject_duplication(&ds, 0.0, pool.iter().copied(), 1).unwrap();
    assert_eq!(same, ds);
    assert_eq!(report.added, vec![0]);

    for seed in 0..20 {
        let (out, report) = inject_duplication(&ds, 0.5, pool.iter().copied(), seed).unwrap();
        assert_eq!(report.selected, vec![5]);
        assert_eq!(report.added[0] + report.shortfall[0], 5);
        assert_eq!(out.label_count(1), 10 + report.added[0]);
        out.validate().unwrap();
        let measured = duplication_rate(&out, &gt).unwrap().overall;
        assert!((measured - report.added[0] as f64 / 10.0).abs() < 1e-15);
    }
    assert!(inject_duplication(&ds, 1.5, pool.iter().copied(), 0).is_err());
}

#[test]
fn injected_rate_on_a_world() {
    let w = generate_world(&WorldConfig {
        frag_rate: 4.0,
        ..world_config(5)
    })
    .unwrap();
    let gt = w.ground_truth();
    let base = sstt_label(&w, &gap(20.0)).unwrap().dataset;
    let (out, report) = inject_duplication(&base, 0.2, w.train_tracklets(), 9).unwrap();
    let measured = duplication_rate(&out, &gt).unwrap();
    for (c, rate) in measured.per_camera.iter().enumerate() {
        let ids = base.cameras[c].len() as f64;
        let target = report.selected[c] as f64 / ids;
        let short = report.shortfall[c] as f64 / ids;
        assert!(*rate <= target + 1e-12 && *rate >= target - short - 1e-12);
        assert!(target >= 0.2 && target < 0.2 + 1.0 / ids);
    }
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world(&world_config(4)).unwrap();
    let world_path = dir.path().join("world.jsonl");
    crate::world::save_world(&world, &world_path).unwrap();
    let ds = sstt_label(&world, &gap(12.0)).unwrap().dataset;
    let path = dir.path().join("dataset.json");
    save_dataset(&ds, Some(&gap(12.0)), &world_path, &path).unwrap();
    let (back, _, file) = load_dataset(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(file.world, "world.jsonl");

    // the recorded hash pins the world file
    let mut text = std::fs::read_to_string(&world_path).unwrap();
    text.push('\n');
    std::fs::write(&world_path, text).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::HashMismatch { .. })));
}

#[test]
fn dataset_ids_must_match_their_camera() {
    let world = generate_world(&world_config(5)).unwrap();
    let ds = sstt_label(&world, &gap(12.0)).unwrap().dataset;
    let mut file = DatasetFile::new(std::path::Path::new("w"), String::new(), None, &ds);
    assert_eq!(resolve_dataset(&file, &world).unwrap(), ds);
    file.cameras.swap(0, 1);
    assert!(matches!(resolve_dataset(&file, &world), Err(Error::InvalidInput(_))));
}
