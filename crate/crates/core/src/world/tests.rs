use super::*;

fn base(seed: u64) -> WorldConfig {
    WorldConfig {
        num_cameras: 3,
        num_identities: 12,
        num_test_identities: 4,
        appearance_dim: 4,
        frame_dim: 8,
        mean_dwell: 5.0,
        dwell_std: None,
        sim_duration: 60.0,
        arrival_rate: 0.2,
        frag_rate: 2.0,
        noise_sigma: 0.05,
        scene_extent: [10.0, 5.0],
        frame_rate: 2.0,
        camera_shift: 0.5,
        offset_scale: 0.5,
        reappearance: false,
        reappear_prob: 0.0,
        min_cameras_per_identity: 2,
        seed,
    }
}

fn trajectory(n: usize) -> Trajectory {
    Trajectory {
        trajectory_id: 3,
        identity_id: 1,
        camera_id: 2,
        entry_time: 10.0,
        dwell: (n.max(1) - 1) as f64 * 0.5,
        path: (0..n)
            .map(|m| PathPoint {
                t: 10.0 + 0.5 * m as f64,
                pos: [1.0, 1.0],
            })
            .collect(),
    }
}

#[test]
fn minimal_world() {
    let config = WorldConfig {
        num_cameras: 2,
        num_identities: 2,
        num_test_identities: 0,
        arrival_rate: 0.0,
        seed: 7,
        ..base(7)
    };
    let w = generate_world(&config).unwrap();
    assert_eq!(w.cameras.len(), 2);
    assert_eq!(w.identities.len(), 2);
    for id in 0..2 {
        assert!(w.trajectories.iter().any(|t| t.identity_id == id));
    }
}

#[test]
fn rejects_degenerate_configs() {
    for bad in [
        WorldConfig {
            num_cameras: 1,
            ..base(0)
        },
        WorldConfig {
            num_identities: 1,
            num_test_identities: 0,
            ..base(0)
        },
        WorldConfig {
            frag_rate: 0.5,
            ..base(0)
        },
        WorldConfig {
            noise_sigma: -1.0,
            ..base(0)
        },
        WorldConfig {
            mean_dwell: 0.0,
            ..base(0)
        },
    ] {
        assert!(matches!(generate_world(&bad), Err(Error::Config(_))));
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_world(&base(11)).unwrap();
    let b = generate_world(&base(11)).unwrap();
    assert_eq!(a, b);
    let c = generate_world(&base(12)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn structural_invariants() {
    let config = base(5);
    let w = generate_world(&config).unwrap();
    for id in &w.identities {
        let norm: f64 = id.appearance.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    for cam in &w.cameras {
        assert!(has_full_column_rank(&cam.transform));
    }
    for t in &w.trajectories {
        assert!(t.dwell > 0.0 && t.dwell < 2.0 * config.mean_dwell);
        for p in &t.path {
            assert!(p.pos[0] >= 0.0 && p.pos[0] <= 10.0 && p.pos[1] >= 0.0 && p.pos[1] <= 5.0);
        }
    }
    for (i, tr) in w.tracklets.iter().enumerate() {
        assert_eq!(tr.tracklet_id, i as u64);
        assert!(tr.start_time <= tr.end_time);
        assert!(tr.num_frames() >= 1);
        assert_eq!(tr.frames.nrows(), tr.frame_times.len());
        let traj = &w.trajectories[tr.trajectory_id as usize];
        assert_eq!((traj.identity_id, traj.camera_id), (tr.identity_id, tr.camera_id));
    }
    // every identity is seen in at least two cameras
    for id in 0..config.num_identities as IdentityId {
        let cams: std::collections::BTreeSet<_> = w
            .trajectories
            .iter()
            .filter(|t| t.identity_id == id)
            .map(|t| t.camera_id)
            .collect();
        assert!(cams.len() >= 2, "identity {id}");
    }
    // tracklets of one trajectory never overlap
    for traj in &w.trajectories {
        let mut spans: Vec<(f64, f64)> = w
            .tracklets
            .iter()
            .filter(|t| t.trajectory_id == traj.trajectory_id)
            .map(|t| (t.start_time, t.end_time))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for p in spans.windows(2) {
            assert!(p[0].1 < p[1].0);
        }
    }
}

#[test]
fn no_reappearance_by_default() {
    let w = generate_world(&base(9)).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for t in &w.trajectories {
        assert!(seen.insert((t.identity_id, t.camera_id)));
    }
}

#[test]
fn train_and_test_identities_are_disjoint() {
    let w = generate_world(&base(3)).unwrap();
    assert!(w.train_tracklets().all(|t| t.identity_id < 8));
    assert!(w.test_tracklets().all(|t| t.identity_id >= 8));
    assert_eq!(w.train_tracklets().count() + w.test_tracklets().count(), w.tracklets.len());
}

#[test]
fn trajectory_count_is_poisson() {
    let (rate, duration) = (0.05, 400.0);
    let mut config = WorldConfig {
        num_cameras: 4,
        num_identities: 50,
        num_test_identities: 0,
        arrival_rate: rate,
        sim_duration: duration,
        min_cameras_per_identity: 0,
        ..base(0)
    };
    let mean = rate * duration * 4.0;
    for seed in 0..5 {
        config.seed = seed;
        let n = generate_world(&config).unwrap().trajectories.len() as f64;
        assert!((n - mean).abs() <= 4.0 * mean.sqrt(), "seed {seed}: {n} vs {mean}");
    }
}

#[test]
fn single_fragment_without_fragmentation() {
    let t = trajectory(9);
    let spans = fragment(&t, 1.0, 4);
    assert_eq!(spans.len(), 1);
    assert_eq!(spans[0].start_time, 10.0);
    assert_eq!(spans[0].end_time, 14.0);
}

#[test]
fn degenerate_trajectory_gives_one_single_frame_tracklet() {
    let spans = fragment(&trajectory(1), 5.0, 4);
    assert_eq!(spans.len(), 1);
    assert_eq!(spans[0].path.len(), 1);
}

#[test]
fn fragments_are_disjoint_and_inside_the_trajectory() {
    for seed in 0..200 {
        let t = trajectory(15);
        let spans = fragment(&t, 4.0, seed);
        assert!(!spans.is_empty());
        let frames: usize = spans.iter().map(|s| s.path.len()).sum();
        assert_eq!(frames, 15);
        for s in &spans {
            assert!(s.start_time >= t.entry_time && s.end_time <= t.exit_time());
            assert_eq!((s.identity_id, s.camera_id), (1, 2));
        }
        for p in spans.windows(2) {
            assert!(p[0].end_time < p[1].start_time);
        }
    }
}

#[test]
fn fragment_count_mean_matches_rate() {
    let t = trajectory(200);
    let total: usize = (0..10_000).map(|s| fragment(&t, 3.0, s).len()).sum();
    let mean = total as f64 / 10_000.0;
    assert!((2.9..=3.1).contains(&mean), "{mean}");
}

#[test]
fn noiseless_frames_are_exact() {
    let w = generate_world(&base(2)).unwrap();
    let cam = &w.cameras[0];
    let a = render_frames(&w.identities[0], cam, 5, 0.0, 1);
    let b = render_frames(&w.identities[1], cam, 5, 0.0, 2);
    for r in 1..5 {
        assert_eq!(a.row(r), a.row(0));
    }
    let a1 = ndarray::ArrayView1::from(&w.identities[0].appearance);
    let a2 = ndarray::ArrayView1::from(&w.identities[1].appearance);
    let expected = cam.transform.dot(&(&a1 - &a2));
    for (d, e) in (&a.row(0) - &b.row(0)).iter().zip(&expected) {
        // frames are stored at single precision
        assert!((d - e).abs() < 1e-6);
    }
}

#[test]
fn frame_noise_has_the_configured_std() {
    let config = WorldConfig {
        frame_dim: 16,
        ..base(1)
    };
    let w = generate_world(&config).unwrap();
    let frames = render_frames(&w.identities[0], &w.cameras[0], 10_000, 0.1, 77);
    for j in 0..16 {
        let col = frames.column(j);
        let m = col.mean().unwrap();
        let std = (col.mapv(|v| (v - m).powi(2)).sum() / 9_999.0).sqrt();
        assert!((0.095..=0.105).contains(&std), "coordinate {j}: {std}");
    }
}

#[test]
fn separable_below_the_noise_bound() {
    for seed in 0..3 {
        let mut config = WorldConfig {
            num_identities: 6,
            num_test_identities: 0,
            ..base(seed)
        };
        let bound = generate_world(&config).unwrap().separability_noise_bound();
        config.noise_sigma = 0.9 * bound;
        let w = generate_world(&config).unwrap();
        for cam in 1..=config.num_cameras {
            let tr: Vec<&TrackletRecord> = w.tracklets.iter().filter(|t| t.camera_id == cam).collect();
            let dist = |a: ArrayView1<f64>, b: ArrayView1<f64>| (&a - &b).mapv(|v| v * v).sum().sqrt();
            let mut within = 0.0f64;
            let mut between = f64::INFINITY;
            for a in &tr {
                for b in &tr {
                    for ra in a.frames.rows() {
                        for rb in b.frames.rows() {
                            let d = dist(ra, rb);
                            if a.identity_id == b.identity_id {
                                within = within.max(d);
                            } else {
                                between = between.min(d);
                            }
                        }
                    }
                }
            }
            assert!(within < between, "seed {seed} camera {cam}: {within} vs {between}");
        }
    }
}

#[test]
fn world_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("world.jsonl");
    let w = generate_world(&base(4)).unwrap();
    save_world(&w, &path).unwrap();
    let back = load_world(&path).unwrap();
    assert_eq!(back, w);
}

#[test]
fn world_file_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("world.jsonl");
    save_world(&generate_world(&base(4)).unwrap(), &path).unwrap();
    let bin = path.with_extension("bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(load_world(&path), Err(Error::HashMismatch { .. })));
    std::fs::remove_file(&bin).unwrap();
    assert!(matches!(load_world(&path), Err(Error::MissingFile(_))));
}
