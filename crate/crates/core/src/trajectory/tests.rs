use super::*;
use approx::assert_relative_eq;
use nalgebra::{Isometry3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sim3(rng: &mut ChaCha8Rng) -> Sim3 {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let rotation = UnitQuaternion::from_scaled_axis(axis * 2.0);
    let t = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
    Sim3::new(rng.random_range(0.5..2.0), rotation, t).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect()
}

fn trajectory(positions: &[Vector3<f64>]) -> Trajectory {
    Trajectory::new(
        positions
            .iter()
            .enumerate()
            .map(|(i, p)| TimedPose {
                timestamp: i as f64 * 0.1,
                pose: Isometry3::translation(p.x, p.y, p.z),
                frame_id: i,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn group_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (a, b, c) = (random_sim3(&mut rng), random_sim3(&mut rng), random_sim3(&mut rng));
        let p = random_points(&mut rng, 1)[0];
        let left = a.compose(&b).compose(&c).apply(&p);
        let right = a.compose(&b.compose(&c)).apply(&p);
        assert!((left - right).norm() < 1e-9);
        assert!(a.compose(&a.inverse()).is_identity(1e-9));
        assert!(a.inverse().compose(&a).is_identity(1e-9));
        assert!((a.inverse().apply(&a.apply(&p)) - p).norm() < 1e-9);
        assert!((a.rotation.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rejects_nonpositive_scale() {
    assert!(Sim3::new(0.0, UnitQuaternion::identity(), Vector3::zeros()).is_err());
    assert!(Sim3::new(-1.0, UnitQuaternion::identity(), Vector3::zeros()).is_err());
}

#[test]
fn pose_transform_matches_point_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random_sim3(&mut rng);
    let pose = Isometry3::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.1, -0.4, 0.3));
    let moved = t.transform_pose(&pose);
    let local = Vector3::new(0.3, -0.2, 1.0);
    // Camera-frame points map by pose then similarity, up to the scale on the offset.
    let direction = moved.rotation * local;
    assert!((direction - t.rotate(&(pose.rotation * local))).norm() < 1e-12);
    assert!((moved.translation.vector - t.apply(&pose.translation.vector)).norm() < 1e-12);
}

#[test]
fn umeyama_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = random_points(&mut rng, 20);
    let t = umeyama(&pts, &pts).unwrap();
    assert!(t.is_identity(1e-9));
    assert_relative_eq!(t.scale, 1.0, epsilon = 1e-12);
}

#[test]
fn umeyama_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let src = random_points(&mut rng, 10);
    let dst: Vec<_> = src.iter().map(|p| p + Vector3::new(5.0, 0.0, 0.0)).collect();
    let t = umeyama(&src, &dst).unwrap();
    assert_relative_eq!(t.scale, 1.0, epsilon = 1e-12);
    assert!(t.rotation.angle() < 1e-9);
    assert!((t.translation - Vector3::new(5.0, 0.0, 0.0)).norm() < 1e-9);
}

#[test]
fn umeyama_recovers_random_similarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let truth = random_sim3(&mut rng);
        let src = random_points(&mut rng, 100);
        let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
        let t = umeyama(&src, &dst).unwrap();
        assert!(alignment_rmse(&t, &src, &dst) < 1e-9);
        assert_relative_eq!(t.scale, truth.scale, epsilon = 1e-9);
    }
}

#[test]
fn umeyama_returns_proper_rotation_for_mirrored_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let src = random_points(&mut rng, 30);
    let dst: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
    let t = umeyama(&src, &dst).unwrap();
    assert!((t.rotation.to_rotation_matrix().matrix().determinant() - 1.0).abs() < 1e-9);
}

#[test]
fn umeyama_degenerate_inputs() {
    let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
    assert!(matches!(umeyama(&line, &line), Err(Error::Degenerate(_))));
    let two = [Vector3::zeros(), Vector3::x()];
    assert!(umeyama(&two, &two).is_err());
    let same = [Vector3::x(); 4];
    assert!(umeyama(&same, &same).is_err());
    assert!(umeyama(&line[..3], &line[..4]).is_err());
}

#[test]
fn umeyama_residual_invariant_under_rigid_precomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let src = random_points(&mut rng, 40);
    let dst: Vec<_> = random_points(&mut rng, 40)
        .iter()
        .zip(&src)
        .map(|(noise, p)| p * 1.7 + noise * 0.1)
        .collect();
    let base = umeyama(&src, &dst).unwrap();
    let mut rigid = random_sim3(&mut rng);
    rigid.scale = 1.0;
    let moved: Vec<_> = src.iter().map(|p| rigid.apply(p)).collect();
    let t = umeyama(&moved, &dst).unwrap();
    assert!((alignment_rmse(&base, &src, &dst) - alignment_rmse(&t, &moved, &dst)).abs() < 1e-9);
}

#[test]
fn rescale_scaled_copy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts = random_points(&mut rng, 12);
    let up = trajectory(&pts);
    let metric = up.transformed(&Sim3::new(2.0, UnitQuaternion::identity(), Vector3::zeros()).unwrap());
    let (out, t) = rescale_trajectory(&up, &metric).unwrap();
    assert_relative_eq!(t.scale, 2.0, epsilon = 1e-9);
    for (a, b) in out.positions().iter().zip(metric.positions()) {
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn rescale_identical_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let traj = trajectory(&random_points(&mut rng, 8));
    let (_, t) = rescale_trajectory(&traj, &traj).unwrap();
    assert!(t.is_identity(1e-9));
}

#[test]
fn rescale_needs_three_associations() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts = random_points(&mut rng, 6);
    let up = trajectory(&pts);
    let shifted = Trajectory::new(
        up.poses()
            .iter()
            .map(|p| TimedPose {
                timestamp: p.timestamp + if p.frame_id < 2 { 0.005 } else { 0.05 },
                ..*p
            })
            .collect(),
    )
    .unwrap();
    assert!(matches!(rescale_trajectory(&up, &shifted), Err(Error::Degenerate(_))));
}

#[test]
fn association_window_is_ten_milliseconds() {
    let traj = trajectory(&[Vector3::zeros(), Vector3::x(), Vector3::y()]);
    assert_eq!(traj.nearest(0.109, ASSOCIATION_WINDOW), Some(1));
    assert_eq!(traj.nearest(0.089, ASSOCIATION_WINDOW), None);
    assert_eq!(traj.nearest(0.2, ASSOCIATION_WINDOW), Some(2));
}

#[test]
fn trajectory_requires_increasing_time() {
    let p = TimedPose {
        timestamp: 1.0,
        pose: Isometry3::identity(),
        frame_id: 0,
    };
    assert!(Trajectory::new(alloc::vec![p, p]).is_err());
}

fn two_blobs(rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    (0..20)
        .map(|i| {
            let base = if i % 2 == 0 { Vector3::zeros() } else { Vector3::new(100.0, 0.0, 0.0) };
            base + Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2))
        })
        .collect()
}

#[test]
fn single_cluster_uses_global_centroid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts = two_blobs(&mut rng);
    let part = spectral_partition(&trajectory(&pts), 1, &PartitionConfig::default()).unwrap();
    assert!(part.labels.iter().all(|l| *l == 0));
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    assert!((part.centroid(0) - centroid).norm() < 1e-12);
    part.validate().unwrap();
}

#[test]
fn two_blobs_match_brute_force_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pts = two_blobs(&mut rng);
    let part = spectral_partition(&trajectory(&pts), 2, &PartitionConfig::default()).unwrap();
    // Exhaustive search over bipartitions (frame 0 fixed in cluster 0).
    let n = pts.len();
    let mut best = (f64::INFINITY, 0u32);
    for mask in 0u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as usize }).collect();
        if labels.iter().all(|l| *l == 0) {
            continue;
        }
        let cost = partition_cost(&pts, &labels, 2);
        if cost < best.0 {
            best = (cost, mask);
        }
    }
    let brute: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { ((best.1 >> (i - 1)) & 1) as usize }).collect();
    assert_eq!(part.labels, brute);
    assert!((part.centroid(1).x - 100.0).abs() < 1.0);
}

#[test]
fn cluster_quality_is_seed_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pts: Vec<_> = (0..30)
        .map(|i| Vector3::new((i / 10) as f64 * 60.0 + rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0))
        .collect();
    let traj = trajectory(&pts);
    let costs: Vec<f64> = (0..4)
        .map(|seed| {
            let part = spectral_partition(&traj, 3, &PartitionConfig { seed, ..Default::default() }).unwrap();
            partition_cost(&pts, &part.labels, 3)
        })
        .collect();
    for c in &costs {
        assert!((c - costs[0]).abs() < 1e-9);
    }
}

#[test]
fn labels_invariant_to_rigid_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pts: Vec<_> = (0..24)
        .map(|i| Vector3::new((i % 3) as f64 * 40.0 + rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0))
        .collect();
    let traj = trajectory(&pts);
    let mut rigid = random_sim3(&mut rng);
    rigid.scale = 1.0;
    let config = PartitionConfig::default();
    let a = spectral_partition(&traj, 3, &config).unwrap();
    let b = spectral_partition(&traj.transformed(&rigid), 3, &config).unwrap();
    assert_eq!(a.labels, b.labels);
}

#[test]
fn too_many_clusters_rejected() {
    let traj = trajectory(&[Vector3::zeros(), Vector3::x()]);
    assert!(spectral_partition(&traj, 3, &PartitionConfig::default()).is_err());
    assert!(spectral_partition(&traj, 0, &PartitionConfig::default()).is_err());
}

#[test]
fn auto_k_examples() {
    let box_traj = |w: f64, h: f64| trajectory(&[Vector3::zeros(), Vector3::new(w, h, 3.0), Vector3::new(w / 2.0, 0.0, 0.0)]);
    assert_eq!(auto_k(&box_traj(40.0, 40.0)), 1);
    assert_eq!(auto_k(&box_traj(100.0, 50.0)), 2);
    assert_eq!(auto_k(&box_traj(120.0, 120.0)), 6);
    assert_eq!(auto_k(&trajectory(&[Vector3::zeros()])), 1);
}
