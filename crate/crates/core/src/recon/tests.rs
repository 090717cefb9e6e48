use super::*;
use crate::camera::{look_at, Intrinsics};
use crate::image::Rgb;
use nalgebra::{Isometry3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Constant density `sigma` for `z >= depth`, zero before; color gray.
struct Slab {
    depth: f64,
    sigma: f64,
}

impl RadianceSource for Slab {
    fn densities(&self, positions: &[Vector3<f64>]) -> Vec<f64> {
        positions.iter().map(|p| if p.z >= self.depth { self.sigma } else { 0.0 }).collect()
    }

    fn shade(
        &self,
        positions: &[Vector3<f64>],
        _d: &Vector3<f64>,
        _frame: Option<usize>,
        with_gradients: bool,
    ) -> (Vec<f64>, Vec<Rgb>, Option<Vec<Vector3<f64>>>) {
        let n = positions.len();
        (self.densities(positions), alloc::vec![[0.5; 3]; n], with_gradients.then(|| alloc::vec![Vector3::z(); n]))
    }
}

fn frame() -> Frame {
    let cam = Intrinsics::from_fov(16, 16, 60f64.to_radians());
    Frame::blank(0, cam, Isometry3::identity())
}

fn config(target: usize) -> ExtractConfig {
    ExtractConfig {
        target_count: target,
        sampler: SamplerConfig {
            coarse: 128,
            fine: 64,
            guided: 0,
            near: 0.1,
            far: 6.0,
        },
        ..Default::default()
    }
}

fn slab_points(seed: u64, n: usize, spacing: f64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt() as usize;
    let mut pts = Vec::new();
    for i in 0..side {
        for j in 0..side {
            let jitter = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            pts.push(Vector3::new(i as f64 * spacing, j as f64 * spacing, 0.0) + jitter * spacing);
        }
    }
    PointCloud::from_positions(pts)
}

#[test]
fn opaque_rays_become_points_on_the_surface() {
    let field = Slab { depth: 2.0, sigma: 1e3 };
    let f = frame();
    let cloud = extract_points(&field, &[&f], &config(200)).unwrap();
    assert_eq!(cloud.len(), 200);
    for (p, n) in cloud.positions.iter().zip(cloud.normals.as_ref().unwrap()) {
        assert!((p.z - 2.0).abs() < 0.05, "{p}");
        assert_eq!(*n, -Vector3::z());
    }
    assert!(cloud.colors.iter().all(|c| c.iter().all(|v| (127..=128).contains(v))));
}

#[test]
fn point_lies_at_expected_depth_along_ray() {
    let field = Slab { depth: 2.0, sigma: 1e3 };
    let f = frame();
    let cfg = ExtractConfig { target_count: 1, ..config(1) };
    let p = extract_points(&field, &[&f], &cfg).unwrap().positions[0];
    let dir = p.normalize();
    let (_, px) = render_ray::<_, ChaCha8Rng>(
        &field,
        &Ray::new(Vector3::zeros(), dir, 0.1, 6.0).unwrap(),
        &cfg.sampler,
        Some(0),
        false,
        None,
    );
    assert!(px.opacity > 0.9);
    assert!((p.norm() - px.depth).abs() < 1e-9);
}

#[test]
fn translucent_rays_are_gated() {
    // Opacity over the 4 m behind the slab face is 1 - exp(-0.0128 * 4) ≈ 0.05.
    let field = Slab { depth: 2.0, sigma: 0.0128 };
    let f = frame();
    let cloud = extract_points(&field, &[&f], &config(50)).unwrap();
    assert!(cloud.is_empty());
}

#[test]
fn extraction_is_seed_deterministic() {
    let field = Slab { depth: 1.5, sigma: 50.0 };
    let pose = look_at(Vector3::new(0.5, 0.0, 0.0), Vector3::new(0.0, 0.0, 3.0));
    let f = Frame::blank(4, Intrinsics::from_fov(12, 10, 1.0), pose);
    let a = extract_points(&field, &[&f], &config(100)).unwrap();
    let b = extract_points(&field, &[&f], &config(100)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_target_rejected() {
    let f = frame();
    assert!(extract_points(&Slab { depth: 1.0, sigma: 1.0 }, &[&f], &config(0)).is_err());
}

#[test]
fn dense_slab_survives_neighbor_culling() {
    // 0.05 m spacing gives ~50 neighbors within 0.2 m in the interior and ≥ 20 on corners.
    let cloud = slab_points(1, 40 * 40, 0.05);
    let (out, report) = cull_low_density(&cloud, None, &CullConfig::default());
    assert!(out.len() as f64 >= 0.99 * cloud.len() as f64);
    assert!(report.neighbors_applied && !report.density_applied);
}

#[test]
fn isolated_point_is_removed() {
    let mut cloud = slab_points(2, 400, 0.05);
    cloud.extend(&PointCloud::from_positions(alloc::vec![Vector3::new(10.0, 10.0, 10.0)]));
    let (out, report) = cull_low_density(&cloud, None, &CullConfig::default());
    assert_eq!(report.removed_by_neighbors, 1);
    assert!(!out.positions.contains(&Vector3::new(10.0, 10.0, 10.0)));
}

#[test]
fn density_gate_uses_field() {
    let field = Slab { depth: 0.0, sigma: 5.0 };
    let cloud = PointCloud::from_positions(alloc::vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -1.0)]);
    let cfg = CullConfig {
        min_neighbors: 0,
        ..Default::default()
    };
    let (out, report) = cull_low_density(&cloud, Some(&field), &cfg);
    assert_eq!(out.positions, alloc::vec![Vector3::new(0.0, 0.0, 1.0)]);
    assert_eq!(report.removed_by_density, 1);
    assert!(!report.neighbors_applied);
}

#[test]
fn empty_cloud_culls_to_empty() {
    let (out, report) = cull_low_density(&PointCloud::default(), None, &CullConfig::default());
    assert!(out.is_empty());
    assert_eq!(report.input, 0);
}

#[test]
fn identity_merge_equals_culled_input() {
    let cloud = slab_points(3, 400, 0.05);
    let cfg = CullConfig::default();
    let (culled, _) = cull_low_density(&cloud, None, &cfg);
    let parts = [SubmapCloud {
        cloud: cloud.clone(),
        local_to_world: Sim3::identity(),
        field: None,
    }];
    let (merged, reports) = merge_submaps(&parts, &cfg, None);
    assert_eq!(merged, culled);
    assert_eq!(reports.len(), 1);
}

#[test]
fn disjoint_merge_sums_sizes() {
    let a = slab_points(4, 400, 0.05);
    let b = slab_points(5, 225, 0.05);
    let cfg = CullConfig::default();
    let expected = cull_low_density(&a, None, &cfg).0.len() + cull_low_density(&b, None, &cfg).0.len();
    let parts = [
        SubmapCloud {
            cloud: a,
            local_to_world: Sim3::identity(),
            field: None,
        },
        SubmapCloud {
            cloud: b,
            local_to_world: Sim3::from_translation(Vector3::new(50.0, 0.0, 0.0)),
            field: None,
        },
    ];
    let (merged, _) = merge_submaps(&parts, &cfg, None);
    assert_eq!(merged.len(), expected);
}

#[test]
fn shifted_local_frame_round_trips() {
    let world = slab_points(6, 100, 0.05);
    let shift = Vector3::new(10.0, 0.0, 0.0);
    let local = world.transformed(&Sim3::from_translation(-shift));
    let parts = [SubmapCloud {
        cloud: local,
        local_to_world: Sim3::from_translation(shift),
        field: None,
    }];
    let cfg = CullConfig {
        density_gate: None,
        min_neighbors: 0,
        ..Default::default()
    };
    let (merged, _) = merge_submaps(&parts, &cfg, None);
    for (a, b) in merged.positions.iter().zip(&world.positions) {
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn normals_rotate_without_scaling() {
    let cloud = PointCloud::new(alloc::vec![Vector3::x()], alloc::vec![[1, 2, 3]], Some(alloc::vec![Vector3::x()])).unwrap();
    let t = Sim3::new(3.0, UnitQuaternion::from_euler_angles(0.0, 0.0, core::f64::consts::FRAC_PI_2), Vector3::zeros()).unwrap();
    let out = cloud.transformed(&t);
    assert!((out.normals.unwrap()[0] - Vector3::y()).norm() < 1e-12);
    assert!((out.positions[0] - Vector3::new(0.0, 3.0, 0.0)).norm() < 1e-12);
}

#[test]
fn voxel_downsample_never_grows() {
    let cloud = slab_points(7, 900, 0.05);
    let down = voxel_downsample(&cloud, 0.2);
    assert!(down.len() <= cloud.len());
    assert!(down.len() >= 49);
    let (merged, _) = merge_submaps(
        &[SubmapCloud {
            cloud: cloud.clone(),
            local_to_world: Sim3::identity(),
            field: None,
        }],
        &CullConfig::default(),
        Some(0.2),
    );
    assert!(merged.len() <= cloud.len());
}

#[test]
fn invalid_clouds_rejected() {
    assert!(PointCloud::new(alloc::vec![Vector3::zeros()], alloc::vec![], None).is_err());
    assert!(PointCloud::new(alloc::vec![Vector3::new(f64::NAN, 0.0, 0.0)], alloc::vec![[0; 3]], None).is_err());
    assert!(PointCloud::new(alloc::vec![Vector3::zeros()], alloc::vec![[0; 3]], Some(alloc::vec![Vector3::x() * 2.0])).is_err());
}
