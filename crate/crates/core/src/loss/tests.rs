use super::*;
use crate::render::{quadrature_backward, render_pixel};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(ts: &[f64], deltas: &[f64], weights: &[f64]) -> RaySamples {
    RaySamples {
        ts: ts.to_vec(),
        deltas: deltas.to_vec(),
        sigmas: alloc::vec![0.0; ts.len()],
        colors: alloc::vec![[0.0; 3]; ts.len()],
        weights: weights.to_vec(),
        transmittance: alloc::vec![1.0; ts.len()],
        density_gradients: None,
    }
}

fn target(color: Rgb) -> RayTarget {
    RayTarget {
        color,
        depth: None,
        normal: None,
        sky: false,
    }
}

#[test]
fn photometric_examples() {
    assert_eq!(photometric_loss(&[0.2, 0.4, 0.6], &[0.2, 0.4, 0.6]), 0.0);
    assert_eq!(photometric_loss(&[1.0; 3], &[0.0; 3]), 1.0);
    assert_relative_eq!(photometric_loss(&[0.5, 0.0, 0.0], &[0.0; 3]), 0.0833333, epsilon = 1e-7);
}

#[test]
fn depth_examples() {
    let d = DepthTarget::new(2.0, 0.05).unwrap();
    let perfect = depth_loss(&samples(&[2.0], &[1.0], &[1.0]), Some(&d));
    assert!(perfect.abs() < 1e-5 && perfect <= 0.0);
    assert_relative_eq!(depth_loss(&samples(&[2.0], &[1.0], &[0.5]), Some(&d)), 0.693147, epsilon = 1e-5);
    let far = depth_loss(&samples(&[2.5], &[1.0], &[1e-9]), Some(&d));
    assert!(far < 1e-20);
    assert_eq!(depth_loss(&samples(&[2.0], &[1.0], &[0.5]), None), 0.0);
}

#[test]
fn depth_target_validation() {
    assert!(DepthTarget::new(0.0, 0.05).is_err());
    assert!(DepthTarget::new(1.0, 0.0).is_err());
}

#[test]
fn depth_loss_falls_as_mass_moves_to_target() {
    // Two samples at t = D and t = D + 20σ̂; a fixed unit of mass moves to the near one.
    let d = DepthTarget::new(3.0, 0.05).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..=20 {
        let a = k as f64 / 20.0;
        let l = depth_loss(&samples(&[3.0, 4.0], &[0.1, 0.1], &[a, 1.0 - a]), Some(&d));
        assert!(l < last, "{k}");
        last = l;
    }
}

#[test]
fn normal_examples() {
    let x = Vector3::x();
    assert_eq!(normal_loss(&x, &x), 0.0);
    assert_eq!(normal_loss(&x, &-x), 4.0);
    assert_eq!(normal_loss(&x, &Vector3::y()), 3.0);
}

#[test]
fn axis_aligned_normals_stay_within_four() {
    for (a, b) in [(Vector3::x(), -Vector3::x()), (Vector3::y(), Vector3::z()), (-Vector3::z(), Vector3::z())] {
        assert!(normal_loss(&a, &b) <= 4.0);
    }
    // Off-axis antipodes exceed 4: the L1 term reaches 2√3.
    let d = Vector3::new(1.0, 1.0, 1.0).normalize();
    assert_relative_eq!(normal_loss(&d, &-d), 2.0 * 3f64.sqrt() + 2.0, epsilon = 1e-12);
}

#[test]
fn sky_examples() {
    assert_eq!(sky_loss(&samples(&[1.0, 2.0], &[1.0, 1.0], &[0.0, 0.0]), true), 0.0);
    assert_eq!(sky_loss(&samples(&[1.0, 2.0], &[1.0, 1.0], &[0.5, 0.25]), false), 0.0);
    assert_eq!(sky_loss(&samples(&[1.0, 2.0], &[1.0, 1.0], &[0.5, 0.25]), true), 0.3125);
}

fn pixel(color: Rgb) -> RenderedPixel {
    RenderedPixel {
        color,
        depth: 1.0,
        opacity: 0.5,
        normal: None,
    }
}

#[test]
fn no_lidar_no_sky_total_is_rgb() {
    let r = samples(&[1.0], &[1.0], &[0.4]);
    let targets = [target([0.3, 0.2, 0.1]), target([1.0, 1.0, 1.0])];
    let renders = [(r.clone(), pixel([0.2; 3])), (r, pixel([0.9; 3]))];
    let out = total_loss(&targets, &renders, &LossWeights::default()).unwrap();
    assert_eq!(out.total, out.rgb);
    assert_eq!(out.depth + out.normal + out.sky, 0.0);
}

#[test]
fn zero_weights_total_is_rgb() {
    let r = samples(&[2.0], &[1.0], &[0.5]);
    let mut t = target([0.5; 3]);
    t.depth = Some(DepthTarget::new(2.0, 0.05).unwrap());
    let w = LossWeights {
        depth: 0.0,
        normal: 0.0,
        sky: 0.0,
        ..Default::default()
    };
    let out = total_loss(&[t], &[(r, pixel([0.1; 3]))], &w).unwrap();
    assert_eq!(out.total, out.rgb);
    assert!(out.depth > 0.0);
}

#[test]
fn two_ray_batch_matches_hand_sum() {
    let ray_a = samples(&[2.0, 2.05], &[0.05, 0.05], &[0.5, 0.2]);
    let ray_b = samples(&[1.0, 4.0], &[1.0, 1.0], &[0.5, 0.25]);
    let mut ta = target([0.5, 0.5, 0.5]);
    ta.depth = Some(DepthTarget::new(2.0, 0.05).unwrap());
    ta.normal = Some(Vector3::y());
    let mut pa = pixel([0.2, 0.5, 0.8]);
    pa.normal = Some(Vector3::x());
    let tb = RayTarget {
        sky: true,
        ..target([0.0; 3])
    };
    let w = LossWeights::default();
    let out = total_loss(&[ta, tb], &[(ray_a, pa), (ray_b, pixel([0.0; 3]))], &w).unwrap();
    let rgb = (0.09 + 0.0 + 0.09) / 3.0;
    let k2 = (-0.5f64).exp();
    let depth = -(0.5f64 + 1e-6).ln() * 0.05 - (0.2f64 + 1e-6).ln() * k2 * 0.05;
    let expected = rgb + 0.1 * depth + 0.05 * 3.0 + 0.01 * 0.3125;
    assert_relative_eq!(out.rgb, rgb, epsilon = 1e-12);
    assert_relative_eq!(out.depth, depth, epsilon = 1e-12);
    assert_relative_eq!(out.total, expected, epsilon = 1e-12);
}

#[test]
fn empty_batch_rejected() {
    assert!(total_loss(&[], &[], &LossWeights::default()).is_err());
}

#[test]
fn batch_validation() {
    let ray = Ray::new(Vector3::zeros(), Vector3::z(), 0.1, 1.0).unwrap();
    let bad_sky = RayTarget {
        sky: true,
        depth: Some(DepthTarget::new(1.0, 0.1).unwrap()),
        ..target([0.0; 3])
    };
    let batch = RayBatch {
        rays: alloc::vec![ray],
        targets: alloc::vec![bad_sky],
    };
    assert!(batch.validate().is_err());
    let bad_normal = RayTarget {
        normal: Some(Vector3::new(0.0, 0.0, 2.0)),
        ..target([0.0; 3])
    };
    let batch = RayBatch {
        rays: alloc::vec![ray],
        targets: alloc::vec![bad_normal],
    };
    assert!(batch.validate().is_err());
}

proptest! {
    #[test]
    fn normal_loss_in_range(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
        let a = Vector3::from(a);
        let b = Vector3::from(b);
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
        let l = normal_loss(&a.normalize(), &b.normalize());
        // ‖a - b‖₁ ≤ √3 ‖a - b‖₂ ≤ 2√3 and 1 - aᵀb ≤ 2.
        prop_assert!((0.0..=2.0 * 3f64.sqrt() + 2.0 + 1e-12).contains(&l));
    }

    #[test]
    fn terms_non_negative(ws in prop::collection::vec(0.0f64..1.0, 1..16), depth in 0.5f64..5.0) {
        let n = ws.len();
        let total: f64 = ws.iter().sum();
        let ws: Vec<f64> = ws.iter().map(|w| w / total.max(1.0)).collect();
        let ts: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 * 0.3).collect();
        let s = samples(&ts, &alloc::vec![0.3; n], &ws);
        let d = DepthTarget::new(depth, 0.05).unwrap();
        prop_assert!(depth_loss(&s, Some(&d)) >= -1e-5);
        prop_assert!(sky_loss(&s, true) >= 0.0);
    }
}

/// Loss of one ray (batch of itself plus fixed counts) as a function of
/// per-sample densities, colors and density gradients.
fn ray_total(
    target: &RayTarget,
    ts: &[f64],
    deltas: &[f64],
    sigmas: &[f64],
    colors: &[Rgb],
    grads: &[Vector3<f64>],
    counts: &TermCounts,
    w: &LossWeights,
) -> f64 {
    let mut s = RaySamples::new(ts.to_vec(), deltas.to_vec(), sigmas.to_vec(), colors.to_vec());
    s.density_gradients = Some(grads.to_vec());
    let px = render_pixel(&s);
    reduce(&ray_losses(target, &s, &px, w.sigma_hat), counts, w).total
}

fn check_ray_gradients(target: RayTarget, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12;
    let ts: Vec<f64> = (0..n).map(|i| 1.5 + 0.05 * i as f64).collect();
    let deltas = alloc::vec![0.05; n];
    let sigmas: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..15.0)).collect();
    let colors: Vec<Rgb> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let grads: Vec<Vector3<f64>> = (0..n)
        .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..-1.0)))
        .collect();
    let counts = TermCounts {
        rgb: 3,
        depth: 2,
        normal: 2,
        sky: 4,
    };
    let w = LossWeights {
        depth: 0.3,
        normal: 0.2,
        sky: 0.5,
        sigma_hat: 0.1,
    };
    let f = |s: &[f64], c: &[Rgb], g: &[Vector3<f64>]| ray_total(&target, &ts, &deltas, s, c, g, &counts, &w);

    let mut s = RaySamples::new(ts.clone(), deltas.clone(), sigmas.clone(), colors.clone());
    s.density_gradients = Some(grads.clone());
    let px = render_pixel(&s);
    let analytic = ray_loss_gradients(&target, &s, &px, &counts, &w);
    let dsigma = quadrature_backward(&s, &analytic.weights);
    let h = 1e-6;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1e-3);
    for i in 0..n {
        let mut p = sigmas.clone();
        let mut m = sigmas.clone();
        p[i] += h;
        m[i] -= h;
        let fd = (f(&p, &colors, &grads) - f(&m, &colors, &grads)) / (2.0 * h);
        assert!(close(dsigma[i], fd), "σ[{i}]: {} vs {fd}", dsigma[i]);
        for k in 0..3 {
            let mut p = colors.clone();
            let mut m = colors.clone();
            p[i][k] += h;
            m[i][k] -= h;
            let fd = (f(&sigmas, &p, &grads) - f(&sigmas, &m, &grads)) / (2.0 * h);
            assert!(close(analytic.colors[i][k], fd), "c[{i}][{k}]");
            let mut p = grads.clone();
            let mut m = grads.clone();
            p[i][k] += h;
            m[i][k] -= h;
            let fd = (f(&sigmas, &colors, &p) - f(&sigmas, &colors, &m)) / (2.0 * h);
            let an = analytic.density_gradients.as_ref().map_or(0.0, |g| g[i][k]);
            assert!(close(an, fd), "∇σ[{i}][{k}]: {an} vs {fd}");
        }
    }
}

#[test]
fn gradients_match_finite_differences_for_lidar_ray() {
    check_ray_gradients(
        RayTarget {
            color: [0.2, 0.7, 0.4],
            depth: Some(DepthTarget::new(1.8, 0.1).unwrap()),
            normal: Some(Vector3::new(0.3, -0.2, -1.0).normalize()),
            sky: false,
        },
        1,
    );
}

#[test]
fn gradients_match_finite_differences_for_sky_ray() {
    check_ray_gradients(
        RayTarget {
            sky: true,
            ..target([0.5; 3])
        },
        2,
    );
}

#[test]
fn gradients_match_finite_differences_for_camera_only_ray() {
    check_ray_gradients(target([0.9, 0.1, 0.3]), 3);
}
