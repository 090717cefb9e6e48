use super::*;
use alloc::vec::Vec;
use rand::Rng;

pub(crate) fn toy_config() -> FieldConfig {
    FieldConfig {
        levels: 2,
        base_resolution: 2,
        max_resolution: 4,
        log2_table_size: 3,
        features_per_level: 2,
        density_hidden: 4,
        geometry_features: 2,
        color_hidden: 4,
        color_layers: 1,
        direction_frequencies: 1,
        appearance_dim: 2,
        num_frames: 2,
        contraction: Contraction::Infinity,
        seed: 7,
    }
}

/// Toy field with features large enough that every path carries signal.
pub(crate) fn toy_field(seed: u64) -> RadianceField {
    let mut field = RadianceField::new(FieldConfig { seed, ..toy_config() }, SceneNormalization::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for p in field.params_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    field
}

fn interior(field: &RadianceField, x: &Vector3<f64>, margin: f64) -> bool {
    let c = field.config().contraction.apply(&field.normalization().apply(x));
    (0..field.encoding().levels()).all(|l| {
        field
            .encoding()
            .lattice_position(&c, l)
            .iter()
            .all(|v| {
                let f = v - v.floor();
                f > margin && f < 1.0 - margin
            })
    })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn fresh_field_outputs_are_in_range() {
    let cfg = FieldConfig {
        num_frames: 3,
        ..FieldConfig::default()
    };
    let field = RadianceField::new(cfg, SceneNormalization::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let x = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3).normalize();
        let out = field.field_eval(&x, &d, Some(1)).unwrap();
        assert!(out.sigma.is_finite() && out.sigma >= 0.0);
        assert!(out.rgb.iter().all(|c| (0.0..=1.0).contains(c)));
        assert_eq!(out.geometry.len(), 15);
    }
}

#[test]
fn non_unit_direction_rejected() {
    let field = toy_field(1);
    let err = field.field_eval(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 2.0), None);
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

#[test]
fn density_is_appearance_independent() {
    let field = toy_field(2);
    let x = Vector3::new(0.1, 0.2, -0.3);
    let d = Vector3::new(0.0, 0.6, 0.8);
    let a = field.field_eval(&x, &d, Some(0)).unwrap();
    let b = field.field_eval(&x, &d, Some(1)).unwrap();
    assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
    assert_ne!(a.rgb, b.rgb);
}

#[test]
fn unknown_frame_uses_zero_embedding() {
    let field = toy_field(3);
    let x = Vector3::new(0.1, 0.2, -0.3);
    let d = Vector3::z();
    let unknown = field.field_eval(&x, &d, Some(99)).unwrap();
    let default = field.field_eval(&x, &d, None).unwrap();
    assert_eq!(unknown, default);
    let mut zeroed = field.clone();
    let range = zeroed.appearance_range();
    zeroed.params_mut()[range.start..range.start + 2].iter_mut().for_each(|p| *p = 0.0);
    assert_eq!(zeroed.field_eval(&x, &d, Some(0)).unwrap(), default);
}

#[test]
fn zero_tables_give_zero_gradient() {
    let mut field = toy_field(4);
    let range = field.encoding_range();
    field.params_mut()[range].iter_mut().for_each(|p| *p = 0.0);
    let g = field.density_gradient(&Vector3::new(0.3, -0.1, 0.2));
    assert_eq!(g, Vector3::zeros());
}

#[test]
fn density_gradient_is_frame_independent() {
    let field = toy_field(5);
    let x = Vector3::new(0.37, -0.21, 0.55);
    let d = Vector3::z();
    let mut tape = FieldTape::new();
    let a = tape.record(&field, &x, &d, Some(0)).unwrap();
    let b = tape.record(&field, &x, &d, Some(1)).unwrap();
    assert_eq!(a.density_gradient, b.density_gradient);
    assert_eq!(a.density_gradient, field.density_gradient(&x));
}

#[test]
fn density_gradient_matches_central_differences() {
    let cfg = FieldConfig {
        levels: 4,
        base_resolution: 4,
        max_resolution: 32,
        log2_table_size: 8,
        density_hidden: 16,
        ..FieldConfig::default()
    };
    let mut field = RadianceField::new(cfg, SceneNormalization { center: Vector3::new(0.5, 0.0, 0.0), scale: 0.5 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in field.params_mut() {
        *p = rng.random_range(-0.5..0.5);
    }
    let h = 1e-5;
    let mut checked = 0;
    while checked < 200 {
        let x = Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
        if !interior(&field, &x, 1e-3) {
            continue;
        }
        let analytic = field.density_gradient(&x);
        let mut fd = Vector3::zeros();
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            fd[k] = (field.density(&xp) - field.density(&xm)) / (2.0 * h);
        }
        let err = (analytic - fd).norm() / analytic.norm().max(fd.norm()).max(1e-8);
        assert!(err < 1e-4, "x={x:?} analytic={analytic:?} fd={fd:?}");
        checked += 1;
    }
}

/// Scalar probe over all three outputs.
fn probe_loss(field: &RadianceField, x: &Vector3<f64>, d: &Vector3<f64>, frame: Option<usize>, w: &OutputGrad) -> f64 {
    let mut tape = FieldTape::new();
    let out = tape.record(field, x, d, frame).unwrap();
    let g = w.density_gradient.unwrap_or_default();
    w.sigma * out.sigma
        + w.rgb.iter().zip(&out.rgb).map(|(a, b)| a * b).sum::<f64>()
        + g.dot(&out.density_gradient)
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut field = toy_field(6);
    assert!(field.param_count() <= 200, "{}", field.param_count());
    let x = Vector3::new(0.31, -0.42, 0.27);
    let d = Vector3::new(0.2, -0.3, 0.9).normalize();
    let w = OutputGrad {
        sigma: 0.7,
        rgb: [0.3, -1.2, 0.5],
        density_gradient: Some(Vector3::new(0.4, 0.9, -0.6)),
    };
    let mut tape = FieldTape::new();
    tape.record(&field, &x, &d, Some(1)).unwrap();
    let analytic = tape.backward(&field, &[w]).unwrap();
    let h = 1e-5;
    for i in 0..field.param_count() {
        let orig = field.params()[i];
        field.params_mut()[i] = orig + h;
        let lp = probe_loss(&field, &x, &d, Some(1), &w);
        field.params_mut()[i] = orig - h;
        let lm = probe_loss(&field, &x, &d, Some(1), &w);
        field.params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        assert!(
            rel_err(analytic[i], fd) < 1e-4 || (analytic[i] - fd).abs() < 1e-9,
            "param {i}: analytic {} fd {fd}",
            analytic[i]
        );
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let field = toy_field(8);
    let mut tape = FieldTape::new();
    tape.record(&field, &Vector3::new(0.1, 0.1, 0.1), &Vector3::z(), Some(0)).unwrap();
    let grads = tape.backward(&field, &[OutputGrad::default()]).unwrap();
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn backward_without_forward_is_state_error() {
    let field = toy_field(9);
    let mut tape = FieldTape::new();
    assert!(matches!(tape.backward(&field, &[]), Err(Error::State(_))));
}

#[test]
fn backward_is_deterministic() {
    let field = toy_field(10);
    let run = || {
        let mut tape = FieldTape::new();
        let mut ups = Vec::new();
        for i in 0..5 {
            let x = Vector3::new(0.1 * i as f64, -0.2, 0.3);
            tape.record(&field, &x, &Vector3::z(), Some(i % 2)).unwrap();
            ups.push(OutputGrad {
                sigma: 1.0,
                rgb: [0.1, 0.2, 0.3],
                density_gradient: Some(Vector3::new(1.0, 0.0, 0.5)),
            });
        }
        tape.backward(&field, &ups).unwrap()
    };
    let a: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn encoding_is_continuous() {
    let field = toy_field(12);
    let c = Vector3::new(0.123, 0.456, -0.789);
    let base = field.encoding().encode(field.params(), &c);
    let mut prev = f64::INFINITY;
    for eps in [1e-3, 1e-6] {
        let moved = field.encoding().encode(field.params(), &(c + Vector3::repeat(eps)));
        let diff: f64 = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < prev);
        assert!(diff < 10.0 * eps * 8.0);
        prev = diff;
    }
}
