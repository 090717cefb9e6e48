use alloc::vec::Vec;
use nalgebra::Vector3;

use super::{Primitive, SceneSpec, Shape, Texture, Waypoint};

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub fn builtin_names() -> &'static [&'static str] {
    &["textureless-corridor", "textured-room", "two-courts", "checker-plane"]
}

pub fn builtin(name: &str) -> Option<SceneSpec> {
    match name {
        "textureless-corridor" => Some(textureless_corridor()),
        "textured-room" => Some(textured_room()),
        "two-courts" => Some(two_courts()),
        "checker-plane" => Some(checker_plane()),
        _ => None,
    }
}

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

fn uniform(c: f64) -> Texture {
    Texture::Uniform { color: [c, c, c * 0.95] }
}

fn checker(a: [f64; 3], b: [f64; 3], size: f64) -> Texture {
    Texture::Checker { a, b, size }
}

fn quad(point: Vector3<f64>, normal: Vector3<f64>, u_axis: Vector3<f64>, half: [f64; 2], texture: Texture) -> Primitive {
    Primitive {
        shape: Shape::plane(point, normal, u_axis, half),
        texture,
    }
}

fn cuboid(min: Vector3<f64>, max: Vector3<f64>, texture: Texture) -> Primitive {
    Primitive {
        shape: Shape::Box { min, max },
        texture,
    }
}

/// Closed uniform-albedo corridor along +x, camera driving straight down it.
pub fn textureless_corridor() -> SceneSpec {
    let (x0, x1, half_w, height) = (-0.5, 12.0, 1.5, 2.5);
    let cx = (x0 + x1) / 2.0;
    let hx = (x1 - x0) / 2.0;
    let primitives = alloc::vec![
        quad(v(cx, 0.0, 0.0), Vector3::z(), Vector3::x(), [hx, half_w], uniform(0.6)),
        quad(v(cx, 0.0, height), -Vector3::z(), Vector3::x(), [hx, half_w], uniform(0.8)),
        quad(v(cx, half_w, height / 2.0), -Vector3::y(), Vector3::x(), [hx, height / 2.0], uniform(0.7)),
        quad(v(cx, -half_w, height / 2.0), Vector3::y(), Vector3::x(), [hx, height / 2.0], uniform(0.7)),
        quad(v(x1, 0.0, height / 2.0), -Vector3::x(), Vector3::y(), [half_w, height / 2.0], uniform(0.5)),
    ];
    let waypoints = (0..12)
        .map(|i| {
            let x = i as f64 * 0.3;
            Waypoint {
                position: v(x, 0.0, 1.2),
                look_at: v(x + 5.0, 0.0, 1.0),
            }
        })
        .collect();
    SceneSpec {
        name: "textureless-corridor".into(),
        primitives,
        waypoints,
        ..Default::default()
    }
}

/// Open-topped room with checkered walls and floor; the camera orbits the
/// center looking outward and slightly up so the sky shows above the walls.
pub fn textured_room() -> SceneSpec {
    let (half, height) = (4.0, 3.0);
    let wall = |point: Vector3<f64>, normal: Vector3<f64>, u: Vector3<f64>, a: [f64; 3]| {
        quad(point, normal, u, [half, height / 2.0], checker(a, [0.15, 0.15, 0.2], 0.5))
    };
    let mut primitives = alloc::vec![
        quad(v(0.0, 0.0, 0.0), Vector3::z(), Vector3::x(), [half, half], checker([0.8, 0.75, 0.6], [0.3, 0.25, 0.2], 0.5)),
        wall(v(half, 0.0, height / 2.0), -Vector3::x(), Vector3::y(), [0.9, 0.3, 0.3]),
        wall(v(-half, 0.0, height / 2.0), Vector3::x(), Vector3::y(), [0.3, 0.9, 0.3]),
        wall(v(0.0, half, height / 2.0), -Vector3::y(), Vector3::x(), [0.3, 0.3, 0.9]),
        wall(v(0.0, -half, height / 2.0), Vector3::y(), Vector3::x(), [0.9, 0.9, 0.3]),
    ];
    primitives.push(cuboid(v(-0.4, -0.4, 0.0), v(0.4, 0.4, 0.8), checker([0.9, 0.5, 0.1], [0.1, 0.4, 0.5], 0.2)));
    let n = 16;
    let waypoints = (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * core::f64::consts::TAU;
            let dir = v(a.cos(), a.sin(), 0.0);
            let position = dir * 1.8 + v(0.0, 0.0, 1.5);
            Waypoint {
                position,
                look_at: position + dir * 3.0 + v(0.0, 0.0, 1.4),
            }
        })
        .collect();
    SceneSpec {
        name: "textured-room".into(),
        primitives,
        waypoints,
        test_every: 8,
        ..Default::default()
    }
}

/// Two small courts 100 m apart, each with a floor, a block and a row of
/// thin poles; cameras orbit each court.
pub fn two_courts() -> SceneSpec {
    let mut primitives = Vec::new();
    let mut waypoints = Vec::new();
    for (k, cx) in [0.0, 100.0].into_iter().enumerate() {
        let center = v(cx, 0.0, 0.0);
        primitives.push(quad(center, Vector3::z(), Vector3::x(), [4.0, 4.0], checker([0.75, 0.7, 0.6], [0.35, 0.3, 0.3], 0.5)));
        primitives.push(cuboid(
            center + v(-1.5, 0.8, 0.0),
            center + v(-0.5, 1.8, 1.0),
            checker([0.8, 0.4, 0.2], [0.2, 0.4, 0.8], 0.25),
        ));
        for j in 0..4 {
            let p = center + v(0.6 * j as f64 - 0.6, -1.0, 0.0);
            primitives.push(cuboid(p + v(-0.05, -0.05, 0.0), p + v(0.05, 0.05, 1.5), uniform(0.9 - 0.2 * k as f64)));
        }
        let n = 10;
        for i in 0..n {
            let a = i as f64 / n as f64 * core::f64::consts::TAU;
            let position = center + v(3.0 * a.cos(), 3.0 * a.sin(), 1.4);
            waypoints.push(Waypoint {
                position,
                look_at: center + v(0.0, 0.0, 0.5),
            });
        }
    }
    SceneSpec {
        name: "two-courts".into(),
        primitives,
        waypoints,
        ..Default::default()
    }
}

/// Single checkered wall 2 m in front of four laterally offset cameras.
pub fn checker_plane() -> SceneSpec {
    let primitives = alloc::vec![quad(
        v(2.0, 0.0, 1.0),
        -Vector3::x(),
        Vector3::y(),
        [4.0, 4.0],
        checker([0.9, 0.85, 0.3], [0.15, 0.25, 0.6], 0.25),
    )];
    let waypoints = [-0.3, -0.1, 0.1, 0.3]
        .into_iter()
        .map(|y| Waypoint {
            position: v(0.0, y, 1.0),
            look_at: v(2.0, y, 1.0),
        })
        .collect();
    let mut spec = SceneSpec {
        name: "checker-plane".into(),
        primitives,
        waypoints,
        ..Default::default()
    };
    spec.camera.width = 32;
    spec.camera.height = 32;
    spec
}
