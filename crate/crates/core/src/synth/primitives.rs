use alloc::vec::Vec;
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Rgb;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Smallest accepted hit distance.
pub const HIT_EPS: f64 = 1e-9;

/// Surface albedo as a function of surface coordinates (m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Texture {
    Uniform { color: Rgb },
    Checker { a: Rgb, b: Rgb, size: f64 },
    /// Nearest-texel lookup, tiled every `width * texel` by `height * texel` meters.
    Image { width: usize, height: usize, texel: f64, pixels: Vec<Rgb> },
}

impl Texture {
    pub fn albedo(&self, uv: [f64; 2]) -> Rgb {
        match self {
            Texture::Uniform { color } => *color,
            Texture::Checker { a, b, size } => {
                let k = (uv[0] / size).floor() as i64 + (uv[1] / size).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
            Texture::Image {
                width,
                height,
                texel,
                pixels,
            } => {
                let i = ((uv[0] / texel).floor() as i64).rem_euclid(*width as i64) as usize;
                let j = ((uv[1] / texel).floor() as i64).rem_euclid(*height as i64) as usize;
                pixels[j * width + i]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Texture::Checker { size, .. } if !(*size > 0.0) => Err(invalid("checker size must be positive")),
            Texture::Image {
                width,
                height,
                texel,
                pixels,
            } if pixels.len() != width * height || *width == 0 || !(*texel > 0.0) => {
                Err(invalid("image texture dimensions are inconsistent"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Plane through `point` with unit `normal`; bounded to a rectangle of
    /// half extents along `u_axis` and `normal × u_axis` when given.
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
        u_axis: Vector3<f64>,
        half_extent: Option<[f64; 2]>,
    },
    /// Axis-aligned box.
    Box { min: Vector3<f64>, max: Vector3<f64> },
    Sphere { center: Vector3<f64>, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
}

/// Geometric hit with the outward (not ray-facing) surface normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeHit {
    pub t: f64,
    pub normal: Vector3<f64>,
    pub uv: [f64; 2],
}

fn plane_frame(normal: &Vector3<f64>, u_axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let n = normal.normalize();
    let u = (u_axis - n * n.dot(u_axis)).normalize();
    (n, u, n.cross(&u))
}

impl Shape {
    pub fn plane(point: Vector3<f64>, normal: Vector3<f64>, u_axis: Vector3<f64>, half_extent: [f64; 2]) -> Self {
        Shape::Plane {
            point,
            normal,
            u_axis,
            half_extent: Some(half_extent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Plane { normal, u_axis, half_extent, .. } => {
                if normal.norm() < 1e-9 || normal.cross(u_axis).norm() < 1e-9 {
                    return Err(invalid("plane needs a non-zero normal and a u axis not parallel to it"));
                }
                if half_extent.is_some_and(|h| !(h[0] > 0.0 && h[1] > 0.0)) {
                    return Err(invalid("plane half extents must be positive"));
                }
            }
            Shape::Box { min, max } => {
                if (0..3).any(|a| !(max[a] > min[a])) {
                    return Err(invalid("box max must exceed min on every axis"));
                }
            }
            Shape::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(invalid("sphere radius must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<ShapeHit> {
        match self {
            Shape::Plane {
                point,
                normal,
                u_axis,
                half_extent,
            } => {
                let (n, u, v) = plane_frame(normal, u_axis);
                let denom = n.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = n.dot(&(point - o)) / denom;
                if !(t > HIT_EPS) {
                    return None;
                }
                let local = o + d * t - point;
                let uv = [local.dot(&u), local.dot(&v)];
                if let Some(h) = half_extent {
                    if uv[0].abs() > h[0] || uv[1].abs() > h[1] {
                        return None;
                    }
                }
                Some(ShapeHit { t, normal: n, uv })
            }
            Shape::Box { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let (mut a0, mut a1) = (0, 0);
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / d[a];
                    let (mut ta, mut tb) = ((min[a] - o[a]) * inv, (max[a] - o[a]) * inv);
                    if ta > tb {
                        core::mem::swap(&mut ta, &mut tb);
                    }
                    if ta > t0 {
                        t0 = ta;
                        a0 = a;
                    }
                    if tb < t1 {
                        t1 = tb;
                        a1 = a;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, axis) = if t0 > HIT_EPS {
                    (t0, a0)
                } else if t1 > HIT_EPS {
                    (t1, a1)
                } else {
                    return None;
                };
                let p = o + d * t;
                let mut normal = Vector3::zeros();
                let mid = (min[axis] + max[axis]) * 0.5;
                normal[axis] = if p[axis] > mid { 1.0 } else { -1.0 };
                let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
                Some(ShapeHit {
                    t,
                    normal,
                    uv: [p[i], p[j]],
                })
            }
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = if -b - s > HIT_EPS {
                    -b - s
                } else if -b + s > HIT_EPS {
                    -b + s
                } else {
                    return None;
                };
                let n = (o + d * t - center) / *radius;
                Some(ShapeHit {
                    t,
                    normal: n,
                    uv: [n.y.atan2(n.x) * radius, n.z * radius],
                })
            }
        }
    }

    /// Surface area (m²); infinite for unbounded planes.
    pub fn area(&self) -> f64 {
        match self {
            Shape::Plane { half_extent, .. } => half_extent.map_or(f64::INFINITY, |h| 4.0 * h[0] * h[1]),
            Shape::Box { min, max } => {
                let e = max - min;
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
            Shape::Sphere { radius, .. } => 4.0 * core::f64::consts::PI * radius * radius,
        }
    }

    /// Uniform area sample: position, outward normal and surface coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(Vector3<f64>, Vector3<f64>, [f64; 2])> {
        match self {
            Shape::Plane {
                point,
                normal,
                u_axis,
                half_extent,
            } => {
                let h = (*half_extent)?;
                let (n, u, v) = plane_frame(normal, u_axis);
                let uv = [rng.random_range(-h[0]..=h[0]), rng.random_range(-h[1]..=h[1])];
                Some((point + u * uv[0] + v * uv[1], n, uv))
            }
            Shape::Box { min, max } => {
                let e = max - min;
                let faces = [e.y * e.z, e.y * e.z, e.z * e.x, e.z * e.x, e.x * e.y, e.x * e.y];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut face = 5;
                for (i, a) in faces.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let axis = face / 2;
                let mut p = Vector3::new(
                    rng.random_range(min.x..=max.x),
                    rng.random_range(min.y..=max.y),
                    rng.random_range(min.z..=max.z),
                );
                let mut n = Vector3::zeros();
                if face % 2 == 0 {
                    p[axis] = min[axis];
                    n[axis] = -1.0;
                } else {
                    p[axis] = max[axis];
                    n[axis] = 1.0;
                }
                let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
                Some((p, n, [p[i], p[j]]))
            }
            Shape::Sphere { center, radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let phi: f64 = rng.random_range(0.0..core::f64::consts::TAU);
                let r = (1.0 - z * z).max(0.0).sqrt();
                let n = Vector3::new(r * phi.cos(), r * phi.sin(), z);
                Some((center + n * *radius, n, [n.y.atan2(n.x) * radius, n.z * radius]))
            }
        }
    }

    /// Distance from `p` to the surface (exact for all three shapes).
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Plane {
                point,
                normal,
                u_axis,
                half_extent,
            } => {
                let (n, u, v) = plane_frame(normal, u_axis);
                let local = p - point;
                let off = local.dot(&n);
                match half_extent {
                    None => off.abs(),
                    Some(h) => {
                        let du = (local.dot(&u).abs() - h[0]).max(0.0);
                        let dv = (local.dot(&v).abs() - h[1]).max(0.0);
                        (off * off + du * du + dv * dv).sqrt()
                    }
                }
            }
            Shape::Box { min, max } => {
                let outside = Vector3::from_fn(|a, _| (min[a] - p[a]).max(p[a] - max[a]).max(0.0));
                if outside.norm() > 0.0 {
                    outside.norm()
                } else {
                    (0..3).map(|a| (p[a] - min[a]).min(max[a] - p[a])).fold(f64::INFINITY, f64::min)
                }
            }
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
        }
    }
}
