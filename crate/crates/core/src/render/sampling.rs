use alloc::vec::Vec;
use rand::Rng;

use super::Ray;

/// Share of the importance pdf spread uniformly over the ray.
const UNIFORM_FLOOR: f64 = 0.01;

/// Sample parameters along a ray with their quadrature spacings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledTs {
    pub ts: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// One sample per stratum of `[near, far]`: jittered with `rng`, midpoints
/// without. Deltas are consecutive differences, the last one the stratum width.
pub fn sample_stratified<R: Rng + ?Sized>(ray: &Ray, n: usize, rng: Option<&mut R>) -> SampledTs {
    let n = n.max(2);
    let width = (ray.far - ray.near) / n as f64;
    let mut ts = Vec::with_capacity(n);
    match rng {
        Some(rng) => {
            for i in 0..n {
                let u: f64 = rng.random();
                ts.push(ray.near + (i as f64 + u) * width);
            }
        }
        None => {
            for i in 0..n {
                ts.push(ray.near + (i as f64 + 0.5) * width);
            }
        }
    }
    let mut deltas: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.push(width);
    SampledTs { ts, deltas }
}

/// Draws `m` samples by inverse CDF over the histogram of `coarse_weights`
/// on the coarse strata (with 1% of the mass spread uniformly) and merges
/// them with the coarse samples. All-zero weights degrade to uniform, i.e.
/// stratified placement.
pub fn sample_importance<R: Rng + ?Sized>(
    ray: &Ray,
    coarse: &SampledTs,
    coarse_weights: &[f64],
    m: usize,
    rng: Option<&mut R>,
) -> SampledTs {
    let n = coarse.ts.len();
    let width = (ray.far - ray.near) / n as f64;
    let total: f64 = coarse_weights.iter().sum();
    let pdf: Vec<f64> = if total > 0.0 && total.is_finite() {
        coarse_weights
            .iter()
            .map(|w| (1.0 - UNIFORM_FLOOR) * w / total + UNIFORM_FLOOR / n as f64)
            .collect()
    } else {
        alloc::vec![1.0 / n as f64; n]
    };
    let mut cdf = Vec::with_capacity(n + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for p in &pdf {
        acc += p;
        cdf.push(acc);
    }
    let norm = acc;

    let mut ts = Vec::with_capacity(n + m);
    ts.extend_from_slice(&coarse.ts);
    let mut rng = rng;
    let mut bin = 0;
    for j in 0..m {
        let jitter = match rng.as_deref_mut() {
            Some(r) => r.random::<f64>(),
            None => 0.5,
        };
        let u = (j as f64 + jitter) / m as f64 * norm;
        while bin + 1 < n && cdf[bin + 1] <= u {
            bin += 1;
        }
        let frac = ((u - cdf[bin]) / pdf[bin]).clamp(0.0, 1.0);
        ts.push(ray.near + (bin as f64 + frac) * width);
    }
    finalize(ray, ts)
}

/// Adds `m` samples spread over `center ± 3 spread` (one per stratum,
/// jittered with `rng`), clipped to the ray bounds, and merges them with
/// `placed`.
pub fn sample_around<R: Rng + ?Sized>(
    ray: &Ray,
    placed: &SampledTs,
    center: f64,
    spread: f64,
    m: usize,
    rng: Option<&mut R>,
) -> SampledTs {
    if m == 0 {
        return placed.clone();
    }
    let lo = (center - 3.0 * spread).max(ray.near);
    let hi = (center + 3.0 * spread).min(ray.far);
    if !(hi > lo) {
        return placed.clone();
    }
    let width = (hi - lo) / m as f64;
    let mut ts = Vec::with_capacity(placed.ts.len() + m);
    ts.extend_from_slice(&placed.ts);
    let mut rng = rng;
    for j in 0..m {
        let jitter = match rng.as_deref_mut() {
            Some(r) => r.random::<f64>(),
            None => 0.5,
        };
        ts.push(lo + (j as f64 + jitter) * width);
    }
    finalize(ray, ts)
}

/// Sorts, separates coincident samples and derives spacings, the last one
/// running to the far bound.
fn finalize(ray: &Ray, mut ts: Vec<f64>) -> SampledTs {
    ts.sort_by(f64::total_cmp);
    let min_gap = 1e-9 * (ray.far - ray.near);
    for i in 1..ts.len() {
        if ts[i] <= ts[i - 1] {
            ts[i] = ts[i - 1] + min_gap;
        }
    }
    let mut deltas: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    let last = ts.last().copied().unwrap_or(ray.near);
    deltas.push((ray.far - last).max(min_gap));
    SampledTs { ts, deltas }
}
