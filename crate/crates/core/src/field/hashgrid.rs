//! Multi-resolution hash-grid encoding with trilinear interpolation.
//!
//! Contracted positions in `(-2, 2)^3` are mapped to the unit cube, then each
//! level locates the enclosing cell at its resolution, hashes the eight
//! corner lattice coordinates into a table of `T` entries and blends the
//! corner features trilinearly. Level outputs are concatenated.

use alloc::vec::Vec;
use nalgebra::Vector3;

#[cfg(not(feature = "std"))]
use num_traits::Float;

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Interpolation state for one level: table slots and weights of the 8
/// corners, plus weight derivatives with respect to the contracted position.
#[derive(Clone, Copy, Debug, Default)]
pub struct LevelLookup {
    pub slots: [usize; 8],
    pub weights: [f64; 8],
    pub weight_grads: [[f64; 3]; 8],
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashGridEncoding {
    resolutions: Vec<f64>,
    table_size: usize,
    features: usize,
    /// Offset of the first table in the flat parameter vector.
    offset: usize,
}

pub fn spatial_hash(coords: [u32; 3], table_size: usize) -> usize {
    let h = coords[0].wrapping_mul(PRIMES[0])
        ^ coords[1].wrapping_mul(PRIMES[1])
        ^ coords[2].wrapping_mul(PRIMES[2]);
    (h as usize) % table_size
}

impl HashGridEncoding {
    pub fn new(
        levels: usize,
        base_resolution: u32,
        max_resolution: u32,
        table_size: usize,
        features: usize,
        offset: usize,
    ) -> Self {
        let base = base_resolution as f64;
        let growth = if levels > 1 {
            ((max_resolution as f64).ln() - base.ln()) / (levels - 1) as f64
        } else {
            0.0
        };
        let resolutions = (0..levels)
            .map(|l| (base * (growth * l as f64).exp() + 1e-9).floor())
            .collect();
        Self {
            resolutions,
            table_size,
            features,
            offset,
        }
    }

    pub fn levels(&self) -> usize {
        self.resolutions.len()
    }

    pub fn features_per_level(&self) -> usize {
        self.features
    }

    pub fn output_dim(&self) -> usize {
        self.levels() * self.features
    }

    pub fn table_size(&self) -> usize {
        self.table_size
    }

    pub fn resolution(&self, level: usize) -> f64 {
        self.resolutions[level]
    }

    pub fn param_count(&self) -> usize {
        self.levels() * self.table_size * self.features
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Position of `c` in lattice units of `level`.
    pub fn lattice_position(&self, c: &Vector3<f64>, level: usize) -> Vector3<f64> {
        c.map(|v| (v + 2.0) * 0.25 * self.resolutions[level])
    }

    /// Fills the interpolation state of `level` for contracted point `c`.
    pub fn lookup(&self, c: &Vector3<f64>, level: usize) -> LevelLookup {
        let res = self.resolutions[level];
        let scale = 0.25 * res;
        let mut cell = [0u32; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let pos = ((c[k] + 2.0) * scale).clamp(0.0, res);
            let fl = pos.floor();
            cell[k] = fl as u32;
            frac[k] = pos - fl;
        }
        let base = self.offset + level * self.table_size * self.features;
        let mut out = LevelLookup::default();
        for corner in 0..8 {
            let mut coords = [0u32; 3];
            let mut w = [0.0; 3];
            let mut dw = [0.0; 3];
            for k in 0..3 {
                let bit = (corner >> k) & 1;
                coords[k] = cell[k] + bit as u32;
                if bit == 1 {
                    w[k] = frac[k];
                    dw[k] = scale;
                } else {
                    w[k] = 1.0 - frac[k];
                    dw[k] = -scale;
                }
            }
            out.slots[corner] = base + spatial_hash(coords, self.table_size) * self.features;
            out.weights[corner] = w[0] * w[1] * w[2];
            out.weight_grads[corner] = [dw[0] * w[1] * w[2], w[0] * dw[1] * w[2], w[0] * w[1] * dw[2]];
        }
        out
    }

    /// Encodes `c` into `out` (length `levels * features`), recording lookups.
    pub fn encode_into(
        &self,
        params: &[f64],
        c: &Vector3<f64>,
        out: &mut [f64],
        lookups: &mut [LevelLookup],
    ) {
        let f = self.features;
        for level in 0..self.levels() {
            let lk = self.lookup(c, level);
            let dst = &mut out[level * f..(level + 1) * f];
            dst.iter_mut().for_each(|v| *v = 0.0);
            for corner in 0..8 {
                let w = lk.weights[corner];
                let entry = &params[lk.slots[corner]..lk.slots[corner] + f];
                for (d, e) in dst.iter_mut().zip(entry) {
                    *d += w * e;
                }
            }
            lookups[level] = lk;
        }
    }

    pub fn encode(&self, params: &[f64], c: &Vector3<f64>) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.output_dim()];
        let mut lookups = alloc::vec![LevelLookup::default(); self.levels()];
        self.encode_into(params, c, &mut out, &mut lookups);
        out
    }

    /// `J^T u` where `J = d encode / d c`.
    pub fn jacobian_transpose_mul(&self, params: &[f64], lookups: &[LevelLookup], u: &[f64]) -> Vector3<f64> {
        let f = self.features;
        let mut g = Vector3::zeros();
        for (level, lk) in lookups.iter().enumerate() {
            let ul = &u[level * f..(level + 1) * f];
            for corner in 0..8 {
                let entry = &params[lk.slots[corner]..lk.slots[corner] + f];
                let dot: f64 = entry.iter().zip(ul).map(|(a, b)| a * b).sum();
                let dw = lk.weight_grads[corner];
                g.x += dot * dw[0];
                g.y += dot * dw[1];
                g.z += dot * dw[2];
            }
        }
        g
    }

    /// `J v`: directional derivative of the encoding along `v`.
    pub fn jacobian_mul(&self, params: &[f64], lookups: &[LevelLookup], v: &Vector3<f64>, out: &mut [f64]) {
        let f = self.features;
        for (level, lk) in lookups.iter().enumerate() {
            let dst = &mut out[level * f..(level + 1) * f];
            dst.iter_mut().for_each(|x| *x = 0.0);
            for corner in 0..8 {
                let dw = lk.weight_grads[corner];
                let s = dw[0] * v.x + dw[1] * v.y + dw[2] * v.z;
                let entry = &params[lk.slots[corner]..lk.slots[corner] + f];
                for (d, e) in dst.iter_mut().zip(entry) {
                    *d += s * e;
                }
            }
        }
    }

    /// Accumulates `d loss / d table` given `d loss / d encoding`.
    pub fn backward(&self, lookups: &[LevelLookup], grad_out: &[f64], grads: &mut [f64]) {
        let f = self.features;
        for (level, lk) in lookups.iter().enumerate() {
            let gl = &grad_out[level * f..(level + 1) * f];
            for corner in 0..8 {
                let w = lk.weights[corner];
                let dst = &mut grads[lk.slots[corner]..lk.slots[corner] + f];
                for (d, g) in dst.iter_mut().zip(gl) {
                    *d += w * g;
                }
            }
        }
    }

    /// Accumulates the table gradient of `u^T J v`, which is linear in the
    /// table entries through the weight derivatives.
    pub fn backward_jacobian(&self, lookups: &[LevelLookup], u: &[f64], v: &Vector3<f64>, grads: &mut [f64]) {
        let f = self.features;
        for (level, lk) in lookups.iter().enumerate() {
            let ul = &u[level * f..(level + 1) * f];
            for corner in 0..8 {
                let dw = lk.weight_grads[corner];
                let s = dw[0] * v.x + dw[1] * v.y + dw[2] * v.z;
                let dst = &mut grads[lk.slots[corner]..lk.slots[corner] + f];
                for (d, g) in dst.iter_mut().zip(ul) {
                    *d += s * g;
                }
            }
        }
    }
}
