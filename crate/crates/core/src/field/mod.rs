//! Trainable radiance field: hash-grid encoding, a density head and a
//! view/appearance-dependent color head over one flat parameter vector.
//!
//! Besides the usual reverse pass, [`RadianceField::backward_sample`] also
//! differentiates the analytic density gradient `∇σ(x)` with respect to the
//! parameters, which the surface-normal loss needs.

mod contraction;
mod hashgrid;
mod network;

pub use contraction::{contract, Contraction};
pub use hashgrid::{spatial_hash, HashGridEncoding, LevelLookup};
pub use network::{dot, sigmoid, softplus, softplus_with_slope, Dense};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub levels: usize,
    pub base_resolution: u32,
    pub max_resolution: u32,
    pub log2_table_size: u32,
    pub features_per_level: usize,
    pub density_hidden: usize,
    pub geometry_features: usize,
    pub color_hidden: usize,
    pub color_layers: usize,
    pub direction_frequencies: usize,
    pub appearance_dim: usize,
    /// Rows of the per-frame appearance table.
    pub num_frames: usize,
    pub contraction: Contraction,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            base_resolution: 16,
            max_resolution: 512,
            log2_table_size: 15,
            features_per_level: 2,
            density_hidden: 64,
            geometry_features: 15,
            color_hidden: 64,
            color_layers: 2,
            direction_frequencies: 4,
            appearance_dim: 8,
            num_frames: 0,
            contraction: Contraction::Infinity,
            seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 {
            return Err(invalid("hash grid needs at least one level and one feature"));
        }
        if self.base_resolution == 0 || self.max_resolution < self.base_resolution {
            return Err(invalid("hash grid resolutions must satisfy 0 < base <= max"));
        }
        if self.log2_table_size == 0 || self.log2_table_size > 26 {
            return Err(invalid("log2 table size must be in [1, 26]"));
        }
        if self.density_hidden == 0 || self.color_hidden == 0 {
            return Err(invalid("hidden layers must be non-empty"));
        }
        Ok(())
    }

    pub fn direction_dim(&self) -> usize {
        3 + 6 * self.direction_frequencies
    }
}

/// Maps world coordinates (meters) into normalized scene units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneNormalization {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl Default for SceneNormalization {
    fn default() -> Self {
        Self {
            center: Vector3::zeros(),
            scale: 1.0,
        }
    }
}

impl SceneNormalization {
    /// Fits the bounding box of `positions` into the unit cube. Boxes with a
    /// half extent below `min_half_extent` are padded to it.
    pub fn from_positions(positions: &[Vector3<f64>], min_half_extent: f64) -> Self {
        if positions.is_empty() {
            return Self::default();
        }
        let mut lo = positions[0];
        let mut hi = positions[0];
        for p in positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let half = ((hi - lo) * 0.5).amax().max(min_half_extent);
        Self {
            center: (lo + hi) * 0.5,
            scale: 1.0 / half,
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (x - self.center) * self.scale
    }
}

/// Output of one field query.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOutput {
    pub sigma: f64,
    pub rgb: [f64; 3],
    pub geometry: Vec<f64>,
}

/// Upstream loss gradients at the outputs of one field query.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OutputGrad {
    pub sigma: f64,
    pub rgb: [f64; 3],
    pub density_gradient: Option<Vector3<f64>>,
}

/// Intermediate values of one forward pass, reused by the backward pass.
#[derive(Clone, Debug)]
pub struct SampleCache {
    lookups: Vec<LevelLookup>,
    encoding: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    hidden_slope: Vec<f64>,
    density_out: Vec<f64>,
    color_input: Vec<f64>,
    color_pre: Vec<Vec<f64>>,
    color_act: Vec<Vec<f64>>,
    color_slope: Vec<Vec<f64>>,
    rgb: [f64; 3],
    appearance_row: Option<usize>,
    jacobian: Matrix3<f64>,
    has_color: bool,
    scratch_e: Vec<f64>,
    scratch_e2: Vec<f64>,
    scratch_h: Vec<f64>,
    scratch_h2: Vec<f64>,
    scratch_out: Vec<f64>,
    scratch_c: Vec<f64>,
    scratch_c2: Vec<f64>,
}

impl SampleCache {
    pub fn sigma(&self) -> f64 {
        softplus(self.density_out[0])
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb
    }

    pub fn geometry(&self) -> &[f64] {
        &self.density_out[1..]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField {
    config: FieldConfig,
    normalization: SceneNormalization,
    encoding: HashGridEncoding,
    density_hidden: Dense,
    density_out: Dense,
    color: Vec<Dense>,
    appearance_offset: usize,
    params: Vec<f64>,
}

impl RadianceField {
    /// Builds a field with seeded initial parameters: hash features uniform in
    /// `[-1e-4, 1e-4]`, Kaiming-uniform weights, zero biases and zero
    /// appearance codes.
    pub fn new(config: FieldConfig, normalization: SceneNormalization) -> Result<Self> {
        let mut field = Self::with_zero_params(config, normalization)?;
        let mut rng = ChaCha8Rng::seed_from_u64(field.config.seed);
        let enc_end = field.encoding.offset() + field.encoding.param_count();
        for p in &mut field.params[..enc_end] {
            *p = rng.random_range(-1e-4..=1e-4);
        }
        let layers: Vec<Dense> = [field.density_hidden, field.density_out]
            .into_iter()
            .chain(field.color.iter().copied())
            .collect();
        for layer in layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for p in &mut field.params[layer.weights..layer.bias] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(field)
    }

    /// Same architecture with every parameter zero.
    pub fn with_zero_params(config: FieldConfig, normalization: SceneNormalization) -> Result<Self> {
        config.validate()?;
        if !(normalization.scale > 0.0 && normalization.scale.is_finite()) {
            return Err(invalid("scene scale must be positive and finite"));
        }
        let table = 1usize << config.log2_table_size;
        let encoding = HashGridEncoding::new(
            config.levels,
            config.base_resolution,
            config.max_resolution,
            table,
            config.features_per_level,
            0,
        );
        let mut offset = encoding.param_count();
        let density_hidden = Dense::at(offset, encoding.output_dim(), config.density_hidden);
        offset = density_hidden.end();
        let density_out = Dense::at(offset, config.density_hidden, 1 + config.geometry_features);
        offset = density_out.end();
        let mut color = Vec::new();
        let mut inputs = config.geometry_features + config.direction_dim() + config.appearance_dim;
        for _ in 0..config.color_layers {
            let layer = Dense::at(offset, inputs, config.color_hidden);
            offset = layer.end();
            inputs = config.color_hidden;
            color.push(layer);
        }
        let out = Dense::at(offset, inputs, 3);
        offset = out.end();
        color.push(out);
        let appearance_offset = offset;
        let total = offset + config.num_frames * config.appearance_dim;
        Ok(Self {
            config,
            normalization,
            encoding,
            density_hidden,
            density_out,
            color,
            appearance_offset,
            params: vec![0.0; total],
        })
    }

    pub fn from_params(config: FieldConfig, normalization: SceneNormalization, params: Vec<f64>) -> Result<Self> {
        let mut field = Self::with_zero_params(config, normalization)?;
        if params.len() != field.params.len() {
            return Err(invalid(format!(
                "parameter vector has {} entries, architecture needs {}",
                params.len(),
                field.params.len()
            )));
        }
        field.params = params;
        Ok(field)
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn normalization(&self) -> &SceneNormalization {
        &self.normalization
    }

    pub fn encoding(&self) -> &HashGridEncoding {
        &self.encoding
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter index range of the appearance table.
    pub fn appearance_range(&self) -> core::ops::Range<usize> {
        self.appearance_offset..self.params.len()
    }

    /// Parameter index range of the hash tables.
    pub fn encoding_range(&self) -> core::ops::Range<usize> {
        0..self.encoding.param_count()
    }

    fn appearance_row(&self, frame: Option<usize>) -> Option<usize> {
        frame.filter(|&f| f < self.config.num_frames)
    }

    pub fn new_cache(&self) -> SampleCache {
        let e = self.encoding.output_dim();
        let h = self.config.density_hidden;
        let color_in = self.color[0].inputs;
        let widest = self.color.iter().map(|l| l.inputs.max(l.outputs)).max().unwrap_or(0);
        SampleCache {
            lookups: vec![LevelLookup::default(); self.encoding.levels()],
            encoding: vec![0.0; e],
            hidden_pre: vec![0.0; h],
            hidden: vec![0.0; h],
            hidden_slope: vec![0.0; h],
            density_out: vec![0.0; 1 + self.config.geometry_features],
            color_input: vec![0.0; color_in],
            color_pre: self.color.iter().map(|l| vec![0.0; l.outputs]).collect(),
            color_act: self.color.iter().map(|l| vec![0.0; l.outputs]).collect(),
            color_slope: self.color.iter().map(|l| vec![0.0; l.outputs]).collect(),
            rgb: [0.0; 3],
            appearance_row: None,
            jacobian: Matrix3::identity(),
            has_color: false,
            scratch_e: vec![0.0; e],
            scratch_e2: vec![0.0; e],
            scratch_h: vec![0.0; h],
            scratch_h2: vec![0.0; h],
            scratch_out: vec![0.0; 1 + self.config.geometry_features],
            scratch_c: vec![0.0; widest],
            scratch_c2: vec![0.0; widest],
        }
    }

    /// Density path only; the color head is skipped.
    pub fn forward_density(&self, x: &Vector3<f64>, cache: &mut SampleCache) -> f64 {
        let xn = self.normalization.apply(x);
        let (c, jac) = self.config.contraction.apply_with_jacobian(&xn);
        cache.jacobian = jac * self.normalization.scale;
        self.encoding
            .encode_into(&self.params, &c, &mut cache.encoding, &mut cache.lookups);
        self.density_hidden
            .forward(&self.params, &cache.encoding, &mut cache.hidden_pre);
        for ((h, d), &z) in cache.hidden.iter_mut().zip(&mut cache.hidden_slope).zip(&cache.hidden_pre) {
            (*h, *d) = softplus_with_slope(z);
        }
        self.density_out
            .forward(&self.params, &cache.hidden, &mut cache.density_out);
        cache.has_color = false;
        softplus(cache.density_out[0])
    }

    /// Full forward pass. `direction_encoding` comes from
    /// [`RadianceField::encode_direction`].
    pub fn forward(
        &self,
        x: &Vector3<f64>,
        direction_encoding: &[f64],
        frame: Option<usize>,
        cache: &mut SampleCache,
    ) -> (f64, [f64; 3]) {
        let sigma = self.forward_density(x, cache);
        let g = self.config.geometry_features;
        let a = self.config.appearance_dim;
        let dd = direction_encoding.len();
        cache.color_input[..g].copy_from_slice(&cache.density_out[1..]);
        cache.color_input[g..g + dd].copy_from_slice(direction_encoding);
        cache.appearance_row = self.appearance_row(frame);
        match cache.appearance_row {
            Some(row) => {
                let start = self.appearance_offset + row * a;
                cache.color_input[g + dd..].copy_from_slice(&self.params[start..start + a]);
            }
            None => cache.color_input[g + dd..].iter_mut().for_each(|v| *v = 0.0),
        }
        let last = self.color.len() - 1;
        for (i, layer) in self.color.iter().enumerate() {
            let (prev, rest) = cache.color_act.split_at_mut(i);
            let input: &[f64] = if i == 0 { &cache.color_input } else { &prev[i - 1] };
            layer.forward(&self.params, input, &mut cache.color_pre[i]);
            let act = &mut rest[0];
            let slope = &mut cache.color_slope[i];
            for ((y, d), &z) in act.iter_mut().zip(slope.iter_mut()).zip(&cache.color_pre[i]) {
                if i == last {
                    *y = sigmoid(z);
                } else {
                    (*y, *d) = softplus_with_slope(z);
                }
            }
        }
        let out = &cache.color_act[last];
        cache.rgb = [out[0], out[1], out[2]];
        cache.has_color = true;
        (sigma, cache.rgb)
    }

    /// Analytic `∂σ/∂x` (world coordinates) from a recorded forward pass.
    pub fn density_gradient_cached(&self, cache: &mut SampleCache) -> Vector3<f64> {
        let s = sigmoid(cache.density_out[0]);
        let w2 = &self.params[self.density_out.weights..self.density_out.weights + self.config.density_hidden];
        for ((a, &sp), &w) in cache.scratch_h.iter_mut().zip(&cache.hidden_slope).zip(w2) {
            *a = w * sp;
        }
        self.density_hidden
            .transpose_mul(&self.params, &cache.scratch_h, &mut cache.scratch_e);
        let dc = self
            .encoding
            .jacobian_transpose_mul(&self.params, &cache.lookups, &cache.scratch_e)
            * s;
        cache.jacobian.transpose() * dc
    }

    /// Encodes a unit view direction with `direction_frequencies` octaves.
    pub fn encode_direction(&self, d: &Vector3<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.direction_dim());
        out.extend_from_slice(d.as_slice());
        let mut freq = core::f64::consts::PI;
        for _ in 0..self.config.direction_frequencies {
            for k in 0..3 {
                out.push((freq * d[k]).sin());
                out.push((freq * d[k]).cos());
            }
            freq *= 2.0;
        }
        out
    }

    /// Checked single query returning density, color and geometry features.
    pub fn field_eval(&self, x: &Vector3<f64>, d: &Vector3<f64>, frame: Option<usize>) -> Result<FieldOutput> {
        check_unit(d)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(invalid("field query position must be finite"));
        }
        let mut cache = self.new_cache();
        let (sigma, rgb) = self.forward(x, &self.encode_direction(d), frame, &mut cache);
        Ok(FieldOutput {
            sigma,
            rgb,
            geometry: cache.geometry().to_vec(),
        })
    }

    pub fn density(&self, x: &Vector3<f64>) -> f64 {
        let mut cache = self.new_cache();
        self.forward_density(x, &mut cache)
    }

    pub fn density_gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let mut cache = self.new_cache();
        self.forward_density(x, &mut cache);
        self.density_gradient_cached(&mut cache)
    }

    /// Accumulates parameter gradients of one query into `grads`.
    pub fn backward_sample(&self, cache: &mut SampleCache, upstream: &OutputGrad, grads: &mut [f64]) {
        let g = self.config.geometry_features;
        let dd = self.config.direction_dim();
        let a = self.config.appearance_dim;
        let dh_len = self.config.density_hidden;
        cache.scratch_out.iter_mut().for_each(|v| *v = 0.0);

        let color_active = cache.has_color && upstream.rgb.iter().any(|&v| v != 0.0);
        if color_active {
            let dz = &mut cache.scratch_c;
            for k in 0..3 {
                let y = cache.rgb[k];
                dz[k] = upstream.rgb[k] * y * (1.0 - y);
            }
            for i in (0..self.color.len()).rev() {
                let layer = self.color[i];
                let input: &[f64] = if i == 0 { &cache.color_input } else { &cache.color_act[i - 1] };
                layer.accumulate(input, &cache.scratch_c[..layer.outputs], grads, true);
                layer.transpose_mul(&self.params, &cache.scratch_c[..layer.outputs], &mut cache.scratch_c2);
                if i > 0 {
                    for (j, v) in cache.scratch_c2[..layer.inputs].iter_mut().enumerate() {
                        *v *= cache.color_slope[i - 1][j];
                    }
                }
                core::mem::swap(&mut cache.scratch_c, &mut cache.scratch_c2);
            }
            let dinput = &cache.scratch_c;
            cache.scratch_out[1..].copy_from_slice(&dinput[..g]);
            if let Some(row) = cache.appearance_row {
                let start = self.appearance_offset + row * a;
                for (dst, src) in grads[start..start + a].iter_mut().zip(&dinput[g + dd..g + dd + a]) {
                    *dst += src;
                }
            }
        }

        let s = sigmoid(cache.density_out[0]);
        cache.scratch_out[0] = upstream.sigma * s;
        cache.scratch_h2.iter_mut().for_each(|v| *v = 0.0);

        if let Some(dgrad) = upstream.density_gradient {
            // L = s * (W1 J_e G_c) . (w2 ⊙ softplus'(z1)), G_c = jac * dgrad
            let gc = cache.jacobian * dgrad;
            self.encoding
                .jacobian_mul(&self.params, &cache.lookups, &gc, &mut cache.scratch_e);
            self.density_hidden
                .apply_weights(&self.params, &cache.scratch_e, &mut cache.scratch_h);
            let w2_start = self.density_out.weights;
            let mut p = 0.0;
            for j in 0..dh_len {
                let zdir = cache.scratch_h[j];
                let w2 = self.params[w2_start + j];
                let sp = cache.hidden_slope[j];
                let spp = sp * (1.0 - sp);
                p += zdir * w2 * sp;
                grads[w2_start + j] += s * zdir * sp;
                cache.scratch_h2[j] = s * zdir * w2 * spp;
                // beta
                cache.scratch_h[j] = s * w2 * sp;
            }
            self.density_hidden
                .accumulate(&cache.scratch_e, &cache.scratch_h, grads, false);
            self.density_hidden
                .transpose_mul(&self.params, &cache.scratch_h, &mut cache.scratch_e2);
            self.encoding
                .backward_jacobian(&cache.lookups, &cache.scratch_e2, &gc, grads);
            cache.scratch_out[0] += p * s * (1.0 - s);
        }

        if cache.scratch_out.iter().all(|&v| v == 0.0) && cache.scratch_h2.iter().all(|&v| v == 0.0) {
            return;
        }
        self.density_out
            .accumulate(&cache.hidden, &cache.scratch_out, grads, true);
        self.density_out
            .transpose_mul(&self.params, &cache.scratch_out, &mut cache.scratch_h);
        for j in 0..dh_len {
            cache.scratch_h[j] = cache.scratch_h[j] * cache.hidden_slope[j] + cache.scratch_h2[j];
        }
        self.density_hidden
            .accumulate(&cache.encoding, &cache.scratch_h, grads, true);
        self.density_hidden
            .transpose_mul(&self.params, &cache.scratch_h, &mut cache.scratch_e);
        self.encoding.backward(&cache.lookups, &cache.scratch_e, grads);
    }
}

pub(crate) fn check_unit(d: &Vector3<f64>) -> Result<()> {
    let n = d.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("view direction must be unit length (norm {n})")));
    }
    Ok(())
}

/// Records forward passes so that parameter gradients can be pulled back
/// from output gradients.
#[derive(Clone, Debug, Default)]
pub struct FieldTape {
    entries: Vec<SampleCache>,
}

/// Outputs of one recorded query.
#[derive(Clone, Debug, PartialEq)]
pub struct TapeOutput {
    pub sigma: f64,
    pub rgb: [f64; 3],
    pub density_gradient: Vector3<f64>,
}

impl FieldTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn record(
        &mut self,
        field: &RadianceField,
        x: &Vector3<f64>,
        d: &Vector3<f64>,
        frame: Option<usize>,
    ) -> Result<TapeOutput> {
        check_unit(d)?;
        let mut cache = field.new_cache();
        let (sigma, rgb) = field.forward(x, &field.encode_direction(d), frame, &mut cache);
        let density_gradient = field.density_gradient_cached(&mut cache);
        self.entries.push(cache);
        Ok(TapeOutput {
            sigma,
            rgb,
            density_gradient,
        })
    }

    /// Gradient of the scalar loss with respect to every parameter, reduced
    /// in recording order.
    pub fn backward(&mut self, field: &RadianceField, upstream: &[OutputGrad]) -> Result<Vec<f64>> {
        if self.entries.is_empty() {
            return Err(Error::State("backward called before any forward pass was recorded".into()));
        }
        if upstream.len() != self.entries.len() {
            return Err(Error::State(format!(
                "{} upstream gradients for {} recorded queries",
                upstream.len(),
                self.entries.len()
            )));
        }
        let mut grads = vec![0.0; field.param_count()];
        for (cache, up) in self.entries.iter_mut().zip(upstream) {
            field.backward_sample(cache, up, &mut grads);
        }
        Ok(grads)
    }
}

#[cfg(test)]
pub(crate) mod tests;
