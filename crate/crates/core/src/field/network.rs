//! Fully-connected layers over a flat parameter vector.

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Softplus and its derivative (the logistic sigmoid) sharing one `exp`.
pub fn softplus_with_slope(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let q = 1.0 + e;
    let slope = if z >= 0.0 { 1.0 / q } else { e / q };
    (z.max(0.0) + q.ln(), slope)
}

/// Dot product with four independent partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense layer `z = W x + b` with `W` stored row-major at `weights`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: usize,
    pub bias: usize,
}

impl Dense {
    pub fn at(offset: usize, inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: offset,
            bias: offset + inputs * outputs,
        }
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    pub fn end(&self) -> usize {
        self.bias + self.outputs
    }

    pub fn forward(&self, params: &[f64], x: &[f64], z: &mut [f64]) {
        let w = &params[self.weights..self.bias];
        let b = &params[self.bias..self.end()];
        for (o, zo) in z.iter_mut().enumerate().take(self.outputs) {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *zo = b[o] + dot(row, x);
        }
    }

    /// Weight-only product `W x`.
    pub fn apply_weights(&self, params: &[f64], x: &[f64], z: &mut [f64]) {
        let w = &params[self.weights..self.bias];
        for (o, zo) in z.iter_mut().enumerate().take(self.outputs) {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *zo = dot(row, x);
        }
    }

    /// `W^T dz`.
    pub fn transpose_mul(&self, params: &[f64], dz: &[f64], dx: &mut [f64]) {
        let w = &params[self.weights..self.bias];
        dx.iter_mut().take(self.inputs).for_each(|v| *v = 0.0);
        for (o, &g) in dz.iter().enumerate().take(self.outputs) {
            if g == 0.0 {
                continue;
            }
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            for (d, a) in dx.iter_mut().zip(row) {
                *d += g * a;
            }
        }
    }

    /// Accumulates `dW += dz x^T` and, if `with_bias`, `db += dz`.
    pub fn accumulate(&self, x: &[f64], dz: &[f64], grads: &mut [f64], with_bias: bool) {
        let (gw, gb) = grads[self.weights..self.end()].split_at_mut(self.inputs * self.outputs);
        for (o, &g) in dz.iter().enumerate().take(self.outputs) {
            if g == 0.0 {
                continue;
            }
            let row = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for (d, v) in row.iter_mut().zip(x) {
                *d += g * v;
            }
            if with_bias {
                gb[o] += g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_match_closed_forms() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        for z in [-30.0, -2.0, 0.0, 0.7, 40.0] {
            let (v, d) = softplus_with_slope(z);
            assert!((v - softplus(z)).abs() < 1e-15);
            assert!((d - sigmoid(z)).abs() < 1e-15);
        }
        let a: [f64; 7] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(dot(&a, &a), 140.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn linear_layer_gradient_is_input() {
        // loss = sum(W x + b) => dW[o][i] = x[i], db = 1
        let layer = Dense::at(0, 3, 2);
        let params = [0.1, 0.2, 0.3, -0.4, 0.5, -0.6, 0.01, 0.02];
        let x = [1.5, -2.0, 0.25];
        let mut z = [0.0; 2];
        layer.forward(&params, &x, &mut z);
        assert!((z[0] - (0.15 - 0.4 + 0.075 + 0.01)).abs() < 1e-12);
        let mut grads = [0.0; 8];
        layer.accumulate(&x, &[1.0, 1.0], &mut grads, true);
        assert_eq!(&grads[..6], &[1.5, -2.0, 0.25, 1.5, -2.0, 0.25]);
        assert_eq!(&grads[6..], &[1.0, 1.0]);
    }
}
