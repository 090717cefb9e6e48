//! Scene contraction squashing unbounded space into the open cube `(-2, 2)^3`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The norm used to decide whether a point is inside the identity region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contraction {
    /// `‖x‖∞`: the identity region is the unit cube and the image is a true cube.
    #[default]
    Infinity,
    /// `‖x‖₂`: the ball variant.
    L2,
}

impl Contraction {
    fn norm_and_grad(self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        match self {
            Contraction::Infinity => {
                let mut k = 0;
                for i in 1..3 {
                    if x[i].abs() > x[k].abs() {
                        k = i;
                    }
                }
                let mut g = Vector3::zeros();
                g[k] = if x[k] >= 0.0 { 1.0 } else { -1.0 };
                (x[k].abs(), g)
            }
            Contraction::L2 => {
                let m = x.norm();
                let g = if m > 0.0 { x / m } else { Vector3::zeros() };
                (m, g)
            }
        }
    }

    /// Contracts `x`; identity when the norm is at most one, otherwise
    /// `(2 - 1/m) x / m`.
    pub fn apply(self, x: &Vector3<f64>) -> Vector3<f64> {
        let (m, _) = self.norm_and_grad(x);
        if m <= 1.0 {
            *x
        } else {
            x * ((2.0 - 1.0 / m) / m)
        }
    }

    /// Contracted point and the Jacobian `dc/dx`.
    pub fn apply_with_jacobian(self, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let (m, dm) = self.norm_and_grad(x);
        if m <= 1.0 {
            return (*x, Matrix3::identity());
        }
        let a = 2.0 / m - 1.0 / (m * m);
        let b = -2.0 / (m * m) + 2.0 / (m * m * m);
        let jac = Matrix3::identity() * a + x * dm.transpose() * b;
        (x * a, jac)
    }
}

/// Checked contraction for user-facing input.
pub fn contract(x: &Vector3<f64>, kind: Contraction) -> Result<Vector3<f64>> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(invalid("contraction input must be finite"));
    }
    Ok(kind.apply(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_inside_unit_cube() {
        let x = Vector3::new(0.3, -0.2, 0.1);
        assert_eq!(contract(&x, Contraction::Infinity).unwrap(), x);
    }

    #[test]
    fn outside_points_follow_formula() {
        let c = contract(&Vector3::new(3.0, 0.0, 0.0), Contraction::Infinity).unwrap();
        assert_relative_eq!(c, Vector3::new(5.0 / 3.0, 0.0, 0.0), epsilon = 1e-12);
        let c = contract(&Vector3::new(0.0, -5.0, 0.0), Contraction::Infinity).unwrap();
        assert_relative_eq!(c, Vector3::new(0.0, -1.8, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(contract(&Vector3::new(f64::NAN, 0.0, 0.0), Contraction::Infinity).is_err());
        assert!(contract(&Vector3::new(f64::INFINITY, 0.0, 0.0), Contraction::L2).is_err());
    }

    #[test]
    fn image_stays_inside_cube() {
        for kind in [Contraction::Infinity, Contraction::L2] {
            for &s in &[1.5, 10.0, 1e3, 1e9] {
                let c = kind.apply(&Vector3::new(s, -0.5 * s, 0.25 * s));
                assert!(c.amax() < 2.0);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = 1e-6;
        for kind in [Contraction::Infinity, Contraction::L2] {
            let x = Vector3::new(2.5, -1.1, 0.7);
            let (_, jac) = kind.apply_with_jacobian(&x);
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (kind.apply(&xp) - kind.apply(&xm)) / (2.0 * h);
                assert_relative_eq!(jac.column(k).into_owned(), fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn continuous_at_unit_boundary() {
        let inside = Contraction::Infinity.apply(&Vector3::new(1.0, 0.2, 0.0));
        let outside = Contraction::Infinity.apply(&Vector3::new(1.0 + 1e-9, 0.2, 0.0));
        assert!((inside - outside).norm() < 1e-8);
    }
}
