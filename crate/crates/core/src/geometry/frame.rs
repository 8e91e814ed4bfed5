use nalgebra::DMatrix;

use super::{dot, norm, ConvexTarget, GeometryError};

/// Orthogonal change of coordinates placing the min-norm point `x*` of a set
/// on the positive first axis: `Q x* = (|x*|, 0, ..., 0)`.
///
/// `Q` is a Householder reflection, hence symmetric and its own inverse, so
/// the same map pulls rotated-frame samples back to set coordinates.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    dim: usize,
    // Unit Householder vector; `None` when x* already lies on the first axis.
    reflector: Option<Vec<f64>>,
    x1_star: f64,
}

impl CanonicalFrame {
    pub fn new(set: &ConvexTarget) -> Result<Self, GeometryError> {
        Self::from_min_norm_point(&set.min_norm_point()?)
    }

    pub fn from_min_norm_point(x_star: &[f64]) -> Result<Self, GeometryError> {
        let dim = x_star.len();
        if dim == 0 {
            return Err(GeometryError::NoDimensions);
        }
        let len = norm(x_star);
        if len.is_nan() || len < 1e-12 {
            return Err(GeometryError::Degenerate { norm: len });
        }
        let mut v: Vec<f64> = x_star.iter().map(|x| x / len).collect();
        v[0] -= 1.0;
        let v_len = norm(&v);
        let reflector = if v_len < 1e-14 {
            None
        } else {
            v.iter_mut().for_each(|x| *x /= v_len);
            Some(v)
        };
        Ok(Self {
            dim,
            reflector,
            x1_star: len,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `|x*|`, the distance from the origin to the set.
    pub fn x1_star(&self) -> f64 {
        self.x1_star
    }

    pub fn is_identity(&self) -> bool {
        self.reflector.is_none()
    }

    /// `x <- Q x`.
    pub fn apply_in_place(&self, x: &mut [f64]) {
        if let Some(v) = &self.reflector {
            let s = 2.0 * dot(v, x);
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi -= s * vi;
            }
        }
    }

    /// Maps a point from set coordinates to the canonical frame.
    pub fn to_canonical(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.apply_in_place(&mut y);
        y
    }

    /// Maps a canonical-frame point back to set coordinates (`Qᵀ y = Q y`).
    pub fn pull_back(&self, y: &[f64]) -> Vec<f64> {
        self.to_canonical(y)
    }

    /// Dense `Q`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut q = DMatrix::identity(self.dim, self.dim);
        if let Some(v) = &self.reflector {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    q[(i, j)] -= 2.0 * v[i] * v[j];
                }
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_axis_gives_identity() {
        let f = CanonicalFrame::from_min_norm_point(&[2.5, 0.0, 0.0]).unwrap();
        assert!(f.is_identity());
        assert_eq!(f.x1_star(), 2.5);
    }

    #[test]
    fn diagonal_point_maps_to_axis() {
        let k = 3.7;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let f = CanonicalFrame::from_min_norm_point(&[k * s, k * s]).unwrap();
        let y = f.to_canonical(&[k * s, k * s]);
        assert!((y[0] - k).abs() < 1e-10 && y[1].abs() < 1e-10);
        let q = f.matrix();
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(2, 2)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn negative_axis_is_reflected_to_positive() {
        let f = CanonicalFrame::from_min_norm_point(&[-2.0, 0.0]).unwrap();
        let y = f.to_canonical(&[-2.0, 0.0]);
        assert!((y[0] - 2.0).abs() < 1e-14 && y[1].abs() < 1e-14);
    }

    #[test]
    fn degenerate_point_rejected() {
        assert!(matches!(
            CanonicalFrame::from_min_norm_point(&[1e-13, 0.0]),
            Err(GeometryError::Degenerate { .. })
        ));
    }
}
