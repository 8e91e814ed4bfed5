use super::{check_point, norm, GeometryError, Polyhedron, QuadraticSuperlevel};

const STACK_DIM: usize = 16;

#[derive(Debug, Clone)]
pub enum TargetShape {
    Polyhedron(Polyhedron),
    Quadratic(QuadraticSuperlevel),
}

impl TargetShape {
    fn dim(&self) -> usize {
        match self {
            Self::Polyhedron(p) => p.dim(),
            Self::Quadratic(q) => q.dim(),
        }
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        match self {
            Self::Polyhedron(p) => p.project(x),
            Self::Quadratic(q) => q.project(x),
        }
    }

    fn distance(&self, x: &[f64]) -> Result<f64, GeometryError> {
        match self {
            Self::Polyhedron(p) => p.distance(x),
            Self::Quadratic(q) => q.distance(x),
        }
    }

    fn distance_within(
        &self,
        x: &[f64],
        u: f64,
        hint: &mut f64,
    ) -> Result<Option<f64>, GeometryError> {
        match self {
            Self::Polyhedron(p) => p.distance_within(x, u),
            Self::Quadratic(q) => q.distance_within_warm(x, u, hint),
        }
    }
}

/// A closed convex set `scale · shape` not containing the origin.
///
/// Queries against the scaled set are answered on the unscaled shape:
/// `d(x, sE) = s · d(x / s, E)`.
#[derive(Debug, Clone)]
pub struct ConvexTarget {
    shape: TargetShape,
    scale: f64,
}

impl From<Polyhedron> for ConvexTarget {
    fn from(p: Polyhedron) -> Self {
        Self {
            shape: TargetShape::Polyhedron(p),
            scale: 1.0,
        }
    }
}

impl From<QuadraticSuperlevel> for ConvexTarget {
    fn from(q: QuadraticSuperlevel) -> Self {
        Self {
            shape: TargetShape::Quadratic(q),
            scale: 1.0,
        }
    }
}

impl ConvexTarget {
    pub fn shape(&self) -> &TargetShape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// The set multiplied by `factor` (compounding any existing scale).
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(GeometryError::InvalidScale(factor));
        }
        Ok(Self {
            shape: self.shape.clone(),
            scale: self.scale * factor,
        })
    }

    /// The rarity-indexed member `E_r = (r / |x*|) E` of the family, whose
    /// min-norm point has norm exactly `r`.
    pub fn at_rarity(&self, r: f64) -> Result<Self, GeometryError> {
        let x_star = norm(&self.min_norm_point()?);
        self.scaled(r / x_star)
    }

    fn with_unscaled<R>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        if self.scale == 1.0 {
            return f(x);
        }
        let inv = 1.0 / self.scale;
        if x.len() <= STACK_DIM {
            let mut buf = [0.0; STACK_DIM];
            for (b, v) in buf.iter_mut().zip(x) {
                *b = v * inv;
            }
            f(&buf[..x.len()])
        } else {
            let y: Vec<f64> = x.iter().map(|v| v * inv).collect();
            f(&y)
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        check_point(x, self.dim())?;
        let mut p = self.with_unscaled(x, |y| self.shape.project(y))?;
        if self.scale != 1.0 {
            p.iter_mut().for_each(|v| *v *= self.scale);
        }
        Ok(p)
    }

    /// `d(x, E)`; zero exactly on the set.
    pub fn distance(&self, x: &[f64]) -> Result<f64, GeometryError> {
        check_point(x, self.dim())?;
        Ok(self.scale * self.with_unscaled(x, |y| self.shape.distance(y))?)
    }

    /// `Some(d(x, E))` when `d(x, E) <= u`, otherwise `None`. Cheaper than
    /// [`distance`](Self::distance) for points provably farther than `u`.
    pub fn distance_within(&self, x: &[f64], u: f64) -> Result<Option<f64>, GeometryError> {
        let mut hint = 0.0;
        self.distance_within_warm(x, u, &mut hint)
    }

    /// [`distance_within`](Self::distance_within) carrying a per-point
    /// solver state between calls. Only quadratic sets use it (as the
    /// starting multiplier); the result does not depend on it beyond
    /// solver tolerance.
    pub fn distance_within_warm(
        &self,
        x: &[f64],
        u: f64,
        hint: &mut f64,
    ) -> Result<Option<f64>, GeometryError> {
        check_point(x, self.dim())?;
        let s = self.scale;
        let d = self.with_unscaled(x, |y| self.shape.distance_within(y, u / s, hint))?;
        Ok(d.map(|d| d * s).filter(|&d| d <= u))
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, GeometryError> {
        Ok(self.distance(x)? == 0.0)
    }

    /// The point of the set closest to the origin.
    pub fn min_norm_point(&self) -> Result<Vec<f64>, GeometryError> {
        let p = self.project(&vec![0.0; self.dim()])?;
        if norm(&p) == 0.0 {
            return Err(GeometryError::ContainsOrigin);
        }
        Ok(p)
    }

    /// Membership in the inflated set `{x : d(x, E) <= u}`.
    pub fn inflate_membership(&self, x: &[f64], u: f64) -> Result<bool, GeometryError> {
        if u.is_nan() || u < 0.0 {
            return Err(GeometryError::NonFinite);
        }
        Ok(self.distance_within(x, u)?.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_base() -> ConvexTarget {
        Polyhedron::from_pairs(&[(vec![1.0, -5.0], 1.0), (vec![1.0, 5.0], 1.0)])
            .unwrap()
            .into()
    }

    #[test]
    fn rarity_scaling_places_min_norm_point() {
        let e = toy_base();
        for r in [2.0, 3.0, 4.0, 5.0] {
            let x = e.at_rarity(r).unwrap().min_norm_point().unwrap();
            assert!((x[0] - r).abs() < 1e-12 && x[1].abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_distance_matches_direct_construction() {
        let scaled = toy_base().at_rarity(3.0).unwrap();
        let direct: ConvexTarget =
            Polyhedron::from_pairs(&[(vec![1.0, -5.0], 3.0), (vec![1.0, 5.0], 3.0)])
                .unwrap()
                .into();
        for x in [[0.0, 0.0], [2.5, 0.3], [4.0, 2.0], [3.5, 0.0]] {
            let a = scaled.distance(&x).unwrap();
            let b = direct.distance(&x).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inflate_membership_on_boundary() {
        let e: ConvexTarget = Polyhedron::from_pairs(&[(vec![1.0, 0.0], 4.0)]).unwrap().into();
        assert!(e.inflate_membership(&[3.25, 0.0], 0.75).unwrap());
        assert!(!e.inflate_membership(&[3.0, 0.0], 0.75).unwrap());
        assert!(e.inflate_membership(&[5.0, 1.0], 0.0).unwrap());
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(toy_base().scaled(0.0).is_err());
        assert!(toy_base().scaled(f64::NAN).is_err());
    }
}
