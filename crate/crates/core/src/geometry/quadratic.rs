use super::{check_point, GeometryError};

const DUAL_MAX_ITERS: usize = 200;
const STACK_DIM: usize = 16;

/// `{x : a + Σ (b_i x_i + c_i x_i²) >= threshold}` with every `c_i <= 0`.
///
/// The quadratic is separable and concave, so the superlevel set is convex and
/// projections reduce to a scalar root-finding problem in the multiplier `λ`:
/// `y_i(λ) = (x_i + λ b_i) / (1 - 2 λ c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSuperlevel {
    a: f64,
    b: Vec<f64>,
    c: Vec<f64>,
    threshold: f64,
    // Largest (least negative) curvature coefficient.
    c_max: f64,
}

impl QuadraticSuperlevel {
    pub fn new(a: f64, b: Vec<f64>, c: Vec<f64>, threshold: f64) -> Result<Self, GeometryError> {
        if b.is_empty() {
            return Err(GeometryError::NoDimensions);
        }
        if b.len() != c.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: b.len(),
                found: c.len(),
            });
        }
        if !a.is_finite()
            || !threshold.is_finite()
            || b.iter().chain(&c).any(|v| !v.is_finite())
        {
            return Err(GeometryError::NonFinite);
        }
        if let Some((index, &value)) = c.iter().enumerate().find(|(_, v)| **v > 0.0) {
            return Err(GeometryError::NonConvex { index, value });
        }
        if a >= threshold {
            return Err(GeometryError::ContainsOrigin);
        }
        let c_max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let set = Self {
            a,
            b,
            c,
            threshold,
            c_max,
        };
        if set.supremum() < threshold {
            return Err(GeometryError::EmptySet);
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.a
            + x.iter()
                .zip(&self.b)
                .zip(&self.c)
                .map(|((x, b), c)| b * x + c * x * x)
                .sum::<f64>()
    }

    /// Supremum of the quadratic over all of R^n (may be infinite).
    pub fn supremum(&self) -> f64 {
        self.a
            + self
                .b
                .iter()
                .zip(&self.c)
                .map(|(&b, &c)| {
                    if c < 0.0 {
                        b * b / (-4.0 * c)
                    } else if b != 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.value(x) >= self.threshold
    }

    fn residual_tol(&self) -> f64 {
        1e-12 * self.threshold.abs().max(self.a.abs()).max(1.0)
    }

    /// Largest increase of `q` over a ball of radius `u` around a point where
    /// the gradient has norm `grad`: by concavity and `c_i <= c_max`,
    /// `q(x + v) <= q(x) + grad t + c_max t²` with `t = |v|`.
    fn ball_gain(&self, grad: f64, u: f64) -> f64 {
        if self.c_max < 0.0 {
            let t_peak = grad / (-2.0 * self.c_max);
            if t_peak < u {
                return grad * grad / (-4.0 * self.c_max);
            }
        }
        grad * u + self.c_max * u * u
    }

    /// Solves for the multiplier of the projection of an infeasible `x`
    /// starting from `start`, returning the last iterate and the distance,
    /// or `None` for the distance once it is known to exceed `limit`.
    ///
    /// The residual `g(λ) = q(y(λ)) - ℓ` is increasing and concave, so after
    /// at most one step every Newton iterate lies left of the root. The step
    /// length `|y(λ) - x| = λ |(b + 2cx) / (1 - 2λc)|` increases with `λ`, so
    /// at such iterates it bounds the distance from below. A bisection
    /// fallback covers round-off trouble.
    fn solve_dual(
        &self,
        x: &[f64],
        limit: f64,
        start: f64,
    ) -> Result<(f64, Option<f64>), GeometryError> {
        let n = self.dim();
        let mut stack = [0.0; STACK_DIM];
        let mut heap = Vec::new();
        let grad: &mut [f64] = if n <= STACK_DIM {
            &mut stack[..n]
        } else {
            heap.resize(n, 0.0);
            &mut heap
        };
        for ((gi, (&xi, &bi)), &ci) in grad.iter_mut().zip(x.iter().zip(&self.b)).zip(&self.c) {
            *gi = bi + 2.0 * ci * xi;
        }
        let tol = self.residual_tol();
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut lambda = if start > 0.0 && start.is_finite() { start } else { 0.0 };
        let mut last_g = f64::NAN;
        for _ in 0..DUAL_MAX_ITERS {
            let (mut g, mut dg, mut step_sq) = (self.a - self.threshold, 0.0, 0.0);
            for (((&xi, &bi), &ci), &gi) in x.iter().zip(&self.b).zip(&self.c).zip(grad.iter()) {
                let inv = 1.0 / (1.0 - 2.0 * lambda * ci);
                let yi = (xi + lambda * bi) * inv;
                g += yi * (bi + ci * yi);
                let t = gi * inv;
                step_sq += t * t;
                dg += t * t * inv;
            }
            last_g = g;
            let dist = lambda * step_sq.sqrt();
            if g.abs() <= tol {
                return Ok((lambda, (dist <= limit).then_some(dist)));
            }
            if g > 0.0 {
                hi = hi.min(lambda);
            } else {
                if dist > limit {
                    return Ok((lambda, None));
                }
                lo = lo.max(lambda);
            }
            let mut next = lambda - g / dg;
            if !(next.is_finite() && next > lo && next < hi) {
                next = if hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    2.0 * lo.max(1.0)
                };
            }
            if (next - lambda).abs() <= f64::EPSILON * lambda.abs() {
                return Ok((lambda, (dist <= limit).then_some(dist)));
            }
            lambda = next;
        }
        Err(GeometryError::NotConverged {
            iterations: DUAL_MAX_ITERS,
            residual: last_g.abs(),
        })
    }

    /// Multiplier of the projection of an infeasible `x`.
    pub fn dual_multiplier(&self, x: &[f64]) -> Result<f64, GeometryError> {
        check_point(x, self.dim())?;
        Ok(self.solve_dual(x, f64::INFINITY, 0.0)?.0)
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        check_point(x, self.dim())?;
        if self.contains(x) {
            return Ok(x.to_vec());
        }
        let lambda = self.dual_multiplier(x)?;
        Ok(x
            .iter()
            .zip(&self.b)
            .zip(&self.c)
            .map(|((&xi, &bi), &ci)| (xi + lambda * bi) / (1.0 - 2.0 * lambda * ci))
            .collect())
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64, GeometryError> {
        check_point(x, self.dim())?;
        Ok(self.distance_within(x, f64::INFINITY)?.unwrap_or(f64::INFINITY))
    }

    /// Distance if it is at most `u`, `None` otherwise.
    pub fn distance_within(&self, x: &[f64], u: f64) -> Result<Option<f64>, GeometryError> {
        let mut hint = 0.0;
        self.distance_within_warm(x, u, &mut hint)
    }

    /// [`distance_within`](Self::distance_within) with the multiplier search
    /// started from `hint`, which is updated with the last iterate. A hint
    /// from a nearby point saves most Newton steps.
    pub fn distance_within_warm(
        &self,
        x: &[f64],
        u: f64,
        hint: &mut f64,
    ) -> Result<Option<f64>, GeometryError> {
        let q = self.value(x);
        if q >= self.threshold {
            return Ok(Some(0.0));
        }
        if u.is_finite() {
            let grad = x
                .iter()
                .zip(&self.b)
                .zip(&self.c)
                .map(|((x, b), c)| {
                    let g = b + 2.0 * c * x;
                    g * g
                })
                .sum::<f64>()
                .sqrt();
            if q + self.ball_gain(grad, u) < self.threshold {
                return Ok(None);
            }
        }
        let (lambda, d) = self.solve_dual(x, u, *hint)?;
        *hint = lambda;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerates_to_halfspace() {
        let q = QuadraticSuperlevel::new(0.0, vec![1.0, 0.0], vec![0.0, 0.0], 2.0).unwrap();
        let p = q.project(&[0.0, 0.0]).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        assert!((q.distance(&[-1.0, 5.0]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ball_projection_is_radial() {
        // 9 - (x-3)^2 - y^2 >= 5  <=>  |(x, y) - (3, 0)| <= 2
        let q = QuadraticSuperlevel::new(0.0, vec![6.0, 0.0], vec![-1.0, -1.0], 5.0).unwrap();
        let p = q.project(&[0.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-10 && p[1].abs() < 1e-10);
        let d = q.distance(&[3.0, 5.0]).unwrap();
        assert!((d - 3.0).abs() < 1e-10);
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(
            QuadraticSuperlevel::new(0.0, vec![1.0], vec![0.5], 1.0),
            Err(GeometryError::NonConvex { index: 0, .. })
        ));
        assert_eq!(
            QuadraticSuperlevel::new(3.0, vec![1.0], vec![-1.0], 1.0),
            Err(GeometryError::ContainsOrigin)
        );
        // sup = 1/4 < 1
        assert_eq!(
            QuadraticSuperlevel::new(0.0, vec![1.0], vec![-1.0], 1.0),
            Err(GeometryError::EmptySet)
        );
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let q = QuadraticSuperlevel::new(1.0, vec![-3.0, -1.0, 2.0], vec![-0.5, -2.0, -0.1], 6.0).unwrap();
        let points = [[-1.0, 0.0, 1.0], [-0.5, -0.3, 0.9], [0.0, 0.0, 0.0], [2.0, 1.0, -1.0]];
        for hint0 in [0.0, 1e-3, 0.5, 10.0] {
            for x in points {
                let cold = q.distance_within(&x, 5.0).unwrap();
                let mut hint = hint0;
                let warm = q.distance_within_warm(&x, 5.0, &mut hint).unwrap();
                match (cold, warm) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-10, "{a} {b}"),
                    (a, b) => assert_eq!(a.is_some(), b.is_some()),
                }
            }
        }
    }

    #[test]
    fn within_rejection_is_exact() {
        let q = QuadraticSuperlevel::new(0.0, vec![6.0, 0.0], vec![-1.0, -1.0], 5.0).unwrap();
        for x in [[0.0, 0.0], [-2.0, 1.0], [3.0, 2.5], [6.0, -1.0]] {
            let d = q.distance(&x).unwrap();
            for u in [0.1, 0.9, 1.1, 4.0] {
                let w = q.distance_within(&x, u).unwrap();
                assert_eq!(w.is_some(), d <= u, "x={x:?} u={u} d={d}");
            }
        }
    }
}
