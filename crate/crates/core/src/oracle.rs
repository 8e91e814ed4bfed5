//! Deterministic ground truth for low-dimensional targets.
//!
//! In one dimension with `E = {x >= r}` the distance is `max(r - x, 0)`, so
//! `h(u) = ∫₀ᵘ t² φ(r - t) dt` and `p(u) = Φ̄(r - u)`. In two dimensions the
//! inflated set meets every horizontal line in an interval (it is convex);
//! the interval is located with the distance oracle and the integrals are
//! computed by iterated adaptive quadrature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexTarget, GeometryError};
use crate::normal;
use crate::quadrature::{integrate, QuadratureError, Tolerance};

/// Half-width of the integration box, in standard deviations.
pub const BOX_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("2-D oracle needs a 2-D target, got dimension {0}")]
    Dimension(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("no root of h(u) = {target:e} in (0, {x1_star}): h ranges over [{h_lo:e}, {h_hi:e}]")]
    NoRoot {
        target: f64,
        x1_star: f64,
        h_lo: f64,
        h_hi: f64,
    },
}

fn tight() -> Tolerance {
    Tolerance {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 4000,
    }
}

/// `h(u) = E₀[d(X, E)²; d(X, E) <= u]` for `E = {x >= r}` in one dimension.
pub fn quad_h_1d(r: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    integrate(|t| t * t * normal::pdf(r - t), 0.0, u, tight())
        .expect("smooth integrand on a bounded interval")
}

/// `p(u) = P₀(d(X, E) <= u) = Φ̄(r - u)` for `E = {x >= r}`.
pub fn quad_p_1d(r: f64, u: f64) -> f64 {
    normal::sf(r - u)
}

fn golden_min(f: &mut impl FnMut(f64) -> Result<f64, GeometryError>, mut a: f64, mut b: f64) -> Result<(f64, f64), GeometryError> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let m = 0.5 * (a + b);
    Ok((m, f(m)?))
}

/// Bisection for the crossing of `f = level` between `inside` (f <= level)
/// and `outside` (f > level).
fn crossing(
    f: &mut impl FnMut(f64) -> Result<f64, GeometryError>,
    mut inside: f64,
    mut outside: f64,
    level: f64,
) -> Result<f64, GeometryError> {
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if f(mid)? <= level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(0.5 * (inside + outside))
}

/// `(h(u), p(u))` for a two-dimensional target, by iterated quadrature over
/// the box `[-10, 10]²`.
pub fn quad_2d(set: &ConvexTarget, u: f64) -> Result<(f64, f64), OracleError> {
    if set.dim() != 2 {
        return Err(OracleError::Dimension(set.dim()));
    }
    let b = BOX_HALF_WIDTH;
    let mut failure: Option<OracleError> = None;
    // Per-line inflated-set section [lo, hi] of x1 at height x2.
    let section = |x2: f64| -> Result<Option<(f64, f64)>, GeometryError> {
        let mut g = |x1: f64| set.distance(&[x1, x2]);
        let (m, gm) = golden_min(&mut g, -b, b)?;
        if gm > u {
            return Ok(None);
        }
        let lo = if g(-b)? <= u { -b } else { crossing(&mut g, m, -b, u)? };
        let hi = if g(b)? <= u { b } else { crossing(&mut g, m, b, u)? };
        Ok(Some((lo, hi)))
    };
    let mut outer = |want_h: bool| {
        let mut err_slot: Option<OracleError> = None;
        let v = integrate(
            |x2| {
                if err_slot.is_some() {
                    return 0.0;
                }
                let inner = match section(x2) {
                    Ok(None) => 0.0,
                    Ok(Some((lo, hi))) if !want_h => normal::interval_mass(lo, hi),
                    Ok(Some((lo, hi))) => {
                        let r = integrate(
                            |x1| match set.distance(&[x1, x2]) {
                                Ok(d) => d * d * normal::pdf(x1),
                                Err(_) => f64::NAN,
                            },
                            lo,
                            hi,
                            tight(),
                        );
                        match r {
                            Ok(v) if v.is_finite() => v,
                            Ok(_) => {
                                err_slot = Some(GeometryError::NonFinite.into());
                                0.0
                            }
                            Err(e) => {
                                err_slot = Some(e.into());
                                0.0
                            }
                        }
                    }
                    Err(e) => {
                        err_slot = Some(e.into());
                        0.0
                    }
                };
                normal::pdf(x2) * inner
            },
            -b,
            b,
            Tolerance {
                abs_tol: 0.0,
                rel_tol: 1e-10,
                max_intervals: 4000,
            },
        );
        if let Some(e) = err_slot {
            failure.get_or_insert(e);
        }
        v
    };
    let h = outer(true);
    let p = outer(false);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((h?, p?))
}

/// Solves `h(u) = δ²` on `(0, x1*)` by bisection of a monotone oracle `h`.
pub fn invert_h(
    mut h: impl FnMut(f64) -> Result<f64, OracleError>,
    delta: f64,
    x1_star: f64,
) -> Result<f64, OracleError> {
    let target = delta * delta;
    let (mut lo, mut hi) = (1e-12 * x1_star, (1.0 - 1e-12) * x1_star);
    let (h_lo, h_hi) = (h(lo)?, h(hi)?);
    if !(h_lo <= target && target < h_hi) {
        return Err(OracleError::NoRoot {
            target,
            x1_star,
            h_lo,
            h_hi,
        });
    }
    while hi - lo > 1e-13 * x1_star {
        let mid = 0.5 * (lo + hi);
        if h(mid)? > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Oracle `(u*, p*)` for the halfspace `{x >= r}`.
pub fn solve_1d(r: f64, delta: f64) -> Result<(f64, f64), OracleError> {
    let u = invert_h(|u| Ok(quad_h_1d(r, u)), delta, r)?;
    Ok((u, quad_p_1d(r, u)))
}

/// Oracle `(u*, p*)` for a two-dimensional target.
pub fn solve_2d(set: &ConvexTarget, delta: f64) -> Result<(f64, f64), OracleError> {
    let x1_star = crate::geometry::CanonicalFrame::new(set)?.x1_star();
    let u = invert_h(|u| Ok(quad_2d(set, u)?.0), delta, x1_star)?;
    Ok((u, quad_2d(set, u)?.1))
}

/// Outcome of the asymptotic sanity checks at one rarity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Distance from the origin to the target (`|x*|`).
    pub r: f64,
    pub u: f64,
    pub p: f64,
    /// `r - u`, the distance from the origin to the inflated set.
    pub gap: f64,
    /// `Φ̄⁻¹(δ²/r²)`.
    #[serde(with = "crate::float_serde")]
    pub gap_upper: f64,
    /// `r² p`.
    pub scaled_p: f64,
    pub gap_ok: bool,
    pub lower_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub tolerance: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.gap_ok && c.lower_ok)
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !(c.gap_ok && c.lower_ok))
    }
}

/// Checks `r - u_r < Φ̄⁻¹(δ²/r²)` and `r² p_r >= δ² (1 - tolerance)` at each
/// `(r, u_r, p_r)`, where `r` is the distance from the origin to the target.
pub fn check_bounds(points: &[(f64, f64, f64)], delta: f64, tolerance: f64) -> BoundReport {
    let d2 = delta * delta;
    let checks = points
        .iter()
        .map(|&(r, u, p)| {
            let level = d2 / (r * r);
            let gap_upper = if level < 1.0 {
                normal::inv_sf(level)
            } else {
                f64::NEG_INFINITY
            };
            let gap = r - u;
            let scaled_p = r * r * p;
            BoundCheck {
                r,
                u,
                p,
                gap,
                gap_upper,
                scaled_p,
                gap_ok: gap < gap_upper,
                lower_ok: scaled_p >= d2 * (1.0 - tolerance),
            }
        })
        .collect();
    BoundReport {
        delta,
        tolerance,
        checks,
    }
}
