use serde::{Deserialize, Serialize};

use super::EstimatorError;

/// Bisection tolerance on the bracket width, relative to `x1*`.
pub const TOL_REL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 200;

const LO_START: f64 = 1e-6;
const HI_START: f64 = 0.999;
const LO_EXPANSIONS: usize = 6;
const HI_EXPANSIONS: usize = 3;
const HI_SHRINKS: usize = 60;

/// Search interval `0 < u_lo < u_hi < x1*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootBracket {
    pub u_lo: f64,
    pub u_hi: f64,
}

impl RootBracket {
    pub fn new(u_lo: f64, u_hi: f64, x1_star: f64) -> Result<Self, EstimatorError> {
        if !(u_lo > 0.0 && u_lo < u_hi && u_hi < x1_star) {
            return Err(EstimatorError::InvalidBracket {
                u_lo,
                u_hi,
                x1_star,
            });
        }
        Ok(Self { u_lo, u_hi })
    }

    /// Default starting interval `[1e-6 x1*, 0.999 x1*]`.
    pub fn initial(x1_star: f64) -> Self {
        Self {
            u_lo: LO_START * x1_star,
            u_hi: HI_START * x1_star,
        }
    }

    pub fn width(&self) -> f64 {
        self.u_hi - self.u_lo
    }
}

/// Final bisection state. `u_hat` is the right end `hi`, the probed point
/// with `h(hi) > target` closest to the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootOutcome {
    pub u_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub h_lo: f64,
    pub h_hi: f64,
    pub iterations: usize,
}

impl RootOutcome {
    /// `h(hi) - h(lo)`: how far the function jumps across the final bracket.
    /// Near zero at a continuity point; large when the empirical function
    /// steps over the target.
    pub fn jump(&self) -> f64 {
        self.h_hi - self.h_lo
    }
}

/// Bisection keeping `h(lo) <= target < h(hi)`.
///
/// On a piecewise function with several crossings this converges to one of
/// them. Whenever a midpoint exceeds the target the search continues to its
/// left, so a crossing that some probe has exposed is never skipped in
/// favour of one further right.
pub fn find_root<F>(
    mut h: F,
    target: f64,
    bracket: RootBracket,
    tol_u: f64,
    max_iterations: usize,
) -> Result<RootOutcome, EstimatorError>
where
    F: FnMut(f64) -> Result<f64, EstimatorError>,
{
    let (mut lo, mut hi) = (bracket.u_lo, bracket.u_hi);
    let mut h_lo = h(lo)?;
    let mut h_hi = h(hi)?;
    if !(h_lo <= target && target < h_hi) {
        return Err(EstimatorError::Bracket {
            u_lo: lo,
            u_hi: hi,
            h_lo,
            h_hi,
            target,
        });
    }
    let mut iterations = 0;
    while hi - lo > tol_u && iterations < max_iterations {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid)?;
        iterations += 1;
        if hm > target {
            hi = mid;
            h_hi = hm;
        } else if hm <= target {
            lo = mid;
            h_lo = hm;
        } else {
            // NaN inside the bracket: treat as unusable and shrink from the right.
            hi = mid;
        }
    }
    Ok(RootOutcome {
        u_hat: hi,
        lo,
        hi,
        h_lo,
        h_hi,
        iterations,
    })
}

/// Finds an interval `[u_lo, u_hi] ⊂ (0, x1*)` with `h(u_lo) <= target < h(u_hi)`.
///
/// Starts from [`RootBracket::initial`]. A non-finite `h(u_hi)` pulls `u_hi`
/// inwards; `u_lo` is divided by ten (up to six times) while `h(u_lo)` is
/// still above target; `u_hi` is moved towards `x1*` (up to three times)
/// while `h(u_hi)` is still at or below it. Anything else is a bracketing
/// failure reporting both end values.
pub fn auto_bracket<F>(h: &mut F, target: f64, x1_star: f64) -> Result<RootBracket, EstimatorError>
where
    F: FnMut(f64) -> Result<f64, EstimatorError>,
{
    let RootBracket { mut u_lo, mut u_hi } = RootBracket::initial(x1_star);
    let mut h_hi = h(u_hi)?;
    let mut shrinks = 0;
    while !h_hi.is_finite() && shrinks < HI_SHRINKS {
        u_hi = u_lo + 0.9 * (u_hi - u_lo);
        h_hi = h(u_hi)?;
        shrinks += 1;
    }
    let mut h_lo = h(u_lo)?;
    for _ in 0..LO_EXPANSIONS {
        if h_lo <= target {
            break;
        }
        u_lo *= 0.1;
        h_lo = h(u_lo)?;
    }
    if shrinks == 0 {
        for _ in 0..HI_EXPANSIONS {
            if h_hi > target {
                break;
            }
            u_hi = x1_star - 0.1 * (x1_star - u_hi);
            h_hi = h(u_hi)?;
        }
    }
    if h_lo <= target && target < h_hi {
        Ok(RootBracket { u_lo, u_hi })
    } else {
        Err(EstimatorError::Bracket {
            u_lo,
            u_hi,
            h_lo,
            h_hi,
            target,
        })
    }
}

/// [`auto_bracket`] followed by [`find_root`] at the default tolerances.
pub fn solve<F>(mut h: F, target: f64, x1_star: f64) -> Result<(RootBracket, RootOutcome), EstimatorError>
where
    F: FnMut(f64) -> Result<f64, EstimatorError>,
{
    let bracket = auto_bracket(&mut h, target, x1_star)?;
    let outcome = find_root(h, target, bracket, TOL_REL * x1_star, MAX_ITERATIONS)?;
    Ok((bracket, outcome))
}
