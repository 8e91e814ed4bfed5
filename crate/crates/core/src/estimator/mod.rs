//! The three estimation pipelines: distributionally robust importance
//! sampling (DRIS), crude Monte Carlo and exponential twisting.
//!
//! Each pipeline draws one batch, locates `û = inf{u : ĥ_N(u) > δ²}` by
//! bisection on that batch, evaluates `p̂_N(û)` on the same batch and
//! estimates the asymptotic variance `Var(P − H/û²)` of the plug-in estimate.

mod root;

pub use root::{auto_bracket, find_root, solve, RootBracket, RootOutcome, MAX_ITERATIONS, TOL_REL};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CanonicalFrame, ConvexTarget, GeometryError};
use crate::sampler::{
    self, draw_batch, draw_normal_batch, kernel_sums, kernel_sums_warm, values_within, ExponentialShift,
    KernelValues, MeanShift, Nominal, Proposal, RngStream, SampleBatch, SamplerError,
};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("delta must be positive and finite (got {0})")]
    InvalidDelta(f64),
    #[error("need at least 2 samples for a variance (got {0})")]
    TooFewSamples(usize),
    #[error("u_hat must be positive (got {0})")]
    InvalidU(f64),
    #[error("invalid bracket [{u_lo}, {u_hi}] for x1* = {x1_star}")]
    InvalidBracket { u_lo: f64, u_hi: f64, x1_star: f64 },
    #[error("cannot bracket h = {target:e}: h({u_lo:e}) = {h_lo:e}, h({u_hi:e}) = {h_hi:e}")]
    Bracket {
        u_lo: f64,
        u_hi: f64,
        h_lo: f64,
        h_hi: f64,
        target: f64,
    },
    #[error("crude MC cannot bracket h = {target:e}: {hits} of the samples lie within {u_hi:e} of the set, giving h({u_hi:e}) = {h_hi:e}")]
    McBracket {
        hits: usize,
        u_hi: f64,
        h_hi: f64,
        target: f64,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "dris", alias = "DRIS")]
    Dris,
    #[serde(rename = "crude_mc", alias = "mc", alias = "MC")]
    CrudeMc,
    #[serde(rename = "exp_twist", alias = "et", alias = "ET")]
    ExpTwist,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::CrudeMc, MethodKind::ExpTwist, MethodKind::Dris];

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Dris => "DRIS",
            Self::CrudeMc => "MC",
            Self::ExpTwist => "ET",
        }
    }

    /// Stable tag for RNG stream derivation.
    pub fn tag(self) -> u64 {
        match self {
            Self::CrudeMc => 0,
            Self::ExpTwist => 1,
            Self::Dris => 2,
        }
    }

    pub fn run(
        self,
        set: &ConvexTarget,
        delta: f64,
        n: usize,
        rng: RngStream,
    ) -> Result<DrisResult, EstimatorError> {
        match self {
            Self::Dris => run_dris(set, delta, n, rng),
            Self::CrudeMc => run_crude_mc(set, delta, n, rng),
            Self::ExpTwist => run_exp_twist(set, delta, n, rng),
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dris" => Ok(Self::Dris),
            "mc" | "crude_mc" | "crudemc" => Ok(Self::CrudeMc),
            "et" | "exp_twist" | "exptwist" => Ok(Self::ExpTwist),
            other => Err(format!("unknown method '{other}' (expected dris, mc or et)")),
        }
    }
}

/// Output of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrisResult {
    pub method: MethodKind,
    pub u_hat: f64,
    pub p_hat: f64,
    pub h_hat: f64,
    /// Estimate of `Var(P(Z, u*) - H(Z, u*) / u*²)`.
    pub asym_var: f64,
    pub ci_halfwidth: f64,
    pub n_samples: usize,
    pub root_iterations: usize,
    pub wall_time: f64,
    pub x1_star: f64,
    /// `ĥ_N` just right minus just left of `û`.
    pub jump: f64,
    pub bracket: RootBracket,
}

impl DrisResult {
    /// 95% CI half-width over `p̂`.
    pub fn rel_err95(&self) -> f64 {
        self.ci_halfwidth / self.p_hat
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.p_hat - self.ci_halfwidth, self.p_hat + self.ci_halfwidth)
    }
}

fn check_delta(delta: f64) -> Result<f64, EstimatorError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(EstimatorError::InvalidDelta(delta));
    }
    Ok(delta * delta)
}

fn check_u(u: f64) -> Result<(), EstimatorError> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(EstimatorError::InvalidU(u));
    }
    Ok(())
}

/// `ĥ_N(u)` for the DRIS transform.
pub fn empirical_h(
    batch: &SampleBatch,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
) -> Result<f64, EstimatorError> {
    let shift = ExponentialShift::new(u, frame.x1_star())?;
    Ok(kernel_sums(batch, &shift, u, frame, set)?.h)
}

/// `p̂_N(u)` for the DRIS transform.
pub fn empirical_p(
    batch: &SampleBatch,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
) -> Result<f64, EstimatorError> {
    let shift = ExponentialShift::new(u, frame.x1_star())?;
    Ok(kernel_sums(batch, &shift, u, frame, set)?.p)
}

/// Unbiased variance of `N` values of which only `nonzero` may differ from 0.
fn sparse_variance(nonzero: &[f64], n: usize) -> Result<f64, EstimatorError> {
    if n < 2 {
        return Err(EstimatorError::TooFewSamples(n));
    }
    let mean = sampler::chunked_mean(nonzero) * nonzero.len() as f64 / n as f64;
    let ss: f64 = nonzero.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
        + (n - nonzero.len()) as f64 * mean * mean;
    Ok((ss / (n - 1) as f64).max(0.0))
}

/// Unbiased sample variance of `P(z_i, û) - H(z_i, û) / û²`.
pub fn estimate_asymptotic_variance(
    kernels: &KernelValues,
    u_hat: f64,
) -> Result<f64, EstimatorError> {
    check_u(u_hat)?;
    let inv = 1.0 / (u_hat * u_hat);
    let terms: Vec<f64> = kernels
        .p_terms()
        .zip(kernels.h_terms())
        .map(|(p, h)| p - h * inv)
        .collect();
    sparse_variance(&terms, terms.len())
}

fn influence_terms(values: &[Option<(f64, f64)>], u: f64) -> Vec<f64> {
    let inv = 1.0 / (u * u);
    values
        .iter()
        .flatten()
        .map(|&(d, l)| l * (1.0 - d * d * inv))
        .collect()
}

/// Shared-batch pipeline for a `u`-dependent proposal.
fn run_weighted<P, M>(
    method: MethodKind,
    batch: &SampleBatch,
    make: M,
    delta: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
    start: Instant,
) -> Result<DrisResult, EstimatorError>
where
    P: Proposal,
    M: Fn(f64) -> Result<P, EstimatorError>,
{
    let target = check_delta(delta)?;
    let x1 = frame.x1_star();
    let mut hints = vec![0.0; batch.len()];
    let h = |u: f64| -> Result<f64, EstimatorError> {
        Ok(kernel_sums_warm(batch, &make(u)?, u, frame, set, &mut hints)?.h)
    };
    let (bracket, root) = solve(h, target, x1)?;
    let u = root.u_hat;
    let proposal = make(u)?;
    let sums = kernel_sums_warm(batch, &proposal, u, frame, set, &mut hints)?;
    let values = values_within(batch, &proposal, u, frame, set)?;
    let asym_var = sparse_variance(&influence_terms(&values, u), batch.len())?;
    let n = batch.len();
    Ok(DrisResult {
        method,
        u_hat: u,
        p_hat: sums.p,
        h_hat: sums.h,
        asym_var,
        ci_halfwidth: Z95 * (asym_var / n as f64).sqrt(),
        n_samples: n,
        root_iterations: root.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        x1_star: x1,
        jump: root.jump(),
        bracket,
    })
}

/// DRIS: `X_1 = w + Y / w` with `w = x1* - u` and `Y ~ Exp(1)` in the
/// canonical frame, on one shared batch.
pub fn run_dris(
    set: &ConvexTarget,
    delta: f64,
    n: usize,
    rng: RngStream,
) -> Result<DrisResult, EstimatorError> {
    let start = Instant::now();
    check_delta(delta)?;
    let frame = CanonicalFrame::new(set)?;
    let batch = draw_batch(rng, n, set.dim())?;
    let x1 = frame.x1_star();
    run_weighted(
        MethodKind::Dris,
        &batch,
        |u| Ok(ExponentialShift::new(u, x1)?),
        delta,
        &frame,
        set,
        start,
    )
}

/// Exponential twisting: `X_1 ~ N(x1* - u, 1)` in the canonical frame; the
/// stored standard-normal batch is shifted per `u`.
pub fn run_exp_twist(
    set: &ConvexTarget,
    delta: f64,
    n: usize,
    rng: RngStream,
) -> Result<DrisResult, EstimatorError> {
    let start = Instant::now();
    check_delta(delta)?;
    let frame = CanonicalFrame::new(set)?;
    let batch = draw_normal_batch(rng, n, set.dim())?;
    let x1 = frame.x1_star();
    run_weighted(
        MethodKind::ExpTwist,
        &batch,
        |u| {
            if !(u > 0.0 && u < x1) {
                return Err(SamplerError::Domain { u, x1_star: x1 }.into());
            }
            Ok(MeanShift::new(x1 - u))
        },
        delta,
        &frame,
        set,
        start,
    )
}

/// Crude Monte Carlo under N(0, I). Samples do not move with `u`, so
/// distances are computed once and `ĥ_N` is read off sorted prefix sums.
pub fn run_crude_mc(
    set: &ConvexTarget,
    delta: f64,
    n: usize,
    rng: RngStream,
) -> Result<DrisResult, EstimatorError> {
    let start = Instant::now();
    let target = check_delta(delta)?;
    let frame = CanonicalFrame::new(set)?;
    let batch = draw_normal_batch(rng, n, set.dim())?;
    let x1 = frame.x1_star();
    // Any root lies below x1*, so farther samples never enter a kernel.
    let mut dist: Vec<f64> = values_within(&batch, &Nominal, x1, &frame, set)?
        .into_iter()
        .flatten()
        .map(|(d, _)| d)
        .collect();
    dist.sort_by(f64::total_cmp);
    let mut prefix = Vec::with_capacity(dist.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for d in &dist {
        acc += d * d;
        prefix.push(acc);
    }
    let nf = n as f64;
    let hits = |u: f64| dist.partition_point(|&d| d <= u);
    let h = |u: f64| Ok(prefix[hits(u)] / nf);
    let (bracket, root) = match solve(h, target, x1) {
        Err(EstimatorError::Bracket { u_hi, h_hi, .. }) if h_hi <= target => {
            return Err(EstimatorError::McBracket {
                hits: hits(u_hi),
                u_hi,
                h_hi,
                target,
            })
        }
        other => other?,
    };
    let u = root.u_hat;
    let k = hits(u);
    let inv = 1.0 / (u * u);
    let terms: Vec<f64> = dist[..k].iter().map(|d| 1.0 - d * d * inv).collect();
    let asym_var = sparse_variance(&terms, n)?;
    Ok(DrisResult {
        method: MethodKind::CrudeMc,
        u_hat: u,
        p_hat: k as f64 / nf,
        h_hat: prefix[k] / nf,
        asym_var,
        ci_halfwidth: Z95 * (asym_var / nf).sqrt(),
        n_samples: n,
        root_iterations: root.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        x1_star: x1,
        jump: root.jump(),
        bracket,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyhedron;
    use crate::normal;
    use crate::oracle;
    use crate::sampler::eval_kernels;

    fn halfspace(r: f64) -> ConvexTarget {
        Polyhedron::from_pairs(&[(vec![1.0], r)]).unwrap().into()
    }

    fn toy(r: f64) -> ConvexTarget {
        Polyhedron::from_pairs(&[(vec![1.0, -5.0], r), (vec![1.0, 5.0], r)])
            .unwrap()
            .into()
    }

    fn within(x: f64, reference: f64, se: f64, k: f64) -> bool {
        (x - reference).abs() <= k * se
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodKind::ALL {
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<MethodKind>(&json).unwrap(), m);
            assert_eq!(m.label().parse::<MethodKind>().unwrap(), m);
        }
        assert_eq!(serde_json::from_str::<MethodKind>("\"mc\"").unwrap(), MethodKind::CrudeMc);
        assert!("foo".parse::<MethodKind>().is_err());
    }

    #[test]
    fn empirical_functions_match_one_dimensional_oracle() {
        let set = halfspace(3.0);
        let frame = CanonicalFrame::new(&set).unwrap();
        let batch = draw_batch(RngStream::new(3, 0), 200_000, 1).unwrap();
        let u = 1.0;
        let kv = eval_kernels(&batch, u, &frame, &set).unwrap();
        let n = kv.len() as f64;
        let sd = |t: Vec<f64>| {
            let m = t.iter().sum::<f64>() / n;
            (t.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        };
        let p = empirical_p(&batch, u, &frame, &set).unwrap();
        let h = empirical_h(&batch, u, &frame, &set).unwrap();
        assert!(within(p, normal::sf(2.0), sd(kv.p_terms().collect()), 3.0), "{p}");
        assert!(within(h, oracle::quad_h_1d(3.0, u), sd(kv.h_terms().collect()), 3.0), "{h}");
        // Tiny u: only points of the set itself remain, at distance 0.
        assert_eq!(empirical_h(&batch, 1e-14, &frame, &set).unwrap(), 0.0);
        let p0 = empirical_p(&batch, 1e-14, &frame, &set).unwrap();
        assert!((p0 / normal::sf(3.0) - 1.0).abs() < 0.02, "{p0}");
    }

    #[test]
    fn h_bounded_by_u_squared_p() {
        let set = toy(3.0);
        let frame = CanonicalFrame::new(&set).unwrap();
        let batch = draw_batch(RngStream::new(4, 0), 20_000, 2).unwrap();
        for u in [0.01, 0.1, 0.5, 1.5, 2.9] {
            let h = empirical_h(&batch, u, &frame, &set).unwrap();
            let p = empirical_p(&batch, u, &frame, &set).unwrap();
            assert!(h <= u * u * p * (1.0 + 1e-12));
        }
    }

    #[test]
    fn variance_edge_cases() {
        let zeros = KernelValues {
            dist: vec![1.0; 10],
            lik: vec![0.5; 10],
            indicator: vec![false; 10],
        };
        assert_eq!(estimate_asymptotic_variance(&zeros, 0.5).unwrap(), 0.0);
        let constant = KernelValues {
            dist: vec![0.2; 10],
            lik: vec![0.5; 10],
            indicator: vec![true; 10],
        };
        assert!(estimate_asymptotic_variance(&constant, 0.5).unwrap() < 1e-30);
        let one = KernelValues {
            dist: vec![0.2],
            lik: vec![0.5],
            indicator: vec![true],
        };
        assert!(matches!(
            estimate_asymptotic_variance(&one, 0.5),
            Err(EstimatorError::TooFewSamples(1))
        ));
        assert!(estimate_asymptotic_variance(&constant, 0.0).is_err());
    }

    #[test]
    fn sparse_variance_matches_dense() {
        let dense = [0.0, 0.0, 1.5, 0.0, -0.25, 3.0, 0.0];
        let nonzero = [1.5, -0.25, 3.0];
        let m = dense.iter().sum::<f64>() / 7.0;
        let v = dense.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 6.0;
        assert!((sparse_variance(&nonzero, 7).unwrap() - v).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_pipelines_match_oracle() {
        let (r, delta) = (4.0, 0.01);
        let (u_star, p_star) = oracle::solve_1d(r, delta).unwrap();
        let set = halfspace(r);
        for m in MethodKind::ALL {
            let n = if m == MethodKind::CrudeMc { 2_000_000 } else { 100_000 };
            let res = m.run(&set, delta, n, RngStream::new(10, m.tag())).unwrap();
            assert!(
                (res.p_hat - p_star).abs() <= 3.0 * res.ci_halfwidth,
                "{m}: p {} vs {p_star} ± {}",
                res.p_hat,
                res.ci_halfwidth
            );
            assert!((res.u_hat / u_star - 1.0).abs() < 0.05, "{m}: u {} vs {u_star}", res.u_hat);
            assert!(res.h_hat <= res.u_hat * res.u_hat * res.p_hat * (1.0 + 1e-12));
            assert!(res.u_hat > 0.0 && res.u_hat < res.x1_star);
            assert!(res.asym_var >= 0.0);
        }
    }

    #[test]
    fn dris_result_invariants_and_bracket_straddle() {
        let set = toy(3.0);
        let delta = 1e-3;
        let res = run_dris(&set, delta, 50_000, RngStream::new(2, 2)).unwrap();
        let frame = CanonicalFrame::new(&set).unwrap();
        let batch = draw_batch(RngStream::new(2, 2), 50_000, 2).unwrap();
        let lo = res.u_hat - TOL_REL * res.x1_star;
        let h_lo = empirical_h(&batch, lo.max(res.bracket.u_lo), &frame, &set).unwrap();
        let h_hi = empirical_h(&batch, res.u_hat, &frame, &set).unwrap();
        assert!(h_hi > delta * delta);
        assert!(h_lo <= delta * delta || res.jump > 0.0);
        assert_eq!(h_hi, res.h_hat);
        assert!(res.rel_err95() > 0.0 && res.rel_err95() < 0.1);
    }

    #[test]
    fn tiny_delta_recovers_nominal_probability() {
        let r = 2.0;
        let res = run_dris(&halfspace(r), 1e-12, 100_000, RngStream::new(8, 0)).unwrap();
        let p0 = normal::sf(r);
        assert!((res.p_hat / p0 - 1.0).abs() < 0.01, "{} vs {p0}", res.p_hat);
    }

    #[test]
    fn crude_mc_bracket_failure_is_reported() {
        // delta^2 = 100 exceeds h(u) for every u < x1*.
        let err = run_crude_mc(&halfspace(9.0), 10.0, 1000, RngStream::new(1, 1)).unwrap_err();
        assert!(matches!(err, EstimatorError::McBracket { hits, .. } if hits > 0), "{err:?}");
    }

    #[test]
    fn invalid_inputs() {
        let set = halfspace(2.0);
        assert!(matches!(
            run_dris(&set, 0.0, 100, RngStream::new(0, 0)),
            Err(EstimatorError::InvalidDelta(_))
        ));
        assert!(run_exp_twist(&set, 1e-3, 0, RngStream::new(0, 0)).is_err());
    }
}
