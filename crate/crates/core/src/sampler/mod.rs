//! Sample generation and the changes of measure used by the estimators.
//!
//! A [`SampleBatch`] holds base draws `z`. A [`Proposal`] maps each draw to a
//! point of the canonical frame (where the min-norm point of the target lies
//! on the positive first axis) together with the likelihood ratio of the
//! nominal N(0, I) law against the sampling law. Kernel evaluation pulls the
//! point back to set coordinates and measures its distance to the target.

mod rng;

pub use rng::RngStream;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CanonicalFrame, ConvexTarget, GeometryError};

/// Rows per chunk. Each chunk draws from its own substream and is reduced
/// sequentially; chunk results are then combined in index order.
pub const CHUNK_ROWS: usize = 4096;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("batch needs at least one sample and one dimension (got N={count}, n={dim})")]
    EmptyBatch { count: usize, dim: usize },
    #[error("u = {u} outside (0, x1* = {x1_star})")]
    Domain { u: f64, x1_star: f64 },
    #[error("batch dimension {batch} does not match target dimension {target}")]
    DimensionMismatch { batch: usize, target: usize },
    #[error("{hints} solver hints for {samples} samples")]
    HintLength { hints: usize, samples: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Law of the first coordinate of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstCoordinate {
    Exponential,
    Normal,
}

/// `N` base draws of dimension `n`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dim: usize,
    first: FirstCoordinate,
    data: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn first_coordinate(&self) -> FirstCoordinate {
        self.first
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }
}

fn draw(
    rng: RngStream,
    count: usize,
    dim: usize,
    first: FirstCoordinate,
) -> Result<SampleBatch, SamplerError> {
    if count == 0 || dim == 0 {
        return Err(SamplerError::EmptyBatch { count, dim });
    }
    let mut data = vec![0.0; count * dim];
    data.par_chunks_mut(CHUNK_ROWS * dim)
        .enumerate()
        .for_each(|(chunk, block)| {
            let mut g = rng.substream(chunk as u64);
            for row in block.chunks_exact_mut(dim) {
                row[0] = match first {
                    FirstCoordinate::Exponential => g.sample(Exp1),
                    FirstCoordinate::Normal => g.sample(StandardNormal),
                };
                for v in &mut row[1..] {
                    *v = g.sample(StandardNormal);
                }
            }
        });
    Ok(SampleBatch { dim, first, data })
}

/// Draws `Z = (Y, X_2, ..., X_n)` with `Y ~ Exp(1)` and `X_j ~ N(0, 1)`.
pub fn draw_batch(rng: RngStream, count: usize, dim: usize) -> Result<SampleBatch, SamplerError> {
    draw(rng, count, dim, FirstCoordinate::Exponential)
}

/// Draws `N` iid N(0, I_n) vectors.
pub fn draw_normal_batch(
    rng: RngStream,
    count: usize,
    dim: usize,
) -> Result<SampleBatch, SamplerError> {
    draw(rng, count, dim, FirstCoordinate::Normal)
}

/// Maps a base draw to a canonical-frame point and reports the likelihood
/// ratio `dP₀/dQ` at that point.
pub trait Proposal: Sync {
    /// Writes the point for base draw `z` into `x`.
    fn point(&self, z: &[f64], x: &mut [f64]);

    /// Likelihood ratio at the point generated from `z`.
    fn weight(&self, z: &[f64]) -> f64;

    /// [`point`](Self::point) followed by [`weight`](Self::weight).
    fn map(&self, z: &[f64], x: &mut [f64]) -> f64 {
        self.point(z, x);
        self.weight(z)
    }
}

/// Shifted-exponential first coordinate anchored at `w = x1* - u`:
/// `x_1 = w + z_1 / w`, remaining coordinates passed through.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialShift {
    w: f64,
    inv_w: f64,
    half_inv_w_sq: f64,
    log_scale: f64,
}

impl ExponentialShift {
    pub fn new(u: f64, x1_star: f64) -> Result<Self, SamplerError> {
        let w = x1_star - u;
        if !(u > 0.0 && w > 0.0 && w.is_finite()) {
            return Err(SamplerError::Domain { u, x1_star });
        }
        Ok(Self {
            w,
            inv_w: 1.0 / w,
            half_inv_w_sq: 0.5 / (w * w),
            log_scale: -0.5 * w * w + (FRAC_1_SQRT_2PI / w).ln(),
        })
    }

    /// Left edge `x1* - u` of the sampled first coordinate.
    pub fn anchor(&self) -> f64 {
        self.w
    }

    pub fn likelihood(&self, z1: f64) -> f64 {
        if z1 < 0.0 {
            return 0.0;
        }
        let l = (self.log_scale - z1 * z1 * self.half_inv_w_sq).exp();
        if l < f64::MIN_POSITIVE {
            0.0
        } else {
            l
        }
    }
}

impl Proposal for ExponentialShift {
    #[inline]
    fn point(&self, z: &[f64], x: &mut [f64]) {
        x[0] = self.w + z[0] * self.inv_w;
        x[1..].copy_from_slice(&z[1..]);
    }

    #[inline]
    fn weight(&self, z: &[f64]) -> f64 {
        self.likelihood(z[0])
    }
}

/// Mean shift of the first coordinate: `x_1 = θ + z_1` with Gaussian tilt
/// weight `exp(-θ x_1 + θ²/2)`.
#[derive(Debug, Clone, Copy)]
pub struct MeanShift {
    theta: f64,
}

impl MeanShift {
    pub fn new(theta: f64) -> Self {
        Self { theta }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn likelihood(&self, x1: f64) -> f64 {
        let l = (-self.theta * x1 + 0.5 * self.theta * self.theta).exp();
        if l < f64::MIN_POSITIVE {
            0.0
        } else {
            l
        }
    }
}

impl Proposal for MeanShift {
    #[inline]
    fn point(&self, z: &[f64], x: &mut [f64]) {
        x.copy_from_slice(z);
        x[0] += self.theta;
    }

    #[inline]
    fn weight(&self, z: &[f64]) -> f64 {
        self.likelihood(z[0] + self.theta)
    }
}

/// Identity map with unit weight (crude Monte Carlo).
#[derive(Debug, Clone, Copy, Default)]
pub struct Nominal;

impl Proposal for Nominal {
    #[inline]
    fn point(&self, z: &[f64], x: &mut [f64]) {
        x.copy_from_slice(z);
    }

    #[inline]
    fn weight(&self, _z: &[f64]) -> f64 {
        1.0
    }
}

/// `f_u(z) = (x1* - u + z_1 / (x1* - u), z_2, ..., z_n)`.
pub fn transform(z: &[f64], u: f64, x1_star: f64) -> Result<Vec<f64>, SamplerError> {
    let shift = ExponentialShift::new(u, x1_star)?;
    let mut x = vec![0.0; z.len()];
    shift.map(z, &mut x);
    Ok(x)
}

/// `L_u(z) = exp(-z_1²/(2w²) - w²/2) / (w √(2π)) · 1{z_1 >= 0}` with `w = x1* - u`.
pub fn likelihood(z: &[f64], u: f64, x1_star: f64) -> Result<f64, SamplerError> {
    Ok(ExponentialShift::new(u, x1_star)?.likelihood(z[0]))
}

/// Per-sample distances, likelihood ratios and inflated-set indicators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelValues {
    pub dist: Vec<f64>,
    pub lik: Vec<f64>,
    pub indicator: Vec<bool>,
}

impl KernelValues {
    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    /// `P(z_i, u) = 1{d_i <= u} L_i`.
    pub fn p_terms(&self) -> impl Iterator<Item = f64> + '_ {
        self.indicator
            .iter()
            .zip(&self.lik)
            .map(|(&ind, &l)| if ind { l } else { 0.0 })
    }

    /// `H(z_i, u) = d_i² 1{d_i <= u} L_i`.
    pub fn h_terms(&self) -> impl Iterator<Item = f64> + '_ {
        self.p_terms().zip(&self.dist).map(|(p, d)| d * d * p)
    }

    pub fn p_mean(&self) -> f64 {
        chunked_mean(self.p_terms().collect::<Vec<_>>().as_slice())
    }

    pub fn h_mean(&self) -> f64 {
        chunked_mean(self.h_terms().collect::<Vec<_>>().as_slice())
    }
}

/// Mean with the same chunk-then-combine order as the kernel reductions.
pub fn chunked_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let total: f64 = values
        .chunks(CHUNK_ROWS)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / values.len() as f64
}

/// Sample means `(ĥ_N(u), p̂_N(u))`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelSums {
    pub h: f64,
    pub p: f64,
}

fn check_dims(batch: &SampleBatch, frame: &CanonicalFrame, set: &ConvexTarget) -> Result<(), SamplerError> {
    if batch.dim() != set.dim() || frame.dim() != set.dim() {
        return Err(SamplerError::DimensionMismatch {
            batch: batch.dim(),
            target: set.dim(),
        });
    }
    Ok(())
}

fn block_sums<P: Proposal>(
    block: &[f64],
    dim: usize,
    proposal: &P,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
    mut hints: Option<&mut [f64]>,
) -> Result<(f64, f64), SamplerError> {
    let mut x = vec![0.0; dim];
    let (mut h, mut p) = (0.0, 0.0);
    for (i, z) in block.chunks_exact(dim).enumerate() {
        proposal.point(z, &mut x);
        frame.apply_in_place(&mut x);
        let mut cold = 0.0;
        let hint = match hints.as_deref_mut() {
            Some(hs) => &mut hs[i],
            None => &mut cold,
        };
        if let Some(d) = set.distance_within_warm(&x, u, hint)? {
            let lik = proposal.weight(z);
            h += d * d * lik;
            p += lik;
        }
    }
    Ok((h, p))
}

fn finish_sums(parts: Vec<(f64, f64)>, n: usize) -> KernelSums {
    let (h, p) = parts
        .iter()
        .fold((0.0, 0.0), |(h, p), (bh, bp)| (h + bh, p + bp));
    let n = n as f64;
    KernelSums { h: h / n, p: p / n }
}

/// `(ĥ_N(u), p̂_N(u))` for an arbitrary proposal, without materializing
/// per-sample values. Samples farther than `u` skip the projection and the
/// likelihood evaluation.
pub fn kernel_sums<P: Proposal>(
    batch: &SampleBatch,
    proposal: &P,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
) -> Result<KernelSums, SamplerError> {
    check_dims(batch, frame, set)?;
    let dim = batch.dim();
    let parts = batch
        .data
        .par_chunks(CHUNK_ROWS * dim)
        .map(|block| block_sums(block, dim, proposal, u, frame, set, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(finish_sums(parts, batch.len()))
}

/// [`kernel_sums`] with one projection-solver hint per sample, read and
/// updated in place. Repeated calls at nearby `u` (as in a root search)
/// restart each solve close to its previous answer. Results agree with the
/// cold version up to solver tolerance.
pub fn kernel_sums_warm<P: Proposal>(
    batch: &SampleBatch,
    proposal: &P,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
    hints: &mut [f64],
) -> Result<KernelSums, SamplerError> {
    check_dims(batch, frame, set)?;
    if hints.len() != batch.len() {
        return Err(SamplerError::HintLength {
            hints: hints.len(),
            samples: batch.len(),
        });
    }
    let dim = batch.dim();
    let parts = batch
        .data
        .par_chunks(CHUNK_ROWS * dim)
        .zip(hints.par_chunks_mut(CHUNK_ROWS))
        .map(|(block, hs)| block_sums(block, dim, proposal, u, frame, set, Some(hs)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(finish_sums(parts, batch.len()))
}

/// Full per-sample kernel values for an arbitrary proposal.
pub fn eval_kernels_with<P: Proposal>(
    batch: &SampleBatch,
    proposal: &P,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
) -> Result<KernelValues, SamplerError> {
    check_dims(batch, frame, set)?;
    let dim = batch.dim();
    let per_sample: Vec<(f64, f64)> = batch
        .data
        .par_chunks(CHUNK_ROWS * dim)
        .map(|block| {
            let mut x = vec![0.0; dim];
            block
                .chunks_exact(dim)
                .map(|z| {
                    let lik = proposal.map(z, &mut x);
                    frame.apply_in_place(&mut x);
                    Ok((set.distance(&x)?, lik))
                })
                .collect::<Result<Vec<_>, SamplerError>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let dist: Vec<f64> = per_sample.iter().map(|v| v.0).collect();
    let lik = per_sample.iter().map(|v| v.1).collect();
    let indicator = dist.iter().map(|&d| d <= u).collect();
    Ok(KernelValues {
        dist,
        lik,
        indicator,
    })
}

/// Per-sample `(d_i, L_i)` for samples with `d_i <= limit` and `L_i > 0`,
/// `None` elsewhere. Order follows the batch.
pub fn values_within<P: Proposal>(
    batch: &SampleBatch,
    proposal: &P,
    limit: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
) -> Result<Vec<Option<(f64, f64)>>, SamplerError> {
    check_dims(batch, frame, set)?;
    let dim = batch.dim();
    let parts = batch
        .data
        .par_chunks(CHUNK_ROWS * dim)
        .map(|block| {
            let mut x = vec![0.0; dim];
            block
                .chunks_exact(dim)
                .map(|z| {
                    proposal.point(z, &mut x);
                    frame.apply_in_place(&mut x);
                    Ok(set
                        .distance_within(&x, limit)?
                        .map(|d| (d, proposal.weight(z)))
                        .filter(|&(_, lik)| lik > 0.0))
                })
                .collect::<Result<Vec<_>, SamplerError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// DRIS kernel values: `x_i = Q f_u(z_i)`, `d_i = d(x_i, E)`, `L_i = L_u(z_i)`.
pub fn eval_kernels(
    batch: &SampleBatch,
    u: f64,
    frame: &CanonicalFrame,
    set: &ConvexTarget,
) -> Result<KernelValues, SamplerError> {
    let shift = ExponentialShift::new(u, frame.x1_star())?;
    eval_kernels_with(batch, &shift, u, frame, set)
}
