//! Worst-case rare-event probabilities over a 2-Wasserstein ball around the
//! standard Gaussian.
//!
//! By strong duality the worst case `p*` equals the nominal probability of the
//! inflated set `{x : d(x, E) <= u*}`, where `u*` solves
//! `E₀[d(X, E)²; d(X, E) <= u*] = δ²`. The [`estimator`] module estimates both
//! quantities from a single shared batch with three samplers: distributionally
//! robust importance sampling (shifted-exponential first coordinate in the
//! canonical frame), exponential twisting and crude Monte Carlo.

pub mod estimator;
pub mod experiments;
pub mod finance;
pub mod geometry;
pub mod normal;
pub mod quadrature;
pub mod sampler;
pub mod oracle;

mod float_serde;
