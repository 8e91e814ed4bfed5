#![allow(dead_code)]

use dris::geometry::{ConvexTarget, Polyhedron, QuadraticSuperlevel};

/// Two-facet wedge `{x1 - 5 x2 >= r, x1 + 5 x2 >= r}` with apex `(r, 0)`.
pub fn toy(r: f64) -> ConvexTarget {
    Polyhedron::from_pairs(&[(vec![1.0, -5.0], r), (vec![1.0, 5.0], r)])
        .unwrap()
        .into()
}

/// Halfspace `{v · x >= r}` for a unit vector `v`.
pub fn halfspace(v: &[f64], r: f64) -> ConvexTarget {
    Polyhedron::from_pairs(&[(v.to_vec(), r)]).unwrap().into()
}

pub fn halfline(r: f64) -> ConvexTarget {
    halfspace(&[1.0], r)
}

pub fn quadratic(a: f64, b: Vec<f64>, c: Vec<f64>, threshold: f64) -> ConvexTarget {
    QuadraticSuperlevel::new(a, b, c, threshold).unwrap().into()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the one-sample KS statistic (asymptotic).
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
