use nalgebra::DMatrix;

use super::{check_point, dot, norm, GeometryError};

/// `{x : normal · x >= offset}` with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: Vec<f64>,
    offset: f64,
}

impl Halfspace {
    /// Builds the halfspace, rescaling `(normal, offset)` so the normal has unit length.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self, GeometryError> {
        if normal.is_empty() {
            return Err(GeometryError::NoDimensions);
        }
        if !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let len = norm(&normal);
        if len == 0.0 {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Self {
            normal: normal.iter().map(|v| v / len).collect(),
            offset: offset / len,
        })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `normal · x - offset`; negative outside the halfspace.
    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        self.project_in_place(&mut p);
        p
    }

    fn project_in_place(&self, x: &mut [f64]) {
        let s = self.slack(x);
        if s < 0.0 {
            for (xi, ni) in x.iter_mut().zip(&self.normal) {
                *xi -= s * ni;
            }
        }
    }
}

/// How [`Polyhedron`] projections are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    /// Enumerate candidate active sets with pre-inverted Gram matrices and
    /// return the one satisfying the KKT conditions. Exact; used when the
    /// number of candidate sets is small.
    ActiveSet,
    /// Dykstra's alternating projections.
    Dykstra,
}

const MAX_ENUM_FACETS: usize = 12;
const MAX_ENUM_SETS: usize = 4096;
const KKT_TOL: f64 = 1e-10;
const DYKSTRA_MAX_CYCLES: usize = 10_000;
const DYKSTRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
struct ActiveSet {
    members: Vec<usize>,
    // Row-major inverse of the Gram matrix of the member normals.
    inv_gram: Vec<f64>,
}

/// Intersection of finitely many halfspaces.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    dim: usize,
    halfspaces: Vec<Halfspace>,
    // Row-major m x dim copy of the normals and the offsets, for the hot path.
    normals: Vec<f64>,
    offsets: Vec<f64>,
    // Row-major m x m matrix of normal inner products.
    gram: Vec<f64>,
    active_sets: Vec<ActiveSet>,
    method: ProjectionMethod,
}

impl Polyhedron {
    /// Builds the polyhedron, rejecting empty intersections and sets that
    /// contain the origin.
    pub fn new(halfspaces: Vec<Halfspace>) -> Result<Self, GeometryError> {
        let first = halfspaces.first().ok_or(GeometryError::NoDimensions)?;
        let dim = first.dim();
        if let Some(h) = halfspaces.iter().find(|h| h.dim() != dim) {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                found: h.dim(),
            });
        }
        let m = halfspaces.len();
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] = dot(halfspaces[i].normal(), halfspaces[j].normal());
            }
        }
        let active_sets = enumerate_active_sets(&gram, m, dim);
        let method = if active_sets.is_some() {
            ProjectionMethod::ActiveSet
        } else {
            ProjectionMethod::Dykstra
        };
        let normals = halfspaces.iter().flat_map(|h| h.normal().iter().copied()).collect();
        let offsets = halfspaces.iter().map(Halfspace::offset).collect();
        let poly = Self {
            dim,
            halfspaces,
            normals,
            offsets,
            gram,
            active_sets: active_sets.unwrap_or_default(),
            method,
        };
        if poly.halfspaces.iter().all(|h| h.offset() <= 0.0) {
            return Err(GeometryError::ContainsOrigin);
        }
        let origin = vec![0.0; dim];
        let p = match poly.project(&origin) {
            Ok(p) => p,
            Err(GeometryError::NotConverged { .. }) => return Err(GeometryError::EmptySet),
            Err(e) => return Err(e),
        };
        if poly.max_violation(&p) > 1e-8 {
            return Err(GeometryError::EmptySet);
        }
        Ok(poly)
    }

    /// Builds a polyhedron from raw `(normal, offset)` pairs.
    pub fn from_pairs(pairs: &[(Vec<f64>, f64)]) -> Result<Self, GeometryError> {
        let hs = pairs
            .iter()
            .map(|(n, b)| Halfspace::new(n.clone(), *b))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(hs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn method(&self) -> ProjectionMethod {
        self.method
    }

    /// Forces Dykstra projections even when active-set enumeration is available.
    pub fn with_method(mut self, method: ProjectionMethod) -> Self {
        if method == ProjectionMethod::ActiveSet && self.active_sets.is_empty() {
            return self;
        }
        self.method = method;
        self
    }

    /// Applies an orthogonal map `M` to the set: returns `{M x : x in self}`.
    /// `matrix` is row-major `dim x dim`.
    pub fn transformed(&self, matrix: &[f64]) -> Result<Self, GeometryError> {
        let n = self.dim;
        if matrix.len() != n * n {
            return Err(GeometryError::DimensionMismatch {
                expected: n * n,
                found: matrix.len(),
            });
        }
        // For orthogonal M, n . x >= b  <=>  (M n) . (M x) >= b.
        let hs = self
            .halfspaces
            .iter()
            .map(|h| {
                let rotated = (0..n)
                    .map(|i| dot(&matrix[i * n..(i + 1) * n], h.normal()))
                    .collect();
                Halfspace::new(rotated, h.offset())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(hs)?.with_method(self.method))
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| (-h.slack(x)).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.halfspaces.iter().all(|h| h.slack(x) >= 0.0)
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        check_point(x, self.dim)?;
        if self.contains(x) {
            return Ok(x.to_vec());
        }
        if self.method == ProjectionMethod::ActiveSet {
            let mut slacks = [0.0; MAX_ENUM_FACETS];
            self.fill_slacks(x, &mut slacks);
            let mut lambda = [0.0; MAX_ENUM_FACETS];
            if let Some((idx, _)) = self.solve_active_set(&slacks, &mut lambda) {
                let mut p = x.to_vec();
                for (k, &i) in self.active_sets[idx].members.iter().enumerate() {
                    for (pj, nj) in p.iter_mut().zip(self.halfspaces[i].normal()) {
                        *pj += lambda[k] * nj;
                    }
                }
                return Ok(p);
            }
        }
        self.dykstra(x)
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64, GeometryError> {
        check_point(x, self.dim)?;
        self.distance_unchecked(x, f64::INFINITY)
            .map(|d| d.unwrap_or(f64::INFINITY))
    }

    /// Distance if it is at most `u`, `None` otherwise.
    pub fn distance_within(&self, x: &[f64], u: f64) -> Result<Option<f64>, GeometryError> {
        check_point(x, self.dim)?;
        self.distance_unchecked(x, u)
    }

    fn distance_unchecked(&self, x: &[f64], u: f64) -> Result<Option<f64>, GeometryError> {
        if self.method == ProjectionMethod::ActiveSet {
            let mut slacks = [0.0; MAX_ENUM_FACETS];
            self.fill_slacks(x, &mut slacks);
            let slacks_m = &slacks[..self.halfspaces.len()];
            // Any single violated constraint lower-bounds the distance.
            if slacks_m.iter().any(|&s| s < -u) {
                return Ok(None);
            }
            if slacks_m.iter().all(|&s| s >= 0.0) {
                return Ok(Some(0.0));
            }
            let mut lambda = [0.0; MAX_ENUM_FACETS];
            if let Some((_, dist_sq)) = self.solve_active_set(&slacks, &mut lambda) {
                let d = dist_sq.max(0.0).sqrt();
                return Ok((d <= u).then_some(d));
            }
        } else if self.halfspaces.iter().any(|h| h.slack(x) < -u) {
            return Ok(None);
        }
        let p = self.project(x)?;
        let d = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok((d <= u).then_some(d))
    }

    fn fill_slacks(&self, x: &[f64], slacks: &mut [f64; MAX_ENUM_FACETS]) {
        for ((s, n), b) in slacks
            .iter_mut()
            .zip(self.normals.chunks_exact(self.dim))
            .zip(&self.offsets)
        {
            *s = dot(n, x) - b;
        }
    }

    /// Returns `(active set index, squared distance)` for the first candidate
    /// set satisfying the KKT conditions, writing its multipliers to `lambda`.
    fn solve_active_set(
        &self,
        slacks: &[f64; MAX_ENUM_FACETS],
        lambda: &mut [f64; MAX_ENUM_FACETS],
    ) -> Option<(usize, f64)> {
        let m = self.halfspaces.len();
        'sets: for (idx, set) in self.active_sets.iter().enumerate() {
            let k = set.members.len();
            if k == 0 {
                continue;
            }
            // lambda = -G_A^{-1} s_A
            for (r, slot) in lambda.iter_mut().enumerate().take(k) {
                let mut acc = 0.0;
                for (c, &j) in set.members.iter().enumerate() {
                    acc -= set.inv_gram[r * k + c] * slacks[j];
                }
                if acc < -KKT_TOL {
                    continue 'sets;
                }
                *slot = acc.max(0.0);
            }
            for (j, &s) in slacks.iter().enumerate().take(m) {
                let mut moved = s;
                for (r, &i) in set.members.iter().enumerate() {
                    moved += lambda[r] * self.gram[j * m + i];
                }
                if moved < -KKT_TOL {
                    continue 'sets;
                }
            }
            let dist_sq: f64 = set
                .members
                .iter()
                .enumerate()
                .map(|(r, &j)| -lambda[r] * slacks[j])
                .sum();
            return Some((idx, dist_sq));
        }
        None
    }

    fn dykstra(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let m = self.halfspaces.len();
        let n = self.dim;
        let mut cur = x.to_vec();
        let mut increments = vec![0.0; m * n];
        let mut before = vec![0.0; n];
        for _ in 0..DYKSTRA_MAX_CYCLES {
            before.copy_from_slice(&cur);
            for (i, h) in self.halfspaces.iter().enumerate() {
                let inc = &mut increments[i * n..(i + 1) * n];
                for (c, y) in cur.iter_mut().zip(inc.iter()) {
                    *c += y;
                }
                let shifted = cur.clone();
                h.project_in_place(&mut cur);
                for ((y, s), c) in inc.iter_mut().zip(&shifted).zip(&cur) {
                    *y = s - c;
                }
            }
            let moved = cur
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if moved < DYKSTRA_TOL && self.max_violation(&cur) < 1e-9 {
                return Ok(cur);
            }
        }
        Err(GeometryError::NotConverged {
            iterations: DYKSTRA_MAX_CYCLES,
            residual: self.max_violation(&cur),
        })
    }
}

/// Candidate active sets ordered by size, each with linearly independent
/// normals. `None` when there are too many to enumerate.
fn enumerate_active_sets(gram: &[f64], m: usize, dim: usize) -> Option<Vec<ActiveSet>> {
    if m > MAX_ENUM_FACETS {
        return None;
    }
    let max_size = m.min(dim);
    let mut masks: Vec<u32> = (1u32..(1 << m))
        .filter(|mask| mask.count_ones() as usize <= max_size)
        .collect();
    if masks.len() > MAX_ENUM_SETS {
        return None;
    }
    masks.sort_by_key(|mask| (mask.count_ones(), *mask));
    let mut sets = Vec::with_capacity(masks.len());
    for mask in masks {
        let members: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = members.len();
        let g = DMatrix::from_fn(k, k, |r, c| gram[members[r] * m + members[c]]);
        let eig = g.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.max();
        let min_ev = eig.eigenvalues.min();
        if min_ev <= 1e-12 * max_ev.max(1.0) {
            continue;
        }
        let inv = g.try_inverse()?;
        let inv_gram = (0..k * k).map(|idx| inv[(idx / k, idx % k)]).collect();
        sets.push(ActiveSet { members, inv_gram });
    }
    Some(sets)
}
