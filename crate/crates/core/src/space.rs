//! Finite metric measure spaces, grid discretisations and Lipschitz cutoffs.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Tolerance used by metric checks and neighbourhood membership.
pub const METRIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Row-major `N x N` distance table.
    Explicit(Vec<f64>),
    /// Euclidean distance between the stored coordinates.
    Euclidean,
}

/// A finite point set with a metric, positive weights and a fiber dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMeasureSpace {
    n: usize,
    metric: Metric,
    weights: Vec<f64>,
    coord_dim: usize,
    coords: Vec<f64>,
    fiber_dim: usize,
}

impl MetricMeasureSpace {
    /// Space with an explicit distance table. Axioms are not enforced here;
    /// run [`check_metric`] for diagnostics.
    pub fn from_distances(dist: Vec<f64>, weights: Vec<f64>, fiber_dim: usize) -> Result<Self> {
        let n = weights.len();
        if dist.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: dist.len() });
        }
        if fiber_dim == 0 {
            return Err(Error::InvalidParameter("fiber dimension must be positive".into()));
        }
        Ok(MetricMeasureSpace { n, metric: Metric::Explicit(dist), weights, coord_dim: 0, coords: Vec::new(), fiber_dim })
    }

    /// Space of points in `R^coord_dim` with the Euclidean distance.
    pub fn euclidean(coord_dim: usize, coords: Vec<f64>, weights: Vec<f64>, fiber_dim: usize) -> Result<Self> {
        let n = weights.len();
        if coords.len() != n * coord_dim {
            return Err(Error::DimensionMismatch { expected: n * coord_dim, found: coords.len() });
        }
        if fiber_dim == 0 {
            return Err(Error::InvalidParameter("fiber dimension must be positive".into()));
        }
        Ok(MetricMeasureSpace { n, metric: Metric::Euclidean, weights, coord_dim, coords, fiber_dim })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn with_fiber_dim(mut self, m: usize) -> Self {
        assert!(m > 0);
        self.fiber_dim = m;
        self
    }

    pub fn coord_dim(&self) -> usize {
        self.coord_dim
    }

    /// Coordinates of point `x`, empty for spaces without an embedding.
    pub fn coords(&self, x: usize) -> &[f64] {
        &self.coords[x * self.coord_dim..(x + 1) * self.coord_dim]
    }

    pub fn all_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        match &self.metric {
            Metric::Explicit(d) => d[x * self.n + y],
            Metric::Euclidean => {
                let (a, b) = (self.coords(x), self.coords(y));
                a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
            }
        }
    }

    /// `d(x, K)` for every point.
    pub fn distance_to_set(&self, k: &SupportSet) -> Result<Vec<f64>> {
        let members: Vec<usize> = k.members().collect();
        if members.is_empty() {
            return Err(Error::EmptySupportSet);
        }
        Ok((0..self.n).map(|x| members.iter().map(|&y| self.dist(x, y)).fold(f64::INFINITY, f64::min)).collect())
    }

    /// Largest distance from `K` attained in the space.
    pub fn max_distance_to_set(&self, k: &SupportSet) -> Result<f64> {
        Ok(self.distance_to_set(k)?.into_iter().fold(0.0, f64::max))
    }
}

/// A subset of the point indices, stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportSet {
    mask: Vec<bool>,
}

impl SupportSet {
    pub fn empty(n: usize) -> Self {
        SupportSet { mask: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        SupportSet { mask: vec![true; n] }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        SupportSet { mask }
    }

    pub fn from_indices(n: usize, idx: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &i in idx {
            if i >= n {
                return Err(Error::InvalidParameter(alloc::format!("point {i} outside a space of {n} points")));
            }
            mask[i] = true;
        }
        Ok(SupportSet { mask })
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.mask[x]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn is_subset(&self, other: &SupportSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn intersect(&self, other: &SupportSet) -> SupportSet {
        SupportSet { mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect() }
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        SupportSet { mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a || b).collect() }
    }
}

/// Real function on the points together with its exact Lipschitz norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LipFunction {
    values: Vec<f64>,
    lip: f64,
}

impl LipFunction {
    pub fn new(space: &MetricMeasureSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let lip = lip_norm(space, &values);
        Ok(LipFunction { values, lip })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lip_norm(&self) -> f64 {
        self.lip
    }

    /// Points where the function is strictly positive.
    pub fn positive_support(&self) -> SupportSet {
        SupportSet::from_mask(self.values.iter().map(|&v| v > 0.0).collect())
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricViolation {
    NonFinite { x: usize, y: usize },
    NonzeroDiagonal { x: usize, value: f64 },
    Negative { x: usize, y: usize, value: f64 },
    Asymmetric { x: usize, y: usize, gap: f64 },
    Triangle { x: usize, y: usize, z: usize, excess: f64 },
    NonPositiveWeight { x: usize, value: f64 },
    NonFiniteCoordinate { x: usize },
}

/// Spaces up to this size get the exhaustive triple scan for Euclidean metrics.
pub const EUCLIDEAN_TRIPLE_SCAN_LIMIT: usize = 300;

/// Lists every violation of the metric axioms and of weight positivity.
///
/// Explicit tables are scanned over all triples. Euclidean metrics satisfy the
/// axioms whenever the coordinates are finite, so large grids only get the
/// coordinate and weight checks; small ones still get the full scan.
pub fn check_metric(space: &MetricMeasureSpace) -> Vec<MetricViolation> {
    let n = space.len();
    let mut out = Vec::new();
    for x in 0..n {
        let w = space.weight(x);
        if w.is_nan() || w <= 0.0 || !w.is_finite() {
            out.push(MetricViolation::NonPositiveWeight { x, value: w });
        }
    }
    if let Metric::Euclidean = space.metric() {
        for x in 0..n {
            if space.coords(x).iter().any(|c| !c.is_finite()) {
                out.push(MetricViolation::NonFiniteCoordinate { x });
            }
        }
        if n > EUCLIDEAN_TRIPLE_SCAN_LIMIT {
            return out;
        }
    }
    let d = |x: usize, y: usize| space.dist(x, y);
    for x in 0..n {
        let dxx = d(x, x);
        if !dxx.is_finite() {
            out.push(MetricViolation::NonFinite { x, y: x });
        } else if dxx.abs() > METRIC_TOL {
            out.push(MetricViolation::NonzeroDiagonal { x, value: dxx });
        }
        for y in 0..n {
            let v = d(x, y);
            if x != y && !v.is_finite() {
                out.push(MetricViolation::NonFinite { x, y });
                continue;
            }
            if v < -METRIC_TOL {
                out.push(MetricViolation::Negative { x, y, value: v });
            }
            if x < y {
                let gap = (v - d(y, x)).abs();
                if gap > METRIC_TOL {
                    out.push(MetricViolation::Asymmetric { x, y, gap });
                }
            }
        }
    }
    for x in 0..n {
        for y in 0..n {
            let dxy = d(x, y);
            for z in 0..n {
                let excess = d(x, z) - dxy - d(y, z);
                if excess > METRIC_TOL * (1.0 + dxy.abs()) {
                    out.push(MetricViolation::Triangle { x, y, z, excess });
                }
            }
        }
    }
    out
}

/// `K_tau = {x : d(x, K) <= tau}`.
pub fn neighborhood(space: &MetricMeasureSpace, k: &SupportSet, tau: f64) -> Result<SupportSet> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter("neighborhood radius must be nonnegative".into()));
    }
    let dk = space.distance_to_set(k)?;
    let tol = METRIC_TOL * tau.max(1.0);
    Ok(SupportSet::from_mask(dk.iter().map(|&v| v <= tau + tol).collect()))
}

/// `eta_{K,alpha}(x) = max(1 - alpha d(x, K), 0)`.
pub fn cutoff(space: &MetricMeasureSpace, k: &SupportSet, alpha: f64) -> Result<LipFunction> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("cutoff slope must be positive, got {alpha}")));
    }
    let dk = space.distance_to_set(k)?;
    LipFunction::new(space, dk.iter().map(|&v| (1.0 - alpha * v).max(0.0)).collect())
}

/// `sup_{x != y} |eta(x) - eta(y)| / d(x, y)` by exhaustive pair scan.
/// A single-point space has norm 0. Distinct points at distance 0 carrying
/// different values give an infinite norm.
pub fn lip_norm(space: &MetricMeasureSpace, eta: &[f64]) -> f64 {
    let n = space.len();
    let mut best = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            let diff = (eta[x] - eta[y]).abs();
            if diff == 0.0 {
                continue;
            }
            let d = space.dist(x, y);
            if d <= 0.0 {
                return f64::INFINITY;
            }
            best = best.max(diff / d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

/// Uniform grid on `[0, extent_1] x ... ` with optional cell mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: usize,
    pub extent: Vec<f64>,
    pub h: f64,
    /// Row-major over the full grid, axis 0 fastest. `true` keeps the cell.
    pub mask: Option<Vec<bool>>,
    pub boundary: BoundaryCondition,
}

impl GridSpec {
    pub fn line(extent: f64, h: f64) -> Self {
        GridSpec { dims: 1, extent: vec![extent], h, mask: None, boundary: BoundaryCondition::Neumann }
    }

    pub fn square(extent: f64, h: f64) -> Self {
        GridSpec { dims: 2, extent: vec![extent, extent], h, mask: None, boundary: BoundaryCondition::Neumann }
    }

    pub fn with_boundary(mut self, bc: BoundaryCondition) -> Self {
        self.boundary = bc;
        self
    }

    /// Number of nodes along each axis.
    pub fn shape(&self) -> Result<[usize; 2]> {
        if self.dims != 1 && self.dims != 2 {
            return Err(Error::InvalidParameter(alloc::format!("grid dims must be 1 or 2, got {}", self.dims)));
        }
        if self.extent.len() != self.dims {
            return Err(Error::DimensionMismatch { expected: self.dims, found: self.extent.len() });
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter("grid spacing must be positive".into()));
        }
        let mut shape = [1usize; 2];
        for (k, &e) in self.extent.iter().enumerate() {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidParameter(alloc::format!("extent along axis {k} must be positive")));
            }
            let cells = e / self.h;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "extent {e} along axis {k} is not a multiple of h = {}",
                    self.h
                )));
            }
            shape[k] = rounded as usize + 1;
        }
        Ok(shape)
    }
}

/// A grid space plus the bookkeeping difference operators need.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpace {
    pub spec: GridSpec,
    pub space: MetricMeasureSpace,
    pub shape: [usize; 2],
    /// Grid multi-index of each point.
    pub cells: Vec<[usize; 2]>,
    /// Point index of each grid node, `None` where masked out.
    pub index: Vec<Option<usize>>,
    /// Whether the kept cells form one 4-connected component.
    pub connected: bool,
}

impl GridSpace {
    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn dims(&self) -> usize {
        self.spec.dims
    }

    /// Point index of the node `cell + e_axis`, if it exists and is kept.
    pub fn step(&self, cell: [usize; 2], axis: usize, forward: bool) -> Option<usize> {
        let mut c = cell;
        if forward {
            c[axis] += 1;
            if c[axis] >= self.shape[axis] {
                return None;
            }
        } else {
            if c[axis] == 0 {
                return None;
            }
            c[axis] -= 1;
        }
        self.index[c[0] + self.shape[0] * c[1]]
    }

    pub fn point_at(&self, cell: [usize; 2]) -> Option<usize> {
        if cell[0] >= self.shape[0] || cell[1] >= self.shape[1] {
            return None;
        }
        self.index[cell[0] + self.shape[0] * cell[1]]
    }

    /// Points on the rim of the grid or with a 4-neighbour outside the mask.
    pub fn boundary_points(&self) -> SupportSet {
        let n = self.space.len();
        let mut mask = vec![false; n];
        for (p, &cell) in self.cells.iter().enumerate() {
            for axis in 0..self.dims() {
                let rim = cell[axis] == 0 || cell[axis] + 1 == self.shape[axis];
                if rim || self.step(cell, axis, true).is_none() || self.step(cell, axis, false).is_none() {
                    mask[p] = true;
                }
            }
        }
        SupportSet::from_mask(mask)
    }

    /// Point nearest to the given coordinates.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for p in 0..self.space.len() {
            let d: f64 = self.space.coords(p).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (p, d);
            }
        }
        best.0
    }
}

/// Builds the grid space: kept cells, Euclidean distance, weight `h^dims`.
pub fn grid_space(spec: &GridSpec) -> Result<GridSpace> {
    let shape = spec.shape()?;
    let total = shape[0] * shape[1];
    if let Some(m) = &spec.mask {
        if m.len() != total {
            return Err(Error::DimensionMismatch { expected: total, found: m.len() });
        }
    }
    let keep = |i: usize| spec.mask.as_ref().map_or(true, |m| m[i]);
    let mut index = vec![None; total];
    let mut cells = Vec::new();
    let mut coords = Vec::new();
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            let lin = i + shape[0] * j;
            if !keep(lin) {
                continue;
            }
            index[lin] = Some(cells.len());
            cells.push([i, j]);
            coords.push(i as f64 * spec.h);
            if spec.dims == 2 {
                coords.push(j as f64 * spec.h);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyMask);
    }
    let w = spec.h.powi(spec.dims as i32);
    let n = cells.len();
    let space = MetricMeasureSpace::euclidean(spec.dims, coords, vec![w; n], 1)?;
    let mut grid = GridSpace { spec: spec.clone(), space, shape, cells, index, connected: true };
    grid.connected = is_connected(&grid);
    Ok(grid)
}

fn is_connected(grid: &GridSpace) -> bool {
    let n = grid.cells.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    seen[0] = true;
    queue.push_back(0);
    let mut count = 1;
    while let Some(p) = queue.pop_front() {
        for axis in 0..grid.dims() {
            for fwd in [true, false] {
                if let Some(q) = grid.step(grid.cells[p], axis, fwd) {
                    if !seen[q] {
                        seen[q] = true;
                        count += 1;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    count == n
}

/// Warning text for disconnected masks, `None` when connected.
pub fn connectivity_warning(grid: &GridSpace) -> Option<String> {
    if grid.connected {
        None
    } else {
        Some(String::from("masked region is not 4-connected"))
    }
}

/// Random Lipschitz function: uniform values smoothed by one pass of
/// averaging over neighbours within `radius`, scaled to Lipschitz norm 1.
pub fn random_lipschitz(space: &MetricMeasureSpace, rng: &mut ChaCha8Rng, radius: f64) -> Result<LipFunction> {
    let n = space.len();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let smooth: Vec<f64> = (0..n)
        .map(|x| {
            let (mut s, mut c) = (0.0, 0.0);
            for y in 0..n {
                if space.dist(x, y) <= radius {
                    s += raw[y];
                    c += 1.0;
                }
            }
            s / c
        })
        .collect();
    let l = lip_norm(space, &smooth);
    if !(l > 0.0) || !l.is_finite() {
        return LipFunction::new(space, smooth);
    }
    LipFunction::new(space, smooth.iter().map(|v| v / l).collect())
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize, h: f64) -> MetricMeasureSpace {
        grid_space(&GridSpec::line((n - 1) as f64 * h, h)).unwrap().space
    }

    #[test]
    fn path_graph_is_a_metric() {
        assert!(check_metric(&path(12, 0.5)).is_empty());
    }

    #[test]
    fn negative_entry_is_flagged_once() {
        let mut d = vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        d[1] = -1.0;
        d[3] = -1.0;
        let s = MetricMeasureSpace::from_distances(d, vec![1.0; 3], 1).unwrap();
        let v = check_metric(&s);
        let neg = v.iter().filter(|v| matches!(v, MetricViolation::Negative { .. })).count();
        assert_eq!(neg, 2, "both orientations of the symmetric pair: {v:?}");
    }

    #[test]
    fn random_symmetric_table_violations_match_brute_force() {
        let mut rng = seeded_rng(7);
        let n = 8;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.gen_range(0.1..3.0);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        let s = MetricMeasureSpace::from_distances(d.clone(), vec![1.0; n], 1).unwrap();
        let found = check_metric(&s).len();
        let mut brute = 0;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if d[x * n + z] > d[x * n + y] + d[y * n + z] + 1e-12 * (1.0 + d[x * n + y]) {
                        brute += 1;
                    }
                }
            }
        }
        assert!(brute > 0);
        assert_eq!(found, brute);
    }

    #[test]
    fn neighborhood_examples() {
        let s = path(6, 1.0);
        let k = SupportSet::from_indices(6, &[0]).unwrap();
        let nb = neighborhood(&s, &k, 1.5).unwrap();
        assert_eq!(nb.members().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(neighborhood(&s, &k, 0.0).unwrap(), k);
        assert_eq!(neighborhood(&s, &SupportSet::empty(6), 1.0), Err(Error::EmptySupportSet));
    }

    #[test]
    fn neighborhood_2d_matches_scan() {
        let g = grid_space(&GridSpec::square(3.0, 0.5)).unwrap();
        let k = SupportSet::from_indices(g.space.len(), &[g.point_at([3, 2]).unwrap()]).unwrap();
        let nb = neighborhood(&g.space, &k, 1.0).unwrap();
        let centre = g.space.coords(g.point_at([3, 2]).unwrap()).to_vec();
        for p in 0..g.space.len() {
            let c = g.space.coords(p);
            let d = ((c[0] - centre[0]).powi(2) + (c[1] - centre[1]).powi(2)).sqrt();
            assert_eq!(nb.contains(p), d <= 1.0 + 1e-12);
        }
        // radius 1 = two cells: 13 points in the discrete disc
        assert_eq!(nb.count(), 13);
    }

    #[test]
    fn cutoff_values() {
        let s = path(5, 1.0);
        let k = SupportSet::from_indices(5, &[0]).unwrap();
        assert_eq!(cutoff(&s, &k, 1.0).unwrap().values(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cutoff(&s, &k, 0.5).unwrap().values(), &[1.0, 0.5, 0.0, 0.0, 0.0]);
        assert!(cutoff(&s, &k, 0.0).is_err());
    }

    #[test]
    fn lip_norm_examples() {
        let s = path(10, 0.25);
        assert_eq!(lip_norm(&s, &[3.0; 10]), 0.0);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.25).collect();
        assert!((lip_norm(&s, &x) - 1.0).abs() < 1e-14);
        let single = MetricMeasureSpace::from_distances(vec![0.0], vec![1.0], 1).unwrap();
        assert_eq!(lip_norm(&single, &[5.0]), 0.0);
    }

    #[test]
    fn grid_examples() {
        let g = grid_space(&GridSpec::line(1.0, 0.25)).unwrap();
        assert_eq!(g.space.len(), 5);
        assert_eq!(g.space.all_coords(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g.space.weights().iter().all(|&w| w == 0.25));

        let g = grid_space(&GridSpec::square(2.0, 1.0)).unwrap();
        assert_eq!(g.space.len(), 9);
        let (a, b) = (g.point_at([0, 0]).unwrap(), g.point_at([1, 1]).unwrap());
        assert!((g.space.dist(a, b) - 2f64.sqrt()).abs() < 1e-15);

        let mut mask = vec![true; 9];
        mask[4] = false;
        let spec = GridSpec { mask: Some(mask), ..GridSpec::square(2.0, 1.0) };
        let g = grid_space(&spec).unwrap();
        assert_eq!(g.space.len(), 8);
        assert!(g.point_at([1, 1]).is_none());
        for p in 0..8 {
            for q in 0..8 {
                let (cp, cq) = (g.cells[p], g.cells[q]);
                let e = (((cp[0] as f64 - cq[0] as f64).powi(2) + (cp[1] as f64 - cq[1] as f64).powi(2)) as f64).sqrt();
                assert!((g.space.dist(p, q) - e).abs() < 1e-15);
            }
        }
        assert!(g.connected);

        let spec = GridSpec { mask: Some(vec![false; 9]), ..GridSpec::square(2.0, 1.0) };
        assert_eq!(grid_space(&spec), Err(Error::EmptyMask));
    }

    #[test]
    fn disconnected_mask_is_reported() {
        let spec = GridSpec { mask: Some(vec![true, false, true]), ..GridSpec::line(2.0, 1.0) };
        let g = grid_space(&spec).unwrap();
        assert!(!g.connected);
        assert!(connectivity_warning(&g).is_some());
    }

    #[test]
    fn extent_must_be_a_multiple_of_h() {
        assert!(GridSpec::line(1.0, 0.3).shape().is_err());
    }

    #[test]
    fn random_lipschitz_has_unit_norm() {
        let g = grid_space(&GridSpec::square(1.0, 0.1)).unwrap();
        let mut rng = seeded_rng(3);
        let f = random_lipschitz(&g.space, &mut rng, 0.15).unwrap();
        assert!((f.lip_norm() - 1.0).abs() < 1e-12);
    }
}
