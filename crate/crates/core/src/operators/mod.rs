//! Sections, weighted norms, multiplication operators, commutators and the
//! block system operators built on grids.

mod cases;
mod section;

pub use cases::{
    build_case1, build_case2, build_case3, gradient_blocks, split_case3, Case3, Case3Split,
};
pub use section::{inner, inner_b, p_norm, PNorm, Section};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::dense::{hermitian_eigen, spectral_norm, CMatrix};
use crate::linalg::lanczos::largest_eigenvalue_psd;
use crate::linalg::CsrMatrix;
use crate::space::{seeded_rng, random_lipschitz, cutoff, LipFunction, MetricMeasureSpace, SupportSet};
#[allow(unused_imports)]
use num_traits::Float;

/// Per-point `m x m` complex matrix acting diagonally in the point index.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicationOperator {
    points: usize,
    dim: usize,
    blocks: Vec<Complex64>,
}

impl MultiplicationOperator {
    /// `blocks` holds one row-major `dim x dim` block per point.
    pub fn new(points: usize, dim: usize, blocks: Vec<Complex64>) -> Result<Self> {
        if blocks.len() != points * dim * dim {
            return Err(Error::DimensionMismatch { expected: points * dim * dim, found: blocks.len() });
        }
        Ok(MultiplicationOperator { points, dim, blocks })
    }

    pub fn identity(points: usize, dim: usize) -> Self {
        Self::from_fn(points, dim, |_, i, j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::zero() })
    }

    /// Scalar field times the identity in each fiber.
    pub fn scalar(values: &[Complex64], dim: usize) -> Self {
        Self::from_fn(values.len(), dim, |x, i, j| if i == j { values[x] } else { Complex64::zero() })
    }

    pub fn diagonal(points: usize, diag: &[Complex64]) -> Self {
        let dim = diag.len();
        Self::from_fn(points, dim, |_, i, j| if i == j { diag[i] } else { Complex64::zero() })
    }

    pub fn from_fn(points: usize, dim: usize, f: impl Fn(usize, usize, usize) -> Complex64) -> Self {
        let mut blocks = Vec::with_capacity(points * dim * dim);
        for x in 0..points {
            for i in 0..dim {
                for j in 0..dim {
                    blocks.push(f(x, i, j));
                }
            }
        }
        MultiplicationOperator { points, dim, blocks }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, x: usize, i: usize, j: usize) -> Complex64 {
        self.blocks[(x * self.dim + i) * self.dim + j]
    }

    pub fn block(&self, x: usize) -> CMatrix {
        CMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(x, i, j))
    }

    pub fn apply(&self, u: &Section) -> Result<Section> {
        if u.points() != self.points || u.fiber_dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.points * self.dim, found: u.len() });
        }
        let n = self.points;
        let mut out = Section::zeros(n, self.dim);
        for x in 0..n {
            for i in 0..self.dim {
                let mut acc = Complex64::zero();
                for j in 0..self.dim {
                    acc += self.entry(x, i, j) * u.get(j, x);
                }
                out.set(i, x, acc);
            }
        }
        Ok(out)
    }

    /// Matrix in the component-major global numbering `c * N + x`.
    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.points;
        let mut trip = Vec::new();
        for x in 0..n {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let v = self.entry(x, i, j);
                    if v != Complex64::zero() {
                        trip.push((i * n + x, j * n + x, v));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n * self.dim, n * self.dim, &trip)
    }

    /// `||A||_inf = max_x |A(x)|` with the spectral norm on each fiber.
    pub fn sup_norm(&self) -> f64 {
        (0..self.points).map(|x| spectral_norm(&self.block(x)).unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.points).all(|x| {
            (0..self.dim).all(|i| (0..self.dim).all(|j| (self.entry(x, i, j) - self.entry(x, j, i).conj()).norm() <= tol))
        })
    }

    pub fn map_blocks(&self, f: impl Fn(usize, &CMatrix) -> CMatrix) -> Self {
        Self::from_blocks((0..self.points).map(|x| f(x, &self.block(x))).collect::<Vec<_>>().as_slice())
    }

    pub fn from_blocks(blocks: &[CMatrix]) -> Self {
        let dim = blocks.first().map_or(0, |b| b.nrows());
        Self::from_fn(blocks.len(), dim, |x, i, j| blocks[x][(i, j)])
    }

    pub fn inverse(&self) -> Result<Self> {
        let mut out = Vec::with_capacity(self.points);
        for x in 0..self.points {
            let b = self.block(x);
            let inv = b.try_inverse().ok_or(Error::SingularBlock { point: x })?;
            if !inv.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::SingularBlock { point: x });
            }
            out.push(inv);
        }
        Ok(Self::from_blocks(&out))
    }

    /// Pointwise smallest eigenvalue of the Hermitian part.
    pub fn ellipticity(&self) -> EllipticityReport {
        let mut lambda = f64::INFINITY;
        let mut witness = 0;
        for x in 0..self.points {
            let b = self.block(x);
            let herm = (&b + b.adjoint()) * Complex64::new(0.5, 0.0);
            let (vals, _) = hermitian_eigen(&herm);
            let lo = vals.first().copied().unwrap_or(f64::INFINITY);
            if lo < lambda {
                lambda = lo;
                witness = x;
            }
        }
        EllipticityReport { lambda, witness_point: witness, sup_norm: self.sup_norm() }
    }

    /// Pointwise `B(x)^s` for Hermitian positive definite blocks.
    pub fn hermitian_power(&self, s: f64) -> Result<Self> {
        let mut out = Vec::with_capacity(self.points);
        for x in 0..self.points {
            let b = self.block(x);
            let (vals, vecs) = hermitian_eigen(&b);
            if let Some(&v) = vals.iter().find(|v| **v <= 0.0) {
                return Err(Error::EllipticityViolated { point: x, value: v });
            }
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                self.dim,
                vals.iter().map(|v| Complex64::new(v.powf(s), 0.0)),
            ));
            out.push(&vecs * d * vecs.adjoint());
        }
        Ok(Self::from_blocks(&out))
    }
}

/// Certified pointwise lower bound of the Hermitian part of a coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityReport {
    pub lambda: f64,
    pub witness_point: usize,
    pub sup_norm: f64,
}

/// Linear operator on sections of a trivial bundle over a finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemOperator {
    matrix: CsrMatrix,
    points: usize,
    fiber_dim: usize,
    weights: Vec<f64>,
    selfadjoint_standard: bool,
    b_inner: Option<MultiplicationOperator>,
    pub blocks: Vec<String>,
}

/// Residual threshold for the self-adjointness flags.
pub const SELFADJOINT_TOL: f64 = 1e-10;

impl SystemOperator {
    pub fn new(space: &MetricMeasureSpace, fiber_dim: usize, matrix: CsrMatrix) -> Result<Self> {
        let n = space.len() * fiber_dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(SystemOperator {
            matrix,
            points: space.len(),
            fiber_dim,
            weights: space.weights().to_vec(),
            selfadjoint_standard: false,
            b_inner: None,
            blocks: (0..fiber_dim).map(|c| alloc::format!("c{c}")).collect(),
        })
    }

    pub fn with_blocks(mut self, names: &[&str]) -> Self {
        self.blocks = names.iter().map(|s| String::from(*s)).collect();
        self
    }

    /// Sets the standard self-adjointness flag after checking it.
    pub fn mark_selfadjoint(mut self) -> Result<Self> {
        let r = self.selfadjoint_residual();
        if r > SELFADJOINT_TOL {
            return Err(Error::NotSelfAdjoint { residual: r });
        }
        self.selfadjoint_standard = true;
        Ok(self)
    }

    /// Attaches a B-inner product after checking `(B^{-1} T u, v) = (B^{-1} u, T v)`.
    pub fn mark_selfadjoint_b(mut self, b: MultiplicationOperator) -> Result<Self> {
        let r = self.b_selfadjoint_residual(&b)?;
        if r > SELFADJOINT_TOL {
            return Err(Error::NotSelfAdjoint { residual: r });
        }
        self.b_inner = Some(b);
        Ok(self)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn size(&self) -> usize {
        self.points * self.fiber_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of global index `i` (component-major numbering).
    pub fn index_weight(&self, i: usize) -> f64 {
        self.weights[i % self.points]
    }

    pub fn is_selfadjoint_standard(&self) -> bool {
        self.selfadjoint_standard
    }

    pub fn b_inner(&self) -> Option<&MultiplicationOperator> {
        self.b_inner.as_ref()
    }

    pub fn apply(&self, u: &Section) -> Section {
        Section::from_values(self.points, self.fiber_dim, self.matrix.matvec(u.values())).expect("shape preserved")
    }

    /// Adjoint for the `mu`-weighted inner product: `W^{-1} T^H W`.
    pub fn weighted_adjoint(&self) -> CsrMatrix {
        let n = self.points;
        let w = &self.weights;
        self.matrix.adjoint().map_entries(|i, j, v| v * (w[j % n] / w[i % n]))
    }

    /// Relative Frobenius residual of `T - T*` in weight-conjugated coordinates.
    pub fn selfadjoint_residual(&self) -> f64 {
        let diff = self.matrix.sub(&self.weighted_adjoint());
        let scaled = |m: &CsrMatrix| self.conjugate_by_weights(m).frobenius_norm();
        let denom = scaled(&self.matrix);
        if denom == 0.0 {
            0.0
        } else {
            scaled(&diff) / denom
        }
    }

    fn b_selfadjoint_residual(&self, b: &MultiplicationOperator) -> Result<f64> {
        if b.points() != self.points || b.dim() != self.fiber_dim {
            return Err(Error::DimensionMismatch { expected: self.size(), found: b.points() * b.dim() });
        }
        // Gram matrix G = W B^{-1}; self-adjoint means G T = T^H G.
        let binv = b.inverse()?.to_csr();
        let w = CsrMatrix::from_diagonal(&(0..self.size()).map(|i| Complex64::new(self.index_weight(i), 0.0)).collect::<Vec<_>>());
        let g = w.mul(&binv);
        let lhs = g.mul(&self.matrix);
        let rhs = self.matrix.adjoint().mul(&g);
        let denom = lhs.frobenius_norm();
        Ok(if denom == 0.0 { 0.0 } else { lhs.sub(&rhs).frobenius_norm() / denom })
    }

    fn conjugate_by_weights(&self, m: &CsrMatrix) -> CsrMatrix {
        let n = self.points;
        let w = &self.weights;
        m.map_entries(|i, j, v| v * (w[i % n] / w[j % n]).sqrt())
    }

    /// Same space and layout, different matrix; flags are dropped.
    pub fn with_matrix(&self, matrix: CsrMatrix) -> Self {
        SystemOperator {
            matrix,
            points: self.points,
            fiber_dim: self.fiber_dim,
            weights: self.weights.clone(),
            selfadjoint_standard: false,
            b_inner: None,
            blocks: self.blocks.clone(),
        }
    }

    /// Block `(bi, bj)` as an `N x N` matrix.
    pub fn block(&self, bi: usize, bj: usize) -> CsrMatrix {
        let n = self.points;
        let rows: Vec<usize> = (bi * n..(bi + 1) * n).collect();
        let cols: Vec<usize> = (bj * n..(bj + 1) * n).collect();
        self.matrix.submatrix(&rows, &cols)
    }
}

/// Norm geometry `||u|| = |R u|_2` used for operator norms and isometry checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    r: CsrMatrix,
    r_inv: CsrMatrix,
    standard: bool,
}

impl Geometry {
    /// `R = W^{1/2}`: the plain `L^2(mu)` norm.
    pub fn standard(weights: &[f64], fiber_dim: usize) -> Self {
        let n = weights.len();
        let d: Vec<Complex64> = (0..n * fiber_dim).map(|i| Complex64::new(weights[i % n].sqrt(), 0.0)).collect();
        let di: Vec<Complex64> = d.iter().map(|v| v.inv()).collect();
        Geometry { r: CsrMatrix::from_diagonal(&d), r_inv: CsrMatrix::from_diagonal(&di), standard: true }
    }

    /// `R = (W B^{-1})^{1/2}`: the norm of `(u, v)_B = (B^{-1} u, v)`.
    pub fn b_inner(weights: &[f64], b: &MultiplicationOperator) -> Result<Self> {
        let n = weights.len();
        if b.points() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.points() });
        }
        if !b.is_hermitian(1e-12) {
            return Err(Error::InvalidParameter("B-inner product needs Hermitian B".into()));
        }
        let half_inv = b.hermitian_power(-0.5)?;
        let half = b.hermitian_power(0.5)?;
        let sw: Vec<Complex64> = (0..n * b.dim()).map(|i| Complex64::new(weights[i % n].sqrt(), 0.0)).collect();
        let swi: Vec<Complex64> = sw.iter().map(|v| v.inv()).collect();
        let r = CsrMatrix::from_diagonal(&sw).mul(&half_inv.to_csr());
        let r_inv = half.to_csr().mul(&CsrMatrix::from_diagonal(&swi));
        Ok(Geometry { r, r_inv, standard: false })
    }

    pub fn for_operator(op: &SystemOperator) -> Result<Self> {
        match op.b_inner() {
            Some(b) => Self::b_inner(op.weights(), b),
            None => Ok(Self::standard(op.weights(), op.fiber_dim())),
        }
    }

    /// Whether this is the plain `L^2(mu)` geometry.
    pub fn is_standard(&self) -> bool {
        self.standard
    }

    pub fn r(&self) -> &CsrMatrix {
        &self.r
    }

    pub fn r_inv(&self) -> &CsrMatrix {
        &self.r_inv
    }

    pub fn vec_norm(&self, u: &[Complex64]) -> f64 {
        self.r.matvec(u).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Operator norm of a sparse matrix in this geometry.
    pub fn norm_csr(&self, t: &CsrMatrix) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite);
        }
        let m = self.r.mul(t).mul(&self.r_inv);
        sparse_spectral_norm(&m)
    }

    /// Operator norm of a dense matrix in this geometry.
    pub fn norm_dense(&self, t: &CMatrix) -> Result<f64> {
        spectral_norm(&self.conjugate_dense(t))
    }

    /// `R T R^{-1}` for dense `T`.
    pub fn conjugate_dense(&self, t: &CMatrix) -> CMatrix {
        if self.standard {
            let d: Vec<Complex64> = (0..t.nrows()).map(|i| self.r.get(i, i)).collect();
            CMatrix::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] * d[i] / d[j])
        } else {
            let r = self.r.to_dense();
            let ri = self.r_inv.to_dense();
            crate::linalg::matmul(&crate::linalg::matmul(&r, t), &ri)
        }
    }
}

/// Dimension below which sparse norms fall back to a dense SVD.
const DENSE_NORM_LIMIT: usize = 160;

/// Spectral norm of a sparse matrix: dense SVD on the active submatrix when
/// small, Lanczos on `M^H M` otherwise.
pub fn sparse_spectral_norm(m: &CsrMatrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let (rows, cols) = m.active_rows_cols();
    if rows.is_empty() {
        return Ok(0.0);
    }
    let sub = m.submatrix(&rows, &cols);
    if rows.len().min(cols.len()) <= DENSE_NORM_LIMIT {
        return spectral_norm(&sub.to_dense());
    }
    let adj = sub.adjoint();
    let apply = |x: &[Complex64]| adj.matvec(&sub.matvec(x));
    let top = largest_eigenvalue_psd(apply, cols.len(), 400.min(cols.len()), 1e-12);
    Ok(top.max(0.0).sqrt())
}

/// `L^2(mu)` operator norm.
pub fn operator_norm(t: &SystemOperator) -> Result<f64> {
    Geometry::standard(t.weights(), t.fiber_dim()).norm_csr(t.matrix())
}

/// `[eta I, T] = eta T - T eta`; entries `(eta_{p(i)} - eta_{p(j)}) T_ij`.
pub fn commutator(eta: &LipFunction, t: &SystemOperator) -> SystemOperator {
    t.with_matrix(commutator_power(eta.values(), t.matrix(), t.points(), 1))
}

/// `delta^k(T)` for `delta = [eta I, .]`, acting entrywise on any matrix in
/// the component-major numbering over `n` points.
pub fn commutator_power(eta: &[f64], t: &CsrMatrix, n: usize, k: u32) -> CsrMatrix {
    t.map_entries(|i, j, v| v * (eta[i % n] - eta[j % n]).powi(k as i32))
}

/// Dense variant of [`commutator_power`].
pub fn commutator_power_dense(eta: &[f64], t: &CMatrix, n: usize, k: u32) -> CMatrix {
    CMatrix::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] * (eta[i % n] - eta[j % n]).powi(k as i32))
}

/// `||[eta I, [eta I, D]]||` in `L^2(mu)`.
pub fn second_commutator_defect(eta: &LipFunction, d: &SystemOperator) -> Result<f64> {
    operator_norm(&d.with_matrix(commutator_power(eta.values(), d.matrix(), d.points(), 2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    pub kappa: f64,
    /// Index of the family member attaining the maximum.
    pub argmax: usize,
    pub ratios: Vec<f64>,
}

/// `max_eta ||[eta I, D]|| / ||eta||_Lip` over the family.
pub fn commutator_constant(d: &SystemOperator, family: &[LipFunction]) -> Result<KappaReport> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let geom = Geometry::for_operator(d)?;
    let mut ratios = Vec::with_capacity(family.len());
    for (idx, eta) in family.iter().enumerate() {
        let l = eta.lip_norm();
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("family member {idx} is constant or not Lipschitz")));
        }
        let c = geom.norm_csr(&commutator_power(eta.values(), d.matrix(), d.points(), 1))?;
        ratios.push(c / l);
    }
    let (argmax, kappa) = ratios.iter().enumerate().fold((0, 0.0), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
    Ok(KappaReport { kappa, argmax, ratios })
}

/// Which functions go into the certification family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOptions {
    pub alphas: Vec<f64>,
    pub random: usize,
    pub seed: u64,
    /// Neighbour radius of the smoothing pass for random members.
    pub smoothing_radius: f64,
    /// At most this many singleton centres, evenly strided; `None` uses all.
    pub singleton_cap: Option<usize>,
}

impl FamilyOptions {
    pub fn dyadic(seed: u64, smoothing_radius: f64) -> Self {
        FamilyOptions {
            alphas: (-6..=6).map(|k| 2f64.powi(k)).collect(),
            random: 32,
            seed,
            smoothing_radius,
            singleton_cap: None,
        }
    }
}

/// Singleton cutoffs, cutoffs of `k`, and smoothed random Lipschitz functions.
/// Constant members (possible on tiny spaces) are left out.
pub fn certification_family(
    space: &MetricMeasureSpace,
    k: Option<&SupportSet>,
    opts: &FamilyOptions,
) -> Result<Vec<LipFunction>> {
    let n = space.len();
    let centres: Vec<usize> = match opts.singleton_cap {
        Some(cap) if cap < n => {
            let cap = cap.max(1);
            (0..cap).map(|i| i * n / cap).collect()
        }
        _ => (0..n).collect(),
    };
    let mut out = Vec::new();
    for &c in &centres {
        let single = SupportSet::from_indices(n, &[c])?;
        for &a in &opts.alphas {
            out.push(cutoff(space, &single, a)?);
        }
    }
    if let Some(k) = k {
        for &a in &opts.alphas {
            out.push(cutoff(space, k, a)?);
        }
    }
    let mut rng = seeded_rng(opts.seed);
    for _ in 0..opts.random {
        out.push(random_lipschitz(space, &mut rng, opts.smoothing_radius)?);
    }
    out.retain(|f| !f.is_constant() && f.lip_norm() > 0.0);
    if out.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(out)
}

/// Assembles an `m N x m N` matrix from `N x N` blocks.
pub fn assemble_blocks(points: usize, m: usize, blocks: &[(usize, usize, &CsrMatrix)]) -> CsrMatrix {
    let mut trip = Vec::new();
    for &(bi, bj, b) in blocks {
        assert!(bi < m && bj < m);
        for (r, c, v) in b.triplets() {
            trip.push((bi * points + r, bj * points + c, v));
        }
    }
    CsrMatrix::from_triplets(points * m, points * m, &trip)
}

/// Diagonal indicator matrix of a set.
pub fn indicator(set: &SupportSet) -> CsrMatrix {
    let d: Vec<Complex64> =
        set.mask().iter().map(|&b| if b { Complex64::new(1.0, 0.0) } else { Complex64::zero() }).collect();
    CsrMatrix::from_diagonal(&d)
}

/// Power iteration estimate of an operator norm, independent of the SVD path.
pub fn operator_norm_power_iteration(t: &SystemOperator, iterations: usize) -> f64 {
    let geom = Geometry::standard(t.weights(), t.fiber_dim());
    let m = geom.r.mul(t.matrix()).mul(&geom.r_inv);
    let adj = m.adjoint();
    let top = crate::linalg::lanczos::power_iteration_psd(|x| adj.matvec(&m.matvec(x)), t.size(), iterations);
    top.max(0.0).sqrt()
}

pub(crate) fn zeros_c(n: usize) -> Vec<Complex64> {
    vec![Complex64::zero(); n]
}
