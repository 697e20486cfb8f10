use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Zero;

use super::{assemble_blocks, indicator, EllipticityReport, MultiplicationOperator, SystemOperator};
use crate::error::{Error, Result};
use crate::linalg::dense::hermitian_eigen;
use crate::linalg::CsrMatrix;
use crate::space::{BoundaryCondition, GridSpace, SupportSet};

/// Forward-difference gradient blocks `(grad_k f)(p) = (f(p + e_k) - f(p)) / h`,
/// one `N x N` block per axis, plus the set of scalar unknowns.
///
/// Component `k` at node `p` stores the edge `(p, p + e_k)`. Edges leaving
/// the kept cells are dead slots (zero rows). With `Some(Dirichlet)` the
/// boundary nodes are eliminated: their columns vanish and edges joining two
/// boundary nodes are dropped. `None` and `Some(Neumann)` keep every node.
/// Axes with `axes[k] == false` get an all-zero block.
pub fn gradient_blocks(grid: &GridSpace, axes: [bool; 2], bc: Option<BoundaryCondition>) -> (Vec<CsrMatrix>, SupportSet) {
    let n = grid.space.len();
    let dofs = match bc {
        Some(BoundaryCondition::Dirichlet) => {
            let b = grid.boundary_points();
            SupportSet::from_mask(b.mask().iter().map(|&x| !x).collect())
        }
        _ => SupportSet::full(n),
    };
    let inv_h = 1.0 / grid.h();
    let mut blocks = Vec::with_capacity(grid.dims());
    for axis in 0..grid.dims() {
        let mut trip = Vec::new();
        if axes[axis] {
            for p in 0..n {
                let Some(q) = grid.step(grid.cells[p], axis, true) else { continue };
                if !dofs.contains(p) && !dofs.contains(q) {
                    continue;
                }
                if dofs.contains(q) {
                    trip.push((p, q, Complex64::new(inv_h, 0.0)));
                }
                if dofs.contains(p) {
                    trip.push((p, p, Complex64::new(-inv_h, 0.0)));
                }
            }
        }
        blocks.push(CsrMatrix::from_triplets(n, n, &trip));
    }
    (blocks, dofs)
}

/// `mu`-weighted adjoint of an `N x N` block: `W^{-1} G^H W`.
fn weighted_adjoint_block(g: &CsrMatrix, w: &[f64]) -> CsrMatrix {
    g.adjoint().map_entries(|i, j, v| v * (w[j] / w[i]))
}

/// `D = [[0, -div], [grad, 0]]` with forward differences along the enabled
/// axes and `-div` the exact weighted adjoint of `grad`.
pub fn build_case1(grid: &GridSpace, axes: [bool; 2]) -> Result<SystemOperator> {
    let n = grid.space.len();
    let dims = grid.dims();
    let m = 1 + dims;
    let (grads, _) = gradient_blocks(grid, axes, None);
    let w = grid.space.weights();
    let adjs: Vec<CsrMatrix> = grads.iter().map(|g| weighted_adjoint_block(g, w)).collect();
    let mut blocks = Vec::new();
    for k in 0..dims {
        blocks.push((0, 1 + k, &adjs[k]));
        blocks.push((1 + k, 0, &grads[k]));
    }
    let matrix = assemble_blocks(n, m, &blocks);
    let space = grid.space.clone().with_fiber_dim(m);
    let names: &[&str] = if dims == 1 { &["f", "u1"] } else { &["f", "u1", "u2"] };
    SystemOperator::new(&space, m, matrix)?.with_blocks(names).mark_selfadjoint()
}

/// `BD` together with the ellipticity report of `B`. The B-inner product is
/// attached when `D` is self-adjoint and `B` Hermitian.
pub fn build_case2(d: &SystemOperator, b: &MultiplicationOperator) -> Result<(SystemOperator, EllipticityReport)> {
    if b.points() != d.points() || b.dim() != d.fiber_dim() {
        return Err(Error::DimensionMismatch { expected: d.size(), found: b.points() * b.dim() });
    }
    let report = b.ellipticity();
    if !(report.lambda > 0.0) {
        return Err(Error::EllipticityViolated { point: report.witness_point, value: report.lambda });
    }
    let mut bd = d.with_matrix(b.to_csr().mul(d.matrix()));
    if d.is_selfadjoint_standard() && b.is_hermitian(1e-12) {
        bd = bd.mark_selfadjoint_b(b.clone())?;
    }
    Ok((bd, report))
}

/// Case III assembly: the three-block operator, its coefficient and the
/// gradient it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Case3 {
    pub d: SystemOperator,
    pub b: MultiplicationOperator,
    pub report: EllipticityReport,
    /// `grad_V`, one `N x N` block per axis.
    pub grad: Vec<CsrMatrix>,
    /// Scalar unknowns of `V` (all nodes for Neumann, interior for Dirichlet).
    pub scalar_dofs: SupportSet,
    pub a: Vec<f64>,
    pub coeff: MultiplicationOperator,
}

impl Case3 {
    pub fn bd(&self) -> SystemOperator {
        self.d.with_matrix(self.b.to_csr().mul(self.d.matrix()))
    }

    /// First diagonal block of `(BD)^2`.
    pub fn l_operator(&self) -> CsrMatrix {
        let bd = self.bd();
        let sq = bd.matrix().mul(bd.matrix());
        let n = self.d.points();
        let idx: Vec<usize> = (0..n).collect();
        sq.submatrix(&idx, &idx)
    }

    /// Stacked `[P_S f; grad_V f]` as a `(1 + dims) N x N` matrix.
    pub fn lift_matrix(&self) -> CsrMatrix {
        let n = self.d.points();
        let ps = indicator(&self.scalar_dofs);
        let mut trip: Vec<(usize, usize, Complex64)> = ps.triplets().collect();
        for (k, g) in self.grad.iter().enumerate() {
            trip.extend(g.triplets().map(|(r, c, v)| ((1 + k) * n + r, c, v)));
        }
        CsrMatrix::from_triplets((1 + self.grad.len()) * n, n, &trip)
    }
}

/// Builds `D = [[0, P_S, -div_V], [P_S, 0, 0], [grad_V, 0, 0]]` and
/// `B = [[a, 0], [0, A]]` on the grid with the boundary condition of its spec.
pub fn build_case3(grid: &GridSpace, a: &[f64], coeff: &MultiplicationOperator) -> Result<Case3> {
    let n = grid.space.len();
    let dims = grid.dims();
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.len() });
    }
    if coeff.points() != n || coeff.dim() != 1 + dims {
        return Err(Error::DimensionMismatch { expected: n * (1 + dims), found: coeff.points() * coeff.dim() });
    }
    let mut lambda = f64::INFINITY;
    let mut witness = 0;
    for (x, &ax) in a.iter().enumerate() {
        if !ax.is_finite() {
            return Err(Error::NonFinite);
        }
        if ax < lambda {
            lambda = ax;
            witness = x;
        }
        let blk = coeff.block(x);
        let prin = blk.view((1, 1), (dims, dims)).into_owned();
        let herm = (&prin + prin.adjoint()) * Complex64::new(0.5, 0.0);
        let lo = hermitian_eigen(&herm).0[0];
        if lo < lambda {
            lambda = lo;
            witness = x;
        }
    }
    if !(lambda > 0.0) {
        return Err(Error::EllipticityViolated { point: witness, value: lambda });
    }
    let (grad, dofs) = gradient_blocks(grid, [true, true], Some(grid.spec.boundary));
    let w = grid.space.weights();
    let adjs: Vec<CsrMatrix> = grad.iter().map(|g| weighted_adjoint_block(g, w)).collect();
    let ps = indicator(&dofs);
    let m = 2 + dims;
    let mut blocks = vec_blocks(&ps);
    for k in 0..dims {
        blocks.push((0, 2 + k, &adjs[k]));
        blocks.push((2 + k, 0, &grad[k]));
    }
    let matrix = assemble_blocks(n, m, &blocks);
    let space = grid.space.clone().with_fiber_dim(m);
    let names: &[&str] = if dims == 1 { &["u", "v", "w1"] } else { &["u", "v", "w1", "w2"] };
    let d = SystemOperator::new(&space, m, matrix)?.with_blocks(names).mark_selfadjoint()?;
    let b = MultiplicationOperator::from_fn(n, m, |x, i, j| match (i, j) {
        (0, 0) => Complex64::new(a[x], 0.0),
        (0, _) | (_, 0) => Complex64::zero(),
        _ => coeff.entry(x, i - 1, j - 1),
    });
    let report = EllipticityReport { lambda, witness_point: witness, sup_norm: b.sup_norm() };
    Ok(Case3 { d, b, report, grad, scalar_dofs: dofs, a: a.to_vec(), coeff: coeff.clone() })
}

fn vec_blocks(ps: &CsrMatrix) -> Vec<(usize, usize, &CsrMatrix)> {
    alloc::vec![(0, 1, ps), (1, 0, ps)]
}

/// Result of rewriting `BD = B~ D + C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Case3Split {
    pub b_tilde: MultiplicationOperator,
    pub c: SystemOperator,
    pub shift: f64,
    /// `B~` is Hermitian exactly when the principal block of `A` is.
    pub hermitian: bool,
    /// Pointwise minimum eigenvalue of `Herm(B~)`.
    pub lambda_tilde: f64,
}

/// Replaces `A00` by `Re A00 + shift` and `A_j0` by `conj(A_0j)`; the shift
/// is the first of `0, lambda/2, lambda, 2 lambda, ...` giving
/// `Herm(B~) >= lambda / 2`. `C = (B - B~) D` lives in the first block column.
pub fn split_case3(b3: &MultiplicationOperator, d3: &SystemOperator, lambda: f64) -> Result<Case3Split> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("split needs a positive ellipticity constant".into()));
    }
    let m = b3.dim();
    let build = |shift: f64| {
        MultiplicationOperator::from_fn(b3.points(), m, |x, i, j| match (i, j) {
            (1, 1) => Complex64::new(b3.entry(x, 1, 1).re + shift, 0.0),
            (i, 1) if i >= 2 => b3.entry(x, 1, i).conj(),
            _ => b3.entry(x, i, j),
        })
    };
    let mut shift = 0.0;
    let mut next = 0.5 * lambda;
    for _ in 0..200 {
        let bt = build(shift);
        let rep = bt.ellipticity();
        if rep.lambda >= 0.5 * lambda - 1e-12 {
            let diff = b3.to_csr().sub(&bt.to_csr());
            let c = d3.with_matrix(diff.mul(d3.matrix()));
            let hermitian = bt.is_hermitian(1e-12);
            return Ok(Case3Split { b_tilde: bt, c, shift, hermitian, lambda_tilde: rep.lambda });
        }
        shift = next;
        next *= 2.0;
        if !shift.is_finite() {
            break;
        }
    }
    Err(Error::NoShift)
}
