//! Second-order hyperbolic problems `F'' + L F = 0` solved through the first
//! block of `cos(tBD)`, with support, residual, energy and form checks.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::group::{fit_envelope, group_bound_estimate, uniform_step, GroupBound, Method, Propagator};
use crate::linalg::dense::hermitian_eigen;
use crate::linalg::CsrMatrix;
use crate::operators::{
    build_case1, build_case2, build_case3, commutator_constant, split_case3, Geometry, MultiplicationOperator, Section,
    SystemOperator,
};
use crate::propagation::{dispersive_margin, eps_support};
use crate::quadrature::integrate_doubling;
use crate::space::{BoundaryCondition, GridSpace, LipFunction, MetricMeasureSpace, SupportSet};
#[allow(unused_imports)]
use num_traits::Float;

/// Tolerance of the time quadrature for `int_0^t cos(sT) g ds`.
pub const INTEGRAL_TOL: f64 = 1e-10;

/// `a` and `A` of `L u = -a sum_jk d_j A_jk d_k u (+ lower order)`.
///
/// For the homogeneous problem `A` is `d x d`. For the inhomogeneous one it is
/// `(1 + d) x (1 + d)` with index 0 carrying the lower-order terms, and the
/// principal block sits at offset 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub a: Vec<f64>,
    pub matrix: MultiplicationOperator,
    pub lambda: f64,
    pub a_sup: f64,
    pub matrix_sup: f64,
    dims: usize,
}

impl CoefficientField {
    pub fn new(a: Vec<f64>, matrix: MultiplicationOperator, dims: usize) -> Result<Self> {
        let n = a.len();
        if matrix.points() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.points() });
        }
        if matrix.dim() != dims && matrix.dim() != dims + 1 {
            return Err(Error::DimensionMismatch { expected: dims, found: matrix.dim() });
        }
        let off = matrix.dim() - dims;
        let mut lambda = f64::INFINITY;
        let mut witness = 0;
        for x in 0..n {
            if !a[x].is_finite() {
                return Err(Error::NonFinite);
            }
            let blk = matrix.block(x);
            let prin = blk.view((off, off), (dims, dims)).into_owned();
            let herm = (&prin + prin.adjoint()) * Complex64::new(0.5, 0.0);
            let lo = hermitian_eigen(&herm).0[0].min(a[x]);
            if lo < lambda {
                lambda = lo;
                witness = x;
            }
        }
        if !(lambda > 0.0) {
            return Err(Error::EllipticityViolated { point: witness, value: lambda });
        }
        let a_sup = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let matrix_sup = matrix.sup_norm();
        Ok(CoefficientField { a, matrix, lambda, a_sup, matrix_sup, dims })
    }

    /// Constant `a` and `A = a_matrix I` (the lower-order entry of an
    /// inhomogeneous field is 0).
    pub fn constant(points: usize, dims: usize, a: f64, a_matrix: f64, inhomogeneous: bool) -> Result<Self> {
        let m = dims + inhomogeneous as usize;
        let off = inhomogeneous as usize;
        let matrix = MultiplicationOperator::from_fn(points, m, |_, i, j| {
            if i == j && i >= off {
                Complex64::new(a_matrix, 0.0)
            } else {
                Complex64::zero()
            }
        });
        Self::new(vec![a; points], matrix, dims)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_inhomogeneous(&self) -> bool {
        self.matrix.dim() == self.dims + 1
    }

    /// `(||a||_inf ||A||_inf)^{1/2}`.
    pub fn alpha(&self) -> f64 {
        (self.a_sup * self.matrix_sup).sqrt()
    }
}

/// Scalar initial data `F(0) = f`, `F'(0) = g` supported in `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub f: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub k: SupportSet,
}

impl CauchyData {
    pub fn new(f: Vec<Complex64>, g: Vec<Complex64>, k: SupportSet) -> Result<Self> {
        let n = k.universe();
        for v in [&f, &g] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
            let s = eps_support(&Section::from_values(n, 1, v.clone())?, 1e-12)?;
            let outside = s.members().find(|&x| !k.contains(x));
            if let Some(point) = outside {
                return Err(Error::SupportViolation { point });
            }
        }
        Ok(CauchyData { f, g, k })
    }
}

/// Everything needed to evaluate `L`, its form and the energy of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderProblem {
    pub space: MetricMeasureSpace,
    pub h: f64,
    /// First block of `(BD)^2`.
    pub l: CsrMatrix,
    /// `grad` (homogeneous) or `[P_S; grad_V]` (inhomogeneous), stacked.
    pub lift: CsrMatrix,
    /// Gradient blocks, one per axis.
    pub grad: Vec<CsrMatrix>,
    pub a: Vec<f64>,
    /// Coefficient acting on the lifted components.
    pub coeff: MultiplicationOperator,
    /// Scalar unknowns (interior nodes under Dirichlet).
    pub dofs: SupportSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// `||C||` in the `B~`-norm (standard norm when `B~` is not Hermitian).
    pub c_norm: f64,
    pub shift: f64,
    pub hermitian: bool,
    pub lambda_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicSolution {
    pub times: Vec<f64>,
    pub f: Vec<Vec<Complex64>>,
    pub df: Vec<Vec<Complex64>>,
    /// `alpha` (homogeneous) or `c kappa_emp` of `BD` (inhomogeneous).
    pub bound: f64,
    pub bound_label: &'static str,
    pub data: CauchyData,
    pub problem: SecondOrderProblem,
    /// The generator `BD`.
    pub generator: SystemOperator,
    pub method: Method,
    pub perturbation: Option<Perturbation>,
    /// Constants of `||e^{itBD}|| <= c e^{omega |t|}` used for `alpha~`.
    pub group_bound: Option<GroupBound>,
}

/// `(e^{itT} u + e^{-itT} u) / 2` as a section.
pub fn cosine_apply(p: &Propagator, t: f64, u: &Section) -> Result<Section> {
    Section::from_values(u.points(), u.fiber_dim(), p.cosine(t, u.values())?)
}

fn weighted_l2(w: &[f64], u: &[Complex64]) -> f64 {
    let n = w.len();
    u.iter().enumerate().map(|(i, v)| w[i % n] * v.norm_sqr()).sum::<f64>().sqrt()
}

fn check_trace(dofs: &SupportSet, u: &[Complex64]) -> Result<()> {
    let top = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    match (0..u.len()).find(|&x| !dofs.contains(x) && u[x].norm() > 1e-12 * top) {
        Some(point) => Err(Error::DirichletTrace { point }),
        None => Ok(()),
    }
}

/// `BD` with Case I `D` and `B = diag(a / beta, beta A)`,
/// `beta = (||a|| / ||A||)^{1/2}`.
pub fn homogeneous_generator(grid: &GridSpace, coeff: &CoefficientField) -> Result<SystemOperator> {
    let n = grid.space.len();
    let dims = grid.dims();
    if coeff.is_inhomogeneous() || coeff.dims() != dims || coeff.a.len() != n {
        return Err(Error::DimensionMismatch { expected: dims, found: coeff.matrix.dim() });
    }
    let d = build_case1(grid, [true, true])?;
    let beta = (coeff.a_sup / coeff.matrix_sup).sqrt();
    let b = MultiplicationOperator::from_fn(n, 1 + dims, |x, i, j| match (i, j) {
        (0, 0) => Complex64::new(coeff.a[x] / beta, 0.0),
        (0, _) | (_, 0) => Complex64::zero(),
        _ => coeff.matrix.entry(x, i - 1, j - 1) * beta,
    });
    Ok(build_case2(&d, &b)?.0)
}

/// Solves `F'' + L F = 0` with `L = -a div A grad` through `T = BD`, Case I
/// `D` and `B = diag(a / beta, beta A)`, `beta = (||a|| / ||A||)^{1/2}`.
pub fn solve_homogeneous(grid: &GridSpace, coeff: &CoefficientField, data: &CauchyData, times: &[f64]) -> Result<HyperbolicSolution> {
    let n = grid.space.len();
    let dims = grid.dims();
    if coeff.is_inhomogeneous() || coeff.dims() != dims || coeff.a.len() != n {
        return Err(Error::DimensionMismatch { expected: dims, found: coeff.matrix.dim() });
    }
    if data.k.universe() != n {
        return Err(Error::DimensionMismatch { expected: n, found: data.k.universe() });
    }
    let bd = homogeneous_generator(grid, coeff)?;
    let p = Propagator::auto(&bd)?;
    let (grad, _) = crate::operators::gradient_blocks(grid, [true, true], None);
    let lift = stack(&grad, n, false, &SupportSet::full(n));
    let problem = SecondOrderProblem {
        space: grid.space.clone().with_fiber_dim(1),
        h: grid.h(),
        l: first_block_square(&bd, n),
        lift,
        grad,
        a: coeff.a.clone(),
        coeff: coeff.matrix.clone(),
        dofs: SupportSet::full(n),
    };
    let (f, df) = evolve_first_block(&p, data, times)?;
    Ok(HyperbolicSolution {
        times: times.to_vec(),
        f,
        df,
        bound: coeff.alpha(),
        bound_label: "alpha",
        data: data.clone(),
        problem,
        generator: bd,
        method: p.method(),
        perturbation: None,
        group_bound: None,
    })
}

/// Solves the inhomogeneous problem on the grid's boundary condition through
/// the Case III operator, evolving `e^{itBD}` by scaling and squaring with
/// norms measured in the `B~`-geometry of the split `BD = B~ D + C`. The
/// recorded bound is `c kappa_emp` with `kappa_emp` over `family` and `c`
/// from the measured group envelope.
pub fn solve_inhomogeneous(
    grid: &GridSpace,
    coeff: &CoefficientField,
    data: &CauchyData,
    times: &[f64],
    family: &[LipFunction],
) -> Result<HyperbolicSolution> {
    let n = grid.space.len();
    let dims = grid.dims();
    if !coeff.is_inhomogeneous() || coeff.dims() != dims {
        return Err(Error::DimensionMismatch { expected: dims + 1, found: coeff.matrix.dim() });
    }
    if data.k.universe() != n {
        return Err(Error::DimensionMismatch { expected: n, found: data.k.universe() });
    }
    let case = build_case3(grid, &coeff.a, &coeff.matrix)?;
    if grid.spec.boundary == BoundaryCondition::Dirichlet {
        check_trace(&case.scalar_dofs, &data.f)?;
        check_trace(&case.scalar_dofs, &data.g)?;
    }
    let split = split_case3(&case.b, &case.d, case.report.lambda)?;
    let bd = case.bd();
    let geometry = if split.hermitian {
        Geometry::b_inner(bd.weights(), &split.b_tilde)?
    } else {
        Geometry::standard(bd.weights(), bd.fiber_dim())
    };
    let c_norm = geometry.norm_csr(split.c.matrix())?;
    let p = Propagator::with_geometry(&bd, Method::SquareScale, geometry)?;

    let tmax = times.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(grid.h());
    let samples: Vec<f64> = (1..=4).map(|i| tmax * i as f64 / 4.0).collect();
    let std_p = Propagator::with_geometry(&bd, Method::SquareScale, Geometry::standard(bd.weights(), bd.fiber_dim()))?;
    let gb = group_bound_estimate(&std_p, &samples, None)?.bound;
    let kappa = commutator_constant(&bd, family)?.kappa;

    let lift = stack(&case.grad, n, true, &case.scalar_dofs);
    let problem = SecondOrderProblem {
        space: grid.space.clone().with_fiber_dim(1),
        h: grid.h(),
        l: case.l_operator(),
        lift,
        grad: case.grad.clone(),
        a: coeff.a.clone(),
        coeff: coeff.matrix.clone(),
        dofs: case.scalar_dofs.clone(),
    };
    let (f, df) = evolve_first_block(&p, data, times)?;
    Ok(HyperbolicSolution {
        times: times.to_vec(),
        f,
        df,
        bound: gb.c * kappa,
        bound_label: "alpha_tilde",
        data: data.clone(),
        problem,
        generator: bd,
        method: Method::SquareScale,
        perturbation: Some(Perturbation { c_norm, shift: split.shift, hermitian: split.hermitian, lambda_tilde: split.lambda_tilde }),
        group_bound: Some(gb),
    })
}

fn first_block_square(t: &SystemOperator, n: usize) -> CsrMatrix {
    let sq = t.matrix().mul(t.matrix());
    let idx: Vec<usize> = (0..n).collect();
    sq.submatrix(&idx, &idx)
}

/// `[grad_1; ...]`, optionally preceded by the projection onto `dofs`.
fn stack(grad: &[CsrMatrix], n: usize, with_projection: bool, dofs: &SupportSet) -> CsrMatrix {
    let mut trip = Vec::new();
    let mut row = 0;
    if with_projection {
        trip.extend(dofs.members().map(|x| (x, x, Complex64::new(1.0, 0.0))));
        row = n;
    }
    for g in grad {
        trip.extend(g.triplets().map(|(r, c, v)| (row + r, c, v)));
        row += n;
    }
    CsrMatrix::from_triplets(row, n, &trip)
}

fn lifted(u: &[Complex64], size: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::zero(); size];
    v[..u.len()].copy_from_slice(u);
    v
}

/// `F = [cos(tT) f^ + int_0^t cos(sT) g^ ds]_0` and
/// `F' = [-T sin(tT) f^ + cos(tT) g^]_0`.
fn evolve_first_block(p: &Propagator, data: &CauchyData, times: &[f64]) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
    let n = data.f.len();
    let size = p.size();
    let t_op = p.generator().matrix();
    let fh = lifted(&data.f, size);
    let gh = lifted(&data.g, size);
    let neg: Vec<f64> = times.iter().map(|t| -t).collect();
    let (fp, fm) = (p.trajectory(times, &fh)?, p.trajectory(&neg, &fh)?);
    let g_zero = data.g.iter().all(|v| v.is_zero());
    let (gp, gm) = if g_zero {
        (Vec::new(), Vec::new())
    } else {
        (p.trajectory(times, &gh)?, p.trajectory(&neg, &gh)?)
    };
    let integrals = if g_zero { Vec::new() } else { cosine_integrals(p, times, &gh)? };
    let half = Complex64::new(0.5, 0.0);
    let mut fs = Vec::with_capacity(times.len());
    let mut dfs = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let mut f: Vec<Complex64> = (0..n).map(|i| (fp[k][i] + fm[k][i]) * half).collect();
        let sin: Vec<Complex64> = fp[k].iter().zip(&fm[k]).map(|(a, b)| (a - b) * Complex64::new(0.0, -0.5)).collect();
        let tsin = t_op.matvec(&sin);
        let mut df: Vec<Complex64> = tsin[..n].iter().map(|v| -v).collect();
        if !g_zero {
            for i in 0..n {
                f[i] += integrals[k][i];
                df[i] += (gp[k][i] + gm[k][i]) * half;
            }
        }
        fs.push(f);
        dfs.push(df);
    }
    Ok((fs, dfs))
}

/// `int_0^t cos(sT) u ds` at every time. Spectral propagators integrate each
/// time directly; on a uniform grid the others add
/// `(e^{it_k T} w_+ + e^{-it_k T} w_-) / 2` per step with
/// `w_+- = int_0^dt e^{+-irT} u dr`.
fn cosine_integrals(p: &Propagator, times: &[f64], u: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    let direct = |t: f64| p.cosine_integral(t, u, INTEGRAL_TOL);
    let dt = match (p.method(), uniform_step(times)) {
        (Method::Eigen, _) | (_, None) => return times.iter().map(|&t| direct(t)).collect(),
        (_, Some(dt)) => dt,
    };
    let unorm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let step = |sign: f64| -> Result<Vec<Complex64>> {
        Ok(integrate_doubling(|r| p.evolve(sign * r, u), 0.0, dt, INTEGRAL_TOL * unorm * dt.abs(), 8, 512)?.value)
    };
    let (wp, wm) = (step(1.0)?, step(-1.0)?);
    let head = &times[..times.len() - 1];
    let neg: Vec<f64> = head.iter().map(|t| -t).collect();
    let ep = p.trajectory(head, &wp)?;
    let em = p.trajectory(&neg, &wm)?;
    let mut acc = direct(times[0])?;
    let mut out = Vec::with_capacity(times.len());
    out.push(acc.clone());
    for k in 0..head.len() {
        for i in 0..acc.len() {
            acc[i] += (ep[k][i] + em[k][i]) * 0.5;
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// `sum_k (-t^2 L)^k f / (2k)!`, a second route to the first block of
/// `cos(tBD)` that never forms `BD`.
pub fn cosine_series(l: &CsrMatrix, t: f64, f: &[Complex64], tol: f64) -> Vec<Complex64> {
    let mut term = f.to_vec();
    let mut acc = f.to_vec();
    let fnorm = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if fnorm == 0.0 {
        return acc;
    }
    let mut quiet = 0;
    for k in 1..4000 {
        let lt = l.matvec(&term);
        let scale = -t * t / ((2 * k - 1) as f64 * (2 * k) as f64);
        term = lt.iter().map(|v| v * scale).collect();
        acc.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
        let size = term.iter().map(|v| v.norm()).fold(0.0, f64::max);
        quiet = if size <= tol * fnorm { quiet + 1 } else { 0 };
        if quiet == 2 {
            break;
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuygensSlack {
    pub rel: f64,
    pub cells: f64,
    /// Add the dispersive front width to the allowance.
    pub dispersive: bool,
}

impl Default for HuygensSlack {
    fn default() -> Self {
        HuygensSlack { rel: 0.05, cells: 1.0, dispersive: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuygensReport {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub allowed: Vec<f64>,
    pub bound: f64,
    pub epsilon: f64,
    /// Least-squares slope through the origin over unsaturated times with
    /// `t >= 5h`; `None` when no time qualifies.
    pub fitted_speed: Option<f64>,
    pub pass: bool,
}

/// Checks `radius(F(t), K) <= bound t (1 + rel) + cells h` at every time.
pub fn huygens_support_check(
    sol: &HyperbolicSolution,
    k: &SupportSet,
    bound: f64,
    eps: f64,
    slack: &HuygensSlack,
) -> Result<HuygensReport> {
    let space = &sol.problem.space;
    let h = sol.problem.h;
    let dk = space.distance_to_set(k)?;
    let max_d = dk.iter().copied().fold(0.0, f64::max);
    let n = space.len();
    let mut radii = Vec::with_capacity(sol.times.len());
    let mut allowed = Vec::with_capacity(sol.times.len());
    let (mut stt, mut str_) = (0.0, 0.0);
    for (&t, f) in sol.times.iter().zip(&sol.f) {
        let s = eps_support(&Section::from_values(n, 1, f.clone())?, eps)?;
        let r = s.members().map(|x| dk[x]).fold(0.0, f64::max);
        let mut a = bound * t.abs() * (1.0 + slack.rel) + slack.cells * h;
        if slack.dispersive {
            a += dispersive_margin(bound, t, h, eps);
        }
        if r < max_d && t.abs() >= 5.0 * h {
            stt += t * t;
            str_ += t.abs() * r;
        }
        radii.push(r);
        allowed.push(a);
    }
    let pass = radii.iter().zip(&allowed).all(|(r, a)| r <= a);
    Ok(HuygensReport {
        times: sol.times.clone(),
        radii,
        allowed,
        bound,
        epsilon: eps,
        fitted_speed: if stt > 0.0 { Some(str_ / stt) } else { None },
        pass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyResidual {
    /// `max |(F(t+d) - 2F(t) + F(t-d)) / d^2 + L F(t)| / |F(t)|` over interior times.
    pub interior: f64,
    /// `|F(0) - f| / |f|` (absolute for `f = 0`).
    pub initial_f: f64,
    /// `|F'(0) - g| / |g|` (absolute for `g = 0`).
    pub initial_g: f64,
}

/// Residual of `F'' + L F = 0` by centred differences on a uniform grid,
/// plus the initial conditions at `t = 0` when that time is sampled.
pub fn cauchy_residual(sol: &HyperbolicSolution, l: &CsrMatrix) -> Result<CauchyResidual> {
    if sol.times.len() < 3 {
        return Err(Error::InvalidParameter("centred differences need three times".into()));
    }
    let dt = uniform_step(&sol.times).ok_or(Error::NonUniformTimeGrid)?;
    let w = sol.problem.space.weights();
    let mut interior = 0.0f64;
    for k in 1..sol.times.len() - 1 {
        let (a, b, c) = (&sol.f[k - 1], &sol.f[k], &sol.f[k + 1]);
        let lf = l.matvec(b);
        let res: Vec<Complex64> = (0..b.len()).map(|i| (c[i] - b[i] * 2.0 + a[i]) / (dt * dt) + lf[i]).collect();
        let nb = weighted_l2(w, b);
        if nb > 0.0 {
            interior = interior.max(weighted_l2(w, &res) / nb);
        }
    }
    let rel = |x: &[Complex64], y: &[Complex64]| {
        let d: Vec<Complex64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let ny = weighted_l2(w, y);
        weighted_l2(w, &d) / if ny > 0.0 { ny } else { 1.0 }
    };
    let (mut initial_f, mut initial_g) = (0.0, 0.0);
    if let Some(k) = sol.times.iter().position(|&t| t == 0.0) {
        initial_f = rel(&sol.f[k], &sol.data.f);
        initial_g = rel(&sol.df[k], &sol.data.g);
    }
    Ok(CauchyResidual { interior, initial_f, initial_g })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    /// `|F(t)| + |grad F(t)| + |F'(t)|`.
    pub lhs: Vec<f64>,
    /// `|f| + |grad f| + |g|`.
    pub data_norm: f64,
    /// Smallest `(c_E, omega_E)` on the grid with `lhs <= c_E (1 + t) e^{omega_E t} data_norm`.
    pub fit: GroupBound,
    /// `(F'/a, F') + Re(A psi, psi)` with `psi` the lifted `F`.
    pub energy: Vec<f64>,
    /// `max |E(t) - E(0)| / E(0)`.
    pub drift: f64,
}

pub fn energy_estimate_check(sol: &HyperbolicSolution) -> Result<EnergyReport> {
    let p = &sol.problem;
    let w = p.space.weights();
    let n = w.len();
    let grad_norm = |u: &[Complex64]| -> f64 {
        p.grad.iter().map(|g| weighted_l2(w, &g.matvec(u)).powi(2)).sum::<f64>().sqrt()
    };
    let data_norm = weighted_l2(w, &sol.data.f) + grad_norm(&sol.data.f) + weighted_l2(w, &sol.data.g);
    let m = p.coeff.dim();
    let energy_of = |f: &[Complex64], df: &[Complex64]| -> f64 {
        let kin: f64 = (0..n).map(|x| w[x] * df[x].norm_sqr() / p.a[x]).sum();
        let psi = p.lift.matvec(f);
        let mut pot = 0.0;
        for x in 0..n {
            for i in 0..m {
                for j in 0..m {
                    pot += w[x] * (p.coeff.entry(x, i, j) * psi[j * n + x] * psi[i * n + x].conj()).re;
                }
            }
        }
        kin + pot
    };
    let mut lhs = Vec::with_capacity(sol.times.len());
    let mut energy = Vec::with_capacity(sol.times.len());
    for (f, df) in sol.f.iter().zip(&sol.df) {
        lhs.push(weighted_l2(w, f) + grad_norm(f) + weighted_l2(w, df));
        energy.push(energy_of(f, df));
    }
    let e0 = energy_of(&sol.data.f, &sol.data.g);
    let drift = if e0.abs() > 0.0 { energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs() } else { 0.0 };
    let fit = if data_norm > 0.0 {
        let abs_t: Vec<f64> = sol.times.iter().map(|t| t.abs()).collect();
        let scaled: Vec<f64> = lhs.iter().zip(&abs_t).map(|(v, t)| v / data_norm / (1.0 + t)).collect();
        fit_envelope(&abs_t, &scaled)?
    } else {
        GroupBound::UNITARY
    };
    Ok(EnergyReport { times: sol.times.clone(), lhs, data_norm, fit, energy, drift })
}

/// `max |(L f, g) - J_A(f, g)| / (|f| |g|)` over trial pairs, `J_A` assembled
/// from the lift and the coefficient. Needs `a = 1`.
pub fn form_consistency(problem: &SecondOrderProblem, pairs: &[(Vec<Complex64>, Vec<Complex64>)]) -> Result<f64> {
    if let Some(point) = problem.a.iter().position(|&v| (v - 1.0).abs() > 1e-14) {
        return Err(Error::FormRequiresUnitA { point });
    }
    let w = problem.space.weights();
    let n = w.len();
    let m = problem.coeff.dim();
    let mut worst = 0.0f64;
    for (f, g) in pairs {
        if f.len() != n || g.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: f.len().min(g.len()) });
        }
        check_trace(&problem.dofs, f)?;
        check_trace(&problem.dofs, g)?;
        let lf = problem.l.matvec(f);
        let lhs: Complex64 = (0..n).map(|x| lf[x] * g[x].conj() * w[x]).sum();
        let (pf, pg) = (problem.lift.matvec(f), problem.lift.matvec(g));
        let mut j = Complex64::zero();
        for x in 0..n {
            for r in 0..m {
                for c in 0..m {
                    j += problem.coeff.entry(x, r, c) * pf[c * n + x] * pg[r * n + x].conj() * w[x];
                }
            }
        }
        let denom = weighted_l2(w, f) * weighted_l2(w, g);
        if denom > 0.0 {
            worst = worst.max((lhs - j).norm() / denom);
        }
    }
    Ok(worst)
}
