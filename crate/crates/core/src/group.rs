//! The groups `e^{itD}`: propagators, growth bounds, the commutator integral
//! identity and iterated derivations.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::dense::{expm, hermitian_eigen, matmul, matvec, CMatrix};
use crate::linalg::CsrMatrix;
use crate::operators::{commutator_power, commutator_power_dense, Geometry, SystemOperator};
use crate::quadrature::{integrate_composite, integrate_doubling};
use crate::space::LipFunction;
use crate::special::bessel_j_sequence;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Phases in a (B-)orthonormal eigenbasis; self-adjoint generators only.
    Eigen,
    /// Dense scaling and squaring with the degree 13 Pade approximant.
    SquareScale,
    /// Chebyshev expansion on the Gershgorin interval; self-adjoint only.
    Chebyshev,
}

/// Above this size the automatic choice avoids dense factorisations.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Clone)]
enum Kind {
    Eigen { lambdas: Vec<f64>, left: CMatrix, right: CMatrix },
    Dense { t: CMatrix },
    Chebyshev { center: f64, radius: f64 },
}

/// Evaluates `e^{itT}` for a fixed generator `T`. Spectral data are built
/// eagerly, so a propagator is read-only after construction.
#[derive(Debug, Clone)]
pub struct Propagator {
    method: Method,
    op: SystemOperator,
    geometry: Geometry,
    /// Whether `e^{itT}` is unitary in `geometry`.
    unitary: bool,
    kind: Kind,
}

impl Propagator {
    /// Uses the operator's own geometry (its B-inner product when present).
    pub fn new(op: &SystemOperator, method: Method) -> Result<Self> {
        let geometry = Geometry::for_operator(op)?;
        let flagged = op.is_selfadjoint_standard() || op.b_inner().is_some();
        Self::build(op, method, geometry, flagged)
    }

    /// Eigen for flagged operators, Chebyshev for large flagged ones,
    /// SquareScale for everything else.
    pub fn auto(op: &SystemOperator) -> Result<Self> {
        let flagged = op.is_selfadjoint_standard() || op.b_inner().is_some();
        let method = match (flagged, op.size() > DENSE_LIMIT) {
            (true, false) => Method::Eigen,
            (true, true) => Method::Chebyshev,
            (false, _) => Method::SquareScale,
        };
        Self::new(op, method)
    }

    /// Measures norms in a caller-supplied geometry, e.g. the `B~`-norm for a
    /// perturbed generator `B~ D + C`. Eigen and Chebyshev still require a
    /// flagged operator.
    pub fn with_geometry(op: &SystemOperator, method: Method, geometry: Geometry) -> Result<Self> {
        Self::build(op, method, geometry, false)
    }

    fn build(op: &SystemOperator, method: Method, geometry: Geometry, unitary: bool) -> Result<Self> {
        let flagged = op.is_selfadjoint_standard() || op.b_inner().is_some();
        let kind = match method {
            Method::Eigen => {
                if !flagged {
                    return Err(Error::MethodUnavailable("eigen propagation needs a self-adjoint generator"));
                }
                let own = Geometry::for_operator(op)?;
                let h = own.conjugate_dense(&op.matrix().to_dense());
                let asym = (&h - h.adjoint()).norm();
                let scale = h.norm();
                if scale > 0.0 && asym > 1e-10 * scale {
                    return Err(Error::NotSelfAdjoint { residual: asym / scale });
                }
                let (lambdas, q) = hermitian_eigen(&h);
                let (left, right) = if own.is_standard() {
                    let d: Vec<Complex64> = (0..op.size()).map(|i| own.r().get(i, i)).collect();
                    let left = CMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / d[i]);
                    let qh = q.adjoint();
                    let right = CMatrix::from_fn(qh.nrows(), qh.ncols(), |i, j| qh[(i, j)] * d[j]);
                    (left, right)
                } else {
                    (matmul(&own.r_inv().to_dense(), &q), matmul(&q.adjoint(), &own.r().to_dense()))
                };
                Kind::Eigen { lambdas, left, right }
            }
            Method::SquareScale => Kind::Dense { t: op.matrix().to_dense() },
            Method::Chebyshev => {
                if !flagged {
                    return Err(Error::MethodUnavailable("Chebyshev propagation needs a self-adjoint generator"));
                }
                let (lo, hi) = gershgorin_interval(op.matrix());
                Kind::Chebyshev { center: 0.5 * (lo + hi), radius: (0.5 * (hi - lo)).max(f64::MIN_POSITIVE) }
            }
        };
        Ok(Propagator { method, op: op.clone(), geometry, unitary, kind })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn generator(&self) -> &SystemOperator {
        &self.op
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn size(&self) -> usize {
        self.op.size()
    }

    /// Eigenvalues of the generator (Eigen method only).
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Eigen { lambdas, .. } => Some(lambdas),
            _ => None,
        }
    }

    /// Spectral bound `max |lambda|` used to size quadratures.
    pub fn spectral_radius(&self) -> f64 {
        match &self.kind {
            Kind::Eigen { lambdas, .. } => lambdas.iter().map(|v| v.abs()).fold(0.0, f64::max),
            Kind::Chebyshev { center, radius } => center.abs() + radius,
            Kind::Dense { .. } => self.op.matrix().max_row_sum(),
        }
    }

    fn check_len(&self, u: &[Complex64]) -> Result<()> {
        if u.len() != self.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), found: u.len() });
        }
        Ok(())
    }

    /// `f(T) u` for a scalar function, in the eigenbasis.
    pub fn spectral_apply(&self, f: impl Fn(f64) -> Complex64, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(u)?;
        match &self.kind {
            Kind::Eigen { lambdas, left, right } => {
                let mut c = matvec(right, u);
                for (ck, &l) in c.iter_mut().zip(lambdas) {
                    *ck *= f(l);
                }
                Ok(matvec(left, &c))
            }
            _ => Err(Error::MethodUnavailable("spectral calculus needs the eigen method")),
        }
    }

    /// `e^{itT} u`.
    pub fn evolve(&self, t: f64, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(u)?;
        if !t.is_finite() {
            return Err(Error::NonFinite);
        }
        if t == 0.0 {
            return Ok(u.to_vec());
        }
        match &self.kind {
            Kind::Eigen { .. } => self.spectral_apply(|l| Complex64::new(0.0, t * l).exp(), u),
            Kind::Dense { t: gen } => {
                let e = expm(&(gen * Complex64::new(0.0, t)))?;
                Ok(matvec(&e, u))
            }
            Kind::Chebyshev { center, radius } => Ok(chebyshev_apply(self.op.matrix(), *center, *radius, t, u)),
        }
    }

    /// Dense `e^{itT}`.
    pub fn matrix(&self, t: f64) -> Result<CMatrix> {
        let n = self.size();
        match &self.kind {
            Kind::Eigen { lambdas, left, right } => {
                let mut scaled = right.clone();
                for (k, &l) in lambdas.iter().enumerate() {
                    let ph = Complex64::new(0.0, t * l).exp();
                    scaled.row_mut(k).iter_mut().for_each(|v| *v *= ph);
                }
                Ok(matmul(left, &scaled))
            }
            Kind::Dense { t: gen } => expm(&(gen * Complex64::new(0.0, t))),
            Kind::Chebyshev { .. } => {
                let mut m = CMatrix::zeros(n, n);
                let mut e = vec![Complex64::zero(); n];
                for j in 0..n {
                    e[j] = Complex64::new(1.0, 0.0);
                    let col = self.evolve(t, &e)?;
                    m.column_mut(j).iter_mut().zip(col).for_each(|(a, b)| *a = b);
                    e[j] = Complex64::zero();
                }
                Ok(m)
            }
        }
    }

    /// `e^{itT} u` for every `t` in `times`. Uniform grids are stepped with a
    /// single cached `e^{i dt T}` for the dense and Chebyshev methods.
    pub fn trajectory(&self, times: &[f64], u: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        self.check_len(u)?;
        if times.is_empty() {
            return Ok(Vec::new());
        }
        let step = uniform_step(times);
        match (&self.kind, step) {
            (Kind::Eigen { .. }, _) | (_, None) => times.iter().map(|&t| self.evolve(t, u)).collect(),
            (Kind::Dense { t: gen }, Some(dt)) => {
                let e = expm(&(gen * Complex64::new(0.0, dt)))?;
                let mut out = Vec::with_capacity(times.len());
                let mut cur = self.evolve(times[0], u)?;
                out.push(cur.clone());
                for _ in 1..times.len() {
                    cur = matvec(&e, &cur);
                    out.push(cur.clone());
                }
                Ok(out)
            }
            (Kind::Chebyshev { center, radius }, Some(dt)) => {
                let mut out = Vec::with_capacity(times.len());
                let mut cur = self.evolve(times[0], u)?;
                out.push(cur.clone());
                for _ in 1..times.len() {
                    cur = chebyshev_apply(self.op.matrix(), *center, *radius, dt, &cur);
                    out.push(cur.clone());
                }
                Ok(out)
            }
        }
    }

    /// `cos(tT) u = (e^{itT} u + e^{-itT} u) / 2`.
    pub fn cosine(&self, t: f64, u: &[Complex64]) -> Result<Vec<Complex64>> {
        if let Kind::Eigen { .. } = self.kind {
            return self.spectral_apply(|l| Complex64::new((t * l).cos(), 0.0), u);
        }
        let p = self.evolve(t, u)?;
        let m = self.evolve(-t, u)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a + b) * 0.5).collect())
    }

    /// `sin(tT) u = (e^{itT} u - e^{-itT} u) / 2i`.
    pub fn sine(&self, t: f64, u: &[Complex64]) -> Result<Vec<Complex64>> {
        if let Kind::Eigen { .. } = self.kind {
            return self.spectral_apply(|l| Complex64::new((t * l).sin(), 0.0), u);
        }
        let p = self.evolve(t, u)?;
        let m = self.evolve(-t, u)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) * Complex64::new(0.0, -0.5)).collect())
    }

    /// `int_0^t cos(sT) u ds` by Gauss-Legendre quadrature in `s` with node
    /// doubling until successive values differ by less than `tol |u|`.
    /// The eigen method runs the same quadrature on the spectral coefficients.
    pub fn cosine_integral(&self, t: f64, u: &[Complex64], tol: f64) -> Result<Vec<Complex64>> {
        self.check_len(u)?;
        if t == 0.0 {
            return Ok(vec![Complex64::zero(); u.len()]);
        }
        let unorm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if unorm == 0.0 {
            return Ok(vec![Complex64::zero(); u.len()]);
        }
        // about four radians of phase per panel keeps the doubling short
        let panels = ((t.abs() * self.spectral_radius()) / 4.0).ceil().max(1.0) as usize;
        match &self.kind {
            Kind::Eigen { lambdas, left, right } => {
                let c = matvec(right, u);
                let cnorm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                let res = integrate_composite(
                    |s| Ok(c.iter().zip(lambdas).map(|(ck, &l)| ck * (s * l).cos()).collect()),
                    0.0,
                    t,
                    panels,
                    tol * cnorm,
                    8,
                    512,
                )?;
                Ok(matvec(left, &res.value))
            }
            _ => Ok(integrate_composite(|s| self.cosine(s, u), 0.0, t, panels, tol * unorm, 8, 512)?.value),
        }
    }
}

/// `[lo, hi]` containing every eigenvalue of a matrix with real spectrum.
pub fn gershgorin_interval(t: &CsrMatrix) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in 0..t.nrows() {
        let mut centre = 0.0;
        let mut radius = 0.0;
        for (c, v) in t.row(r) {
            if c == r {
                centre = v.re;
                radius += v.im.abs();
            } else {
                radius += v.norm();
            }
        }
        lo = lo.min(centre - radius);
        hi = hi.max(centre + radius);
    }
    if !lo.is_finite() {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

/// `e^{itT} u` from `e^{izx} = J_0(z) + 2 sum_k i^k J_k(z) T_k(x)` with
/// `x = (T - center) / radius`, truncated once `|J_k| < 1e-14` past `k = z`.
pub fn chebyshev_apply(t: &CsrMatrix, center: f64, radius: f64, time: f64, u: &[Complex64]) -> Vec<Complex64> {
    let z = (radius * time).abs();
    let phase = Complex64::new(0.0, time * center).exp();
    if z < 1e-100 {
        return u.iter().map(|v| v * phase).collect();
    }
    let sign = if time < 0.0 { -1.0 } else { 1.0 };
    let kmax = (z + 10.0 * z.cbrt() + 40.0).ceil() as usize;
    let j = bessel_j_sequence(z, kmax);
    let mut degree = kmax;
    for k in 0..=kmax {
        if (k as f64) > z && j[k].abs() < 1e-14 {
            degree = k;
            break;
        }
    }
    let apply_x = |v: &[Complex64]| -> Vec<Complex64> {
        let tv = t.matvec(v);
        tv.iter().zip(v).map(|(a, b)| (a - b * center) / radius).collect()
    };
    let unit = Complex64::new(0.0, sign);
    let mut acc: Vec<Complex64> = u.iter().map(|v| v * j[0]).collect();
    let mut prev = u.to_vec();
    let mut cur = apply_x(u);
    let mut ik = unit;
    for k in 1..degree {
        let coef = ik * (2.0 * j[k]);
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += coef * c;
        }
        let xc = apply_x(&cur);
        let next: Vec<Complex64> = xc.iter().zip(&prev).map(|(a, b)| a * 2.0 - b).collect();
        prev = cur;
        cur = next;
        ik *= unit;
    }
    acc.iter_mut().for_each(|v| *v *= phase);
    acc
}

/// Common step of an equally spaced grid, `None` otherwise.
pub fn uniform_step(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let dt = times[1] - times[0];
    if dt == 0.0 {
        return None;
    }
    let scale = times.iter().map(|t| t.abs()).fold(dt.abs(), f64::max);
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * scale {
            return None;
        }
    }
    Some(dt)
}

fn weighted_norm(op: &SystemOperator, u: &[Complex64]) -> f64 {
    u.iter().enumerate().map(|(i, v)| op.index_weight(i) * v.norm_sqr()).sum::<f64>().sqrt()
}

/// `|e^{i(s+t)T} u - e^{isT} e^{itT} u| / |u|` in `L^2(mu)`.
pub fn group_law_residual(p: &Propagator, s: f64, t: f64, u: &[Complex64]) -> Result<f64> {
    let whole = p.evolve(s + t, u)?;
    let split = p.evolve(s, &p.evolve(t, u)?)?;
    let diff: Vec<Complex64> = whole.iter().zip(&split).map(|(a, b)| a - b).collect();
    let un = weighted_norm(p.generator(), u);
    Ok(if un == 0.0 { 0.0 } else { weighted_norm(p.generator(), &diff) / un })
}

/// Constants of `||e^{itT}|| <= c e^{omega |t|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupBound {
    pub c: f64,
    pub omega: f64,
}

impl GroupBound {
    pub const UNITARY: GroupBound = GroupBound { c: 1.0, omega: 0.0 };

    pub fn at(&self, t: f64) -> f64 {
        self.c * (self.omega * t.abs()).exp()
    }
}

/// `(c, omega + c ||B||)` for the generator perturbed by a bounded `B`.
pub fn perturbation_bound(gb: GroupBound, norm_b: f64) -> GroupBound {
    GroupBound { c: gb.c, omega: gb.omega + gb.c * norm_b }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupBoundReport {
    pub bound: GroupBound,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// `max |n(t) - 1|`.
    pub unitarity_defect: f64,
    /// The generator is unitary in the measured geometry and this was verified.
    pub certified_unitary: bool,
}

/// Tolerance for certifying `||e^{itT}|| = 1`.
pub const UNITARY_TOL: f64 = 1e-9;

/// Samples `n(t) = ||e^{itT}||` in `geometry` (the propagator's own when
/// `None`) and returns the envelope constants. A generator that is
/// self-adjoint in that geometry gets `(1, 0)` once `|n(t) - 1| <= 1e-9`.
pub fn group_bound_estimate(p: &Propagator, times: &[f64], geometry: Option<&Geometry>) -> Result<GroupBoundReport> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    let geom = geometry.unwrap_or(p.geometry());
    let expect_unitary = geometry.is_none() && p.is_unitary();
    let mut norms = Vec::with_capacity(times.len());
    for &t in times {
        norms.push(geom.norm_dense(&p.matrix(t)?)?);
    }
    let defect = norms.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
    if expect_unitary && defect <= UNITARY_TOL {
        return Ok(GroupBoundReport {
            bound: GroupBound::UNITARY,
            times: times.to_vec(),
            norms,
            unitarity_defect: defect,
            certified_unitary: true,
        });
    }
    let abs_t: Vec<f64> = times.iter().map(|t| t.abs()).collect();
    let bound = fit_envelope(&abs_t, &norms)?;
    Ok(GroupBoundReport { bound, times: times.to_vec(), norms, unitarity_defect: defect, certified_unitary: false })
}

/// Smallest-slope envelope `values <= c e^{omega t}` on the samples: the
/// slope is a least-squares fit to the upper hull of `(t, log value)`,
/// clamped to `>= 0`, and `c` is then raised until every sample is covered.
pub fn fit_envelope(t: &[f64], values: &[f64]) -> Result<GroupBound> {
    if t.len() != values.len() || t.is_empty() {
        return Err(Error::DimensionMismatch { expected: t.len(), found: values.len() });
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (&ti, &v) in t.iter().zip(values) {
        if !ti.is_finite() || !v.is_finite() || v < 0.0 {
            return Err(Error::FitDiverged);
        }
        if v > 0.0 {
            pts.push((ti, v.ln()));
        }
    }
    if pts.is_empty() {
        return Ok(GroupBound::UNITARY);
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    // keep the highest value per abscissa, then the upper hull
    let mut dedup: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == p.0 => last.1 = last.1.max(p.1),
            _ => dedup.push(p),
        }
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in dedup.iter().copied() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let omega = if hull.len() >= 2 {
        let m = hull.len() as f64;
        let mx = hull.iter().map(|p| p.0).sum::<f64>() / m;
        let my = hull.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = hull.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = hull.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            (sxy / sxx).max(0.0)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let logc = dedup.iter().map(|p| p.1 - omega * p.0).fold(f64::NEG_INFINITY, f64::max);
    let c = logc.exp().max(1.0);
    if !c.is_finite() || !omega.is_finite() {
        return Err(Error::FitDiverged);
    }
    Ok(GroupBound { c, omega })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommFormReport {
    pub residual: f64,
    pub nodes: usize,
    /// `|[eta I, e^{itT}] u| / |u|`.
    pub lhs_norm: f64,
}

/// Relative residual of
/// `[eta I, e^{itT}] u = it int_0^1 e^{istT} [eta I, T] e^{i(1-s)tT} u ds`,
/// with Gauss-Legendre node doubling from 8 until successive values differ
/// by less than `1e-11 |u|`, giving up after 512 nodes.
pub fn commform_residual(eta: &LipFunction, p: &Propagator, t: f64, u: &[Complex64]) -> Result<CommFormReport> {
    let op = p.generator();
    let n = op.points();
    let e = eta.values();
    let mul_eta = |v: &[Complex64]| -> Vec<Complex64> { v.iter().enumerate().map(|(i, x)| x * e[i % n]).collect() };
    let etu = p.evolve(t, u)?;
    let lhs: Vec<Complex64> = mul_eta(&etu).iter().zip(p.evolve(t, &mul_eta(u))?).map(|(a, b)| a - b).collect();
    let k = commutator_power(e, op.matrix(), n, 1);
    let unorm_e = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let (rhs, nodes) = if t == 0.0 || k.nnz() == 0 {
        (vec![Complex64::zero(); u.len()], 0)
    } else {
        let integral = integrate_doubling(
            |s| {
                let inner = p.evolve((1.0 - s) * t, u)?;
                p.evolve(s * t, &k.matvec(&inner))
            },
            0.0,
            1.0,
            1e-11 * unorm_e.max(f64::MIN_POSITIVE),
            8,
            512,
        )?;
        let it = Complex64::new(0.0, t);
        (integral.value.iter().map(|v| v * it).collect(), integral.nodes)
    };
    let diff: Vec<Complex64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let un = weighted_norm(op, u);
    if un == 0.0 {
        return Ok(CommFormReport { residual: 0.0, nodes, lhs_norm: 0.0 });
    }
    Ok(CommFormReport { residual: weighted_norm(op, &diff) / un, nodes, lhs_norm: weighted_norm(op, &lhs) / un })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivationReport {
    pub n: u32,
    pub t: f64,
    /// `||delta^n(e^{itT})||`.
    pub measured: f64,
    /// `(c |t| ||[eta I, T]||)^n c e^{omega |t|}`.
    pub bound: f64,
    pub ratio: f64,
    pub commutator_norm: f64,
    /// `||[eta I, [eta I, T]]||`; the bound is only guaranteed when this is 0.
    pub defect: f64,
    pub guaranteed: bool,
}

/// Maximum derivation order accepted.
pub const MAX_DERIVATION_ORDER: u32 = 12;

/// `delta^k(e^{itT})` for `k = 0..=n` against the growth bound `gb`, all norms
/// in the propagator's geometry.
pub fn derivation_power(eta: &LipFunction, p: &Propagator, t: f64, n: u32, gb: GroupBound) -> Result<Vec<DerivationReport>> {
    if n > MAX_DERIVATION_ORDER {
        return Err(Error::InvalidParameter(alloc::format!("derivation order {n} exceeds {MAX_DERIVATION_ORDER}")));
    }
    let op = p.generator();
    let pts = op.points();
    let e = eta.values();
    let geom = p.geometry();
    let comm = geom.norm_csr(&commutator_power(e, op.matrix(), pts, 1))?;
    let defect = geom.norm_csr(&commutator_power(e, op.matrix(), pts, 2))?;
    let big = p.matrix(t)?;
    let osc = e.iter().copied().fold(f64::NEG_INFINITY, f64::max) - e.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut base = 0.0;
    for k in 0..=n {
        let dk = if k == 0 { big.clone() } else { commutator_power_dense(e, &big, pts, k) };
        let measured = geom.norm_dense(&dk)?;
        if k == 0 {
            base = measured;
        }
        let bound = (gb.c * t.abs() * comm).powi(k as i32) * gb.at(t);
        // a zero bound is met up to the rounding of e^{itT}, amplified by osc(eta)^k
        let floor = 1e-12 * base * osc.max(1.0).powi(k as i32);
        let ratio = if bound > 0.0 {
            measured / bound
        } else if measured <= floor {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(DerivationReport { n: k, t, measured, bound, ratio, commutator_norm: comm, defect, guaranteed: defect == 0.0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
