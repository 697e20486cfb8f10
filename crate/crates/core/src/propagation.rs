//! Thresholded supports, propagation speed fits, cone checks and the sharper
//! support set.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::group::Propagator;
use crate::operators::{commutator_power, Section};
use crate::space::{neighborhood, GridSpace, LipFunction, MetricMeasureSpace, SupportSet};
#[allow(unused_imports)]
use num_traits::Float;

/// `{x : |u(x)| > eps max_y |u(y)|}`; empty for `u = 0`.
pub fn eps_support(u: &Section, eps: f64) -> Result<SupportSet> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("eps must lie in (0, 1), got {eps}")));
    }
    let norms = u.fiber_norms();
    let top = norms.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(SupportSet::empty(u.points()));
    }
    Ok(SupportSet::from_mask(norms.iter().map(|&v| v > eps * top).collect()))
}

/// `max_{x in eps_support(u)} d(x, K)`, 0 for an empty support.
pub fn support_radius(space: &MetricMeasureSpace, u: &Section, k: &SupportSet, eps: f64) -> Result<f64> {
    let dk = space.distance_to_set(k)?;
    radius_from_distances(&dk, u, eps)
}

fn radius_from_distances(dk: &[f64], u: &Section, eps: f64) -> Result<f64> {
    let s = eps_support(u, eps)?;
    Ok(s.members().map(|x| dk[x]).fold(0.0, f64::max))
}

/// Airy-scale width of the dispersive front of a forward-difference wave
/// operator with speed `speed` at time `t`: `z_eps (speed |t| h^2 / 8)^{1/3}`
/// where `Ai(z_eps)` has decayed to roughly `eps`.
pub fn dispersive_margin(speed: f64, t: f64, h: f64, eps: f64) -> f64 {
    let z = (1.5 * (1.0 / eps).ln()).powf(2.0 / 3.0);
    z * (speed * t.abs() * h * h / 8.0).cbrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedOptions {
    /// Speed bound `c kappa` (or a case-specific value).
    pub bound: f64,
    pub h: f64,
    /// Relative slack on the bound.
    pub slack_rel: f64,
    /// Additive slack in grid cells.
    pub slack_cells: f64,
    /// Add [`dispersive_margin`] to the cone.
    pub dispersive: bool,
    /// Times with `|t|` below this are left out of the fit.
    pub min_time: f64,
    /// Second-commutator defect of the scenario, carried into the report.
    pub defect: f64,
}

impl SpeedOptions {
    pub fn new(bound: f64, h: f64) -> Self {
        SpeedOptions { bound, h, slack_rel: 0.05, slack_cells: 1.0, dispersive: false, min_time: 5.0 * h, defect: 0.0 }
    }

    pub fn cone(&self, t: f64, eps: f64) -> f64 {
        let mut r = self.bound * t.abs() * (1.0 + self.slack_rel) + self.slack_cells * self.h;
        if self.dispersive {
            r += dispersive_margin(self.bound, t, self.h, eps);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub cone_bounds: Vec<f64>,
    pub saturated: Vec<bool>,
    pub epsilon: f64,
    pub fitted_speed: f64,
    pub bound: f64,
    pub slack_rel: f64,
    /// `fitted_speed <= bound (1 + slack_rel)`.
    pub verdict: bool,
    /// Every radius lies inside its cone.
    pub cone_pass: bool,
    pub defect: f64,
    pub fit_points: usize,
}

/// Evolves `u0` over `times`, records the eps-support radius about `K` and
/// fits `r(t) = v |t|` through the origin over unsaturated times with
/// `|t| >= min_time`.
pub fn measure_speed(
    p: &Propagator,
    space: &MetricMeasureSpace,
    u0: &Section,
    k: &SupportSet,
    times: &[f64],
    eps: f64,
    opts: &SpeedOptions,
) -> Result<PropagationReport> {
    let start = eps_support(u0, eps)?;
    if let Some(x) = start.members().find(|&x| !k.contains(x)) {
        return Err(Error::SupportViolation { point: x });
    }
    let traj = p.trajectory(times, u0.values())?;
    let sections: Vec<Section> = traj
        .into_iter()
        .map(|v| Section::from_values(u0.points(), u0.fiber_dim(), v))
        .collect::<Result<_>>()?;
    report_from_sections(space, &sections, k, times, eps, opts)
}

/// Same as [`measure_speed`] on precomputed snapshots.
pub fn report_from_sections(
    space: &MetricMeasureSpace,
    sections: &[Section],
    k: &SupportSet,
    times: &[f64],
    eps: f64,
    opts: &SpeedOptions,
) -> Result<PropagationReport> {
    let dk = space.distance_to_set(k)?;
    let max_d = dk.iter().copied().fold(0.0, f64::max);
    let mut radii = Vec::with_capacity(times.len());
    let mut saturated = Vec::with_capacity(times.len());
    for s in sections {
        let r = radius_from_distances(&dk, s, eps)?;
        saturated.push(r >= max_d);
        radii.push(r);
    }
    let (mut stt, mut str_) = (0.0, 0.0);
    let mut fit_points = 0;
    for ((&t, &r), &sat) in times.iter().zip(&radii).zip(&saturated) {
        if !sat && t.abs() >= opts.min_time && t != 0.0 {
            stt += t * t;
            str_ += t.abs() * r;
            fit_points += 1;
        }
    }
    if fit_points == 0 {
        return Err(Error::DomainTooSmall);
    }
    let fitted_speed = str_ / stt;
    let cone_bounds: Vec<f64> = times.iter().map(|&t| opts.cone(t, eps)).collect();
    let cone_pass = radii.iter().zip(&cone_bounds).all(|(r, c)| r <= c);
    Ok(PropagationReport {
        times: times.to_vec(),
        radii,
        cone_bounds,
        saturated,
        epsilon: eps,
        fitted_speed,
        bound: opts.bound,
        slack_rel: opts.slack_rel,
        verdict: fitted_speed <= opts.bound * (1.0 + opts.slack_rel),
        cone_pass,
        defect: opts.defect,
        fit_points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharperSupport {
    pub set: SupportSet,
    /// Family members with `c |t| ||[eta I, D]|| < 1`.
    pub qualifying: usize,
    /// No member qualified; the result is the plain cone `K_{c kappa |t|}`.
    pub fallback: bool,
}

/// `K~_t`: the intersection of `{eta > 0}` over family members that equal 1
/// on `K` and satisfy `c |t| ||[eta I, D]|| < 1`, taken inside the cone
/// `K_{c kappa |t|}` so the containment holds for a finite family too.
pub fn sharper_support(
    p: &Propagator,
    space: &MetricMeasureSpace,
    k: &SupportSet,
    t: f64,
    family: &[LipFunction],
    c: f64,
    kappa: f64,
) -> Result<SharperSupport> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    for (index, eta) in family.iter().enumerate() {
        if k.members().any(|x| (eta.values()[x] - 1.0).abs() > 1e-12) {
            return Err(Error::NotCutoffOnSupport { index });
        }
    }
    let cone = neighborhood(space, k, c * kappa * t.abs())?;
    let op = p.generator();
    let mut set = cone.clone();
    let mut qualifying = 0;
    for eta in family {
        let comm = p.geometry().norm_csr(&commutator_power(eta.values(), op.matrix(), op.points(), 1))?;
        if c * t.abs() * comm < 1.0 {
            qualifying += 1;
            set = set.intersect(&eta.positive_support());
        }
    }
    Ok(SharperSupport { set, qualifying, fallback: qualifying == 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalReport {
    pub axis: usize,
    pub times: Vec<f64>,
    /// Extent of the eps-support along the axis at each time.
    pub extents: Vec<f64>,
    /// `max_t extent(t) - extent(0)`.
    pub drift: f64,
}

/// Growth of the eps-support's extent along `axis` (0-based).
pub fn directional_test(
    grid: &GridSpace,
    axis: usize,
    p: &Propagator,
    u0: &Section,
    times: &[f64],
    eps: f64,
) -> Result<DirectionalReport> {
    if axis >= grid.dims() {
        return Err(Error::InvalidParameter(alloc::format!("axis {axis} outside a {}-dimensional grid", grid.dims())));
    }
    let extent = |u: &Section| -> Result<f64> {
        let s = eps_support(u, eps)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in s.members() {
            let c = grid.space.coords(x)[axis];
            lo = lo.min(c);
            hi = hi.max(c);
        }
        Ok(if hi >= lo { hi - lo } else { 0.0 })
    };
    let base = extent(u0)?;
    let traj = p.trajectory(times, u0.values())?;
    let mut extents = Vec::with_capacity(times.len());
    for v in traj {
        extents.push(extent(&Section::from_values(u0.points(), u0.fiber_dim(), v)?)?);
    }
    let drift = extents.iter().map(|e| e - base).fold(0.0, f64::max);
    Ok(DirectionalReport { axis, times: times.to_vec(), extents, drift })
}

/// Unit spike in component `c` at the point nearest `x`.
pub fn spike_at(grid: &GridSpace, fiber_dim: usize, x: &[f64], c: usize) -> (Section, SupportSet) {
    let p = grid.nearest(x);
    let n = grid.space.len();
    (Section::spike(n, fiber_dim, p, c), SupportSet::from_indices(n, &[p]).expect("index in range"))
}

/// Compactly supported bump `cos^2(pi |x - x0| / 2w)` for `|x - x0| < w`,
/// in component `c`, with its support set.
pub fn bump_at(grid: &GridSpace, fiber_dim: usize, x0: &[f64], width: f64, c: usize) -> (Section, SupportSet) {
    radial(grid, fiber_dim, x0, width, c, |s| (core::f64::consts::FRAC_PI_2 * s).cos().powi(2))
}

/// Infinitely smooth bump `exp(1 - 1 / (1 - s^2))`, `s = |x - x0| / w < 1`.
pub fn mollifier_at(grid: &GridSpace, fiber_dim: usize, x0: &[f64], width: f64, c: usize) -> (Section, SupportSet) {
    radial(grid, fiber_dim, x0, width, c, |s| (1.0 - 1.0 / (1.0 - s * s)).exp())
}

fn radial(grid: &GridSpace, fiber_dim: usize, x0: &[f64], width: f64, c: usize, profile: impl Fn(f64) -> f64) -> (Section, SupportSet) {
    let n = grid.space.len();
    let mut vals = alloc::vec![Complex64::new(0.0, 0.0); n];
    let mut mask = alloc::vec![false; n];
    for p in 0..n {
        let r: f64 = grid.space.coords(p).iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if r < width {
            let v = profile(r / width);
            if v > 0.0 {
                vals[p] = Complex64::new(v, 0.0);
                mask[p] = true;
            }
        }
    }
    (Section::lift(n, fiber_dim, c, &vals), SupportSet::from_mask(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Method;
    use crate::operators::{build_case1, certification_family, commutator_constant, FamilyOptions, SystemOperator};
    use crate::linalg::CsrMatrix;
    use crate::space::{cutoff, grid_space, seeded_rng, GridSpec};
    use rand::Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn eps_support_examples() {
        let s = Section::spike(5, 1, 2, 0);
        for eps in [1e-12, 1e-3, 0.9] {
            assert_eq!(eps_support(&s, eps).unwrap().members().collect::<Vec<_>>(), alloc::vec![2]);
        }
        let mut two = Section::zeros(5, 1);
        two.set(0, 1, c(1.0));
        two.set(0, 3, c(1e-12));
        assert_eq!(eps_support(&two, 1e-8).unwrap().members().collect::<Vec<_>>(), alloc::vec![1]);
        assert!(eps_support(&Section::zeros(5, 1), 1e-8).unwrap().is_empty());
        assert!(eps_support(&s, 0.0).is_err());
    }

    #[test]
    fn eps_support_is_nested() {
        let mut rng = seeded_rng(3);
        let v = (0..40).map(|_| c(10f64.powf(rng.gen_range(-12.0..0.0)))).collect();
        let u = Section::from_values(40, 1, v).unwrap();
        let a = eps_support(&u, 1e-10).unwrap();
        let b = eps_support(&u, 1e-8).unwrap();
        let d = eps_support(&u, 1e-6).unwrap();
        assert!(d.is_subset(&b) && b.is_subset(&a));
    }

    #[test]
    fn support_radius_examples() {
        let g = grid_space(&GridSpec::line(1.0, 0.1)).unwrap();
        let k = SupportSet::from_indices(11, &[3, 4]).unwrap();
        let mut u = Section::zeros(11, 1);
        u.set(0, 3, c(1.0));
        assert_eq!(support_radius(&g.space, &u, &k, 1e-8).unwrap(), 0.0);
        u.set(0, 5, c(0.5));
        assert!((support_radius(&g.space, &u, &k, 1e-8).unwrap() - 0.1).abs() < 1e-15);
        let mut rng = seeded_rng(4);
        let w = Section::from_values(11, 1, (0..11).map(|_| c(rng.gen_range(0.0..1.0))).collect()).unwrap();
        let top = w.fiber_norms().into_iter().fold(0.0, f64::max);
        let brute = (0..11)
            .filter(|&x| w.fiber_norm(x) > 0.3 * top)
            .map(|x| k.members().map(|y| g.space.dist(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        assert_eq!(support_radius(&g.space, &w, &k, 0.3).unwrap(), brute);
    }

    #[test]
    fn zero_generator_has_zero_speed() {
        let g = grid_space(&GridSpec::line(1.0, 0.05)).unwrap();
        let n = g.space.len();
        let d = SystemOperator::new(&g.space, 1, CsrMatrix::zeros(n, n)).unwrap().mark_selfadjoint().unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let (u, k) = spike_at(&g, 1, &[0.5], 0);
        let times: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
        let rep = measure_speed(&p, &g.space, &u, &k, &times, 1e-8, &SpeedOptions::new(1.0, 0.05)).unwrap();
        assert!(rep.radii.iter().all(|&r| r == 0.0));
        assert_eq!(rep.fitted_speed, 0.0);
        assert!(rep.verdict && rep.cone_pass);
    }

    #[test]
    fn case1_speed_is_positive_and_symmetric_in_time() {
        let h = 0.02;
        let g = grid_space(&GridSpec::line(4.0, h)).unwrap();
        let d = build_case1(&g, [true, false]).unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let (u, k) = spike_at(&g, 2, &[2.0], 0);
        let fwd: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
        let back: Vec<f64> = fwd.iter().map(|t| -t).collect();
        let mut opts = SpeedOptions::new(1.0, h);
        opts.dispersive = true;
        let a = measure_speed(&p, &g.space, &u, &k, &fwd, 1e-6, &opts).unwrap();
        let b = measure_speed(&p, &g.space, &u, &k, &back, 1e-6, &opts).unwrap();
        assert!((a.fitted_speed - b.fitted_speed).abs() <= 0.02 * a.fitted_speed);
        assert!(a.cone_pass, "{:?} vs {:?}", a.radii, a.cone_bounds);
        assert!(a.fitted_speed > 0.9);
    }

    #[test]
    fn saturation_is_detected() {
        let h = 0.1;
        let g = grid_space(&GridSpec::line(1.0, h)).unwrap();
        let d = build_case1(&g, [true, false]).unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let (u, k) = spike_at(&g, 2, &[0.5], 0);
        let rep = measure_speed(&p, &g.space, &u, &k, &[5.0, 10.0], 1e-8, &SpeedOptions::new(1.0, h));
        assert_eq!(rep, Err(Error::DomainTooSmall));
    }

    #[test]
    fn sharper_support_stays_in_cone() {
        let h = 0.05;
        let g = grid_space(&GridSpec::line(3.0, h)).unwrap();
        let d = build_case1(&g, [true, false]).unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let (_, k) = spike_at(&g, 2, &[1.5], 0);
        let fam: Vec<LipFunction> = (-6..=6).map(|e| cutoff(&g.space, &k, 2f64.powi(e)).unwrap()).collect();
        let kappa = commutator_constant(&d, &fam).unwrap().kappa;
        for t in [0.0, 0.2, 0.5, 1.0] {
            let s = sharper_support(&p, &g.space, &k, t, &fam, 1.0, kappa).unwrap();
            let cone = neighborhood(&g.space, &k, kappa * t).unwrap();
            assert!(s.set.is_subset(&cone));
            assert!(k.is_subset(&s.set));
            if t == 0.0 {
                assert_eq!(s.set, k);
            }
        }
        let bad = alloc::vec![cutoff(&g.space, &SupportSet::from_indices(g.space.len(), &[0]).unwrap(), 1.0).unwrap()];
        assert_eq!(sharper_support(&p, &g.space, &k, 0.1, &bad, 1.0, kappa), Err(Error::NotCutoffOnSupport { index: 0 }));
        assert_eq!(sharper_support(&p, &g.space, &k, 0.1, &[], 1.0, kappa), Err(Error::EmptyFamily));
    }

    #[test]
    fn directional_silence_without_the_axis_derivative() {
        let h = 0.1;
        let g = grid_space(&GridSpec::square(1.6, h)).unwrap();
        let times: Vec<f64> = (0..=5).map(|i| 0.1 * i as f64).collect();
        let silent = build_case1(&g, [false, true]).unwrap();
        let full = build_case1(&g, [true, true]).unwrap();
        let (u, _) = spike_at(&g, 3, &[0.8, 0.8], 0);
        let ps = Propagator::new(&silent, Method::Chebyshev).unwrap();
        let pf = Propagator::new(&full, Method::Chebyshev).unwrap();
        let r0 = directional_test(&g, 0, &ps, &u, &times, 1e-8).unwrap();
        assert!(r0.drift <= h);
        assert_eq!(directional_test(&g, 0, &ps, &u, &[0.0], 1e-8).unwrap().drift, 0.0);
        let f0 = directional_test(&g, 0, &pf, &u, &times, 1e-8).unwrap();
        let f1 = directional_test(&g, 1, &pf, &u, &times, 1e-8).unwrap();
        assert!(f0.drift > 2.0 * h && f1.drift > 2.0 * h);
        assert!((f0.drift - f1.drift).abs() <= 2.0 * h);
        let _ = certification_family(&g.space, None, &FamilyOptions::dyadic(1, 0.15)).unwrap();
    }
}
