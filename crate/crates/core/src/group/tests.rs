use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use super::*;
use crate::operators::{build_case1, build_case2, build_case3, split_case3, MultiplicationOperator};
use crate::space::{grid_space, seeded_rng, GridSpec, MetricMeasureSpace};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn unit_space(n: usize) -> MetricMeasureSpace {
    grid_space(&GridSpec::line((n - 1) as f64, 1.0)).unwrap().space
}

fn random_hermitian(n: usize, seed: u64, scale: f64) -> SystemOperator {
    let mut rng = seeded_rng(seed);
    let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let h = (&a + a.adjoint()) * c(0.5 * scale);
    SystemOperator::new(&unit_space(n), 1, CsrMatrix::from_dense(&h)).unwrap().mark_selfadjoint().unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = seeded_rng(seed);
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let s: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    d / s
}

#[test]
fn zero_and_diagonal_generators() {
    let s = unit_space(4);
    let zero = SystemOperator::new(&s, 1, CsrMatrix::zeros(4, 4)).unwrap().mark_selfadjoint().unwrap();
    let u = random_vec(4, 1);
    for m in [Method::Eigen, Method::SquareScale, Method::Chebyshev] {
        let p = Propagator::new(&zero, m).unwrap();
        assert!(rel(&p.evolve(0.8, &u).unwrap(), &u) < 1e-14, "{m:?} {}", rel(&p.evolve(0.8, &u).unwrap(), &u));
    }
    let theta = [0.5, -1.0, 2.0, 3.5];
    let diag = SystemOperator::new(&s, 1, CsrMatrix::from_diagonal(&theta.map(c))).unwrap().mark_selfadjoint().unwrap();
    for m in [Method::Eigen, Method::SquareScale, Method::Chebyshev] {
        let p = Propagator::new(&diag, m).unwrap();
        let out = p.evolve(1.3, &u).unwrap();
        for k in 0..4 {
            let expect = u[k] * Complex64::new(0.0, 1.3 * theta[k]).exp();
            assert!((out[k] - expect).norm() < 1e-12, "{m:?}");
        }
    }
}

#[test]
fn methods_agree_on_random_selfadjoint() {
    let d = random_hermitian(25, 3, 1.0);
    let u = random_vec(25, 4);
    let e = Propagator::new(&d, Method::Eigen).unwrap().evolve(0.7, &u).unwrap();
    let s = Propagator::new(&d, Method::SquareScale).unwrap().evolve(0.7, &u).unwrap();
    let ch = Propagator::new(&d, Method::Chebyshev).unwrap().evolve(0.7, &u).unwrap();
    assert!(rel(&e, &s) <= 1e-9);
    assert!(rel(&e, &ch) <= 1e-9);
}

#[test]
fn eigen_refuses_unflagged_generators() {
    let s = unit_space(3);
    let t = SystemOperator::new(&s, 1, CsrMatrix::from_triplets(3, 3, &[(0, 1, c(1.0))])).unwrap();
    assert!(matches!(Propagator::new(&t, Method::Eigen), Err(Error::MethodUnavailable(_))));
    assert!(matches!(Propagator::new(&t, Method::Chebyshev), Err(Error::MethodUnavailable(_))));
    assert!(Propagator::new(&t, Method::SquareScale).is_ok());
}

#[test]
fn group_law() {
    let d = random_hermitian(20, 5, 1.0);
    let u = random_vec(20, 6);
    for m in [Method::Eigen, Method::SquareScale, Method::Chebyshev] {
        let p = Propagator::new(&d, m).unwrap();
        assert_eq!(group_law_residual(&p, 0.0, 0.0, &u).unwrap(), 0.0);
        assert!(group_law_residual(&p, 0.9, -0.9, &u).unwrap() <= 1e-9);
        let mut rng = seeded_rng(7);
        for _ in 0..5 {
            let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            assert!(group_law_residual(&p, s, t, &u).unwrap() <= 1e-8, "{m:?}");
        }
    }
}

#[test]
fn isometry_and_strong_continuity() {
    let g = grid_space(&GridSpec::line(2.0, 0.05)).unwrap();
    let d = build_case1(&g, [true, false]).unwrap();
    let p = Propagator::new(&d, Method::Eigen).unwrap();
    let u = random_vec(d.size(), 8);
    let n0 = weighted_norm(&d, &u);
    for t in [-2.0, 0.3, 1.7] {
        assert!((weighted_norm(&d, &p.evolve(t, &u).unwrap()) - n0).abs() <= 1e-9 * n0);
    }
    let du = d.matrix().matvec(&u);
    let slope = weighted_norm(&d, &du);
    for t in [1e-3, 1e-4] {
        let diff: Vec<Complex64> = p.evolve(t, &u).unwrap().iter().zip(&u).map(|(a, b)| a - b).collect();
        assert!(weighted_norm(&d, &diff) <= slope * t * (1.0 + 1e-6));
    }
}

#[test]
fn cosine_is_even_and_real_for_real_generators() {
    let g = grid_space(&GridSpec::line(1.0, 0.1)).unwrap();
    let d = build_case1(&g, [true, false]).unwrap();
    let p = Propagator::new(&d, Method::Eigen).unwrap();
    let u: Vec<Complex64> = (0..d.size()).map(|i| c((i as f64 * 0.3).sin())).collect();
    let a = p.cosine(0.6, &u).unwrap();
    let b = p.cosine(-0.6, &u).unwrap();
    assert!(rel(&a, &b) < 1e-14);
    assert!(a.iter().all(|v| v.im.abs() < 1e-12));
    let sq = Propagator::new(&d, Method::SquareScale).unwrap();
    assert!(rel(&sq.cosine(0.6, &u).unwrap(), &a) < 1e-10);
}

#[test]
fn unitary_bound_for_case1() {
    let g = grid_space(&GridSpec::line(1.0, 0.05)).unwrap();
    let d = build_case1(&g, [true, false]).unwrap();
    let p = Propagator::new(&d, Method::Eigen).unwrap();
    let times: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.5).collect();
    let rep = group_bound_estimate(&p, &times, None).unwrap();
    assert_eq!(rep.bound, GroupBound::UNITARY);
    assert!(rep.certified_unitary);
}

#[test]
fn case2_bounds_in_both_norms() {
    let g = grid_space(&GridSpec::line(1.0, 0.05)).unwrap();
    let d = build_case1(&g, [true, false]).unwrap();
    let n = g.space.len();
    let b = MultiplicationOperator::diagonal(n, &[c(4.0), c(1.0)]);
    let (bd, rep) = build_case2(&d, &b).unwrap();
    let p = Propagator::new(&bd, Method::Eigen).unwrap();
    let times: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.5).collect();
    let in_b = group_bound_estimate(&p, &times, None).unwrap();
    assert_eq!(in_b.bound, GroupBound::UNITARY);
    let std = Geometry::standard(bd.weights(), 2);
    let plain = group_bound_estimate(&p, &times, Some(&std)).unwrap();
    let stated = rep.lambda.powf(-0.5) * rep.sup_norm.sqrt();
    assert!(plain.norms.iter().all(|&v| v <= stated * (1.0 + 1e-9)));
    assert!(plain.bound.c <= stated * (1.0 + 1e-9), "{:?}", plain.bound);
}

#[test]
fn perturbation_examples() {
    assert_eq!(perturbation_bound(GroupBound::UNITARY, 3.0), GroupBound { c: 1.0, omega: 3.0 });
    assert_eq!(perturbation_bound(GroupBound { c: 2.0, omega: 1.0 }, 0.0), GroupBound { c: 2.0, omega: 1.0 });
}

#[test]
fn case3_growth_respects_perturbation_envelope() {
    let g = grid_space(&GridSpec::line(1.0, 0.1)).unwrap();
    let n = g.space.len();
    let coeff = MultiplicationOperator::from_fn(n, 2, |_, i, j| match (i, j) {
        (0, 0) => Complex64::new(1.0, 0.5),
        (1, 0) => c(0.5),
        (1, 1) => c(1.0),
        _ => c(0.0),
    });
    let c3 = build_case3(&g, &vec![1.0; n], &coeff).unwrap();
    let sp = split_case3(&c3.b, &c3.d, c3.report.lambda).unwrap();
    let geom = Geometry::b_inner(c3.d.weights(), &sp.b_tilde).unwrap();
    let norm_c = geom.norm_csr(sp.c.matrix()).unwrap();
    assert!(norm_c > 0.0);
    let full = c3.bd();
    let p = Propagator::with_geometry(&full, Method::SquareScale, geom).unwrap();
    let times: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
    let rep = group_bound_estimate(&p, &times, None).unwrap();
    let env = perturbation_bound(GroupBound::UNITARY, norm_c);
    for (t, nrm) in rep.times.iter().zip(&rep.norms) {
        assert!(*nrm <= env.at(*t) * (1.0 + 1e-9), "t={t}: {nrm} > {}", env.at(*t));
    }
    assert!(rep.bound.omega <= norm_c * 1.1);
}

#[test]
fn envelope_fit_covers_samples() {
    let t = [0.0, 0.5, 1.0, 1.5, 2.0];
    let v = [1.0, 1.4, 1.9, 2.9, 4.1];
    let gb = fit_envelope(&t, &v).unwrap();
    for (ti, vi) in t.iter().zip(&v) {
        assert!(*vi <= gb.at(*ti) * (1.0 + 1e-12));
    }
    assert!(gb.c >= 1.0 && gb.omega >= 0.0);
    let gb = fit_envelope(&t, &[1.0; 5]).unwrap();
    assert_eq!(gb, GroupBound::UNITARY);
    assert_eq!(fit_envelope(&[0.0], &[f64::NAN]), Err(Error::FitDiverged));
}

#[test]
fn commform_trivial_cases() {
    let d = random_hermitian(10, 9, 1.0);
    let s = unit_space(10);
    let p = Propagator::new(&d, Method::Eigen).unwrap();
    let u = random_vec(10, 10);
    let flat = LipFunction::new(&s, vec![0.4; 10]).unwrap();
    let r = commform_residual(&flat, &p, 1.0, &u).unwrap();
    assert!(r.residual < 1e-14 && r.lhs_norm < 1e-14);
    let eta = LipFunction::new(&s, (0..10).map(|i| (i as f64 * 0.4).sin()).collect()).unwrap();
    let r = commform_residual(&eta, &p, 0.0, &u).unwrap();
    assert_eq!(r.residual, 0.0);
}

#[test]
fn commform_identity_on_random_operator() {
    let d = random_hermitian(20, 11, 1.0);
    let s = unit_space(20);
    let p = Propagator::new(&d, Method::Eigen).unwrap();
    let mut rng = seeded_rng(12);
    let eta = crate::space::random_lipschitz(&s, &mut rng, 1.5).unwrap();
    let u = random_vec(20, 13);
    let r = commform_residual(&eta, &p, 1.0, &u).unwrap();
    assert!(r.residual <= 1e-9, "{}", r.residual);
    assert!(r.lhs_norm > 1e-3);
}

#[test]
fn derivation_examples() {
    let s = unit_space(8);
    let mult = SystemOperator::new(&s, 1, CsrMatrix::from_diagonal(&(0..8).map(|k| c(k as f64)).collect::<Vec<_>>()))
        .unwrap()
        .mark_selfadjoint()
        .unwrap();
    let p = Propagator::new(&mult, Method::Eigen).unwrap();
    let eta = LipFunction::new(&s, (0..8).map(|i| (i as f64).sqrt()).collect()).unwrap();
    let reps = derivation_power(&eta, &p, 1.5, 5, GroupBound::UNITARY).unwrap();
    assert!((reps[0].measured - 1.0).abs() < 1e-12 && (reps[0].bound - 1.0).abs() < 1e-15);
    for r in &reps[1..] {
        assert!(r.measured < 1e-12);
        assert!(r.guaranteed);
    }
    assert!(derivation_power(&eta, &p, 1.0, 13, GroupBound::UNITARY).is_err());
}

#[test]
fn first_derivation_is_commutator_with_group() {
    let d = random_hermitian(12, 14, 1.0);
    let s = unit_space(12);
    let p = Propagator::new(&d, Method::Eigen).unwrap();
    let eta = LipFunction::new(&s, (0..12).map(|i| (i as f64 * 0.5).cos()).collect()).unwrap();
    let reps = derivation_power(&eta, &p, 0.8, 1, GroupBound::UNITARY).unwrap();
    let e = p.matrix(0.8).unwrap();
    let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(12, eta.values().iter().map(|&v| c(v))));
    let comm = &m * &e - &e * &m;
    let direct = crate::linalg::spectral_norm(&comm).unwrap();
    assert!((reps[1].measured - direct).abs() < 1e-12);
}

#[test]
fn uniform_trajectory_matches_direct_evolution() {
    let d = random_hermitian(15, 15, 2.0);
    let u = random_vec(15, 16);
    let times: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
    for m in [Method::SquareScale, Method::Chebyshev] {
        let p = Propagator::new(&d, m).unwrap();
        let traj = p.trajectory(&times, &u).unwrap();
        for (t, v) in times.iter().zip(&traj) {
            assert!(rel(v, &p.evolve(*t, &u).unwrap()) < 1e-11, "{m:?}");
        }
    }
}

#[test]
fn cosine_integral_matches_closed_form() {
    let theta = [0.0, 1.0, -7.5, 20.0];
    let s = unit_space(4);
    let d = SystemOperator::new(&s, 1, CsrMatrix::from_diagonal(&theta.map(c))).unwrap().mark_selfadjoint().unwrap();
    let u = vec![c(1.0); 4];
    let t = 1.7;
    for m in [Method::Eigen, Method::SquareScale] {
        let p = Propagator::new(&d, m).unwrap();
        let out = p.cosine_integral(t, &u, 1e-12).unwrap();
        for k in 0..4 {
            let exact = if theta[k] == 0.0 { t } else { (t * theta[k]).sin() / theta[k] };
            assert!((out[k].re - exact).abs() < 1e-10, "{m:?} {k}");
        }
    }
}
