use fpspeed_core::group::{Method, Propagator};
use fpspeed_core::linalg::{CMatrix, CsrMatrix};
use fpspeed_core::operators::{
    build_case1, build_case2, commutator_constant, commutator_power_dense, gradient_blocks, p_norm, Geometry,
    MultiplicationOperator, PNorm, Section, SystemOperator,
};
use fpspeed_core::propagation::sharper_support;
use fpspeed_core::space::{
    cutoff, grid_space, lip_norm, neighborhood, BoundaryCondition, GridSpec, LipFunction, MetricMeasureSpace, SupportSet,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn cloud(coords: &[f64], weights: &[f64]) -> MetricMeasureSpace {
    MetricMeasureSpace::euclidean(2, coords.to_vec(), weights.to_vec(), 1).unwrap()
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| (prop::collection::vec(-5.0..5.0f64, 2 * n), prop::collection::vec(0.1..3.0f64, n)))
}

fn cvec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

fn cmat(n: usize) -> impl Strategy<Value = CMatrix> {
    cvec(n * n).prop_map(move |v| CMatrix::from_vec(n, n, v))
}

fn spectral(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn l2(w: &[f64], u: &[Complex64]) -> f64 {
    let n = w.len();
    u.iter().enumerate().map(|(i, v)| w[i % n] * v.norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neighborhoods_are_monotone((c, w) in points(3..25), pick in 0usize..1000, t1 in 0.0..4.0f64, dt in 0.0..4.0f64) {
        let s = cloud(&c, &w);
        let k = SupportSet::from_indices(s.len(), &[pick % s.len()]).unwrap();
        let a = neighborhood(&s, &k, t1).unwrap();
        let b = neighborhood(&s, &k, t1 + dt).unwrap();
        prop_assert!(a.is_subset(&b));
        prop_assert!(k.is_subset(&a));
    }

    #[test]
    fn cutoff_is_one_on_k_and_vanishes_outside((c, w) in points(3..25), pick in 0usize..1000, alpha in 0.05..8.0f64) {
        let s = cloud(&c, &w);
        let k = SupportSet::from_indices(s.len(), &[pick % s.len(), (pick / 7) % s.len()]).unwrap();
        let eta = cutoff(&s, &k, alpha).unwrap();
        let d = s.distance_to_set(&k).unwrap();
        let outer = neighborhood(&s, &k, 1.0 / alpha).unwrap();
        for x in 0..s.len() {
            prop_assert_eq!(eta.values()[x] == 1.0, d[x] == 0.0);
            if !outer.contains(x) {
                prop_assert_eq!(eta.values()[x], 0.0);
            }
        }
    }

    #[test]
    fn lip_norm_is_a_seminorm((c, w) in points(2..15), seed in prop::collection::vec(-2.0..2.0f64, 30), scale in -3.0..3.0f64) {
        let s = cloud(&c, &w);
        let n = s.len();
        let (f, g): (Vec<f64>, Vec<f64>) = (seed[..n].to_vec(), seed[15..15 + n].to_vec());
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = f.iter().map(|a| scale * a).collect();
        let (lf, lg) = (lip_norm(&s, &f), lip_norm(&s, &g));
        prop_assert!(lip_norm(&s, &sum) <= (lf + lg) * (1.0 + 1e-12) + 1e-12);
        prop_assert!((lip_norm(&s, &scaled) - scale.abs() * lf).abs() <= 1e-12 * (1.0 + lf));
    }

    #[test]
    fn derivation_rule(s in cmat(8), t in cmat(8), eta in prop::collection::vec(-1.0..1.0f64, 8)) {
        let d = |m: &CMatrix| commutator_power_dense(&eta, m, 8, 1);
        let lhs = d(&(&s * &t));
        let rhs = d(&s) * &t + &s * d(&t);
        prop_assert!(spectral(&(lhs - rhs)) <= 1e-12 * spectral(&s) * spectral(&t));
    }

    #[test]
    fn multiplication_bound(blocks in cvec(4 * 6), u in cvec(2 * 6)) {
        let space = grid_space(&GridSpec::line(5.0, 1.0)).unwrap().space.with_fiber_dim(2);
        let a = MultiplicationOperator::new(6, 2, blocks).unwrap();
        let sec = Section::from_values(6, 2, u).unwrap();
        let au = a.apply(&sec).unwrap();
        for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
            prop_assert!(p_norm(&space, &au, p) <= a.sup_norm() * p_norm(&space, &sec, p) * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn gradient_divergence_pairing(cells in 4usize..13, dir in any::<bool>(), seed in cvec(2 * 14)) {
        let h = 0.5 / cells as f64;
        let bc = if dir { BoundaryCondition::Dirichlet } else { BoundaryCondition::Neumann };
        let grid = grid_space(&GridSpec::line(0.5, h).with_boundary(bc)).unwrap();
        let n = grid.space.len();
        let (grads, dofs) = gradient_blocks(&grid, [true, false], Some(bc));
        let g = &grads[0];
        let w = grid.space.weights();
        let div_neg = g.adjoint().map_entries(|i, j, v| v * (w[j] / w[i]));
        let f: Vec<Complex64> = (0..n).map(|x| if dofs.contains(x) { seed[x] } else { Complex64::new(0.0, 0.0) }).collect();
        let u = &seed[n..2 * n];
        let gf = g.matvec(&f);
        let du = div_neg.matvec(u);
        let lhs: Complex64 = (0..n).map(|x| w[x] * gf[x] * u[x].conj()).sum();
        let rhs: Complex64 = (0..n).map(|x| w[x] * f[x] * du[x].conj()).sum();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()) / h);
    }

    #[test]
    fn unitary_groups_are_isometric(m in cmat(10), u in cvec(10), t in -5.0..5.0f64) {
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let space = grid_space(&GridSpec::line(9.0, 1.0)).unwrap().space;
        let d = SystemOperator::new(&space, 1, CsrMatrix::from_dense(&h)).unwrap().mark_selfadjoint().unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let v = p.evolve(t, &u).unwrap();
        let w = space.weights();
        prop_assert!((l2(w, &v) - l2(w, &u)).abs() <= 1e-9 * l2(w, &u));
        // strong continuity: |e^{itD}u - u| <= |t| |Du|
        let du = d.matrix().matvec(&u);
        for s in [1e-3, 1e-4] {
            let vs = p.evolve(s, &u).unwrap();
            let diff: Vec<Complex64> = vs.iter().zip(&u).map(|(a, b)| a - b).collect();
            prop_assert!(l2(w, &diff) <= s * l2(w, &du) * (1.0 + 1e-6) + 1e-14);
        }
    }

    #[test]
    fn case2_b_norm_is_preserved(diag in prop::collection::vec(0.5..4.0f64, 2), off in -0.2..0.2f64, u in cvec(2 * 9), t in -2.0..2.0f64) {
        let grid = grid_space(&GridSpec::line(0.8, 0.1)).unwrap();
        let d = build_case1(&grid, [true, false]).unwrap();
        let b = MultiplicationOperator::from_fn(9, 2, |x, i, j| match (i, j) {
            (0, 0) => Complex64::new(diag[0] * (1.0 + 0.05 * x as f64), 0.0),
            (1, 1) => Complex64::new(diag[1], 0.0),
            (0, 1) => Complex64::new(off, off),
            _ => Complex64::new(off, -off),
        });
        let (bd, _) = build_case2(&d, &b).unwrap();
        let p = Propagator::new(&bd, Method::Eigen).unwrap();
        let geom = Geometry::b_inner(grid.space.weights(), &b).unwrap();
        let v = p.evolve(t, &u).unwrap();
        prop_assert!((geom.vec_norm(&v) - geom.vec_norm(&u)).abs() <= 1e-9 * geom.vec_norm(&u));
    }

    #[test]
    fn cosine_of_a_real_operator_is_real_and_even(t in 0.0..3.0f64) {
        let grid = grid_space(&GridSpec::line(1.0, 0.1)).unwrap();
        let d = build_case1(&grid, [true, false]).unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let n = d.size();
        for j in [0, 5, n - 1] {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let cp = p.cosine(t, &e).unwrap();
            let cm = p.cosine(-t, &e).unwrap();
            prop_assert!(cp.iter().all(|v| v.im.abs() <= 1e-12));
            prop_assert!(cp.iter().zip(&cm).all(|(a, b)| (a - b).norm() <= 1e-12));
        }
    }

    #[test]
    fn sharper_support_lies_in_the_cone(centre in 2usize..18, t in -1.5..1.5f64) {
        let grid = grid_space(&GridSpec::line(2.0, 0.1)).unwrap();
        let d = build_case1(&grid, [true, false]).unwrap();
        let p = Propagator::new(&d, Method::Eigen).unwrap();
        let k = SupportSet::from_indices(grid.space.len(), &[centre]).unwrap();
        let fam: Vec<LipFunction> = (-4..=4).map(|e| cutoff(&grid.space, &k, 2f64.powi(e)).unwrap()).collect();
        let kappa = commutator_constant(&d, &fam).unwrap();
        for (eta, ratio) in fam.iter().zip(&kappa.ratios) {
            prop_assert!(*ratio <= kappa.kappa * (1.0 + 1e-12));
            prop_assert!(eta.lip_norm() > 0.0);
        }
        let s = sharper_support(&p, &grid.space, &k, t, &fam, 1.0, kappa.kappa).unwrap();
        prop_assert!(s.set.is_subset(&neighborhood(&grid.space, &k, kappa.kappa * t.abs()).unwrap()));
    }
}
