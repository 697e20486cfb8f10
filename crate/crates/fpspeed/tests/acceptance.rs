//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use fpspeed::config::{Check, Scenario};
use fpspeed::{run_scenario, Mode, RunOptions};
use fpspeed_core::group::{commform_residual, derivation_power, GroupBound, Method, Propagator};
use fpspeed_core::huygens::{
    cauchy_residual, energy_estimate_check, huygens_support_check, solve_homogeneous, solve_inhomogeneous, CauchyData,
    CoefficientField, HuygensSlack, HyperbolicSolution,
};
use fpspeed_core::linalg::{CMatrix, CsrMatrix};
use fpspeed_core::operators::{
    build_case1, build_case2, certification_family, commutator_constant, FamilyOptions, Geometry,
    MultiplicationOperator, Section, SystemOperator,
};
use fpspeed_core::propagation::{directional_test, eps_support, measure_speed, spike_at, SpeedOptions};
use fpspeed_core::space::{
    cutoff, grid_space, random_lipschitz, seeded_rng, BoundaryCondition, GridSpace, GridSpec, SupportSet,
};
use num_complex::Complex64;
use rand::Rng;

type Outcome = Result<String, String>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn gaussian(grid: &GridSpace, at: f64, sigma: f64, cut: f64) -> (Vec<Complex64>, SupportSet) {
    let v: Vec<Complex64> = (0..grid.space.len())
        .map(|x| {
            let r = grid.space.coords(x)[0] - at;
            let g = (-r * r / (2.0 * sigma * sigma)).exp();
            c(if g < cut { 0.0 } else { g })
        })
        .collect();
    let k = SupportSet::from_mask(v.iter().map(|z| z.re > 0.0).collect());
    (v, k)
}

fn line(extent: f64, h: f64, bc: BoundaryCondition) -> GridSpace {
    grid_space(&GridSpec::line(extent, h).with_boundary(bc)).unwrap()
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let space = line(19.0, 1.0, BoundaryCondition::Neumann).space;
    let mut rng = seeded_rng(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = CMatrix::from_fn(20, 20, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = (&m + m.adjoint()) * c(0.5);
        let d = SystemOperator::new(&space, 1, CsrMatrix::from_dense(&h)).map_err(e)?.mark_selfadjoint().map_err(e)?;
        let p = Propagator::new(&d, Method::Eigen).map_err(e)?;
        let eta = random_lipschitz(&space, &mut rng, 3.0).map_err(e)?;
        let u: Vec<Complex64> = (0..20).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        for t in [0.3, 1.0, 3.0] {
            worst = worst.max(commform_residual(&eta, &p, t, &u).map_err(e)?.residual);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, format!("max residual {worst:e} > 1e-9"))?;
    ensure(secs < 10.0, format!("took {secs:.1}s"))?;
    Ok(format!("max residual {worst:.2e} over 20 operators x 3 times, {secs:.2}s"))
}

fn criterion2() -> Outcome {
    // defect 0: multiplication operators
    let space = line(11.0, 1.0, BoundaryCondition::Neumann).space.with_fiber_dim(2);
    let mut rng = seeded_rng(7);
    let mut worst_guaranteed = 0.0f64;
    for _ in 0..5 {
        let blocks: Vec<CMatrix> = (0..12)
            .map(|_| {
                let m = CMatrix::from_fn(2, 2, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                (&m + m.adjoint()) * c(0.5)
            })
            .collect();
        let mo = MultiplicationOperator::from_blocks(&blocks);
        let d = SystemOperator::new(&space, 2, mo.to_csr()).map_err(e)?.mark_selfadjoint().map_err(e)?;
        let p = Propagator::new(&d, Method::Eigen).map_err(e)?;
        let eta = random_lipschitz(&space, &mut rng, 2.0).map_err(e)?;
        for t in [0.5, 2.0] {
            for r in derivation_power(&eta, &p, t, 5, GroupBound::UNITARY).map_err(e)? {
                ensure(r.guaranteed, format!("defect {} for a multiplication operator", r.defect))?;
                worst_guaranteed = worst_guaranteed.max(r.ratio);
            }
        }
    }
    ensure(worst_guaranteed <= 1.0 + 1e-8, format!("guaranteed ratio {worst_guaranteed} > 1 + 1e-8"))?;
    // grid operators: excess under refinement
    let mut excess = Vec::new();
    let mut ratios = Vec::new();
    for h in [0.1, 0.05] {
        let grid = line(4.0, h, BoundaryCondition::Neumann);
        let d = build_case1(&grid, [true, false]).map_err(e)?;
        let p = Propagator::new(&d, Method::Eigen).map_err(e)?;
        let k = SupportSet::from_indices(grid.space.len(), &[grid.nearest(&[2.0])]).map_err(e)?;
        let eta = cutoff(&grid.space, &k, 2.0).map_err(e)?;
        let reps = derivation_power(&eta, &p, 0.5, 5, GroupBound::UNITARY).map_err(e)?;
        let worst = reps.iter().map(|r| r.ratio).fold(0.0, f64::max);
        ratios.push(worst);
        excess.push(reps.iter().skip(1).map(|r| (r.ratio - 1.0).max(0.0)).fold(0.0, f64::max));
    }
    ensure(excess[1] <= excess[0] + 1e-12, format!("excess grew {:e} -> {:e}", excess[0], excess[1]))?;
    Ok(format!(
        "defect-0 max ratio {worst_guaranteed:.6}; grid max ratio {:.6} (h=0.1), {:.6} (h=0.05), excess {:.1e} -> {:.1e}",
        ratios[0], ratios[1], excess[0], excess[1]
    ))
}

fn criterion3() -> Outcome {
    let start = Instant::now();
    let grid = line(3.99, 0.01, BoundaryCondition::Neumann);
    ensure(grid.space.len() == 400, format!("{} points", grid.space.len()))?;
    let d = build_case1(&grid, [true, false]).map_err(e)?;
    let p = Propagator::new(&d, Method::Eigen).map_err(e)?;
    let (u0, k) = spike_at(&grid, 2, &[2.0], 0);
    let times: Vec<f64> = (1..=30).map(|i| 0.05 * i as f64).collect();
    let r = measure_speed(&p, &grid.space, &u0, &k, &times, 1e-6, &SpeedOptions::new(1.0, 0.01)).map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    let v = r.fitted_speed;
    ensure((0.90..=1.02).contains(&v), format!("fitted speed {v:.4} outside [0.90, 1.02] ({secs:.1}s)"))?;
    ensure(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!("fitted speed {v:.4}, {secs:.1}s"))
}

fn criterion4() -> Outcome {
    let grid = line(8.0, 0.02, BoundaryCondition::Neumann);
    let n = grid.space.len();
    let d = build_case1(&grid, [true, false]).map_err(e)?;
    let b = MultiplicationOperator::diagonal(n, &[c(4.0), c(1.0)]);
    let (bd, ell) = build_case2(&d, &b).map_err(e)?;
    let p = Propagator::auto(&bd).map_err(e)?;
    let (g, _) = gaussian(&grid, 4.0, 0.2, 1e-14);
    let u0 = Section::lift(n, 2, 0, &g);
    let k = eps_support(&u0, 1e-6).map_err(e)?;
    let times: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
    let nb = b.sup_norm();
    let superseded = nb.powf(1.5) / ell.lambda.sqrt();
    let r = measure_speed(&p, &grid.space, &u0, &k, &times, 1e-6, &SpeedOptions::new(nb, 0.02)).map_err(e)?;
    let geom = Geometry::b_inner(bd.weights(), &b).map_err(e)?;
    let n0 = geom.vec_norm(u0.values());
    let mut drift = 0.0f64;
    for u in p.trajectory(&[-1.0, 0.3, 1.0, 2.5], u0.values()).map_err(e)? {
        drift = drift.max((geom.vec_norm(&u) / n0 - 1.0).abs());
    }
    let v = r.fitted_speed;
    ensure(v <= nb, format!("speed {v:.4} above ||B|| = {nb}"))?;
    ensure(v <= superseded, format!("speed {v:.4} above {superseded}"))?;
    ensure(drift <= 1e-9, format!("B-norm drift {drift:e}"))?;
    Ok(format!("fitted speed {v:.4} <= {nb} <= {superseded}; B-norm drift {drift:.1e}"))
}

fn hom_solution(bound_extent: f64, h: f64) -> Result<HyperbolicSolution, String> {
    let grid = line(bound_extent, h, BoundaryCondition::Neumann);
    let n = grid.space.len();
    let coeff = CoefficientField::constant(n, 1, 2.0, 2.0, false).map_err(e)?;
    let (f, k) = gaussian(&grid, bound_extent / 2.0, 0.2, 1e-14);
    let data = CauchyData::new(f, vec![c(0.0); n], k).map_err(e)?;
    let times: Vec<f64> = (0..=12).map(|i| 0.1 * i as f64).collect();
    solve_homogeneous(&grid, &coeff, &data, &times).map_err(e)
}

fn criterion5() -> Outcome {
    let sol = hom_solution(8.0, 0.01)?;
    let slack = HuygensSlack::default();
    ensure((sol.bound - 2.0).abs() < 1e-12, format!("alpha = {}", sol.bound))?;
    let support = huygens_support_check(&sol, &sol.data.k, sol.bound, 1e-6, &slack).map_err(e)?;
    ensure(support.pass, "support check with 5% + h failed".into())?;
    let f = Section::from_values(sol.data.f.len(), 1, sol.data.f.clone()).map_err(e)?;
    let k_eps = eps_support(&f, 1e-6).map_err(e)?;
    let front = huygens_support_check(&sol, &k_eps, sol.bound, 1e-6, &slack).map_err(e)?.fitted_speed.ok_or("no front fit")?;
    ensure((1.9..=2.04).contains(&front), format!("front speed {front:.4} outside [1.9, 2.04]"))?;
    let negative = huygens_support_check(&sol, &sol.data.k, 1.0, 1e-6, &slack).map_err(e)?;
    ensure(!negative.pass, "negative control with claimed bound 1 passed".into())?;
    Ok(format!("alpha 2, front speed {front:.4}, support check passes, claimed bound 1 fails"))
}

fn inhom(bc: BoundaryCondition, times: &[f64]) -> Result<HyperbolicSolution, String> {
    let grid = line(4.0, 0.04, bc);
    let n = grid.space.len();
    let a = MultiplicationOperator::from_fn(n, 2, |_, i, j| match (i, j) {
        (0, 0) | (1, 1) => c(1.0),
        (0, 1) => c(0.5),
        _ => c(0.0),
    });
    let coeff = CoefficientField::new(vec![1.0; n], a, 1).map_err(e)?;
    let (f, k) = gaussian(&grid, 2.0, 0.25, 1e-12);
    let data = CauchyData::new(f, vec![c(0.0); n], k.clone()).map_err(e)?;
    let mut opts = FamilyOptions::dyadic(5, 0.08);
    opts.singleton_cap = Some(8);
    let family = certification_family(&grid.space, Some(&k), &opts).map_err(e)?;
    solve_inhomogeneous(&grid, &coeff, &data, times, &family).map_err(e)
}

fn criterion6() -> Outcome {
    let early: Vec<f64> = (0..=5).map(|i| 0.1 * i as f64).collect();
    let nsol = inhom(BoundaryCondition::Neumann, &early)?;
    let dsol = inhom(BoundaryCondition::Dirichlet, &early)?;
    let w = nsol.problem.space.weights();
    let norm = |u: &[Complex64]| Geometry::standard(w, 1).vec_norm(u);
    let mut gap = 0.0f64;
    for (a, b) in nsol.f.iter().zip(&dsol.f) {
        let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        gap = gap.max(norm(&diff) / norm(a));
    }
    ensure(gap <= 1e-6, format!("Dirichlet/Neumann gap {gap:e} before contact"))?;
    let fine: Vec<f64> = (0..=40).map(|i| 1e-3 * i as f64).collect();
    let rsol = inhom(BoundaryCondition::Dirichlet, &fine)?;
    let res = cauchy_residual(&rsol, &rsol.problem.l).map_err(e)?;
    ensure(res.interior <= 1e-4, format!("Cauchy residual {:e}", res.interior))?;
    let long: Vec<f64> = (0..=10).map(|i| 0.2 * i as f64).collect();
    let esol = inhom(BoundaryCondition::Neumann, &long)?;
    let c_norm = esol.perturbation.as_ref().ok_or("no perturbation")?.c_norm;
    let en = energy_estimate_check(&esol).map_err(e)?;
    ensure(c_norm > 0.0, "C = 0: growth criterion vacuous".into())?;
    ensure(en.fit.omega <= 1.1 * c_norm, format!("omega_fit {} > 1.1 ||C|| = {}", en.fit.omega, 1.1 * c_norm))?;
    Ok(format!(
        "D/N gap {gap:.1e} for t <= 0.5; Cauchy residual {:.1e}; omega_fit {:.3} <= 1.1 * {c_norm:.3}",
        res.interior, en.fit.omega
    ))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn bundled() -> Result<Vec<Scenario>, String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenarios_dir()).map_err(e)?.map(|d| d.unwrap().path()).collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p).map_err(e)).collect()
}

fn criterion7() -> Outcome {
    let mut div_worst = 0.0f64;
    for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
        for grid in [line(2.0, 0.05, bc), grid_space(&GridSpec::square(1.0, 0.1).with_boundary(bc)).unwrap()] {
            div_worst = div_worst.max(build_case1(&grid, [true, true]).map_err(e)?.selfadjoint_residual());
        }
    }
    ensure(div_worst <= 1e-14, format!("div + grad* residual {div_worst:e}"))?;
    let grid = line(4.0, 0.02, BoundaryCondition::Neumann);
    let d = build_case1(&grid, [true, false]).map_err(e)?;
    let k = SupportSet::from_indices(grid.space.len(), &[grid.nearest(&[2.0])]).map_err(e)?;
    let mut opts = FamilyOptions::dyadic(1, 0.04);
    opts.singleton_cap = Some(16);
    let kappa = commutator_constant(&d, &certification_family(&grid.space, Some(&k), &opts).map_err(e)?).map_err(e)?.kappa;
    ensure((kappa - 1.0).abs() <= 1e-10, format!("kappa_emp {kappa}"))?;
    let out = tempfile::tempdir().map_err(e)?;
    let mut count = 0;
    for mut sc in bundled()? {
        sc.checks = vec![Check::Metric, Check::GroupLaw { tol: 1e-8 }];
        let opts = RunOptions { out: out.path().to_path_buf(), seed: None, eps: None, mode: Mode::Verify };
        let r = run_scenario(&sc, &opts).map_err(e)?;
        if let Some(f) = r.checks.iter().find(|c| !c.pass) {
            return Err(format!("{}: {} failed ({})", sc.name, f.name, f.detail));
        }
        count += 1;
    }
    Ok(format!("div/grad residual {:.1e}; kappa_emp {kappa:.12}; metric and group law pass on {count} scenarios", div_worst + 0.0))
}

fn criterion8() -> Outcome {
    let grid = grid_space(&GridSpec::square(4.0, 0.05)).unwrap();
    let h = grid.h();
    let times: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
    let drift = |axes: [bool; 2], axis: usize| -> Result<f64, String> {
        let d = build_case1(&grid, axes).map_err(e)?;
        let p = Propagator::auto(&d).map_err(e)?;
        let (u0, _) = fpspeed_core::propagation::bump_at(&grid, 3, &[2.0, 2.0], 0.3, 0);
        Ok(directional_test(&grid, axis, &p, &u0, &times, 1e-6).map_err(e)?.drift)
    };
    let silent = drift([false, true], 0)?;
    let (fx, fy) = (drift([true, true], 0)?, drift([true, true], 1)?);
    ensure(silent <= h, format!("x1 drift {silent} without d1"))?;
    ensure(fx > 2.0 * h && fy > 2.0 * h, format!("full drifts {fx}, {fy}"))?;
    ensure((fx - fy).abs() <= 0.25 * fx.max(fy), format!("full drifts {fx} and {fy} not comparable"))?;
    Ok(format!("x1 drift without d1: {silent}; full operator drifts {fx:.3} / {fy:.3}"))
}

fn criterion9() -> Outcome {
    let start = Instant::now();
    let out = tempfile::tempdir().map_err(e)?;
    let mut configs: Vec<PathBuf> = std::fs::read_dir(scenarios_dir()).map_err(e)?.map(|d| d.unwrap().path()).collect();
    configs.sort();
    ensure(configs.len() == 8, format!("{} bundled scenarios", configs.len()))?;
    let bin = env!("CARGO_BIN_EXE_fpspeed");
    let verify = Command::new(bin).arg("verify").args(&configs).arg("--out").arg(out.path()).arg("--parallel").output().map_err(e)?;
    let report = Command::new(bin).arg("report").arg(out.path()).output().map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    let table = String::from_utf8_lossy(&report.stdout);
    ensure(verify.status.code() == Some(0), format!("verify exited {:?}:\n{}", verify.status.code(), String::from_utf8_lossy(&verify.stdout)))?;
    ensure(report.status.code() == Some(0), format!("report exited {:?}:\n{table}", report.status.code()))?;
    ensure(secs < 300.0, format!("took {secs:.0}s"))?;
    Ok(format!("{} in {secs:.1}s", table.lines().last().unwrap_or("")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("commutator integral identity", criterion1),
        ("derivation bound", criterion2),
        ("case I cone, spike data", criterion3),
        ("case II bounds", criterion4),
        ("homogeneous tightness", criterion5),
        ("inhomogeneous problem", criterion6),
        ("hypothesis certification", criterion7),
        ("directional remark", criterion8),
        ("bundled scenario suite", criterion9),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("PASS criterion {} ({name}): {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
