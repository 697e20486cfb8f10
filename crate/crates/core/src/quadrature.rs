//! Gauss-Legendre quadrature with node doubling for vector-valued integrands.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone)]
pub struct Integral {
    pub value: Vec<Complex64>,
    pub nodes: usize,
    pub last_change: f64,
}

fn rule(f: &mut impl FnMut(f64) -> Result<Vec<Complex64>>, a: f64, b: f64, n: usize) -> Result<Vec<Complex64>> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc: Vec<Complex64> = Vec::new();
    for (xi, wi) in x.iter().zip(&w) {
        let v = f(mid + half * xi)?;
        if acc.is_empty() {
            acc = vec![Complex64::new(0.0, 0.0); v.len()];
        }
        for (a, vi) in acc.iter_mut().zip(&v) {
            *a += vi * (wi * half);
        }
    }
    Ok(acc)
}

fn l2_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Integrates `f` over [a, b], doubling the node count from `start` until two
/// successive rules differ by less than `tol` (Euclidean norm of the vector).
pub fn integrate_doubling(
    mut f: impl FnMut(f64) -> Result<Vec<Complex64>>,
    a: f64,
    b: f64,
    tol: f64,
    start: usize,
    max_nodes: usize,
) -> Result<Integral> {
    let mut n = start.max(1);
    let mut prev = rule(&mut f, a, b, n)?;
    let mut change = f64::INFINITY;
    while n * 2 <= max_nodes {
        n *= 2;
        let next = rule(&mut f, a, b, n)?;
        change = l2_diff(&prev, &next);
        prev = next;
        if change < tol {
            return Ok(Integral { value: prev, nodes: n, last_change: change });
        }
    }
    Err(Error::QuadratureDiverged { nodes: n, change })
}

/// Composite version: `panels` equal sub-intervals, each integrated by
/// [`integrate_doubling`] with its share of the tolerance.
pub fn integrate_composite(
    mut f: impl FnMut(f64) -> Result<Vec<Complex64>>,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    start: usize,
    max_nodes: usize,
) -> Result<Integral> {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total: Vec<Complex64> = Vec::new();
    let mut nodes = 0;
    let mut worst = 0.0f64;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        let part = integrate_doubling(&mut f, lo, hi, tol / panels as f64, start, max_nodes)?;
        if total.is_empty() {
            total = part.value;
        } else {
            for (t, v) in total.iter_mut().zip(&part.value) {
                *t += v;
            }
        }
        nodes += part.nodes;
        worst = worst.max(part.last_change);
    }
    Ok(Integral { value: total, nodes, last_change: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        // degree 9 is integrated exactly by 5 nodes
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((approx - 2.0 / 9.0).abs() < 1e-15);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_rules_stay_accurate() {
        let (x, w) = gauss_legendre(512);
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * (40.0 * x).cos()).sum();
        let exact = 2.0 * (40.0f64).sin() / 40.0;
        assert!((approx - exact).abs() < 1e-13, "{approx} {exact}");
    }

    #[test]
    fn doubling_converges_on_oscillatory_integrand() {
        let res = integrate_doubling(
            |s| Ok(vec![Complex64::new(0.0, 25.0 * s).exp()]),
            0.0,
            1.0,
            1e-12,
            8,
            512,
        )
        .unwrap();
        let exact = (Complex64::new(0.0, 25.0).exp() - 1.0) / Complex64::new(0.0, 25.0);
        assert!((res.value[0] - exact).norm() < 1e-12);
    }

    #[test]
    fn doubling_reports_non_convergence() {
        let err = integrate_doubling(|s| Ok(vec![Complex64::new(0.0, 5000.0 * s).exp()]), 0.0, 1.0, 1e-14, 8, 64);
        assert!(matches!(err, Err(Error::QuadratureDiverged { .. })));
    }
}
