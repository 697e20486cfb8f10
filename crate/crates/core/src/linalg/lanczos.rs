use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use num_traits::Zero;
#[allow(unused_imports)]
use num_traits::Float;

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest eigenvalue of a Hermitian positive semidefinite operator given by
/// its action, via Lanczos with full reorthogonalisation.
///
/// Ritz values approach the top eigenvalue from below, so the result is a
/// lower bound that is tight once the residual estimate drops under `tol`.
pub fn largest_eigenvalue_psd(apply: impl Fn(&[Complex64]) -> Vec<Complex64>, n: usize, max_steps: usize, tol: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let steps = max_steps.min(n).max(1);
    // Deterministic start vector with all components active.
    let mut q: Vec<Complex64> =
        (0..n).map(|i| Complex64::new(1.0 + ((i * 7919) % 97) as f64 / 97.0, ((i * 104729) % 89) as f64 / 178.0)).collect();
    let q_norm = norm(&q);
    q.iter_mut().for_each(|v| *v /= q_norm);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut best = 0.0f64;
    for k in 0..steps {
        let mut w = apply(&q);
        let alpha = dot(&q, &w).re;
        basis.push(q.clone());
        alphas.push(alpha);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= proj * bi;
                }
            }
        }
        let beta = norm(&w);
        let m = alphas.len();
        let t = DMatrix::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imax, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
        best = best.max(theta);
        let residual = beta * eig.eigenvectors[(m - 1, imax)].abs();
        if residual <= tol * theta.abs().max(f64::MIN_POSITIVE) || beta <= 1e-300 || k + 1 == steps {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }
    best
}

/// Power iteration on a PSD operator; slow but independent of the Lanczos path.
pub fn power_iteration_psd(apply: impl Fn(&[Complex64]) -> Vec<Complex64>, n: usize, iterations: usize) -> f64 {
    let mut q = vec![Complex64::new(1.0, 0.0); n];
    for (i, v) in q.iter_mut().enumerate() {
        *v += Complex64::new((i % 5) as f64 * 0.1, (i % 3) as f64 * 0.05);
    }
    let mut est = 0.0;
    for _ in 0..iterations {
        let nq = norm(&q);
        if nq == 0.0 {
            return 0.0;
        }
        q.iter_mut().for_each(|v| *v /= nq);
        let w = apply(&q);
        est = dot(&q, &w).re;
        q = w;
    }
    if q.iter().all(|v| v.is_zero()) {
        0.0
    } else {
        est
    }
}
