use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Zero;

use super::MultiplicationOperator;
use crate::error::{Error, Result};
use crate::space::MetricMeasureSpace;
#[allow(unused_imports)]
use num_traits::Float;

/// `C^m`-valued function on the points, stored component-major (`c * N + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    values: Vec<Complex64>,
    points: usize,
    fiber_dim: usize,
}

impl Section {
    pub fn zeros(points: usize, fiber_dim: usize) -> Self {
        Section { values: super::zeros_c(points * fiber_dim), points, fiber_dim }
    }

    pub fn from_values(points: usize, fiber_dim: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != points * fiber_dim {
            return Err(Error::DimensionMismatch { expected: points * fiber_dim, found: values.len() });
        }
        Ok(Section { values, points, fiber_dim })
    }

    /// Scalar field placed in component `c`, zero elsewhere.
    pub fn lift(points: usize, fiber_dim: usize, c: usize, scalar: &[Complex64]) -> Self {
        let mut s = Self::zeros(points, fiber_dim);
        s.values[c * points..(c + 1) * points].copy_from_slice(scalar);
        s
    }

    pub fn spike(points: usize, fiber_dim: usize, x: usize, c: usize) -> Self {
        let mut s = Self::zeros(points, fiber_dim);
        s.values[c * points + x] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, c: usize, x: usize) -> Complex64 {
        self.values[c * self.points + x]
    }

    pub fn set(&mut self, c: usize, x: usize, v: Complex64) {
        self.values[c * self.points + x] = v;
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.values[c * self.points..(c + 1) * self.points]
    }

    /// Hermitian fiber norm `|u(x)|`.
    pub fn fiber_norm(&self, x: usize) -> f64 {
        (0..self.fiber_dim).map(|c| self.get(c, x).norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn fiber_norms(&self) -> Vec<f64> {
        (0..self.points).map(|x| self.fiber_norm(x)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PNorm {
    One,
    Two,
    Inf,
}

/// `(sum_x mu_x |u(x)|^p)^{1/p}`, or `max_x |u(x)|` for `p = inf`.
pub fn p_norm(space: &MetricMeasureSpace, u: &Section, p: PNorm) -> f64 {
    let n = u.points();
    match p {
        PNorm::One => (0..n).map(|x| space.weight(x) * u.fiber_norm(x)).sum(),
        PNorm::Two => (0..n).map(|x| space.weight(x) * u.fiber_norm(x).powi(2)).sum::<f64>().sqrt(),
        PNorm::Inf => (0..n).map(|x| u.fiber_norm(x)).fold(0.0, f64::max),
    }
}

/// `(u, v) = sum_x mu_x <u(x), v(x)>`, linear in `u`.
pub fn inner(space: &MetricMeasureSpace, u: &Section, v: &Section) -> Complex64 {
    let n = u.points();
    u.values().iter().zip(v.values()).enumerate().map(|(i, (a, b))| a * b.conj() * space.weight(i % n)).sum()
}

/// `(u, v)_B = (B^{-1} u, v)`.
pub fn inner_b(space: &MetricMeasureSpace, u: &Section, v: &Section, b: &MultiplicationOperator) -> Result<Complex64> {
    let binv = b.inverse()?;
    Ok(inner(space, &binv.apply(u)?, v))
}
