//! Dense complex kernels: products, Hermitian eigendecomposition, spectral
//! norms and the matrix exponential.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

pub type CMatrix = DMatrix<Complex64>;

/// `a * b` through the blocked complex GEMM kernel.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: nalgebra stores column-major with contiguous columns and
    // Complex64 is #[repr(C)] { re, im }, layout-compatible with [f64; 2].
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

pub fn matvec(a: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = alloc::vec![Complex64::zero(); a.nrows()];
    for (j, xj) in x.iter().enumerate() {
        if *xj == Complex64::zero() {
            continue;
        }
        let col = a.column(j);
        for (yi, aij) in y.iter_mut().zip(col.iter()) {
            *yi += aij * xj;
        }
    }
    y
}

/// Max column sum.
pub fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// unitary eigenvector columns. Real input takes the cheaper real path.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    let real = h.iter().all(|v| v.im == 0.0);
    let (vals, vecs): (Vec<f64>, CMatrix) = if real {
        let hr = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (h[(i, j)].re + h[(j, i)].re));
        let eig = SymmetricEigen::new(hr);
        let vecs = eig.eigenvectors.map(|v| Complex64::new(v, 0.0));
        (eig.eigenvalues.iter().copied().collect(), vecs)
    } else {
        let hs = CMatrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
        let eig = SymmetricEigen::new(hs);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(core::cmp::Ordering::Equal));
    let sorted_vals = order.iter().map(|&k| vals[k]).collect();
    let sorted_vecs = CMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    (sorted_vals, sorted_vecs)
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> Result<f64> {
    if !is_finite(a) {
        return Err(Error::NonFinite);
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let real = a.iter().all(|v| v.im == 0.0);
    let s = if real {
        let ar = a.map(|v| v.re);
        ar.singular_values().iter().copied().fold(0.0, f64::max)
    } else {
        a.clone().singular_values().iter().copied().fold(0.0, f64::max)
    };
    Ok(s)
}

pub fn solve(a: CMatrix, b: CMatrix) -> Result<CMatrix> {
    a.lu().solve(&b).ok_or(Error::InvalidParameter("singular linear system".into()))
}

// Pade coefficients and 1-norm thresholds for degrees 3, 5, 7, 9, 13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.539398330063230e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068)];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with diagonal Pade
/// approximants (degree 13 for anything but tiny norms).
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if !is_finite(a) {
        return Err(Error::NonFinite);
    }
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    let ident = CMatrix::identity(n, n);
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coeffs, &ident);
        }
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = a * Complex64::new(2f64.powi(-s), 0.0);
    let mut r = pade13(&scaled, &ident)?;
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    Ok(r)
}

fn pade_low(a: &CMatrix, b: &[f64], ident: &CMatrix) -> Result<CMatrix> {
    let a2 = matmul(a, a);
    let mut even = ident * Complex64::new(b[0], 0.0);
    let mut odd = ident * Complex64::new(b[1], 0.0);
    let mut power = ident.clone();
    let mut k = 2;
    while k < b.len() {
        power = matmul(&power, &a2);
        even += &power * Complex64::new(b[k], 0.0);
        if k + 1 < b.len() {
            odd += &power * Complex64::new(b[k + 1], 0.0);
        }
        k += 2;
    }
    let u = matmul(a, &odd);
    solve(&even - &u, &even + &u)
}

fn pade13(a: &CMatrix, ident: &CMatrix) -> Result<CMatrix> {
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let a2 = matmul(a, a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a2, &a4);
    let w1 = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let w2 = &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + ident * b(1);
    let u = matmul(a, &(matmul(&a6, &w1) + w2));
    let z1 = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let z2 = &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + ident * b(0);
    let v = matmul(&a6, &z1) + z2;
    solve(&v - &u, &v + &u)
}
