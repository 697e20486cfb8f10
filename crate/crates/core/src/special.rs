//! Bessel functions of the first kind for Chebyshev propagator coefficients.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;


/// `J_0(x), ..., J_kmax(x)` for `x >= 0` by Miller's backward recurrence,
/// normalised with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x < 1e-100 {
        // J_k(x) ~ (x/2)^k / k! is far below rounding for k >= 1
        out[0] = 1.0;
        return out;
    }
    assert!(x.is_finite());
    let mut start = (kmax as f64).max(x) + 20.0 + (40.0 * x.max(1.0)).sqrt();
    start = 2.0 * (start / 2.0).ceil();
    let start = start as usize;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = (2.0 * k as f64 / x) * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // j_cur now holds J_{k-1}
        let idx = k - 1;
        if idx <= kmax {
            out[idx] = j_cur;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * j_cur;
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += j_cur; // J_0
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}
