//! Row-major matrix kernels behind the tape ops. All three accumulate into
//! their output so backward passes can reuse them directly.

/// y += x @ w^T, with x: [b, n], w: [m, n], y: [b, m].
///
/// Both dot operands are contiguous rows, which keeps the inner loop
/// vectorizable.
pub(crate) fn matmul_nt_acc(x: &[f64], w: &[f64], y: &mut [f64], b: usize, n: usize, m: usize) {
    debug_assert_eq!(x.len(), b * n);
    debug_assert_eq!(w.len(), m * n);
    debug_assert_eq!(y.len(), b * m);
    for (xrow, yrow) in x.chunks_exact(n).zip(y.chunks_exact_mut(m)) {
        for (yj, wrow) in yrow.iter_mut().zip(w.chunks_exact(n)) {
            let mut acc = 0.0;
            for (&xi, &wi) in xrow.iter().zip(wrow) {
                acc += xi * wi;
            }
            *yj += acc;
        }
    }
}

/// y += x @ w, with x: [b, m], w: [m, n], y: [b, n].
pub(crate) fn matmul_nn_acc(x: &[f64], w: &[f64], y: &mut [f64], b: usize, m: usize, n: usize) {
    debug_assert_eq!(x.len(), b * m);
    debug_assert_eq!(w.len(), m * n);
    debug_assert_eq!(y.len(), b * n);
    for (xrow, yrow) in x.chunks_exact(m).zip(y.chunks_exact_mut(n)) {
        for (&xj, wrow) in xrow.iter().zip(w.chunks_exact(n)) {
            if xj != 0.0 {
                axpy(xj, wrow, yrow);
            }
        }
    }
}

/// w += x^T @ y, with x: [b, m], y: [b, n], w: [m, n].
pub(crate) fn matmul_tn_acc(x: &[f64], y: &[f64], w: &mut [f64], b: usize, m: usize, n: usize) {
    debug_assert_eq!(x.len(), b * m);
    debug_assert_eq!(y.len(), b * n);
    debug_assert_eq!(w.len(), m * n);
    for (xrow, yrow) in x.chunks_exact(m).zip(y.chunks_exact(n)) {
        for (&xj, wrow) in xrow.iter().zip(w.chunks_exact_mut(n)) {
            if xj != 0.0 {
                axpy(xj, yrow, wrow);
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
