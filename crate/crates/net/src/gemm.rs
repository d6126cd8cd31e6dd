//! f64 matrix products routed through faer. All convolutions reduce to a
//! handful of large GEMMs per layer; faer's AVX-512 kernels with the global
//! rayon pool are the difference between hours and minutes on CPU.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

fn as_faer<'a>(a: &ArrayView2<'a, f64>) -> faer::MatRef<'a, f64> {
    let (r, c) = a.dim();
    let s = a.strides();
    unsafe { faer::MatRef::from_raw_parts(a.as_ptr(), r, c, s[0], s[1]) }
}

fn as_faer_mut<'a>(a: &'a mut ArrayViewMut2<'_, f64>) -> faer::MatMut<'a, f64> {
    let (r, c) = a.dim();
    let s = [a.strides()[0], a.strides()[1]];
    unsafe { faer::MatMut::from_raw_parts_mut(a.as_mut_ptr(), r, c, s[0], s[1]) }
}

/// `dst = a · b` using the global faer parallelism.
pub fn matmul_into(dst: &mut ArrayViewMut2<'_, f64>, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) {
    debug_assert_eq!(dst.nrows(), a.nrows());
    debug_assert_eq!(dst.ncols(), b.ncols());
    debug_assert_eq!(a.ncols(), b.nrows());
    faer::linalg::matmul::matmul(
        as_faer_mut(dst),
        faer::Accum::Replace,
        as_faer(&a),
        as_faer(&b),
        1.0,
        faer::get_global_parallelism(),
    );
}

/// `dst += a · b`.
pub fn matmul_accum(dst: &mut ArrayViewMut2<'_, f64>, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) {
    faer::linalg::matmul::matmul(
        as_faer_mut(dst),
        faer::Accum::Add,
        as_faer(&a),
        as_faer(&b),
        1.0,
        faer::get_global_parallelism(),
    );
}

/// Convenience allocating product.
pub fn matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    matmul_into(&mut out.view_mut(), a, b);
    out
}

/// Caps faer's worker count (the rayon global pool itself is configured by
/// the caller).
pub fn set_gemm_threads(n: usize) {
    if n <= 1 {
        faer::set_global_parallelism(faer::Par::Seq);
    } else {
        faer::set_global_parallelism(faer::Par::rayon(n));
    }
}
