//! 3D convolution and transposed convolution via im2col + GEMM.
//!
//! Tensors are `[n, c, w, h, d]` row-major. The column matrix has one row per
//! (input channel, kernel offset) and one column per (sample, output
//! position), so forward, weight-gradient and data-gradient each reduce to a
//! single large GEMM. Parallel loops write disjoint slices only, which keeps
//! results bitwise reproducible for a fixed thread count.

use ndarray::{Array2, Array5, ArrayView5};
use rayon::prelude::*;

use crate::gemm::{matmul, matmul_into};

pub type T5 = Array5<f64>;

#[inline]
pub fn conv_out_dim(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p - k) / s + 1
}

#[inline]
pub fn tconv_out_dim(n: usize, k: usize, s: usize, p: usize, op: usize) -> usize {
    (n - 1) * s + k + op - 2 * p
}

/// Gathers `x[n, c, :]` into a `(c, n*L)` matrix (channel-major rows).
fn to_channel_matrix(x: &ArrayView5<'_, f64>) -> Array2<f64> {
    let (n, c, w, h, d) = x.dim();
    let l = w * h * d;
    let xs = x.as_slice().expect("contiguous tensor");
    let mut g = Array2::<f64>::zeros((c, n * l));
    let gs = g.as_slice_mut().unwrap();
    gs.par_chunks_mut(n * l).enumerate().for_each(|(ci, row)| {
        for ni in 0..n {
            let src = &xs[(ni * c + ci) * l..(ni * c + ci) * l + l];
            row[ni * l..(ni + 1) * l].copy_from_slice(src);
        }
    });
    g
}

/// Scatters a `(c, n*L)` matrix back to `[n, c, dims]`, adding an optional
/// per-channel bias.
fn from_channel_matrix(m: &Array2<f64>, n: usize, c: usize, dims: [usize; 3], bias: Option<&[f64]>) -> T5 {
    let l = dims[0] * dims[1] * dims[2];
    let ms = m.as_slice().expect("contiguous matrix");
    let mut out = T5::zeros((n, c, dims[0], dims[1], dims[2]));
    let os = out.as_slice_mut().unwrap();
    os.par_chunks_mut(c * l).enumerate().for_each(|(ni, sample)| {
        for ci in 0..c {
            let dst = &mut sample[ci * l..(ci + 1) * l];
            let src = &ms[ci * n * l + ni * l..ci * n * l + ni * l + l];
            match bias {
                Some(b) => {
                    let bv = b[ci];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s + bv;
                    }
                }
                None => dst.copy_from_slice(src),
            }
        }
    });
    out
}

/// Builds the `(c_in*k3, n*L)` column matrix for a convolution with the given
/// geometry; `out_dims` is the output grid the columns enumerate.
fn im2col(
    x: &ArrayView5<'_, f64>,
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
    out_dims: [usize; 3],
) -> Array2<f64> {
    let (n, c, w, h, d) = x.dim();
    let (wo, ho, do_) = (out_dims[0], out_dims[1], out_dims[2]);
    let l = wo * ho * do_;
    let k3 = k[0] * k[1] * k[2];
    let xs = x.as_slice().expect("contiguous tensor");

    let mut col = Array2::<f64>::zeros((c * k3, n * l));
    let cols = col.as_slice_mut().unwrap();
    cols.par_chunks_mut(n * l).enumerate().for_each(|(r, row)| {
        let ci = r / k3;
        let rem = r % k3;
        let fw = rem / (k[1] * k[2]);
        let fh = (rem / k[2]) % k[1];
        let fd = rem % k[2];
        for ni in 0..n {
            let base = (ni * c + ci) * w * h * d;
            for ow in 0..wo {
                let iw = (ow * s[0] + fw) as isize - p[0] as isize;
                let row_off = ni * l + (ow * ho) * do_;
                if iw < 0 || iw >= w as isize {
                    continue; // stays zero
                }
                for oh in 0..ho {
                    let ih = (oh * s[1] + fh) as isize - p[1] as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let x_off = base + (iw as usize * h + ih as usize) * d;
                    let out_off = row_off + oh * do_;
                    for od in 0..do_ {
                        let id = (od * s[2] + fd) as isize - p[2] as isize;
                        if id < 0 || id >= d as isize {
                            continue;
                        }
                        row[out_off + od] = xs[x_off + id as usize];
                    }
                }
            }
        }
    });
    col
}

/// Adjoint of [`im2col`]: scatter-adds a `(c*k3, n*L)` matrix into a tensor
/// of shape `[n, c, dims]`.
fn col2im(
    col: &Array2<f64>,
    n: usize,
    c: usize,
    dims: [usize; 3],
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
    l_dims: [usize; 3],
) -> T5 {
    let (w, h, d) = (dims[0], dims[1], dims[2]);
    let (wo, ho, do_) = (l_dims[0], l_dims[1], l_dims[2]);
    let l = wo * ho * do_;
    let k3 = k[0] * k[1] * k[2];
    let cs = col.as_slice().expect("contiguous matrix");

    let mut out = T5::zeros((n, c, w, h, d));
    let os = out.as_slice_mut().unwrap();
    os.par_chunks_mut(c * w * h * d).enumerate().for_each(|(ni, sample)| {
        for r in 0..c * k3 {
            let ci = r / k3;
            let rem = r % k3;
            let fw = rem / (k[1] * k[2]);
            let fh = (rem / k[2]) % k[1];
            let fd = rem % k[2];
            let row = &cs[r * n * l + ni * l..r * n * l + ni * l + l];
            for ow in 0..wo {
                let iw = (ow * s[0] + fw) as isize - p[0] as isize;
                if iw < 0 || iw >= w as isize {
                    continue;
                }
                for oh in 0..ho {
                    let ih = (oh * s[1] + fh) as isize - p[1] as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let dst_off = (ci * w + iw as usize) * h * d + ih as usize * d;
                    let src_off = (ow * ho + oh) * do_;
                    for od in 0..do_ {
                        let id = (od * s[2] + fd) as isize - p[2] as isize;
                        if id < 0 || id >= d as isize {
                            continue;
                        }
                        sample[dst_off + id as usize] += row[src_off + od];
                    }
                }
            }
        }
    });
    out
}

/// Cross-correlation forward: weight `[c_out, c_in, kw, kh, kd]`.
pub fn conv3_forward(
    x: &ArrayView5<'_, f64>,
    w: &ArrayView5<'_, f64>,
    bias: Option<&[f64]>,
    s: [usize; 3],
    p: [usize; 3],
) -> T5 {
    let (n, _cin, wi, hi, di) = x.dim();
    let (cout, cin_w, kw, kh, kd) = w.dim();
    let k = [kw, kh, kd];
    let out_dims = [
        conv_out_dim(wi, kw, s[0], p[0]),
        conv_out_dim(hi, kh, s[1], p[1]),
        conv_out_dim(di, kd, s[2], p[2]),
    ];
    let col = im2col(x, k, s, p, out_dims);
    let w_mat = w
        .to_shape((cout, cin_w * kw * kh * kd))
        .expect("weight contiguous");
    let out_mat = matmul(w_mat.view(), col.view());
    from_channel_matrix(&out_mat, n, cout, out_dims, bias)
}

/// Backward pass of [`conv3_forward`]; returns (dx, dw, db), each only when
/// requested.
pub fn conv3_backward(
    x: &ArrayView5<'_, f64>,
    w: &ArrayView5<'_, f64>,
    grad_out: &ArrayView5<'_, f64>,
    s: [usize; 3],
    p: [usize; 3],
    need_dx: bool,
    need_dw: bool,
) -> (Option<T5>, Option<T5>, Vec<f64>) {
    let (n, cin, wi, hi, di) = x.dim();
    let (cout, _cin, kw, kh, kd) = w.dim();
    let k = [kw, kh, kd];
    let (_, _, wo, ho, do_) = grad_out.dim();
    let out_dims = [wo, ho, do_];

    let g_mat = to_channel_matrix(grad_out);
    let db: Vec<f64> = (0..cout).map(|c| g_mat.row(c).sum()).collect();

    let dw = if need_dw {
        let col = im2col(x, k, s, p, out_dims);
        let dw_mat = matmul(g_mat.view(), col.t());
        Some(
            dw_mat
                .into_shape_with_order((cout, cin, kw, kh, kd))
                .expect("dw shape"),
        )
    } else {
        None
    };

    let dx = if need_dx {
        let w_mat = w
            .to_shape((cout, cin * kw * kh * kd))
            .expect("weight contiguous");
        let mut dcol = Array2::<f64>::zeros((cin * kw * kh * kd, n * wo * ho * do_));
        matmul_into(&mut dcol.view_mut(), w_mat.t(), g_mat.view());
        Some(col2im(&dcol, n, cin, [wi, hi, di], k, s, p, out_dims))
    } else {
        None
    };

    (dx, dw, db)
}

/// Transposed convolution forward: weight `[c_in, c_out, kw, kh, kd]`.
/// With the same weight memory as a conv (viewed `[c_out, c_in, k]`), this is
/// the exact adjoint of [`conv3_forward`] for matching stride/padding.
pub fn tconv3_forward(
    x: &ArrayView5<'_, f64>,
    w: &ArrayView5<'_, f64>,
    bias: Option<&[f64]>,
    s: [usize; 3],
    p: [usize; 3],
    op: [usize; 3],
) -> T5 {
    let (n, cin, wi, hi, di) = x.dim();
    let (_cin, cout, kw, kh, kd) = w.dim();
    let k = [kw, kh, kd];
    let out_dims = [
        tconv_out_dim(wi, kw, s[0], p[0], op[0]),
        tconv_out_dim(hi, kh, s[1], p[1], op[1]),
        tconv_out_dim(di, kd, s[2], p[2], op[2]),
    ];
    let x_mat = to_channel_matrix(x);
    let w_mat = w
        .to_shape((cin, cout * kw * kh * kd))
        .expect("weight contiguous");
    let mut col = Array2::<f64>::zeros((cout * kw * kh * kd, n * wi * hi * di));
    matmul_into(&mut col.view_mut(), w_mat.t(), x_mat.view());
    let mut out = col2im(&col, n, cout, out_dims, k, s, p, [wi, hi, di]);
    if let Some(b) = bias {
        let os = out.as_slice_mut().unwrap();
        let l = out_dims[0] * out_dims[1] * out_dims[2];
        os.par_chunks_mut(cout * l).for_each(|sample| {
            for ci in 0..cout {
                let bv = b[ci];
                for v in &mut sample[ci * l..(ci + 1) * l] {
                    *v += bv;
                }
            }
        });
    }
    out
}

/// Backward pass of [`tconv3_forward`]; returns (dx, dw, db).
pub fn tconv3_backward(
    x: &ArrayView5<'_, f64>,
    w: &ArrayView5<'_, f64>,
    grad_out: &ArrayView5<'_, f64>,
    s: [usize; 3],
    p: [usize; 3],
    need_dx: bool,
    need_dw: bool,
) -> (Option<T5>, Option<T5>, Vec<f64>) {
    let (n, cin, wi, hi, di) = x.dim();
    let (_cin, cout, kw, kh, kd) = w.dim();
    let k = [kw, kh, kd];
    let l_dims = [wi, hi, di];

    let g_chan = to_channel_matrix(grad_out);
    let db: Vec<f64> = (0..cout).map(|c| g_chan.row(c).sum()).collect();

    // dX is a plain convolution of grad_out with the weight.
    let g_col = im2col(grad_out, k, s, p, l_dims);
    let dx = if need_dx {
        let w_mat = w
            .to_shape((cin, cout * kw * kh * kd))
            .expect("weight contiguous");
        let dx_mat = matmul(w_mat.view(), g_col.view());
        Some(from_channel_matrix(&dx_mat, n, cin, l_dims, None))
    } else {
        None
    };

    let dw = if need_dw {
        let x_mat = to_channel_matrix(x);
        let dw_mat = matmul(x_mat.view(), g_col.t());
        Some(
            dw_mat
                .into_shape_with_order((cin, cout, kw, kh, kd))
                .expect("dw shape"),
        )
    } else {
        None
    };

    (dx, dw, db)
}
