//! Elementwise maps and the nearest-neighbor resize.

use ndarray::{Array5, ArrayView5};

pub type T5 = Array5<f64>;

/// Nearest-neighbor resize on the three spatial axes:
/// source index per axis is `floor(i * n_in / n_out)`.
pub fn nearest_resize3(x: &ArrayView5<'_, f64>, target: [usize; 3]) -> T5 {
    let (n, c, w, h, d) = x.dim();
    let (wo, ho, do_) = (target[0], target[1], target[2]);
    let map = |len_out: usize, len_in: usize| -> Vec<usize> {
        (0..len_out).map(|i| (i * len_in) / len_out).collect()
    };
    let mw = map(wo, w);
    let mh = map(ho, h);
    let md = map(do_, d);
    let mut y = T5::zeros((n, c, wo, ho, do_));
    for ni in 0..n {
        for ci in 0..c {
            for iw in 0..wo {
                for ih in 0..ho {
                    for id in 0..do_ {
                        y[[ni, ci, iw, ih, id]] = x[[ni, ci, mw[iw], mh[ih], md[id]]];
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`nearest_resize3`]: scatter-adds the output gradient back to
/// the source positions.
pub fn nearest_resize3_backward(grad: &ArrayView5<'_, f64>, src_dims: [usize; 3]) -> T5 {
    let (n, c, wo, ho, do_) = grad.dim();
    let (w, h, d) = (src_dims[0], src_dims[1], src_dims[2]);
    let map = |len_out: usize, len_in: usize| -> Vec<usize> {
        (0..len_out).map(|i| (i * len_in) / len_out).collect()
    };
    let mw = map(wo, w);
    let mh = map(ho, h);
    let md = map(do_, d);
    let mut dx = T5::zeros((n, c, w, h, d));
    for ni in 0..n {
        for ci in 0..c {
            for iw in 0..wo {
                for ih in 0..ho {
                    for id in 0..do_ {
                        dx[[ni, ci, mw[iw], mh[ih], md[id]]] += grad[[ni, ci, iw, ih, id]];
                    }
                }
            }
        }
    }
    dx
}
