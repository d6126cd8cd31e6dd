//! Batch normalization over (N, W, H, D) per channel.

use ndarray::{Array1, Array5, ArrayView5};

pub type T5 = Array5<f64>;

/// Per-channel mean and biased variance over (N, W, H, D).
pub fn channel_stats(x: &ArrayView5<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let (n, c, w, h, d) = x.dim();
    let l = w * h * d;
    let count = (n * l) as f64;
    let xs = x.as_slice().expect("contiguous tensor");
    let mut mean = Array1::<f64>::zeros(c);
    let mut var = Array1::<f64>::zeros(c);
    for ni in 0..n {
        for ci in 0..c {
            let s = &xs[(ni * c + ci) * l..(ni * c + ci) * l + l];
            mean[ci] += s.iter().sum::<f64>();
        }
    }
    mean.mapv_inplace(|m| m / count);
    for ni in 0..n {
        for ci in 0..c {
            let s = &xs[(ni * c + ci) * l..(ni * c + ci) * l + l];
            let mu = mean[ci];
            var[ci] += s.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
        }
    }
    var.mapv_inplace(|v| v / count);
    (mean, var)
}

/// `y = gamma * (x - mean) * inv_std + beta` with per-channel factors.
pub fn bn_forward(
    x: &ArrayView5<'_, f64>,
    mean: &Array1<f64>,
    inv_std: &Array1<f64>,
    gamma: &[f64],
    beta: &[f64],
) -> T5 {
    let (n, c, w, h, d) = x.dim();
    let l = w * h * d;
    let xs = x.as_slice().expect("contiguous tensor");
    let mut y = T5::zeros((n, c, w, h, d));
    let ys = y.as_slice_mut().unwrap();
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * l;
            let scale = gamma[ci] * inv_std[ci];
            let shift = beta[ci] - mean[ci] * scale;
            for (yo, xo) in ys[off..off + l].iter_mut().zip(&xs[off..off + l]) {
                *yo = xo * scale + shift;
            }
        }
    }
    y
}

/// Backward through train-mode batch normalization (batch statistics).
/// Returns (dx, dgamma, dbeta).
pub fn bn_backward_train(
    x: &ArrayView5<'_, f64>,
    grad: &ArrayView5<'_, f64>,
    mean: &Array1<f64>,
    inv_std: &Array1<f64>,
    gamma: &[f64],
) -> (T5, Vec<f64>, Vec<f64>) {
    let (n, c, w, h, d) = x.dim();
    let l = w * h * d;
    let count = (n * l) as f64;
    let xs = x.as_slice().unwrap();
    let gs = grad.as_slice().unwrap();

    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * l;
            let mu = mean[ci];
            let is = inv_std[ci];
            let mut sg = 0.0;
            let mut sgx = 0.0;
            for (g, xv) in gs[off..off + l].iter().zip(&xs[off..off + l]) {
                sg += g;
                sgx += g * (xv - mu) * is;
            }
            sum_g[ci] += sg;
            sum_gx[ci] += sgx;
        }
    }

    let mut dx = T5::zeros((n, c, w, h, d));
    let dxs = dx.as_slice_mut().unwrap();
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * l;
            let mu = mean[ci];
            let is = inv_std[ci];
            let k = gamma[ci] * is;
            let mg = sum_g[ci] / count;
            let mgx = sum_gx[ci] / count;
            for i in off..off + l {
                let xhat = (xs[i] - mu) * is;
                dxs[i] = k * (gs[i] - mg - xhat * mgx);
            }
        }
    }
    (dx, sum_gx, sum_g)
}

/// Backward through eval-mode batch normalization (running statistics are
/// constants): `dx = g * gamma * inv_std`, plus parameter gradients.
pub fn bn_backward_eval(
    x: &ArrayView5<'_, f64>,
    grad: &ArrayView5<'_, f64>,
    mean: &Array1<f64>,
    inv_std: &Array1<f64>,
    gamma: &[f64],
) -> (T5, Vec<f64>, Vec<f64>) {
    let (n, c, w, h, d) = x.dim();
    let l = w * h * d;
    let xs = x.as_slice().unwrap();
    let gs = grad.as_slice().unwrap();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut dx = T5::zeros((n, c, w, h, d));
    let dxs = dx.as_slice_mut().unwrap();
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * l;
            let mu = mean[ci];
            let is = inv_std[ci];
            let k = gamma[ci] * is;
            for i in off..off + l {
                dxs[i] = gs[i] * k;
                dgamma[ci] += gs[i] * (xs[i] - mu) * is;
                dbeta[ci] += gs[i];
            }
        }
    }
    (dx, dgamma, dbeta)
}
