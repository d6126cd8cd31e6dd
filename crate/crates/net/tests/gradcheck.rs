//! Central finite-difference verification of every differentiable op
//! (h = 1e-5, 64-bit, relative error <= 1e-4 on random small tensors sampled
//! away from kinks), plus the conv/tconv adjoint identity at 1e-10.

use gwinv_net::{Tape, Var, T5};
use ndarray::Array5;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn randn(shape: (usize, usize, usize, usize, usize), rng: &mut ChaCha12Rng) -> T5 {
    use rand_distr::{Distribution, StandardNormal};
    Array5::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

/// Random tensor bounded away from zero (for kinked ops).
fn randn_offset(shape: (usize, usize, usize, usize, usize), rng: &mut ChaCha12Rng) -> T5 {
    randn(shape, rng).mapv(|v| if v.abs() < 0.2 { v.signum() * (v.abs() + 0.2) } else { v })
}

/// Checks d(loss)/d(input k) for every element of input k against central
/// finite differences. `build` constructs the scalar loss from the list of
/// input tensors (bound as params in order).
fn check_grads(inputs: &[T5], build: &dyn Fn(&mut Tape, &[Var]) -> Var) {
    let eval = |tensors: &[T5]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|x| t.param(x.clone())).collect();
        let loss = build(&mut t, &vars);
        t.scalar(loss).unwrap()
    };

    // Analytic gradients.
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
    let loss = build(&mut t, &vars);
    let grads = t.backward(loss).unwrap();

    for (k, x0) in inputs.iter().enumerate() {
        let g = grads
            .get(vars[k])
            .unwrap_or_else(|| panic!("input {k} received no gradient"));
        let mut work: Vec<T5> = inputs.to_vec();
        for (flat, _) in x0.iter().enumerate() {
            let nd_idx = flat_to_idx(x0, flat);
            let orig = work[k][nd_idx];
            work[k][nd_idx] = orig + FD_H;
            let up = eval(&work);
            work[k][nd_idx] = orig - FD_H;
            let down = eval(&work);
            work[k][nd_idx] = orig;
            let fd = (up - down) / (2.0 * FD_H);
            let an = g[nd_idx];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            assert!(
                (fd - an).abs() / denom <= FD_TOL,
                "input {k} element {flat}: fd {fd} vs analytic {an}"
            );
        }
    }
}

fn flat_to_idx(x: &T5, flat: usize) -> [usize; 5] {
    let (n, c, w, h, d) = x.dim();
    let _ = n;
    let mut rem = flat;
    let id = rem % d;
    rem /= d;
    let ih = rem % h;
    rem /= h;
    let iw = rem % w;
    rem /= w;
    let ic = rem % c;
    let in_ = rem / c;
    [in_, ic, iw, ih, id]
}

/// Scalar loss that weights each element differently so gradients are
/// position dependent.
fn weighted_loss(t: &mut Tape, y: Var, seed: u64) -> Var {
    let shape = t.shape(y);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let w = t.leaf(randn((shape[0], shape[1], shape[2], shape[3], shape[4]), &mut rng));
    let prod = t.hadamard(y, w).unwrap();
    t.mean_all(prod).unwrap()
}

#[test]
fn grad_conv3_stride1() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let x = randn((2, 2, 4, 3, 3), &mut rng);
    let w = randn((3, 2, 3, 3, 3), &mut rng);
    let b = randn((1, 3, 1, 1, 1), &mut rng);
    check_grads(&[x, w, b], &|t, v| {
        let y = t.conv3(v[0], v[1], Some(v[2]), [1, 1, 1], [1, 1, 1]).unwrap();
        weighted_loss(t, y, 10)
    });
}

#[test]
fn grad_conv3_stride2() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let x = randn((2, 3, 4, 4, 3), &mut rng);
    let w = randn((2, 3, 3, 3, 3), &mut rng);
    let b = randn((1, 2, 1, 1, 1), &mut rng);
    check_grads(&[x, w, b], &|t, v| {
        let y = t.conv3(v[0], v[1], Some(v[2]), [2, 2, 2], [1, 1, 1]).unwrap();
        weighted_loss(t, y, 11)
    });
}

#[test]
fn grad_tconv3() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let x = randn((2, 3, 3, 2, 2), &mut rng);
    let w = randn((3, 2, 3, 3, 3), &mut rng); // [c_in, c_out, k...]
    let b = randn((1, 2, 1, 1, 1), &mut rng);
    check_grads(&[x, w, b], &|t, v| {
        let y = t
            .tconv3(v[0], v[1], Some(v[2]), [2, 2, 2], [1, 1, 1], [1, 0, 1])
            .unwrap();
        weighted_loss(t, y, 12)
    });
}

#[test]
fn grad_batchnorm_train() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let x = randn((3, 2, 3, 2, 2), &mut rng);
    let gamma = randn((1, 2, 1, 1, 1), &mut rng);
    let beta = randn((1, 2, 1, 1, 1), &mut rng);
    check_grads(&[x, gamma, beta], &|t, v| {
        let (mean, var) = {
            let xv = t.value(v[0]).view();
            gwinv_net_test_stats(&xv)
        };
        let inv_std = var.mapv(|vv: f64| 1.0 / (vv + 1e-5).sqrt());
        let y = t.batchnorm(v[0], v[1], v[2], mean, inv_std, true).unwrap();
        weighted_loss(t, y, 13)
    });
}

// channel_stats is internal; recompute batch stats the same way here.
fn gwinv_net_test_stats(
    x: &ndarray::ArrayView5<'_, f64>,
) -> (ndarray::Array1<f64>, ndarray::Array1<f64>) {
    let (n, c, w, h, d) = x.dim();
    let count = (n * w * h * d) as f64;
    let mut mean = ndarray::Array1::<f64>::zeros(c);
    let mut var = ndarray::Array1::<f64>::zeros(c);
    for ni in 0..n {
        for ci in 0..c {
            for iw in 0..w {
                for ih in 0..h {
                    for id in 0..d {
                        mean[ci] += x[[ni, ci, iw, ih, id]];
                    }
                }
            }
        }
    }
    mean.mapv_inplace(|m| m / count);
    for ni in 0..n {
        for ci in 0..c {
            for iw in 0..w {
                for ih in 0..h {
                    for id in 0..d {
                        let dv = x[[ni, ci, iw, ih, id]] - mean[ci];
                        var[ci] += dv * dv;
                    }
                }
            }
        }
    }
    var.mapv_inplace(|v| v / count);
    (mean, var)
}

#[test]
fn grad_batchnorm_eval() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let x = randn((2, 2, 3, 2, 2), &mut rng);
    let gamma = randn((1, 2, 1, 1, 1), &mut rng);
    let beta = randn((1, 2, 1, 1, 1), &mut rng);
    let mean = ndarray::arr1(&[0.3, -0.2]);
    let var = ndarray::arr1(&[1.5, 0.7]);
    check_grads(&[x, gamma, beta], &|t, v| {
        let inv_std = var.mapv(|vv: f64| 1.0 / (vv + 1e-5).sqrt());
        let y = t
            .batchnorm(v[0], v[1], v[2], mean.clone(), inv_std, false)
            .unwrap();
        weighted_loss(t, y, 14)
    });
}

#[test]
fn grad_activations() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let x = randn_offset((2, 2, 3, 2, 2), &mut rng);
    check_grads(&[x.clone()], &|t, v| {
        let y = t.relu(v[0]).unwrap();
        weighted_loss(t, y, 15)
    });
    check_grads(&[x.clone()], &|t, v| {
        let y = t.leaky_relu(v[0], 0.2).unwrap();
        weighted_loss(t, y, 16)
    });
    check_grads(&[x], &|t, v| {
        let y = t.sigmoid(v[0]).unwrap();
        weighted_loss(t, y, 17)
    });
}

#[test]
fn grad_resize() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let x = randn((2, 2, 3, 2, 2), &mut rng);
    check_grads(&[x], &|t, v| {
        let y = t.resize3(v[0], [5, 4, 3]).unwrap();
        weighted_loss(t, y, 18)
    });
}

#[test]
fn grad_fc() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let x = randn((3, 4, 1, 1, 1), &mut rng);
    let w = randn((2, 4, 1, 1, 1), &mut rng);
    let b = randn((1, 2, 1, 1, 1), &mut rng);
    check_grads(&[x, w, b], &|t, v| {
        let y = t.fc(v[0], v[1], Some(v[2])).unwrap();
        weighted_loss(t, y, 19)
    });
}

#[test]
fn grad_pointwise_chain() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let a = randn((2, 2, 2, 2, 2), &mut rng);
    let b = randn((2, 2, 2, 2, 2), &mut rng);
    check_grads(&[a, b], &|t, v| {
        let cat = t.concat_channels(&[v[0], v[1]]).unwrap();
        let aff = t.affine(cat, 0.5, 0.1).unwrap();
        let e = t.exp(aff).unwrap();
        let ln = t.ln_clamped(e, 1e-12).unwrap();
        let sum = t.add(ln, cat).unwrap();
        let had = t.hadamard(sum, sum).unwrap();
        weighted_loss(t, had, 20)
    });
}

#[test]
fn grad_l1_loss() {
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    // Keep pred and target separated so |.| has no kinks near the samples.
    let pred = randn((2, 1, 3, 2, 2), &mut rng).mapv(|v| v + 3.0);
    let target = randn((2, 1, 3, 2, 2), &mut rng);
    let weight = randn((2, 1, 3, 2, 2), &mut rng).mapv(f64::abs);
    check_grads(&[pred.clone()], &|t, v| {
        let tt = t.leaf(target.clone());
        t.l1_loss(v[0], tt, None).unwrap()
    });
    check_grads(&[pred], &|t, v| {
        let tt = t.leaf(target.clone());
        let ww = t.leaf(weight.clone());
        t.l1_loss(v[0], tt, Some(ww)).unwrap()
    });
}

#[test]
fn grad_l2_penalty() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let a = randn((1, 2, 2, 2, 1), &mut rng);
    let b = randn((1, 3, 1, 1, 1), &mut rng);
    check_grads(&[a, b], &|t, v| t.l2_penalty(&[v[0], v[1]], 1e-2).unwrap());
}

#[test]
fn l1_subgradient_at_zero_residual_is_zero() {
    let mut t = Tape::new();
    let x = t.param(T5::from_elem((1, 1, 2, 1, 1), 1.5));
    let target = t.leaf(T5::from_elem((1, 1, 2, 1, 1), 1.5));
    let loss = t.l1_loss(x, target, None).unwrap();
    let grads = t.backward(loss).unwrap();
    assert!(grads.get(x).unwrap().iter().all(|&g| g == 0.0));
}

/// Inner-product adjoint identity: <conv3(x; W), y> == <x, tconv3(y; W)>
/// with the same weight memory and matching geometry.
#[test]
fn conv_tconv_adjoint_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    for &(s, p) in &[([1usize, 1, 1], [1usize, 1, 1]), ([2, 2, 2], [1, 1, 1])] {
        let x = randn((2, 3, 5, 4, 3), &mut rng);
        let w_conv = randn((4, 3, 3, 3, 3), &mut rng);

        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let wv = t.leaf(w_conv.clone());
        let yv = t.conv3(xv, wv, None, s, p).unwrap();
        let y_shape = t.shape(yv);
        let y = randn(
            (y_shape[0], y_shape[1], y_shape[2], y_shape[3], y_shape[4]),
            &mut rng,
        );

        // Same memory viewed as a tconv weight [c_in_t = 4, c_out_t = 3, k].
        let w_t = w_conv
            .clone()
            .into_shape_with_order((4, 3, 3, 3, 3))
            .unwrap();
        let op = [
            adjoint_out_pad(5, y_shape[2], 3, s[0], p[0]),
            adjoint_out_pad(4, y_shape[3], 3, s[1], p[1]),
            adjoint_out_pad(3, y_shape[4], 3, s[2], p[2]),
        ];
        let yv2 = t.leaf(y.clone());
        let wt = t.leaf(w_t);
        let back = t.tconv3(yv2, wt, None, s, p, op).unwrap();

        let lhs: f64 = t
            .value(yv)
            .iter()
            .zip(y.iter())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = t
            .value(back)
            .iter()
            .zip(x.iter())
            .map(|(a, b)| a * b)
            .sum();
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        assert!(
            (lhs - rhs).abs() / scale <= 1e-10,
            "stride {s:?}: {lhs} vs {rhs}"
        );
    }
}

fn adjoint_out_pad(n_in: usize, n_out: usize, k: usize, s: usize, p: usize) -> usize {
    n_in - ((n_out - 1) * s + k - 2 * p)
}

#[test]
fn forward_backward_deterministic() {
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    let x = randn((2, 3, 6, 5, 4), &mut rng);
    let w = randn((4, 3, 3, 3, 3), &mut rng);
    let run = || {
        let mut t = Tape::new();
        let xv = t.param(x.clone());
        let wv = t.param(w.clone());
        let y = t.conv3(xv, wv, None, [2, 2, 2], [1, 1, 1]).unwrap();
        let loss = t.mean_all(y).unwrap();
        let grads = t.backward(loss).unwrap();
        (
            t.value(y).clone(),
            grads.get(xv).unwrap().clone(),
            grads.get(wv).unwrap().clone(),
        )
    };
    let (y1, gx1, gw1) = run();
    let (y2, gx2, gw2) = run();
    assert_eq!(y1, y2);
    assert_eq!(gx1, gx2);
    assert_eq!(gw1, gw2);
}
