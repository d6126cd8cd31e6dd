//! Hand-checkable values for each tensor op.

use gwinv_net::{conv3_output_dims, tconv3_output_dims, Tape, T5};
use ndarray::arr1;

#[test]
fn conv_identity_kernel() {
    let mut t = Tape::new();
    let x = T5::from_shape_vec((1, 1, 2, 2, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
    let xv = t.leaf(x.clone());
    let w = t.leaf(T5::from_elem((1, 1, 1, 1, 1), 1.0));
    let y = t.conv3(xv, w, None, [1, 1, 1], [0, 0, 0]).unwrap();
    assert_eq!(t.value(y), &x);
}

#[test]
fn conv_1d_box_kernel_on_w_axis() {
    // x along w = [1, 2, 3], kernel [1, 1, 1], pad 1: y = [3, 6, 5].
    let mut t = Tape::new();
    let x = T5::from_shape_vec((1, 1, 3, 1, 1), vec![1.0, 2.0, 3.0]).unwrap();
    let xv = t.leaf(x);
    let w = t.leaf(T5::from_elem((1, 1, 3, 1, 1), 1.0));
    let y = t.conv3(xv, w, None, [1, 1, 1], [1, 0, 0]).unwrap();
    let got: Vec<f64> = t.value(y).iter().cloned().collect();
    assert_eq!(got, vec![3.0, 6.0, 5.0]);
}

#[test]
fn conv_shape_arithmetic_at_paper_resolutions() {
    // 81 x 41 x 6 downsampled by k3 s2 p1 twice.
    assert_eq!(conv3_output_dims([81, 41, 6], [3; 3], [2; 3], [1; 3]), [41, 21, 3]);
    assert_eq!(conv3_output_dims([41, 21, 3], [3; 3], [2; 3], [1; 3]), [21, 11, 2]);
}

#[test]
fn tconv_shape_arithmetic() {
    assert_eq!(tconv3_output_dims([21, 11, 2], [3; 3], [2; 3], [1; 3], [0, 0, 0]), [41, 21, 3]);
    // 3 -> 6 needs output padding 1 on that axis.
    assert_eq!(tconv3_output_dims([41, 21, 3], [3; 3], [2; 3], [1; 3], [0, 0, 1]), [81, 41, 6]);
    assert_eq!(tconv3_output_dims([10, 5, 1], [3; 3], [2; 3], [1; 3], [1, 1, 1]), [20, 10, 2]);
}

#[test]
fn batchnorm_constant_input_is_zeroed() {
    let mut t = Tape::new();
    let x = t.leaf(T5::from_elem((2, 1, 2, 2, 2), 4.0));
    let gamma = t.leaf(T5::from_elem((1, 1, 1, 1, 1), 1.0));
    let beta = t.leaf(T5::zeros((1, 1, 1, 1, 1)));
    // Batch stats of a constant channel: mean 4, var 0.
    let y = t
        .batchnorm(x, gamma, beta, arr1(&[4.0]), arr1(&[1.0 / (0.0f64 + 1e-5).sqrt()]), true)
        .unwrap();
    assert!(t.value(y).iter().all(|&v| v.abs() < 1e-8));
}

#[test]
fn batchnorm_normalizes_then_shifts() {
    use gwinv_net::{BatchNorm3, BindCtx, Mode};
    let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(3);
    let x = gwinv_net::draw_weights((4, 2, 3, 3, 2), 1, 1, gwinv_net::Init::HeNormal, &mut rng)
        .mapv(|v| 2.0 * v + 1.0);

    // gamma = 1, beta = 0: per-channel mean ~0, var ~1.
    let bn = BatchNorm3::new("bn", 2);
    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let xv = t.leaf(x.clone());
    let y = bn.forward(&mut t, &mut ctx, xv, Mode::Train).unwrap();
    let yv = t.value(y);
    for c in 0..2 {
        let slice: Vec<f64> = yv
            .slice(ndarray::s![.., c..c + 1, .., .., ..])
            .iter()
            .cloned()
            .collect();
        let n = slice.len() as f64;
        let mean: f64 = slice.iter().sum::<f64>() / n;
        let var: f64 = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }

    // gamma = 0, beta = 5: output identically 5.
    let bn5 = BatchNorm3::new("bn5", 2);
    let mut bn5 = bn5;
    bn5.gamma.value.fill(0.0);
    bn5.beta.value.fill(5.0);
    let mut t2 = Tape::new();
    let mut ctx2 = BindCtx::default();
    let xv2 = t2.leaf(x);
    let y2 = bn5.forward(&mut t2, &mut ctx2, xv2, Mode::Train).unwrap();
    assert!(t2.value(y2).iter().all(|&v| (v - 5.0).abs() < 1e-12));
}

#[test]
fn batchnorm_rejects_batch_of_one_in_train_mode() {
    use gwinv_net::{BatchNorm3, BindCtx, Mode};
    let bn = BatchNorm3::new("bn", 1);
    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let x = t.leaf(T5::zeros((1, 1, 2, 2, 2)));
    assert!(bn.forward(&mut t, &mut ctx, x, Mode::Train).is_err());
    assert!(bn.forward(&mut t, &mut ctx, x, Mode::Eval).is_ok());
}

#[test]
fn activation_values() {
    let mut t = Tape::new();
    let x = t.leaf(T5::from_shape_vec((1, 1, 3, 1, 1), vec![-1.0, 0.0, 2.0]).unwrap());
    let r = t.relu(x).unwrap();
    assert_eq!(t.value(r).iter().cloned().collect::<Vec<_>>(), vec![0.0, 0.0, 2.0]);
    let l = t.leaky_relu(x, 0.2).unwrap();
    assert_eq!(t.value(l).iter().cloned().collect::<Vec<_>>(), vec![-0.2, 0.0, 2.0]);
    let s = t.sigmoid(x).unwrap();
    assert!((t.value(s)[[0, 0, 1, 0, 0]] - 0.5).abs() < 1e-15);
}

#[test]
fn nearest_resize_doubling_and_identity() {
    let mut t = Tape::new();
    let x = t.leaf(T5::from_shape_vec((1, 1, 2, 1, 1), vec![1.0, 2.0]).unwrap());
    let y = t.resize3(x, [4, 1, 1]).unwrap();
    assert_eq!(
        t.value(y).iter().cloned().collect::<Vec<_>>(),
        vec![1.0, 1.0, 2.0, 2.0]
    );
    let same = t.resize3(x, [2, 1, 1]).unwrap();
    assert_eq!(t.value(same), t.value(x));

    // Decoder-path resize 21x11x2 -> 41x21x4 only changes spatial dims.
    let big = t.leaf(T5::zeros((1, 48, 21, 11, 2)));
    let up = t.resize3(big, [41, 21, 4]).unwrap();
    assert_eq!(t.shape(up), [1, 48, 41, 21, 4]);
}

#[test]
fn fc_examples() {
    let mut t = Tape::new();
    // Identity weights.
    let x = t.leaf(T5::from_shape_vec((1, 2, 1, 1, 1), vec![3.0, -1.0]).unwrap());
    let eye = t.leaf(T5::from_shape_vec((2, 2, 1, 1, 1), vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let y = t.fc(x, eye, None).unwrap();
    assert_eq!(t.value(y).iter().cloned().collect::<Vec<_>>(), vec![3.0, -1.0]);

    // Random 3x2 against hand multiplication: w rows are output features.
    let x2 = t.leaf(T5::from_shape_vec((1, 3, 1, 1, 1), vec![1.0, 2.0, -1.0]).unwrap());
    let w2 = t.leaf(T5::from_shape_vec((2, 3, 1, 1, 1), vec![0.5, -1.0, 2.0, 1.0, 1.0, 1.0]).unwrap());
    let y2 = t.fc(x2, w2, None).unwrap();
    // [0.5*1 - 1*2 + 2*(-1), 1 + 2 - 1] = [-3.5, 2].
    assert_eq!(t.value(y2).iter().cloned().collect::<Vec<_>>(), vec![-3.5, 2.0]);

    // Zero weights return the bias.
    let w0 = t.leaf(T5::zeros((2, 3, 1, 1, 1)));
    let b = t.leaf(T5::from_shape_vec((1, 2, 1, 1, 1), vec![7.0, -2.0]).unwrap());
    let y3 = t.fc(x2, w0, Some(b)).unwrap();
    assert_eq!(t.value(y3).iter().cloned().collect::<Vec<_>>(), vec![7.0, -2.0]);
}

#[test]
fn concat_add_scale_examples() {
    let mut t = Tape::new();
    let a = t.leaf(T5::zeros((1, 48, 2, 2, 2)));
    let b = t.leaf(T5::zeros((1, 144, 2, 2, 2)));
    let cat = t.concat_channels(&[a, b]).unwrap();
    assert_eq!(t.shape(cat)[1], 192);

    let x = t.leaf(T5::from_elem((1, 2, 2, 1, 1), 3.0));
    let zero = t.leaf(T5::zeros((1, 2, 2, 1, 1)));
    let sum = t.add(x, zero).unwrap();
    assert_eq!(t.value(sum), t.value(x));
    let scaled = t.scale(x, 1.0).unwrap();
    assert_eq!(t.value(scaled), t.value(x));
}

#[test]
fn l1_loss_examples() {
    let mut t = Tape::new();
    let p = t.leaf(T5::from_shape_vec((1, 1, 2, 1, 1), vec![1.0, -1.0]).unwrap());
    let z = t.leaf(T5::zeros((1, 1, 2, 1, 1)));
    let l = t.l1_loss(p, z, None).unwrap();
    assert_eq!(t.scalar(l).unwrap(), 1.0);

    let same = t.l1_loss(p, p, None).unwrap();
    assert_eq!(t.scalar(same).unwrap(), 0.0);

    // Weight 5 at the first of two elements: (5*|e1| + |e2|)/2.
    let w = t.leaf(T5::from_shape_vec((1, 1, 2, 1, 1), vec![5.0, 1.0]).unwrap());
    let lw = t.l1_loss(p, z, Some(w)).unwrap();
    assert_eq!(t.scalar(lw).unwrap(), (5.0 * 1.0 + 1.0) / 2.0);
}

#[test]
fn l2_penalty_value() {
    let mut t = Tape::new();
    let a = t.leaf(T5::from_shape_vec((1, 1, 2, 1, 1), vec![3.0, 4.0]).unwrap());
    let p = t.l2_penalty(&[a], 0.1).unwrap();
    assert!((t.scalar(p).unwrap() - 2.5).abs() < 1e-14);
}

#[test]
fn non_finite_values_trip_numeric_error_when_checked() {
    let mut t = Tape::new().with_finite_checks(true);
    let x = t.leaf(T5::from_elem((1, 1, 1, 1, 1), 8e307));
    let doubled = t.add(x, x);
    assert!(doubled.is_ok()); // 1.6e308 is still finite
    let sq = t.hadamard(x, x); // overflows to inf
    assert!(sq.is_err());
}

#[test]
fn backward_on_non_scalar_rejected() {
    let mut t = Tape::new();
    let x = t.param(T5::zeros((1, 1, 2, 1, 1)));
    assert!(t.backward(x).is_err());
}
