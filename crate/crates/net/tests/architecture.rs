//! Shape conformance of the CAAE and DenseED forward passes at the reference
//! (81 x 41 x 6) resolution and the smaller desk resolution, traced from
//! real forward passes rather than from a separate calculator.

use gwinv_net::caae::{Caae, CaaeSpec};
use gwinv_net::densed::{DenseEd, DenseEdSpec};
use gwinv_net::{BindCtx, Mode, Module, Tape, T5};

fn encoder_trace(caae: &Caae, dims: [usize; 3]) -> Vec<(String, usize, [usize; 3])> {
    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let x = t.leaf(T5::zeros((1, 1, dims[0], dims[1], dims[2])));
    let mut rows = Vec::new();
    caae.encoder
        .forward_traced(&mut t, &mut ctx, x, Mode::Eval, Some(&mut rows))
        .unwrap();
    rows
}

fn decoder_trace(caae: &Caae) -> Vec<(String, usize, [usize; 3])> {
    let ld = caae.spec.latent_dims();
    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let z = t.leaf(T5::zeros((1, ld[0], ld[1], ld[2], ld[3])));
    let mut rows = Vec::new();
    caae.decoder
        .forward_traced(&mut t, &mut ctx, z, Mode::Eval, Some(&mut rows))
        .unwrap();
    rows
}

#[test]
fn caae_encoder_matches_reference_table() {
    let spec = CaaeSpec::for_grid([81, 41, 6]);
    let caae = Caae::new(spec, 7);
    let rows = encoder_trace(&caae, [81, 41, 6]);
    let expected: Vec<(&str, usize, [usize; 3])> = vec![
        ("input", 1, [81, 41, 6]),
        ("conv", 48, [41, 21, 3]),
        ("rrdb", 48, [41, 21, 3]),
        ("bn-relu-conv", 48, [41, 21, 3]),
        ("conv-mu", 2, [21, 11, 2]),
        ("conv-logvar", 2, [21, 11, 2]),
    ];
    assert_eq!(rows.len(), expected.len());
    for (got, want) in rows.iter().zip(&expected) {
        assert_eq!(got.0, want.0);
        assert_eq!((got.1, got.2), (want.1, want.2), "row {}", want.0);
    }
    // Latent size 2*21*11*2 = 924.
    assert_eq!(caae.spec.latent_len(), 924);
}

#[test]
fn caae_decoder_matches_reference_table() {
    let spec = CaaeSpec::for_grid([81, 41, 6]);
    let caae = Caae::new(spec, 7);
    let rows = decoder_trace(&caae);
    let expected: Vec<(&str, usize, [usize; 3])> = vec![
        ("input", 2, [21, 11, 2]),
        ("conv", 48, [21, 11, 2]),
        ("rrdb", 48, [21, 11, 2]),
        ("rrdb", 48, [21, 11, 2]),
        ("bn-relu-up-conv", 48, [41, 21, 4]),
        ("rrdb", 48, [41, 21, 4]),
        ("bn-relu-up-conv", 1, [81, 41, 6]),
    ];
    assert_eq!(rows.len(), expected.len());
    for (got, want) in rows.iter().zip(&expected) {
        assert_eq!(got.0, want.0);
        assert_eq!((got.1, got.2), (want.1, want.2), "row {}", want.0);
    }
}

#[test]
fn caae_desk_scale_shapes() {
    let spec = CaaeSpec::for_grid([40, 20, 4]);
    assert_eq!(spec.latent_res(), [10, 5, 1]);
    assert_eq!(spec.latent_len(), 100);
    assert_eq!(spec.decoder_mid(), [20, 10, 2]);
    let caae = Caae::new(spec, 3);
    let rows = encoder_trace(&caae, [40, 20, 4]);
    assert_eq!(rows.last().unwrap().1, 2);
    assert_eq!(rows.last().unwrap().2, [10, 5, 1]);
    let drows = decoder_trace(&caae);
    assert_eq!(drows.last().unwrap().1, 1);
    assert_eq!(drows.last().unwrap().2, [40, 20, 4]);
}

#[test]
fn encoder_is_deterministic() {
    let caae = Caae::new(CaaeSpec::for_grid([20, 12, 4]), 11);
    let x = T5::from_shape_simple_fn((1, 1, 20, 12, 4), || 0.7);
    let (mu1, lv1) = caae.encode_eval(&x).unwrap();
    let (mu2, lv2) = caae.encode_eval(&x).unwrap();
    assert_eq!(mu1, mu2);
    assert_eq!(lv1, lv2);
    let ld = caae.spec.latent_dims();
    let z = T5::zeros((1, ld[0], ld[1], ld[2], ld[3]));
    let k1 = caae.decode_eval(&z).unwrap();
    let k2 = caae.decode_eval(&z).unwrap();
    assert_eq!(k1, k2);
    assert!(k1.iter().all(|v| v.is_finite()));
}

#[test]
fn densed_matches_reference_table() {
    let spec = DenseEdSpec::for_grid([81, 41, 6]);
    assert_eq!(spec.channel_trace(), [48, 192, 96, 384, 192, 336, 2]);
    let net = DenseEd::new(spec, 5);
    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let x = t.leaf(T5::zeros((1, 3, 81, 41, 6)));
    let mut rows = Vec::new();
    net.forward_traced(&mut t, &mut ctx, x, Mode::Eval, Some(&mut rows))
        .unwrap();
    let expected: Vec<(&str, usize, [usize; 3])> = vec![
        ("input", 3, [81, 41, 6]),
        ("conv", 48, [41, 21, 3]),
        ("dense-block-1", 192, [41, 21, 3]),
        ("encoding", 96, [21, 11, 2]),
        ("dense-block-2", 384, [21, 11, 2]),
        ("decoding-1", 192, [41, 21, 3]),
        ("dense-block-3", 336, [41, 21, 3]),
        ("decoding-2", 2, [81, 41, 6]),
    ];
    assert_eq!(rows.len(), expected.len());
    for (got, want) in rows.iter().zip(&expected) {
        assert_eq!(got.0, want.0);
        assert_eq!((got.1, got.2), (want.1, want.2), "row {}", want.0);
    }
}

#[test]
fn densed_dense_block_concat_arithmetic() {
    // 48 + 3*48 = 192; 96 + 6*48 = 384; 192 + 3*48 = 336.
    assert_eq!(48 + 3 * 48, 192);
    assert_eq!(96 + 6 * 48, 384);
    assert_eq!(192 + 3 * 48, 336);
    let spec = DenseEdSpec::for_grid([40, 20, 4]);
    assert_eq!(spec.channel_trace(), [48, 192, 96, 384, 192, 336, 2]);
    assert_eq!(spec.mid_res(), [20, 10, 2]);
    assert_eq!(spec.coarse_res(), [10, 5, 1]);
}

#[test]
fn densed_desk_forward_shape() {
    let spec = DenseEdSpec::for_grid([40, 20, 4]);
    let net = DenseEd::new(spec, 1);
    let x = T5::zeros((2, 3, 40, 20, 4));
    let y = net.predict(&x).unwrap();
    assert_eq!(y.dim(), (2, 2, 40, 20, 4));
    // Parameter census stays modest and every parameter is registered.
    assert!(net.param_count() > 40);
}
