//! Analytic values of the adversarial losses, the reparameterization
//! contract, and gradient flow through one full training step.

use gwinv_net::caae::{
    discriminator_loss, encoder_decoder_loss, generator_loss, reconstruction_loss, reparameterize,
    train_caae, Caae, CaaeSpec, CaaeTrainConfig,
};
use gwinv_net::{BindCtx, Mode, Module, Tape, T5};
use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

const LN2: f64 = std::f64::consts::LN_2;

/// A discriminator with zeroed final layer outputs sigmoid(0) = 0.5 exactly,
/// giving L_G = ln 2 and L_D = 2 ln 2.
#[test]
fn loss_values_at_indifferent_discriminator() {
    let spec = CaaeSpec::for_grid([20, 12, 4]);
    let w = spec.adv_weight;
    let mut caae = Caae::new(spec, 1);
    caae.discriminator.for_each_param_mut(&mut |p| {
        if p.name.starts_with("disc.fc2") {
            p.value.fill(0.0);
        }
    });

    let ld = caae.spec.latent_dims();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let z_fake = T5::from_shape_simple_fn((3, ld[0], ld[1], ld[2], ld[3]), || {
        StandardNormal.sample(&mut rng)
    });
    let z_real = T5::from_shape_simple_fn((3, ld[0], ld[1], ld[2], ld[3]), || {
        StandardNormal.sample(&mut rng)
    });

    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let zf = t.leaf(z_fake);
    let zr = t.leaf(z_real);
    let vars = caae.discriminator.bind(&mut t, &mut ctx, false);
    let d_fake = caae.discriminator.run(&mut t, &vars, zf).unwrap();
    let d_real = caae.discriminator.run(&mut t, &vars, zr).unwrap();
    assert!(t.value(d_fake.prob).iter().all(|&p| (p - 0.5).abs() < 1e-15));

    let l_g = generator_loss(&mut t, d_fake).unwrap();
    assert!((t.scalar(l_g).unwrap() - LN2).abs() < 1e-12);

    let l_d = discriminator_loss(&mut t, d_real, d_fake).unwrap();
    assert!((t.scalar(l_d).unwrap() - 2.0 * LN2).abs() < 1e-12);

    // Perfect reconstruction: L_rec = 0 and L_ED = w * ln 2.
    let k = t.leaf(T5::from_elem((3, 1, 4, 4, 2), 1.25));
    let l_rec = reconstruction_loss(&mut t, k, k).unwrap();
    assert_eq!(t.scalar(l_rec).unwrap(), 0.0);
    let l_ed = encoder_decoder_loss(&mut t, l_rec, l_g, w).unwrap();
    assert!((t.scalar(l_ed).unwrap() - w * LN2).abs() < 1e-14);
}

#[test]
fn discriminator_output_is_a_probability() {
    let spec = CaaeSpec::for_grid([20, 12, 4]);
    let caae = Caae::new(spec, 9);
    let ld = caae.spec.latent_dims();
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let z = T5::from_shape_simple_fn((8, ld[0], ld[1], ld[2], ld[3]), || {
        let v: f64 = StandardNormal.sample(&mut rng);
        3.0 * v
    });
    let mut t = Tape::new();
    let mut ctx = BindCtx::default();
    let zv = t.leaf(z);
    let d = caae.discriminator.forward(&mut t, &mut ctx, zv, false).unwrap();
    assert_eq!(t.shape(d.prob), [8, 1, 1, 1, 1]);
    assert!(t.value(d.prob).iter().all(|&p| p.is_finite() && p > 0.0 && p < 1.0));
}

#[test]
fn reparameterize_contract() {
    let mut t = Tape::new();
    let mu = t.leaf(T5::from_elem((1, 2, 2, 1, 1), 1.5));
    let lv = t.leaf(T5::zeros((1, 2, 2, 1, 1)));

    // eps = 0 gives z = mu.
    let z0 = reparameterize(&mut t, mu, lv, &T5::zeros((1, 2, 2, 1, 1))).unwrap();
    assert!(t.value(z0).iter().all(|&v| (v - 1.5).abs() < 1e-15));

    // log_var = 0, eps = 1 gives z = mu + 1.
    let z1 = reparameterize(&mut t, mu, lv, &T5::from_elem((1, 2, 2, 1, 1), 1.0)).unwrap();
    assert!(t.value(z1).iter().all(|&v| (v - 2.5).abs() < 1e-15));
}

#[test]
fn reparameterize_sample_variance_matches_log_var() {
    // Monte Carlo: Var(z) ~= exp(log_var) within 5% at 10^4 draws.
    let n = 10_000;
    let log_var = 0.6f64;
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let mut t = Tape::new();
    let mu = t.leaf(T5::zeros((n, 1, 1, 1, 1)));
    let lv = t.leaf(T5::from_elem((n, 1, 1, 1, 1), log_var));
    let eps = T5::from_shape_simple_fn((n, 1, 1, 1, 1), || StandardNormal.sample(&mut rng));
    let z = reparameterize(&mut t, mu, lv, &eps).unwrap();
    let vals: Vec<f64> = t.value(z).iter().cloned().collect();
    let mean: f64 = vals.iter().sum::<f64>() / n as f64;
    let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let expected = log_var.exp();
    assert!((var - expected).abs() < 0.05 * expected, "var {var} vs {expected}");
}

/// One full two-phase step on a tiny net: all encoder, decoder and
/// discriminator parameters receive gradients (no dead subgraphs), and the
/// parameters actually move.
#[test]
fn one_training_step_reaches_every_parameter() {
    let spec = CaaeSpec::for_grid([12, 8, 4]);
    let mut caae = Caae::new(spec, 4);
    let before: Vec<T5> = {
        let mut v = Vec::new();
        caae.encoder.for_each_param(&mut |p| v.push(p.value.clone()));
        v
    };

    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let patches = Array4::from_shape_simple_fn((4, 12, 8, 4), || {
        let v: f64 = StandardNormal.sample(&mut rng);
        if v > 0.0 {
            4.0
        } else {
            0.0
        }
    });
    let cfg = CaaeTrainConfig { epochs: 1, lr: 1e-3, batch: 4, seed: 10 };
    // train_caae errors out if any bound parameter misses its gradient.
    let history = train_caae(&mut caae, &patches, &cfg).unwrap();
    assert_eq!(history.len(), 1);
    assert!(history[0].l_rec.is_finite());

    let mut moved = false;
    let mut idx = 0;
    caae.encoder.for_each_param(&mut |p| {
        if p.value != before[idx] {
            moved = true;
        }
        idx += 1;
    });
    assert!(moved, "encoder parameters did not change");
}

/// Two identical samples (the smallest batch normalization allows) overfit
/// quickly: reconstruction MAE drops below 0.05 within 200 steps.
#[test]
fn tiny_dataset_overfits() {
    let spec = CaaeSpec::for_grid([12, 8, 4]);
    let mut caae = Caae::new(spec, 6);
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let one = ndarray::Array3::from_shape_simple_fn((12, 8, 4), || {
        let v: f64 = StandardNormal.sample(&mut rng);
        if v > 0.2 {
            4.0
        } else {
            0.0
        }
    });
    let mut patches = Array4::zeros((2, 12, 8, 4));
    patches.index_axis_mut(ndarray::Axis(0), 0).assign(&one);
    patches.index_axis_mut(ndarray::Axis(0), 1).assign(&one);

    let cfg = CaaeTrainConfig { epochs: 200, lr: 2e-3, batch: 2, seed: 42 };
    let history = train_caae(&mut caae, &patches, &cfg).unwrap();
    let last = history.last().unwrap();
    assert!(
        last.l_rec < 0.05,
        "overfit reconstruction MAE {} after {} epochs",
        last.l_rec,
        history.len()
    );
}
