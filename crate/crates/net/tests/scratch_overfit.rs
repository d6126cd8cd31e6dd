use gwinv_net::caae::{train_caae, Caae, CaaeSpec, CaaeTrainConfig};
use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
#[ignore]
fn sweep() {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let one = ndarray::Array3::from_shape_simple_fn((12, 8, 4), || {
        let v: f64 = StandardNormal.sample(&mut rng);
        if v > 0.2 { 4.0 } else { 0.0 }
    });
    let mut patches = Array4::zeros((2, 12, 8, 4));
    patches.index_axis_mut(ndarray::Axis(0), 0).assign(&one);
    patches.index_axis_mut(ndarray::Axis(0), 1).assign(&one);

    for (lr, epochs, w, lvb) in [(5e-3, 800usize, 0.01, -12.0), (1e-2, 800, 0.01, -6.0)] {
        let mut spec = CaaeSpec::for_grid([12, 8, 4]); spec.adv_weight = w;
        let _ = lvb;
        let mut caae = Caae::new(spec, 6);
        use gwinv_net::Module;
        caae.encoder.for_each_param_mut(&mut |p| { if p.name == "enc.logvar.b" { p.value.fill(lvb); } });
        let cfg = CaaeTrainConfig { epochs, lr, batch: 2, seed: 42 };
        let h = train_caae(&mut caae, &patches, &cfg).unwrap();
        let drops: Vec<String> = h.iter().step_by(25).map(|e| format!("{:.3}", e.l_rec)).collect();
        println!("lr={lr} epochs={epochs} w={w} lvb={lvb}: {} ... final {:.4} (l_g final {:.3}, l_d final {:.3})", drops.join(" "), h.last().unwrap().l_rec, h.last().unwrap().l_g, h.last().unwrap().l_d);
    }
}
