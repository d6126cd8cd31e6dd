//! Convolutional adversarial autoencoder for log-conductivity fields.
//!
//! The encoder maps a single-channel field to latent mean and log-variance
//! maps, the decoder reconstructs the field from a latent sample, and a
//! small convolutional discriminator shapes the latent distribution towards
//! N(0, I) through a two-phase adversarial training loop.

use ndarray::Array4;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocks::{Rrdb, UpConv};
use crate::error::{NetError, Result};
use crate::layer::{BatchNorm3, BindCtx, Conv3, Fc, Init, Mode, Module, Param};
use crate::opt::{apply_grads, Optimizer};
use crate::tape::{conv3_output_dims, Tape, Var, T5};

/// Architecture description; all shape bookkeeping derives from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaaeSpec {
    /// Field resolution (W, H, D) = (nx, ny, nz).
    pub grid_dims: [usize; 3],
    /// Feature width of the convolutional trunk.
    pub base_features: usize,
    /// Channels of the latent maps (mu and log-variance each).
    pub latent_channels: usize,
    /// Dense blocks per residual-in-residual block.
    pub n_db: usize,
    /// Layers per dense block.
    pub n_l: usize,
    /// Dense-layer growth rate inside RRDBs.
    pub growth: usize,
    /// Residual scaling inside RRDBs.
    pub residual_scale: f64,
    /// Weight of the adversarial term in the encoder/decoder loss.
    pub adv_weight: f64,
    /// Discriminator conv widths.
    pub disc_channels: [usize; 3],
    /// Discriminator hidden FC width.
    pub disc_fc: usize,
}

const K3S2P1: ([usize; 3], [usize; 3], [usize; 3]) = ([3, 3, 3], [2, 2, 2], [1, 1, 1]);

impl CaaeSpec {
    pub fn for_grid(grid_dims: [usize; 3]) -> Self {
        Self {
            grid_dims,
            base_features: 48,
            latent_channels: 2,
            n_db: 3,
            n_l: 5,
            growth: 16,
            residual_scale: 0.2,
            adv_weight: 0.01,
            disc_channels: [32, 64, 128],
            disc_fc: 128,
        }
    }

    /// Resolution after the first stride-2 conv.
    pub fn down1(&self) -> [usize; 3] {
        conv3_output_dims(self.grid_dims, K3S2P1.0, K3S2P1.1, K3S2P1.2)
    }

    /// Latent map resolution (two stride-2 convs).
    pub fn latent_res(&self) -> [usize; 3] {
        conv3_output_dims(self.down1(), K3S2P1.0, K3S2P1.1, K3S2P1.2)
    }

    /// Decoder intermediate upsample target: W and H mirror the first
    /// encoder downsampling stage, depth doubles the latent depth.
    pub fn decoder_mid(&self) -> [usize; 3] {
        let d1 = self.down1();
        let lr = self.latent_res();
        [d1[0], d1[1], 2 * lr[2]]
    }

    /// Latent dims as (channels, W, H, D).
    pub fn latent_dims(&self) -> [usize; 4] {
        let r = self.latent_res();
        [self.latent_channels, r[0], r[1], r[2]]
    }

    pub fn latent_len(&self) -> usize {
        self.latent_dims().iter().product()
    }

    fn disc_flat_features(&self) -> usize {
        let mut dims = self.latent_res();
        for _ in 0..3 {
            dims = conv3_output_dims(dims, K3S2P1.0, K3S2P1.1, K3S2P1.2);
        }
        self.disc_channels[2] * dims[0] * dims[1] * dims[2]
    }
}

/// One (label, channels, resolution) entry of a forward shape trace.
pub type TraceRow = (String, usize, [usize; 3]);

fn trace_row(t: &Tape, label: &str, v: Var) -> TraceRow {
    let s = t.shape(v);
    (label.to_string(), s[1], [s[2], s[3], s[4]])
}

pub struct Encoder {
    conv_in: Conv3,
    rrdb: Rrdb,
    mid_bn: BatchNorm3,
    mid_conv: Conv3,
    head_mu: Conv3,
    head_logvar: Conv3,
}

impl Encoder {
    fn new(spec: &CaaeSpec, rng: &mut impl Rng) -> Self {
        let f = spec.base_features;
        let mut head_logvar =
            Conv3::new("enc.logvar", f, spec.latent_channels, 3, [2, 2, 2], [1, 1, 1], Init::XavierNormal, rng);
        // Start with a small latent standard deviation (sigma ~ e^-2) so the
        // reconstruction path is nearly deterministic early in training.
        head_logvar.b.value.fill(-6.0);
        Self {
            conv_in: Conv3::new("enc.conv_in", 1, f, 3, [2, 2, 2], [1, 1, 1], Init::HeNormal, rng),
            rrdb: Rrdb::new("enc.rrdb", f, spec.n_db, spec.n_l, spec.growth, spec.residual_scale, rng),
            mid_bn: BatchNorm3::new("enc.mid.bn", f),
            mid_conv: Conv3::new("enc.mid.conv", f, f, 3, [1, 1, 1], [1, 1, 1], Init::HeNormal, rng),
            head_mu: Conv3::new("enc.mu", f, spec.latent_channels, 3, [2, 2, 2], [1, 1, 1], Init::XavierNormal, rng),
            head_logvar,
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, k: Var, mode: Mode) -> Result<(Var, Var)> {
        Ok(self.forward_traced(t, ctx, k, mode, None)?)
    }

    pub fn forward_traced(
        &self,
        t: &mut Tape,
        ctx: &mut BindCtx,
        k: Var,
        mode: Mode,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<(Var, Var)> {
        let push = |t: &Tape, label: &str, v: Var, tr: &mut Option<&mut Vec<TraceRow>>| {
            if let Some(rows) = tr {
                rows.push(trace_row(t, label, v));
            }
        };
        push(t, "input", k, &mut trace);
        let h = self.conv_in.forward(t, ctx, k)?;
        push(t, "conv", h, &mut trace);
        let h = self.rrdb.forward(t, ctx, h, mode)?;
        push(t, "rrdb", h, &mut trace);
        let h2 = self.mid_bn.forward(t, ctx, h, mode)?;
        let h2 = t.relu(h2)?;
        let h2 = self.mid_conv.forward(t, ctx, h2)?;
        push(t, "bn-relu-conv", h2, &mut trace);
        let mu = self.head_mu.forward(t, ctx, h2)?;
        push(t, "conv-mu", mu, &mut trace);
        let logvar = self.head_logvar.forward(t, ctx, h2)?;
        push(t, "conv-logvar", logvar, &mut trace);
        Ok((mu, logvar))
    }
}

impl Module for Encoder {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.conv_in.for_each_param(f);
        self.rrdb.for_each_param(f);
        self.mid_bn.for_each_param(f);
        self.mid_conv.for_each_param(f);
        self.head_mu.for_each_param(f);
        self.head_logvar.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv_in.for_each_param_mut(f);
        self.rrdb.for_each_param_mut(f);
        self.mid_bn.for_each_param_mut(f);
        self.mid_conv.for_each_param_mut(f);
        self.head_mu.for_each_param_mut(f);
        self.head_logvar.for_each_param_mut(f);
    }
}

pub struct Decoder {
    conv_in: Conv3,
    rrdb1: Rrdb,
    rrdb2: Rrdb,
    up1: UpConv,
    rrdb3: Rrdb,
    up2: UpConv,
}

impl Decoder {
    fn new(spec: &CaaeSpec, rng: &mut impl Rng) -> Self {
        let f = spec.base_features;
        Self {
            conv_in: Conv3::new("dec.conv_in", spec.latent_channels, f, 3, [1, 1, 1], [1, 1, 1], Init::HeNormal, rng),
            rrdb1: Rrdb::new("dec.rrdb1", f, spec.n_db, spec.n_l, spec.growth, spec.residual_scale, rng),
            rrdb2: Rrdb::new("dec.rrdb2", f, spec.n_db, spec.n_l, spec.growth, spec.residual_scale, rng),
            up1: UpConv::new("dec.up1", f, f, spec.decoder_mid(), false, rng),
            rrdb3: Rrdb::new("dec.rrdb3", f, spec.n_db, spec.n_l, spec.growth, spec.residual_scale, rng),
            up2: UpConv::new("dec.up2", f, 1, spec.grid_dims, true, rng),
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, z: Var, mode: Mode) -> Result<Var> {
        self.forward_traced(t, ctx, z, mode, None)
    }

    pub fn forward_traced(
        &self,
        t: &mut Tape,
        ctx: &mut BindCtx,
        z: Var,
        mode: Mode,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<Var> {
        let push = |t: &Tape, label: &str, v: Var, tr: &mut Option<&mut Vec<TraceRow>>| {
            if let Some(rows) = tr {
                rows.push(trace_row(t, label, v));
            }
        };
        push(t, "input", z, &mut trace);
        let h = self.conv_in.forward(t, ctx, z)?;
        push(t, "conv", h, &mut trace);
        let h = self.rrdb1.forward(t, ctx, h, mode)?;
        push(t, "rrdb", h, &mut trace);
        let h = self.rrdb2.forward(t, ctx, h, mode)?;
        push(t, "rrdb", h, &mut trace);
        let h = self.up1.forward(t, ctx, h, mode)?;
        push(t, "bn-relu-up-conv", h, &mut trace);
        let h = self.rrdb3.forward(t, ctx, h, mode)?;
        push(t, "rrdb", h, &mut trace);
        let out = self.up2.forward(t, ctx, h, mode)?;
        push(t, "bn-relu-up-conv", out, &mut trace);
        Ok(out)
    }
}

impl Module for Decoder {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.conv_in.for_each_param(f);
        self.rrdb1.for_each_param(f);
        self.rrdb2.for_each_param(f);
        self.up1.for_each_param(f);
        self.rrdb3.for_each_param(f);
        self.up2.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv_in.for_each_param_mut(f);
        self.rrdb1.for_each_param_mut(f);
        self.rrdb2.for_each_param_mut(f);
        self.up1.for_each_param_mut(f);
        self.rrdb3.for_each_param_mut(f);
        self.up2.for_each_param_mut(f);
    }
}

/// Probability and logit emitted by the discriminator for one batch.
#[derive(Debug, Clone, Copy)]
pub struct DiscOut {
    pub prob: Var,
    pub logit: Var,
}

/// Conv-LeakyReLU stack, FC(128), FC(1), sigmoid; no batch normalization.
pub struct Discriminator {
    convs: Vec<Conv3>,
    fc1: Fc,
    fc2: Fc,
    slope: f64,
}

impl Discriminator {
    fn new(spec: &CaaeSpec, rng: &mut impl Rng) -> Self {
        let cs = spec.disc_channels;
        let convs = vec![
            Conv3::new("disc.c1", spec.latent_channels, cs[0], 3, [2, 2, 2], [1, 1, 1], Init::HeNormal, rng),
            Conv3::new("disc.c2", cs[0], cs[1], 3, [2, 2, 2], [1, 1, 1], Init::HeNormal, rng),
            Conv3::new("disc.c3", cs[1], cs[2], 3, [2, 2, 2], [1, 1, 1], Init::HeNormal, rng),
        ];
        Self {
            convs,
            fc1: Fc::new("disc.fc1", spec.disc_flat_features(), spec.disc_fc, Init::HeNormal, rng),
            fc2: Fc::new("disc.fc2", spec.disc_fc, 1, Init::XavierNormal, rng),
            slope: 0.2,
        }
    }

    /// Binds every parameter once (trainable or frozen) so the stack can be
    /// run on several inputs within one tape.
    pub fn bind(&self, t: &mut Tape, ctx: &mut BindCtx, trainable: bool) -> Vec<Var> {
        let mut vars = Vec::new();
        self.for_each_param(&mut |p| {
            let v = if trainable { ctx.bind(t, p) } else { ctx.bind_frozen(t, p) };
            vars.push(v);
        });
        vars
    }

    /// Runs the stack with pre-bound parameter vars (same order as `bind`).
    /// Returns the sigmoid probability and the pre-sigmoid logit; the
    /// adversarial losses are computed from the logit so their gradients
    /// stay bounded even when the discriminator saturates.
    pub fn run(&self, t: &mut Tape, vars: &[Var], z: Var) -> Result<DiscOut> {
        if vars.len() != 10 {
            return Err(NetError::Shape("discriminator expects 10 bound params".into()));
        }
        let mut h = z;
        for (i, _conv) in self.convs.iter().enumerate() {
            let w = vars[2 * i];
            let b = vars[2 * i + 1];
            h = t.conv3(h, w, Some(b), [2, 2, 2], [1, 1, 1])?;
            h = t.leaky_relu(h, self.slope)?;
        }
        let flat = t.flatten(h)?;
        let h = t.fc(flat, vars[6], Some(vars[7]))?;
        let h = t.leaky_relu(h, self.slope)?;
        let logit = t.fc(h, vars[8], Some(vars[9]))?;
        let prob = t.sigmoid(logit)?;
        Ok(DiscOut { prob, logit })
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, z: Var, trainable: bool) -> Result<DiscOut> {
        let vars = self.bind(t, ctx, trainable);
        self.run(t, &vars, z)
    }
}

impl Module for Discriminator {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        for c in &self.convs {
            c.for_each_param(f);
        }
        self.fc1.for_each_param(f);
        self.fc2.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for c in &mut self.convs {
            c.for_each_param_mut(f);
        }
        self.fc1.for_each_param_mut(f);
        self.fc2.for_each_param_mut(f);
    }
}

pub struct Caae {
    pub spec: CaaeSpec,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub discriminator: Discriminator,
}

impl Caae {
    pub fn new(spec: CaaeSpec, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Self {
            encoder: Encoder::new(&spec, &mut rng),
            decoder: Decoder::new(&spec, &mut rng),
            discriminator: Discriminator::new(&spec, &mut rng),
            spec,
        }
    }

    /// Deterministic eval-mode encoding of a batch of fields `[n,1,w,h,d]`.
    pub fn encode_eval(&self, k: &T5) -> Result<(T5, T5)> {
        let mut t = Tape::new();
        let mut ctx = BindCtx::default();
        let kv = t.leaf(k.clone());
        let (mu, lv) = self.encoder.forward(&mut t, &mut ctx, kv, Mode::Eval)?;
        Ok((t.value(mu).clone(), t.value(lv).clone()))
    }

    /// Deterministic eval-mode decoding of latent samples `[n,c,w,h,d]`.
    pub fn decode_eval(&self, z: &T5) -> Result<T5> {
        let ld = self.spec.latent_dims();
        let zs = z.dim();
        if [zs.1, zs.2, zs.3, zs.4] != ld {
            return Err(NetError::Shape(format!(
                "latent shape {:?} does not match spec {:?}",
                zs, ld
            )));
        }
        let mut t = Tape::new();
        let mut ctx = BindCtx::default();
        let zv = t.leaf(z.clone());
        let out = self.decoder.forward(&mut t, &mut ctx, zv, Mode::Eval)?;
        Ok(t.value(out).clone())
    }
}

/// `z = mu + exp(log_var / 2) * eps` with caller-supplied noise.
pub fn reparameterize(t: &mut Tape, mu: Var, log_var: Var, eps: &T5) -> Result<Var> {
    let half = t.affine(log_var, 0.5, 0.0)?;
    let std = t.exp(half)?;
    let epsv = t.leaf(eps.clone());
    let noise = t.hadamard(std, epsv)?;
    t.add(mu, noise)
}

/// Mean absolute reconstruction error (per element).
pub fn reconstruction_loss(t: &mut Tape, k_hat: Var, k: Var) -> Result<Var> {
    t.l1_loss(k_hat, k, None)
}

/// `-mean ln D(G(k))`, evaluated from the discriminator logit so the value
/// stays finite (the log never reaches the 1e-12 clamp) and the gradient is
/// bounded by 1.
pub fn generator_loss(t: &mut Tape, d_fake: DiscOut) -> Result<Var> {
    let ln = t.ln_sigmoid(d_fake.logit)?;
    let m = t.mean_all(ln)?;
    t.scale(m, -1.0)
}

/// `L_ED = L_rec + w L_G`.
pub fn encoder_decoder_loss(t: &mut Tape, l_rec: Var, l_g: Var, w: f64) -> Result<Var> {
    let weighted = t.scale(l_g, w)?;
    t.add(l_rec, weighted)
}

/// `L_D = -mean[ln D(z) + ln(1 - D(G(k)))]`, from logits.
pub fn discriminator_loss(t: &mut Tape, d_real: DiscOut, d_fake: DiscOut) -> Result<Var> {
    let ln_real = t.ln_sigmoid(d_real.logit)?;
    let m_real = t.mean_all(ln_real)?;
    let ln_fake = t.ln_one_minus_sigmoid(d_fake.logit)?;
    let m_fake = t.mean_all(ln_fake)?;
    let s = t.add(m_real, m_fake)?;
    t.scale(s, -1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaaeEpoch {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_g: f64,
    pub l_d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaaeTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for CaaeTrainConfig {
    fn default() -> Self {
        Self { epochs: 50, lr: 2e-4, batch: 32, seed: 0 }
    }
}

fn batch_tensor(patches: &Array4<f64>, idx: &[usize]) -> T5 {
    let (_, w, h, d) = patches.dim();
    let mut out = T5::zeros((idx.len(), 1, w, h, d));
    for (bi, &pi) in idx.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), bi)
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(&patches.index_axis(ndarray::Axis(0), pi));
    }
    out
}

fn randn_like(dims: (usize, usize, usize, usize, usize), rng: &mut ChaCha12Rng) -> T5 {
    T5::from_shape_simple_fn(dims, || StandardNormal.sample(rng))
}

fn snapshot(caae: &Caae) -> Vec<T5> {
    let mut vals = Vec::new();
    caae.encoder.for_each_param(&mut |p| vals.push(p.value.clone()));
    caae.decoder.for_each_param(&mut |p| vals.push(p.value.clone()));
    caae.discriminator.for_each_param(&mut |p| vals.push(p.value.clone()));
    vals
}

fn restore(caae: &mut Caae, vals: &[T5]) {
    let mut it = vals.iter();
    let mut put = |p: &mut Param| p.value = it.next().expect("snapshot length").clone();
    caae.encoder.for_each_param_mut(&mut put);
    caae.decoder.for_each_param_mut(&mut put);
    caae.discriminator.for_each_param_mut(&mut put);
}

/// Two-phase adversarial training: each batch first updates encoder+decoder
/// on `L_ED = L_rec + w L_G` (Adam), then the discriminator on `L_D` (Adam).
/// A non-finite loss restores the last end-of-epoch weights and aborts.
pub fn train_caae(caae: &mut Caae, patches: &Array4<f64>, cfg: &CaaeTrainConfig) -> Result<Vec<CaaeEpoch>> {
    if patches.dim().0 == 0 {
        return Err(NetError::Shape("training set is empty".into()));
    }
    let n_p = patches.dim().0;
    let w = caae.spec.adv_weight;
    let latent = caae.spec.latent_dims();

    let mut opt_enc = Optimizer::adam(cfg.lr);
    let mut opt_dec = Optimizer::adam(cfg.lr);
    let mut opt_disc = Optimizer::adam(cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut good = snapshot(caae);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n_p).collect();
        let mut shuffle_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9));
        order.shuffle(&mut shuffle_rng);
        let mut noise_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0xabcd ^ (epoch as u64) << 17);

        let mut sums = (0.0f64, 0.0f64, 0.0f64);
        let mut n_batches = 0usize;

        for chunk in order.chunks(cfg.batch.max(2)) {
            if chunk.len() < 2 {
                continue; // batch normalization needs at least two samples
            }
            let k_batch = batch_tensor(patches, chunk);
            let nb = chunk.len();

            // Phase 1: reconstruction + adversarial term for encoder/decoder.
            let mut t = Tape::new();
            let mut ctx_enc = BindCtx::default();
            let mut ctx_dec = BindCtx::default();
            let mut ctx_frozen = BindCtx::default();
            let k = t.leaf(k_batch);
            let (mu, logvar) = caae.encoder.forward(&mut t, &mut ctx_enc, k, Mode::Train)?;
            let eps = randn_like((nb, latent[0], latent[1], latent[2], latent[3]), &mut noise_rng);
            let z = reparameterize(&mut t, mu, logvar, &eps)?;
            let k_hat = caae.decoder.forward(&mut t, &mut ctx_dec, z, Mode::Train)?;
            let l_rec = reconstruction_loss(&mut t, k_hat, k)?;
            let d_fake = caae.discriminator.forward(&mut t, &mut ctx_frozen, z, false)?;
            let l_g = generator_loss(&mut t, d_fake)?;
            let l_ed = encoder_decoder_loss(&mut t, l_rec, l_g, w)?;

            let (rec_v, g_v) = (t.scalar(l_rec)?, t.scalar(l_g)?);
            if !rec_v.is_finite() || !g_v.is_finite() {
                restore(caae, &good);
                return Err(NetError::Numeric(format!(
                    "non-finite loss at epoch {epoch} (l_rec {rec_v}, l_g {g_v}); weights restored to last good epoch"
                )));
            }
            let mut grads = t.backward(l_ed)?;
            let z_detached = t.value(z).clone();
            apply_grads(&mut caae.encoder, &t, &ctx_enc.vars, &mut grads, &mut opt_enc)?;
            apply_grads(&mut caae.decoder, &t, &ctx_dec.vars, &mut grads, &mut opt_dec)?;
            drop(t);

            // Phase 2: discriminator on real prior samples vs detached fakes.
            let mut t2 = Tape::new();
            let mut ctx_disc = BindCtx::default();
            let z_real = randn_like((nb, latent[0], latent[1], latent[2], latent[3]), &mut noise_rng);
            let zr = t2.leaf(z_real);
            let zf = t2.leaf(z_detached);
            let disc_vars = caae.discriminator.bind(&mut t2, &mut ctx_disc, true);
            let d_real = caae.discriminator.run(&mut t2, &disc_vars, zr)?;
            let d_fake2 = caae.discriminator.run(&mut t2, &disc_vars, zf)?;
            let l_d = discriminator_loss(&mut t2, d_real, d_fake2)?;
            let d_v = t2.scalar(l_d)?;
            if !d_v.is_finite() {
                restore(caae, &good);
                return Err(NetError::Numeric(format!(
                    "non-finite discriminator loss at epoch {epoch}; weights restored"
                )));
            }
            let mut grads2 = t2.backward(l_d)?;
            // Both runs share the same bound vars, so gradients from the real
            // and fake halves accumulate onto one var per parameter.
            apply_grads(&mut caae.discriminator, &t2, &ctx_disc.vars, &mut grads2, &mut opt_disc)?;

            sums.0 += rec_v;
            sums.1 += g_v;
            sums.2 += d_v;
            n_batches += 1;
        }

        let nb = n_batches.max(1) as f64;
        history.push(CaaeEpoch {
            epoch,
            l_rec: sums.0 / nb,
            l_g: sums.1 / nb,
            l_d: sums.2 / nb,
        });
        good = snapshot(caae);
    }
    Ok(history)
}
