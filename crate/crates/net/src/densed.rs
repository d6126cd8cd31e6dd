//! Dense convolutional encoder-decoder surrogate of the flow-and-transport
//! forward model: three channels in (concentration, source loading, lnK),
//! two channels out (next concentration, head), applied autoregressively.

use ndarray::{s, Array3};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{Decoding, DenseBlock, Encoding};
use crate::caae::TraceRow;
use crate::error::{NetError, Result};
use crate::layer::{BindCtx, Conv3, Init, Mode, Module, Param};
use crate::opt::{apply_grads, Optimizer};
use crate::tape::{conv3_output_dims, Tape, Var, T5};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEdSpec {
    pub grid_dims: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
    /// Features after the initial stride-2 conv.
    pub init_features: usize,
    /// Dense-layer growth rate.
    pub growth: usize,
    /// Internal layers of the three dense blocks.
    pub block_layers: [usize; 3],
}

impl DenseEdSpec {
    pub fn for_grid(grid_dims: [usize; 3]) -> Self {
        Self {
            grid_dims,
            in_channels: 3,
            out_channels: 2,
            init_features: 48,
            growth: 48,
            block_layers: [3, 6, 3],
        }
    }

    /// Resolution after the initial conv (and of dense blocks 1 and 3).
    pub fn mid_res(&self) -> [usize; 3] {
        conv3_output_dims(self.grid_dims, [3; 3], [2; 3], [1; 3])
    }

    /// Coarsest resolution (dense block 2).
    pub fn coarse_res(&self) -> [usize; 3] {
        conv3_output_dims(self.mid_res(), [3; 3], [2; 3], [1; 3])
    }

    /// Channel trace (after conv, DB1, encoding, DB2, decoding 1, DB3,
    /// decoding 2).
    pub fn channel_trace(&self) -> [usize; 7] {
        let f = self.init_features;
        let c1 = f + self.block_layers[0] * self.growth;
        let c_enc = c1 / 2;
        let c2 = c_enc + self.block_layers[1] * self.growth;
        let c_dec1 = c2 / 2;
        let c3 = c_dec1 + self.block_layers[2] * self.growth;
        [f, c1, c_enc, c2, c_dec1, c3, self.out_channels]
    }

    fn out_pad(target: [usize; 3], source: [usize; 3]) -> [usize; 3] {
        let mut op = [0usize; 3];
        for ax in 0..3 {
            op[ax] = target[ax] - ((source[ax] - 1) * 2 + 3 - 2);
        }
        op
    }
}

pub struct DenseEd {
    pub spec: DenseEdSpec,
    conv_in: Conv3,
    db1: DenseBlock,
    enc: Encoding,
    db2: DenseBlock,
    dec1: Decoding,
    db3: DenseBlock,
    dec2: Decoding,
}

impl DenseEd {
    pub fn new(spec: DenseEdSpec, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Self::with_rng(spec, &mut rng)
    }

    fn with_rng(spec: DenseEdSpec, rng: &mut impl Rng) -> Self {
        let ch = spec.channel_trace();
        let mid = spec.mid_res();
        let coarse = spec.coarse_res();
        let op1 = DenseEdSpec::out_pad(mid, coarse);
        let op2 = DenseEdSpec::out_pad(spec.grid_dims, mid);
        Self {
            conv_in: Conv3::new("sur.conv_in", spec.in_channels, ch[0], 3, [2; 3], [1; 3], Init::HeNormal, rng),
            db1: DenseBlock::new("sur.db1", ch[0], spec.block_layers[0], spec.growth, rng),
            enc: Encoding::new("sur.enc", ch[1], rng),
            db2: DenseBlock::new("sur.db2", ch[2], spec.block_layers[1], spec.growth, rng),
            dec1: Decoding::new("sur.dec1", ch[3], ch[4], op1, false, rng),
            db3: DenseBlock::new("sur.db3", ch[4], spec.block_layers[2], spec.growth, rng),
            dec2: Decoding::new("sur.dec2", ch[5], spec.out_channels, op2, true, rng),
            spec,
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        self.forward_traced(t, ctx, x, mode, None)
    }

    pub fn forward_traced(
        &self,
        t: &mut Tape,
        ctx: &mut BindCtx,
        x: Var,
        mode: Mode,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<Var> {
        let push = |t: &Tape, label: &str, v: Var, tr: &mut Option<&mut Vec<TraceRow>>| {
            if let Some(rows) = tr {
                let sh = t.shape(v);
                rows.push((label.to_string(), sh[1], [sh[2], sh[3], sh[4]]));
            }
        };
        push(t, "input", x, &mut trace);
        let h = self.conv_in.forward(t, ctx, x)?;
        push(t, "conv", h, &mut trace);
        let h = self.db1.forward(t, ctx, h, mode)?;
        push(t, "dense-block-1", h, &mut trace);
        let h = self.enc.forward(t, ctx, h, mode)?;
        push(t, "encoding", h, &mut trace);
        let h = self.db2.forward(t, ctx, h, mode)?;
        push(t, "dense-block-2", h, &mut trace);
        let h = self.dec1.forward(t, ctx, h, mode)?;
        push(t, "decoding-1", h, &mut trace);
        let h = self.db3.forward(t, ctx, h, mode)?;
        push(t, "dense-block-3", h, &mut trace);
        let out = self.dec2.forward(t, ctx, h, mode)?;
        push(t, "decoding-2", out, &mut trace);
        Ok(out)
    }

    /// Eval-mode forward on a plain tensor (no gradients).
    pub fn predict(&self, x: &T5) -> Result<T5> {
        let mut t = Tape::new();
        let mut ctx = BindCtx::default();
        let xv = t.leaf(x.clone());
        let y = self.forward(&mut t, &mut ctx, xv, Mode::Eval)?;
        Ok(t.value(y).clone())
    }
}

impl Module for DenseEd {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.conv_in.for_each_param(f);
        self.db1.for_each_param(f);
        self.enc.for_each_param(f);
        self.db2.for_each_param(f);
        self.dec1.for_each_param(f);
        self.db3.for_each_param(f);
        self.dec2.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv_in.for_each_param_mut(f);
        self.db1.for_each_param_mut(f);
        self.enc.for_each_param_mut(f);
        self.db2.for_each_param_mut(f);
        self.dec1.for_each_param_mut(f);
        self.db3.for_each_param_mut(f);
        self.dec2.for_each_param_mut(f);
    }
}

/// Channel scaling constants shared by dataset construction, training and
/// rollout; stored in the checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    /// Concentration scale (g/m³); the prior strength upper bound.
    pub c_ref: f64,
    /// Source-channel scale (g/(m³ d)); `q_s * c_ref` so the normalized
    /// channel spans the same [0, 1] range as the strengths.
    pub s_ref: f64,
    /// Log-conductivity standardization from the training set.
    pub lnk_mean: f64,
    pub lnk_std: f64,
    /// Head scale (m).
    pub h_ref: f64,
    /// Autoregressive step (d); rollouts must match it.
    pub dt_days: f64,
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_ref > 0.0 && self.s_ref > 0.0 && self.h_ref > 0.0 && self.lnk_std > 0.0 && self.dt_days > 0.0) {
            return Err(NetError::Shape("normalization scales must be positive".into()));
        }
        Ok(())
    }
}

/// Per-cell loss weights: 1 everywhere, `1 + boost` at the source cell, its
/// 26 neighbors and every sensor cell.
pub fn build_loss_mask(
    dims: [usize; 3],
    source_cell: [usize; 3],
    sensors: &[[usize; 3]],
    boost: f64,
) -> Array3<f64> {
    let mut mask = Array3::<f64>::ones((dims[0], dims[1], dims[2]));
    let w = 1.0 + boost;
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            for dk in -1i64..=1 {
                let i = source_cell[0] as i64 + di;
                let j = source_cell[1] as i64 + dj;
                let k = source_cell[2] as i64 + dk;
                if i >= 0 && j >= 0 && k >= 0 && (i as usize) < dims[0] && (j as usize) < dims[1] && (k as usize) < dims[2] {
                    mask[[i as usize, j as usize, k as usize]] = w;
                }
            }
        }
    }
    for sc in sensors {
        mask[[sc[0], sc[1], sc[2]]] = w;
    }
    mask
}

/// Normalized autoregressive training pairs.
pub struct SurrogateDataset {
    /// `[p, 3, w, h, d]`
    pub inputs: T5,
    /// `[p, 2, w, h, d]`
    pub targets: T5,
    /// `[p, 1, w, h, d]` loss weights (>= 1)
    pub weights: T5,
}

impl SurrogateDataset {
    pub fn len(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// L2 weight-regularization factor on conv weights.
    pub lambda: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SurrogateTrainConfig {
    fn default() -> Self {
        Self { epochs: 200, lr: 5e-3, momentum: 0.9, lambda: 1e-5, batch: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

fn gather_batch(data: &T5, idx: &[usize]) -> T5 {
    let (_, c, w, h, d) = data.dim();
    let mut out = T5::zeros((idx.len(), c, w, h, d));
    for (bi, &pi) in idx.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), bi)
            .assign(&data.index_axis(ndarray::Axis(0), pi));
    }
    out
}

/// Indices of `.w` weight vars within a bind order (biases and BN affines
/// are excluded from the L2 penalty).
fn weight_vars(module: &dyn Module, vars: &[Var]) -> Vec<Var> {
    let mut out = Vec::new();
    let mut idx = 0usize;
    module.for_each_param(&mut |p| {
        if p.name.ends_with(".w") {
            out.push(vars[idx]);
        }
        idx += 1;
    });
    out
}

/// Replicates the 1-channel weight mask across the output channels.
fn expand_mask(weights: &T5, channels: usize) -> T5 {
    let (n, _, w, h, d) = weights.dim();
    let mut out = T5::zeros((n, channels, w, h, d));
    for c in 0..channels {
        out.slice_mut(s![.., c..c + 1, .., .., ..]).assign(weights);
    }
    out
}

fn eval_rmse(net: &DenseEd, ds: &SurrogateDataset, batch: usize) -> Result<f64> {
    let n = ds.len();
    let mut sq_sum = 0.0f64;
    let mut count = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = gather_batch(&ds.inputs, &idx);
        let y = gather_batch(&ds.targets, &idx);
        let pred = net.predict(&x)?;
        sq_sum += pred
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += pred.len();
        start = end;
    }
    Ok((sq_sum / count.max(1) as f64).sqrt())
}

/// Momentum-SGD training on the weighted L1 loss plus L2 weight penalty,
/// with cosine learning-rate decay from `lr` to `lr/10`.
pub fn train_surrogate(
    net: &mut DenseEd,
    train: &SurrogateDataset,
    test: &SurrogateDataset,
    cfg: &SurrogateTrainConfig,
) -> Result<Vec<SurrogateEpoch>> {
    if train.is_empty() {
        return Err(NetError::Shape("training set is empty".into()));
    }
    let n = train.len();
    let out_c = net.spec.out_channels;
    let mut opt = Optimizer::sgd(cfg.lr, cfg.momentum);
    let mut history = Vec::with_capacity(cfg.epochs);
    let lr_min = cfg.lr / 10.0;

    for epoch in 0..cfg.epochs {
        let span = (cfg.epochs.max(2) - 1) as f64;
        let lr = lr_min + 0.5 * (cfg.lr - lr_min) * (1.0 + (std::f64::consts::PI * epoch as f64 / span).cos());
        opt.set_lr(lr);

        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x2545_f491));
        order.shuffle(&mut rng);

        let mut sq_sum = 0.0f64;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch.max(2)) {
            if chunk.len() < 2 {
                continue;
            }
            let x = gather_batch(&train.inputs, chunk);
            let y = gather_batch(&train.targets, chunk);
            let wmask = expand_mask(&gather_batch(&train.weights, chunk), out_c);

            let mut t = Tape::new();
            let mut ctx = BindCtx::default();
            let xv = t.leaf(x);
            let yv = t.leaf(y);
            let wv = t.leaf(wmask);
            let pred = net.forward(&mut t, &mut ctx, xv, Mode::Train)?;
            let data_loss = t.l1_loss(pred, yv, Some(wv))?;
            let wvars = weight_vars(net, &ctx.vars);
            let reg = t.l2_penalty(&wvars, cfg.lambda)?;
            let loss = t.add(data_loss, reg)?;

            let loss_v = t.scalar(loss)?;
            if !loss_v.is_finite() {
                return Err(NetError::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            sq_sum += t
                .value(pred)
                .iter()
                .zip(t.value(yv).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            count += t.value(pred).len();

            let mut grads = t.backward(loss)?;
            apply_grads(net, &t, &ctx.vars, &mut grads, &mut opt)?;
        }

        let train_rmse = (sq_sum / count.max(1) as f64).sqrt();
        let test_rmse = if test.is_empty() { f64::NAN } else { eval_rmse(net, test, cfg.batch.max(2))? };
        history.push(SurrogateEpoch { epoch, lr, train_rmse, test_rmse });
    }
    Ok(history)
}

/// Autoregressive rollout in normalized units: starts from zero
/// concentration, feeds each predicted concentration back in (clamped at 0),
/// and reports the head channel from the first step. Inputs are the
/// normalized lnK map and one normalized source channel per step.
pub fn rollout(net: &DenseEd, lnk_norm: &T5, sources_norm: &[T5]) -> Result<(Vec<T5>, T5)> {
    let dims = net.spec.grid_dims;
    let expect = (1usize, 1usize, dims[0], dims[1], dims[2]);
    if lnk_norm.dim() != expect {
        return Err(NetError::Shape(format!(
            "lnK map must be {expect:?}, got {:?}",
            lnk_norm.dim()
        )));
    }
    let mut c = T5::zeros(expect);
    let mut head: Option<T5> = None;
    let mut snapshots = Vec::with_capacity(sources_norm.len());
    for src in sources_norm {
        if src.dim() != expect {
            return Err(NetError::Shape("source channel shape mismatch".into()));
        }
        let mut x = T5::zeros((1, 3, dims[0], dims[1], dims[2]));
        x.slice_mut(s![.., 0..1, .., .., ..]).assign(&c);
        x.slice_mut(s![.., 1..2, .., .., ..]).assign(src);
        x.slice_mut(s![.., 2..3, .., .., ..]).assign(lnk_norm);
        let y = net.predict(&x)?;
        c = y.slice(s![.., 0..1, .., .., ..]).to_owned().mapv(|v| v.max(0.0));
        if head.is_none() {
            head = Some(y.slice(s![.., 1..2, .., .., ..]).to_owned());
        }
        snapshots.push(c.clone());
    }
    Ok((snapshots, head.expect("at least one step")))
}
