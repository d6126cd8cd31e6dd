//! Composite blocks shared by the autoencoder and the surrogate: dense
//! blocks (BN-ReLU-Conv layers with channel concatenation), residual-in-
//! residual dense blocks, and the coarsen/refine transition layers.

use rand::Rng;

use crate::error::Result;
use crate::layer::{BatchNorm3, BindCtx, Conv3, Init, Mode, Module, Param, TConv3};
use crate::tape::{Tape, Var};

/// Dense block: `N_l` layers of BN-ReLU-Conv(k3, s1, p1) producing `growth`
/// channels each, concatenated onto the running feature stack. Output
/// channels: `c_in + n_l * growth`.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    bns: Vec<BatchNorm3>,
    convs: Vec<Conv3>,
}

impl DenseBlock {
    pub fn new(name: &str, c_in: usize, n_l: usize, growth: usize, rng: &mut impl Rng) -> Self {
        let mut bns = Vec::with_capacity(n_l);
        let mut convs = Vec::with_capacity(n_l);
        for i in 0..n_l {
            let c = c_in + i * growth;
            bns.push(BatchNorm3::new(&format!("{name}.l{i}.bn"), c));
            convs.push(Conv3::new(
                &format!("{name}.l{i}.conv"),
                c,
                growth,
                3,
                [1, 1, 1],
                [1, 1, 1],
                Init::HeNormal,
                rng,
            ));
        }
        Self { bns, convs }
    }

    pub fn out_channels(&self, c_in: usize) -> usize {
        c_in + self.convs.len() * self.convs[0].w.value.dim().0
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let mut stack = x;
        for (bn, conv) in self.bns.iter().zip(&self.convs) {
            let h = bn.forward(t, ctx, stack, mode)?;
            let h = t.relu(h)?;
            let h = conv.forward(t, ctx, h)?;
            stack = t.concat_channels(&[stack, h])?;
        }
        Ok(stack)
    }
}

impl Module for DenseBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        for (bn, conv) in self.bns.iter().zip(&self.convs) {
            bn.for_each_param(f);
            conv.for_each_param(f);
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (bn, conv) in self.bns.iter_mut().zip(&mut self.convs) {
            bn.for_each_param_mut(f);
            conv.for_each_param_mut(f);
        }
    }
}

/// Dense block plus a 1x1 local-fusion conv back to the block width and a
/// scaled residual connection.
#[derive(Debug, Clone)]
pub struct ResidualDenseBlock {
    dense: DenseBlock,
    fusion: Conv3,
    scale: f64,
}

impl ResidualDenseBlock {
    pub fn new(name: &str, c: usize, n_l: usize, growth: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let dense = DenseBlock::new(&format!("{name}.db"), c, n_l, growth, rng);
        let fusion = Conv3::new(
            &format!("{name}.fuse"),
            c + n_l * growth,
            c,
            1,
            [1, 1, 1],
            [0, 0, 0],
            Init::HeNormal,
            rng,
        );
        Self { dense, fusion, scale }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let stack = self.dense.forward(t, ctx, x, mode)?;
        let fused = self.fusion.forward(t, ctx, stack)?;
        let scaled = t.scale(fused, self.scale)?;
        t.add(x, scaled)
    }
}

impl Module for ResidualDenseBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.dense.for_each_param(f);
        self.fusion.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.dense.for_each_param_mut(f);
        self.fusion.for_each_param_mut(f);
    }
}

/// Residual-in-residual dense block: `n_db` residual dense blocks chained,
/// with an outer scaled residual. Channel count is preserved.
#[derive(Debug, Clone)]
pub struct Rrdb {
    blocks: Vec<ResidualDenseBlock>,
    scale: f64,
}

impl Rrdb {
    pub fn new(
        name: &str,
        c: usize,
        n_db: usize,
        n_l: usize,
        growth: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let blocks = (0..n_db)
            .map(|i| ResidualDenseBlock::new(&format!("{name}.rdb{i}"), c, n_l, growth, scale, rng))
            .collect();
        Self { blocks, scale }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(t, ctx, h, mode)?;
        }
        let scaled = t.scale(h, self.scale)?;
        t.add(x, scaled)
    }
}

impl Module for Rrdb {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        for b in &self.blocks {
            b.for_each_param(f);
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.blocks {
            b.for_each_param_mut(f);
        }
    }
}

/// Encoding transition: BN-ReLU-Conv(1x1, halve channels) then
/// Conv(k3, s2, p1) halving the spatial size.
#[derive(Debug, Clone)]
pub struct Encoding {
    bn: BatchNorm3,
    squeeze: Conv3,
    down: Conv3,
}

impl Encoding {
    pub fn new(name: &str, c_in: usize, rng: &mut impl Rng) -> Self {
        let c_half = c_in / 2;
        Self {
            bn: BatchNorm3::new(&format!("{name}.bn"), c_in),
            squeeze: Conv3::new(&format!("{name}.squeeze"), c_in, c_half, 1, [1, 1, 1], [0, 0, 0], Init::HeNormal, rng),
            down: Conv3::new(&format!("{name}.down"), c_half, c_half, 3, [2, 2, 2], [1, 1, 1], Init::HeNormal, rng),
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let h = self.bn.forward(t, ctx, x, mode)?;
        let h = t.relu(h)?;
        let h = self.squeeze.forward(t, ctx, h)?;
        self.down.forward(t, ctx, h)
    }
}

impl Module for Encoding {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.bn.for_each_param(f);
        self.squeeze.for_each_param(f);
        self.down.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.bn.for_each_param_mut(f);
        self.squeeze.for_each_param_mut(f);
        self.down.for_each_param_mut(f);
    }
}

/// Decoding transition: BN-ReLU-Conv(1x1, halve channels) then a transposed
/// conv (k3, s2, p1, per-axis output padding) to the target channel count and
/// doubled-or-matched spatial size.
#[derive(Debug, Clone)]
pub struct Decoding {
    bn: BatchNorm3,
    squeeze: Conv3,
    up: TConv3,
}

impl Decoding {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        out_pad: [usize; 3],
        final_layer: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let c_half = c_in / 2;
        let init = if final_layer { Init::XavierNormal } else { Init::HeNormal };
        Self {
            bn: BatchNorm3::new(&format!("{name}.bn"), c_in),
            squeeze: Conv3::new(&format!("{name}.squeeze"), c_in, c_half, 1, [1, 1, 1], [0, 0, 0], Init::HeNormal, rng),
            up: TConv3::new(&format!("{name}.up"), c_half, c_out, 3, [2, 2, 2], [1, 1, 1], out_pad, init, rng),
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let h = self.bn.forward(t, ctx, x, mode)?;
        let h = t.relu(h)?;
        let h = self.squeeze.forward(t, ctx, h)?;
        self.up.forward(t, ctx, h)
    }
}

impl Module for Decoding {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.bn.for_each_param(f);
        self.squeeze.for_each_param(f);
        self.up.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.bn.for_each_param_mut(f);
        self.squeeze.for_each_param_mut(f);
        self.up.for_each_param_mut(f);
    }
}

/// Upsampling refinement used by the autoencoder decoder: BN-ReLU, nearest
/// resize to an explicit target resolution, then Conv(k3, s1, p1).
#[derive(Debug, Clone)]
pub struct UpConv {
    bn: BatchNorm3,
    conv: Conv3,
    pub target: [usize; 3],
}

impl UpConv {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        target: [usize; 3],
        final_layer: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let init = if final_layer { Init::XavierNormal } else { Init::HeNormal };
        Self {
            bn: BatchNorm3::new(&format!("{name}.bn"), c_in),
            conv: Conv3::new(&format!("{name}.conv"), c_in, c_out, 3, [1, 1, 1], [1, 1, 1], init, rng),
            target,
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let h = self.bn.forward(t, ctx, x, mode)?;
        let h = t.relu(h)?;
        let h = t.resize3(h, self.target)?;
        self.conv.forward(t, ctx, h)
    }
}

impl Module for UpConv {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        self.bn.for_each_param(f);
        self.conv.for_each_param(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.bn.for_each_param_mut(f);
        self.conv.for_each_param_mut(f);
    }
}
