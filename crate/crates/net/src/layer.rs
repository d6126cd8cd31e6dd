//! Trainable layers: parameters with optimizer state, weight initialization,
//! and thin wrappers that bind parameters onto a tape per forward pass.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NetError, Result};
use crate::ops::norm::channel_stats;
use crate::tape::{Tape, Var, T5};

/// Trainable tensor plus optimizer state (first/second moments).
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: T5,
    pub m: Option<T5>,
    pub v: Option<T5>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: T5) -> Self {
        Self { name: name.into(), value, m: None, v: None }
    }
}

/// Collects the tape vars of bound parameters, in the same order as
/// `for_each_param` visits them.
#[derive(Default)]
pub struct BindCtx {
    pub vars: Vec<Var>,
}

impl BindCtx {
    pub fn bind(&mut self, tape: &mut Tape, p: &Param) -> Var {
        let v = tape.param(p.value.clone());
        self.vars.push(v);
        v
    }

    /// Binds without tracking gradients (frozen sub-network).
    pub fn bind_frozen(&mut self, tape: &mut Tape, p: &Param) -> Var {
        let v = tape.leaf(p.value.clone());
        self.vars.push(v);
        v
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_| n += 1);
        n
    }

    fn value_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |p| n += p.value.len());
        n
    }
}

/// How a layer's weights are drawn. He-normal (std = sqrt(2/fan_in)) feeds
/// ReLU-family activations; Xavier-normal (std = sqrt(2/(fan_in+fan_out)))
/// feeds sigmoid or linear outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    HeNormal,
    XavierNormal,
}

pub fn draw_weights(shape: (usize, usize, usize, usize, usize), fan_in: usize, fan_out: usize, init: Init, rng: &mut impl Rng) -> T5 {
    let std = match init {
        Init::HeNormal => (2.0 / fan_in as f64).sqrt(),
        Init::XavierNormal => (2.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let dist = Normal::new(0.0, std).expect("valid std");
    T5::from_shape_simple_fn(shape, || dist.sample(rng))
}

/// 3D convolution layer (cross-correlation), weight `[c_out, c_in, k, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv3 {
    pub w: Param,
    pub b: Param,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Conv3 {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: [usize; 3],
        pad: [usize; 3],
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = c_in * k * k * k;
        let fan_out = c_out * k * k * k;
        Self {
            w: Param::new(format!("{name}.w"), draw_weights((c_out, c_in, k, k, k), fan_in, fan_out, init, rng)),
            b: Param::new(format!("{name}.b"), T5::zeros((1, c_out, 1, 1, 1))),
            stride,
            pad,
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var) -> Result<Var> {
        let w = ctx.bind(t, &self.w);
        let b = ctx.bind(t, &self.b);
        t.conv3(x, w, Some(b), self.stride, self.pad)
    }
}

impl Module for Conv3 {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.b);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Transposed 3D convolution, weight `[c_in, c_out, k, k, k]`, with per-axis
/// output padding.
#[derive(Debug, Clone)]
pub struct TConv3 {
    pub w: Param,
    pub b: Param,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub out_pad: [usize; 3],
}

impl TConv3 {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: [usize; 3],
        pad: [usize; 3],
        out_pad: [usize; 3],
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = c_in * k * k * k;
        let fan_out = c_out * k * k * k;
        Self {
            w: Param::new(format!("{name}.w"), draw_weights((c_in, c_out, k, k, k), fan_in, fan_out, init, rng)),
            b: Param::new(format!("{name}.b"), T5::zeros((1, c_out, 1, 1, 1))),
            stride,
            pad,
            out_pad,
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var) -> Result<Var> {
        let w = ctx.bind(t, &self.w);
        let b = ctx.bind(t, &self.b);
        t.tconv3(x, w, Some(b), self.stride, self.pad, self.out_pad)
    }
}

impl Module for TConv3 {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.b);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Whether a forward pass uses batch statistics (training) or the stored
/// running statistics (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch normalization over (N, W, H, D) per channel. Running statistics are
/// updated in train mode (in a `RefCell` so forward can stay `&self`) and
/// used in eval mode.
#[derive(Debug, Clone)]
pub struct BatchNorm3 {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: std::cell::RefCell<Array1<f64>>,
    pub running_var: std::cell::RefCell<Array1<f64>>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm3 {
    pub fn new(name: &str, c: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), T5::from_elem((1, c, 1, 1, 1), 1.0)),
            beta: Param::new(format!("{name}.beta"), T5::zeros((1, c, 1, 1, 1))),
            running_mean: std::cell::RefCell::new(Array1::zeros(c)),
            running_var: std::cell::RefCell::new(Array1::ones(c)),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var, mode: Mode) -> Result<Var> {
        let shape = t.shape(x);
        let gamma = ctx.bind(t, &self.gamma);
        let beta = ctx.bind(t, &self.beta);
        match mode {
            Mode::Train => {
                if shape[0] < 2 {
                    return Err(NetError::Shape(
                        "batch normalization in train mode needs batch size >= 2".into(),
                    ));
                }
                let (mean, var) = channel_stats(&t.value(x).view());
                let count = (shape[0] * shape[2] * shape[3] * shape[4]) as f64;
                {
                    // Running stats use the unbiased variance.
                    let unbiased = var.mapv(|v| v * count / (count - 1.0));
                    let mut rm = self.running_mean.borrow_mut();
                    let mut rv = self.running_var.borrow_mut();
                    *rm = &*rm * (1.0 - self.momentum) + &mean * self.momentum;
                    *rv = &*rv * (1.0 - self.momentum) + &unbiased * self.momentum;
                }
                let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                t.batchnorm(x, gamma, beta, mean, inv_std, true)
            }
            Mode::Eval => {
                let mean = self.running_mean.borrow().clone();
                let inv_std = self.running_var.borrow().mapv(|v| 1.0 / (v + self.eps).sqrt());
                t.batchnorm(x, gamma, beta, mean, inv_std, false)
            }
        }
    }
}

impl Module for BatchNorm3 {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Fully connected layer on flat features.
#[derive(Debug, Clone)]
pub struct Fc {
    pub w: Param,
    pub b: Param,
}

impl Fc {
    pub fn new(name: &str, f_in: usize, f_out: usize, init: Init, rng: &mut impl Rng) -> Self {
        Self {
            w: Param::new(format!("{name}.w"), draw_weights((f_out, f_in, 1, 1, 1), f_in, f_out, init, rng)),
            b: Param::new(format!("{name}.b"), T5::zeros((1, f_out, 1, 1, 1))),
        }
    }

    pub fn forward(&self, t: &mut Tape, ctx: &mut BindCtx, x: Var) -> Result<Var> {
        let w = ctx.bind(t, &self.w);
        let b = ctx.bind(t, &self.b);
        t.fc(x, w, Some(b))
    }
}

impl Module for Fc {
    fn for_each_param(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.b);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}
