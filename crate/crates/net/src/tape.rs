//! Reverse-mode autodiff over `[n, c, w, h, d]` tensors.
//!
//! A [`Tape`] records one forward pass as an append-only DAG; [`Tape::backward`]
//! visits the nodes once in reverse creation order and accumulates gradients
//! into every reachable node that requires them. The op set is exactly what
//! the networks in this crate need.

use ndarray::{s, Array1, Array5, ArrayView2};

use crate::error::{NetError, Result};
use crate::gemm;
use crate::ops::conv::{
    conv3_backward, conv3_forward, conv_out_dim, tconv3_backward, tconv3_forward, tconv_out_dim,
};
use crate::ops::norm::{bn_backward_eval, bn_backward_train, bn_forward};
use crate::ops::pointwise::{nearest_resize3, nearest_resize3_backward};

pub type T5 = Array5<f64>;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv3 {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
    },
    TConv3 {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Array1<f64>,
        inv_std: Array1<f64>,
        train: bool,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid {
        x: Var,
    },
    Resize3 {
        x: Var,
    },
    Fc {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ConcatC {
        xs: Vec<Var>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Affine {
        x: Var,
        mul: f64,
    },
    Hadamard {
        a: Var,
        b: Var,
    },
    Exp {
        x: Var,
    },
    Ln {
        x: Var,
        clamp: f64,
    },
    /// ln(sigmoid(x)) computed stably from the logit.
    LnSigmoid {
        x: Var,
    },
    /// ln(1 - sigmoid(x)) computed stably from the logit.
    LnOneMinusSigmoid {
        x: Var,
    },
    MeanAll {
        x: Var,
    },
    Flatten {
        x: Var,
    },
    L1Loss {
        pred: Var,
        target: Var,
        weight: Option<Var>,
    },
    L2Penalty {
        xs: Vec<Var>,
        lambda: f64,
    },
}

struct Node {
    value: T5,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<T5>>,
}

impl Grads {
    pub fn get(&self, var: Var) -> Option<&T5> {
        self.grads[var.0].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<T5> {
        self.grads[var.0].take()
    }
}

pub struct Tape {
    nodes: Vec<Node>,
    check_finite: bool,
}

fn scalar_tensor(v: f64) -> T5 {
    T5::from_elem((1, 1, 1, 1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), check_finite: false }
    }

    /// Enables a full finiteness check after every op (used by tests; NaN or
    /// infinity then surfaces as a numeric error at the op that produced it).
    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &T5 {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> [usize; 5] {
        let (n, c, w, h, d) = self.nodes[var.0].value.dim();
        [n, c, w, h, d]
    }

    pub fn scalar(&self, var: Var) -> Result<f64> {
        let v = &self.nodes[var.0].value;
        if v.len() != 1 {
            return Err(NetError::Shape(format!("expected scalar, got {:?}", v.dim())));
        }
        Ok(v[[0, 0, 0, 0, 0]])
    }

    fn push(&mut self, value: T5, op: Op, requires_grad: bool) -> Result<Var> {
        if self.check_finite {
            if let Some(bad) = value.iter().find(|v| !v.is_finite()) {
                return Err(NetError::Numeric(format!("non-finite value {bad} produced by op")));
            }
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input (no gradient).
    pub fn leaf(&mut self, value: T5) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input (gradient accumulated during backward).
    pub fn param(&mut self, value: T5) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn conv3(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if stride.iter().any(|&s| s == 0) {
            return Err(NetError::Shape("stride must be >= 1".into()));
        }
        if ws[1] != xs[1] {
            return Err(NetError::Shape(format!(
                "conv3 channel mismatch: input {} vs weight {}",
                xs[1], ws[1]
            )));
        }
        for ax in 0..3 {
            if xs[2 + ax] + 2 * pad[ax] < ws[2 + ax] {
                return Err(NetError::Shape("kernel larger than padded input".into()));
            }
        }
        if let Some(bv) = b {
            let bs = self.shape(bv);
            if bs != [1, ws[0], 1, 1, 1] {
                return Err(NetError::Shape(format!("conv3 bias shape {bs:?}")));
            }
        }
        let bias_vec: Option<Vec<f64>> = b.map(|bv| self.value(bv).iter().cloned().collect());
        let out = conv3_forward(
            &self.value(x).view(),
            &self.value(w).view(),
            bias_vec.as_deref(),
            stride,
            pad,
        );
        let rg = self.needs(x) || self.needs(w) || b.map(|bv| self.needs(bv)).unwrap_or(false);
        self.push(out, Op::Conv3 { x, w, b, stride, pad }, rg)
    }

    pub fn tconv3(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
        out_pad: [usize; 3],
    ) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if ws[0] != xs[1] {
            return Err(NetError::Shape(format!(
                "tconv3 channel mismatch: input {} vs weight {}",
                xs[1], ws[0]
            )));
        }
        for ax in 0..3 {
            if out_pad[ax] >= stride[ax] {
                return Err(NetError::Shape("output padding must be < stride".into()));
            }
        }
        if let Some(bv) = b {
            let bs = self.shape(bv);
            if bs != [1, ws[1], 1, 1, 1] {
                return Err(NetError::Shape(format!("tconv3 bias shape {bs:?}")));
            }
        }
        let bias_vec: Option<Vec<f64>> = b.map(|bv| self.value(bv).iter().cloned().collect());
        let out = tconv3_forward(
            &self.value(x).view(),
            &self.value(w).view(),
            bias_vec.as_deref(),
            stride,
            pad,
            out_pad,
        );
        let rg = self.needs(x) || self.needs(w) || b.map(|bv| self.needs(bv)).unwrap_or(false);
        self.push(out, Op::TConv3 { x, w, b, stride, pad }, rg)
    }

    /// Batch normalization with caller-supplied statistics (the layer decides
    /// between batch stats in train mode and running stats in eval mode).
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Array1<f64>,
        inv_std: Array1<f64>,
        train: bool,
    ) -> Result<Var> {
        let xs = self.shape(x);
        let c = xs[1];
        if self.shape(gamma) != [1, c, 1, 1, 1] || self.shape(beta) != [1, c, 1, 1, 1] {
            return Err(NetError::Shape("batchnorm affine parameter shape".into()));
        }
        if mean.len() != c || inv_std.len() != c {
            return Err(NetError::Shape("batchnorm statistics length".into()));
        }
        let gamma_v: Vec<f64> = self.value(gamma).iter().cloned().collect();
        let beta_v: Vec<f64> = self.value(beta).iter().cloned().collect();
        let out = bn_forward(&self.value(x).view(), &mean, &inv_std, &gamma_v, &beta_v);
        let rg = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(out, Op::BatchNorm { x, gamma, beta, mean, inv_std, train }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.leaky_relu(x, 0.0)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let out = self.value(x).mapv(|v| if v >= 0.0 { v } else { slope * v });
        let rg = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.needs(x);
        self.push(out, Op::Sigmoid { x }, rg)
    }

    pub fn resize3(&mut self, x: Var, target: [usize; 3]) -> Result<Var> {
        if target.iter().any(|&t| t == 0) {
            return Err(NetError::Shape("resize target must be >= 1".into()));
        }
        let out = nearest_resize3(&self.value(x).view(), target);
        let rg = self.needs(x);
        self.push(out, Op::Resize3 { x }, rg)
    }

    /// Fully connected layer on flattened features: x `[n, f, 1, 1, 1]`,
    /// w `[o, f, 1, 1, 1]`, bias `[1, o, 1, 1, 1]`.
    pub fn fc(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs[2] != 1 || xs[3] != 1 || xs[4] != 1 {
            return Err(NetError::Shape("fc input must be flat [n, f, 1, 1, 1]".into()));
        }
        if ws[1] != xs[1] {
            return Err(NetError::Shape(format!(
                "fc feature mismatch: input {} vs weight {}",
                xs[1], ws[1]
            )));
        }
        let (n, f, o) = (xs[0], xs[1], ws[0]);
        let x2 = self.value(x).view().into_shape_with_order((n, f)).unwrap();
        let w2 = self.value(w).view().into_shape_with_order((o, f)).unwrap();
        let mut y2 = gemm::matmul(x2, w2.t());
        if let Some(bv) = b {
            let bs = self.value(bv);
            let bslice = bs.as_slice().unwrap();
            for mut row in y2.rows_mut() {
                for (yo, bo) in row.iter_mut().zip(bslice) {
                    *yo += bo;
                }
            }
        }
        let out = y2.into_shape_with_order((n, o, 1, 1, 1)).unwrap();
        let rg = self.needs(x) || self.needs(w) || b.map(|bv| self.needs(bv)).unwrap_or(false);
        self.push(out, Op::Fc { x, w, b }, rg)
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(NetError::Shape("concat of zero tensors".into()));
        }
        let first = self.shape(xs[0]);
        let mut total_c = 0;
        for &v in xs {
            let s = self.shape(v);
            if s[0] != first[0] || s[2..] != first[2..] {
                return Err(NetError::Shape(format!(
                    "concat spatial/batch mismatch: {s:?} vs {first:?}"
                )));
            }
            total_c += s[1];
        }
        let mut out = T5::zeros((first[0], total_c, first[2], first[3], first[4]));
        let mut c0 = 0;
        for &v in xs {
            let s = self.shape(v);
            out.slice_mut(s![.., c0..c0 + s[1], .., .., ..])
                .assign(self.value(v));
            c0 += s[1];
        }
        let rg = xs.iter().any(|&v| self.needs(v));
        self.push(out, Op::ConcatC { xs: xs.to_vec() }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(NetError::Shape(format!(
                "add shape mismatch: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self.value(a) + self.value(b);
        let rg = self.needs(a) || self.needs(b);
        self.push(out, Op::Add { a, b }, rg)
    }

    /// `mul * x + add`, elementwise (covers scale and 1 - x).
    pub fn affine(&mut self, x: Var, mul: f64, add: f64) -> Result<Var> {
        let out = self.value(x).mapv(|v| mul * v + add);
        let rg = self.needs(x);
        let _ = add;
        self.push(out, Op::Affine { x, mul }, rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.affine(x, factor, 0.0)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(NetError::Shape("hadamard shape mismatch".into()));
        }
        let out = self.value(a) * self.value(b);
        let rg = self.needs(a) || self.needs(b);
        self.push(out, Op::Hadamard { a, b }, rg)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).mapv(f64::exp);
        let rg = self.needs(x);
        self.push(out, Op::Exp { x }, rg)
    }

    /// `ln(max(x, clamp))`; the clamp keeps adversarial losses finite.
    pub fn ln_clamped(&mut self, x: Var, clamp: f64) -> Result<Var> {
        let out = self.value(x).mapv(|v| v.max(clamp).ln());
        let rg = self.needs(x);
        self.push(out, Op::Ln { x, clamp }, rg)
    }

    /// `ln(sigmoid(x))` from the logit; equals `-softplus(-x)`, so both the
    /// value and the gradient stay bounded for any input.
    pub fn ln_sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).mapv(|v| {
            if v >= 0.0 {
                -(-v).exp().ln_1p()
            } else {
                v - v.exp().ln_1p()
            }
        });
        let rg = self.needs(x);
        self.push(out, Op::LnSigmoid { x }, rg)
    }

    /// `ln(1 - sigmoid(x))` from the logit; equals `-softplus(x)`.
    pub fn ln_one_minus_sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).mapv(|v| {
            if v <= 0.0 {
                -v.exp().ln_1p()
            } else {
                -v - (-v).exp().ln_1p()
            }
        });
        let rg = self.needs(x);
        self.push(out, Op::LnOneMinusSigmoid { x }, rg)
    }

    /// Collapses (c, w, h, d) into one feature axis: `[n, c*w*h*d, 1, 1, 1]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let out = self
            .value(x)
            .clone()
            .into_shape_with_order((s[0], s[1] * s[2] * s[3] * s[4], 1, 1, 1))
            .map_err(|e| NetError::Shape(e.to_string()))?;
        let rg = self.needs(x);
        self.push(out, Op::Flatten { x }, rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = scalar_tensor(v.sum() / v.len() as f64);
        let rg = self.needs(x);
        self.push(out, Op::MeanAll { x }, rg)
    }

    /// Mean absolute error, optionally weighted per element; the subgradient
    /// at zero residual is 0.
    pub fn l1_loss(&mut self, pred: Var, target: Var, weight: Option<Var>) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(NetError::Shape("l1 pred/target shape mismatch".into()));
        }
        if let Some(wv) = weight {
            if self.shape(wv) != self.shape(pred) {
                return Err(NetError::Shape("l1 weight shape mismatch".into()));
            }
        }
        let p = self.value(pred);
        let t = self.value(target);
        let total: f64 = match weight {
            Some(wv) => {
                let w = self.value(wv);
                p.iter()
                    .zip(t.iter())
                    .zip(w.iter())
                    .map(|((a, b), c)| c * (a - b).abs())
                    .sum()
            }
            None => p.iter().zip(t.iter()).map(|(a, b)| (a - b).abs()).sum(),
        };
        let out = scalar_tensor(total / p.len() as f64);
        let rg = self.needs(pred) || self.needs(target);
        self.push(out, Op::L1Loss { pred, target, weight }, rg)
    }

    /// `lambda * sum_i ||x_i||^2` over the given tensors.
    pub fn l2_penalty(&mut self, xs: &[Var], lambda: f64) -> Result<Var> {
        let total: f64 = xs
            .iter()
            .map(|&v| self.value(v).iter().map(|a| a * a).sum::<f64>())
            .sum();
        let rg = xs.iter().any(|&v| self.needs(v));
        self.push(scalar_tensor(lambda * total), Op::L2Penalty { xs: xs.to_vec(), lambda }, rg)
    }

    /// Reverse pass from a scalar loss; every reachable gradient is
    /// accumulated exactly once per consumer.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NetError::Shape("backward requires a scalar loss".into()));
        }
        let mut grads: Vec<Option<T5>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(scalar_tensor(1.0));

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            let grad = grads[idx].take().unwrap();
            self.backprop_node(idx, &grad, &mut grads)?;
            // Leaves keep their gradient; interior nodes may keep it too for
            // inspection, so restore it.
            grads[idx] = Some(grad);
        }
        Ok(Grads { grads })
    }

    fn accumulate(&self, grads: &mut Vec<Option<T5>>, var: Var, delta: T5) {
        if !self.needs(var) {
            return;
        }
        match &mut grads[var.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, idx: usize, grad: &T5, grads: &mut Vec<Option<T5>>) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv3 { x, w, b, stride, pad } => {
                let need_dx = self.needs(*x);
                let need_dw = self.needs(*w);
                let (dx, dw, db) = conv3_backward(
                    &self.value(*x).view(),
                    &self.value(*w).view(),
                    &grad.view(),
                    *stride,
                    *pad,
                    need_dx,
                    need_dw,
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let Some(bv) = b {
                    if self.needs(*bv) {
                        let c = db.len();
                        let dbt = T5::from_shape_vec((1, c, 1, 1, 1), db).unwrap();
                        self.accumulate(grads, *bv, dbt);
                    }
                }
            }
            Op::TConv3 { x, w, b, stride, pad } => {
                let need_dx = self.needs(*x);
                let need_dw = self.needs(*w);
                let (dx, dw, db) = tconv3_backward(
                    &self.value(*x).view(),
                    &self.value(*w).view(),
                    &grad.view(),
                    *stride,
                    *pad,
                    need_dx,
                    need_dw,
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let Some(bv) = b {
                    if self.needs(*bv) {
                        let c = db.len();
                        let dbt = T5::from_shape_vec((1, c, 1, 1, 1), db).unwrap();
                        self.accumulate(grads, *bv, dbt);
                    }
                }
            }
            Op::BatchNorm { x, gamma, beta, mean, inv_std, train } => {
                let gamma_v: Vec<f64> = self.value(*gamma).iter().cloned().collect();
                let (dx, dgamma, dbeta) = if *train {
                    bn_backward_train(&self.value(*x).view(), &grad.view(), mean, inv_std, &gamma_v)
                } else {
                    bn_backward_eval(&self.value(*x).view(), &grad.view(), mean, inv_std, &gamma_v)
                };
                self.accumulate(grads, *x, dx);
                let c = dgamma.len();
                if self.needs(*gamma) {
                    self.accumulate(grads, *gamma, T5::from_shape_vec((1, c, 1, 1, 1), dgamma).unwrap());
                }
                if self.needs(*beta) {
                    self.accumulate(grads, *beta, T5::from_shape_vec((1, c, 1, 1, 1), dbeta).unwrap());
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let mut dx = grad.clone();
                dx.zip_mut_with(xv, |g, &v| {
                    if v < 0.0 {
                        *g *= slope;
                    }
                });
                self.accumulate(grads, *x, dx);
            }
            Op::Sigmoid { x } => {
                let y = &self.nodes[idx].value;
                let mut dx = grad.clone();
                dx.zip_mut_with(y, |g, &yv| *g *= yv * (1.0 - yv));
                self.accumulate(grads, *x, dx);
            }
            Op::Resize3 { x } => {
                let xs = self.shape(*x);
                let dx = nearest_resize3_backward(&grad.view(), [xs[2], xs[3], xs[4]]);
                self.accumulate(grads, *x, dx);
            }
            Op::Fc { x, w, b } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (n, f, o) = (xs[0], xs[1], ws[0]);
                let g2: ArrayView2<f64> = grad.view().into_shape_with_order((n, o)).unwrap();
                if self.needs(*x) {
                    let w2 = self.value(*w).view().into_shape_with_order((o, f)).unwrap();
                    let dx2 = gemm::matmul(g2, w2);
                    self.accumulate(
                        grads,
                        *x,
                        dx2.into_shape_with_order((n, f, 1, 1, 1)).unwrap(),
                    );
                }
                if self.needs(*w) {
                    let x2 = self.value(*x).view().into_shape_with_order((n, f)).unwrap();
                    let dw2 = gemm::matmul(g2.t(), x2);
                    self.accumulate(
                        grads,
                        *w,
                        dw2.into_shape_with_order((o, f, 1, 1, 1)).unwrap(),
                    );
                }
                if let Some(bv) = b {
                    if self.needs(*bv) {
                        let db: Vec<f64> = (0..o).map(|c| g2.column(c).sum()).collect();
                        self.accumulate(grads, *bv, T5::from_shape_vec((1, o, 1, 1, 1), db).unwrap());
                    }
                }
            }
            Op::ConcatC { xs } => {
                let mut c0 = 0;
                for &v in xs {
                    let cs = self.shape(v)[1];
                    if self.needs(v) {
                        let slice = grad.slice(s![.., c0..c0 + cs, .., .., ..]).to_owned();
                        self.accumulate(grads, v, slice);
                    }
                    c0 += cs;
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, grad.clone());
                self.accumulate(grads, *b, grad.clone());
            }
            Op::Affine { x, mul } => {
                self.accumulate(grads, *x, grad.mapv(|g| g * mul));
            }
            Op::Hadamard { a, b } => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, grad * self.value(*b));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, grad * self.value(*a));
                }
            }
            Op::Exp { x } => {
                let y = &self.nodes[idx].value;
                self.accumulate(grads, *x, grad * y);
            }
            Op::Ln { x, clamp } => {
                let xv = self.value(*x);
                let mut dx = grad.clone();
                dx.zip_mut_with(xv, |g, &v| {
                    *g = if v > *clamp { *g / v } else { 0.0 };
                });
                self.accumulate(grads, *x, dx);
            }
            Op::LnSigmoid { x } => {
                // d/dx ln(sigmoid(x)) = 1 - sigmoid(x) = sigmoid(-x).
                let xv = self.value(*x);
                let mut dx = grad.clone();
                dx.zip_mut_with(xv, |g, &v| *g *= 1.0 / (1.0 + v.exp()));
                self.accumulate(grads, *x, dx);
            }
            Op::LnOneMinusSigmoid { x } => {
                // d/dx ln(1 - sigmoid(x)) = -sigmoid(x).
                let xv = self.value(*x);
                let mut dx = grad.clone();
                dx.zip_mut_with(xv, |g, &v| *g *= -1.0 / (1.0 + (-v).exp()));
                self.accumulate(grads, *x, dx);
            }
            Op::MeanAll { x } => {
                let xv = self.value(*x);
                let g = grad[[0, 0, 0, 0, 0]] / xv.len() as f64;
                self.accumulate(grads, *x, T5::from_elem(xv.raw_dim(), g));
            }
            Op::Flatten { x } => {
                let xs = self.shape(*x);
                let dx = grad
                    .clone()
                    .into_shape_with_order((xs[0], xs[1], xs[2], xs[3], xs[4]))
                    .expect("flatten backward shape");
                self.accumulate(grads, *x, dx);
            }
            Op::L1Loss { pred, target, weight } => {
                let p = self.value(*pred);
                let t = self.value(*target);
                let len = p.len() as f64;
                let g = grad[[0, 0, 0, 0, 0]] / len;
                let sign = |a: f64, b: f64| -> f64 {
                    if a > b {
                        1.0
                    } else if a < b {
                        -1.0
                    } else {
                        0.0
                    }
                };
                let base: T5 = match weight {
                    Some(wv) => {
                        let w = self.value(*wv);
                        let mut out = T5::zeros(p.raw_dim());
                        ndarray::Zip::from(&mut out).and(p).and(t).and(w).for_each(
                            |o, &a, &b, &c| *o = g * c * sign(a, b),
                        );
                        out
                    }
                    None => {
                        let mut out = T5::zeros(p.raw_dim());
                        ndarray::Zip::from(&mut out)
                            .and(p)
                            .and(t)
                            .for_each(|o, &a, &b| *o = g * sign(a, b));
                        out
                    }
                };
                if self.needs(*pred) {
                    self.accumulate(grads, *pred, base.clone());
                }
                if self.needs(*target) {
                    self.accumulate(grads, *target, base.mapv(|v| -v));
                }
            }
            Op::L2Penalty { xs, lambda } => {
                let g = grad[[0, 0, 0, 0, 0]];
                for &v in xs {
                    if self.needs(v) {
                        let dv = self.value(v).mapv(|a| 2.0 * lambda * g * a);
                        self.accumulate(grads, v, dv);
                    }
                }
            }
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Output spatial dims of a conv with the given geometry.
pub fn conv3_output_dims(input: [usize; 3], k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> [usize; 3] {
    [
        conv_out_dim(input[0], k[0], s[0], p[0]),
        conv_out_dim(input[1], k[1], s[1], p[1]),
        conv_out_dim(input[2], k[2], s[2], p[2]),
    ]
}

/// Output spatial dims of a tconv with the given geometry.
pub fn tconv3_output_dims(
    input: [usize; 3],
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
    op: [usize; 3],
) -> [usize; 3] {
    [
        tconv_out_dim(input[0], k[0], s[0], p[0], op[0]),
        tconv_out_dim(input[1], k[1], s[1], p[1], op[1]),
        tconv_out_dim(input[2], k[2], s[2], p[2], op[2]),
    ]
}
