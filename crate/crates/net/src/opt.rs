//! Parameter update rules.

use crate::layer::{Module, Param};
use crate::tape::{Grads, Tape, Var, T5};

use crate::error::{NetError, Result};

#[derive(Debug, Clone)]
pub enum Optimizer {
    /// SGD with classical momentum.
    Sgd { lr: f64, momentum: f64 },
    /// Adam with bias correction.
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, t: u64 },
}

impl Optimizer {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Optimizer::Sgd { lr, momentum }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0 }
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match self {
            Optimizer::Sgd { lr, .. } => *lr = new_lr,
            Optimizer::Adam { lr, .. } => *lr = new_lr,
        }
    }

    /// Marks the start of one optimization step (advances Adam's time index).
    pub fn begin_step(&mut self) {
        if let Optimizer::Adam { t, .. } = self {
            *t += 1;
        }
    }

    pub fn update(&self, p: &mut Param, grad: &T5) -> Result<()> {
        if grad.raw_dim() != p.value.raw_dim() {
            return Err(NetError::Shape(format!(
                "gradient shape {:?} does not match parameter {} {:?}",
                grad.raw_dim(),
                p.name,
                p.value.raw_dim()
            )));
        }
        match self {
            Optimizer::Sgd { lr, momentum } => {
                let buf = p.m.get_or_insert_with(|| T5::zeros(grad.raw_dim()));
                ndarray::Zip::from(&mut *buf).and(grad).for_each(|b, &g| {
                    *b = *momentum * *b + g;
                });
                ndarray::Zip::from(&mut p.value).and(&*buf).for_each(|v, &b| {
                    *v -= lr * b;
                });
            }
            Optimizer::Adam { lr, beta1, beta2, eps, t } => {
                let t = (*t).max(1) as i32;
                let m = p.m.get_or_insert_with(|| T5::zeros(grad.raw_dim()));
                let v = p.v.get_or_insert_with(|| T5::zeros(grad.raw_dim()));
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                ndarray::Zip::from(&mut *m).and(grad).for_each(|mi, &g| {
                    *mi = beta1 * *mi + (1.0 - beta1) * g;
                });
                ndarray::Zip::from(&mut *v).and(grad).for_each(|vi, &g| {
                    *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                });
                ndarray::Zip::from(&mut p.value).and(&*m).and(&*v).for_each(|val, &mi, &vi| {
                    let mhat = mi / bc1;
                    let vhat = vi / bc2;
                    *val -= lr * mhat / (vhat.sqrt() + eps);
                });
            }
        }
        Ok(())
    }
}

/// Applies gradients from a backward pass to a module whose parameters were
/// bound in `for_each_param` order. Every bound parameter must have received
/// a gradient (dead subgraphs are a wiring bug).
pub fn apply_grads(
    module: &mut dyn Module,
    tape: &Tape,
    vars: &[Var],
    grads: &mut Grads,
    opt: &mut Optimizer,
) -> Result<()> {
    let _ = tape;
    opt.begin_step();
    let mut idx = 0usize;
    let mut result = Ok(());
    module.for_each_param_mut(&mut |p| {
        if result.is_err() {
            return;
        }
        if idx >= vars.len() {
            result = Err(NetError::Shape("more parameters than bound vars".into()));
            return;
        }
        match grads.take(vars[idx]) {
            Some(g) => {
                if let Err(e) = opt.update(p, &g) {
                    result = Err(e);
                }
            }
            None => {
                result = Err(NetError::Numeric(format!(
                    "parameter {} received no gradient (dead subgraph)",
                    p.name
                )));
            }
        }
        idx += 1;
    });
    result?;
    if idx != vars.len() {
        return Err(NetError::Shape("fewer parameters than bound vars".into()));
    }
    Ok(())
}
