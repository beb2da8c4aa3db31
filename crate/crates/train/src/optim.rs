//! Cosine schedule, SGD with momentum, and weight averaging.

use rfir_core::{Module, Param, Scalar};

use crate::error::{Error, Result};

/// `lr_min + ½(lr_max - lr_min)(1 + cos(π·epoch/epochs))`; `epoch` may be
/// fractional for per-step decay.
pub fn cosine_lr(epoch: f64, epochs: usize, lr_max: f64, lr_min: f64) -> f64 {
    let t = (epoch / epochs as f64).clamp(0.0, 1.0);
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// One in-place SGDM update: `v ← μv + g + λw`, `w ← w − lr·v`.
pub fn sgdm_step<T: Scalar>(w: &mut [T], g: &[T], v: &mut [T], lr: f64, momentum: f64, weight_decay: f64) {
    let (lr, mu, wd) = (T::lit(lr), T::lit(momentum), T::lit(weight_decay));
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v + g + wd * *w;
        *w -= lr * *v;
    }
}

/// `e ← decay·e + (1 − decay)·w`.
pub fn ema_step<T: Scalar>(e: &mut [T], w: &[T], decay: f64) {
    let (d, rest) = (T::lit(decay), T::lit(1.0 - decay));
    for (e, &w) in e.iter_mut().zip(w) {
        *e = d * *e + rest * w;
    }
}

/// Flattened per-parameter buffers in traversal order.
pub fn param_values<T: Scalar>(m: &dyn Module<T>) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    m.visit(&mut |p: &Param<T>| out.push(p.value().data().to_vec()));
    out
}

fn check_layout<T: Scalar>(m: &dyn Module<T>, bufs: &[Vec<T>], what: &str) -> Result<()> {
    let mut sizes = Vec::new();
    m.visit(&mut |p: &Param<T>| sizes.push(p.numel()));
    if sizes.len() != bufs.len() || sizes.iter().zip(bufs).any(|(&n, b)| n != b.len()) {
        return Err(Error::Config(format!("{what} does not match the parameter layout")));
    }
    Ok(())
}

/// Momentum state for every parameter of a module.
#[derive(Clone, Debug)]
pub struct Sgdm<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgdm<T> {
    pub fn new(m: &dyn Module<T>, momentum: f64, weight_decay: f64) -> Self {
        let mut velocity = Vec::new();
        m.visit(&mut |p: &Param<T>| velocity.push(vec![T::zero(); p.numel()]));
        Sgdm {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    /// Applies `grads` (traversal order) to `m`.
    pub fn step(&mut self, m: &mut dyn Module<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        check_layout(m, grads, "gradient list")?;
        let (mu, wd) = (self.momentum, self.weight_decay);
        let mut i = 0;
        m.visit_mut(&mut |p: &mut Param<T>| {
            sgdm_step(p.value_mut().data_mut(), &grads[i], &mut self.velocity[i], lr, mu, wd);
            i += 1;
        });
        Ok(())
    }
}

/// Moves every parameter of `ema` towards the matching one of `live`.
pub fn ema_update<T: Scalar>(ema: &mut dyn Module<T>, live: &dyn Module<T>, decay: f64) -> Result<()> {
    let values = param_values(live);
    check_layout(ema, &values, "EMA model")?;
    let mut i = 0;
    ema.visit_mut(&mut |p: &mut Param<T>| {
        ema_step(p.value_mut().data_mut(), &values[i], decay);
        i += 1;
    });
    Ok(())
}
