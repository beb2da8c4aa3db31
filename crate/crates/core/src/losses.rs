//! Training objectives.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::impl_module;
use crate::nn::Param;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use crate::autodiff::BCE_CLAMP;

/// Summed binary cross-entropy of `sigmoid(logits)` against 0/1 `labels`.
pub fn bce<'g, T: Scalar>(logits: Var<'g, T>, labels: &[T]) -> Result<Var<'g, T>> {
    logits.bce_with_logits(labels)
}

/// Summed binary cross-entropy for plain probabilities, clamped like [`bce`].
pub fn bce_probs(labels: &[f64], probs: &[f64]) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(Error::shape("bce", &[labels.len()], &[probs.len()]));
    }
    Ok(labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum())
}

/// Absolute error summed over channels and divided by the pixel count `H*W`.
pub fn l1<'g, T: Scalar>(restored: Var<'g, T>, target: Var<'g, T>) -> Result<Var<'g, T>> {
    let s = restored.shape();
    if s != target.shape() || s.len() != 3 {
        return Err(Error::shape("l1", &s, &target.shape()));
    }
    let pixels = (s[0] * s[1]) as f64;
    Ok(restored.sub(&target)?.abs().sum().scale(T::lit(1.0 / pixels)))
}

/// Learnable log-variances `s1 = log σ1²` (classification) and
/// `s2 = log σ2²` (restoration).
#[derive(Clone, Debug)]
pub struct UncertaintyParams<T> {
    pub s1: Param<T>,
    pub s2: Param<T>,
}

impl_module!(UncertaintyParams { param s1, param s2 });

impl<T: Scalar> Default for UncertaintyParams<T> {
    fn default() -> Self {
        Self::new(0.0, 0.0)
    }
}

impl<T: Scalar> UncertaintyParams<T> {
    pub fn new(s1: f64, s2: f64) -> Self {
        UncertaintyParams {
            s1: Param::new("uncertainty.s1", Tensor::full(vec![1], T::lit(s1))),
            s2: Param::new("uncertainty.s2", Tensor::full(vec![1], T::lit(s2))),
        }
    }

    pub fn values(&self) -> (f64, f64) {
        (self.s1.value().data()[0].as_f64(), self.s2.value().data()[0].as_f64())
    }
}

/// `½ e^{-s1} bce + ½ e^{-s2} l1 + s1 + s2`.
pub fn multitask_loss<'g, T: Scalar>(
    g: &'g Graph<T>,
    bce: Var<'g, T>,
    l1: Var<'g, T>,
    params: &UncertaintyParams<T>,
) -> Result<Var<'g, T>> {
    let s1 = g.param(&params.s1);
    let s2 = g.param(&params.s2);
    let half = T::lit(0.5);
    let a = s1.neg().exp().mul(&bce.reshape(&[1])?)?.scale(half);
    let b = s2.neg().exp().mul(&l1.reshape(&[1])?)?.scale(half);
    a.add(&b)?.add(&s1)?.add(&s2)
}
