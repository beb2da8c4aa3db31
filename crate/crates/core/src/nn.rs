//! Parameters, parameter traversal, and the basic layers built on the tape.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::kernels::Conv2dSpec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_PARAM: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

/// A learnable tensor. Clones share the id, so a cloned model maps onto the
/// same graph leaves as the original.
#[derive(Clone, Debug)]
pub struct Param<T> {
    id: ParamId,
    name: String,
    value: Arc<Tensor<T>>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Param {
            id: ParamId(NEXT_PARAM.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            value: Arc::new(value),
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub(crate) fn shared(&self) -> Arc<Tensor<T>> {
        Arc::clone(&self.value)
    }

    /// Mutable access; copies the buffer if a graph still holds it.
    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.value)
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

/// Anything owning parameters. Traversal order is declaration order and is
/// what checkpoints and optimizers rely on.
pub trait Module<T: Scalar> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.numel());
        n
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p));
        out
    }

    /// Sets every parameter to zero.
    fn zero_params(&mut self) {
        self.visit_mut(&mut |p| p.value_mut().data_mut().iter_mut().for_each(|v| *v = T::zero()));
    }
}

/// Deterministic parameter initialiser.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform<T: Scalar>(&mut self, shape: &[usize], bound: f64) -> Tensor<T> {
        Tensor::from_fn(shape.to_vec(), |_| T::lit(self.rng.gen_range(-bound..=bound)))
    }

    /// Fan-in scaled uniform, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in<T: Scalar>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        self.uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt())
    }

    /// Small uniform values with standard deviation 0.02, used for position encodings.
    pub fn small<T: Scalar>(&mut self, shape: &[usize]) -> Tensor<T> {
        self.uniform(shape, 0.02 * 3f64.sqrt())
    }
}

/// `y = x W + b` over the last axis of a `[N, in]` matrix.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(init: &mut Init, name: &str, input: usize, output: usize) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), init.fan_in(&[input, output], input)),
            bias: Some(Param::new(format!("{name}.bias"), Tensor::zeros(vec![output]))),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value().shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value().shape()[1]
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = x.matmul(&g.param(&self.weight))?;
        match &self.bias {
            Some(b) => y.add_row(&g.param(b)),
            None => Ok(y),
        }
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// 2-D convolution over channels-last feature maps.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub spec: Conv2dSpec,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(init: &mut Init, name: &str, cin: usize, cout: usize, kernel: usize, spec: Conv2dSpec) -> Self {
        let cig = cin / spec.groups;
        let fan_in = cig * kernel * kernel;
        Conv2d {
            weight: Param::new(
                format!("{name}.weight"),
                init.fan_in(&[cout, cig, kernel, kernel], fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![cout])),
            spec,
        }
    }

    /// Depthwise `k x k` convolution with "same" padding.
    pub fn depthwise(init: &mut Init, name: &str, channels: usize, kernel: usize) -> Self {
        Self::new(
            init,
            name,
            channels,
            channels,
            kernel,
            Conv2dSpec::new(1, kernel / 2, channels),
        )
    }

    pub fn pointwise(init: &mut Init, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(init, name, cin, cout, 1, Conv2dSpec::new(1, 0, 1))
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv2d(&g.param(&self.weight), Some(&g.param(&self.bias)), self.spec)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Epsilon added to the variance in every layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Layer normalisation over the last (channel) axis.
#[derive(Clone, Debug)]
pub struct LayerNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        LayerNorm {
            gamma: Param::new(format!("{name}.gamma"), Tensor::ones(vec![channels])),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(vec![channels])),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let axis = x.shape().len() - 1;
        x.layer_norm(
            axis,
            &g.param(&self.gamma),
            &g.param(&self.beta),
            T::lit(LAYER_NORM_EPS),
        )
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Implements [`Module`] for a struct by visiting the listed fields in order.
/// Fields may be modules, `Param`s (prefix `param`), `Vec`s of modules
/// (prefix `each`) or `Option`s (prefix `opt`).
#[macro_export]
macro_rules! impl_module {
    ($ty:ident { $($kind:ident $field:ident),* $(,)? }) => {
        impl<T: $crate::Scalar> $crate::nn::Module<T> for $ty<T> {
            fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a $crate::nn::Param<T>)) {
                $( $crate::impl_module!(@visit $kind self.$field, f); )*
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut $crate::nn::Param<T>)) {
                $( $crate::impl_module!(@visit_mut $kind self.$field, f); )*
            }
        }
    };
    (@visit module $e:expr, $f:ident) => { $crate::nn::Module::visit(&$e, $f) };
    (@visit param $e:expr, $f:ident) => { $f(&$e) };
    (@visit each $e:expr, $f:ident) => { for m in &$e { $crate::nn::Module::visit(m, $f) } };
    (@visit opt $e:expr, $f:ident) => { if let Some(m) = &$e { $crate::nn::Module::visit(m, $f) } };
    (@visit_mut module $e:expr, $f:ident) => { $crate::nn::Module::visit_mut(&mut $e, $f) };
    (@visit_mut param $e:expr, $f:ident) => { $f(&mut $e) };
    (@visit_mut each $e:expr, $f:ident) => { for m in &mut $e { $crate::nn::Module::visit_mut(m, $f) } };
    (@visit_mut opt $e:expr, $f:ident) => { if let Some(m) = &mut $e { $crate::nn::Module::visit_mut(m, $f) } };
}
