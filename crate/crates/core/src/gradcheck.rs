//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used to build the numeric gradient, so the
//! check is independent of the backward rules it validates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::nn::Module;
use crate::tensor::Tensor;

/// Step and sampling policy.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// At most this many coordinates are probed per tensor.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            max_coords: 64,
            seed: 0,
        }
    }
}

/// Norms below `NORM_FLOOR * max(1, |loss|)` are treated as that value in
/// the relative error. Rounding noise in the central difference grows with
/// the loss magnitude, so the floor does too.
pub const NORM_FLOOR: f64 = 1e-5;

/// Comparison of analytic and numeric gradients for one tensor.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `|a - n| / max(|a|, |n|, floor)` over the probed coordinates.
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

impl GradCheck {
    fn coords(&self, numel: usize, salt: u64) -> Vec<usize> {
        if numel <= self.max_coords {
            return (0..numel).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut idx = sample(&mut rng, numel, self.max_coords).into_vec();
        idx.sort_unstable();
        idx
    }

    fn compare(name: String, analytic: &[f64], numeric: &[f64], loss: f64) -> TensorCheck {
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let a = norm(&mut analytic.iter().copied());
        let n = norm(&mut numeric.iter().copied());
        let d = norm(&mut analytic.iter().zip(numeric).map(|(x, y)| x - y));
        TensorCheck {
            name,
            coords: analytic.len(),
            analytic_norm: a,
            numeric_norm: n,
            rel_err: d / a.max(n).max(NORM_FLOOR * loss.abs().max(1.0)),
        }
    }

    /// Checks gradients with respect to graph inputs.
    ///
    /// `f` builds a one-element loss from the input vars.
    pub fn inputs<F>(&self, inputs: &[Tensor<f64>], f: F) -> Result<GradReport>
    where
        F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
    {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let loss = f(&g, &vars)?;
        let loss_value = loss.value().item()?;
        let grads = g.backward(loss)?;

        let eval = |ts: &[Tensor<f64>]| -> Result<f64> {
            let g = Graph::new();
            let vars: Vec<_> = ts.iter().map(|t| g.constant(t.clone())).collect();
            f(&g, &vars)?.value().item()
        };

        let mut report = GradReport::default();
        let mut work = inputs.to_vec();
        for (i, v) in vars.iter().enumerate() {
            let coords = self.coords(inputs[i].numel(), i as u64);
            let zero = Tensor::zeros(inputs[i].shape().to_vec());
            let ga = grads.wrt(*v).unwrap_or(&zero);
            let mut analytic = Vec::with_capacity(coords.len());
            let mut numeric = Vec::with_capacity(coords.len());
            for &c in &coords {
                let orig = work[i].data()[c];
                work[i].data_mut()[c] = orig + self.step;
                let up = eval(&work)?;
                work[i].data_mut()[c] = orig - self.step;
                let down = eval(&work)?;
                work[i].data_mut()[c] = orig;
                numeric.push((up - down) / (2.0 * self.step));
                analytic.push(ga.data()[c]);
            }
            report
                .tensors
                .push(Self::compare(format!("input{i}"), &analytic, &numeric, loss_value));
        }
        Ok(report)
    }

    /// Checks gradients with respect to every parameter of `module`.
    pub fn params<M, F>(&self, module: &mut M, f: F) -> Result<GradReport>
    where
        M: Module<f64>,
        F: for<'g> Fn(&M, &'g Graph<f64>) -> Result<Var<'g, f64>>,
    {
        let (loss_value, analytic_all): (f64, Vec<(String, Vec<f64>, usize)>) = {
            let g = Graph::new();
            let loss = f(module, &g)?;
            let loss_value = loss.value().item()?;
            let grads = g.backward(loss)?;
            let all = module
                .params()
                .into_iter()
                .map(|p| {
                    let data = grads
                        .param(p)
                        .map(|t| t.data().to_vec())
                        .unwrap_or_else(|| vec![0.0; p.numel()]);
                    (p.name().to_string(), data, p.numel())
                })
                .collect();
            (loss_value, all)
        };

        let eval = |m: &M| -> Result<f64> {
            let g = Graph::inference();
            f(m, &g)?.value().item()
        };

        let mut report = GradReport::default();
        for (pi, (name, analytic_full, numel)) in analytic_all.iter().enumerate() {
            let coords = self.coords(*numel, pi as u64);
            let mut analytic = Vec::with_capacity(coords.len());
            let mut numeric = Vec::with_capacity(coords.len());
            for &c in &coords {
                let up = {
                    nudge(module, pi, c, self.step);
                    eval(module)?
                };
                let down = {
                    nudge(module, pi, c, -2.0 * self.step);
                    eval(module)?
                };
                nudge(module, pi, c, self.step);
                numeric.push((up - down) / (2.0 * self.step));
                analytic.push(analytic_full[c]);
            }
            report
                .tensors
                .push(Self::compare(name.clone(), &analytic, &numeric, loss_value));
        }
        Ok(report)
    }
}

fn nudge<M: Module<f64>>(module: &mut M, param_index: usize, coord: usize, delta: f64) {
    let mut i = 0;
    module.visit_mut(&mut |p| {
        if i == param_index {
            p.value_mut().data_mut()[coord] += delta;
        }
        i += 1;
    });
}

/// Deterministic pseudo-random weights in `[-1, 1]` for building scalar test
/// losses of the form `sum(w * output)`.
pub fn probe_weights(shape: &[usize], seed: u64) -> Tensor<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..=1.0))
}

/// `sum(w * y)` with fixed random `w`; a generic scalar probe of any output.
pub fn probe<'g>(y: Var<'g, f64>, seed: u64) -> Result<Var<'g, f64>> {
    let w = y.graph().constant(probe_weights(&y.shape(), seed));
    Ok(y.mul(&w)?.sum())
}
