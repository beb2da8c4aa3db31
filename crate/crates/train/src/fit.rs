//! The training loop.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfir_core::losses::{bce, l1, multitask_loss, UncertaintyParams};
use rfir_core::{checkpoint, impl_module, Graph, Module, Param, Scalar, TransRfir};
use rfir_datagen::Image;
use serde::{Deserialize, Serialize};

use crate::augment::Transform;
use crate::config::TrainConfig;
use crate::data::{to_tensor, Example};
use crate::error::{Error, Result};
use crate::optim::{cosine_lr, ema_update, Sgdm};

const SHUFFLE_SALT: u64 = 0x005E_ED0F_E90C;

pub const CHECKPOINT_NAME: &str = "model.ckpt";
pub const CURVE_NAME: &str = "loss_curve.json";

/// Everything the optimiser updates: the network and the two task
/// log-variances.
#[derive(Clone, Debug)]
pub struct Trainable<T> {
    pub model: TransRfir<T>,
    pub uncertainty: UncertaintyParams<T>,
}

impl_module!(Trainable { module model, module uncertainty });

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleLoss {
    pub total: f64,
    pub bce: f64,
    pub l1: f64,
}

/// Multitask loss of one sample and its gradient for every parameter of
/// `net`, in traversal order.
pub fn sample_gradients<T: Scalar>(
    net: &Trainable<T>,
    degraded: &Image,
    gt: &Image,
    ids: &[usize],
    labels: &[f64],
) -> Result<(SampleLoss, Vec<Vec<T>>)> {
    let g = Graph::new();
    let out = net.model.restore(&g, g.constant(to_tensor(degraded)), ids)?;
    let labels: Vec<T> = labels.iter().map(|&y| T::lit(y)).collect();
    let b = bce(out.mdp_logits, &labels)?;
    let r = l1(out.restored, g.constant(to_tensor(gt)))?;
    let loss = multitask_loss(&g, b, r, &net.uncertainty)?;
    let value = |v: rfir_core::Var<'_, T>| -> Result<f64> { Ok(v.value().item()?.as_f64()) };
    let stats = SampleLoss {
        total: value(loss)?,
        bce: value(b)?,
        l1: value(r)?,
    };
    let grads = g.backward(loss)?;
    let mut flat = Vec::new();
    net.visit(&mut |p: &Param<T>| {
        flat.push(match grads.param(p) {
            Some(t) => t.data().to_vec(),
            None => vec![T::zero(); p.numel()],
        })
    });
    Ok((stats, flat))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Rate used by the last step of the epoch.
    pub lr: f64,
    /// Means over the epoch's samples.
    pub loss: f64,
    pub bce: f64,
    pub l1: f64,
    pub s1: f64,
    pub s2: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub epochs: Vec<EpochStats>,
    /// Mean loss of every optimiser step.
    pub steps: Vec<f64>,
}

impl LossCurve {
    pub fn first(&self) -> Option<&EpochStats> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

#[derive(Clone, Debug)]
pub struct FitOutput<T> {
    pub model: TransRfir<T>,
    pub ema: TransRfir<T>,
    pub uncertainty: UncertaintyParams<T>,
    pub curve: LossCurve,
}

/// Epoch `epoch` (0-based) visiting order and augmentation draws.
pub fn epoch_plan(cfg: &TrainConfig, epoch: usize, n: usize) -> (Vec<usize>, Vec<Transform>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let transforms = (0..n)
        .map(|_| {
            if cfg.augment {
                Transform::random(&mut rng)
            } else {
                Transform::IDENTITY
            }
        })
        .collect();
    (order, transforms)
}

/// Fresh network for `cfg`, seeded by `cfg.seed`.
pub fn init_model<T: Scalar>(cfg: &TrainConfig) -> Result<TransRfir<T>> {
    Ok(TransRfir::new(cfg.model.clone(), cfg.seed)?)
}

/// Trains `model` on `train` serially. The result depends only on the
/// inputs, so equal seeds give identical curves and weights.
pub fn fit<T: Scalar>(model: TransRfir<T>, train: &[Example], cfg: &TrainConfig) -> Result<FitOutput<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let size = cfg.image_size();
    let mut net = Trainable {
        model,
        uncertainty: UncertaintyParams::default(),
    };
    let mut ema = net.model.clone();
    let mut opt = Sgdm::new(&net, cfg.momentum, cfg.weight_decay);
    let tokenized: Vec<Vec<usize>> = train
        .iter()
        .map(|e| net.model.tokenize(e.record.prompt(cfg.prompt_style)))
        .collect();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut curve = LossCurve::default();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (order, transforms) = epoch_plan(cfg, epoch, train.len());
        let mut sums = SampleLoss::default();
        let mut lr = cfg.lr_max;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            lr = cosine_lr(
                (epoch * steps_per_epoch + step) as f64 / steps_per_epoch as f64,
                cfg.epochs,
                cfg.lr_max,
                cfg.lr_min,
            );
            let mut acc: Option<Vec<Vec<T>>> = None;
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train[i];
                let t = transforms[i];
                let (d, gt) = if t == Transform::IDENTITY {
                    (ex.degraded.clone(), ex.gt.clone())
                } else {
                    (t.apply(&ex.degraded)?, t.apply(&ex.gt)?)
                };
                debug_assert_eq!(d.height, size);
                let (loss, grads) = sample_gradients(&net, &d, &gt, &tokenized[i], &ex.labels())
                    .map_err(|e| Error::at_record(ex.record.id, e))?;
                if !loss.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch: epoch + 1,
                        step,
                        loss: loss.total,
                    });
                }
                sums.total += loss.total;
                sums.bce += loss.bce;
                sums.l1 += loss.l1;
                batch_loss += loss.total;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(a) => a
                        .iter_mut()
                        .zip(&grads)
                        .for_each(|(a, g)| a.iter_mut().zip(g).for_each(|(a, &g)| *a += g)),
                }
            }
            let mut grads = acc.expect("batches are non-empty");
            let inv = T::lit(1.0 / batch.len() as f64);
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            opt.step(&mut net, &grads, lr)?;
            ema_update(&mut ema, &net.model, cfg.ema_decay)?;
            curve.steps.push(batch_loss / batch.len() as f64);
        }
        let n = train.len() as f64;
        let (s1, s2) = net.uncertainty.values();
        let stats = EpochStats {
            epoch: epoch + 1,
            lr,
            loss: sums.total / n,
            bce: sums.bce / n,
            l1: sums.l1 / n,
            s1,
            s2,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {}/{}: loss {:.4} (bce {:.4}, l1 {:.4}) lr {:.5} in {:.1}s",
            stats.epoch,
            cfg.epochs,
            stats.loss,
            stats.bce,
            stats.l1,
            stats.lr,
            stats.seconds
        );
        curve.epochs.push(stats);
    }
    Ok(FitOutput {
        model: net.model,
        ema,
        uncertainty: net.uncertainty,
        curve,
    })
}

/// Writes the checkpoint (live and EMA weights) and the loss curve.
pub fn save_run<T: Scalar>(out: &Path, run: &FitOutput<T>) -> Result<()> {
    std::fs::create_dir_all(out)?;
    checkpoint::save(out.join(CHECKPOINT_NAME), &run.model, Some(&run.ema))?;
    std::fs::write(out.join(CURVE_NAME), serde_json::to_string_pretty(&run.curve)? + "\n")?;
    Ok(())
}
