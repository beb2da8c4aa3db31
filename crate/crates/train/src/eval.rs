//! Category-grouped restoration and perception metrics.

use std::collections::BTreeMap;

use rfir_core::metrics::{multilabel_accuracy, psnr, ssim};
use rfir_core::{Graph, Scalar, Tensor, TransRfir};
use rfir_datagen::{Image, Kind, PromptStyle};
use serde::{Deserialize, Serialize};

use crate::data::{from_tensor, to_tensor, Example};
use crate::error::{Error, Result};

/// Which weights produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    Ema,
    Live,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    /// Restored vs ground truth.
    pub psnr: f64,
    pub ssim: f64,
    /// Degraded input vs ground truth.
    pub input_psnr: f64,
    pub input_ssim: f64,
}

impl Metrics {
    fn mean_of<'a>(samples: impl IntoIterator<Item = &'a SampleEval>) -> Self {
        let mut m = Metrics::default();
        for s in samples {
            m.count += 1;
            m.psnr += s.psnr;
            m.ssim += s.ssim;
            m.input_psnr += s.input_psnr;
            m.input_ssim += s.input_ssim;
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.psnr /= n;
            m.ssim /= n;
            m.input_psnr /= n;
            m.input_ssim /= n;
        }
        m
    }

    /// Sample-weighted mean of several blocks.
    pub fn pooled<'a>(blocks: impl IntoIterator<Item = &'a Metrics>) -> Self {
        let mut m = Metrics::default();
        for b in blocks {
            let n = b.count as f64;
            m.count += b.count;
            m.psnr += n * b.psnr;
            m.ssim += n * b.ssim;
            m.input_psnr += n * b.input_psnr;
            m.input_ssim += n * b.input_ssim;
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.psnr /= n;
            m.ssim /= n;
            m.input_psnr /= n;
            m.input_ssim /= n;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: usize,
    pub category: String,
    pub present: Vec<Kind>,
    pub removed: Vec<Kind>,
    pub psnr: f64,
    pub ssim: f64,
    pub input_psnr: f64,
    pub input_ssim: f64,
    pub mdp_correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub weights: Weights,
    pub prompt_style: PromptStyle,
    /// Keyed `present-removed`, e.g. `2-1`.
    pub categories: BTreeMap<String, Metrics>,
    pub overall: Metrics,
    /// Exact-match multi-label accuracy of the perception head.
    pub mdp_accuracy: f64,
    pub samples: Vec<SampleEval>,
}

impl EvalReport {
    /// Mean metrics over the samples matching `keep`.
    pub fn subset(&self, keep: impl Fn(&SampleEval) -> bool) -> Metrics {
        Metrics::mean_of(self.samples.iter().filter(|s| keep(s)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Restoration and logits of one example.
pub struct Prediction {
    pub restored: Image,
    pub logits: Vec<f64>,
}

/// Evaluates an arbitrary predictor; the restored image is clamped to
/// `[0, 1]` before scoring.
pub fn evaluate_with(
    examples: &[Example],
    weights: Weights,
    style: PromptStyle,
    mut predict: impl FnMut(&Example) -> Result<Prediction>,
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    let mut samples = Vec::with_capacity(examples.len());
    let (mut logits, mut labels) = (Vec::new(), Vec::new());
    for ex in examples {
        let pred = predict(ex).map_err(|e| Error::at_record(ex.record.id, e))?;
        let restored = to_tensor::<f64>(&pred.restored.clamp01());
        let (gt, degraded) = (to_tensor::<f64>(&ex.gt), to_tensor::<f64>(&ex.degraded));
        let z = Tensor::new(vec![1, pred.logits.len()], pred.logits.clone())?;
        let y = Tensor::new(vec![1, 5], ex.labels().to_vec())?;
        samples.push(SampleEval {
            id: ex.record.id,
            category: ex.record.category.to_string(),
            present: ex.record.present.clone(),
            removed: ex.record.removed.clone(),
            psnr: psnr(&restored, &gt, 1.0)?,
            ssim: ssim(&restored, &gt)?,
            input_psnr: psnr(&degraded, &gt, 1.0)?,
            input_ssim: ssim(&degraded, &gt)?,
            mdp_correct: multilabel_accuracy(&z, &y)? == 1.0,
        });
        logits.extend(pred.logits);
        labels.extend(ex.labels());
    }
    let n = examples.len();
    let mdp_accuracy = multilabel_accuracy(&Tensor::new(vec![n, 5], logits)?, &Tensor::new(vec![n, 5], labels)?)?;
    let mut categories = BTreeMap::new();
    for s in &samples {
        categories.entry(s.category.clone()).or_insert_with(Vec::new).push(s);
    }
    let categories: BTreeMap<String, Metrics> = categories.into_iter().map(|(k, v)| (k, Metrics::mean_of(v))).collect();
    Ok(EvalReport {
        weights,
        prompt_style: style,
        overall: Metrics::pooled(categories.values()),
        categories,
        mdp_accuracy,
        samples,
    })
}

/// Runs the network on one image with a text prompt.
pub fn restore_image<T: Scalar>(model: &TransRfir<T>, img: &Image, prompt: &str) -> Result<Prediction> {
    let g = Graph::inference();
    let out = model.restore_prompt(&g, g.constant(to_tensor(img)), prompt)?;
    Ok(Prediction {
        restored: from_tensor(&out.restored.value())?,
        logits: out.mdp_logits.value().data().iter().map(|v| v.as_f64()).collect(),
    })
}

pub fn evaluate<T: Scalar>(
    model: &TransRfir<T>,
    examples: &[Example],
    weights: Weights,
    style: PromptStyle,
) -> Result<EvalReport> {
    evaluate_with(examples, weights, style, |ex| {
        restore_image(model, &ex.degraded, ex.record.prompt(style))
    })
}
