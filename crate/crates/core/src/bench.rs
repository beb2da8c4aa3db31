//! Parameter and multiply-accumulate accounting for the attention modules,
//! log-log scaling fits and wall-clock measurement.
//!
//! Convention: one multiply-accumulate counts as one FLOP. Linear
//! projections, attention products and depthwise convolutions are counted;
//! softmax, pooling, additions and normalisation are not. Position-encoding
//! tables are reported separately from the other parameters.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::attention::{AttnConfig, CrossAttention, Mhaca, Mhasa, Mhsa};
use crate::autodiff::Graph;
use crate::blocks::BlockConfig;
use crate::error::{Error, Result};
use crate::gradcheck::probe_weights;
use crate::model::ModelConfig;
use crate::nn::{Init, Module};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AttentionKind {
    Mhsa,
    Mhasa,
    Mhaca,
    CrossAttention,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 4] = [Self::Mhsa, Self::Mhasa, Self::Mhaca, Self::CrossAttention];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mhsa => "mhsa",
            Self::Mhasa => "mhasa",
            Self::Mhaca => "mhaca",
            Self::CrossAttention => "cross",
        }
    }

    pub fn is_cross(self) -> bool {
        matches!(self, Self::Mhaca | Self::CrossAttention)
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unsupported attention kind {s:?} (mhsa, mhasa, mhaca, cross)")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    /// Learnable scalars excluding position encodings.
    pub weights: u64,
    pub pos_encoding: u64,
}

impl ParamCount {
    pub fn total(&self) -> u64 {
        self.weights + self.pos_encoding
    }
}

fn linear(i: usize, o: usize) -> u64 {
    (i * o + o) as u64
}

fn conv(cin: usize, cout: usize, k: usize) -> u64 {
    (cout * cin * k * k + cout) as u64
}

fn depthwise(c: usize) -> u64 {
    (9 * c + c) as u64
}

fn layer_norm(c: usize) -> u64 {
    2 * c as u64
}

fn check_cfg(kind: AttentionKind, cfg: &AttnConfig) -> Result<()> {
    cfg.validate()?;
    if kind.is_cross() && cfg.text_len == 0 {
        return Err(Error::Config(format!("{kind} needs a positive text length")));
    }
    Ok(())
}

pub fn analytic_params(kind: AttentionKind, cfg: &AttnConfig) -> ParamCount {
    let c = cfg.channels;
    let map = (cfg.height * cfg.width * c) as u64;
    match kind {
        AttentionKind::Mhsa | AttentionKind::CrossAttention => ParamCount {
            weights: 4 * linear(c, c),
            pos_encoding: 0,
        },
        AttentionKind::Mhasa => ParamCount {
            weights: 4 * linear(c, c) + depthwise(c),
            pos_encoding: map,
        },
        AttentionKind::Mhaca => ParamCount {
            weights: 3 * linear(c, c),
            pos_encoding: map + (cfg.text_len * c) as u64,
        },
    }
}

/// MACs of the token-mixing products only (no projections or convolutions).
pub fn attention_core_macs(kind: AttentionKind, cfg: &AttnConfig) -> u64 {
    let (n, c, l) = (cfg.tokens() as u64, cfg.channels as u64, cfg.text_len as u64);
    let a = cfg.agent_tokens() as u64;
    match kind {
        AttentionKind::Mhsa => 2 * n * n * c,
        AttentionKind::Mhasa => 4 * a * n * c,
        AttentionKind::Mhaca => 2 * a * l * c + 2 * n * a * c,
        AttentionKind::CrossAttention => 2 * n * l * c,
    }
}

/// Total forward MACs at the configured spatial size.
pub fn analytic_macs(kind: AttentionKind, cfg: &AttnConfig) -> u64 {
    let (n, c, l) = (cfg.tokens() as u64, cfg.channels as u64, cfg.text_len as u64);
    let projections = match kind {
        AttentionKind::Mhsa => 4 * n * c * c,
        AttentionKind::Mhasa => 4 * n * c * c + 9 * n * c,
        AttentionKind::Mhaca => n * c * c + 2 * l * c * c,
        AttentionKind::CrossAttention => 2 * n * c * c + 2 * l * c * c,
    };
    projections + attention_core_macs(kind, cfg)
}

enum AnyAttention {
    Mhsa(Mhsa<f64>),
    Mhasa(Mhasa<f64>),
    Mhaca(Mhaca<f64>),
    Cross(CrossAttention<f64>),
}

impl AnyAttention {
    fn new(kind: AttentionKind, cfg: AttnConfig, seed: u64) -> Result<Self> {
        check_cfg(kind, &cfg)?;
        let init = &mut Init::new(seed);
        Ok(match kind {
            AttentionKind::Mhsa => Self::Mhsa(Mhsa::new(init, "m", cfg)?),
            AttentionKind::Mhasa => Self::Mhasa(Mhasa::new(init, "m", cfg)?),
            AttentionKind::Mhaca => Self::Mhaca(Mhaca::new(init, "m", cfg)?),
            AttentionKind::CrossAttention => Self::Cross(CrossAttention::new(init, "m", cfg)?),
        })
    }

    fn module(&self) -> &dyn Module<f64> {
        match self {
            Self::Mhsa(m) => m,
            Self::Mhasa(m) => m,
            Self::Mhaca(m) => m,
            Self::Cross(m) => m,
        }
    }

    fn forward(&self, g: &Graph<f64>, cfg: &AttnConfig, seed: u64) -> Result<()> {
        let x = g.constant(probe_weights(&[cfg.height, cfg.width, cfg.channels], seed));
        let text = || g.constant(probe_weights(&[cfg.text_len, cfg.channels], seed + 1));
        match self {
            Self::Mhsa(m) => m.forward(g, x)?,
            Self::Mhasa(m) => m.forward(g, x)?,
            Self::Mhaca(m) => m.forward(g, x, text())?,
            Self::Cross(m) => m.forward(g, x, text())?,
        };
        Ok(())
    }
}

/// Counts the scalars of an instantiated module, splitting out position tables.
pub fn enumerated_params(kind: AttentionKind, cfg: &AttnConfig) -> Result<ParamCount> {
    let m = AnyAttention::new(kind, *cfg, 0)?;
    let mut count = ParamCount::default();
    m.module().visit(&mut |p| {
        if p.name().contains(".pos") {
            count.pos_encoding += p.numel() as u64;
        } else {
            count.weights += p.numel() as u64;
        }
    });
    Ok(count)
}

/// MACs recorded by the graph while running one forward pass.
pub fn measured_macs(kind: AttentionKind, cfg: &AttnConfig) -> Result<u64> {
    let m = AnyAttention::new(kind, *cfg, 0)?;
    let g = Graph::inference();
    m.forward(&g, cfg, 1)?;
    Ok(g.macs())
}

#[derive(Clone, Debug, Serialize)]
pub struct RuntimeStats {
    pub warmup: usize,
    pub repeats: usize,
    pub median_ms: f64,
    pub q1_ms: f64,
    pub q3_ms: f64,
    pub iqr_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CostReport {
    pub module: AttentionKind,
    pub config: AttnConfig,
    pub agent_tokens: usize,
    pub params: u64,
    pub pos_encoding_params: u64,
    pub flops: u64,
    pub attention_core_flops: u64,
    pub runtime: Option<RuntimeStats>,
}

/// Analytic costs; the parameter count is cross-checked against an
/// instantiated module and an error is returned on disagreement.
pub fn count_costs(kind: AttentionKind, cfg: &AttnConfig) -> Result<CostReport> {
    check_cfg(kind, cfg)?;
    let analytic = analytic_params(kind, cfg);
    let enumerated = enumerated_params(kind, cfg)?;
    if analytic != enumerated {
        return Err(Error::invalid(
            "count_costs",
            format!("{kind}: analytic {analytic:?} but instantiated {enumerated:?}"),
        ));
    }
    Ok(CostReport {
        module: kind,
        config: *cfg,
        agent_tokens: cfg.agent_tokens(),
        params: analytic.weights,
        pos_encoding_params: analytic.pos_encoding,
        flops: analytic_macs(kind, cfg),
        attention_core_flops: attention_core_macs(kind, cfg),
        runtime: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(N, value)` pairs the fit was made on.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid(
            "fit_loglog",
            "need at least two strictly positive points",
        ));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit_loglog", "all x values are equal"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(ScalingFit {
        slope,
        intercept,
        r2,
        points: points.to_vec(),
    })
}

fn check_grid(sides: &[usize]) -> Result<()> {
    let lo = sides.iter().copied().min().unwrap_or(0);
    let hi = sides.iter().copied().max().unwrap_or(0);
    let mut distinct = sides.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 || lo == 0 || hi * hi < 16 * lo * lo {
        return Err(Error::invalid(
            "scaling_experiment",
            format!("grid {sides:?} must have at least 4 distinct sides spanning 16x in token count"),
        ));
    }
    Ok(())
}

fn at_side(cfg: &AttnConfig, side: usize) -> AttnConfig {
    AttnConfig {
        height: side,
        width: side,
        ..*cfg
    }
}

/// Fits the attention-core MACs against `N = side²` with heads, channels and
/// agent count held fixed.
pub fn scaling_experiment(kind: AttentionKind, cfg: &AttnConfig, sides: &[usize]) -> Result<ScalingFit> {
    check_grid(sides)?;
    let points: Vec<(f64, f64)> = sides
        .iter()
        .map(|&s| {
            let c = at_side(cfg, s);
            ((s * s) as f64, attention_core_macs(kind, &c) as f64)
        })
        .collect();
    fit_loglog(&points)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and interquartile range of `repeats` timed calls after `warmup`
/// untimed ones.
pub fn time_it(warmup: usize, repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<RuntimeStats> {
    if warmup < 3 || repeats == 0 {
        return Err(Error::invalid(
            "runtime_bench",
            "need at least 3 warmup runs and 1 timed run",
        ));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut ms = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&ms, 0.25), quantile(&ms, 0.75));
    Ok(RuntimeStats {
        warmup,
        repeats,
        median_ms: quantile(&ms, 0.5),
        q1_ms: q1,
        q3_ms: q3,
        iqr_ms: q3 - q1,
    })
}

/// Wall time of an inference-mode forward pass on fixed inputs.
pub fn runtime_bench(kind: AttentionKind, cfg: &AttnConfig, warmup: usize, repeats: usize) -> Result<RuntimeStats> {
    let m = AnyAttention::new(kind, *cfg, 0)?;
    time_it(warmup, repeats, || m.forward(&Graph::inference(), cfg, 1))
}

/// Wall-time scaling over the same kind of grid as [`scaling_experiment`].
pub fn runtime_scaling(
    kind: AttentionKind,
    cfg: &AttnConfig,
    sides: &[usize],
    warmup: usize,
    repeats: usize,
) -> Result<(ScalingFit, Vec<RuntimeStats>)> {
    check_grid(sides)?;
    let mut stats = Vec::new();
    let mut points = Vec::new();
    for &s in sides {
        let r = runtime_bench(kind, &at_side(cfg, s), warmup, repeats)?;
        points.push(((s * s) as f64, r.median_ms));
        stats.push(r);
    }
    Ok((fit_loglog(&points)?, stats))
}

/// Closed-form parameter count of the full network for a vocabulary size.
pub fn model_param_count(cfg: &ModelConfig, vocab_size: usize) -> u64 {
    let [c1, c2, c4, c8] = cfg.ladder();
    let (ih, iw) = cfg.image_size;
    let block_cfg = |c: usize, scale: usize| BlockConfig {
        channels: c,
        heads: 1,
        agent: cfg.agent,
        expansion: cfg.expansion,
        resolution: (ih / scale, iw / scale),
    };
    let hc_block = |c: usize, scale: usize| {
        let b = block_cfg(c, scale);
        let h = b.hidden();
        let mhasa = analytic_params(AttentionKind::Mhasa, &b.attn()).total();
        let gdfn = conv(c, 2 * h, 1) + depthwise(2 * h) + conv(h, c, 1);
        2 * layer_norm(c) + mhasa + gdfn
    };
    let mhaca = |c: usize, scale: usize| {
        let a = block_cfg(c, scale).attn().with_text_len(cfg.prompt_len);
        analytic_params(AttentionKind::Mhaca, &a).total()
    };
    let stack = |n: usize, c: usize, scale: usize| n as u64 * hc_block(c, scale);

    let d = cfg.text_dim;
    let text_layer = 2 * layer_norm(d) + 4 * linear(d, d) + linear(d, cfg.text_ffn) + linear(cfg.text_ffn, d);
    let text = (vocab_size * d + cfg.prompt_len * d) as u64
        + cfg.text_layers as u64 * text_layer
        + layer_norm(d)
        + linear(d, c8)
        + linear(d, c4);

    let encoder = conv(3, c1, 3)
        + stack(cfg.blocks[0], c1, 1)
        + conv(c1, c1 / 2, 1)
        + stack(cfg.blocks[1], c2, 2)
        + conv(c2, c2 / 2, 1)
        + stack(cfg.blocks[2], c4, 4)
        + conv(c4, c4 / 2, 1)
        + stack(cfg.blocks[3], c8, 8);
    let mdp =
        conv(c8, c8, 3) + layer_norm(c8) + linear(c8, c8 / 2) + linear(c8 / 2, c8 / 4) + linear(c8 / 4, cfg.labels);
    let decoder = mhaca(c8, 8)
        + conv(c8, 2 * c8, 1)
        + conv(c8, c4, 1)
        + mhaca(c4, 4)
        + stack(cfg.blocks[2], c4, 4)
        + conv(c4, 2 * c4, 1)
        + conv(c4, c2, 1)
        + stack(cfg.blocks[1], c2, 2)
        + conv(c2, 2 * c2, 1)
        + stack(cfg.blocks[0], c2, 1)
        + stack(cfg.refinement, c2, 1)
        + conv(c2, 3, 3);
    text + encoder + mdp + decoder
}

/// One row per attention kind at a given configuration.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteEntry {
    pub label: String,
    pub report: CostReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub convention: &'static str,
    pub entries: Vec<SuiteEntry>,
    pub scaling: Vec<(AttentionKind, ScalingFit)>,
    pub runtime_scaling: Option<(ScalingFit, Vec<RuntimeStats>)>,
}

pub const CONVENTION: &str = "1 MAC = 1 FLOP; projections, attention products and depthwise convs counted; \
softmax, pooling, additions and norms excluded; position encodings reported separately";

/// Stage-3 and stage-4 self-attention rows, the fusion-point cross-attention
/// rows and the token-count scaling fits.
pub fn attention_suite(timing: Option<(usize, usize)>) -> Result<SuiteReport> {
    let stage3 = AttnConfig::new(192, 4, (12, 12), (32, 32));
    let stage4 = AttnConfig::new(384, 8, (12, 12), (16, 16));
    let fusion = stage4.with_text_len(20);
    let rows = [
        ("stage3", AttentionKind::Mhsa, stage3),
        ("stage3", AttentionKind::Mhasa, stage3),
        ("stage4", AttentionKind::Mhsa, stage4),
        ("stage4", AttentionKind::Mhasa, stage4),
        ("fusion", AttentionKind::Mhaca, fusion),
        ("fusion", AttentionKind::CrossAttention, fusion),
    ];
    let mut entries = Vec::new();
    for (label, kind, cfg) in rows {
        let mut report = count_costs(kind, &cfg)?;
        if let Some((warmup, repeats)) = timing {
            report.runtime = Some(runtime_bench(kind, &cfg, warmup, repeats)?);
        }
        entries.push(SuiteEntry {
            label: label.to_string(),
            report,
        });
    }
    let sides = [16, 32, 64, 128];
    let base = AttnConfig::new(48, 1, (12, 12), (16, 16));
    let scaling = [AttentionKind::Mhasa, AttentionKind::Mhsa]
        .into_iter()
        .map(|k| Ok((k, scaling_experiment(k, &base, &sides)?)))
        .collect::<Result<Vec<_>>>()?;
    let runtime_scaling = match timing {
        Some((warmup, repeats)) => Some(runtime_scaling(AttentionKind::Mhasa, &base, &sides, warmup, repeats)?),
        None => None,
    };
    Ok(SuiteReport {
        convention: CONVENTION,
        entries,
        scaling,
        runtime_scaling,
    })
}
