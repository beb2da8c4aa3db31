//! Agent attention (self and cross) and the vanilla multi-head baselines.
//!
//! Feature maps are `[H, W, C]`; tokens are the row-major flattening `[H*W, C]`.
//! Heads split the channel axis into contiguous groups of `d = C / heads`.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::impl_module;
use crate::nn::{Conv2d, Init, Linear, Param};
use crate::scalar::Scalar;

/// Shape parameters shared by the attention modules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct AttnConfig {
    pub channels: usize,
    pub heads: usize,
    pub agent_h: usize,
    pub agent_w: usize,
    /// Spatial size the position encodings are stored at.
    pub height: usize,
    pub width: usize,
    /// Text length; only used by cross attention.
    pub text_len: usize,
}

impl AttnConfig {
    pub fn new(channels: usize, heads: usize, agent: (usize, usize), spatial: (usize, usize)) -> Self {
        AttnConfig {
            channels,
            heads,
            agent_h: agent.0,
            agent_w: agent.1,
            height: spatial.0,
            width: spatial.1,
            text_len: 0,
        }
    }

    pub fn with_text_len(mut self, len: usize) -> Self {
        self.text_len = len;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn tokens(&self) -> usize {
        self.height * self.width
    }

    /// Agent grid actually used at the configured resolution.
    pub fn agent_tokens(&self) -> usize {
        let (ah, aw) = agent_grid(self, self.height, self.width);
        ah * aw
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} channels cannot be split into {} heads",
                self.channels, self.heads
            )));
        }
        if self.agent_h == 0 || self.agent_w == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config("agent grid and spatial size must be positive".into()));
        }
        if self.agent_h > self.height || self.agent_w > self.width {
            log::warn!(
                "agent grid {}x{} exceeds {}x{} feature map; clamping",
                self.agent_h,
                self.agent_w,
                self.height,
                self.width
            );
        }
        Ok(())
    }
}

fn agent_grid(cfg: &AttnConfig, h: usize, w: usize) -> (usize, usize) {
    (cfg.agent_h.min(h), cfg.agent_w.min(w))
}

/// Learnable additive position encoding: `[H, W, C]` for images, `[L, C]` for text.
#[derive(Clone, Debug)]
pub struct PosEncoding<T> {
    pub table: Param<T>,
}

impl_module!(PosEncoding { param table });

impl<T: Scalar> PosEncoding<T> {
    pub fn image(init: &mut Init, name: &str, h: usize, w: usize, c: usize) -> Self {
        PosEncoding {
            table: Param::new(format!("{name}.table"), init.small(&[h, w, c])),
        }
    }

    pub fn text(init: &mut Init, name: &str, len: usize, c: usize) -> Self {
        PosEncoding {
            table: Param::new(format!("{name}.table"), init.small(&[len, c])),
        }
    }

    /// Image encoding at `h x w`, bilinearly resized from the stored grid when
    /// the sizes differ.
    pub fn image_at<'g>(&self, g: &'g Graph<T>, h: usize, w: usize) -> Result<Var<'g, T>> {
        g.param(&self.table).resize_bilinear(h, w)
    }
}

/// `rowsoftmax(Q K^T / sqrt(d)) V` for `Q: [n_q, d]`, `K: [n_k, d]`, `V: [n_k, d_v]`.
pub fn softmax_attention<'g, T: Scalar>(q: Var<'g, T>, k: Var<'g, T>, v: Var<'g, T>) -> Result<Var<'g, T>> {
    Ok(attend(q, k, v)?.0)
}

/// As [`softmax_attention`], also returning the `[n_q, n_k]` attention matrix.
pub fn attend<'g, T: Scalar>(q: Var<'g, T>, k: Var<'g, T>, v: Var<'g, T>) -> Result<(Var<'g, T>, Var<'g, T>)> {
    let qs = q.shape();
    if qs.len() != 2 {
        return Err(Error::invalid(
            "softmax_attention",
            format!("queries must be 2-D, got {qs:?}"),
        ));
    }
    let scale = T::lit(1.0 / (qs[1] as f64).sqrt());
    let weights = q.matmul_nt(&k)?.scale(scale).softmax(1)?;
    Ok((weights.matmul(&v)?, weights))
}

fn check_map<T: Scalar>(x: &Var<'_, T>, channels: usize, op: &'static str) -> Result<(usize, usize)> {
    match x.shape()[..] {
        [h, w, c] if c == channels => Ok((h, w)),
        ref s => Err(Error::shape(op, s, &[0, 0, channels])),
    }
}

/// Agent tokens for one head: the `[N, d]` queries pooled on the spatial grid
/// down to `[n, d]`.
fn pool_agents<'g, T: Scalar>(q: Var<'g, T>, h: usize, w: usize, grid: (usize, usize)) -> Result<Var<'g, T>> {
    let d = q.shape()[1];
    q.reshape(&[h, w, d])?
        .adaptive_avg_pool(grid.0, grid.1)?
        .reshape(&[grid.0 * grid.1, d])
}

/// Two-stage agent attention per head. Returns merged `[N, C]` features and
/// every attention matrix in head order (agent stage, then broadcast stage).
fn agent_heads<'g, T: Scalar>(
    q: Var<'g, T>,
    k: Var<'g, T>,
    v: Var<'g, T>,
    heads: usize,
    h: usize,
    w: usize,
    grid: (usize, usize),
) -> Result<(Var<'g, T>, Vec<Var<'g, T>>)> {
    let d = q.shape()[1] / heads;
    let mut outs = Vec::with_capacity(heads);
    let mut maps = Vec::with_capacity(2 * heads);
    for i in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (q.narrow(1, i * d, d)?, k.narrow(1, i * d, d)?, v.narrow(1, i * d, d)?)
        };
        let a = pool_agents(qh, h, w, grid)?;
        let (va, m1) = attend(a, kh, vh)?;
        let (f, m2) = attend(qh, a, va)?;
        outs.push(f);
        maps.push(m1);
        maps.push(m2);
    }
    let merged = if heads == 1 { outs[0] } else { Var::concat(&outs, 1)? };
    Ok((merged, maps))
}

/// Multi-head agent self-attention.
///
/// `F_p = F + P`, `Q, K, V` are linear projections of `F_p`; per head the
/// pooled agents `A` gather `V_A = σ(A, K, V)` and broadcast it back as
/// `σ(Q, A, V_A)`. A 3x3 depthwise convolution of `V` is added before the
/// output projection.
#[derive(Clone, Debug)]
pub struct Mhasa<T> {
    pub cfg: AttnConfig,
    pub pos: PosEncoding<T>,
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub dw: Conv2d<T>,
    pub proj: Linear<T>,
}

impl_module!(Mhasa { module pos, module q, module k, module v, module dw, module proj });

impl<T: Scalar> Mhasa<T> {
    pub fn new(init: &mut Init, name: &str, cfg: AttnConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        Ok(Mhasa {
            cfg,
            pos: PosEncoding::image(init, &format!("{name}.pos"), cfg.height, cfg.width, c),
            q: Linear::new(init, &format!("{name}.q"), c, c),
            k: Linear::new(init, &format!("{name}.k"), c, c),
            v: Linear::new(init, &format!("{name}.v"), c, c),
            dw: Conv2d::depthwise(init, &format!("{name}.dw"), c, 3),
            proj: Linear::new(init, &format!("{name}.proj"), c, c),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(self.forward_maps(g, x)?.0)
    }

    /// Forward pass that also returns the attention matrices.
    pub fn forward_maps<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<(Var<'g, T>, Vec<Var<'g, T>>)> {
        let c = self.cfg.channels;
        let (h, w) = check_map(&x, c, "mhasa")?;
        let n = h * w;
        let fp = x.add(&self.pos.image_at(g, h, w)?)?.reshape(&[n, c])?;
        let q = self.q.forward(g, fp)?;
        let k = self.k.forward(g, fp)?;
        let v = self.v.forward(g, fp)?;
        let grid = agent_grid(&self.cfg, h, w);
        let (f, maps) = agent_heads(q, k, v, self.cfg.heads, h, w, grid)?;
        let local = self.dw.forward(g, v.reshape(&[h, w, c])?)?.reshape(&[n, c])?;
        let y = self.proj.forward(g, f.add(&local)?)?;
        Ok((y.reshape(&[h, w, c])?, maps))
    }
}

/// Multi-head agent cross-attention between an image map and text tokens.
///
/// `Q = F_I W_Q + P_I`, `K = F_T W_K + P_T`, `V = F_T W_V + P_T`; agents are
/// pooled from `Q` and the result is added back onto `F_I`. There is no output
/// projection.
#[derive(Clone, Debug)]
pub struct Mhaca<T> {
    pub cfg: AttnConfig,
    pub pos_image: PosEncoding<T>,
    pub pos_text: PosEncoding<T>,
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
}

impl_module!(Mhaca { module pos_image, module pos_text, module q, module k, module v });

impl<T: Scalar> Mhaca<T> {
    pub fn new(init: &mut Init, name: &str, cfg: AttnConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.text_len == 0 {
            return Err(Error::Config("cross attention needs a positive text length".into()));
        }
        let c = cfg.channels;
        Ok(Mhaca {
            cfg,
            pos_image: PosEncoding::image(init, &format!("{name}.pos_image"), cfg.height, cfg.width, c),
            pos_text: PosEncoding::text(init, &format!("{name}.pos_text"), cfg.text_len, c),
            q: Linear::new(init, &format!("{name}.q"), c, c),
            k: Linear::new(init, &format!("{name}.k"), c, c),
            v: Linear::new(init, &format!("{name}.v"), c, c),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, image: Var<'g, T>, text: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(self.forward_maps(g, image, text)?.0)
    }

    pub fn forward_maps<'g>(
        &self,
        g: &'g Graph<T>,
        image: Var<'g, T>,
        text: Var<'g, T>,
    ) -> Result<(Var<'g, T>, Vec<Var<'g, T>>)> {
        let c = self.cfg.channels;
        let (h, w) = check_map(&image, c, "mhaca")?;
        let ts = text.shape();
        if ts != [self.cfg.text_len, c] {
            return Err(Error::shape("mhaca text", &ts, &[self.cfg.text_len, c]));
        }
        let n = h * w;
        let pi = self.pos_image.image_at(g, h, w)?.reshape(&[n, c])?;
        let pt = g.param(&self.pos_text.table);
        let q = self.q.forward(g, image.reshape(&[n, c])?)?.add(&pi)?;
        let k = self.k.forward(g, text)?.add(&pt)?;
        let v = self.v.forward(g, text)?.add(&pt)?;
        let grid = agent_grid(&self.cfg, h, w);
        let (f, maps) = agent_heads(q, k, v, self.cfg.heads, h, w, grid)?;
        Ok((f.reshape(&[h, w, c])?.add(&image)?, maps))
    }
}

/// Per-head full softmax attention followed by head merge.
pub fn multi_head_attention<'g, T: Scalar>(
    q: Var<'g, T>,
    k: Var<'g, T>,
    v: Var<'g, T>,
    heads: usize,
) -> Result<Var<'g, T>> {
    if heads == 1 {
        return softmax_attention(q, k, v);
    }
    let d = q.shape()[1] / heads;
    let outs = (0..heads)
        .map(|i| softmax_attention(q.narrow(1, i * d, d)?, k.narrow(1, i * d, d)?, v.narrow(1, i * d, d)?))
        .collect::<Result<Vec<_>>>()?;
    Var::concat(&outs, 1)
}

/// Vanilla multi-head self-attention over all `H*W` tokens.
#[derive(Clone, Debug)]
pub struct Mhsa<T> {
    pub cfg: AttnConfig,
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub proj: Linear<T>,
}

impl_module!(Mhsa { module q, module k, module v, module proj });

impl<T: Scalar> Mhsa<T> {
    pub fn new(init: &mut Init, name: &str, cfg: AttnConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        Ok(Mhsa {
            cfg,
            q: Linear::new(init, &format!("{name}.q"), c, c),
            k: Linear::new(init, &format!("{name}.k"), c, c),
            v: Linear::new(init, &format!("{name}.v"), c, c),
            proj: Linear::new(init, &format!("{name}.proj"), c, c),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let c = self.cfg.channels;
        let (h, w) = check_map(&x, c, "mhsa")?;
        let t = x.reshape(&[h * w, c])?;
        let f = multi_head_attention(
            self.q.forward(g, t)?,
            self.k.forward(g, t)?,
            self.v.forward(g, t)?,
            self.cfg.heads,
        )?;
        self.proj.forward(g, f)?.reshape(&[h, w, c])
    }
}

/// Vanilla multi-head cross-attention: image queries attend to every text token.
#[derive(Clone, Debug)]
pub struct CrossAttention<T> {
    pub cfg: AttnConfig,
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub proj: Linear<T>,
}

impl_module!(CrossAttention { module q, module k, module v, module proj });

impl<T: Scalar> CrossAttention<T> {
    pub fn new(init: &mut Init, name: &str, cfg: AttnConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        Ok(CrossAttention {
            cfg,
            q: Linear::new(init, &format!("{name}.q"), c, c),
            k: Linear::new(init, &format!("{name}.k"), c, c),
            v: Linear::new(init, &format!("{name}.v"), c, c),
            proj: Linear::new(init, &format!("{name}.proj"), c, c),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, image: Var<'g, T>, text: Var<'g, T>) -> Result<Var<'g, T>> {
        let c = self.cfg.channels;
        let (h, w) = check_map(&image, c, "cross_attention")?;
        let q = self.q.forward(g, image.reshape(&[h * w, c])?)?;
        let f = multi_head_attention(q, self.k.forward(g, text)?, self.v.forward(g, text)?, self.cfg.heads)?;
        self.proj.forward(g, f)?.reshape(&[h, w, c])
    }
}
