//! Composite blocks: GDFN, the hybrid context block, resampling units and the
//! degradation-perception head.

use crate::attention::{AttnConfig, Mhasa};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::impl_module;
use crate::kernels::Conv2dSpec;
use crate::nn::{Conv2d, Init, LayerNorm, Linear};
use crate::scalar::Scalar;

pub const GDFN_EXPANSION: f64 = 2.66;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockConfig {
    pub channels: usize,
    pub heads: usize,
    pub agent: (usize, usize),
    pub expansion: f64,
    /// Feature-map size the block's position encoding is stored at.
    pub resolution: (usize, usize),
}

impl BlockConfig {
    pub fn hidden(&self) -> usize {
        ((self.channels as f64 * self.expansion).round() as usize).max(1)
    }

    pub fn attn(&self) -> AttnConfig {
        AttnConfig::new(self.channels, self.heads, self.agent, self.resolution)
    }
}

/// Gated depthwise-conv feedforward:
/// `out = W_o (gelu(dw(W_1 x)) * dw(W_2 x))`.
///
/// Both input projections live in one `C -> 2h` pointwise conv followed by a
/// depthwise conv over all `2h` channels; the two halves are the gate paths.
#[derive(Clone, Debug)]
pub struct Gdfn<T> {
    pub project_in: Conv2d<T>,
    pub dw: Conv2d<T>,
    pub project_out: Conv2d<T>,
    hidden: usize,
}

impl_module!(Gdfn { module project_in, module dw, module project_out });

impl<T: Scalar> Gdfn<T> {
    pub fn new(init: &mut Init, name: &str, channels: usize, hidden: usize) -> Self {
        Gdfn {
            project_in: Conv2d::pointwise(init, &format!("{name}.project_in"), channels, 2 * hidden),
            dw: Conv2d::depthwise(init, &format!("{name}.dw"), 2 * hidden, 3),
            project_out: Conv2d::pointwise(init, &format!("{name}.project_out"), hidden, channels),
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.hidden;
        let both = self.dw.forward(g, self.project_in.forward(g, x)?)?;
        let gate = both.narrow(2, 0, h)?.gelu();
        let value = both.narrow(2, h, h)?;
        self.project_out.forward(g, gate.mul(&value)?)
    }
}

/// `y = x + MHASA(LN(x))`, `out = y + GDFN(LN(y))`.
#[derive(Clone, Debug)]
pub struct HcBlock<T> {
    pub norm1: LayerNorm<T>,
    pub attn: Mhasa<T>,
    pub norm2: LayerNorm<T>,
    pub ffn: Gdfn<T>,
}

impl_module!(HcBlock { module norm1, module attn, module norm2, module ffn });

impl<T: Scalar> HcBlock<T> {
    pub fn new(init: &mut Init, name: &str, cfg: BlockConfig) -> Result<Self> {
        Ok(HcBlock {
            norm1: LayerNorm::new(&format!("{name}.norm1"), cfg.channels),
            attn: Mhasa::new(init, &format!("{name}.attn"), cfg.attn())?,
            norm2: LayerNorm::new(&format!("{name}.norm2"), cfg.channels),
            ffn: Gdfn::new(init, &format!("{name}.ffn"), cfg.channels, cfg.hidden()),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = x.add(&self.attn.forward(g, self.norm1.forward(g, x)?)?)?;
        y.add(&self.ffn.forward(g, self.norm2.forward(g, y)?)?)
    }
}

/// Halves the resolution and doubles the channels: 1x1 conv `C -> C/2`, then
/// pixel-unshuffle by 2.
#[derive(Clone, Debug)]
pub struct Downsample<T> {
    pub conv: Conv2d<T>,
}

impl_module!(Downsample { module conv });

impl<T: Scalar> Downsample<T> {
    pub fn new(init: &mut Init, name: &str, channels: usize) -> Result<Self> {
        if channels < 2 || !channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "downsample needs an even channel count, got {channels}"
            )));
        }
        Ok(Downsample {
            conv: Conv2d::pointwise(init, &format!("{name}.conv"), channels, channels / 2),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.conv.forward(g, x)?.pixel_unshuffle(2)
    }
}

/// Doubles the resolution and halves the channels: 1x1 conv `C -> 2C`, then
/// pixel-shuffle by 2.
#[derive(Clone, Debug)]
pub struct Upsample<T> {
    pub conv: Conv2d<T>,
}

impl_module!(Upsample { module conv });

impl<T: Scalar> Upsample<T> {
    pub fn new(init: &mut Init, name: &str, channels: usize) -> Result<Self> {
        if channels < 2 || !channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "upsample needs an even channel count, got {channels}"
            )));
        }
        Ok(Upsample {
            conv: Conv2d::pointwise(init, &format!("{name}.conv"), channels, 2 * channels),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.conv.forward(g, x)?.pixel_shuffle(2)
    }
}

/// Multi-label degradation classifier on the encoder latent.
///
/// Basic convolution (3x3 stride-2 conv, layer norm, GELU), global average
/// pool, then `8C -> 4C -> 2C -> D` linear layers with GELU between. Returns
/// raw logits.
#[derive(Clone, Debug)]
pub struct MdpHead<T> {
    pub conv: Conv2d<T>,
    pub norm: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub fc3: Linear<T>,
}

impl_module!(MdpHead { module conv, module norm, module fc1, module fc2, module fc3 });

impl<T: Scalar> MdpHead<T> {
    pub fn new(init: &mut Init, name: &str, channels: usize, labels: usize) -> Result<Self> {
        if channels < 4 || !channels.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "classifier width {channels} is not divisible by 4"
            )));
        }
        Ok(MdpHead {
            conv: Conv2d::new(
                init,
                &format!("{name}.conv"),
                channels,
                channels,
                3,
                Conv2dSpec::new(2, 1, 1),
            ),
            norm: LayerNorm::new(&format!("{name}.norm"), channels),
            fc1: Linear::new(init, &format!("{name}.fc1"), channels, channels / 2),
            fc2: Linear::new(init, &format!("{name}.fc2"), channels / 2, channels / 4),
            fc3: Linear::new(init, &format!("{name}.fc3"), channels / 4, labels),
        })
    }

    /// Basic convolution stage, `[h, w, C] -> [ceil(h/2), ceil(w/2), C]`.
    pub fn basic_conv<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(self.norm.forward(g, self.conv.forward(g, x)?)?.gelu())
    }

    /// Pooling and the linear stack applied to the basic-convolution output.
    pub fn classify<'g>(&self, g: &'g Graph<T>, f: Var<'g, T>) -> Result<Var<'g, T>> {
        let c = self.fc1.in_features();
        let pooled = f.adaptive_avg_pool(1, 1)?.reshape(&[1, c])?;
        let h = self.fc1.forward(g, pooled)?.gelu();
        let h = self.fc2.forward(g, h)?.gelu();
        let logits = self.fc3.forward(g, h)?;
        let d = self.fc3.out_features();
        logits.reshape(&[d])
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.classify(g, self.basic_conv(g, x)?)
    }
}
