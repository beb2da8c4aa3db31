//! The full restoration network: hybrid-context encoder, prompt fusion at the
//! latent and in the decoder, refinement, long residual output and the
//! degradation-perception branch.

use crate::attention::{AttnConfig, Mhaca};
use crate::autodiff::{Graph, Var};
use crate::blocks::{BlockConfig, Downsample, HcBlock, MdpHead, Upsample, GDFN_EXPANSION};
use crate::error::{Error, Result};
use crate::kernels::Conv2dSpec;
use crate::nn::{Conv2d, Init, Module, Param};
use crate::scalar::Scalar;
use crate::text::{TextConfig, TextEncoder, Vocab};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub blocks: [usize; 4],
    pub refinement: usize,
    pub heads: [usize; 4],
    pub agent: (usize, usize),
    pub expansion: f64,
    pub prompt_len: usize,
    pub labels: usize,
    /// Input size the stage position encodings are laid out for.
    pub image_size: (usize, usize),
    pub text_dim: usize,
    pub text_heads: usize,
    pub text_layers: usize,
    pub text_ffn: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 48,
            blocks: [4, 6, 6, 8],
            refinement: 4,
            heads: [1, 2, 4, 8],
            agent: (12, 12),
            expansion: GDFN_EXPANSION,
            prompt_len: 20,
            labels: 5,
            image_size: (128, 128),
            text_dim: 128,
            text_heads: 4,
            text_layers: 2,
            text_ffn: 256,
        }
    }
}

impl ModelConfig {
    /// Small preset used for desk-scale training runs.
    pub fn toy() -> Self {
        ModelConfig {
            channels: 16,
            blocks: [1, 1, 1, 2],
            refinement: 1,
            agent: (4, 4),
            image_size: (64, 64),
            ..Self::default()
        }
    }

    /// Smallest sensible network, for end-to-end gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            channels: 8,
            blocks: [1, 1, 1, 1],
            refinement: 1,
            agent: (2, 2),
            image_size: (16, 16),
            prompt_len: 8,
            text_dim: 16,
            text_heads: 2,
            text_layers: 1,
            text_ffn: 32,
            ..Self::default()
        }
    }

    /// `[C, 2C, 4C, 8C]`.
    pub fn ladder(&self) -> [usize; 4] {
        let c = self.channels;
        [c, 2 * c, 4 * c, 8 * c]
    }

    pub fn validate(&self) -> Result<()> {
        let ladder = self.ladder();
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "base channels must be even, got {}",
                self.channels
            )));
        }
        for (c, h) in ladder.iter().zip(&self.heads) {
            if *h == 0 || c % h != 0 {
                return Err(Error::Config(format!("{h} heads do not divide {c} channels")));
            }
        }
        let (h, w) = self.image_size;
        if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
            return Err(Error::Config(format!("image size {h}x{w} must be divisible by 8")));
        }
        if self.prompt_len == 0 || self.labels == 0 {
            return Err(Error::Config("prompt length and label count must be positive".into()));
        }
        Ok(())
    }

    fn block(&self, channels: usize, heads: usize, scale: usize) -> BlockConfig {
        BlockConfig {
            channels,
            heads,
            agent: self.agent,
            expansion: self.expansion,
            resolution: (self.image_size.0 / scale, self.image_size.1 / scale),
        }
    }

    fn fusion(&self, channels: usize, heads: usize, scale: usize) -> AttnConfig {
        AttnConfig::new(
            channels,
            heads,
            self.agent,
            (self.image_size.0 / scale, self.image_size.1 / scale),
        )
        .with_text_len(self.prompt_len)
    }

    pub fn text(&self, vocab_size: usize) -> TextConfig {
        TextConfig {
            vocab_size,
            len: self.prompt_len,
            dim: self.text_dim,
            heads: self.text_heads,
            layers: self.text_layers,
            ffn: self.text_ffn,
            out1: 8 * self.channels,
            out2: 4 * self.channels,
        }
    }

    /// Flat `key=value` lines, the form stored in checkpoints.
    pub fn to_kv(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        [
            format!("channels={}", self.channels),
            format!("blocks={}", list(&self.blocks)),
            format!("refinement={}", self.refinement),
            format!("heads={}", list(&self.heads)),
            format!("agent={}x{}", self.agent.0, self.agent.1),
            format!("expansion={}", self.expansion),
            format!("prompt_len={}", self.prompt_len),
            format!("labels={}", self.labels),
            format!("image_size={}x{}", self.image_size.0, self.image_size.1),
            format!("text_dim={}", self.text_dim),
            format!("text_heads={}", self.text_heads),
            format!("text_layers={}", self.text_layers),
            format!("text_ffn={}", self.text_ffn),
        ]
        .join("\n")
    }

    /// Applies `key=value` overrides; unknown keys are an error.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid value {value:?} for {key}"));
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        let four = |s: &str| -> Result<[usize; 4]> {
            let v = s.split(',').map(num).collect::<Result<Vec<_>>>()?;
            v.try_into().map_err(|_| bad())
        };
        let pair = |s: &str| -> Result<(usize, usize)> {
            let (a, b) = s.split_once('x').ok_or_else(bad)?;
            Ok((num(a)?, num(b)?))
        };
        match key {
            "channels" => self.channels = num(value)?,
            "blocks" => self.blocks = four(value)?,
            "refinement" => self.refinement = num(value)?,
            "heads" => self.heads = four(value)?,
            "agent" => self.agent = pair(value)?,
            "expansion" => self.expansion = value.trim().parse().map_err(|_| bad())?,
            "prompt_len" => self.prompt_len = num(value)?,
            "labels" => self.labels = num(value)?,
            "image_size" => self.image_size = pair(value)?,
            "text_dim" => self.text_dim = num(value)?,
            "text_heads" => self.text_heads = num(value)?,
            "text_layers" => self.text_layers = num(value)?,
            "text_ffn" => self.text_ffn = num(value)?,
            _ => return Err(Error::Config(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in crate::config::parse_kv(text)? {
            cfg.apply_kv(&k, &v)?;
        }
        Ok(cfg)
    }
}

/// Encoder latent and the three skip features at `C`, `2C`, `4C`.
pub struct Encoded<'g, T: Scalar> {
    pub latent: Var<'g, T>,
    pub skips: [Var<'g, T>; 3],
}

pub struct RestorationOutput<'g, T: Scalar> {
    /// `I + R`, same shape as the input.
    pub restored: Var<'g, T>,
    /// Raw degradation logits, `[labels]`.
    pub mdp_logits: Var<'g, T>,
}

#[derive(Clone, Debug)]
pub struct TransRfir<T> {
    pub cfg: ModelConfig,
    pub vocab: Vocab,
    pub text: TextEncoder<T>,
    pub shallow: Conv2d<T>,
    pub enc1: Vec<HcBlock<T>>,
    pub down1: Downsample<T>,
    pub enc2: Vec<HcBlock<T>>,
    pub down2: Downsample<T>,
    pub enc3: Vec<HcBlock<T>>,
    pub down3: Downsample<T>,
    pub latent: Vec<HcBlock<T>>,
    pub mdp: MdpHead<T>,
    pub fuse_latent: Mhaca<T>,
    pub up3: Upsample<T>,
    pub reduce3: Conv2d<T>,
    pub fuse_decoder: Mhaca<T>,
    pub dec3: Vec<HcBlock<T>>,
    pub up2: Upsample<T>,
    pub reduce2: Conv2d<T>,
    pub dec2: Vec<HcBlock<T>>,
    pub up1: Upsample<T>,
    pub dec1: Vec<HcBlock<T>>,
    pub refine: Vec<HcBlock<T>>,
    pub output: Conv2d<T>,
}

impl<T: Scalar> Module<T> for TransRfir<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.text.visit(f);
        self.shallow.visit(f);
        self.enc1.iter().for_each(|b| b.visit(f));
        self.down1.visit(f);
        self.enc2.iter().for_each(|b| b.visit(f));
        self.down2.visit(f);
        self.enc3.iter().for_each(|b| b.visit(f));
        self.down3.visit(f);
        self.latent.iter().for_each(|b| b.visit(f));
        self.mdp.visit(f);
        self.fuse_latent.visit(f);
        self.up3.visit(f);
        self.reduce3.visit(f);
        self.fuse_decoder.visit(f);
        self.dec3.iter().for_each(|b| b.visit(f));
        self.up2.visit(f);
        self.reduce2.visit(f);
        self.dec2.iter().for_each(|b| b.visit(f));
        self.up1.visit(f);
        self.dec1.iter().for_each(|b| b.visit(f));
        self.refine.iter().for_each(|b| b.visit(f));
        self.output.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.text.visit_mut(f);
        self.shallow.visit_mut(f);
        self.enc1.iter_mut().for_each(|b| b.visit_mut(f));
        self.down1.visit_mut(f);
        self.enc2.iter_mut().for_each(|b| b.visit_mut(f));
        self.down2.visit_mut(f);
        self.enc3.iter_mut().for_each(|b| b.visit_mut(f));
        self.down3.visit_mut(f);
        self.latent.iter_mut().for_each(|b| b.visit_mut(f));
        self.mdp.visit_mut(f);
        self.fuse_latent.visit_mut(f);
        self.up3.visit_mut(f);
        self.reduce3.visit_mut(f);
        self.fuse_decoder.visit_mut(f);
        self.dec3.iter_mut().for_each(|b| b.visit_mut(f));
        self.up2.visit_mut(f);
        self.reduce2.visit_mut(f);
        self.dec2.iter_mut().for_each(|b| b.visit_mut(f));
        self.up1.visit_mut(f);
        self.dec1.iter_mut().for_each(|b| b.visit_mut(f));
        self.refine.iter_mut().for_each(|b| b.visit_mut(f));
        self.output.visit_mut(f);
    }
}

fn stack<T: Scalar>(init: &mut Init, name: &str, n: usize, cfg: BlockConfig) -> Result<Vec<HcBlock<T>>> {
    (0..n)
        .map(|i| HcBlock::new(init, &format!("{name}.{i}"), cfg))
        .collect()
}

fn run<'g, T: Scalar>(g: &'g Graph<T>, blocks: &[HcBlock<T>], mut x: Var<'g, T>) -> Result<Var<'g, T>> {
    for b in blocks {
        x = b.forward(g, x)?;
    }
    Ok(x)
}

impl<T: Scalar> TransRfir<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_vocab(cfg, Vocab::prompt_grammar(), seed)
    }

    pub fn with_vocab(cfg: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let init = &mut Init::new(seed);
        let [c1, c2, c4, c8] = cfg.ladder();
        let [h1, h2, h3, h4] = cfg.heads;
        let same3 = Conv2dSpec::same(3);
        Ok(TransRfir {
            text: TextEncoder::new(init, "text", cfg.text(vocab.len()))?,
            shallow: Conv2d::new(init, "shallow", 3, c1, 3, same3),
            enc1: stack(init, "enc1", cfg.blocks[0], cfg.block(c1, h1, 1))?,
            down1: Downsample::new(init, "down1", c1)?,
            enc2: stack(init, "enc2", cfg.blocks[1], cfg.block(c2, h2, 2))?,
            down2: Downsample::new(init, "down2", c2)?,
            enc3: stack(init, "enc3", cfg.blocks[2], cfg.block(c4, h3, 4))?,
            down3: Downsample::new(init, "down3", c4)?,
            latent: stack(init, "latent", cfg.blocks[3], cfg.block(c8, h4, 8))?,
            mdp: MdpHead::new(init, "mdp", c8, cfg.labels)?,
            fuse_latent: Mhaca::new(init, "fuse_latent", cfg.fusion(c8, h4, 8))?,
            up3: Upsample::new(init, "up3", c8)?,
            reduce3: Conv2d::pointwise(init, "reduce3", c8, c4),
            fuse_decoder: Mhaca::new(init, "fuse_decoder", cfg.fusion(c4, h3, 4))?,
            dec3: stack(init, "dec3", cfg.blocks[2], cfg.block(c4, h3, 4))?,
            up2: Upsample::new(init, "up2", c4)?,
            reduce2: Conv2d::pointwise(init, "reduce2", c4, c2),
            dec2: stack(init, "dec2", cfg.blocks[1], cfg.block(c2, h2, 2))?,
            up1: Upsample::new(init, "up1", c2)?,
            dec1: stack(init, "dec1", cfg.blocks[0], cfg.block(c2, h1, 1))?,
            refine: stack(init, "refine", cfg.refinement, cfg.block(c2, h1, 1))?,
            output: Conv2d::new(init, "output", c2, 3, 3, same3),
            cfg,
            vocab,
        })
    }

    fn check_image(&self, image: &Var<'_, T>) -> Result<(usize, usize)> {
        match image.shape()[..] {
            [h, w, 3] if h > 0 && w > 0 && h % 8 == 0 && w % 8 == 0 => Ok((h, w)),
            ref s => Err(Error::invalid(
                "restore",
                format!("expected an [H, W, 3] image with H, W divisible by 8, got {s:?}"),
            )),
        }
    }

    pub fn encode<'g>(&self, g: &'g Graph<T>, image: Var<'g, T>) -> Result<Encoded<'g, T>> {
        self.check_image(&image)?;
        let s1 = run(g, &self.enc1, self.shallow.forward(g, image)?)?;
        let s2 = run(g, &self.enc2, self.down1.forward(g, s1)?)?;
        let s3 = run(g, &self.enc3, self.down2.forward(g, s2)?)?;
        let latent = run(g, &self.latent, self.down3.forward(g, s3)?)?;
        Ok(Encoded {
            latent,
            skips: [s1, s2, s3],
        })
    }

    pub fn tokenize(&self, prompt: &str) -> Vec<usize> {
        self.vocab.tokenize(prompt, self.cfg.prompt_len)
    }

    /// Full forward pass for a tokenized prompt.
    pub fn restore<'g>(&self, g: &'g Graph<T>, image: Var<'g, T>, ids: &[usize]) -> Result<RestorationOutput<'g, T>> {
        let prompt = self.text.encode(g, ids)?;
        let Encoded { latent, skips } = self.encode(g, image)?;
        let mdp_logits = self.mdp.forward(g, latent)?;

        let x = self.fuse_latent.forward(g, latent, prompt.f_t1)?;
        let x = Var::concat(&[self.up3.forward(g, x)?, skips[2]], 2)?;
        let x = self.reduce3.forward(g, x)?;
        let x = self.fuse_decoder.forward(g, x, prompt.f_t2)?;
        let x = run(g, &self.dec3, x)?;

        let x = Var::concat(&[self.up2.forward(g, x)?, skips[1]], 2)?;
        let x = run(g, &self.dec2, self.reduce2.forward(g, x)?)?;

        let x = Var::concat(&[self.up1.forward(g, x)?, skips[0]], 2)?;
        let x = run(g, &self.dec1, x)?;
        let x = run(g, &self.refine, x)?;

        let residual = self.output.forward(g, x)?;
        Ok(RestorationOutput {
            restored: image.add(&residual)?,
            mdp_logits,
        })
    }

    pub fn restore_prompt<'g>(
        &self,
        g: &'g Graph<T>,
        image: Var<'g, T>,
        prompt: &str,
    ) -> Result<RestorationOutput<'g, T>> {
        self.restore(g, image, &self.tokenize(prompt))
    }
}
