//! Training configuration as flat `key=value` text.
//!
//! Keys: `epochs`, `batch_size`, `lr_max`, `lr_min`, `momentum`,
//! `weight_decay`, `ema_decay`, `seed`, `image_size`, `prompt_style`
//! (`single` or `two`), `augment` (`true`/`false`), `preset` (`default`,
//! `toy`, `micro`; replaces the whole model config) and `model.<key>` for
//! any model key. Later lines override earlier ones.

use rfir_core::config::{parse_kv, parse_num};
use rfir_core::ModelConfig;
use rfir_datagen::PromptStyle;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub seed: u64,
    pub prompt_style: PromptStyle,
    /// Random 90° rotations and horizontal flips.
    pub augment: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 16,
            lr_max: 0.01,
            lr_min: 0.001,
            momentum: 0.937,
            weight_decay: 1e-4,
            ema_decay: 0.999,
            seed: 0,
            prompt_style: PromptStyle::Single,
            augment: true,
            model: ModelConfig::default(),
        }
    }
}

fn preset(name: &str) -> Result<ModelConfig> {
    match name {
        "default" => Ok(ModelConfig::default()),
        "toy" => Ok(ModelConfig::toy()),
        "micro" => Ok(ModelConfig::micro()),
        _ => Err(Error::Config(format!("unknown preset {name:?}"))),
    }
}

impl TrainConfig {
    /// Desk-scale protocol: toy network, 64x64 inputs, 30 epochs.
    pub fn toy() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            model: ModelConfig::toy(),
            ..Self::default()
        }
    }

    pub fn image_size(&self) -> usize {
        self.model.image_size.0
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("model.") {
            return Ok(self.model.apply_kv(k, value)?);
        }
        match key {
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "lr_max" => self.lr_max = parse_num(key, value)?,
            "lr_min" => self.lr_min = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "ema_decay" => self.ema_decay = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "augment" => self.augment = parse_num(key, value)?,
            "image_size" => {
                let s = parse_num(key, value)?;
                self.model.image_size = (s, s);
            }
            "prompt_style" => {
                self.prompt_style = match value {
                    "single" => PromptStyle::Single,
                    "two" => PromptStyle::Two,
                    _ => {
                        return Err(Error::Config(format!(
                            "prompt_style must be single or two, got {value:?}"
                        )))
                    }
                }
            }
            "preset" => self.model = preset(value)?,
            _ => return Err(Error::Config(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    /// Parses on top of `base` and validates.
    pub fn from_kv_with(base: Self, text: &str) -> Result<Self> {
        let mut cfg = base;
        for (k, v) in parse_kv(text)? {
            cfg.apply_kv(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        Self::from_kv_with(Self::default(), text)
    }

    /// Fully resolved form; `from_kv(to_kv())` reproduces the config.
    pub fn to_kv(&self) -> String {
        let style = match self.prompt_style {
            PromptStyle::Single => "single",
            PromptStyle::Two => "two",
        };
        let mut lines = vec![
            format!("epochs={}", self.epochs),
            format!("batch_size={}", self.batch_size),
            format!("lr_max={}", self.lr_max),
            format!("lr_min={}", self.lr_min),
            format!("momentum={}", self.momentum),
            format!("weight_decay={}", self.weight_decay),
            format!("ema_decay={}", self.ema_decay),
            format!("seed={}", self.seed),
            format!("prompt_style={style}"),
            format!("augment={}", self.augment),
        ];
        lines.extend(self.model.to_kv().lines().map(|l| format!("model.{l}")));
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return bad(format!(
                "need 0 < lr_min < lr_max, got {} and {}",
                self.lr_min, self.lr_max
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("momentum must lie in [0, 1) and weight_decay be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay));
        }
        if self.model.image_size.0 != self.model.image_size.1 {
            return bad("training images must be square".into());
        }
        Ok(())
    }
}
