//! Prompt tokenizer and the small trainable text encoder that feeds the two
//! cross-attention fusion points.

use sha2::{Digest, Sha256};

use crate::attention::multi_head_attention;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::impl_module;
use crate::nn::{Init, LayerNorm, Linear, Param};
use crate::scalar::Scalar;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Degradation kinds in label order.
pub const KINDS: [&str; 5] = ["blur", "rain", "haze", "lowlight", "snow"];

const GRAMMAR: [&str; 8] = ["remove", "there", "are", "in", "the", "image", ",", "."];

/// Token table; ids are positions in byte-sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::prompt_grammar()
    }
}

impl Vocab {
    /// Every word the prompt templates can produce, plus `<pad>` and `<unk>`.
    pub fn prompt_grammar() -> Self {
        let words = GRAMMAR.iter().chain(KINDS.iter()).chain([PAD, UNK].iter());
        Self::from_tokens(words.map(|s| s.to_string()))
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = tokens.into_iter().collect();
        for special in [PAD, UNK] {
            if !tokens.iter().any(|t| t == special) {
                tokens.push(special.to_string());
            }
        }
        tokens.sort();
        tokens.dedup();
        Vocab { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn pad_id(&self) -> usize {
        self.id(PAD).expect("vocab always contains <pad>")
    }

    pub fn unk_id(&self) -> usize {
        self.id(UNK).expect("vocab always contains <unk>")
    }

    /// One token per line; the line index is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let mut sorted = tokens.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != tokens || !tokens.iter().any(|t| t == PAD) || !tokens.iter().any(|t| t == UNK) {
            return Err(Error::Config(
                "vocab file must list sorted unique tokens including <pad> and <unk>".into(),
            ));
        }
        Ok(Vocab { tokens })
    }

    /// Hex SHA-256 of [`Vocab::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Lowercases, splits on whitespace and peels trailing `,`/`.` into
    /// their own tokens, then pads or truncates to `len`.
    pub fn tokenize(&self, prompt: &str, len: usize) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in prompt.to_lowercase().split_whitespace() {
            let stem = word.trim_end_matches([',', '.']);
            if !stem.is_empty() {
                ids.push(self.id(stem).unwrap_or_else(|| self.unk_id()));
            }
            for ch in word[stem.len()..].chars() {
                ids.push(self.id(&ch.to_string()).unwrap_or_else(|| self.unk_id()));
            }
        }
        if ids.len() > len {
            log::warn!("prompt {prompt:?} has {} tokens; truncating to {len}", ids.len());
            ids.truncate(len);
        }
        ids.resize(len, self.pad_id());
        ids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TextConfig {
    pub vocab_size: usize,
    pub len: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn: usize,
    /// Widths of the two output heads (`8C` and `4C`).
    pub out1: usize,
    pub out2: usize,
}

impl TextConfig {
    pub fn new(vocab_size: usize, len: usize, out1: usize, out2: usize) -> Self {
        TextConfig {
            vocab_size,
            len,
            dim: 128,
            heads: 4,
            layers: 2,
            ffn: 256,
            out1,
            out2,
        }
    }
}

/// Pre-norm transformer layer over the token sequence.
#[derive(Clone, Debug)]
pub struct EncoderLayer<T> {
    pub norm1: LayerNorm<T>,
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub proj: Linear<T>,
    pub norm2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    heads: usize,
}

impl_module!(EncoderLayer { module norm1, module q, module k, module v, module proj, module norm2, module fc1, module fc2 });

impl<T: Scalar> EncoderLayer<T> {
    fn new(init: &mut Init, name: &str, cfg: &TextConfig) -> Self {
        let d = cfg.dim;
        EncoderLayer {
            norm1: LayerNorm::new(&format!("{name}.norm1"), d),
            q: Linear::new(init, &format!("{name}.q"), d, d),
            k: Linear::new(init, &format!("{name}.k"), d, d),
            v: Linear::new(init, &format!("{name}.v"), d, d),
            proj: Linear::new(init, &format!("{name}.proj"), d, d),
            norm2: LayerNorm::new(&format!("{name}.norm2"), d),
            fc1: Linear::new(init, &format!("{name}.fc1"), d, cfg.ffn),
            fc2: Linear::new(init, &format!("{name}.fc2"), cfg.ffn, d),
            heads: cfg.heads,
        }
    }

    fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.norm1.forward(g, x)?;
        let a = multi_head_attention(
            self.q.forward(g, h)?,
            self.k.forward(g, h)?,
            self.v.forward(g, h)?,
            self.heads,
        )?;
        let x = x.add(&self.proj.forward(g, a)?)?;
        let h = self.fc1.forward(g, self.norm2.forward(g, x)?)?.gelu();
        x.add(&self.fc2.forward(g, h)?)
    }
}

/// The two projected prompt features.
pub struct PromptEncoding<'g, T: Scalar> {
    /// `[L, 8C]`, fused at the latent.
    pub f_t1: Var<'g, T>,
    /// `[L, 4C]`, fused in the decoder.
    pub f_t2: Var<'g, T>,
}

/// Token and position embeddings, a stack of encoder layers, a final norm and
/// two linear heads.
#[derive(Clone, Debug)]
pub struct TextEncoder<T> {
    pub cfg: TextConfig,
    pub token_emb: Param<T>,
    pub pos_emb: Param<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub norm: LayerNorm<T>,
    pub head1: Linear<T>,
    pub head2: Linear<T>,
}

impl_module!(TextEncoder { param token_emb, param pos_emb, each layers, module norm, module head1, module head2 });

impl<T: Scalar> TextEncoder<T> {
    pub fn new(init: &mut Init, name: &str, cfg: TextConfig) -> Result<Self> {
        if !cfg.dim.is_multiple_of(cfg.heads) {
            return Err(Error::Config(format!(
                "text width {} not divisible by {} heads",
                cfg.dim, cfg.heads
            )));
        }
        Ok(TextEncoder {
            cfg,
            token_emb: Param::new(
                format!("{name}.token_emb"),
                init.uniform(&[cfg.vocab_size, cfg.dim], 0.1),
            ),
            pos_emb: Param::new(format!("{name}.pos_emb"), init.small(&[cfg.len, cfg.dim])),
            layers: (0..cfg.layers)
                .map(|i| EncoderLayer::new(init, &format!("{name}.layers.{i}"), &cfg))
                .collect(),
            norm: LayerNorm::new(&format!("{name}.norm"), cfg.dim),
            head1: Linear::new(init, &format!("{name}.head1"), cfg.dim, cfg.out1),
            head2: Linear::new(init, &format!("{name}.head2"), cfg.dim, cfg.out2),
        })
    }

    pub fn encode<'g>(&self, g: &'g Graph<T>, ids: &[usize]) -> Result<PromptEncoding<'g, T>> {
        if ids.len() != self.cfg.len {
            return Err(Error::shape("encode_prompt", &[ids.len()], &[self.cfg.len]));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                len: self.cfg.vocab_size,
            });
        }
        let mut x = g
            .param(&self.token_emb)
            .gather_rows(ids)?
            .add(&g.param(&self.pos_emb))?;
        for layer in &self.layers {
            x = layer.forward(g, x)?;
        }
        let x = self.norm.forward(g, x)?;
        Ok(PromptEncoding {
            f_t1: self.head1.forward(g, x)?,
            f_t2: self.head2.forward(g, x)?,
        })
    }
}
