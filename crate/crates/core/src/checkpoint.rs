//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "RFIRCKPT"
//! version    u32      FORMAT_VERSION
//! config     u32 length + UTF-8 key=value lines (ModelConfig::to_kv)
//! vocab      u32 length + UTF-8 vocab text (one token per line)
//! vocab hash u32 length + hex SHA-256 of the vocab text
//! count      u64      number of scalars per parameter set
//! params     count x f64, parameters in declaration order
//! ema flag   u8       0 or 1
//! ema        count x f64 when the flag is 1
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TransRfir};
use crate::nn::Module;
use crate::scalar::Scalar;
use crate::text::Vocab;

pub const MAGIC: &[u8; 8] = b"RFIRCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// A loaded model together with its optional EMA shadow.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: TransRfir<T>,
    pub ema: Option<TransRfir<T>>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_params<T: Scalar>(out: &mut Vec<u8>, m: &TransRfir<T>) {
    m.visit(&mut |p| {
        for v in p.value().data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    });
}

pub fn to_bytes<T: Scalar>(model: &TransRfir<T>, ema: Option<&TransRfir<T>>) -> Result<Vec<u8>> {
    let count = model.num_params();
    if let Some(e) = ema {
        if e.cfg != model.cfg || e.num_params() != count {
            return Err(Error::Checkpoint("EMA model does not match the live model".into()));
        }
    }
    let mut out = Vec::with_capacity(64 + 8 * count * (1 + ema.is_some() as usize));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, &model.cfg.to_kv());
    put_str(&mut out, &model.vocab.to_text());
    put_str(&mut out, &model.vocab.hash());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    put_params(&mut out, model);
    match ema {
        Some(e) => {
            out.push(1);
            put_params(&mut out, e);
        }
        None => out.push(0),
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Checkpoint("invalid UTF-8 in header".into()))
    }

    fn fill<T: Scalar>(&mut self, m: &mut TransRfir<T>) -> Result<()> {
        let bytes = self.take(8 * m.num_params())?;
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        m.visit_mut(&mut |p| {
            for v in p.value_mut().data_mut() {
                *v = T::lit(vals.next().expect("length checked above"));
            }
        });
        Ok(())
    }
}

/// Parses a checkpoint. When `expected` is given the stored config must
/// match it exactly.
pub fn from_bytes<T: Scalar>(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Checkpoint<T>> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let cfg = ModelConfig::from_kv(r.str()?)?;
    if let Some(want) = expected {
        if *want != cfg {
            return Err(Error::Config(format!(
                "checkpoint config does not match:\n  stored: {}\n  expected: {}",
                cfg.to_kv().replace('\n', " "),
                want.to_kv().replace('\n', " ")
            )));
        }
    }
    let vocab = Vocab::from_text(r.str()?)?;
    let hash = r.str()?;
    if hash != vocab.hash() {
        return Err(Error::Checkpoint("vocab hash mismatch".into()));
    }
    let count = r.u64()? as usize;

    let mut model = TransRfir::<T>::with_vocab(cfg, vocab, 0)?;
    if model.num_params() != count {
        return Err(Error::Config(format!(
            "checkpoint holds {count} scalars but the config builds {}",
            model.num_params()
        )));
    }
    r.fill(&mut model)?;
    let ema = match r.take(1)?[0] {
        0 => None,
        1 => {
            let mut e = model.clone();
            r.fill(&mut e)?;
            Some(e)
        }
        f => return Err(Error::Checkpoint(format!("bad EMA flag {f}"))),
    };
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(Checkpoint { model, ema })
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, model: &TransRfir<T>, ema: Option<&TransRfir<T>>) -> Result<()> {
    let bytes = to_bytes(model, ema)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Checkpoint<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes, expected)
}
