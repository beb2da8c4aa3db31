//! Joint spatial augmentation of a degraded / target pair.

use rand::Rng;
use rfir_datagen::Image;

use crate::error::{Error, Result};

/// Counter-clockwise rotation by `rot·90°` followed by an optional
/// horizontal flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Transform {
    pub rot: u8,
    pub flip: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { rot: 0, flip: false };

    pub fn random(rng: &mut impl Rng) -> Self {
        Transform {
            rot: rng.gen_range(0..4),
            flip: rng.gen_bool(0.5),
        }
    }

    /// Source pixel for output `(y, x)` in an `n x n` image.
    fn source(self, n: usize, y: usize, x: usize) -> (usize, usize) {
        let x = if self.flip { n - 1 - x } else { x };
        match self.rot % 4 {
            0 => (y, x),
            1 => (x, n - 1 - y),
            2 => (n - 1 - y, n - 1 - x),
            _ => (n - 1 - x, y),
        }
    }

    pub fn apply(self, img: &Image) -> Result<Image> {
        if img.height != img.width {
            return Err(Error::Config(format!(
                "augmentation needs square images, got {}x{}",
                img.height, img.width
            )));
        }
        if self == Self::IDENTITY {
            return Ok(img.clone());
        }
        let n = img.height;
        let mut out = Image::new(n, n);
        for y in 0..n {
            for x in 0..n {
                let (sy, sx) = self.source(n, y, x);
                for c in 0..3 {
                    out.set(y, x, c, img.get(sy, sx, c));
                }
            }
        }
        Ok(out)
    }
}

/// Draws one transform and applies it to both images.
pub fn augment(degraded: &Image, gt: &Image, rng: &mut impl Rng) -> Result<(Image, Image, Transform)> {
    let t = Transform::random(rng);
    Ok((t.apply(degraded)?, t.apply(gt)?, t))
}
