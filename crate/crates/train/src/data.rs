//! In-memory training and evaluation examples.

use std::path::Path;

use rfir_core::{Scalar, Tensor};
use rfir_datagen::dataset::load_pair;
use rfir_datagen::{read_manifest, Image, SampleRecord, Split};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Example {
    pub record: SampleRecord,
    pub degraded: Image,
    pub gt: Image,
}

impl Example {
    pub fn labels(&self) -> [f64; 5] {
        self.record.present_labels()
    }
}

/// `[H, W, 3]` tensor of an image.
pub fn to_tensor<T: Scalar>(img: &Image) -> Tensor<T> {
    Tensor::from_f64(vec![img.height, img.width, 3], &img.data).expect("image buffer matches its shape")
}

pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Image> {
    match t.shape() {
        &[h, w, 3] => Ok(Image::from_data(h, w, t.data().iter().map(|v| v.as_f64()).collect())?),
        s => Err(Error::Config(format!("expected an [H, W, 3] image tensor, got {s:?}"))),
    }
}

/// Loads the images of `records`, tagging failures with the record id.
pub fn load_examples(root: &Path, records: &[SampleRecord], size: usize) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            let (degraded, gt) = load_pair(root, r).map_err(|e| Error::at_record(r.id, e))?;
            if degraded.height != size || degraded.width != size {
                let msg = format!(
                    "image is {}x{}, model expects {size}x{size}",
                    degraded.height, degraded.width
                );
                return Err(Error::at_record(r.id, Error::Config(msg)));
            }
            Ok(Example {
                record: r.clone(),
                degraded,
                gt,
            })
        })
        .collect()
}

/// Reads a manifest and loads the records of `split` (all when `None`).
pub fn load_split(manifest: &Path, split: Option<Split>, size: usize) -> Result<Vec<Example>> {
    let records = read_manifest(manifest)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let chosen: Vec<SampleRecord> = records
        .into_iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    load_examples(root, &chosen, size)
}
