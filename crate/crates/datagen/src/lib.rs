//! Desk-scale synthesis of multi-degradation restoration data.
//!
//! Clean images (procedural scenes or a directory of PPM files) receive one
//! to three degradations; the ground truth keeps whichever degradations the
//! prompt does not ask to remove.

pub mod dataset;
pub mod degrade;
pub mod error;
pub mod image;
pub mod prompt;
pub mod scene;

pub use dataset::{
    build_dataset, category_counts, compose_sample, generate, read_manifest, verify_record, Category, DatagenConfig,
    SampleRecord, Split,
};
pub use degrade::{render, DegradationSpec, Kind};
pub use error::{Error, Result};
pub use image::{read_ppm, write_ppm, Image};
pub use prompt::{gen_prompt, PromptStyle};
