//! Training and evaluation of the text-guided restoration network on
//! synthesised data.

pub mod augment;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fit;
pub mod optim;

pub use augment::{augment, Transform};
pub use config::TrainConfig;
pub use data::{load_examples, load_split, Example};
pub use error::{Error, Result};
pub use eval::{evaluate, evaluate_with, restore_image, EvalReport, Metrics, Prediction, Weights};
pub use fit::{fit, init_model, save_run, FitOutput, LossCurve, Trainable};
pub use optim::{cosine_lr, ema_update, sgdm_step, Sgdm};
