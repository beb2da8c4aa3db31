//! Prompt templates.

use serde::{Deserialize, Serialize};

use crate::degrade::Kind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    /// `Remove {removed}.`
    Single,
    /// `There are {present} in the image. Remove {removed}.`
    Two,
}

/// Kinds in label order, deduplicated, comma-joined.
pub fn kind_list(kinds: &[Kind]) -> String {
    let mut k = kinds.to_vec();
    k.sort();
    k.dedup();
    k.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
}

pub fn gen_prompt(present: &[Kind], removed: &[Kind], style: PromptStyle) -> Result<String> {
    if removed.is_empty() {
        return Err(Error::InvalidSample(
            "a prompt needs at least one degradation to remove".into(),
        ));
    }
    Ok(match style {
        PromptStyle::Single => format!("Remove {}.", kind_list(removed)),
        PromptStyle::Two => format!(
            "There are {} in the image. Remove {}.",
            kind_list(present),
            kind_list(removed)
        ),
    })
}

/// The prompt naming every kind, for conditioning probes.
pub fn remove_all_prompt() -> String {
    format!("Remove {}.", kind_list(&Kind::ALL))
}
