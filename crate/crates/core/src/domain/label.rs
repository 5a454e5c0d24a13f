use std::fmt;

use serde::{Deserialize, Serialize};

use super::DomainError;

/// A normalized object phrase: lowercase, trimmed, single inner spaces.
///
/// No stemming is applied, so `dogs` and `dog` are distinct labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(raw: &str) -> Result<Self, DomainError> {
        normalize_label(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub fn normalize_label(raw: &str) -> Result<Label, DomainError> {
    let text = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    if text.is_empty() {
        return Err(DomainError::EmptyLabel);
    }
    Ok(Label(text))
}

impl TryFrom<String> for Label {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        normalize_label(&value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
