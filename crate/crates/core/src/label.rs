use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Ground truth or predicted class of a face image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Deepfake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Deepfake => "deepfake",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Real => Label::Deepfake,
            Label::Deepfake => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}` (expected real, fake or deepfake)")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" | "deepfake" => Ok(Label::Deepfake),
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_tokens_only() {
        assert_eq!("real".parse::<Label>().unwrap(), Label::Real);
        assert_eq!("fake".parse::<Label>().unwrap(), Label::Deepfake);
        assert_eq!("Deepfake".parse::<Label>().unwrap(), Label::Deepfake);
        assert!("genuine".parse::<Label>().is_err());
    }
}
