use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::group::TokenId;

/// Token ids: `0..=9` are digits, then `BOX`, `EOS`, and one or more fillers.
///
/// The beginning-of-response context uses the extra id [`Vocabulary::bos`],
/// which is never emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
}

impl Vocabulary {
    pub const BOX: TokenId = 10;
    pub const EOS: TokenId = 11;
    pub const FIRST_FILLER: TokenId = 12;
    pub const MIN_SIZE: usize = 13;

    pub fn new(size: usize) -> Result<Self> {
        if size < Self::MIN_SIZE {
            return Err(domain(format!(
                "vocabulary needs at least {} tokens, got {size}",
                Self::MIN_SIZE
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bos(&self) -> TokenId {
        self.size
    }

    pub fn is_digit(tok: TokenId) -> bool {
        tok < 10
    }

    pub fn contains(&self, tok: TokenId) -> bool {
        tok < self.size
    }

    pub fn describe(&self, tok: TokenId) -> String {
        match tok {
            d if d < 10 => d.to_string(),
            Self::BOX => "BOX".into(),
            Self::EOS => "EOS".into(),
            t if t == self.size => "BOS".into(),
            t if t < self.size => "FILLER".into(),
            t => format!("<{t}>"),
        }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self { size: Self::MIN_SIZE }
    }
}
