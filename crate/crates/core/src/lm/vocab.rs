//! Symbol-level vocabulary with reserved BOS/EOS/PAD tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{LmError, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Ordered token list with a bijective token↔id mapping. Tokenization is
/// whitespace-split symbols; detokenization joins with single spaces, so
/// encode∘decode is the identity on any id sequence.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    bos: u32,
    eos: u32,
    pad: u32,
    #[serde(skip)]
    ids: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    bos: u32,
    eos: u32,
    pad: u32,
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = LmError;
    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocabulary::new(r.tokens, r.bos, r.eos, r.pad)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tokens: v.tokens,
            bos: v.bos,
            eos: v.eos,
            pad: v.pad,
        }
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, bos: u32, eos: u32, pad: u32) -> Result<Self> {
        let m = tokens.len() as u32;
        if bos >= m || eos >= m || pad >= m || bos == eos || bos == pad || eos == pad {
            return Err(LmError::BadSpecialTokens);
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(LmError::DuplicateToken(tok.clone()));
            }
        }
        Ok(Self {
            tokens,
            bos,
            eos,
            pad,
            ids,
        })
    }

    /// Standard layout: `<pad>`, `<bos>`, `<eos>`, then content symbols.
    pub fn with_content(content: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens = vec![
            PAD_TOKEN.to_string(),
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
        ];
        tokens.extend(content);
        Vocabulary::new(tokens, 1, 2, 0)
    }

    /// Vocabulary size M.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn pad(&self) -> u32 {
        self.pad
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.bos || id == self.eos || id == self.pad
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(LmError::TokenOutOfRange {
                id,
                size: self.tokens.len(),
            })
    }

    pub fn id_of(&self, token: &str) -> Result<u32> {
        self.ids
            .get(token)
            .copied()
            .ok_or_else(|| LmError::UnknownToken(token.to_string()))
    }

    /// Whitespace-split symbols to ids.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace().map(|t| self.id_of(t)).collect()
    }

    /// Ids to space-joined symbols, special tokens included verbatim.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let parts: Vec<&str> = ids
            .iter()
            .map(|&id| self.token(id))
            .collect::<Result<_>>()?;
        Ok(parts.join(" "))
    }

    /// Ids to space-joined symbols with BOS/EOS/PAD stripped; the form
    /// consumed by metrics and reward models.
    pub fn decode_content(&self, ids: &[u32]) -> Result<String> {
        let parts: Vec<&str> = ids
            .iter()
            .filter(|&&id| !self.is_special(id))
            .map(|&id| self.token(id))
            .collect::<Result<_>>()?;
        Ok(parts.join(" "))
    }

    /// Drop special-token symbols from a space-joined string.
    pub fn strip_special_symbols(text: &str) -> String {
        text.split_whitespace()
            .filter(|t| *t != PAD_TOKEN && *t != BOS_TOKEN && *t != EOS_TOKEN)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::with_content(["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        let v = vocab();
        let ids = v.encode("a b a <eos>").unwrap();
        assert_eq!(ids, vec![3, 4, 3, 2]);
        assert_eq!(v.decode(&ids).unwrap(), "a b a <eos>");
        assert_eq!(v.decode_content(&ids).unwrap(), "a b a");
    }

    #[test]
    fn specials_must_be_distinct() {
        let err = Vocabulary::new(vec!["x".into(), "y".into()], 0, 0, 1).unwrap_err();
        assert!(matches!(err, LmError::BadSpecialTokens));
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let err = Vocabulary::new(
            vec!["p".into(), "b".into(), "e".into(), "b".into()],
            0,
            1,
            2,
        )
        .unwrap_err();
        assert!(matches!(err, LmError::DuplicateToken(_)));
    }

    #[test]
    fn unknown_token_is_an_error() {
        assert!(vocab().encode("a z").is_err());
    }
}
