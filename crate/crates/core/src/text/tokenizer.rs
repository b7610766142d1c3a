use std::path::Path;

use crate::error::{Error, Result};

/// Tokenizer front-end of a text backbone.
#[derive(Debug, Clone)]
pub enum TextTokenizer {
    /// Word-level hashing tokenizer for the stub backbone.
    Stub { vocab_size: usize },
    Pretrained(Box<tokenizers::Tokenizer>),
}

impl TextTokenizer {
    pub fn stub(vocab_size: usize) -> Self {
        TextTokenizer::Stub { vocab_size }
    }

    /// Loads a `tokenizer.json` file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tok = tokenizers::Tokenizer::from_file(path)
            .map_err(|e| Error::Encoding(format!("cannot load tokenizer {}: {e}", path.display())))?;
        Ok(TextTokenizer::Pretrained(Box::new(tok)))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        match self {
            TextTokenizer::Stub { vocab_size } => Ok(stub_pieces(text)
                .map(|piece| (fnv1a(piece.as_bytes()) % *vocab_size as u64) as u32)
                .collect()),
            TextTokenizer::Pretrained(tok) => tok
                .encode(text, false)
                .map(|enc| enc.get_ids().to_vec())
                .map_err(|e| Error::Encoding(e.to_string())),
        }
    }
}

/// Splits on whitespace, then peels separators off each word. Numbers keep
/// their sign and decimal point.
fn stub_pieces(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().flat_map(|word| {
        let mut pieces = Vec::new();
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() || ch == '.' || ch == '-' || ch == '_' {
                current.push(ch);
            } else {
                if !current.is_empty() {
                    pieces.push(std::mem::take(&mut current));
                }
                pieces.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            pieces.push(current);
        }
        pieces
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_pieces_split_punctuation() {
        let pieces: Vec<String> = stub_pieces("min value -0.5000, lags are 1,2;").collect();
        assert_eq!(pieces, vec!["min", "value", "-0.5000", ",", "lags", "are", "1", ",", "2", ";"]);
    }

    #[test]
    fn stub_ids_are_stable_and_bounded() {
        let tok = TextTokenizer::stub(97);
        let a = tok.encode("the trend is upward").unwrap();
        assert_eq!(a, tok.encode("the trend is upward").unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|&id| id < 97));
        let b = tok.encode("upward upward").unwrap();
        assert_eq!(b[0], b[1]);
        assert_eq!(b[0], a[3]);
    }
}
