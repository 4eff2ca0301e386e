//! Byte-level tokenizer: byte `b` is token `b + 2`, with two special tokens.

use crate::error::{NptiError, Result};
use crate::model::TokenId;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const VOCAB_SIZE: usize = 258;

const OFFSET: TokenId = 2;

pub fn tokenize(text: &str, add_bos: bool) -> Vec<TokenId> {
    encode_bytes(text.as_bytes(), add_bos)
}

pub fn encode_bytes(bytes: &[u8], add_bos: bool) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(bytes.len() + add_bos as usize);
    if add_bos {
        out.push(BOS);
    }
    out.extend(bytes.iter().map(|&b| b as TokenId + OFFSET));
    out
}

/// Raw bytes for a token sequence; BOS and EOS are dropped.
pub fn decode_bytes(tokens: &[TokenId]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(tokens.len());
    for &t in tokens {
        match t {
            BOS | EOS => {}
            t if (t as usize) < VOCAB_SIZE => out.push((t - OFFSET) as u8),
            t => return Err(NptiError::input(format!("token id {t} is outside the byte vocabulary"))),
        }
    }
    Ok(out)
}

/// Text for a token sequence. Byte runs that are not valid UTF-8 (common in
/// toy-model output) are replaced with U+FFFD.
pub fn detokenize(tokens: &[TokenId]) -> Result<String> {
    let bytes = decode_bytes(tokens)?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    })
}
