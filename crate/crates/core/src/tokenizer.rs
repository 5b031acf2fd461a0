// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level tokenizer: every byte is its own token id.

use alloc::string::String;
use alloc::vec::Vec;

pub type Token = u32;

pub const VOCAB_SIZE: usize = 256;

pub fn tokenize(text: &str) -> Vec<Token> {
    text.bytes().map(Token::from).collect()
}

/// Token ids above 255 are not produced by a byte-vocabulary model and are
/// dropped.
pub fn detokenize_bytes(tokens: &[Token]) -> Vec<u8> {
    tokens.iter().filter_map(|&t| u8::try_from(t).ok()).collect()
}

/// Lossy for byte sequences that are not valid UTF-8.
pub fn detokenize(tokens: &[Token]) -> String {
    String::from_utf8_lossy(&detokenize_bytes(tokens)).into_owned()
}
