//! Byte-level BPE in the CLIP style: lowercase, split into words, map bytes
//! to printable code points, then merge by rank with a `</w>` word suffix.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};

pub const START_TOKEN: &str = "<|startoftext|>";
pub const END_TOKEN: &str = "<|endoftext|>";
const WORD_SUFFIX: &str = "</w>";
const PATTERN: &str =
    r"<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+";

/// The reversible byte → printable-character table used by byte-level BPE.
fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            extra += 1;
            char::from_u32(255 + extra).expect("valid code point")
        };
    }
    table
}

#[derive(Debug, Clone)]
pub struct ClipTokenizer {
    encoder: HashMap<String, i64>,
    ranks: HashMap<(String, String), usize>,
    byte_chars: [char; 256],
    pattern: Regex,
    start_id: i64,
    end_id: i64,
}

impl ClipTokenizer {
    pub fn from_files(vocab: &Path, merges: &Path) -> Result<Self> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| Error::Config(format!("tokenizer asset {}: {e}", p.display())))
        };
        let vocab_text = read(vocab)?;
        let merges_text = read(merges)?;
        let encoder: HashMap<String, i64> = serde_json::from_str(&vocab_text)
            .map_err(|e| Error::Config(format!("tokenizer vocabulary {}: {e}", vocab.display())))?;
        Self::new(encoder, &merges_text)
    }

    /// `merges` is the text of a merges file: one `left right` pair per line,
    /// optionally preceded by a `#version` header.
    pub fn new(encoder: HashMap<String, i64>, merges: &str) -> Result<Self> {
        let mut ranks = HashMap::new();
        for (lineno, line) in merges.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => {
                    let rank = ranks.len();
                    ranks.entry((a.to_owned(), b.to_owned())).or_insert(rank);
                }
                _ => {
                    return Err(Error::Config(format!(
                        "malformed merge rule on line {}: {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        let lookup = |t: &str| {
            encoder
                .get(t)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocabulary lacks {t}")))
        };
        let start_id = lookup(START_TOKEN)?;
        let end_id = lookup(END_TOKEN)?;
        Ok(ClipTokenizer {
            encoder,
            ranks,
            byte_chars: bytes_to_unicode(),
            pattern: Regex::new(PATTERN).expect("static pattern"),
            start_id,
            end_id,
        })
    }

    pub fn start_id(&self) -> i64 {
        self.start_id
    }

    pub fn end_id(&self) -> i64 {
        self.end_id
    }

    fn bpe(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut parts: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
        if let Some(last) = parts.last_mut() {
            last.push_str(WORD_SUFFIX);
        }
        while parts.len() > 1 {
            let best = parts
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(best) = best else { break };
            let mut merged = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && self.ranks.get(&(parts[i].clone(), parts[i + 1].clone())) == Some(&best) {
                    merged.push(format!("{}{}", parts[i], parts[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut parts[i]));
                    i += 1;
                }
            }
            parts = merged;
        }
        parts
    }

    /// Token ids for `text` without start/end markers or padding.
    pub fn encode(&self, text: &str) -> Result<Vec<i64>> {
        let cleaned = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if cleaned.is_empty() {
            return Err(Error::domain("cannot tokenize empty text"));
        }
        let mut ids = Vec::new();
        for m in self.pattern.find_iter(&cleaned) {
            let word: String = m.as_str().bytes().map(|b| self.byte_chars[b as usize]).collect();
            for piece in self.bpe(&word) {
                ids.push(self.encoder.get(&piece).copied().unwrap_or(self.end_id));
            }
        }
        Ok(ids)
    }

    /// Start token, content truncated to `max_tokens − 2`, end token, then
    /// end-token padding up to `max_tokens`.
    pub fn encode_padded(&self, text: &str, max_tokens: usize) -> Result<Vec<i64>> {
        if max_tokens < 2 {
            return Err(Error::contract("max_tokens must be at least 2"));
        }
        let mut content = self.encode(text)?;
        content.truncate(max_tokens - 2);
        let mut ids = Vec::with_capacity(max_tokens);
        ids.push(self.start_id);
        ids.extend(content);
        ids.push(self.end_id);
        ids.resize(max_tokens, self.end_id);
        Ok(ids)
    }

    /// 1 up to and including the first end token, 0 for padding.
    pub fn attention_mask(&self, ids: &[i64]) -> Vec<i64> {
        let len = ids
            .iter()
            .position(|&t| t == self.end_id)
            .map_or(ids.len(), |p| p + 1);
        (0..ids.len()).map(|i| i64::from(i < len)).collect()
    }
}
