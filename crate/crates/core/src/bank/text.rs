//! Sentence segmentation, normalization and fingerprinting.

use twox_hash::XxHash64;
use unicode_normalization::UnicodeNormalization;

/// Version tag of [`normalize`]; stored in bank metadata so that overlap
/// removal can refuse to mix banks normalized differently.
pub const NORMALIZE_VERSION: u32 = 1;

pub const DEFAULT_MIN_TOKENS: usize = 3;
pub const DEFAULT_MAX_TOKENS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            min_tokens: DEFAULT_MIN_TOKENS,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl SegmentConfig {
    pub fn accepts(&self, sentence: &str) -> bool {
        let n = sentence.split_whitespace().count();
        n >= self.min_tokens && n <= self.max_tokens
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits a document after every `.`, `!` or `?` that is followed by
/// whitespace (or ends the document) and keeps the pieces whose whitespace
/// token count lies in `[min_tokens, max_tokens]`.
pub fn segment(document: &str, cfg: &SegmentConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = document.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_terminal(c) {
            continue;
        }
        let end = i + c.len_utf8();
        let boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if boundary {
            push_piece(&document[start..end], cfg, &mut out);
            start = end;
        }
    }
    push_piece(&document[start..], cfg, &mut out);
    out
}

fn push_piece(piece: &str, cfg: &SegmentConfig, out: &mut Vec<String>) {
    let piece = piece.trim();
    if !piece.is_empty() && cfg.accepts(piece) {
        out.push(piece.to_string());
    }
}

/// Lowercased, NFC, whitespace-collapsed form used for dedup and leakage checks.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for (i, tok) in lowered.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out.nfc().collect()
}

/// Stable 64-bit fingerprint of already-normalized text (xxHash64, seed 0).
pub fn fingerprint_normalized(normalized: &str) -> u64 {
    XxHash64::oneshot(0, normalized.as_bytes())
}

pub fn fingerprint(text: &str) -> u64 {
    fingerprint_normalized(&normalize(text))
}
