//! Canonical text form shared by the mention matcher, the serializer and the
//! metrics: lowercase, trimmed, internal whitespace collapsed to single
//! spaces, terminal punctuation stripped. Every component that compares text
//! goes through [`canonicalize`] so matching behaves identically everywhere.

const TERMINAL_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Canonical form of a value or utterance.
pub fn canonicalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(TERMINAL_PUNCT)
        .trim_end()
        .to_string()
}

/// Collapse whitespace runs without changing case or punctuation. Used for
/// plain-text segments of token streams, where surface form is kept.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokens of the canonical form.
pub fn canonical_tokens(s: &str) -> Vec<String> {
    canonicalize(s)
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}
