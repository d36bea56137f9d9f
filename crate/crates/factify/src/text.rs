//! Text canonicalization applied at ingestion.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes and collapses every whitespace run to one space, trimming
/// the ends. Feature extraction and cache keys only ever see this form.
pub fn normalize_text(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_whitespace() {
        assert_eq!(normalize_text("  a \t b\n\nc  "), "a b c");
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn composes_to_nfc() {
        // e + combining acute -> é
        assert_eq!(normalize_text("caf\u{0065}\u{0301}"), "caf\u{00e9}");
    }
}
