//! Tokenization and hashing helpers shared by the index, the mock embedder
//! and the evaluation matchers.

use unicode_segmentation::UnicodeSegmentation;

/// Splits text on Unicode word boundaries and case-folds every token.
///
/// No stemming is applied; `"Cells"` and `"cell"` are different tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(|w| w.to_lowercase()).collect()
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Collapses runs of whitespace to one space, trims, and lowercases.
pub fn normalize_answer(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Returns the first balanced-looking JSON object or array embedded in `reply`,
/// skipping any prose or markdown fences the model wrapped around it.
pub fn extract_json(reply: &str, open: char, close: char) -> Option<&str> {
    let start = reply.find(open)?;
    let end = reply.rfind(close)?;
    (end > start).then(|| &reply[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_folds_case_and_splits_hyphens() {
        assert_eq!(
            tokenize("Non-small cell Lung, CANCER."),
            vec!["non", "small", "cell", "lung", "cancer"]
        );
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn extract_json_strips_fences() {
        let reply = "Sure:\n```json\n{\"a\": 1}\n```";
        assert_eq!(extract_json(reply, '{', '}'), Some("{\"a\": 1}"));
        assert_eq!(extract_json("nothing", '{', '}'), None);
    }

    #[test]
    fn normalize_answer_collapses_whitespace() {
        assert_eq!(normalize_answer("  Gefitinib \n  Tablets "), "gefitinib tablets");
    }
}
