//! Shared word tokenizer used by the sentiment, topics, and embedding
//! analytics.
//!
//! Texts are split on whitespace and edge punctuation is stripped from each
//! chunk. Scripts without whitespace word boundaries get character-level
//! treatment: every Han ideograph becomes its own token. The tokenizer
//! expects cleaned (lowercased) input.

/// Han ideograph ranges: URO, Extension A, compatibility ideographs, and the
/// supplementary-plane extensions.
fn is_han(c: char) -> bool {
    matches!(u32::from(c),
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2EBEF)
}

fn trim_edge_punct(s: &str) -> &str {
    s.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Tokenize a cleaned text. Never fails; may return an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut run = String::new();
        for c in chunk.chars() {
            if is_han(c) {
                flush_run(&mut run, &mut tokens);
                tokens.push(c.to_string());
            } else {
                run.push(c);
            }
        }
        flush_run(&mut run, &mut tokens);
    }
    tokens
}

fn flush_run(run: &mut String, tokens: &mut Vec<String>) {
    if !run.is_empty() {
        let trimmed = trim_edge_punct(run);
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_string());
        }
        run.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn whitespace_split_with_edge_punctuation() {
        assert_eq!(toks("good happy day"), ["good", "happy", "day"]);
        assert_eq!(toks("gut! mal"), ["gut", "mal"]);
        assert_eq!(toks("  (hello)  world... "), ["hello", "world"]);
        assert_eq!(toks("don't stop"), ["don't", "stop"]);
    }

    #[test]
    fn han_characters_are_single_tokens() {
        assert_eq!(toks("你好"), ["你", "好"]);
        assert_eq!(toks("abc你def"), ["abc", "你", "def"]);
        assert_eq!(toks("猫 dog"), ["猫", "dog"]);
    }

    #[test]
    fn empty_and_punctuation_only_inputs() {
        assert!(toks("").is_empty());
        assert!(toks("  !!! ...  ").is_empty());
    }

    #[test]
    fn emoji_only_chunks_drop_but_interior_emoji_survive_trimming() {
        // Emoji are not alphanumeric, so a lone emoji trims to nothing; a
        // token with an interior emoji keeps it (the topics preprocessor is
        // responsible for dropping such tokens).
        assert_eq!(toks("cat 😀 sat"), ["cat", "sat"]);
        assert_eq!(toks("ca😀t"), ["ca😀t"]);
    }
}
