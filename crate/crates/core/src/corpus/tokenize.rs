//! Shared tokenization: lowercase, split on whitespace and punctuation
//! boundaries, punctuation kept as single-character tokens. Applied
//! uniformly to article text, relations, and objects so containment checks
//! line up.

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_lowercase().collect());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::tokenize;

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("Born on 9 June, 1914."),
            vec!["born", "on", "9", "june", ",", "1914", "."]
        );
    }

    #[test]
    fn punctuation_becomes_single_tokens() {
        assert_eq!(tokenize("don't"), vec!["don", "'", "t"]);
        assert_eq!(tokenize("a--b"), vec!["a", "-", "-", "b"]);
    }

    #[test]
    fn whitespace_only_yields_nothing() {
        assert!(tokenize("  \t\n ").is_empty());
    }
}
