//! Shared text normalisation used by lexical retrieval and Rouge-L.

/// Case-folds `text` and splits it on runs of non-alphanumeric characters,
/// dropping empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_folds_case() {
        assert_eq!(tokenize("Head, Skin-of body!"), vec!["head", "skin", "of", "body"]);
        assert!(tokenize("  ,; ").is_empty());
        assert_eq!(tokenize("UBERON:0000033"), vec!["uberon", "0000033"]);
    }
}
