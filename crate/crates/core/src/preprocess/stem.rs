//! Per-language stemmers.
//!
//! English uses the Snowball English (Porter2) rules and Russian the Snowball
//! Russian rules, both from `rust-stemmers`. Arabic uses a light
//! prefix/suffix stripper. Chinese has no inflection and is left untouched.
//!
//! Each stemmer is applied until the word stops changing, so `stem` is
//! idempotent even where the underlying rule set is not.

use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::corpus::Language;

const MAX_PASSES: usize = 8;

fn english() -> &'static Stemmer {
    static S: OnceLock<Stemmer> = OnceLock::new();
    S.get_or_init(|| Stemmer::create(Algorithm::English))
}

fn russian() -> &'static Stemmer {
    static S: OnceLock<Stemmer> = OnceLock::new();
    S.get_or_init(|| Stemmer::create(Algorithm::Russian))
}

const AR_PREFIXES: [&str; 7] = ["وال", "بال", "كال", "فال", "لل", "ال", "و"];
const AR_SUFFIXES: [&str; 10] = ["ها", "ان", "ات", "ون", "ين", "يه", "ية", "ه", "ة", "ي"];

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Light stemming: strip at most one article/conjunction prefix, then
/// pronoun and plural suffixes while at least two letters remain.
pub fn arabic_light(word: &str) -> String {
    let mut w = word;
    for p in AR_PREFIXES {
        if let Some(rest) = w.strip_prefix(p) {
            let min = if p == "و" { 3 } else { 2 };
            if char_len(rest) >= min {
                w = rest;
                break;
            }
        }
    }
    loop {
        let before = w;
        for s in AR_SUFFIXES {
            if let Some(rest) = w.strip_suffix(s) {
                if char_len(rest) >= 2 {
                    w = rest;
                    break;
                }
            }
        }
        if w == before {
            break;
        }
    }
    w.to_string()
}

fn stem_once(word: &str, lang: Language) -> String {
    match lang {
        Language::English => english().stem(word).into_owned(),
        Language::Russian => russian().stem(word).into_owned(),
        Language::Arabic => arabic_light(word),
        Language::Chinese => word.to_string(),
    }
}

pub fn stem_word(word: &str, lang: Language) -> String {
    let mut current = word.to_string();
    for _ in 0..MAX_PASSES {
        let next = stem_once(&current, lang);
        if next == current || next.is_empty() {
            break;
        }
        current = next;
    }
    current
}

pub fn stem<S: AsRef<str>>(tokens: &[S], lang: Language) -> Vec<String> {
    tokens.iter().map(|t| stem_word(t.as_ref(), lang)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn english_reference_forms() {
        // Reference outputs of the Porter family on these words agree.
        let cases = [
            ("bombing", "bomb"),
            ("attacks", "attack"),
            ("threatened", "threaten"),
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("running", "run"),
            ("hopeful", "hope"),
        ];
        for (w, expected) in cases {
            assert_eq!(stem_word(w, Language::English), expected, "{w}");
        }
        assert_eq!(stem_word("bomb", Language::English), "bomb");
    }

    #[test]
    fn russian_and_arabic_and_chinese() {
        assert_eq!(stem_word("угрозы", Language::Russian), "угроз");
        assert_eq!(stem_word("والكتاب", Language::Arabic), "كتاب");
        assert_eq!(stem_word("المدرسة", Language::Arabic), "مدرس");
        assert_eq!(stem_word("وهم", Language::Arabic), "وهم");
        assert_eq!(stem(&["威胁", "攻击"], Language::Chinese), vec!["威胁", "攻击"]);
    }

    proptest! {
        #[test]
        fn stemming_is_idempotent_and_length_preserving(
            words in proptest::collection::vec("[a-z]{1,12}|[а-я]{1,12}|[ا-ي]{1,8}", 0..10)
        ) {
            for lang in [Language::English, Language::Russian, Language::Arabic, Language::Chinese] {
                let once = stem(&words, lang);
                prop_assert_eq!(once.len(), words.len());
                prop_assert_eq!(stem(&once, lang), once);
            }
        }
    }
}
