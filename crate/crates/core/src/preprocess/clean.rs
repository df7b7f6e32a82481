use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Nothing survived cleaning.
    AllNoise,
    /// Too few words survived cleaning to carry context.
    NoContext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanText {
    pub text: String,
    pub dropped_reason: Option<DropReason>,
}

struct Patterns {
    url: Regex,
    mention: Regex,
    hashtag: Regex,
    noise: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)(?:\b[a-z][a-z0-9+.\-]*://|\bwww\.)\S*").unwrap(),
        mention: Regex::new(r"@\w+").unwrap(),
        hashtag: Regex::new(r"#\w+").unwrap(),
        noise: Regex::new(r"[\p{P}\p{S}]").unwrap(),
    })
}

/// Strip URLs, @mentions, #hashtags, then punctuation and symbols, and
/// collapse whitespace.
///
/// The order matters: URL and mention patterns contain punctuation. The
/// output contains no `P*`/`S*` characters, so a second pass is a no-op.
pub fn clean_text(raw: &str, _lang: Language) -> CleanText {
    let p = patterns();
    let s = p.url.replace_all(raw, " ");
    let s = p.mention.replace_all(&s, " ");
    let s = p.hashtag.replace_all(&s, " ");
    let s = p.noise.replace_all(&s, " ");
    let text = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let dropped_reason = text.is_empty().then_some(DropReason::AllNoise);
    CleanText {
        text,
        dropped_reason,
    }
}
