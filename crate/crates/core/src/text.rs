//! Sentence segmentation, tokenization, stopwords and light stemming.

use std::collections::HashMap;
use std::sync::OnceLock;

/// Function words dropped during concept extraction. Single letters are kept
/// so that short tokens such as "a" survive as unigram concepts.
const STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by",
    "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from",
    "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him",
    "himself", "his", "how", "if", "in", "into", "is", "it", "its", "itself", "just", "me",
    "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "only",
    "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she", "should",
    "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why",
    "will", "with", "would", "you", "your", "yours", "yourself", "yourselves",
];

/// English words in descending frequency order. Background counts follow a
/// Zipf law over this ranking: `count(rank) = BACKGROUND_TOP / rank`.
const BACKGROUND_WORDS: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "is", "that", "for", "it", "as", "was", "with", "be",
    "by", "on", "not", "he", "i", "this", "are", "or", "his", "from", "at", "which", "but",
    "have", "an", "had", "they", "you", "were", "their", "one", "all", "we", "can", "her", "has",
    "there", "been", "if", "more", "when", "will", "would", "who", "so", "no", "said", "year",
    "people", "new", "time", "state", "government", "world", "first", "two", "after", "also",
    "over", "years", "could", "only", "other", "some", "into", "than", "its", "them", "may",
    "out", "up", "about", "what", "any", "most", "then", "three", "these", "many", "percent",
    "made", "where", "last", "such", "much", "between", "week", "day", "did", "under", "city",
    "country", "told", "president", "officials", "report", "since", "because", "while", "during",
    "against", "before", "well", "should", "each", "million", "public", "group", "national",
    "police", "company", "official", "department", "support", "found", "part", "local", "later",
    "early", "home", "number", "law", "area", "several", "including", "former", "second",
    "program", "money", "system", "work", "news", "house", "office", "water", "school", "family",
    "health", "market", "court", "power", "military", "members", "force", "team", "children",
    "business", "agency", "case", "plan", "policy", "problem", "service", "community", "issue",
];

const BACKGROUND_TOP: f64 = 5.0e6;
/// Total token count of the background corpus the table stands for.
pub const BACKGROUND_TOTAL: f64 = 1.0e8;

fn stopword_set() -> &'static std::collections::HashSet<&'static str> {
    static SET: OnceLock<std::collections::HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.iter().copied().collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token)
}

/// Background unigram count, zero for words outside the table.
pub fn background_count(token: &str) -> f64 {
    static TABLE: OnceLock<HashMap<&'static str, f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        BACKGROUND_WORDS
            .iter()
            .enumerate()
            .map(|(rank, w)| (*w, (BACKGROUND_TOP / (rank + 1) as f64).round()))
            .collect()
    });
    table.get(token).copied().unwrap_or(0.0)
}

/// Split on `.`, `!` or `?` when followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                let piece = text[start..end].trim();
                if !piece.is_empty() {
                    out.push(piece);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// A lowercased token and whether its original form started uppercase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub capitalized: bool,
}

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize_cased(text: &str) -> Vec<Token> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(|piece| Token {
            text: piece.to_lowercase(),
            capitalized: piece.chars().next().is_some_and(char::is_uppercase),
        })
        .collect()
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_cased(text).into_iter().map(|t| t.text).collect()
}

/// Strip one of `ing`, `ed`, `es`, `s` when at least three characters remain.
pub fn stem(token: &str) -> &str {
    for suffix in ["ing", "es", "ed", "s"] {
        if let Some(stripped) = token.strip_suffix(suffix) {
            if stripped.chars().count() >= 3 {
                return stripped;
            }
        }
    }
    token
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_on_terminal_punctuation() {
        assert_eq!(split_sentences("A b. C d."), vec!["A b.", "C d."]);
        assert_eq!(split_sentences("Is it? Yes! ok"), vec!["Is it?", "Yes!", "ok"]);
        // no whitespace after the period: not a boundary
        assert_eq!(split_sentences("v1.2 is out."), vec!["v1.2 is out."]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn tokenizer_lowercases_and_tracks_case() {
        let toks = tokenize_cased("The U.S. economy, grew!");
        let words: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(words, ["the", "u", "s", "economy", "grew"]);
        assert!(toks[0].capitalized && toks[1].capitalized && !toks[3].capitalized);
    }

    #[test]
    fn stemming_rules() {
        assert_eq!(stem("symptoms"), "symptom");
        assert_eq!(stem("treatment"), "treatment");
        assert_eq!(stem("running"), "runn");
        assert_eq!(stem("boxes"), "box");
        assert_eq!(stem("walked"), "walk");
        assert_eq!(stem("is"), "is");
    }

    #[test]
    fn stopwords_keep_single_letters() {
        assert!(is_stopword("the"));
        assert!(!is_stopword("a"));
        assert!(!is_stopword("cancer"));
    }

    #[test]
    fn background_is_zipfian() {
        assert_eq!(background_count("the"), 5.0e6);
        assert_eq!(background_count("of"), 2.5e6);
        assert_eq!(background_count("zzyzx"), 0.0);
    }
}
