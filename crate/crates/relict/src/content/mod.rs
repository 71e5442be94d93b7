//! HTML content extraction.
//!
//! Turns raw page markup into the material every query method works from:
//! an ordered token stream, term frequencies, and the page title. Parsing is
//! deliberately best-effort — malformed markup degrades to whatever text can
//! be salvaged, never to an error.

pub mod entities;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::stopwords::StopwordSet;
use crate::uri;

#[derive(Debug, Error)]
pub enum ContentError {
    #[error("title must be non-empty")]
    EmptyTitle,
    #[error(transparent)]
    Uri(#[from] uri::UriError),
}

/// A fetched page: the raw bytes plus where and when they came from.
#[derive(Debug, Clone)]
pub struct RawPage {
    pub uri: String,
    pub body: Vec<u8>,
    pub fetched_at: DateTime<Utc>,
}

impl RawPage {
    /// Normalizes the URI; the body may be empty (dead fetch).
    pub fn new(uri: &str, body: Vec<u8>) -> Result<Self, ContentError> {
        Ok(Self {
            uri: uri::normalize(uri)?,
            body,
            fetched_at: Utc::now(),
        })
    }
}

/// The textual skeleton of a page.
///
/// `tokens` and `term_freqs` are stop-word free; `raw_token_count` and
/// `stopword_token_count` describe the stream before stop word removal so
/// the corpus language filter can be applied later without re-parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedDoc {
    pub uri: String,
    pub tokens: Vec<String>,
    pub term_freqs: BTreeMap<String, u64>,
    pub title: Option<String>,
    pub token_count: u64,
    pub raw_token_count: u64,
    pub stopword_token_count: u64,
}

/// Shape statistics of a raw title.
#[derive(Debug, Clone, PartialEq)]
pub struct TitleStats {
    pub term_count: u64,
    pub char_count: u64,
    pub mean_chars_per_term: f64,
    pub stopword_count: u64,
}

/// Why a document fails the corpus filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    TooShort,
    NonEnglish,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::TooShort => write!(f, "too-short"),
            RejectReason::NonEnglish => write!(f, "non-english"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Accepted,
    Rejected(RejectReason),
}

impl FilterDecision {
    pub fn passed(&self) -> bool {
        matches!(self, FilterDecision::Accepted)
    }
}

/// Fraction of raw tokens that must be stop words for a page to count as
/// English.
pub const DEFAULT_ENGLISH_RATIO: f64 = 0.10;

/// Minimum content terms a page needs to stay in the corpus.
pub const DEFAULT_MIN_TERMS: u64 = 50;

/// Extract tokens, term frequencies and the title from a page.
///
/// Markup, scripts, styles and comments are removed; the remaining text is
/// case-folded and split on non-alphanumeric boundaries. Tokens shorter than
/// two characters, pure-digit tokens, and stop words are dropped. The title
/// is captured before stop word removal.
pub fn extract_text(page: &RawPage, stopwords: &StopwordSet) -> ExtractedDoc {
    let html = decode_bytes(&page.body);
    let scan = scan_markup(&html);
    let text = entities::decode(&scan.text);

    let mut tokens = Vec::new();
    let mut term_freqs: BTreeMap<String, u64> = BTreeMap::new();
    let mut raw_token_count = 0u64;
    let mut stopword_token_count = 0u64;
    for token in raw_tokens(&text) {
        raw_token_count += 1;
        if stopwords.contains(&token) {
            stopword_token_count += 1;
            continue;
        }
        *term_freqs.entry(token.clone()).or_insert(0) += 1;
        tokens.push(token);
    }
    let token_count = tokens.len() as u64;

    ExtractedDoc {
        uri: page.uri.clone(),
        tokens,
        term_freqs,
        title: scan.title.and_then(|t| clean_title(&t)),
        token_count,
        raw_token_count,
        stopword_token_count,
    }
}

/// The inner text of the first `<title>` element, entity-decoded and
/// whitespace-collapsed. `None` when no title exists or it is empty.
pub fn extract_title(page: &RawPage) -> Option<String> {
    let html = decode_bytes(&page.body);
    scan_markup(&html).title.and_then(|t| clean_title(&t))
}

/// Term, character and stop word counts of a raw title.
pub fn title_stats(title: &str, stopwords: &StopwordSet) -> Result<TitleStats, ContentError> {
    if title.trim().is_empty() {
        return Err(ContentError::EmptyTitle);
    }
    let terms: Vec<&str> = title.split_whitespace().collect();
    let term_count = terms.len() as u64;
    let char_count = title.chars().count() as u64;
    let term_chars: u64 = terms.iter().map(|t| t.chars().count() as u64).sum();
    let stopword_count = terms.iter().filter(|t| stopwords.contains(t)).count() as u64;
    Ok(TitleStats {
        term_count,
        char_count,
        mean_chars_per_term: if term_count == 0 {
            0.0
        } else {
            term_chars as f64 / term_count as f64
        },
        stopword_count,
    })
}

/// Remove stop word terms from a title, preserving order. May return an
/// empty string when every term was a stop word.
pub fn strip_stopwords_from_title(title: &str, stopwords: &StopwordSet) -> String {
    title
        .split_whitespace()
        .filter(|t| !stopwords.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Corpus admission test: long enough and plausibly English.
///
/// The English check is a stop word ratio heuristic over the pre-removal
/// token stream; text where fewer than `english_ratio` of raw tokens are
/// stop words is rejected.
pub fn passes_corpus_filter(
    doc: &ExtractedDoc,
    min_terms: u64,
    english_ratio: f64,
) -> FilterDecision {
    if doc.token_count < min_terms {
        return FilterDecision::Rejected(RejectReason::TooShort);
    }
    let ratio = if doc.raw_token_count == 0 {
        0.0
    } else {
        doc.stopword_token_count as f64 / doc.raw_token_count as f64
    };
    if ratio < english_ratio {
        return FilterDecision::Rejected(RejectReason::NonEnglish);
    }
    FilterDecision::Accepted
}

/// Lowercased alphanumeric tokens of `text`, at least two characters,
/// pure-digit runs dropped. Stop words are retained.
pub fn raw_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for low in ch.to_lowercase() {
                current.push(low);
            }
        } else if !current.is_empty() {
            push_token(&mut out, std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        push_token(&mut out, current);
    }
    out
}

fn push_token(out: &mut Vec<String>, token: String) {
    if token.chars().count() < 2 {
        return;
    }
    if token.chars().all(|c| c.is_numeric()) {
        return;
    }
    out.push(token);
}

fn decode_bytes(body: &[u8]) -> String {
    match std::str::from_utf8(body) {
        Ok(s) => s.to_string(),
        // Latin-1 fallback: every byte maps to the same code point.
        Err(_) => body.iter().map(|&b| b as char).collect(),
    }
}

fn clean_title(inner: &str) -> Option<String> {
    // The captured slice may still contain stray tags from malformed nesting.
    let stripped = scan_markup(inner).text;
    let decoded = entities::decode(&stripped);
    let no_angles: String = decoded
        .chars()
        .map(|c| if c == '<' || c == '>' { ' ' } else { c })
        .collect();
    let collapsed = no_angles.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        None
    } else {
        Some(collapsed)
    }
}

struct MarkupScan {
    text: String,
    title: Option<String>,
}

/// One pass over the markup: tags, comments, script and style bodies are
/// dropped, text is kept, and the inner markup of the first properly closed
/// `<title>` element is captured verbatim.
fn scan_markup(html: &str) -> MarkupScan {
    let bytes = html.as_bytes();
    let mut text = String::with_capacity(html.len() / 2);
    let mut title: Option<String> = None;
    let mut i = 0usize;

    while i < bytes.len() {
        if bytes[i] != b'<' {
            let end = find_byte(bytes, b'<', i).unwrap_or(bytes.len());
            text.push_str(&html[i..end]);
            i = end;
            continue;
        }
        if html[i..].starts_with("<!--") {
            match find_sub(bytes, b"-->", i + 4) {
                Some(j) => {
                    text.push(' ');
                    i = j + 3;
                }
                None => break,
            }
            continue;
        }
        let Some(&next) = bytes.get(i + 1) else {
            text.push('<');
            break;
        };
        if !(next.is_ascii_alphabetic() || next == b'/' || next == b'!' || next == b'?') {
            // "<" followed by anything else is literal text.
            text.push('<');
            i += 1;
            continue;
        }
        let Some(gt) = find_byte(bytes, b'>', i + 1) else {
            // Unterminated tag swallows the rest.
            break;
        };
        let is_closing = next == b'/';
        let name = tag_name(&html[i + 1..gt]);
        if !is_closing && (name.eq_ignore_ascii_case("script") || name.eq_ignore_ascii_case("style"))
        {
            let closer = if name.eq_ignore_ascii_case("script") {
                &b"</script"[..]
            } else {
                &b"</style"[..]
            };
            match find_ci(bytes, closer, gt + 1) {
                Some(j) => {
                    let close_gt = find_byte(bytes, b'>', j).map(|g| g + 1).unwrap_or(bytes.len());
                    text.push(' ');
                    i = close_gt;
                }
                None => break,
            }
            continue;
        }
        if !is_closing && title.is_none() && name.eq_ignore_ascii_case("title") {
            if let Some(j) = find_ci(bytes, b"</title", gt + 1) {
                title = Some(html[gt + 1..j].to_string());
            }
            // Fall through: the inner text also flows into the body text.
        }
        text.push(' ');
        i = gt + 1;
    }

    MarkupScan { text, title }
}

fn tag_name(tag_body: &str) -> &str {
    let trimmed = tag_body.trim_start_matches('/');
    let end = trimmed
        .find(|c: char| !c.is_ascii_alphanumeric())
        .unwrap_or(trimmed.len());
    &trimmed[..end]
}

fn find_byte(haystack: &[u8], needle: u8, from: usize) -> Option<usize> {
    haystack[from.min(haystack.len())..]
        .iter()
        .position(|&b| b == needle)
        .map(|p| p + from)
}

fn find_sub(haystack: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from >= haystack.len() || needle.is_empty() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn find_ci(haystack: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from >= haystack.len() || needle.is_empty() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle))
        .map(|p| p + from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(uri: &str, html: &str) -> RawPage {
        RawPage::new(uri, html.as_bytes().to_vec()).unwrap()
    }

    fn sw() -> StopwordSet {
        StopwordSet::bundled()
    }

    #[test]
    fn empty_body_yields_empty_doc() {
        let doc = extract_text(&page("http://x.org", ""), &sw());
        assert_eq!(doc.token_count, 0);
        assert!(doc.title.is_none());
        assert!(doc.tokens.is_empty());
    }

    #[test]
    fn all_stopword_body_yields_zero_tokens() {
        let doc = extract_text(&page("http://x.org", "<p>the The THE</p>"), &sw());
        assert_eq!(doc.token_count, 0);
        assert_eq!(doc.raw_token_count, 3);
        assert_eq!(doc.stopword_token_count, 3);
    }

    #[test]
    fn scripts_styles_comments_removed() {
        let html = "<html><head><style>.x { color: red }</style>\
                    <script>var secret = 'leak';</script></head>\
                    <body><!-- hidden words -->photography gallery</body></html>";
        let doc = extract_text(&page("http://x.org", html), &sw());
        assert_eq!(doc.tokens, vec!["photography", "gallery"]);
        assert!(!doc.term_freqs.contains_key("secret"));
        assert!(!doc.term_freqs.contains_key("color"));
        assert!(!doc.term_freqs.contains_key("hidden"));
    }

    #[test]
    fn term_freqs_sum_to_token_count() {
        let html = "<p>camera camera photo 42 a</p>";
        let doc = extract_text(&page("http://x.org", html), &sw());
        assert_eq!(doc.term_freqs["camera"], 2);
        assert_eq!(doc.term_freqs["photo"], 1);
        // "42" is pure-digit, "a" too short.
        assert_eq!(doc.token_count, 3);
        let sum: u64 = doc.term_freqs.values().sum();
        assert_eq!(sum, doc.token_count);
    }

    #[test]
    fn extraction_is_idempotent_over_wrapping() {
        let text = "holga lomo cameras of the lofi kind";
        let plain = extract_text(&page("http://x.org", text), &sw());
        let wrapped = extract_text(
            &page("http://x.org", &format!("<html><body>{text}</body></html>")),
            &sw(),
        );
        assert_eq!(plain.tokens, wrapped.tokens);
        assert_eq!(plain.term_freqs, wrapped.term_freqs);
    }

    #[test]
    fn title_simple() {
        let p = page("http://smiledesigners.org", "<html><head><title>Home</title></head></html>");
        assert_eq!(extract_title(&p), Some("Home".to_string()));
    }

    #[test]
    fn title_with_entities_and_whitespace() {
        let p = page(
            "http://redcrossla.org",
            "<title>\n  American Red Cross\n  of &nbsp; Greater   Los Angeles </title>",
        );
        assert_eq!(
            extract_title(&p),
            Some("American Red Cross of Greater Los Angeles".to_string())
        );
    }

    #[test]
    fn title_absent_or_empty() {
        assert_eq!(extract_title(&page("http://x.org", "<body>no title</body>")), None);
        assert_eq!(extract_title(&page("http://x.org", "<title></title>")), None);
        assert_eq!(extract_title(&page("http://x.org", "<title>   </title>")), None);
    }

    #[test]
    fn title_with_attributes_and_case() {
        let p = page("http://x.org", "<TITLE id=\"main\" >Charter Flights</TiTlE>");
        assert_eq!(extract_title(&p), Some("Charter Flights".to_string()));
    }

    #[test]
    fn first_title_wins() {
        let p = page("http://x.org", "<title>First</title><title>Second</title>");
        assert_eq!(extract_title(&p), Some("First".to_string()));
    }

    #[test]
    fn title_inside_script_ignored() {
        let p = page(
            "http://x.org",
            "<script>document.write('<title>Fake</title>')</script><title>Real</title>",
        );
        assert_eq!(extract_title(&p), Some("Real".to_string()));
    }

    #[test]
    fn title_never_contains_angle_brackets() {
        let cases = [
            "<title>a <b>bold</b> title</title>",
            "<title>a &lt;tag&gt; inside</title>",
            "<title>broken <nest </title>",
        ];
        for html in cases {
            if let Some(t) = extract_title(&page("http://x.org", html)) {
                assert!(!t.contains('<') && !t.contains('>'), "{html} -> {t:?}");
            }
        }
    }

    #[test]
    fn unclosed_title_is_absent() {
        let p = page("http://x.org", "<title>runs off the end");
        assert_eq!(extract_title(&p), None);
    }

    #[test]
    fn title_stats_worked_examples() {
        let stats = title_stats("American Red Cross of Greater Los Angeles", &sw()).unwrap();
        assert_eq!(stats.term_count, 7);
        assert_eq!(stats.stopword_count, 1);

        let stats = title_stats("Home", &sw()).unwrap();
        assert_eq!(stats.term_count, 1);
        assert_eq!(stats.stopword_count, 0);
        assert_eq!(stats.char_count, 4);
        assert!((stats.mean_chars_per_term - 4.0).abs() < 1e-12);

        let stats = title_stats("of the and", &sw()).unwrap();
        assert_eq!(stats.stopword_count, 3);
        assert_eq!(stats.term_count, 3);
    }

    #[test]
    fn title_stats_mean_times_count_is_total_term_chars() {
        let title = "Dental Imagined Pleasant Boost";
        let stats = title_stats(title, &sw()).unwrap();
        let total: u64 = title.split_whitespace().map(|t| t.chars().count() as u64).sum();
        assert!((stats.mean_chars_per_term * stats.term_count as f64 - total as f64).abs() < 1e-9);
    }

    #[test]
    fn title_stats_rejects_empty() {
        assert!(title_stats("", &sw()).is_err());
        assert!(title_stats("   ", &sw()).is_err());
    }

    #[test]
    fn strip_stopwords_examples() {
        assert_eq!(
            strip_stopwords_from_title("American Red Cross of Greater Los Angeles", &sw()),
            "American Red Cross Greater Los Angeles"
        );
        assert_eq!(strip_stopwords_from_title("Home", &sw()), "Home");
        assert_eq!(strip_stopwords_from_title("of the", &sw()), "");
    }

    #[test]
    fn corpus_filter_boundaries() {
        let english_filler = "the house of the keeper was filled with light and the garden grew ";
        let mut body = String::new();
        for _ in 0..12 {
            body.push_str(english_filler);
        }
        let doc = extract_text(&page("http://x.org", &body), &sw());
        assert!(doc.token_count >= 50, "filler too small: {}", doc.token_count);
        assert!(passes_corpus_filter(&doc, 50, DEFAULT_ENGLISH_RATIO).passed());

        // One fewer than the minimum.
        assert_eq!(
            passes_corpus_filter(&doc, doc.token_count + 1, DEFAULT_ENGLISH_RATIO),
            FilterDecision::Rejected(RejectReason::TooShort)
        );
        // Exactly the minimum is inclusive.
        assert!(passes_corpus_filter(&doc, doc.token_count, DEFAULT_ENGLISH_RATIO).passed());
    }

    #[test]
    fn corpus_filter_rejects_gibberish_as_non_english() {
        let mut body = String::new();
        for i in 0..200 {
            body.push_str(&format!("qz{i}xv{i}w "));
        }
        let doc = extract_text(&page("http://x.org", &body), &sw());
        assert!(doc.token_count >= 50);
        assert_eq!(
            passes_corpus_filter(&doc, 50, DEFAULT_ENGLISH_RATIO),
            FilterDecision::Rejected(RejectReason::NonEnglish)
        );
    }

    #[test]
    fn stopwords_never_survive_into_term_freqs() {
        let doc = extract_text(
            &page("http://x.org", "the quick brown fox jumps over the lazy dog"),
            &sw(),
        );
        for term in doc.term_freqs.keys() {
            assert!(!sw().contains(term), "stopword {term} leaked");
        }
    }

    #[test]
    fn latin1_fallback() {
        // 0xE9 is 'e' acute in Latin-1 and invalid as a lone UTF-8 byte.
        let body = b"caf\xE9 gallery caf\xE9".to_vec();
        let p = RawPage::new("http://x.org", body).unwrap();
        let doc = extract_text(&p, &sw());
        assert_eq!(doc.term_freqs["caf\u{E9}"], 2);
    }
}
