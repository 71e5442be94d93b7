//! Lexical signatures.
//!
//! A lexical signature is the top-n terms of a document ranked by TF-IDF —
//! a compact query that captures what the page is about. Signatures are
//! computed either from the page itself or from a "bucket of words"
//! aggregated over the pages linking to it (its inlink neighborhood).
//!
//! Scoring: `score(t) = tf(t) · ln(N / clamp(df(t), 1, N))` with
//! `tf(t) = count(t) / total tokens`. Ties break by ascending term so the
//! same inputs always produce the same signature.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::content::ExtractedDoc;
use crate::docfreq::{DfError, DfProvider, DfRecord};
use crate::uri;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("no scoreable terms in {uri}")]
    NoScoreableTerms { uri: String },
    #[error("no DfRecord for scored term {term:?}")]
    MissingDf { term: String },
    #[error("no neighborhood: inlink page list is empty for {uri}")]
    NoNeighborhood { uri: String },
    #[error("signature length must be at least 1")]
    ZeroLength,
    #[error(transparent)]
    Df(#[from] DfError),
    #[error(transparent)]
    Uri(#[from] uri::UriError),
}

/// Where a signature's terms came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureSource {
    Page,
    Neighborhood,
}

impl std::fmt::Display for SignatureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SignatureSource::Page => write!(f, "page"),
            SignatureSource::Neighborhood => write!(f, "neighborhood"),
        }
    }
}

/// Ordered scored terms plus the provenance needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalSignature {
    /// `(term, score)` with scores non-increasing and terms pairwise distinct.
    pub terms: Vec<(String, f64)>,
    /// Requested length; `terms.len()` may be smaller (see `short`).
    pub n: usize,
    pub source: SignatureSource,
    pub provider_id: String,
    pub n_docs: u64,
    pub uri: String,
    /// Set when the source had fewer distinct terms than requested.
    pub short: bool,
}

impl LexicalSignature {
    /// Terms only, in score order — the query form.
    pub fn term_list(&self) -> Vec<String> {
        self.terms.iter().map(|(t, _)| t.clone()).collect()
    }

    /// One-line record: `uri \t n \t source \t provider_id \t term:score,…`
    /// with scores at six decimal places.
    pub fn to_record_line(&self) -> String {
        let terms = self
            .terms
            .iter()
            .map(|(t, s)| format!("{t}:{s:.6}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.uri, self.n, self.source, self.provider_id, terms
        )
    }
}

/// Term frequencies aggregated over the pages that link to a centroid URI.
#[derive(Debug, Clone, PartialEq)]
pub struct TermBucket {
    pub uri: String,
    pub term_freqs: BTreeMap<String, u64>,
    pub source_pages: Vec<String>,
}

/// IDF with df clamped into `[1, N]` so the logarithm stays finite.
pub fn clamped_idf(df: u64, n_docs: u64) -> f64 {
    let n = n_docs.max(1);
    let df = df.clamp(1, n);
    ((n as f64) / (df as f64)).ln()
}

/// TF-IDF scores for every term of a frequency map.
///
/// Every term must have a DfRecord; a missing one is a contract violation,
/// not a zero.
pub fn tfidf_score(
    term_freqs: &BTreeMap<String, u64>,
    df_records: &[DfRecord],
) -> Result<BTreeMap<String, f64>, SignatureError> {
    let total: u64 = term_freqs.values().sum();
    if total == 0 {
        return Ok(BTreeMap::new());
    }
    let by_term: HashMap<&str, &DfRecord> =
        df_records.iter().map(|r| (r.term.as_str(), r)).collect();
    let mut scores = BTreeMap::new();
    for (term, &count) in term_freqs {
        let record = by_term
            .get(term.as_str())
            .ok_or_else(|| SignatureError::MissingDf { term: term.clone() })?;
        let tf = count as f64 / total as f64;
        scores.insert(term.clone(), tf * clamped_idf(record.df, record.n_docs));
    }
    Ok(scores)
}

/// What a signature can be computed from.
#[derive(Debug, Clone, Copy)]
pub enum SignatureInput<'a> {
    Doc(&'a ExtractedDoc),
    Bucket(&'a TermBucket),
}

impl<'a> SignatureInput<'a> {
    fn uri(&self) -> &str {
        match self {
            SignatureInput::Doc(d) => &d.uri,
            SignatureInput::Bucket(b) => &b.uri,
        }
    }

    fn term_freqs(&self) -> &BTreeMap<String, u64> {
        match self {
            SignatureInput::Doc(d) => &d.term_freqs,
            SignatureInput::Bucket(b) => &b.term_freqs,
        }
    }

    fn source(&self) -> SignatureSource {
        match self {
            SignatureInput::Doc(_) => SignatureSource::Page,
            SignatureInput::Bucket(_) => SignatureSource::Neighborhood,
        }
    }
}

/// Top-n terms by descending TF-IDF, ties broken by ascending term.
///
/// When the source has fewer than `n` distinct terms the signature comes
/// back shorter and flagged rather than failing.
pub fn make_signature(
    input: SignatureInput<'_>,
    n: usize,
    provider: &dyn DfProvider,
) -> Result<LexicalSignature, SignatureError> {
    if n == 0 {
        return Err(SignatureError::ZeroLength);
    }
    let term_freqs = input.term_freqs();
    if term_freqs.is_empty() {
        return Err(SignatureError::NoScoreableTerms {
            uri: input.uri().to_string(),
        });
    }
    // BTreeMap keys are sorted, so the provider sees a deterministic batch.
    let terms: Vec<String> = term_freqs.keys().cloned().collect();
    let records = provider.lookup(&terms)?;
    let scores = tfidf_score(term_freqs, &records)?;

    let mut ranked: Vec<(String, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let short = ranked.len() < n;
    ranked.truncate(n);

    Ok(LexicalSignature {
        terms: ranked,
        n,
        source: input.source(),
        provider_id: provider.provider_id().to_string(),
        n_docs: provider.n_docs(),
        uri: input.uri().to_string(),
        short,
    })
}

/// Aggregate term frequencies over up to `cap` inlink pages (the centroid's
/// own content is never included). Pages are deduplicated by normalized URI
/// before the cap applies.
pub fn build_term_bucket(
    centroid_uri: &str,
    inlink_pages: &[ExtractedDoc],
    cap: usize,
) -> Result<TermBucket, SignatureError> {
    let centroid = uri::normalize(centroid_uri)?;
    if inlink_pages.is_empty() {
        return Err(SignatureError::NoNeighborhood { uri: centroid });
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut term_freqs: BTreeMap<String, u64> = BTreeMap::new();
    let mut source_pages = Vec::new();
    for page in inlink_pages {
        if source_pages.len() >= cap.max(1) {
            break;
        }
        if page.uri == centroid || !seen.insert(page.uri.clone()) {
            continue;
        }
        for (term, &count) in &page.term_freqs {
            *term_freqs.entry(term.clone()).or_insert(0) += count;
        }
        source_pages.push(page.uri.clone());
    }
    if source_pages.is_empty() {
        return Err(SignatureError::NoNeighborhood { uri: centroid });
    }
    Ok(TermBucket {
        uri: centroid,
        term_freqs,
        source_pages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{extract_text, RawPage};
    use crate::docfreq::LocalIndexDf;
    use crate::stopwords::StopwordSet;
    use chrono::Utc;

    fn doc(uri: &str, body: &str) -> ExtractedDoc {
        let page = RawPage::new(uri, body.as_bytes().to_vec()).unwrap();
        extract_text(&page, &StopwordSet::bundled())
    }

    fn record(term: &str, df: u64, n: u64) -> DfRecord {
        DfRecord {
            term: term.to_string(),
            df,
            n_docs: n,
            provider_id: "test".to_string(),
            fetched_at: Utc::now(),
        }
    }

    #[test]
    fn tfidf_three_doc_worked_example() {
        // Oracle values computed by hand:
        //   total = 8
        //   apple:  (2/8) · ln(3/1) = 0.25 · 1.0986... = 0.274653...
        //   pie:    (1/8) · ln(3/2) = 0.125 · 0.405465... = 0.050683...
        //   common: (5/8) · ln(3/3) = 0
        let mut freqs = BTreeMap::new();
        freqs.insert("apple".to_string(), 2);
        freqs.insert("pie".to_string(), 1);
        freqs.insert("common".to_string(), 5);
        let records = vec![record("apple", 1, 3), record("pie", 2, 3), record("common", 3, 3)];
        let scores = tfidf_score(&freqs, &records).unwrap();
        assert!((scores["apple"] - 0.25f64 * 3f64.ln()).abs() < 1e-12);
        assert!((scores["pie"] - 0.125f64 * 1.5f64.ln()).abs() < 1e-12);
        assert_eq!(scores["common"], 0.0);
        assert!(scores["apple"] > scores["pie"]);
    }

    #[test]
    fn term_in_every_document_scores_zero() {
        let mut freqs = BTreeMap::new();
        freqs.insert("ubiquitous".to_string(), 7);
        let scores = tfidf_score(&freqs, &[record("ubiquitous", 10, 10)]).unwrap();
        assert_eq!(scores["ubiquitous"], 0.0);
    }

    #[test]
    fn single_doc_corpus_scores_all_zero() {
        let mut freqs = BTreeMap::new();
        freqs.insert("anything".to_string(), 3);
        freqs.insert("else".to_string(), 1);
        let records = vec![record("anything", 1, 1), record("else", 1, 1)];
        let scores = tfidf_score(&freqs, &records).unwrap();
        assert!(scores.values().all(|&s| s == 0.0));
    }

    #[test]
    fn missing_df_record_is_a_hard_error() {
        let mut freqs = BTreeMap::new();
        freqs.insert("apple".to_string(), 1);
        let err = tfidf_score(&freqs, &[]).unwrap_err();
        assert!(matches!(err, SignatureError::MissingDf { .. }));
    }

    #[test]
    fn df_zero_is_clamped_to_one_inside_idf() {
        assert_eq!(clamped_idf(0, 10), clamped_idf(1, 10));
        assert_eq!(clamped_idf(20, 10), clamped_idf(10, 10));
        assert_eq!(clamped_idf(5, 0), 0.0);
    }

    #[test]
    fn signature_truncates_and_flags_short_sources() {
        let d = doc("http://tiny.org", "alpha beta gamma");
        let provider = LocalIndexDf::from_docs(std::slice::from_ref(&d), "local");
        let sig = make_signature(SignatureInput::Doc(&d), 5, &provider).unwrap();
        assert_eq!(sig.terms.len(), 3);
        assert!(sig.short);
        assert_eq!(sig.n, 5);
    }

    #[test]
    fn equal_scores_break_ties_lexicographically() {
        // One document: every score is tf · ln(1) = 0, so order is purely
        // the tie rule.
        let d = doc("http://tie.org", "zebra yak xerus");
        let provider = LocalIndexDf::from_docs(std::slice::from_ref(&d), "local");
        let sig = make_signature(SignatureInput::Doc(&d), 3, &provider).unwrap();
        let terms = sig.term_list();
        assert_eq!(terms, vec!["xerus", "yak", "zebra"]);
    }

    #[test]
    fn empty_source_is_a_hard_error() {
        let d = doc("http://empty.org", "");
        let provider = LocalIndexDf::from_docs(std::slice::from_ref(&d), "local");
        let err = make_signature(SignatureInput::Doc(&d), 5, &provider).unwrap_err();
        assert!(matches!(err, SignatureError::NoScoreableTerms { .. }));
    }

    #[test]
    fn five_term_signature_is_prefix_of_seven_term() {
        let corpus = vec![
            doc(
                "http://a.org",
                "kestrel kestrel kestrel falcon falcon harrier merlin hobby osprey buzzard kite",
            ),
            doc("http://b.org", "falcon harrier sparrow finch"),
            doc("http://c.org", "osprey buzzard kite warbler"),
        ];
        let provider = LocalIndexDf::from_docs(&corpus, "local");
        let five = make_signature(SignatureInput::Doc(&corpus[0]), 5, &provider).unwrap();
        let seven = make_signature(SignatureInput::Doc(&corpus[0]), 7, &provider).unwrap();
        let seven_terms: HashSet<String> = seven.term_list().into_iter().collect();
        for term in five.term_list() {
            assert!(seven_terms.contains(&term), "{term} in LS5 but not LS7");
        }
        // And the prefix is exact, not just a subset.
        assert_eq!(five.term_list(), seven.term_list()[..5].to_vec());
    }

    #[test]
    fn bucket_aggregates_and_caps() {
        let pages: Vec<ExtractedDoc> = (0..60)
            .map(|i| doc(&format!("http://in{i}.org"), "photo gallery spacer"))
            .collect();
        let bucket = build_term_bucket("http://centroid.org", &pages, 50).unwrap();
        assert_eq!(bucket.source_pages.len(), 50);
        assert_eq!(bucket.term_freqs["photo"], 50);
    }

    #[test]
    fn bucket_of_one_page_equals_that_page() {
        let page = doc("http://in.org", "spacer view submission");
        let bucket = build_term_bucket("http://centroid.org", std::slice::from_ref(&page), 50).unwrap();
        assert_eq!(bucket.term_freqs, page.term_freqs);
        assert_eq!(bucket.source_pages, vec![page.uri.clone()]);
    }

    #[test]
    fn bucket_excludes_centroid_and_duplicates() {
        let pages = vec![
            doc("http://centroid.org", "self content"),
            doc("http://in.org", "photo"),
            doc("http://www.in.org", "photo"),
        ];
        let bucket = build_term_bucket("http://centroid.org", &pages, 50).unwrap();
        assert_eq!(bucket.source_pages, vec!["http://in.org".to_string()]);
        assert_eq!(bucket.term_freqs["photo"], 1);
        assert!(!bucket.term_freqs.contains_key("self"));
    }

    #[test]
    fn empty_neighborhood_is_a_hard_error() {
        let err = build_term_bucket("http://centroid.org", &[], 50).unwrap_err();
        assert!(matches!(err, SignatureError::NoNeighborhood { .. }));
        // Only the centroid itself linking in counts as empty too.
        let only_self = vec![doc("http://centroid.org", "self")];
        let err = build_term_bucket("http://centroid.org", &only_self, 50).unwrap_err();
        assert!(matches!(err, SignatureError::NoNeighborhood { .. }));
    }

    #[test]
    fn record_line_format() {
        let sig = LexicalSignature {
            terms: vec![("apple".to_string(), 0.5), ("pie".to_string(), 0.25)],
            n: 2,
            source: SignatureSource::Page,
            provider_id: "local".to_string(),
            n_docs: 3,
            uri: "http://a.org".to_string(),
            short: false,
        };
        assert_eq!(
            sig.to_record_line(),
            "http://a.org\t2\tpage\tlocal\tapple:0.500000,pie:0.250000"
        );
    }

    #[test]
    fn uniform_count_scaling_preserves_signature() {
        let corpus = vec![
            doc("http://a.org", "kestrel kestrel falcon harrier merlin merlin merlin hobby"),
            doc("http://b.org", "falcon sparrow finch"),
            doc("http://c.org", "harrier hobby warbler"),
        ];
        let provider = LocalIndexDf::from_docs(&corpus, "local");
        let base = make_signature(SignatureInput::Doc(&corpus[0]), 4, &provider).unwrap();

        for k in [2u64, 3, 10] {
            let mut scaled = corpus[0].clone();
            for count in scaled.term_freqs.values_mut() {
                *count *= k;
            }
            let sig = make_signature(SignatureInput::Doc(&scaled), 4, &provider).unwrap();
            assert_eq!(sig.term_list(), base.term_list(), "order changed at k={k}");
        }
    }
}
