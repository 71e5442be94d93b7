//! Document-frequency providers.
//!
//! IDF needs two quantities: the corpus size N and the number of documents
//! each term occurs in. At web scale both can only be estimated, classically
//! by search-engine hit counts. This module supplies them from
//! interchangeable sources: an exact local index, a generic remote hit-count
//! endpoint (one term per request, rate limited), a recorded TSV fixture,
//! and a persistent cache wrapper for any of the above.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::ExtractedDoc;
use crate::providers::ratelimit::{Clock, RateLimiter, SystemClock};
use crate::providers::transport::HttpTransport;

/// Default corpus-size estimate for web-scale providers. The real value is
/// a moving target; runs must record whatever they used.
pub const DEFAULT_WEB_N_DOCS: u64 = 25_000_000_000;

#[derive(Debug, Error)]
pub enum DfError {
    #[error("term list is empty")]
    EmptyTermList,
    #[error("terms must be non-empty strings")]
    EmptyTerm,
    #[error("transport failure from provider {provider_id} for terms {terms:?}: {message} (retryable)")]
    Transport {
        provider_id: String,
        terms: Vec<String>,
        message: String,
    },
    #[error("df response from {provider_id} for {term:?} is not a count: {body:?}")]
    BadCount {
        provider_id: String,
        term: String,
        body: String,
    },
    #[error("df cache {path} line {line}: {message}")]
    CacheCorrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("df cache {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("df fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

impl DfError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, DfError::Transport { .. })
    }
}

/// One term's document frequency under a named provider.
///
/// `df` is stored raw, including 0 for unknown terms; clamping to `[1, N]`
/// happens inside IDF computation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfRecord {
    pub term: String,
    pub df: u64,
    pub n_docs: u64,
    pub provider_id: String,
    pub fetched_at: DateTime<Utc>,
}

/// Declarative provider description, as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfProviderConfig {
    pub provider_id: String,
    pub kind: DfProviderKind,
    #[serde(default)]
    pub n_docs_override: Option<u64>,
    #[serde(default)]
    pub rate_limit: Option<f64>,
    /// Remote endpoint template with a `{term}` placeholder, or a
    /// `fixture:` path to a recorded `term \t count` TSV.
    #[serde(default)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfProviderKind {
    LocalIndex,
    RemoteHitcount,
    CacheWrapped,
}

pub trait DfProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn n_docs(&self) -> u64;
    /// One record per input term, in input order. Unknown terms get df 0.
    fn lookup(&self, terms: &[String]) -> Result<Vec<DfRecord>, DfError>;
}

/// Batch lookup against any provider.
pub fn lookup_df(terms: &[String], provider: &dyn DfProvider) -> Result<Vec<DfRecord>, DfError> {
    provider.lookup(terms)
}

fn validate_terms(terms: &[String]) -> Result<(), DfError> {
    if terms.is_empty() {
        return Err(DfError::EmptyTermList);
    }
    if terms.iter().any(|t| t.trim().is_empty()) {
        return Err(DfError::EmptyTerm);
    }
    Ok(())
}

/// Exact document frequencies over a frozen local corpus.
pub struct LocalIndexDf {
    id: String,
    counts: HashMap<String, u64>,
    n_docs: u64,
}

impl LocalIndexDf {
    pub fn from_docs(docs: &[ExtractedDoc], id: &str) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for doc in docs {
            for term in doc.term_freqs.keys() {
                *counts.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Self {
            id: id.to_string(),
            counts,
            n_docs: docs.len() as u64,
        }
    }

    pub fn from_counts(counts: HashMap<String, u64>, n_docs: u64, id: &str) -> Self {
        Self {
            id: id.to_string(),
            counts,
            n_docs: n_docs.max(1),
        }
    }
}

impl DfProvider for LocalIndexDf {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn n_docs(&self) -> u64 {
        self.n_docs
    }

    fn lookup(&self, terms: &[String]) -> Result<Vec<DfRecord>, DfError> {
        validate_terms(terms)?;
        let now = Utc::now();
        Ok(terms
            .iter()
            .map(|term| DfRecord {
                term: term.clone(),
                df: self.counts.get(term).copied().unwrap_or(0),
                n_docs: self.n_docs,
                provider_id: self.id.clone(),
                fetched_at: now,
            })
            .collect())
    }
}

/// Recorded hit counts read from a `term \t count` TSV file; the offline
/// stand-in for a remote hit-count backend.
pub struct FixtureDf {
    id: String,
    counts: HashMap<String, u64>,
    n_docs: u64,
}

impl FixtureDf {
    pub fn load(path: &Path, n_docs: u64, id: &str) -> Result<Self, DfError> {
        let text = fs::read_to_string(path).map_err(|e| DfError::Fixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut counts = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(term), Some(count)) = (parts.next(), parts.next()) else {
                return Err(DfError::Fixture {
                    path: path.display().to_string(),
                    message: format!("line {}: expected `term<TAB>count`", lineno + 1),
                });
            };
            let count: u64 = count.trim().parse().map_err(|_| DfError::Fixture {
                path: path.display().to_string(),
                message: format!("line {}: bad count {count:?}", lineno + 1),
            })?;
            counts.insert(term.to_string(), count);
        }
        Ok(Self {
            id: id.to_string(),
            counts,
            n_docs: n_docs.max(1),
        })
    }
}

impl DfProvider for FixtureDf {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn n_docs(&self) -> u64 {
        self.n_docs
    }

    fn lookup(&self, terms: &[String]) -> Result<Vec<DfRecord>, DfError> {
        validate_terms(terms)?;
        let now = Utc::now();
        Ok(terms
            .iter()
            .map(|term| DfRecord {
                term: term.clone(),
                df: self.counts.get(term).copied().unwrap_or(0),
                n_docs: self.n_docs,
                provider_id: self.id.clone(),
                fetched_at: now,
            })
            .collect())
    }
}

/// Generic remote hit-count provider: GET on an endpoint template with a
/// `{term}` placeholder; the response body is a decimal count. One term per
/// request, paced by the rate limiter. Failures are reported for the whole
/// batch and are retryable; a count is never fabricated.
pub struct RemoteHitCountDf {
    id: String,
    endpoint: String,
    n_docs: u64,
    transport: Arc<dyn HttpTransport>,
    limiter: RateLimiter,
}

impl RemoteHitCountDf {
    pub fn new(
        id: &str,
        endpoint: &str,
        n_docs: u64,
        rate_limit: Option<f64>,
        transport: Arc<dyn HttpTransport>,
        clock: Option<Arc<dyn Clock>>,
    ) -> Self {
        let clock = clock.unwrap_or_else(|| SystemClock::new() as Arc<dyn Clock>);
        Self {
            id: id.to_string(),
            endpoint: endpoint.to_string(),
            n_docs: n_docs.max(1),
            transport,
            limiter: RateLimiter::new(rate_limit.unwrap_or(0.0), clock),
        }
    }
}

fn percent_encode(term: &str) -> String {
    let mut out = String::with_capacity(term.len());
    for byte in term.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

impl DfProvider for RemoteHitCountDf {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn n_docs(&self) -> u64 {
        self.n_docs
    }

    fn lookup(&self, terms: &[String]) -> Result<Vec<DfRecord>, DfError> {
        validate_terms(terms)?;
        let mut out = Vec::with_capacity(terms.len());
        for term in terms {
            self.limiter.acquire();
            let url = self.endpoint.replace("{term}", &percent_encode(term));
            let resp = self.transport.get(&url, &[]).map_err(|e| DfError::Transport {
                provider_id: self.id.clone(),
                terms: terms.to_vec(),
                message: e.to_string(),
            })?;
            let df: u64 = resp.body.trim().parse().map_err(|_| DfError::BadCount {
                provider_id: self.id.clone(),
                term: term.clone(),
                body: resp.body.chars().take(80).collect(),
            })?;
            out.push(DfRecord {
                term: term.clone(),
                df,
                n_docs: self.n_docs,
                provider_id: self.id.clone(),
                fetched_at: Utc::now(),
            });
        }
        Ok(out)
    }
}

/// Persistent cache over any provider.
///
/// Entries are keyed `(provider_id, term)` and stored in an append-only TSV
/// (`provider_id \t term \t df \t n_docs \t fetched_at`); on load the last
/// record for a key wins. Hits newer than `max_age` are served without a
/// provider call; misses are fetched, appended in one write, and returned.
pub struct CachedDf {
    inner: Arc<dyn DfProvider>,
    path: PathBuf,
    max_age: chrono::Duration,
    // Single-writer contract: lookups may race, the map and file do not.
    state: Mutex<HashMap<String, DfRecord>>,
}

impl CachedDf {
    pub fn new(
        inner: Arc<dyn DfProvider>,
        path: &Path,
        max_age: chrono::Duration,
    ) -> Result<Self, DfError> {
        let state = if path.exists() {
            parse_cache_file(path)?
        } else {
            HashMap::new()
        };
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            max_age,
            state: Mutex::new(state),
        })
    }

    fn key(provider_id: &str, term: &str) -> String {
        format!("{provider_id}\u{1f}{term}")
    }
}

fn parse_cache_file(path: &Path) -> Result<HashMap<String, DfRecord>, DfError> {
    let text = fs::read_to_string(path).map_err(|source| DfError::CacheIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let corrupt = |message: String| DfError::CacheCorrupt {
            path: path.display().to_string(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(corrupt(format!("expected 5 fields, got {}", fields.len())));
        }
        let df: u64 = fields[2]
            .parse()
            .map_err(|_| corrupt(format!("bad df {:?}", fields[2])))?;
        let n_docs: u64 = fields[3]
            .parse()
            .map_err(|_| corrupt(format!("bad n_docs {:?}", fields[3])))?;
        let fetched_at = DateTime::parse_from_rfc3339(fields[4])
            .map_err(|e| corrupt(format!("bad timestamp {:?}: {e}", fields[4])))?
            .with_timezone(&Utc);
        let record = DfRecord {
            term: fields[1].to_string(),
            df,
            n_docs,
            provider_id: fields[0].to_string(),
            fetched_at,
        };
        map.insert(CachedDf::key(fields[0], fields[1]), record);
    }
    Ok(map)
}

fn cache_line(record: &DfRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\n",
        record.provider_id,
        record.term,
        record.df,
        record.n_docs,
        record.fetched_at.to_rfc3339_opts(SecondsFormat::Micros, true)
    )
}

impl DfProvider for CachedDf {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn n_docs(&self) -> u64 {
        self.inner.n_docs()
    }

    fn lookup(&self, terms: &[String]) -> Result<Vec<DfRecord>, DfError> {
        validate_terms(terms)?;
        let mut state = self.state.lock().unwrap();
        let now = Utc::now();
        let provider_id = self.inner.provider_id().to_string();

        let mut misses: Vec<String> = Vec::new();
        for term in terms {
            let fresh = state
                .get(&Self::key(&provider_id, term))
                .map(|rec| now.signed_duration_since(rec.fetched_at) <= self.max_age)
                .unwrap_or(false);
            if !fresh && !misses.contains(term) {
                misses.push(term.clone());
            }
        }

        if !misses.is_empty() {
            let fetched = self.inner.lookup(&misses)?;
            let mut buf = String::new();
            for record in &fetched {
                buf.push_str(&cache_line(record));
                state.insert(Self::key(&record.provider_id, &record.term), record.clone());
            }
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|source| DfError::CacheIo {
                    path: self.path.display().to_string(),
                    source,
                })?;
            file.write_all(buf.as_bytes()).map_err(|source| DfError::CacheIo {
                path: self.path.display().to_string(),
                source,
            })?;
        }

        Ok(terms
            .iter()
            .map(|term| state[&Self::key(&provider_id, term)].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{extract_text, RawPage};
    use crate::stopwords::StopwordSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn doc(uri: &str, body: &str) -> ExtractedDoc {
        let page = RawPage::new(uri, body.as_bytes().to_vec()).unwrap();
        extract_text(&page, &StopwordSet::bundled())
    }

    fn three_doc_corpus() -> Vec<ExtractedDoc> {
        vec![
            doc("http://a.org", "penitentiary walls gallery photo"),
            doc("http://b.org", "gallery photo garden"),
            doc("http://c.org", "photo sailing harbor"),
        ]
    }

    #[test]
    fn local_index_exact_counts() {
        let provider = LocalIndexDf::from_docs(&three_doc_corpus(), "local");
        let records = provider
            .lookup(&["penitentiary".to_string(), "photo".to_string(), "absent".to_string()])
            .unwrap();
        assert_eq!(records[0].df, 1);
        assert_eq!(records[0].n_docs, 3);
        assert_eq!(records[1].df, 3);
        assert_eq!(records[2].df, 0);
    }

    #[test]
    fn batch_preserves_input_order() {
        let provider = LocalIndexDf::from_docs(&three_doc_corpus(), "local");
        let terms: Vec<String> = ["sailing", "photo", "garden", "walls", "gallery", "harbor", "zz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let records = provider.lookup(&terms).unwrap();
        assert_eq!(records.len(), 7);
        // Oracle: brute-force scan of the same corpus.
        let corpus = three_doc_corpus();
        for (term, record) in terms.iter().zip(&records) {
            let expected = corpus.iter().filter(|d| d.term_freqs.contains_key(term)).count() as u64;
            assert_eq!(record.term, *term);
            assert_eq!(record.df, expected, "df mismatch for {term}");
        }
    }

    #[test]
    fn df_monotone_under_indexing() {
        let mut corpus = three_doc_corpus();
        let before = LocalIndexDf::from_docs(&corpus, "local")
            .lookup(&["photo".to_string()])
            .unwrap()[0]
            .df;
        corpus.push(doc("http://d.org", "photo studio"));
        let after = LocalIndexDf::from_docs(&corpus, "local")
            .lookup(&["photo".to_string()])
            .unwrap()[0]
            .df;
        assert!(after >= before);
    }

    #[test]
    fn empty_inputs_rejected() {
        let provider = LocalIndexDf::from_docs(&three_doc_corpus(), "local");
        assert!(matches!(provider.lookup(&[]), Err(DfError::EmptyTermList)));
        assert!(matches!(
            provider.lookup(&["".to_string()]),
            Err(DfError::EmptyTerm)
        ));
    }

    #[test]
    fn remote_provider_reads_hit_counts() {
        let transport = crate::providers::transport::StaticTransport::new();
        transport.insert("http://api/count?q=apple", 200, " 1234 \n");
        let provider = RemoteHitCountDf::new(
            "remote",
            "http://api/count?q={term}",
            1000,
            None,
            transport.clone(),
            None,
        );
        let records = provider.lookup(&["apple".to_string()]).unwrap();
        assert_eq!(records[0].df, 1234);
        assert_eq!(records[0].n_docs, 1000);
    }

    #[test]
    fn remote_failure_is_retryable_and_names_the_batch() {
        let transport = crate::providers::transport::StaticTransport::new();
        let provider = RemoteHitCountDf::new(
            "remote",
            "http://api/count?q={term}",
            1000,
            None,
            transport,
            None,
        );
        let err = provider
            .lookup(&["apple".to_string(), "pie".to_string()])
            .unwrap_err();
        assert!(err.is_retryable());
        let msg = err.to_string();
        assert!(msg.contains("apple") && msg.contains("pie"), "{msg}");
    }

    #[test]
    fn percent_encoding_non_ascii() {
        assert_eq!(percent_encode("caf\u{e9}"), "caf%C3%A9");
        assert_eq!(percent_encode("a b"), "a%20b");
        assert_eq!(percent_encode("plain-term_1.x~"), "plain-term_1.x~");
    }

    struct CountingProvider {
        inner: LocalIndexDf,
        calls: AtomicUsize,
    }

    impl DfProvider for CountingProvider {
        fn provider_id(&self) -> &str {
            self.inner.provider_id()
        }
        fn n_docs(&self) -> u64 {
            self.inner.n_docs()
        }
        fn lookup(&self, terms: &[String]) -> Result<Vec<DfRecord>, DfError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.lookup(terms)
        }
    }

    #[test]
    fn cache_hit_skips_provider() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("df.tsv");
        let counting = Arc::new(CountingProvider {
            inner: LocalIndexDf::from_docs(&three_doc_corpus(), "local"),
            calls: AtomicUsize::new(0),
        });
        let cache = CachedDf::new(counting.clone(), &path, chrono::Duration::hours(1)).unwrap();
        let terms = vec!["photo".to_string(), "garden".to_string()];
        let first = cache.lookup(&terms).unwrap();
        let second = cache.lookup(&terms).unwrap();
        assert_eq!(counting.calls.load(Ordering::SeqCst), 1);
        for (a, b) in first.iter().zip(&second) {
            assert_eq!((&a.term, a.df, a.n_docs), (&b.term, b.df, b.n_docs));
        }
    }

    #[test]
    fn cache_transparency() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("df.tsv");
        let plain = LocalIndexDf::from_docs(&three_doc_corpus(), "local");
        let cached = CachedDf::new(
            Arc::new(LocalIndexDf::from_docs(&three_doc_corpus(), "local")),
            &path,
            chrono::Duration::hours(1),
        )
        .unwrap();
        let terms = vec!["photo".to_string(), "absent".to_string(), "walls".to_string()];
        let direct = plain.lookup(&terms).unwrap();
        let via_cache = cached.lookup(&terms).unwrap();
        for (a, b) in direct.iter().zip(&via_cache) {
            assert_eq!((&a.term, a.df, a.n_docs, &a.provider_id), (&b.term, b.df, b.n_docs, &b.provider_id));
        }
    }

    #[test]
    fn expired_records_are_refetched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("df.tsv");
        let counting = Arc::new(CountingProvider {
            inner: LocalIndexDf::from_docs(&three_doc_corpus(), "local"),
            calls: AtomicUsize::new(0),
        });
        let cache = CachedDf::new(counting.clone(), &path, chrono::Duration::zero()).unwrap();
        let terms = vec!["photo".to_string()];
        cache.lookup(&terms).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(5));
        cache.lookup(&terms).unwrap();
        assert_eq!(counting.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn cache_keys_include_provider_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("df.tsv");
        let corpus = three_doc_corpus();
        {
            let cache = CachedDf::new(
                Arc::new(LocalIndexDf::from_docs(&corpus, "alpha")),
                &path,
                chrono::Duration::hours(1),
            )
            .unwrap();
            cache.lookup(&["photo".to_string()]).unwrap();
        }
        {
            let cache = CachedDf::new(
                Arc::new(LocalIndexDf::from_docs(&corpus, "beta")),
                &path,
                chrono::Duration::hours(1),
            )
            .unwrap();
            cache.lookup(&["photo".to_string()]).unwrap();
        }
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2, "two providers, two distinct entries:\n{text}");
        assert!(lines[0].starts_with("alpha\t"));
        assert!(lines[1].starts_with("beta\t"));
    }

    #[test]
    fn corrupt_cache_is_a_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("df.tsv");
        fs::write(&path, "only\ttwo\n").unwrap();
        let err = CachedDf::new(
            Arc::new(LocalIndexDf::from_docs(&three_doc_corpus(), "local")),
            &path,
            chrono::Duration::hours(1),
        )
        .unwrap_err();
        assert!(matches!(err, DfError::CacheCorrupt { line: 1, .. }));
    }

    #[test]
    fn cache_file_round_trips_and_last_record_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("df.tsv");
        let old = DfRecord {
            term: "photo".into(),
            df: 1,
            n_docs: 3,
            provider_id: "local".into(),
            fetched_at: Utc::now() - chrono::Duration::minutes(5),
        };
        let new = DfRecord {
            term: "photo".into(),
            df: 2,
            n_docs: 3,
            provider_id: "local".into(),
            fetched_at: Utc::now(),
        };
        fs::write(&path, format!("{}{}", cache_line(&old), cache_line(&new))).unwrap();
        let cache = CachedDf::new(
            Arc::new(LocalIndexDf::from_docs(&three_doc_corpus(), "local")),
            &path,
            chrono::Duration::hours(1),
        )
        .unwrap();
        let records = cache.lookup(&["photo".to_string()]).unwrap();
        assert_eq!(records[0].df, 2);
    }
}
